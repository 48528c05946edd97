"""pathmeter: eigenpath summation for quantum measurement amplitudes.

Decomposes the evolution of small quantum systems (and 1-d lattice
particles) into eigenvalue histories of a measured observable and builds
measurement amplitudes for instantaneous, finite-time and continuous
meters by three mutually cross-validating routes: exhaustive path
enumeration, the pointer-variable Fourier route, and record-conditioned
non-Hermitian evolution.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    errors,
    fourier,
    hilbert,
    mensky,
    meters,
    particle1d,
    pathsum,
    timegrid,
    transforms,
)
