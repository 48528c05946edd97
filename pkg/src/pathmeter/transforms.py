"""Transformations between readout histories of two observables.

Two finite-time measurements of observables A and B (one meter each, a
shared conjugate grid) are connected by the operator-valued convolution
kernel

    U(df) = (dlam / 2 pi) sum_lam e^{+i lam df} U_B(lam) U_A(lam)^dag,

where U_Z(lam) is the sliced evolution coupled to Z. Applying the kernel
to the A-field by discrete convolution produces the B-field; on the
periodic grid the construction is exactly unitary, so the round trip
A -> B -> A is lossless up to rounding.

The instantaneous (impulse) limit collapses the kernel to the familiar
basis-change comb, and projecting everything onto a single readout gives
the plain amplitude transformation <b|psi> = sum_a <b|a><a|psi>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, GridMismatch
from .hilbert import SpectralDecomposition, as_state
from .meters import AmplitudeField, LambdaGrid, _as_decomp, _check_grids, _slice_transfer
from .pathsum import PATH_CAP, _check_cap, _enumerate_blocks, _grouped_sum
from .timegrid import SwitchingFunction, TimeGrid, slice_weights

KERNEL_TOL = 1e-6


@dataclass(frozen=True)
class OperatorKernel:
    """Operator samples on the readout difference lattice.

    ops[d] is U(d * df); the sampled function is periodic with period
    L * df, so one period determines every difference.
    """

    grid: LambdaGrid
    ops: np.ndarray

    def __post_init__(self):
        L = self.grid.n_points
        if self.ops.shape[0] != L or self.ops.shape[1] != self.ops.shape[2]:
            raise GridMismatch(f"kernel table shape {self.ops.shape} vs L={L}")

    @property
    def dim(self) -> int:
        return self.ops.shape[1]

    def at_difference(self, d: int) -> np.ndarray:
        return self.ops[d % self.grid.n_points]

    def unitarity_residual(self) -> float:
        """Max deviation of sum_f'' U(f''-f)^dag U(f''-f') df from the
        discrete identity delta_{ff'} / df."""
        L = self.grid.n_points
        df = self.grid.df
        eye = np.eye(self.dim) / df
        res = 0.0
        for d in range(L):
            rolled = np.roll(self.ops, -d, axis=0)
            acc = np.einsum("kba,kbc->ac", self.ops.conj(), rolled) * df
            target = eye if d == 0 else 0.0
            res = max(res, float(np.abs(acc - target).max()))
        return res


def finite_time_kernel(H, A, B, grid: TimeGrid, betaA: SwitchingFunction,
                       betaB: SwitchingFunction, lgrid: LambdaGrid) -> OperatorKernel:
    """Kernel mapping the A-readout field to the B-readout field."""
    decA = _as_decomp(A)
    decB = _as_decomp(B)
    if decA.dim != decB.dim:
        raise DimensionMismatch(f"A dim {decA.dim} vs B dim {decB.dim}")
    wA = slice_weights(betaA, grid)[None, :]
    wB = slice_weights(betaB, grid)[None, :]
    _check_grids(wA, decA.eigenvalues, (lgrid,))
    _check_grids(wB, decB.eigenvalues, (lgrid,))

    uA = _coupled_propagators(H, decA, grid, wA[0], lgrid)
    uB = _coupled_propagators(H, decB, grid, wB[0], lgrid)
    sym = np.einsum("mab,mcb->mac", uB, uA.conj())  # U_B U_A^dag per lambda

    # table over one period of the difference lattice:
    # ops[d] = (dlam/2pi) sum_m sym_m e^{2i pi (m - L/2) d / L}
    L = lgrid.n_points
    phase = (-1.0) ** np.arange(L)  # e^{-i pi d}
    table = np.fft.ifft(sym, axis=0) * L
    table = table * phase[:, None, None] * (lgrid.dlam / (2 * np.pi))
    return OperatorKernel(lgrid, table)


def _coupled_propagators(H, decomp: SpectralDecomposition, grid: TimeGrid,
                         weights: np.ndarray, lgrid: LambdaGrid) -> np.ndarray:
    """Full sliced propagators with coupling lam * Z, one per grid point,
    shape (L, dim, dim), in the computational basis."""
    u = _slice_transfer(H, decomp, grid)
    d = decomp.dim
    lam = lgrid.lam
    out = np.broadcast_to(np.eye(d, dtype=complex), (lam.size, d, d)).copy()
    for j in range(grid.steps):
        out = np.einsum("ab,mbc->mac", u, out)
        phases = np.exp(-1j * np.outer(lam * weights[j], decomp.eigenvalues))
        out *= phases[:, :, None]
    V = decomp.eigenvectors
    return np.einsum("ab,mbc,dc->mad", V, out, V.conj())


def apply_kernel(kernel: OperatorKernel, field: AmplitudeField) -> AmplitudeField:
    """Discrete convolution field_B(f) = sum_f' U(f - f') field_A(f') df'."""
    if field.n_meters != 1:
        raise GridMismatch("operator kernels act on single-meter fields")
    g = field.grids[0]
    if g.n_points != kernel.grid.n_points or not np.isclose(
        g.dlam, kernel.grid.dlam, rtol=1e-12
    ):
        raise GridMismatch("kernel and field live on different grids")
    L = g.n_points
    diff = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    out = np.einsum("nmab,mb->na", kernel.ops[diff], field.states) * g.df
    return AmplitudeField(field.grids, out, field.kind)


def von_neumann_basis_change(psi, decompA: SpectralDecomposition,
                             decompB: SpectralDecomposition) -> np.ndarray:
    """Amplitudes <b|psi> via the A-resolution sum_a <b|a><a|psi>.

    Also verifies the sum against direct projection onto the B-basis;
    the two must agree to near-rounding by construction.
    """
    if decompA.dim != decompB.dim:
        raise DimensionMismatch(f"A dim {decompA.dim} vs B dim {decompB.dim}")
    psi = as_state(psi, decompA.dim)
    overlap = decompB.eigenvectors.conj().T @ decompA.eigenvectors  # <b|a>
    via_a = overlap @ (decompA.eigenvectors.conj().T @ psi)
    direct = decompB.eigenvectors.conj().T @ psi
    dev = float(np.abs(via_a - direct).max())
    if dev > 1e-12 * max(1.0, float(np.linalg.norm(psi))):
        raise ArithmeticError(f"basis-change identity violated by {dev:.3e}")
    return via_a


def completeness_identity_check(H, decompA: SpectralDecomposition,
                                grid: TimeGrid, cap: int = PATH_CAP) -> float:
    """|sum over eigenpaths of U[a]^dag U[a] - 1|_max by brute enumeration.

    Every path operator factorises as c[a] |a_kN><row(k1)|, so the sum
    collapses to U_eps^dag diag(s) U_eps with s_k the total squared path
    weight starting from k; the identity holds because the jump-weight
    matrix is doubly stochastic. The check still enumerates every path.
    """
    d, N = decompA.dim, grid.steps
    _check_cap(d, N, cap)
    u = _slice_transfer(H, decompA, grid)
    start_weight = np.zeros(d)
    for K in _enumerate_blocks(d, N):
        # per-path |c|^2 with the first-slice factor deferred to the end
        c = np.ones(K.shape[0], dtype=complex)
        for j in range(1, N):
            c *= u[K[:, j], K[:, j - 1]]
        start_weight += _grouped_sum(K[:, 0], np.abs(c) ** 2 + 0j, d).real
    total = u.conj().T @ np.diag(start_weight) @ u
    return float(np.abs(total - np.eye(d)).max())
