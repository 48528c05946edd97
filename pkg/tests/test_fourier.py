import numpy as np
import pytest

from pathmeter.fourier import centered_dft, centered_idft


def _kernel_matrix(L):
    idx = np.arange(L) - L / 2
    return np.exp(2j * np.pi * np.outer(idx, idx) / L)


@pytest.mark.parametrize("L", [2, 4, 8, 32, 128])
def test_against_explicit_matrix(L):
    rng = np.random.default_rng(L)
    x = rng.normal(size=L) + 1j * rng.normal(size=L)
    K = _kernel_matrix(L)
    assert np.abs(centered_idft(x) - K.T @ x).max() < 1e-11
    assert np.abs(centered_dft(x) - K.conj().T @ x).max() < 1e-11


def test_round_trip_scales_by_L():
    rng = np.random.default_rng(0)
    x = rng.normal(size=64) + 1j * rng.normal(size=64)
    assert np.abs(centered_dft(centered_idft(x)) / 64 - x).max() < 1e-13


def test_multi_axis():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 16, 3)) + 1j * rng.normal(size=(8, 16, 3))
    K = _kernel_matrix(16)
    ref = np.einsum("mn,amd->and", K, x)
    assert np.abs(centered_idft(x, axis=1) - ref).max() < 1e-12


def test_parseval():
    rng = np.random.default_rng(2)
    x = rng.normal(size=128) + 1j * rng.normal(size=128)
    X = centered_idft(x)
    assert np.sum(np.abs(X) ** 2) / 128 == pytest.approx(np.sum(np.abs(x) ** 2))
