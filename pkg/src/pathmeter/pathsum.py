"""Exhaustive eigenpath enumeration, path amplitudes and restricted sums.

An eigenpath assigns one eigenvalue index of the measured observable to
every time slice. Its amplitude operator is the left-ordered product

    P_{k_N} U_eps ... P_{k_1} U_eps,    U_eps = exp(-i H eps),

(slice 1 acts first). Because each projector is rank one, a path's
substate is always amp * |a_{k_N}>, with amp a telescoping product of
one-slice transition elements in the observable's eigenbasis; the block
engine below exploits this so millions of paths stay cheap.

Sums over all paths reproduce the sliced propagator exactly (resolution
of the identity); restricted sums grouped by meter functionals give the
measurement amplitudes per readout value; grouping by the number of
jumps recovers the nested time-ordered perturbation series in the
off-diagonal coupling.

Enumeration order is lexicographic and every reduction runs in a fixed
order (compensated across blocks), so results are reproducible bit for
bit for a given configuration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import (
    AllZeroSubstates,
    CapExceeded,
    DegenerateSpectrum,
    DimensionMismatch,
    QuadratureBudgetExceeded,
)
from .hilbert import (
    SpectralDecomposition,
    as_state,
    exact_propagator,
    require_hermitian,
)
from .timegrid import PathFunctionalSpec, TimeGrid

PATH_CAP = 2**22
_BLOCK = 1 << 16
_CHUNK = 1 << 14
MAX_SIMPLEX_POINTS = 2**22


@dataclass(frozen=True)
class EigenPath:
    """One history: eigenvalue index per time slice."""

    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(k) for k in self.indices))

    @property
    def jump_count(self) -> int:
        return sum(a != b for a, b in zip(self.indices, self.indices[1:]))


@dataclass(frozen=True)
class PathAmplitude:
    path: EigenPath
    state: np.ndarray
    jump_count: int


@dataclass(frozen=True)
class BinnedAmplitudes:
    """Path amplitudes grouped by quantised meter-functional values.

    `f_values` has one row per bin (columns = meters), lexicographically
    ordered; `states` holds the coherent sum of the member substates.
    """

    f_values: np.ndarray
    states: np.ndarray
    bin_tol: float

    @property
    def n_bins(self) -> int:
        return self.f_values.shape[0]

    def total(self) -> np.ndarray:
        return self.states.sum(axis=0)

    def state_at(self, f, tol: float | None = None) -> np.ndarray:
        """State of the bin whose key matches `f` within tol."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        tol = self.bin_tol if tol is None else tol
        hit = np.all(np.abs(self.f_values - f[None, :]) <= tol, axis=1)
        where = np.flatnonzero(hit)
        if where.size != 1:
            raise KeyError(f"no unique bin at f={f} (matches: {where.size})")
        return self.states[where[0]]


def _require_labeling(decomp: SpectralDecomposition):
    if decomp.degenerate:
        raise DegenerateSpectrum(
            "observable spectrum is degenerate; relabel through a function "
            "of the observable instead of raw eigenpath labels"
        )


def _check_cap(dim: int, N: int, cap: int) -> int:
    total = dim**N
    if total > cap:
        raise CapExceeded(total, cap)
    return total


def _enumerate_blocks(dim: int, N: int, block: int = _BLOCK):
    """Lexicographically ordered index arrays, shape (<=block, N)."""
    total = dim**N
    radix = dim ** np.arange(N - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, block):
        p = np.arange(start, min(start + block, total), dtype=np.int64)
        yield (p[:, None] // radix[None, :]) % dim


def _slice_transfer(H, decomp: SpectralDecomposition, grid: TimeGrid):
    """One-slice propagator in the labeling eigenbasis, plus psi0 hook."""
    H = require_hermitian(H, "Hamiltonian")
    if H.shape[0] != decomp.dim:
        raise DimensionMismatch(
            f"Hamiltonian dim {H.shape[0]} vs observable dim {decomp.dim}"
        )
    u_full = exact_propagator(H, grid.eps)
    return decomp.eigenvectors.conj().T @ u_full @ decomp.eigenvectors


def _block_amplitudes(K: np.ndarray, u: np.ndarray, v0: np.ndarray) -> np.ndarray:
    amp = v0[K[:, 0]].copy()
    for j in range(1, K.shape[1]):
        amp *= u[K[:, j], K[:, j - 1]]
    return amp


class _Kahan:
    """Compensated accumulator for complex arrays."""

    def __init__(self, shape):
        self.value = np.zeros(shape, dtype=complex)
        self._c = np.zeros(shape, dtype=complex)

    def add(self, x):
        y = x - self._c
        t = self.value + y
        self._c = (t - self.value) - y
        self.value = t


def _grouped_sum(ids: np.ndarray, amp: np.ndarray, n_ids: int) -> np.ndarray:
    """sum of amp per id, compensated across fixed-size chunks."""
    if ids.size <= _CHUNK:
        re = np.bincount(ids, weights=amp.real, minlength=n_ids)
        im = np.bincount(ids, weights=amp.imag, minlength=n_ids)
        return re + 1j * im
    acc = _Kahan(n_ids)
    for s in range(0, ids.size, _CHUNK):
        sl = slice(s, s + _CHUNK)
        re = np.bincount(ids[sl], weights=amp.real[sl], minlength=n_ids)
        im = np.bincount(ids[sl], weights=amp.imag[sl], minlength=n_ids)
        acc.add(re + 1j * im)
    return acc.value


def enumerate_eigenpaths(dim: int, grid: TimeGrid, cap: int = PATH_CAP):
    """Yield all dim**N eigenpaths in lexicographic order."""
    if dim < 2:
        raise ValueError(f"need dim >= 2 to label paths, got {dim}")
    _check_cap(dim, grid.steps, cap)
    for indices in itertools.product(range(dim), repeat=grid.steps):
        yield EigenPath(indices)


def path_amplitude(H, decomp: SpectralDecomposition, grid: TimeGrid, path,
                   psi0) -> PathAmplitude:
    """Substate of a single eigenpath, by the literal projector product."""
    _require_labeling(decomp)
    H = require_hermitian(H, "Hamiltonian")
    if H.shape[0] != decomp.dim:
        raise DimensionMismatch(
            f"Hamiltonian dim {H.shape[0]} vs observable dim {decomp.dim}"
        )
    path = path if isinstance(path, EigenPath) else EigenPath(path)
    if len(path.indices) != grid.steps:
        raise DimensionMismatch(
            f"path length {len(path.indices)} vs {grid.steps} slices"
        )
    if any(not 0 <= k < decomp.dim for k in path.indices):
        raise DimensionMismatch(
            f"path indices must lie in [0, {decomp.dim})"
        )
    u_eps = exact_propagator(H, grid.eps)
    psi = as_state(psi0, decomp.dim)
    for k in path.indices:
        psi = u_eps @ psi
        v = decomp.eigenvectors[:, k]
        psi = v * (v.conj() @ psi)
    return PathAmplitude(path, psi, path.jump_count)


def path_sum_total(H, decomp: SpectralDecomposition, grid: TimeGrid, psi0,
                   cap: int = PATH_CAP) -> np.ndarray:
    """Coherent sum over every eigenpath; equals exp(-iHT) psi0."""
    _require_labeling(decomp)
    _check_cap(decomp.dim, grid.steps, cap)
    u = _slice_transfer(H, decomp, grid)
    v0 = u @ decomp.to_eigenbasis(psi0)
    acc = _Kahan(decomp.dim)
    for K in _enumerate_blocks(decomp.dim, grid.steps):
        amp = _block_amplitudes(K, u, v0)
        acc.add(_grouped_sum(K[:, -1], amp, decomp.dim))
    return decomp.from_eigenbasis(acc.value)


def _cluster_columns(F: np.ndarray, tol: float):
    """Quantise each column into gap-separated clusters.

    Assumes genuinely distinct functional values are separated by much
    more than tol (they live on the attainable-value lattice), so a gap
    split on the sorted column is unambiguous. Returns integer ids per
    row and the per-column cluster representatives (means).
    """
    P, M = F.shape
    ids = np.empty((P, M), dtype=np.int64)
    reps = []
    for i in range(M):
        order = np.argsort(F[:, i], kind="stable")
        col = F[order, i]
        starts = np.empty(P, dtype=bool)
        starts[0] = True
        np.greater(np.diff(col), tol, out=starts[1:])
        cid = np.cumsum(starts) - 1
        back = np.empty(P, dtype=np.int64)
        back[order] = cid
        ids[:, i] = back
        counts = np.bincount(cid)
        reps.append(np.bincount(cid, weights=col) / counts)
    return ids, reps


def _binned_engine(u, psi0_lab, N, weights, value_table, cap, bin_tol,
                   basis=None) -> BinnedAmplitudes:
    """Restricted-sum engine in the labeling basis.

    `u` is the one-slice propagator in the basis whose unit vectors label
    the paths, `psi0_lab` the initial state in that basis, `value_table`
    the measured value per label. `basis` (columns) rotates the binned
    states back to the computational basis when given.
    """
    dim = u.shape[0]
    _check_cap(dim, N, cap)
    v0 = u @ psi0_lab
    value_table = np.asarray(value_table, dtype=float)
    weights = np.atleast_2d(weights)

    f_rows, amps, ends = [], [], []
    for K in _enumerate_blocks(dim, N):
        amps.append(_block_amplitudes(K, u, v0))
        f_rows.append(value_table[K] @ weights.T)
        ends.append(K[:, -1])
    F = np.concatenate(f_rows)
    amp = np.concatenate(amps)
    kN = np.concatenate(ends)

    ids, reps = _cluster_columns(F, bin_tol)
    uniq, inverse = np.unique(ids, axis=0, return_inverse=True)
    n_bins = uniq.shape[0]
    flat = _grouped_sum(inverse * dim + kN, amp, n_bins * dim)
    states = flat.reshape(n_bins, dim)
    f_values = np.stack(
        [reps[i][uniq[:, i]] for i in range(uniq.shape[1])], axis=1
    )
    # drop keys whose substate vanished identically (e.g. jump paths cut
    # by a diagonal propagator); exact zeros only, so pruning is stable
    keep = np.linalg.norm(states, axis=1) > 0.0
    f_values, states = f_values[keep], states[keep]
    if basis is not None:
        states = states @ basis.T
    return BinnedAmplitudes(f_values, states, bin_tol)


def binned_measurement_amplitude(H, decomp: SpectralDecomposition,
                                 grid: TimeGrid, psi0,
                                 spec: PathFunctionalSpec,
                                 cap: int = PATH_CAP,
                                 bin_tol: float | None = None) -> BinnedAmplitudes:
    """Group path substates by their meter-functional values.

    Bin keys are the quantised values F_i = sum_j w_ij a(t_j); the bins
    partition the path set, so summing all bin states reproduces
    path_sum_total up to summation-order rounding.
    """
    _require_labeling(decomp)
    if spec.grid != grid:
        raise DimensionMismatch("functional spec built on a different time grid")
    tol = spec.bin_tol() if bin_tol is None else bin_tol
    u = _slice_transfer(H, decomp, grid)
    return _binned_engine(
        u, decomp.to_eigenbasis(psi0), grid.steps, spec.weight_matrix(),
        decomp.eigenvalues, cap, tol, basis=decomp.eigenvectors,
    )


def relabel_by_function(H, decomp: SpectralDecomposition, grid: TimeGrid,
                        psi0, spec: PathFunctionalSpec, eigenvalue_map,
                        cap: int = PATH_CAP,
                        bin_tol: float | None = None) -> BinnedAmplitudes:
    """Restricted sum for a function of the observable.

    `eigenvalue_map` maps each eigenvalue a_k to the measured value
    F(a_k); paths are re-grouped by sum_j w_j F(a(t_j)). Degenerate maps
    merge histories (their substates add coherently); a constant map
    collapses everything into a single bin holding the full evolved
    state. Re-grouping needs path-level data, so this enumerates paths
    rather than regrouping existing bins.
    """
    _require_labeling(decomp)
    if spec.grid != grid:
        raise DimensionMismatch("functional spec built on a different time grid")
    mapped = np.asarray([eigenvalue_map(a) for a in decomp.eigenvalues], dtype=float)
    if bin_tol is None:
        scale = max(1.0, float(np.abs(mapped).max()))
        bin_tol = spec.bin_tol() * scale
    u = _slice_transfer(H, decomp, grid)
    return _binned_engine(
        u, decomp.to_eigenbasis(psi0), grid.steps, spec.weight_matrix(),
        mapped, cap, bin_tol, basis=decomp.eigenvectors,
    )


def group_paths_by_jumps(H, decomp: SpectralDecomposition, grid: TimeGrid,
                         psi0, cap: int = PATH_CAP) -> dict:
    """Partial path sums keyed by the number of jumps along the path."""
    _require_labeling(decomp)
    _check_cap(decomp.dim, grid.steps, cap)
    u = _slice_transfer(H, decomp, grid)
    v0 = u @ decomp.to_eigenbasis(psi0)
    N, d = grid.steps, decomp.dim
    acc = _Kahan((N, d))
    for K in _enumerate_blocks(d, N):
        amp = _block_amplitudes(K, u, v0)
        jumps = (K[:, 1:] != K[:, :-1]).sum(axis=1)
        flat = _grouped_sum(jumps * d + K[:, -1], amp, N * d)
        acc.add(flat.reshape(N, d))
    states = acc.value @ decomp.eigenvectors.T
    return {n: states[n] for n in range(N)}


def _default_nq(n: int) -> int:
    if n <= 3:
        return 64
    if n <= 6:
        return 16
    raise QuadratureBudgetExceeded(
        f"no default quadrature size for order {n}; pass n_q explicitly"
    )


def _multiset_weight(tuples: np.ndarray) -> np.ndarray:
    # ordered tuples with repeated entries sit on simplex faces shared by
    # several cube cells; dividing by the run-length factorials restores
    # the simplex measure (half weight on pairwise diagonals, etc.)
    K, n = tuples.shape
    corr = np.ones(K)
    run = np.ones(K)
    for j in range(1, n):
        same = tuples[:, j] == tuples[:, j - 1]
        run = np.where(same, run + 1.0, 1.0)
        corr /= np.where(same, run, 1.0)
    return corr


def jump_series_term(H0, V, T: float, n: int, n_q: int | None = None,
                     literal_full_h: bool = False) -> np.ndarray:
    """n-th nested time-ordered integral of the jump expansion.

    Term n is (-i)^n integral over 0 <= t_1 <= ... <= t_n <= T of
    exp(-i H0 (T-t_n)) V ... V exp(-i H0 t_1). The free evolution between
    jumps uses the diagonal part H0 (set literal_full_h=True to put the
    full H0+V in the exponents instead). Evaluated by a trapezoid product
    grid restricted to the ordered simplex; n_q points per axis.
    """
    H0 = require_hermitian(H0, "H0")
    V = np.asarray(V, dtype=complex)
    if V.shape != H0.shape:
        raise DimensionMismatch(f"V shape {V.shape} vs H0 shape {H0.shape}")
    if n < 0:
        raise ValueError("order must be >= 0")
    H_exp = H0 + V if literal_full_h else H0
    if n == 0:
        return exact_propagator(H_exp, T)
    if n_q is None:
        n_q = _default_nq(n)
    if n_q < 2:
        raise ValueError("need at least 2 quadrature points per axis")
    n_points = comb(n_q + n - 1, n)
    if n_points > MAX_SIMPLEX_POINTS:
        raise QuadratureBudgetExceeded(
            f"{n_points} simplex points at order {n}, n_q={n_q} "
            f"(budget {MAX_SIMPLEX_POINTS})"
        )

    h = T / (n_q - 1)
    w = np.full(n_q, h)
    w[0] = w[-1] = h / 2
    vals, vecs = np.linalg.eigh(H_exp)
    phases = np.exp(-1j * np.outer(np.arange(n_q) * h, vals))  # (n_q, d)
    props = np.einsum("ak,tk,bk->tab", vecs, phases, vecs.conj())

    tuples = np.fromiter(
        itertools.chain.from_iterable(
            itertools.combinations_with_replacement(range(n_q), n)
        ),
        dtype=np.int64,
        count=n_points * n,
    ).reshape(n_points, n)
    wt = w[tuples].prod(axis=1) * _multiset_weight(tuples)

    cur = props[tuples[:, 0]]
    for j in range(1, n):
        cur = np.einsum("tab,bc,tcd->tad", props[tuples[:, j] - tuples[:, j - 1]], V, cur)
    cur = np.einsum("tab,bc,tcd->tad", props[(n_q - 1) - tuples[:, -1]], V, cur)
    return (-1j) ** n * np.einsum("t,tab->ab", wt, cur)


def two_slit_weights(substates) -> np.ndarray:
    """Exclusive-route probabilities from substate norms.

    W_n = <phi_n|phi_n> / sum_m <phi_m|phi_m>; the splitter/recombiner
    picture where decohered routes are weighted by their squared norms.
    """
    states = [as_state(s) for s in substates]
    if not states:
        raise AllZeroSubstates("no substates given")
    norms = np.array([float(np.vdot(s, s).real) for s in states])
    total = norms.sum()
    if total <= 0.0:
        raise AllZeroSubstates("all substates have zero norm")
    return norms / total
