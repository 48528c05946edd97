import numpy as np
import pytest

from pathmeter import hilbert, meters, pathsum, timegrid
from pathmeter.errors import (
    FineFieldNotNormalizable,
    GridMismatch,
    GridTooSmall,
    NonPositiveAlpha,
    NyquistViolation,
)
from pathmeter.meters import CoarseGrainKernel, LambdaGrid
from pathmeter.timegrid import PathFunctionalSpec, SwitchingFunction, TimeGrid

from test_pathsum import brute_force_substate


def oracle_lambda_state(H, decomp, grid, spec, lam, psi0):
    """Exhaustive oracle: sum_paths e^{-i lam . F[a]} (path substate)."""
    out = np.zeros(decomp.dim, dtype=complex)
    for path in pathsum.enumerate_eigenpaths(decomp.dim, grid):
        f = timegrid.functional_value(spec, path, decomp)
        phase = np.exp(-1j * np.dot(np.atleast_1d(lam), f))
        out = out + phase * brute_force_substate(H, decomp, grid, path.indices, psi0)
    return out


class TestLambdaGrid:
    def test_conjugate_spacing(self):
        g = LambdaGrid(8, 0.5)
        assert g.df == pytest.approx(2 * np.pi / 4.0)
        assert g.lam[0] == -2.0 and g.lam[-1] == 1.5
        assert g.f[4] == 0.0

    def test_power_of_two_enforced(self):
        with pytest.raises(ValueError):
            LambdaGrid(12, 0.5)

    def test_f_index(self):
        g = LambdaGrid.from_df(16, 0.25)
        assert g.f_index(0.0) == 8
        assert g.f_index(-0.5) == 6
        with pytest.raises(GridTooSmall):
            g.f_index(0.37)


class TestAlignedGrid:
    def test_nodes_hit_attainable_lattice(self, qubit_h, coord_decomp, beta_avg):
        grid = TimeGrid(1.0, 12)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 256)
        for m in range(13):
            f = 1.0 + m / 12.0  # attainable time averages
            g.f_index(f)  # raises if off-grid

    def test_too_small_raises(self, coord_decomp, beta_avg):
        with pytest.raises(GridTooSmall):
            meters.aligned_grid(beta_avg, TimeGrid(1.0, 12), coord_decomp, 2)


class TestLambdaEvolve:
    def test_zero_coupling_is_sliced_free_evolution(self, qubit_h, coord_decomp, psi_plus):
        grid = TimeGrid(1.0, 9)
        out = meters.lambda_evolve(qubit_h, coord_decomp, grid,
                                   SwitchingFunction.constant(1.0), 0.0, psi_plus)
        assert np.linalg.norm(out - hilbert.exact_propagator(qubit_h, 1.0) @ psi_plus) < 1e-12

    def test_free_hamiltonian_pure_phases(self, coord_decomp):
        """H = 0: amplitudes pick up e^{-i lam a_k} only."""
        grid = TimeGrid(1.0, 6)
        psi0 = np.array([0.6, 0.8])
        lam = 1.37
        out = meters.lambda_evolve(np.zeros((2, 2)), coord_decomp, grid,
                                   SwitchingFunction.constant(1.0), lam, psi0)
        expected = psi0 * np.exp(-1j * lam * np.array([1.0, 2.0]))
        assert np.abs(out - expected).max() < 1e-13

    @pytest.mark.parametrize("lam", [-2.0, 0.3, 5.0])
    def test_against_exhaustive_path_sum(self, qubit_h, coord_decomp, psi_plus, lam):
        grid = TimeGrid(1.0, 8)
        spec = PathFunctionalSpec(grid, (SwitchingFunction.constant(1.0),))
        out = meters.lambda_evolve(qubit_h, coord_decomp, grid,
                                   spec.betas[0], lam, psi_plus)
        oracle = oracle_lambda_state(qubit_h, coord_decomp, grid, spec, lam, psi_plus)
        assert np.abs(out - oracle).max() < 1e-12

    def test_norm_preserved(self, qubit_h, coord_decomp, psi_plus):
        grid = TimeGrid(1.0, 7)
        out = meters.lambda_evolve(qubit_h, coord_decomp, grid,
                                   SwitchingFunction.constant(1.0), 3.1, psi_plus)
        assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-13)


class TestAmplitudeField:
    def test_instantaneous_comb(self, coord_decomp, psi_plus):
        """H = 0 with an impulse meter: spikes of height <a_k|psi0>/df."""
        grid = TimeGrid(1.0, 4)
        beta = SwitchingFunction.impulse(0.5)
        g = meters.aligned_grid(beta, grid, coord_decomp, 64)
        field = meters.amplitude_field(np.zeros((2, 2)), coord_decomp, grid,
                                       beta, g, psi_plus)
        for a, comp in ((1.0, 0), (2.0, 1)):
            spike = field.states[g.f_index(a)]
            expected = np.zeros(2, dtype=complex)
            expected[comp] = psi_plus[comp] / g.df
            assert np.abs(spike - expected).max() < 1e-10
        mask = np.ones(64, dtype=bool)
        mask[[g.f_index(1.0), g.f_index(2.0)]] = False
        assert np.abs(field.states[mask]).max() < 1e-12

    def test_marginal_is_zero_coupling_row(self, qubit_h, coord_decomp, psi_plus, beta_avg):
        grid = TimeGrid(1.0, 10)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 128)
        field = meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, g, psi_plus)
        ref = meters.lambda_evolve(qubit_h, coord_decomp, grid, beta_avg, 0.0, psi_plus)
        assert meters.marginal_residual(field, ref) < 1e-10

    def test_matches_binned_paths(self, qubit_h, coord_decomp, psi_plus, beta_avg):
        grid = TimeGrid(1.0, 10)
        spec = PathFunctionalSpec(grid, (beta_avg,))
        bins = pathsum.binned_measurement_amplitude(
            qubit_h, coord_decomp, grid, psi_plus, spec)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 256)
        field = meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, g, psi_plus)
        assert meters.binned_field_residual(field, bins) < 1e-10

    def test_two_meters(self, qubit_h, coord_decomp, psi_plus):
        """Joint field of a time-average meter and an impulse meter."""
        grid = TimeGrid(1.0, 6)
        betas = (SwitchingFunction.constant(1.0), SwitchingFunction.impulse(0.9))
        spec = PathFunctionalSpec(grid, betas)
        grids = tuple(meters.aligned_grid(b, grid, coord_decomp, 32, margin_bins=2) for b in betas)
        field = meters.amplitude_field(qubit_h, coord_decomp, grid, betas, grids, psi_plus)
        undisturbed = hilbert.exact_propagator(qubit_h, 1.0) @ psi_plus
        assert meters.marginal_residual(field, undisturbed) < 1e-10
        bins = pathsum.binned_measurement_amplitude(
            qubit_h, coord_decomp, grid, psi_plus, spec)
        assert meters.binned_field_residual(field, bins) < 1e-10
        assert meters.fourier_consistency_check(
            field, qubit_h, coord_decomp, grid, betas) < 1e-10

    def test_nyquist_guard(self, qubit_h, coord_decomp, beta_avg, psi_plus):
        grid = TimeGrid(1.0, 12)
        coarse = LambdaGrid(256, 30.0)  # dlam * w_max * a_max >> pi
        with pytest.raises(NyquistViolation):
            meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, coarse, psi_plus)

    def test_coverage_guard(self, qubit_h, coord_decomp, beta_avg, psi_plus):
        grid = TimeGrid(1.0, 12)
        tiny = LambdaGrid.from_df(256, 0.01)  # range [-1.28, 1.28) misses f=2
        with pytest.raises(GridTooSmall):
            meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, tiny, psi_plus)


class TestDegenerateObservableRoute:
    def test_relabelled_bins_match_function_observable_field(self):
        """Independent route for functions of the observable: measuring
        F(A) through the pointer route (degenerate coupling spectrum is
        fine there) must reproduce the path-level relabelled bins."""
        import warnings

        from pathmeter import pathsum

        rng = np.random.default_rng(19)
        M = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        H = (M + M.conj().T) / 2
        A = np.diag([1.0, 2.0, 10.0])
        decA = hilbert.spectral_decompose(A)
        psi0 = rng.normal(size=3) + 1j * rng.normal(size=3)
        grid = TimeGrid(1.0, 5)
        spec = PathFunctionalSpec(grid, (SwitchingFunction.constant(1.0),))
        fmap = {1.0: 5.0, 2.0: 5.0, 10.0: 7.0}
        bins = pathsum.relabel_by_function(H, decA, grid, psi0, spec,
                                           lambda a: fmap[round(a, 6)])
        FA = np.diag([5.0, 5.0, 7.0])  # same eigenvectors, mapped values
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            decFA = hilbert.spectral_decompose(FA)
        g = meters.aligned_grid(spec.betas[0], grid, decFA, 256, margin_bins=2)
        field = meters.amplitude_field(H, FA, grid, spec.betas[0], g, psi0)
        assert meters.binned_field_residual(field, bins) < 1e-10


class TestFourierConsistency:
    def test_qubit(self, qubit_h, coord_decomp, psi_plus, beta_avg):
        grid = TimeGrid(1.0, 10)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 256)
        field = meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, g, psi_plus)
        assert meters.fourier_consistency_check(
            field, qubit_h, coord_decomp, grid, beta_avg) < 1e-10

    def test_free_diagonal_case(self, coord_decomp, psi_plus, beta_avg):
        grid = TimeGrid(1.0, 8)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 64, margin_bins=2)
        field = meters.amplitude_field(np.zeros((2, 2)), coord_decomp, grid,
                                       beta_avg, g, psi_plus)
        assert meters.fourier_consistency_check(
            field, np.zeros((2, 2)), coord_decomp, grid, beta_avg) < 1e-13


def _born_field(coord_decomp, psi_plus, L=512):
    # df = 1/64 puts the eigenvalue spikes on-grid with range +-4 and
    # resolves width-0.1 kernels (~6 bins) so their symbols decay well
    # inside the lambda window
    grid = TimeGrid(1.0, 4)
    beta = SwitchingFunction.impulse(0.5)
    g = LambdaGrid.from_df(L, 1.0 / 64.0)
    field = meters.amplitude_field(np.zeros((2, 2)), coord_decomp, grid,
                                   beta, g, psi_plus)
    return field, g


class TestCoarseGrain:
    def test_shift_translates(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        shift = CoarseGrainKernel.shift((g,), (4 * g.df,))
        out = meters.coarse_grain(field, shift)
        assert out.kind == "fine"  # unitary kernels do not coarsen
        assert np.abs(out.states - np.roll(field.states, 4, axis=0)).max() < 1e-9

    def test_gaussian_on_comb_is_sum_of_bumps(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        width = 0.1
        kern = CoarseGrainKernel.gaussian((g,), (width,))
        out = meters.coarse_grain(field, kern)
        assert out.kind == "coarse"
        # oracle: spikes at 1 and 2 with weights <a_k|psi0> convolved with G
        expected = np.zeros_like(out.states)
        for a, comp in ((1.0, 0), (2.0, 1)):
            expected[:, comp] = psi_plus[comp] * np.exp(-((g.f - a) / width) ** 2)
        assert np.abs(out.states - expected).max() < 1e-9

    def test_quadratic_phase_preserves_mass(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        kern = CoarseGrainKernel.quadratic_phase((g,), (0.3,))
        out = meters.coarse_grain(field, kern)
        assert out.kind == "fine"
        assert out.mass() == pytest.approx(field.mass(), rel=1e-10)

    def test_shift_preserves_mass(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        kern = CoarseGrainKernel.shift((g,), (0.5,))
        out = meters.coarse_grain(field, kern)
        assert out.mass() == pytest.approx(field.mass(), rel=1e-10)

    def test_grain_and_shift_commute(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        gauss = CoarseGrainKernel.gaussian((g,), (0.1,))
        shift = CoarseGrainKernel.shift((g,), (0.25,))
        a = meters.coarse_grain(meters.coarse_grain(field, gauss), shift)
        b = meters.coarse_grain(meters.coarse_grain(field, shift), gauss)
        assert np.abs(a.states - b.states).max() < 1e-12

    def test_grid_mismatch(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        other = LambdaGrid(64, g.dlam)
        with pytest.raises(GridMismatch):
            meters.coarse_grain(field, CoarseGrainKernel.gaussian((other,), (0.1,)))

    def test_unitary_kernels_have_unit_modulus_symbols(self, coord_decomp, psi_plus):
        _, g = _born_field(coord_decomp, psi_plus)
        for kern in (CoarseGrainKernel.shift((g,), (0.7,)),
                     CoarseGrainKernel.quadratic_phase((g,), (0.3,))):
            assert np.abs(np.abs(kern.symbol()) - 1.0).max() < 1e-14

    def test_gaussian_symbol_real_positive_peaked(self, coord_decomp, psi_plus):
        _, g = _born_field(coord_decomp, psi_plus)
        kern = CoarseGrainKernel.gaussian((g,), (0.2,))
        sym = kern.symbol()
        vals = kern.f_samples()
        assert np.all(sym.real > 0) and np.abs(sym.imag).max() == 0.0
        assert vals[g.f_index(0.0)].real == 1.0  # peak at zero readout

    def test_custom_kernel_matches_gaussian(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        width = 0.1
        gauss = CoarseGrainKernel.gaussian((g,), (width,))
        custom = CoarseGrainKernel.custom((g,), np.exp(-((g.f / width) ** 2)))
        a = meters.coarse_grain(field, gauss)
        b = meters.coarse_grain(field, custom)
        # analytic symbol vs sampled-DFT symbol agree once G is resolved
        assert np.abs(a.states - b.states).max() < 1e-9


class TestProbabilities:
    def test_fine_field_rejected(self, coord_decomp, psi_plus):
        field, _ = _born_field(coord_decomp, psi_plus)
        with pytest.raises(FineFieldNotNormalizable):
            meters.probabilities(field)

    def test_born_masses(self, coord_decomp, psi_plus):
        field, g = _born_field(coord_decomp, psi_plus)
        out = meters.coarse_grain(field, CoarseGrainKernel.gaussian((g,), (0.1,)))
        table = meters.probabilities(out)
        W = table.weights
        split = g.f_index(1.5)
        low = W[:split].sum() * g.df
        high = W[split:].sum() * g.df
        assert low / (low + high) == pytest.approx(0.5, abs=1e-10)

    def test_all_mass_on_occupied_level(self, coord_decomp):
        field, g = _born_field(coord_decomp, np.array([1.0, 0.0]))
        out = meters.coarse_grain(field, CoarseGrainKernel.gaussian((g,), (0.1,)))
        W = meters.probabilities(out).weights
        split = g.f_index(1.5)
        assert W[split:].sum() * g.df < 1e-12
        assert W[:split].sum() * g.df > 0

    def test_total_mass_identity(self, qubit_h, coord_decomp, psi_plus, beta_avg):
        """Total readout mass equals int |G|^2 df x |psi0|^2."""
        grid = TimeGrid(1.0, 10)
        g = meters.aligned_grid(beta_avg, grid, coord_decomp, 256)
        field = meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, g, psi_plus)
        kern = CoarseGrainKernel.gaussian((g,), (0.15,))
        table = meters.probabilities(meters.coarse_grain(field, kern))
        assert abs(table.total_mass() - kern.squared_mass() * 1.0) < 1e-6


class TestResolutionRescale:
    def test_identity_and_halving(self, coord_decomp, psi_plus):
        _, g = _born_field(coord_decomp, psi_plus)
        kern = CoarseGrainKernel.gaussian((g,), (0.2,))
        assert meters.resolution_rescale(kern, 1.0).params == kern.params
        assert meters.resolution_rescale(kern, 2.0).params[0] == pytest.approx(0.1)
        with pytest.raises(NonPositiveAlpha):
            meters.resolution_rescale(kern, 0.0)

    def test_rescale_equals_amplified_coupling(self, qubit_h, coord_decomp,
                                               psi_plus, beta_avg):
        """Sharpening the kernel alpha-fold = amplifying the coupling
        alpha-fold on the alpha-relabelled grid, with mass ratio alpha."""
        alpha = 2.0
        grid = TimeGrid(1.0, 10)
        g1 = meters.aligned_grid(beta_avg, grid, coord_decomp, 256)
        kern = CoarseGrainKernel.gaussian((g1,), (0.3,))
        field1 = meters.amplitude_field(qubit_h, coord_decomp, grid, beta_avg, g1, psi_plus)
        out1 = meters.coarse_grain(field1, meters.resolution_rescale(kern, alpha))

        g2 = LambdaGrid(g1.n_points, g1.dlam / alpha)  # df_2 = alpha df_1
        field2 = meters.amplitude_field(qubit_h, alpha * np.asarray(coord_decomp.reconstruct()),
                                        grid, beta_avg, g2, psi_plus)
        kern2 = CoarseGrainKernel.gaussian((g2,), (0.3,))
        out2 = meters.coarse_grain(field2, kern2)
        # node n of grid 2 sits at alpha * f_n: relabelling is index identity
        assert np.abs(out2.states - out1.states).max() < 1e-9
        assert out2.mass() / out1.mass() == pytest.approx(alpha, rel=1e-9)
