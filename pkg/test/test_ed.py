import math

import numpy as np
import pytest

from scipy.linalg import eigh

from metaflow_extensions.rabi_qpt.plugins.rabi.ed import (
    FockBasis,
    ParityBlock,
    block_bands,
    build_rabi_matrix,
    critical_corrections,
    diagonalize,
    diagonalize_quartic,
    initial_cutoff,
    observables,
    quartic_bands,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.effective import (
    ModelParams,
    excitation_energy,
    finite_freq_predictions,
    ground_energy_rescaled,
    variational_minimize,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.eigensolvers import (
    BandedSolver,
    DenseSolver,
    EigenSolver,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.utils import InvalidParameterException

from conftest import loglog_slope


class TestBasis:
    def test_dimension_and_index(self):
        basis = FockBasis(10)
        assert basis.dim == 22
        assert basis.index(3, 1) == 7
        assert FockBasis(10, with_spin=False).dim == 11

    def test_rejects_small_cutoff(self):
        with pytest.raises(InvalidParameterException, match="cutoff"):
            FockBasis(2)

    def test_block_spins(self):
        assert [ParityBlock.EVEN.spin(j) for j in range(4)] == [0, 1, 0, 1]
        assert [ParityBlock.ODD.spin(j) for j in range(4)] == [1, 0, 1, 0]


class TestHamiltonian:
    def test_uncoupled_spectrum(self):
        ratio = 20.0
        mat = build_rabi_matrix(ModelParams(0.0, ratio), FockBasis(30))
        vals = eigh(mat, eigvals_only=True)
        assert vals[0] == pytest.approx(-ratio / 2.0)
        assert vals[1] == pytest.approx(1.0 - ratio / 2.0)
        assert vals[2] == pytest.approx(2.0 - ratio / 2.0)

    def test_resonant_weak_coupling_lowers_ground(self):
        # ratio 1 and g = 0.2 give lambda = 0.1
        params = ModelParams(0.2, 1.0)
        assert params.lam() == pytest.approx(0.1)
        mat = build_rabi_matrix(params, FockBasis(20))
        assert eigh(mat, eigvals_only=True)[0] < -0.5

    def test_blocks_reproduce_full_spectrum(self):
        params = ModelParams(0.8, 10.0)
        basis = FockBasis(60)
        full = eigh(build_rabi_matrix(params, basis), eigvals_only=True)[:6]
        merged = []
        for block in ParityBlock:
            bands = block_bands(params, basis.cutoff, block)
            assert bands.shape == (2, basis.cutoff + 1)
            merged.extend(DenseSolver().solve(bands, 6)[0])
        np.testing.assert_allclose(sorted(merged)[:6], full, atol=1e-10)

    def test_full_matrix_needs_spin(self):
        with pytest.raises(InvalidParameterException, match="spin"):
            build_rabi_matrix(ModelParams(0.5, 10.0), FockBasis(10, with_spin=False))

    def test_needs_finite_ratio(self):
        with pytest.raises(InvalidParameterException):
            block_bands(ModelParams(0.5), 20, ParityBlock.EVEN)
        with pytest.raises(InvalidParameterException):
            diagonalize(ModelParams(0.5))

    def test_truncation_is_variational(self):
        params = ModelParams(1.0, 200.0)
        ground = [
            min(
                DenseSolver().solve(block_bands(params, cutoff, b), 1)[0][0]
                for b in ParityBlock
            )
            for cutoff in (8, 16, 32, 64, 128)
        ]
        assert all(b <= a + 1e-12 for a, b in zip(ground, ground[1:]))


class TestObservables:
    def test_vacuum(self):
        basis = FockBasis(8)
        vec = np.zeros(basis.dim)
        vec[basis.index(0, 0)] = 1.0
        obs = observables(ModelParams(0.0, 10.0), vec, basis)
        assert obs.n_phot == 0.0
        assert obs.x_mean == 0.0
        assert obs.dx == pytest.approx(1.0)
        assert obs.dp == pytest.approx(1.0)
        assert obs.parity == 1.0

    def test_single_photon(self):
        basis = FockBasis(8)
        vec = np.zeros(basis.dim)
        vec[basis.index(1, 0)] = 1.0
        obs = observables(ModelParams(0.0, 10.0), vec, basis)
        assert obs.n_phot == pytest.approx(1.0)
        assert obs.dx == pytest.approx(math.sqrt(3.0))
        assert obs.parity == -1.0

    def test_coherent_superposition(self):
        basis = FockBasis(8)
        vec = np.zeros(basis.dim)
        vec[basis.index(0, 0)] = vec[basis.index(1, 0)] = 1.0 / math.sqrt(2.0)
        obs = observables(ModelParams(0.0, 10.0), vec, basis)
        assert obs.x_mean == pytest.approx(1.0)
        assert obs.n_phot == pytest.approx(0.5)

    def test_rejects_unnormalized(self):
        basis = FockBasis(8)
        vec = np.zeros(basis.dim)
        vec[0] = 2.0
        with pytest.raises(InvalidParameterException, match="normalized"):
            observables(ModelParams(0.0, 10.0), vec, basis)

    def test_rejects_wrong_size(self):
        with pytest.raises(InvalidParameterException, match="dimension"):
            observables(ModelParams(0.0, 10.0), np.ones(3), FockBasis(8))


class TestDiagonalize:
    def test_uncoupled_ground(self):
        res = diagonalize(ModelParams(0.0, 50.0))
        assert res.converged
        assert res.ground.energy == pytest.approx(-25.0)
        assert res.gap == pytest.approx(1.0)
        assert res.ground.parity == pytest.approx(1.0)

    def test_normal_phase_gap(self):
        res = diagonalize(ModelParams(0.5, 1e4))
        assert res.converged
        assert res.gap == pytest.approx(excitation_energy(ModelParams(0.5)), rel=5e-3)

    def test_normal_phase_ground_energy(self):
        ratio = 1e4
        res = diagonalize(ModelParams(0.5, ratio))
        eps = excitation_energy(ModelParams(0.5))
        assert res.ground.energy + ratio / 2.0 == pytest.approx(
            (eps - 1.0) / 2.0, abs=1e-3
        )

    def test_superradiant_doublet(self):
        res = diagonalize(ModelParams(1.5, 50.0))
        assert res.converged
        assert res.gap < 1e-6
        assert all(s.doublet for s in res.states)
        assert {s.block for s in res.states} == set(ParityBlock)

    @pytest.mark.parametrize("g", [0.5, 1.5])
    def test_rescaled_ground_energy_converges(self, g):
        errors = []
        for ratio in (50.0, 500.0):
            res = diagonalize(ModelParams(g, ratio))
            errors.append(abs(res.ground.energy / ratio - ground_energy_rescaled(g)))
        assert errors[1] < errors[0]
        assert errors[1] < 5e-3

    def test_state_invariants(self):
        res = diagonalize(ModelParams(0.7, 100.0), k=4)
        for state in res.states:
            assert not state.doublet
            assert abs(state.parity) == pytest.approx(1.0, abs=1e-8)
            assert state.dx * state.dp >= 1.0 - 1e-12

    def test_critical_quadrature(self):
        ratio = 1e3
        res = diagonalize(ModelParams(1.0, ratio))
        assert res.ground.dx == pytest.approx(finite_freq_predictions(ratio).dx_gc, rel=5e-2)

    def test_levels(self):
        res = diagonalize(ModelParams(0.3, 20.0), k=4)
        assert len(res.energies) == 4
        assert np.all(np.diff(res.energies) >= 0)
        with pytest.raises(InvalidParameterException):
            diagonalize(ModelParams(0.3, 20.0), k=0)

    def test_more_levels_than_initial_cutoff(self):
        params = ModelParams(0.3, 20.0)
        assert initial_cutoff(params) < 200
        res = diagonalize(params, k=200)
        assert len(res.energies) == 200
        assert len(res.states) == 200
        assert res.cutoff_used >= 200
        assert np.all(np.diff(res.energies) >= 0)

    def test_cap_reports_unconverged(self):
        res = diagonalize(ModelParams(1.5, 50.0), max_cutoff=64)
        assert not res.converged
        assert res.cutoff_used == 64

    def test_initial_cutoff(self):
        assert initial_cutoff(ModelParams(0.5, 100.0)) == 64
        assert initial_cutoff(ModelParams(1.0, 1e6)) == 350
        assert initial_cutoff(ModelParams(0.5, 100.0), min_cutoff=1) == 8

    def test_critical_corrections(self):
        ratio = 1e3
        params = ModelParams(1.0, ratio)
        res = diagonalize(params)
        corr = critical_corrections(res, params)
        assert corr.gap == res.gap
        assert corr.n_c == pytest.approx(res.ground.n_phot / ratio)
        assert corr.e_G_corr == pytest.approx(
            (res.ground.energy + (ratio + 1.0) / 2.0) / ratio
        )
        single = diagonalize(params, k=1)
        assert math.isnan(critical_corrections(single, params).gap)


class TestSolvers:
    def test_registry(self):
        assert EigenSolver.get_solver("dense") is DenseSolver
        assert EigenSolver.get_solver("banded") is BandedSolver
        with pytest.raises(InvalidParameterException, match="does not exist"):
            EigenSolver.get_solver("lanczos")

    def test_dimension_selection(self):
        assert isinstance(EigenSolver.for_dimension(10), DenseSolver)
        assert isinstance(EigenSolver.for_dimension(10**5), BandedSolver)
        assert isinstance(EigenSolver.for_dimension(10, "banded"), BandedSolver)

    @pytest.mark.parametrize("bands", ["rabi", "quartic"])
    def test_solvers_agree(self, bands):
        if bands == "rabi":
            mat = block_bands(ModelParams(1.2, 30.0), 100, ParityBlock.ODD)
        else:
            mat = quartic_bands(1.0, 100.0, 100)
        dense_vals, dense_vecs = DenseSolver().solve(mat, 3)
        banded_vals, banded_vecs = BandedSolver().solve(mat, 3)
        np.testing.assert_allclose(dense_vals, banded_vals, atol=1e-9)
        overlaps = np.abs(np.sum(dense_vecs * banded_vecs, axis=0))
        np.testing.assert_allclose(overlaps, 1.0, atol=1e-8)

    def test_levels_clipped(self):
        mat = block_bands(ModelParams(0.5, 10.0), 8, ParityBlock.EVEN)
        assert DenseSolver().solve(mat, 50)[0].shape == (9,)


class TestQuartic:
    def test_uncoupled(self):
        res = diagonalize_quartic(0.0, 100.0)
        np.testing.assert_allclose(res.energies, [0.0, 1.0], atol=1e-12)

    def test_critical_gap(self):
        ratio = 1e3
        res = diagonalize_quartic(1.0, ratio)
        assert res.converged
        assert res.gap == pytest.approx(finite_freq_predictions(ratio).eps_gc, rel=0.1)

    @pytest.mark.parametrize("ratio", [1e3, 1e4])
    def test_variational_bound(self, ratio):
        exact = diagonalize_quartic(1.0, ratio)
        var = variational_minimize(1.0, ratio)
        assert var.energy > exact.ground.energy
        assert var.dx == pytest.approx(exact.ground.dx, rel=2.5e-2)

    def test_matches_full_model_near_criticality(self):
        ratio = 1e3
        quartic = diagonalize_quartic(1.0, ratio)
        full = diagonalize(ModelParams(1.0, ratio))
        q_corr = critical_corrections(quartic, ModelParams(1.0, ratio), quartic=True)
        f_corr = critical_corrections(full, ModelParams(1.0, ratio))
        assert q_corr.gap == pytest.approx(f_corr.gap, rel=5e-2)
        assert q_corr.dx == pytest.approx(f_corr.dx, rel=5e-2)

    def test_more_levels_than_initial_cutoff(self):
        res = diagonalize_quartic(0.3, 20.0, k=80)
        assert len(res.energies) == 80
        assert res.cutoff_used >= 79
        assert np.all(np.diff(res.energies) > 0)

    def test_rejects_superradiant(self):
        with pytest.raises(InvalidParameterException, match="quartic"):
            diagonalize_quartic(1.2, 100.0)


@pytest.mark.slow
class TestFiniteFrequencyScaling:
    ratios = np.logspace(2, 4, 5)

    def _corrections(self, ratios):
        out = []
        for ratio in ratios:
            params = ModelParams(1.0, ratio)
            res = diagonalize(params)
            assert res.converged
            out.append(critical_corrections(res, params))
        return out

    def test_gap_and_width(self):
        corr = self._corrections(self.ratios)
        assert loglog_slope(self.ratios, [c.gap for c in corr]) == pytest.approx(
            -1.0 / 3.0, abs=0.02
        )
        assert loglog_slope(self.ratios, [c.dx for c in corr]) == pytest.approx(
            1.0 / 6.0, abs=0.02
        )
        assert loglog_slope(self.ratios, [c.dp for c in corr]) == pytest.approx(
            -1.0 / 6.0, abs=0.02
        )

    def test_ground_energy(self):
        corr = self._corrections(self.ratios)
        assert loglog_slope(self.ratios, [c.e_G_corr for c in corr]) == pytest.approx(
            -4.0 / 3.0, abs=0.05
        )

    def test_photon_density(self):
        ratios = np.logspace(4, 6, 5)
        corr = self._corrections(ratios)
        assert loglog_slope(ratios, [c.n_c for c in corr]) == pytest.approx(
            -2.0 / 3.0, abs=0.03
        )
