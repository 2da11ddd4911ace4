import math

import numpy as np
import pytest

from hypothesis import given, strategies as st

from metaflow_extensions.rabi_qpt.plugins.rabi.effective import (
    ModelParams,
    Phase,
    classify_phase,
    critical_exponents,
    d2_ground_energy,
    effective_observables,
    excitation_energy,
    finite_freq_predictions,
    ground_energy_rescaled,
    order_parameter,
    quadrature_variances,
    squeeze_and_displacement,
    variational_energy,
    variational_minimize,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.utils import (
    DivergentQuantityException,
    InvalidParameterException,
)

from conftest import loglog_slope


class TestModelParams:
    def test_lambda_from_coupling(self):
        params = ModelParams(0.5, ratio=100.0, omega0=2.0)
        assert params.lam() == pytest.approx(0.5 * math.sqrt(4.0 * 100.0) / 2.0)
        assert params.omega == pytest.approx(200.0)

    def test_lambda_needs_finite_ratio(self):
        with pytest.raises(InvalidParameterException, match="finite ratio"):
            ModelParams(0.5).lam()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"g": -0.1},
            {"g": float("nan")},
            {"g": 0.5, "ratio": 0.0},
            {"g": 0.5, "ratio": -3.0},
            {"g": 0.5, "omega0": 0.0},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidParameterException):
            ModelParams(**kwargs)

    def test_infinite_ratio_is_first_class(self):
        params = ModelParams(1.5)
        assert params.is_infinite
        assert "inf" in repr(params)


class TestPhase:
    @pytest.mark.parametrize(
        "g,phase",
        [(0.5, Phase.NORMAL), (1.0, Phase.CRITICAL), (1.5, Phase.SUPERRADIANT)],
    )
    def test_classify(self, g, phase):
        assert classify_phase(g) is phase

    def test_negative_coupling(self):
        with pytest.raises(InvalidParameterException, match="g must be >= 0"):
            classify_phase(-1.0)

    def test_exponents(self):
        exps = critical_exponents()
        assert (exps.z, exps.nu, exps.znu) == (2.0, 0.25, 0.5)


class TestClosedForms:
    @pytest.mark.parametrize(
        "g,expected",
        [(0.0, 1.0), (0.6, 0.8), (1.0, 0.0), (math.sqrt(2.0), math.sqrt(3.0) / 2)],
    )
    def test_excitation_energy(self, g, expected):
        assert excitation_energy(ModelParams(g)) == pytest.approx(expected, abs=1e-15)

    def test_excitation_energy_scales_with_omega0(self):
        assert excitation_energy(ModelParams(0.6, omega0=3.0)) == pytest.approx(2.4)

    def test_excitation_energy_vanishes_from_both_sides(self):
        assert excitation_energy(ModelParams(1.0 - 1e-12)) < 1e-5
        assert excitation_energy(ModelParams(1.0 + 1e-12)) < 1e-5

    @pytest.mark.parametrize("g,expected", [(0.3, -0.5), (1.0, -0.5), (2.0, -1.0625)])
    def test_ground_energy(self, g, expected):
        assert ground_energy_rescaled(g) == pytest.approx(expected)

    def test_ground_energy_continuous(self):
        for delta in (1e-6, 1e-8):
            left = ground_energy_rescaled(1.0 - delta)
            right = ground_energy_rescaled(1.0 + delta)
            assert abs(left - right) < 1e-8

    def test_second_derivative(self):
        assert d2_ground_energy(0.5) == 0.0
        assert d2_ground_energy(2.0) == pytest.approx(-0.59375)
        assert d2_ground_energy(1.0 + 1e-6) == pytest.approx(-2.0, abs=1e-5)

    def test_second_derivative_matches_finite_differences(self):
        h = 1e-4
        g = 1.3
        fd = (
            ground_energy_rescaled(g + h)
            - 2.0 * ground_energy_rescaled(g)
            + ground_energy_rescaled(g - h)
        ) / (h * h)
        assert d2_ground_energy(g) == pytest.approx(fd, abs=1e-5)

    def test_second_derivative_undefined_at_critical_point(self):
        with pytest.raises(DivergentQuantityException):
            d2_ground_energy(1.0)

    @pytest.mark.parametrize(
        "g,expected", [(0.9, 0.0), (1.0, 0.0), (math.sqrt(2.0), 0.375)]
    )
    def test_order_parameter(self, g, expected):
        assert order_parameter(g) == pytest.approx(expected)


class TestSqueezing:
    def test_vacuum(self):
        sq = squeeze_and_displacement(ModelParams(0.0))
        assert (sq.r, sq.alpha, sq.alpha_rescaled) == (0.0, 0.0, False)

    def test_normal_phase(self):
        sq = squeeze_and_displacement(ModelParams(0.6))
        assert sq.r == pytest.approx(-0.25 * math.log(0.64))
        assert sq.r == pytest.approx(0.11157, abs=1e-5)

    def test_superradiant_displacement(self):
        sq = squeeze_and_displacement(ModelParams(math.sqrt(2.0), ratio=100.0))
        assert sq.alpha == pytest.approx(math.sqrt(100.0 * 3.0 / 8.0))
        assert sq.alpha == pytest.approx(6.1237, abs=1e-4)
        assert not sq.alpha_rescaled

    def test_superradiant_rescaled_displacement(self):
        sq = squeeze_and_displacement(ModelParams(math.sqrt(2.0)))
        assert sq.alpha_rescaled
        assert sq.alpha == pytest.approx(math.sqrt(3.0 / 8.0))

    def test_diverges_at_critical_point(self):
        with pytest.raises(DivergentQuantityException):
            squeeze_and_displacement(ModelParams(1.0))
        with pytest.raises(DivergentQuantityException):
            quadrature_variances(1.0)
        with pytest.raises(DivergentQuantityException):
            effective_observables(ModelParams(1.0, ratio=10.0))

    def test_quadratures(self):
        assert quadrature_variances(0.0) == (1.0, 1.0)
        quad = quadrature_variances(0.6)
        assert quad.dx == pytest.approx(1.1180, abs=1e-4)
        assert quad.dp == pytest.approx(0.8944, abs=1e-4)

    def test_quadrature_divergence_rate(self):
        ratio = quadrature_variances(0.999).dx / quadrature_variances(0.99).dx
        assert ratio == pytest.approx(10.0**0.25, rel=2e-3)

    @given(st.floats(min_value=0.0, max_value=2.0).filter(lambda g: g != 1.0))
    def test_minimum_uncertainty(self, g):
        quad = quadrature_variances(g)
        assert quad.dx * quad.dp == pytest.approx(1.0, abs=1e-12)

    def test_minimum_uncertainty_grid(self):
        for g in np.linspace(0.0, 2.0, 200):
            if g == 1.0:
                continue
            obs = effective_observables(ModelParams(g))
            assert abs(obs.dx * obs.dp - 1.0) < 1e-12
            assert obs.epsilon >= 0 and obs.n_c >= 0 and obs.alpha >= 0

    def test_bundle(self):
        obs = effective_observables(ModelParams(0.6))
        assert obs.phase is Phase.NORMAL
        assert obs.epsilon == pytest.approx(0.8)
        assert obs.e_G == -0.5
        assert obs.n_c == 0.0


class TestCriticalExponents:
    def setup_method(self):
        self.delta = np.logspace(-4, -2, 40)

    def test_gap_exponent(self):
        eps = [excitation_energy(ModelParams(1.0 - d)) for d in self.delta]
        assert loglog_slope(self.delta, eps) == pytest.approx(0.5, abs=1e-3)

    def test_length_exponent(self):
        dx = [quadrature_variances(1.0 - d).dx for d in self.delta]
        assert loglog_slope(self.delta, dx) == pytest.approx(-0.25, abs=1e-3)


class TestFiniteFrequency:
    def test_values(self):
        pred = finite_freq_predictions(1e3)
        q = 2000.0 / 3.0
        assert pred.eps_gc == pytest.approx(q ** (-1.0 / 3.0))
        assert pred.eps_gc == pytest.approx(0.11447, abs=1e-5)
        assert pred.dx_gc == pytest.approx(q ** (1.0 / 6.0))
        assert pred.dx_gc == pytest.approx(2.956, abs=1e-3)
        assert pred.dp_gc == pytest.approx(q ** (-1.0 / 6.0))
        assert pred.nc_corr == pytest.approx(2.184e-3, rel=1e-3)
        assert pred.eG_corr == pytest.approx(0.25 * (2000.0 / 3.0) ** (-4.0 / 3.0))

    @pytest.mark.parametrize(
        "field,exponent",
        [
            ("eps_gc", -1.0 / 3.0),
            ("dx_gc", 1.0 / 6.0),
            ("dp_gc", -1.0 / 6.0),
            ("nc_corr", -2.0 / 3.0),
            ("eG_corr", -4.0 / 3.0),
        ],
    )
    def test_exponents(self, field, exponent):
        lo = getattr(finite_freq_predictions(1e2), field)
        hi = getattr(finite_freq_predictions(1e4), field)
        assert math.log10(hi / lo) / 2.0 == pytest.approx(exponent, abs=1e-12)

    def test_needs_finite_ratio(self):
        with pytest.raises(InvalidParameterException):
            finite_freq_predictions(math.inf)


class TestVariational:
    def test_uncoupled(self):
        res = variational_minimize(0.0, 1e3)
        assert res.s_opt < 1e-4
        assert abs(res.energy) < 1e-8

    @pytest.mark.parametrize("ratio", [1e2, 1e3, 1e4])
    def test_critical_optimum(self, ratio):
        q = 2.0 * ratio / 3.0
        res = variational_minimize(1.0, ratio)
        assert res.dx == pytest.approx(q ** (1.0 / 6.0), rel=1e-6)
        assert res.n_phot == pytest.approx(math.sinh(res.s_opt) ** 2)
        # Energy above the infinite-frequency value -omega0 / 2
        correction = res.energy + 0.5 - 1.0 / (4.0 * ratio)
        assert correction == pytest.approx(0.375 * q ** (-1.0 / 3.0), abs=1e-10)

    def test_critical_energy_value(self):
        res = variational_minimize(1.0, 1e3)
        assert res.energy + 0.5 - 1.0 / 4e3 == pytest.approx(0.04293, abs=1e-5)

    def test_energy_functional(self):
        assert variational_energy(0.0, 0.7, 50.0) == pytest.approx(
            -0.49 / 4.0 + 3.0 * 0.7**4 / 800.0 + 0.49 / 200.0
        )

    def test_rejects_superradiant(self):
        with pytest.raises(InvalidParameterException):
            variational_minimize(1.2, 1e3)

    def test_rejects_infinite_ratio(self):
        with pytest.raises(InvalidParameterException):
            variational_minimize(1.0, math.inf)
