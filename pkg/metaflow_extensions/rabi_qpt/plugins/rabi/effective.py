# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false
from __future__ import annotations

import math

from enum import Enum
from typing import Any, NamedTuple, Optional

from scipy.optimize import minimize_scalar

from metaflow.debug import debug
from metaflow.metaflow_config import RABI_VARIATIONAL_TOL  # type: ignore

from .utils import (
    G_C,
    INFINITE,
    DivergentQuantityException,
    InvalidParameterException,
    VariationalException,
    check_coupling,
    check_finite_ratio,
    format_ratio,
    is_infinite,
    scaled_ratio,
)


class Phase(Enum):
    NORMAL = "normal"
    SUPERRADIANT = "superradiant"
    CRITICAL = "critical"


class ModelParams(object):
    """
    One instance of the Rabi Hamiltonian

        H = omega0 a^dag a + (Omega / 2) sigma_z - lambda (a + a^dag) sigma_x

    parametrized by the cavity frequency omega0, the ratio Omega / omega0 (which
    may be INFINITE) and the dimensionless coupling g = 2 lambda / sqrt(omega0 Omega).
    """

    def __init__(self, g: float, ratio: float = INFINITE, omega0: float = 1.0):
        self._g = check_coupling(g)
        ratio = float(ratio)
        if math.isnan(ratio) or ratio <= 0:
            raise InvalidParameterException(
                "Ratio Omega/omega0 must be > 0 or '%s' (got %r)" % ("inf", ratio)
            )
        self._ratio = ratio
        omega0 = float(omega0)
        if not omega0 > 0 or math.isinf(omega0):
            raise InvalidParameterException(
                "omega0 must be finite and > 0 (got %r)" % omega0
            )
        self._omega0 = omega0

    @property
    def g(self) -> float:
        return self._g

    @property
    def ratio(self) -> float:
        return self._ratio

    @property
    def omega0(self) -> float:
        return self._omega0

    @property
    def is_infinite(self) -> bool:
        return is_infinite(self._ratio)

    @property
    def omega(self) -> float:
        return self._omega0 * check_finite_ratio(self._ratio, "Omega")

    @property
    def phase(self) -> Phase:
        return classify_phase(self._g)

    def lam(self) -> float:
        # lambda = g sqrt(omega0 Omega) / 2
        ratio = check_finite_ratio(self._ratio, "lambda")
        return self._g * math.sqrt(self._omega0 * self._omega0 * ratio) / 2.0

    def with_coupling(self, g: float) -> ModelParams:
        return ModelParams(g, self._ratio, self._omega0)

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, ModelParams) and (
            self._g,
            self._ratio,
            self._omega0,
        ) == (other.g, other.ratio, other.omega0)

    def __hash__(self) -> int:
        return hash((self._g, self._ratio, self._omega0))

    def __repr__(self) -> str:
        return "ModelParams(g=%r, ratio=%s, omega0=%r)" % (
            self._g,
            format_ratio(self._ratio),
            self._omega0,
        )


class EffectiveObservables(NamedTuple):
    phase: Phase
    epsilon: float
    r_squeeze: float
    alpha: float
    alpha_rescaled: bool
    e_G: float
    n_c: float
    dx: float
    dp: float


class SqueezeDisplacement(NamedTuple):
    r: float
    alpha: float
    # True when alpha is alpha_g * sqrt(omega0 / Omega) because Omega is infinite
    alpha_rescaled: bool


class Quadratures(NamedTuple):
    dx: float
    dp: float


class FiniteFrequencyPredictions(NamedTuple):
    eps_gc: float
    dx_gc: float
    dp_gc: float
    eG_corr: float
    nc_corr: float


class VariationalResult(NamedTuple):
    s_opt: float
    energy: float
    dx: float
    n_phot: float


class CriticalExponents(NamedTuple):
    z: float
    nu: float
    znu: float


def critical_exponents() -> CriticalExponents:
    z, nu = 2.0, 0.25
    exps = CriticalExponents(z=z, nu=nu, znu=0.5)
    assert exps.z * exps.nu == exps.znu
    return exps


def classify_phase(g: float) -> Phase:
    g = check_coupling(g)
    if g < G_C:
        return Phase.NORMAL
    if g == G_C:
        return Phase.CRITICAL
    return Phase.SUPERRADIANT


def excitation_energy(params: ModelParams) -> float:
    g = params.g
    if g <= G_C:
        return params.omega0 * math.sqrt(1.0 - g * g)
    return params.omega0 * math.sqrt(1.0 - g**-4)


def ground_energy_rescaled(g: float, omega0: float = 1.0) -> float:
    """
    Rescaled ground state energy e_G = (omega0 / Omega) E_G in the Omega -> infinity
    limit. Continuous at g = 1 with a discontinuous second derivative.
    """
    g = check_coupling(g)
    if g <= G_C:
        return -omega0 / 2.0
    return -omega0 * (g * g + g**-2) / 4.0


def d2_ground_energy(g: float, omega0: float = 1.0) -> float:
    g = check_coupling(g)
    if g == G_C:
        raise DivergentQuantityException(
            "d2 e_G / dg2 is undefined at the critical point g = 1"
        )
    if g < G_C:
        return 0.0
    return -omega0 * (2.0 + 6.0 * g**-4) / 4.0


def order_parameter(g: float) -> float:
    g = check_coupling(g)
    if g <= G_C:
        return 0.0
    return (g**4 - 1.0) / (4.0 * g * g)


def squeeze_and_displacement(params: ModelParams) -> SqueezeDisplacement:
    """
    Squeezing parameter and (positive branch) displacement of the effective ground
    state.

    Parameters
    ----------
    params : ModelParams
        Model instance; g must not be 1

    Returns
    -------
    SqueezeDisplacement
        r and alpha. When g > 1 and the ratio is infinite, alpha_g itself is
        unbounded and the rescaled value alpha_g sqrt(omega0 / Omega) is returned
        with alpha_rescaled set.

    Raises
    ------
    DivergentQuantityException
        At g = 1 where the squeezing diverges
    """
    g = params.g
    if g == G_C:
        raise DivergentQuantityException("Squeezing diverges at g = 1")
    if g < G_C:
        return SqueezeDisplacement(
            r=-0.25 * math.log1p(-g * g), alpha=0.0, alpha_rescaled=False
        )
    r = -0.25 * math.log1p(-(g**-4))
    rescaled = (g**4 - 1.0) / (4.0 * g * g)
    if params.is_infinite:
        return SqueezeDisplacement(
            r=r, alpha=math.sqrt(rescaled), alpha_rescaled=True
        )
    return SqueezeDisplacement(
        r=r, alpha=math.sqrt(params.ratio * rescaled), alpha_rescaled=False
    )


def quadrature_variances(g: float) -> Quadratures:
    g = check_coupling(g)
    if g == G_C:
        raise DivergentQuantityException("Quadrature variances diverge at g = 1")
    if g < G_C:
        base = 1.0 - g * g
        return Quadratures(dx=base**-0.25, dp=base**0.25)
    dx = (1.0 - g**-4) ** -0.25
    return Quadratures(dx=dx, dp=1.0 / dx)


def effective_observables(params: ModelParams) -> EffectiveObservables:
    sq = squeeze_and_displacement(params)
    quad = quadrature_variances(params.g)
    return EffectiveObservables(
        phase=params.phase,
        epsilon=excitation_energy(params),
        r_squeeze=sq.r,
        alpha=sq.alpha,
        alpha_rescaled=sq.alpha_rescaled,
        e_G=ground_energy_rescaled(params.g, params.omega0),
        n_c=order_parameter(params.g),
        dx=quad.dx,
        dp=quad.dp,
    )


def finite_freq_predictions(
    ratio: float, omega0: float = 1.0
) -> FiniteFrequencyPredictions:
    """
    Leading order finite-frequency corrections at g = 1, all power laws in
    q = 2 Omega / (3 omega0).
    """
    q = scaled_ratio(check_finite_ratio(ratio, "Finite-frequency predictions"))
    return FiniteFrequencyPredictions(
        eps_gc=omega0 * q ** (-1.0 / 3.0),
        dx_gc=q ** (1.0 / 6.0),
        dp_gc=q ** (-1.0 / 6.0),
        eG_corr=omega0 / 4.0 * q ** (-4.0 / 3.0),
        nc_corr=q ** (-2.0 / 3.0) / 6.0,
    )


def variational_energy(s: float, g: float, ratio: float, omega0: float = 1.0) -> float:
    # <H_np^Omega> + Omega / 2 in the squeezed vacuum S[s]|0>, for which
    # <x^2> = e^{2s}, <x^4> = 3 e^{4s} and <a^dag a> = sinh^2 s
    return omega0 * (
        math.sinh(s) ** 2
        - g * g / 4.0 * math.exp(2.0 * s)
        + 3.0 * g**4 / (16.0 * ratio) * math.exp(4.0 * s)
        + g * g / (4.0 * ratio)
    )


def variational_minimize(
    g: float, ratio: float, tol: Optional[float] = None, omega0: float = 1.0
) -> VariationalResult:
    """
    Minimizes the energy of the quartic-corrected normal phase Hamiltonian over
    squeezed vacua.

    The search is a bounded Brent (golden section with parabolic steps) scalar
    minimization over s in [0, s_max] with s_max = max(5, ln(ratio) / 3 + 2); the
    optimum scales as ln(ratio) / 6 at g = 1.

    Parameters
    ----------
    g : float
        Coupling, 0 <= g <= 1
    ratio : float
        Finite Omega / omega0
    tol : float, optional
        Absolute tolerance on s, by default METAFLOW_RABI_VARIATIONAL_TOL
    omega0 : float, default 1.0
        Energy unit

    Returns
    -------
    VariationalResult
        Optimal s, its energy (constant -Omega / 2 removed), dx = e^s and
        <a^dag a> = sinh^2 s
    """
    g = check_coupling(g)
    if g > G_C:
        raise InvalidParameterException(
            "Variational minimization is for the normal phase, 0 <= g <= 1 (got %r)"
            % g
        )
    ratio = check_finite_ratio(ratio, "Variational minimization")
    if tol is None:
        tol = float(RABI_VARIATIONAL_TOL)
    s_max = max(5.0, math.log(ratio) / 3.0 + 2.0)
    res = minimize_scalar(
        variational_energy,
        bounds=(0.0, s_max),
        args=(g, ratio, omega0),
        method="bounded",
        options={"xatol": tol},
    )
    if not res.success:
        raise VariationalException(
            "No minimum found in [0, %g] for g=%r, ratio=%r: %s"
            % (s_max, g, ratio, res.message)
        )
    s_opt = float(res.x)
    debug.rabi_exec(
        "Variational minimum at s=%.12g (s_max=%g, %d evaluations)"
        % (s_opt, s_max, res.nfev)
    )
    return VariationalResult(
        s_opt=s_opt,
        energy=float(res.fun),
        dx=math.exp(s_opt),
        n_phot=math.sinh(s_opt) ** 2,
    )
