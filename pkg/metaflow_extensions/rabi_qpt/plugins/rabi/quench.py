# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false

from __future__ import annotations

import cmath
import math

from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from scipy.integrate import DOP853

from metaflow.debug import debug
from metaflow.metaflow_config import (  # type: ignore
    RABI_QUENCH_ATOL,
    RABI_QUENCH_RTOL,
    RABI_RESIDUAL_FLOOR,
)

from .utils import (
    G_C,
    InvalidParameterException,
    QuenchIntegrationException,
    check_coupling,
    format_ratio,
    is_infinite,
    scaled_ratio,
)

MIN_RTOL = 1e-13
MAX_RTOL = 1e-6


class BogoliubovState(NamedTuple):
    u: complex
    v: complex
    t: float = 0.0

    @property
    def invariant(self) -> float:
        return abs(self.u) ** 2 - abs(self.v) ** 2

    @property
    def x_amplitude2(self) -> float:
        # <x^2> = |u + v|^2 for the vacuum evolved with a_H = u a + v* a^dag
        return abs(self.u + self.v) ** 2


class QuenchProtocol(object):
    """
    Linear ramp g(t) = g_f t / tau_q from g = 0 at t = 0 to g_f at t = tau_q. Times
    are in units of 1 / omega0.
    """

    def __init__(self, g_f: float, tau_q: float, ratio: float = math.inf):
        g_f = check_coupling(g_f)
        if not 0 < g_f <= G_C:
            raise InvalidParameterException(
                "Final coupling must be in (0, %g] (got %r)" % (G_C, g_f)
            )
        tau_q = float(tau_q)
        if not tau_q > 0 or math.isinf(tau_q):
            raise InvalidParameterException(
                "Quench time must be finite and > 0 (got %r)" % tau_q
            )
        ratio = float(ratio)
        if not ratio > 0:
            raise InvalidParameterException(
                "Ratio Omega/omega0 must be > 0 or 'inf' (got %r)" % ratio
            )
        self.g_f = g_f
        self.tau_q = tau_q
        self.ratio = ratio

    def coupling(self, t: float) -> float:
        return self.g_f * min(max(t / self.tau_q, 0.0), 1.0)

    def __repr__(self) -> str:
        return "QuenchProtocol(g_f=%r, tau_q=%r, ratio=%s)" % (
            self.g_f,
            self.tau_q,
            format_ratio(self.ratio),
        )


class QuenchSample(NamedTuple):
    t: float
    u: complex
    v: complex
    energy: float


class ResidualEnergy(NamedTuple):
    value: float
    underflow: bool
    # Set when the ratio is finite but no finite-frequency correction is known for
    # this final coupling
    uncorrected_baseline: bool


class Trajectory(NamedTuple):
    final_state: BogoliubovState
    invariant_drift: float
    samples: Optional[List[QuenchSample]]
    n_steps: int


class QuenchResult(NamedTuple):
    E_r: float
    final_state: BogoliubovState
    invariant_drift: float
    samples: Optional[List[QuenchSample]]
    underflow: bool
    uncorrected_baseline: bool


class SweepPoint(NamedTuple):
    tau_q: float
    E_r: float
    invariant_drift: float
    underflow: bool


def _nonlinear_coefficient(g: float, ratio: float) -> float:
    if is_infinite(ratio):
        return 0.0
    return 3.0 * g**4 / (4.0 * ratio)


def rhs(state: BogoliubovState, g: float, ratio: float) -> Tuple[complex, complex]:
    """
    Time derivatives of (u, v) in units of omega0:

        i du/dt  = (1 - g^2 / 2) u - (g^2 / 2) v + f
        -i dv/dt = (1 - g^2 / 2) v - (g^2 / 2) u + f

    with f = (3 g^4 / (4 ratio)) (u + v) |u + v|^2 for a finite ratio and 0 otherwise.
    """
    u, v = state.u, state.v
    half = g * g / 2.0
    s = u + v
    f = _nonlinear_coefficient(g, ratio) * s * (s.real * s.real + s.imag * s.imag)
    du = -1j * ((1.0 - half) * u - half * v + f)
    dv = 1j * ((1.0 - half) * v - half * u + f)
    return du, dv


def mode_energy(state: BogoliubovState, g: float, ratio: float) -> float:
    # Conserved by the flow at fixed g; the constant 1/2 is dropped
    s2 = state.x_amplitude2
    energy = abs(state.v) ** 2 - g * g / 4.0 * s2
    if not is_infinite(ratio):
        energy += 3.0 * g**4 / (16.0 * ratio) * s2 * s2
    return energy


def adiabatic_state(g: float, t: float = 0.0) -> BogoliubovState:
    g = check_coupling(g)
    if g >= G_C:
        raise InvalidParameterException(
            "The adiabatic state is only defined for g < %g (got %r)" % (G_C, g)
        )
    r = -0.25 * math.log1p(-g * g)
    return BogoliubovState(complex(math.cosh(r)), complex(math.sinh(r)), t)


def _from_internal(y: Sequence[float], t: float) -> BogoliubovState:
    # y = (Re w, Im w, arg u) with w = v / u; |u|^2 - |v|^2 = 1 fixes |u|
    w = complex(y[0], y[1])
    gap = 1.0 - (w.real * w.real + w.imag * w.imag)
    if not gap > 0:
        raise QuenchIntegrationException(
            "Pair ratio |v/u| reached 1 at t=%.6g; squeezing is not representable" % t
        )
    u = cmath.rect(1.0 / math.sqrt(gap), y[2])
    return BogoliubovState(u, w * u, t)


def _to_internal(state: BogoliubovState) -> np.ndarray:
    norm = state.invariant
    if not norm > 0:
        raise InvalidParameterException(
            "State does not satisfy |u|^2 - |v|^2 > 0 (got %.12g)" % norm
        )
    w = state.v / state.u
    return np.array([w.real, w.imag, cmath.phase(state.u)])


def _check_tolerances(
    rel_tol: Optional[float], abs_tol: Optional[float]
) -> Tuple[float, float]:
    if rel_tol is None:
        rel_tol = float(RABI_QUENCH_RTOL)
    if abs_tol is None:
        abs_tol = float(RABI_QUENCH_ATOL)
    if not MIN_RTOL <= rel_tol <= MAX_RTOL:
        raise InvalidParameterException(
            "Relative tolerance must be in [%g, %g] (got %g)"
            % (MIN_RTOL, MAX_RTOL, rel_tol)
        )
    if not abs_tol > 0:
        raise InvalidParameterException(
            "Absolute tolerance must be > 0 (got %g)" % abs_tol
        )
    return rel_tol, abs_tol


def evolve(
    state: BogoliubovState,
    coupling: Callable[[float], float],
    ratio: float,
    t_end: float,
    rel_tol: Optional[float] = None,
    abs_tol: Optional[float] = None,
    sample_stride: Optional[int] = None,
    max_step: Optional[float] = None,
) -> Trajectory:
    """
    Evolves a Bogoliubov state under an arbitrary coupling schedule.

    The state is carried as w = v / u and the phase of u, so that the symplectic
    invariant holds by construction; u and v are rebuilt from them. The reported
    drift of |u|^2 - |v|^2 therefore only shows the round-off of that rebuild and
    does not bound the integration error. That error is checked against a run with
    a pinned step size (max_step) instead. Integration uses an adaptive 8th order
    embedded Runge-Kutta scheme and stops exactly at t_end.

    Parameters
    ----------
    state : BogoliubovState
        Initial amplitudes and time
    coupling : Callable[[float], float]
        g(t)
    ratio : float
        Omega / omega0 or math.inf
    t_end : float
        Final time; must not be before state.t
    rel_tol : float, optional
        Relative tolerance in [1e-13, 1e-6], by default METAFLOW_RABI_QUENCH_RTOL
    abs_tol : float, optional
        Absolute tolerance, by default METAFLOW_RABI_QUENCH_ATOL
    sample_stride : int, optional
        If set, record (t, u, v, mode energy) every sample_stride steps as well as
        at both ends
    max_step : float, optional
        Largest step. A step well below the adaptive one pins every step to it,
        which gives a fixed-step reference run

    Returns
    -------
    Trajectory
        Final state, the largest deviation of |u|^2 - |v|^2 from 1 seen on the
        accepted steps, the samples and the number of steps

    Raises
    ------
    QuenchIntegrationException
        If the step size underflows or the integrator fails otherwise
    """
    rel_tol, abs_tol = _check_tolerances(rel_tol, abs_tol)
    if sample_stride is not None and sample_stride < 1:
        raise InvalidParameterException(
            "Sample stride must be >= 1 (got %d)" % sample_stride
        )
    t0 = float(state.t)
    if t_end < t0:
        raise InvalidParameterException(
            "End time %g is before the start time %g" % (t_end, t0)
        )
    if max_step is not None and not max_step > 0:
        raise InvalidParameterException("Largest step must be > 0 (got %r)" % max_step)

    def _deriv(t: float, y: np.ndarray) -> np.ndarray:
        current = _from_internal(y, t)
        du, dv = rhs(current, coupling(t), ratio)
        dw = (dv - current.v / current.u * du) / current.u
        return np.array([dw.real, dw.imag, (du / current.u).imag])

    def _sample(s: BogoliubovState) -> QuenchSample:
        return QuenchSample(s.t, s.u, s.v, mode_energy(s, coupling(s.t), ratio))

    y0 = _to_internal(state)
    current = _from_internal(y0, t0)
    drift = abs(current.invariant - 1.0)
    samples = [_sample(current)] if sample_stride else None
    if t_end == t0:
        return Trajectory(current, drift, samples, 0)

    if max_step is None:
        solver = DOP853(_deriv, t0, y0, t_end, rtol=rel_tol, atol=abs_tol)
    else:
        solver = DOP853(
            _deriv,
            t0,
            y0,
            t_end,
            rtol=rel_tol,
            atol=abs_tol,
            max_step=max_step,
            first_step=min(max_step, t_end - t0),
        )
    n_steps = 0
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise QuenchIntegrationException(
                "Integration failed at t=%.6g after %d steps: %s"
                % (solver.t, n_steps, message)
            )
        n_steps += 1
        current = _from_internal(solver.y, solver.t)
        drift = max(drift, abs(current.invariant - 1.0))
        if samples is not None and sample_stride and (
            n_steps % sample_stride == 0 or solver.status == "finished"
        ):
            samples.append(_sample(current))
    debug.rabi_exec(
        "Evolved to t=%g in %d steps (%d evaluations), drift %.3g"
        % (t_end, n_steps, solver.nfev, drift)
    )
    return Trajectory(current, drift, samples, n_steps)


def residual_energy(
    state: BogoliubovState, g_f: float, ratio: float
) -> ResidualEnergy:
    """
    Energy above the instantaneous ground state at g_f, in units of omega0:

        E_r = |v|^2 - (g_f^2 / 4) |u + v|^2 - (sqrt(1 - g_f^2) - 1) / 2

    At g_f = 1 with a finite ratio the finite-frequency correction
    3 |u + v|^4 / (16 ratio) - (3 / 8) q^(-1/3) is added. The constant is the
    ground state value of the corrected energy so E_r vanishes on the adiabatic
    state. Values below METAFLOW_RABI_RESIDUAL_FLOOR are returned as 0 with
    underflow set.
    """
    g_f = check_coupling(g_f)
    if g_f > G_C:
        raise InvalidParameterException(
            "Residual energy is defined for g_f <= %g (got %r)" % (G_C, g_f)
        )
    norm = state.invariant
    if not norm > 0:
        raise InvalidParameterException(
            "State does not satisfy |u|^2 - |v|^2 > 0 (got %.12g)" % norm
        )
    scale = 1.0 / math.sqrt(norm)
    u, v = state.u * scale, state.v * scale
    s2 = abs(u + v) ** 2
    value = abs(v) ** 2 - g_f * g_f / 4.0 * s2 - (math.sqrt(1.0 - g_f * g_f) - 1.0) / 2.0
    uncorrected = False
    if not is_infinite(ratio):
        if g_f == G_C:
            value += 3.0 * s2 * s2 / (16.0 * ratio) - 0.375 * scaled_ratio(ratio) ** (
                -1.0 / 3.0
            )
        else:
            uncorrected = True
    floor = float(RABI_RESIDUAL_FLOOR)
    if value < floor:
        return ResidualEnergy(0.0, True, uncorrected)
    return ResidualEnergy(value, False, uncorrected)


def integrate(
    protocol: QuenchProtocol,
    rel_tol: Optional[float] = None,
    abs_tol: Optional[float] = None,
    sample_stride: Optional[int] = None,
    max_step: Optional[float] = None,
) -> QuenchResult:
    trajectory = evolve(
        BogoliubovState(1.0 + 0j, 0j, 0.0),
        protocol.coupling,
        protocol.ratio,
        protocol.tau_q,
        rel_tol=rel_tol,
        abs_tol=abs_tol,
        sample_stride=sample_stride,
        max_step=max_step,
    )
    residual = residual_energy(trajectory.final_state, protocol.g_f, protocol.ratio)
    return QuenchResult(
        E_r=residual.value,
        final_state=trajectory.final_state,
        invariant_drift=trajectory.invariant_drift,
        samples=trajectory.samples,
        underflow=residual.underflow,
        uncorrected_baseline=residual.uncorrected_baseline,
    )


def sweep_tauq(
    g_f: float,
    ratio: float,
    tauq_grid: Sequence[float],
    rel_tol: Optional[float] = None,
    abs_tol: Optional[float] = None,
) -> List[SweepPoint]:
    """
    One quench per quench time, in grid order. The grid must be ascending.
    Failures are raised with the index of the offending grid point.
    """
    grid = [float(x) for x in tauq_grid]
    if not grid:
        raise InvalidParameterException("Quench time grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterException("Quench time grid must be strictly ascending")
    points = []  # type: List[SweepPoint]
    for idx, tau_q in enumerate(grid):
        try:
            result = integrate(QuenchProtocol(g_f, tau_q, ratio), rel_tol, abs_tol)
        except QuenchIntegrationException as e:
            raise QuenchIntegrationException(e.message, grid_index=idx)
        points.append(
            SweepPoint(tau_q, result.E_r, result.invariant_drift, result.underflow)
        )
    return points
