# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false

from __future__ import annotations

import math

from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from scipy.optimize import bisect
from scipy.stats import linregress

from metaflow.debug import debug
from metaflow.metaflow_config import (  # type: ignore
    RABI_PLATEAU_TAU,
    RABI_SLIDING_DELTA_LOG,
)

from .utils import FitException, InvalidParameterException

MIN_FIT_POINTS = 3

FREEZE_OUT_XTOL = 1e-12

Points = Sequence[Tuple[float, float]]


class PowerLawFit(NamedTuple):
    mu: float
    mu_stderr: float
    log_amplitude: float
    window: Tuple[float, float]
    r_squared: float
    n_points: int

    def predict(self, x: float) -> float:
        return 10.0 ** (self.log_amplitude + self.mu * math.log10(x))


class LocalExponent(NamedTuple):
    x_center: float
    mu: float
    mu_stderr: float
    n_points: int


class FreezeOut(NamedTuple):
    tau_q: float
    g_hat_numeric: float
    g_hat_asymptotic: float
    t_hat: float
    # The asymptotic freeze-out lies at or before the start of the ramp
    impulsive: bool


def _as_arrays(points: Points) -> Tuple[np.ndarray, np.ndarray]:
    if len(points) == 0:
        return np.zeros(0), np.zeros(0)
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitException("Points must be (x, y) pairs")
    return arr[:, 0], arr[:, 1]


def fit_loglog(
    points: Points, window: Optional[Tuple[float, float]] = None
) -> PowerLawFit:
    """
    Least-squares line through (log10 x, log10 y).

    Parameters
    ----------
    points : Sequence[Tuple[float, float]]
        Data; points outside the window are ignored
    window : Tuple[float, float], optional
        Only points with lo < x < hi are used. If None, all points are used and the
        reported window is the data range.

    Returns
    -------
    PowerLawFit
        Exponent mu with its standard error, intercept, window, r^2 and point count

    Raises
    ------
    FitException
        Fewer than three points in the window or nonpositive data
    """
    x, y = _as_arrays(points)
    if window is not None:
        lo, hi = sorted((float(window[0]), float(window[1])))
        if not lo < hi:
            raise FitException("Empty fit window [%g, %g]" % (lo, hi))
        mask = (x > lo) & (x < hi)
        x, y = x[mask], y[mask]
    if len(x) < MIN_FIT_POINTS:
        raise FitException(
            "A power-law fit needs at least %d points (got %d)"
            % (MIN_FIT_POINTS, len(x))
        )
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitException("Log-log fits need strictly positive, finite data")
    if window is None:
        lo, hi = float(x.min()), float(x.max())
        if not lo < hi:
            raise FitException("All abscissae are equal (%g)" % lo)
    res = linregress(np.log10(x), np.log10(y))
    return PowerLawFit(
        mu=float(res.slope),
        mu_stderr=float(res.stderr),
        log_amplitude=float(res.intercept),
        window=(lo, hi),
        r_squared=float(res.rvalue) ** 2,
        n_points=len(x),
    )


def sliding_window_exponents(
    points: Points, delta_log: Optional[float] = None
) -> List[LocalExponent]:
    """
    Local exponents over [x / D, x * D] with log10 D = delta_log, centered on each
    data abscissa. Centers with fewer than three points inside are skipped.
    """
    if delta_log is None:
        delta_log = float(RABI_SLIDING_DELTA_LOG)
    if not delta_log > 0:
        raise InvalidParameterException(
            "Window half-width must be > 0 (got %g)" % delta_log
        )
    factor = 10.0**delta_log
    x, _ = _as_arrays(points)
    exponents = []  # type: List[LocalExponent]
    skipped = 0
    for center in sorted(set(x.tolist())):
        lo, hi = center / factor, center * factor
        inside = int(np.count_nonzero((x > lo) & (x < hi)))
        if inside < MIN_FIT_POINTS:
            skipped += 1
            continue
        fit = fit_loglog(points, (lo, hi))
        exponents.append(LocalExponent(center, fit.mu, fit.mu_stderr, fit.n_points))
    debug.rabi_exec(
        "Sliding windows: %d fitted, %d skipped (half-width %g decades)"
        % (len(exponents), skipped, delta_log)
    )
    return exponents


def decade_window_fits(
    points: Points, decades: Optional[Sequence[int]] = None
) -> List[PowerLawFit]:
    """
    Fixed-window fits over [10^k, 10^(k+1)]. Without explicit decades, every decade
    touched by the data is tried; windows with too few points are skipped.
    """
    x, _ = _as_arrays(points)
    if decades is None:
        positive = x[x > 0]
        if len(positive) == 0:
            return []
        decades = list(
            range(
                int(math.floor(math.log10(positive.min()))),
                int(math.floor(math.log10(positive.max()))) + 1,
            )
        )
    fits = []  # type: List[PowerLawFit]
    for k in decades:
        lo, hi = 10.0**k, 10.0 ** (k + 1)
        if int(np.count_nonzero((x > lo) & (x < hi))) < MIN_FIT_POINTS:
            debug.rabi_exec("Decade [1e%d, 1e%d] has too few points" % (k, k + 1))
            continue
        fits.append(fit_loglog(points, (lo, hi)))
    return fits


def exclude_plateau(
    points: Points, tau_min: Optional[float] = None
) -> List[Tuple[float, float]]:
    if tau_min is None:
        tau_min = float(RABI_PLATEAU_TAU)
    return [(float(x), float(y)) for x, y in points if x >= tau_min]


def freeze_out_asymptotic(tau_q: float, omega0: float = 1.0) -> float:
    return 1.0 - (4.0 * math.sqrt(2.0) * omega0 * tau_q) ** (-2.0 / 3.0)


def freeze_out(tau_q: float, omega0: float = 1.0) -> FreezeOut:
    """
    Coupling at which a linear ramp to g_c = 1 stops following the ground state.

    With eta = 2 omega0 sqrt(1 - g^2) and g = t / tau_q, eta^2 = |d eta / dt| reads
    2 omega0 tau_q (1 - g^2)^(3/2) = g. It is solved for delta = 1 - g, which is
    first bracketed on a decade grid and then bisected to 1e-12.
    """
    tau_q = float(tau_q)
    if not tau_q > 0 or math.isinf(tau_q):
        raise InvalidParameterException(
            "Quench time must be finite and > 0 (got %r)" % tau_q
        )
    tau = omega0 * tau_q

    def _balance(delta: float) -> float:
        return 2.0 * tau * (delta * (2.0 - delta)) ** 1.5 - (1.0 - delta)

    hi = 1.0
    lo = 0.1
    while _balance(lo) > 0:
        hi, lo = lo, lo / 10.0
        if lo < 1e-300:
            raise InvalidParameterException(
                "No freeze-out bracket found for tau_q=%g" % tau_q
            )
    delta = bisect(_balance, lo, hi, xtol=FREEZE_OUT_XTOL)
    g_hat = 1.0 - float(delta)
    g_asym = freeze_out_asymptotic(tau_q, omega0)
    debug.rabi_exec(
        "Freeze-out for tau_q=%g: bracket [%g, %g], g_hat=%.15g (asymptotic %.15g)"
        % (tau_q, lo, hi, g_hat, g_asym)
    )
    return FreezeOut(
        tau_q=tau_q,
        g_hat_numeric=g_hat,
        g_hat_asymptotic=g_asym,
        t_hat=g_hat * tau_q,
        impulsive=g_asym <= 0,
    )


def kzm_predicted_exponent(znu: float) -> float:
    znu = float(znu)
    if not znu > 0:
        raise InvalidParameterException("z nu must be > 0 (got %r)" % znu)
    if math.isinf(znu):
        return -1.0
    return -znu / (znu + 1.0)
