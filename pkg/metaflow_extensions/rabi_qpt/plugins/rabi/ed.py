# pyright: strict, reportTypeCommentUsage=false, reportMissingTypeStubs=false

from __future__ import annotations

import math

from enum import Enum
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from scipy import sparse

from metaflow.debug import debug
from metaflow.metaflow_config import (  # type: ignore
    RABI_ED_DEGENERACY_TOL,
    RABI_ED_MAX_CUTOFF,
    RABI_ED_MIN_CUTOFF,
    RABI_ED_TOL,
)

from .effective import ModelParams
from .eigensolvers import EigenSolver, bands_to_dense
from .utils import (
    G_C,
    InvalidParameterException,
    check_coupling,
    check_finite_ratio,
    scaled_ratio,
)

# Smallest cutoff accepted by FockBasis
MIN_CUTOFF = 8

# Largest coupling accepted by the single-mode quartic Hamiltonian
QUARTIC_MAX_G = 1.05

# Normalization check on eigenvectors passed to observables
NORM_TOL = 1e-8


class FockBasis(object):
    """
    Truncated Fock basis |0>, ..., |cutoff>, optionally tensored with the spin.

    With the spin, the full basis index of |m>|s> is 2 * m + s with s = 0 for the
    spin down and s = 1 for the spin up (Fock number ascending, spin down first).
    """

    def __init__(self, cutoff: int, with_spin: bool = True):
        cutoff = int(cutoff)
        if cutoff < MIN_CUTOFF:
            raise InvalidParameterException(
                "Fock cutoff must be >= %d (got %d)" % (MIN_CUTOFF, cutoff)
            )
        self._cutoff = cutoff
        self._with_spin = with_spin

    @property
    def cutoff(self) -> int:
        return self._cutoff

    @property
    def with_spin(self) -> bool:
        return self._with_spin

    @property
    def dim(self) -> int:
        return (self._cutoff + 1) * (2 if self._with_spin else 1)

    def index(self, m: int, s: int = 0) -> int:
        if self._with_spin:
            return 2 * m + s
        return m

    def __repr__(self) -> str:
        return "FockBasis(cutoff=%d, with_spin=%s)" % (self._cutoff, self._with_spin)


class ParityBlock(Enum):
    EVEN = 1
    ODD = -1

    def spin(self, j: int) -> int:
        # Spin of the j-th element |j>|s> of the block chain: (-1)^(j + s) = parity
        if self is ParityBlock.EVEN:
            return j % 2
        return (j + 1) % 2


class EDState(NamedTuple):
    energy: float
    n_phot: float
    x_mean: float
    dx: float
    dp: float
    parity: float
    block: Optional[ParityBlock]
    doublet: bool


class EDResult(NamedTuple):
    energies: np.ndarray
    states: List[EDState]
    cutoff_used: int
    converged: bool

    @property
    def ground(self) -> EDState:
        return self.states[0]

    @property
    def gap(self) -> float:
        if len(self.energies) < 2:
            raise InvalidParameterException("The gap needs at least two levels")
        return float(self.energies[1] - self.energies[0])


class Observables(NamedTuple):
    n_phot: float
    x_mean: float
    dx: float
    dp: float
    parity: float


class CriticalCorrections(NamedTuple):
    gap: float
    dx: float
    dp: float
    n_c: float
    e_G_corr: float


def block_bands(params: ModelParams, cutoff: int, block: ParityBlock) -> np.ndarray:
    """
    Lower banded form of one parity block of the Rabi Hamiltonian (units of omega0).

    The block is the chain |j>|s_j>, j = 0..cutoff, with s_j fixed by the parity.
    Consecutive elements are coupled by -lambda sqrt(j + 1) so the block is
    tridiagonal.
    """
    ratio = check_finite_ratio(params.ratio, "Exact diagonalization")
    lam = params.g * math.sqrt(ratio) / 2.0
    j = np.arange(cutoff + 1)
    spins = np.array([block.spin(x) for x in j])
    bands = np.zeros((2, cutoff + 1))
    bands[0] = j + ratio / 2.0 * (2 * spins - 1)
    bands[1, :cutoff] = -lam * np.sqrt(j[:cutoff] + 1.0)
    return bands


def build_rabi_matrix(
    params: ModelParams, basis: FockBasis, block: Optional[ParityBlock] = None
) -> np.ndarray:
    if not basis.with_spin:
        raise InvalidParameterException("The Rabi Hamiltonian needs a spin basis")
    if block is not None:
        return bands_to_dense(block_bands(params, basis.cutoff, block))

    ratio = check_finite_ratio(params.ratio, "Exact diagonalization")
    lam = params.g * math.sqrt(ratio) / 2.0
    n = basis.cutoff
    mat = np.zeros((basis.dim, basis.dim))
    for m in range(n + 1):
        for s in (0, 1):
            i = basis.index(m, s)
            mat[i, i] = m + ratio / 2.0 * (2 * s - 1)
            if m < n:
                other = basis.index(m + 1, 1 - s)
                mat[i, other] = mat[other, i] = -lam * math.sqrt(m + 1.0)
    return mat


def block_to_full(vector: np.ndarray, block: ParityBlock) -> np.ndarray:
    full = np.zeros((vector.shape[0], 2), dtype=vector.dtype)
    for j, c in enumerate(vector):
        full[j, block.spin(j)] = c
    return full.reshape(-1)


def observables(
    params: ModelParams,
    eigenvector: np.ndarray,
    basis: FockBasis,
    block: Optional[ParityBlock] = None,
) -> Observables:
    """
    Photon number, field quadratures and parity of a state.

    Parameters
    ----------
    params : ModelParams
        Model the state belongs to (kept for symmetry with the other calls)
    eigenvector : np.ndarray
        Amplitudes in the full basis, or in the block chain when block is given
    basis : FockBasis
        Basis the amplitudes are expressed in
    block : ParityBlock, optional
        Parity block the vector lives in

    Returns
    -------
    Observables
        <a^dag a>, <x>, dx, dp for x = a + a^dag and p = i(a^dag - a), and <Pi>
    """
    vec = np.asarray(eigenvector)
    if block is not None:
        vec = block_to_full(vec, block)
    if vec.shape[0] != basis.dim:
        raise InvalidParameterException(
            "Vector of size %d does not match basis dimension %d"
            % (vec.shape[0], basis.dim)
        )
    norm = float(np.vdot(vec, vec).real)
    if abs(norm - 1.0) > NORM_TOL:
        raise InvalidParameterException(
            "State is not normalized (norm %.12g)" % norm
        )

    # amps[m, s]
    amps = vec.reshape(basis.cutoff + 1, -1)
    m = np.arange(basis.cutoff + 1, dtype=float)
    probs = (np.abs(amps) ** 2).sum(axis=1)
    n_phot = float(np.dot(m, probs))
    a1 = np.sum(np.sqrt(m[1:])[:, None] * np.conj(amps[:-1]) * amps[1:])
    a2 = np.sum(np.sqrt(m[1:-1] * m[2:])[:, None] * np.conj(amps[:-2]) * amps[2:])

    x_mean = 2.0 * float(np.real(a1))
    p_mean = 2.0 * float(np.imag(a1))
    x2 = 2.0 * float(np.real(a2)) + 2.0 * n_phot + 1.0
    p2 = -2.0 * float(np.real(a2)) + 2.0 * n_phot + 1.0

    signs = np.where(np.arange(basis.cutoff + 1) % 2 == 0, 1.0, -1.0)
    weights = np.abs(amps) ** 2
    if basis.with_spin:
        parity = float(np.dot(signs, weights[:, 0]) - np.dot(signs, weights[:, 1]))
    else:
        parity = float(np.dot(signs, weights[:, 0]))
    return Observables(
        n_phot=n_phot,
        x_mean=x_mean,
        dx=math.sqrt(max(x2 - x_mean * x_mean, 0.0)),
        dp=math.sqrt(max(p2 - p_mean * p_mean, 0.0)),
        parity=parity,
    )


def initial_cutoff(params: ModelParams, min_cutoff: Optional[int] = None) -> int:
    """
    Starting cutoff max(min_cutoff, ceil(4 (alpha^2 + dx^2))) with alpha and dx
    estimated from the effective model. dx^2 is capped by its finite-frequency
    value q^(1/3) which is what bounds it near g = 1.
    """
    if min_cutoff is None:
        min_cutoff = int(RABI_ED_MIN_CUTOFF)
    ratio = check_finite_ratio(params.ratio, "Cutoff estimation")
    g = params.g
    dx2_cap = scaled_ratio(ratio) ** (1.0 / 3.0)
    alpha2 = 0.0
    if g < G_C:
        dx2 = min((1.0 - g * g) ** -0.5, dx2_cap)
    elif g == G_C:
        dx2 = dx2_cap
    else:
        dx2 = min((1.0 - g**-4) ** -0.5, dx2_cap)
        alpha2 = ratio * (g**4 - 1.0) / (4.0 * g * g)
    return max(min_cutoff, MIN_CUTOFF, int(math.ceil(4.0 * (alpha2 + dx2))))


def _flag_doublets(energies: np.ndarray) -> List[bool]:
    tol = float(RABI_ED_DEGENERACY_TOL)
    flags = [False] * len(energies)
    for i in range(len(energies) - 1):
        if energies[i + 1] - energies[i] < tol:
            flags[i] = flags[i + 1] = True
    return flags


def _converge(
    what: str,
    solve_at,  # Callable[[int], Tuple[np.ndarray, List[EDState]]]
    start: int,
    tol: Optional[float],
    max_cutoff: Optional[int],
) -> EDResult:
    if tol is None:
        tol = float(RABI_ED_TOL)
    if max_cutoff is None:
        max_cutoff = int(RABI_ED_MAX_CUTOFF)
    cutoff = min(start, max_cutoff)
    previous = None  # type: Optional[np.ndarray]
    while True:
        energies, states = solve_at(cutoff)
        if previous is not None:
            scale = np.maximum(1.0, np.abs(energies))
            delta = np.abs(energies - previous)
            if np.all(delta < tol * scale):
                debug.rabi_exec(
                    "%s converged at cutoff %d (max change %.3g)"
                    % (what, cutoff, float(delta.max()))
                )
                return EDResult(energies, states, cutoff, True)
        if 2 * cutoff > max_cutoff:
            debug.rabi_exec(
                "%s not converged: cutoff %d reached the cap %d"
                % (what, cutoff, max_cutoff)
            )
            return EDResult(energies, states, cutoff, False)
        debug.rabi_exec("%s: doubling cutoff %d -> %d" % (what, cutoff, 2 * cutoff))
        previous = energies
        cutoff *= 2


def diagonalize(
    params: ModelParams,
    k: int = 2,
    tol: Optional[float] = None,
    solver: Optional[str] = None,
    max_cutoff: Optional[int] = None,
) -> EDResult:
    """
    Lowest k levels of the Rabi Hamiltonian with their observables.

    Both parity blocks are diagonalized and their k lowest levels merged. The cutoff
    starts at max(initial_cutoff(params), k) and doubles until the k lowest
    energies change by less than tol * max(1, |E|).

    Parameters
    ----------
    params : ModelParams
        Model with a finite ratio
    k : int, default 2
        Number of levels
    tol : float, optional
        Relative convergence tolerance, by default METAFLOW_RABI_ED_TOL
    solver : str, optional
        "dense" or "banded"; by default chosen from the block dimension
    max_cutoff : int, optional
        Hard cap on the cutoff, by default METAFLOW_RABI_ED_MAX_CUTOFF

    Returns
    -------
    EDResult
        converged is False if the cap was reached first
    """
    check_finite_ratio(params.ratio, "Exact diagonalization")
    if k < 1:
        raise InvalidParameterException("Number of levels must be >= 1 (got %d)" % k)

    def _solve_at(cutoff: int) -> Tuple[np.ndarray, List[EDState]]:
        basis = FockBasis(cutoff)
        found = []  # type: List[Tuple[float, np.ndarray, ParityBlock]]
        for block in ParityBlock:
            bands = block_bands(params, cutoff, block)
            vals, vecs = EigenSolver.for_dimension(cutoff + 1, solver).solve(bands, k)
            found.extend(
                (float(vals[i]), vecs[:, i], block) for i in range(len(vals))
            )
        found.sort(key=lambda x: x[0])
        found = found[:k]
        energies = np.array([x[0] for x in found])
        doublets = _flag_doublets(energies)
        states = []  # type: List[EDState]
        for (energy, vec, block), doublet in zip(found, doublets):
            obs = observables(params, vec, basis, block)
            states.append(
                EDState(
                    energy=energy,
                    n_phot=obs.n_phot,
                    x_mean=obs.x_mean,
                    dx=obs.dx,
                    dp=obs.dp,
                    parity=obs.parity,
                    block=block,
                    doublet=doublet,
                )
            )
        return energies, states

    # Each block holds cutoff + 1 levels
    start = max(initial_cutoff(params), k)
    return _converge("ED of %r" % params, _solve_at, start, tol, max_cutoff)


def quartic_bands(g: float, ratio: float, cutoff: int) -> np.ndarray:
    """
    Lower banded form (bandwidth 4) of

        a^dag a - (g^2 / 4) x^2 + (g^4 / (16 ratio)) x^4 + g^2 / (4 ratio)

    in units of omega0 with x = a + a^dag. x^2 and x^4 are obtained by squaring the
    matrix of x built at cutoff + 4 and truncating afterwards, so the elements kept
    are exact.
    """
    size = cutoff + 5
    off = np.sqrt(np.arange(1, size, dtype=float))
    x = sparse.diags([off, off], [-1, 1], format="csr")
    x2 = x @ x
    x4 = x2 @ x2
    number = sparse.diags(np.arange(size, dtype=float), 0, format="csr")
    ham = (
        number
        - g * g / 4.0 * x2
        + g**4 / (16.0 * ratio) * x4
        + g * g / (4.0 * ratio) * sparse.identity(size, format="csr")
    )
    ham = ham.tocsr()[: cutoff + 1, : cutoff + 1]
    bands = np.zeros((5, cutoff + 1))
    for offset in range(5):
        bands[offset, : cutoff + 1 - offset] = ham.diagonal(-offset)
    return bands


def diagonalize_quartic(
    g: float,
    ratio: float,
    k: int = 2,
    tol: Optional[float] = None,
    solver: Optional[str] = None,
    max_cutoff: Optional[int] = None,
) -> EDResult:
    g = check_coupling(g)
    if g > QUARTIC_MAX_G:
        raise InvalidParameterException(
            "The quartic Hamiltonian is only valid for g <= %g (got %r)"
            % (QUARTIC_MAX_G, g)
        )
    ratio = check_finite_ratio(ratio, "Quartic diagonalization")
    if k < 1:
        raise InvalidParameterException("Number of levels must be >= 1 (got %d)" % k)
    params = ModelParams(g, ratio)

    def _solve_at(cutoff: int) -> Tuple[np.ndarray, List[EDState]]:
        basis = FockBasis(cutoff, with_spin=False)
        bands = quartic_bands(g, ratio, cutoff)
        vals, vecs = EigenSolver.for_dimension(cutoff + 1, solver).solve(bands, k)
        doublets = _flag_doublets(vals)
        states = []  # type: List[EDState]
        for i in range(len(vals)):
            obs = observables(params, vecs[:, i], basis)
            states.append(
                EDState(
                    energy=float(vals[i]),
                    n_phot=obs.n_phot,
                    x_mean=obs.x_mean,
                    dx=obs.dx,
                    dp=obs.dp,
                    parity=obs.parity,
                    block=None,
                    doublet=doublets[i],
                )
            )
        return np.asarray(vals, dtype=float), states

    start = max(initial_cutoff(params), k - 1)
    return _converge("Quartic ED of %r" % params, _solve_at, start, tol, max_cutoff)


def critical_corrections(
    result: EDResult, params: ModelParams, quartic: bool = False
) -> CriticalCorrections:
    """
    Finite-frequency observables of an exact spectrum: the gap, the ground state
    dx and dp, n_c = <a^dag a> / ratio and the rescaled ground energy measured from the
    Omega -> infinity critical value, (E_0 + (ratio + 1) / 2) / ratio.

    Spectra of the quartic Hamiltonian (quartic=True) have no -Omega / 2 offset.
    The gap is NaN for a single level.
    """
    ratio = check_finite_ratio(params.ratio, "Critical corrections")
    ground = result.ground
    offset = 0.5 if quartic else (ratio + 1.0) / 2.0
    return CriticalCorrections(
        gap=result.gap if len(result.energies) > 1 else math.nan,
        dx=ground.dx,
        dp=ground.dp,
        n_c=ground.n_phot / ratio,
        e_G_corr=(ground.energy + offset) / ratio,
    )
