from metaflow.exception import MetaflowException
from metaflow.metaflow_config_funcs import from_conf, get_validate_choice_fn


# Number of workers used to run independent grid points of a sweep. Set to 0 to use
# one worker per CPU.
RABI_WORKERS = from_conf("RABI_WORKERS", 0)

# Pool used to run grid points. Threads are enough when most of the time is spent in
# LAPACK; processes help for the quench integrations which are Python bound.
RABI_EXECUTOR = from_conf(
    "RABI_EXECUTOR", "thread", get_validate_choice_fn(["thread", "process"])
)

# Exact diagonalization: the Fock cutoff starts at max(RABI_ED_MIN_CUTOFF, heuristic)
# and doubles until the lowest energies move by less than RABI_ED_TOL * max(1, |E|).
# Above RABI_ED_MAX_CUTOFF the result is returned flagged as not converged.
RABI_ED_MIN_CUTOFF = from_conf("RABI_ED_MIN_CUTOFF", 64)
RABI_ED_MAX_CUTOFF = from_conf("RABI_ED_MAX_CUTOFF", 2**16)
RABI_ED_TOL = from_conf("RABI_ED_TOL", 1e-10)

# Blocks up to this dimension are solved with a dense symmetric solver; larger ones
# with the banded solver.
RABI_ED_DENSE_MAX_DIM = from_conf("RABI_ED_DENSE_MAX_DIM", 4096)

# Levels closer than this (in units of omega0) are reported as a doublet
RABI_ED_DEGENERACY_TOL = from_conf("RABI_ED_DEGENERACY_TOL", 1e-10)

RABI_VARIATIONAL_TOL = from_conf("RABI_VARIATIONAL_TOL", 1e-10)

# Default tolerances for the adaptive Runge-Kutta integration of the quench
RABI_QUENCH_RTOL = from_conf("RABI_QUENCH_RTOL", 1e-10)
RABI_QUENCH_ATOL = from_conf("RABI_QUENCH_ATOL", 1e-12)

# Residual energies below this value (units of omega0) are reported as 0 and flagged
RABI_RESIDUAL_FLOOR = from_conf("RABI_RESIDUAL_FLOOR", 1e-14)

# Quench times below this value (units of 1/omega0) belong to the sudden-quench
# plateau and are left out of exponent fits unless explicitly requested.
RABI_PLATEAU_TAU = from_conf("RABI_PLATEAU_TAU", 1.0)

# Half-width, in decades, of the windows used for local exponents
RABI_SLIDING_DELTA_LOG = from_conf("RABI_SLIDING_DELTA_LOG", 6.25e-2)


def _validate_positive(name, value):
    if float(value) <= 0:
        raise MetaflowException("%s must be strictly positive." % name)


RABI_OMEGA0 = from_conf("RABI_OMEGA0", 1.0, validate_fn=_validate_positive)

DEBUG_OPTIONS = ["rabi"]
