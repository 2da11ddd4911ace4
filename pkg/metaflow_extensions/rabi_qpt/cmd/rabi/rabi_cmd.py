import math
import time

from itertools import product
from typing import Any, Dict, List, Optional, Tuple

from metaflow._vendor import click

from metaflow.cli import echo_always, echo_dev_null
from metaflow.metaflow_config import RABI_SLIDING_DELTA_LOG  # type: ignore

from metaflow_extensions.rabi_qpt.plugins.rabi.ed import (
    critical_corrections,
    diagonalize,
    diagonalize_quartic,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.effective import (
    ModelParams,
    Phase,
    d2_ground_energy,
    effective_observables,
    finite_freq_predictions,
    ground_energy_rescaled,
    order_parameter,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.quench import QuenchProtocol, integrate
from metaflow_extensions.rabi_qpt.plugins.rabi.scaling import (
    decade_window_fits,
    exclude_plateau,
    fit_loglog,
    freeze_out,
    sliding_window_exponents,
)
from metaflow_extensions.rabi_qpt.plugins.rabi.utils import (
    RabiConfigException,
    RabiException,
    format_ratio,
    is_infinite,
    plural_marker,
)
from metaflow_extensions.rabi_qpt.toplevel.rabiqpt_version import rabiqpt_version

from .utils import (
    ResultTable,
    RunConfig,
    parse_config,
    read_table,
    run_grid,
    write_table,
)

EFFECTIVE_COLUMNS = [
    ("g", ""),
    ("ratio", ""),
    ("phase", ""),
    ("epsilon", "omega0"),
    ("r_squeeze", ""),
    ("alpha", ""),
    ("alpha_rescaled", "flag"),
    ("e_G", "omega0"),
    ("d2_e_G", "omega0"),
    ("n_c", ""),
    ("dx", ""),
    ("dp", ""),
    ("eps_gc", "omega0"),
    ("dx_gc", ""),
    ("dp_gc", ""),
    ("eG_corr", "omega0"),
    ("nc_corr", ""),
    ("error", ""),
]

QUENCH_COLUMNS = [
    ("g_f", ""),
    ("ratio", ""),
    ("tau_q", "1/omega0"),
    ("E_r", "omega0"),
    ("invariant_drift", ""),
    ("underflow_flag", "flag"),
    ("uncorrected_flag", "flag"),
    ("error", ""),
]

SWEEP_COLUMNS = [
    ("tau_q", "1/omega0"),
    ("E_r", "omega0"),
    ("invariant_drift", ""),
    ("underflow_flag", "flag"),
    ("error", ""),
]

FIT_COLUMNS = [
    ("kind", ""),
    ("x_center", ""),
    ("x_lo", ""),
    ("x_hi", ""),
    ("mu", ""),
    ("mu_stderr", ""),
    ("log_amplitude", ""),
    ("r_squared", ""),
    ("n_points", ""),
]

KZM_COLUMNS = [
    ("tau_q", "1/omega0"),
    ("g_hat_numeric", ""),
    ("g_hat_asymptotic", ""),
    ("t_hat", "1/omega0"),
    ("impulsive_flag", "flag"),
    ("error", ""),
]


def ed_columns(levels: int) -> List[Tuple[str, str]]:
    return (
        [("g", ""), ("ratio", ""), ("cutoff", ""), ("converged", "flag")]
        + [("E_%d" % i, "omega0") for i in range(levels)]
        + [
            ("gap", "omega0"),
            ("n_phot", ""),
            ("x_mean", ""),
            ("dx", ""),
            ("dp", ""),
            ("parity", ""),
            ("n_c", ""),
            ("e_G_corr", "omega0"),
            ("error", ""),
        ]
    )


class CommandObj:
    def __init__(self):
        pass


def _failed_row(prefix: List[Any], width: int, error: str) -> List[Any]:
    return prefix + [math.nan] * (width - len(prefix) - 1) + [error]


# Grid point functions live at module level so that process pools can pickle them.
# Each returns (row, error) with the error also recorded in the row.


def _effective_point(
    g: float, ratio: float, omega0: float
) -> Tuple[List[Any], Optional[str]]:
    try:
        params = ModelParams(g, ratio)
        if params.phase is Phase.CRITICAL:
            # Squeezing and dx diverge, dp vanishes, d2 e_G is undefined
            row = [
                g,
                ratio,
                params.phase.value,
                0.0,
                math.inf,
                0.0,
                False,
                ground_energy_rescaled(g) * omega0,
                math.nan,
                order_parameter(g),
                math.inf,
                0.0,
            ]  # type: List[Any]
        else:
            obs = effective_observables(params)
            row = [
                g,
                ratio,
                obs.phase.value,
                obs.epsilon * omega0,
                obs.r_squeeze,
                obs.alpha,
                obs.alpha_rescaled,
                obs.e_G * omega0,
                d2_ground_energy(g) * omega0,
                obs.n_c,
                obs.dx,
                obs.dp,
            ]
        if is_infinite(ratio):
            row.extend([math.nan] * 5)
        else:
            pred = finite_freq_predictions(ratio)
            row.extend(
                [
                    pred.eps_gc * omega0,
                    pred.dx_gc,
                    pred.dp_gc,
                    pred.eG_corr * omega0,
                    pred.nc_corr,
                ]
            )
        return row + [None], None
    except RabiException as e:
        return _failed_row([g, ratio], len(EFFECTIVE_COLUMNS), e.message), e.message


def _ed_point(
    g: float,
    ratio: float,
    levels: int,
    quartic: bool,
    tol: Optional[float],
    solver: Optional[str],
    omega0: float,
) -> Tuple[List[Any], Optional[str]]:
    width = len(ed_columns(levels))
    try:
        params = ModelParams(g, ratio)
        if quartic:
            result = diagonalize_quartic(g, ratio, levels, tol=tol, solver=solver)
        else:
            result = diagonalize(params, levels, tol=tol, solver=solver)
        energies = [float(e) * omega0 for e in result.energies]
        energies += [math.nan] * (levels - len(energies))
        ground = result.ground
        corr = critical_corrections(result, params, quartic=quartic)
        error = None
        if not result.converged:
            error = "Not converged at cutoff %d" % result.cutoff_used
        row = (
            [g, ratio, result.cutoff_used, result.converged]
            + energies
            + [
                corr.gap * omega0,
                ground.n_phot,
                ground.x_mean,
                ground.dx,
                ground.dp,
                ground.parity,
                corr.n_c,
                corr.e_G_corr * omega0,
                error,
            ]
        )
        return row, error
    except RabiException as e:
        return _failed_row([g, ratio], width, e.message), e.message


def _quench_point(
    g_f: float,
    ratio: float,
    tau_q: float,
    rtol: Optional[float],
    atol: Optional[float],
) -> Tuple[Optional[Tuple[float, float, bool, bool]], Optional[str]]:
    try:
        result = integrate(QuenchProtocol(g_f, tau_q, ratio), rtol, atol)
        return (
            result.E_r,
            result.invariant_drift,
            result.underflow,
            result.uncorrected_baseline,
        ), None
    except RabiException as e:
        return None, e.message


def _kzm_point(tau_q: float) -> Tuple[List[Any], Optional[str]]:
    try:
        fo = freeze_out(tau_q)
        return [
            tau_q,
            fo.g_hat_numeric,
            fo.g_hat_asymptotic,
            fo.t_hat,
            fo.impulsive,
            None,
        ], None
    except RabiException as e:
        return _failed_row([tau_q], len(KZM_COLUMNS), e.message), e.message


def _run_points(obj: Any, config: RunConfig, func: Any, args_list: List[Tuple[Any, ...]]):
    obj.echo(
        "    Computing %d grid point%s ..."
        % (len(args_list), plural_marker(len(args_list))),
        nl=False,
    )
    start = time.time()
    results = run_grid(func, args_list, config.workers, config.executor)
    delta_time = int(time.time() - start)
    obj.echo(" done in %d second%s." % (delta_time, plural_marker(delta_time)))
    return results


def build_effective(obj: Any, config: RunConfig) -> ResultTable:
    assert config.g and config.ratio
    table = ResultTable(EFFECTIVE_COLUMNS)
    args_list = [
        (g, ratio, config.omega0)
        for g, ratio in product(config.g.values(), config.ratio.values())
    ]
    for row, _ in _run_points(obj, config, _effective_point, args_list):
        table.add_row(row)
    return table


def build_ed(obj: Any, config: RunConfig) -> ResultTable:
    assert config.g and config.ratio
    ratios = config.ratio.values()
    if any(is_infinite(r) for r in ratios):
        raise RabiConfigException(
            "Exact diagonalization needs a finite --ratio (got '%s')"
            % format_ratio(math.inf)
        )
    table = ResultTable(ed_columns(config.levels))
    args_list = [
        (g, ratio, config.levels, config.quartic, config.tol, config.solver, config.omega0)
        for g, ratio in product(config.g.values(), ratios)
    ]
    for row, _ in _run_points(obj, config, _ed_point, args_list):
        table.add_row(row)
    return table


def build_quench(obj: Any, config: RunConfig) -> ResultTable:
    assert config.gf is not None and config.ratio and config.tauq
    sweep = config.command == "sweep"
    table = ResultTable(SWEEP_COLUMNS if sweep else QUENCH_COLUMNS)
    args_list = [
        (config.gf, ratio, tau_q, config.rtol, config.atol)
        for ratio, tau_q in product(config.ratio.values(), config.tauq.values())
    ]
    results = _run_points(obj, config, _quench_point, args_list)
    for args, (values, error) in zip(args_list, results):
        _, ratio, tau_q, _, _ = args
        if values is None:
            e_r, drift, underflow, uncorrected = math.nan, math.nan, None, None
        else:
            e_r, drift, underflow, uncorrected = values
            e_r *= config.omega0
        if sweep:
            table.add_row([tau_q, e_r, drift, underflow, error])
        else:
            table.add_row(
                [config.gf, ratio, tau_q, e_r, drift, underflow, uncorrected, error]
            )
    return table


def build_kzm(obj: Any, config: RunConfig) -> ResultTable:
    assert config.tauq
    table = ResultTable(KZM_COLUMNS)
    args_list = [(tau_q,) for tau_q in config.tauq.values()]
    for row, _ in _run_points(obj, config, _kzm_point, args_list):
        table.add_row(row)
    return table


def build_fit(obj: Any, config: RunConfig) -> ResultTable:
    assert config.input
    columns, rows = read_table(config.input)
    for name in (config.x_column, config.y_column):
        if name not in columns:
            raise RabiConfigException(
                "Column '%s' not found in '%s' (columns: %s)"
                % (name, config.input, ", ".join(columns))
            )
    points = []  # type: List[Tuple[float, float]]
    dropped = 0
    for row in rows:
        if row.get("error") or row.get("underflow_flag") == "1":
            dropped += 1
            continue
        try:
            points.append((float(row[config.x_column]), float(row[config.y_column])))
        except ValueError:
            raise RabiConfigException(
                "Malformed number in '%s': %s" % (config.input, row)
            )
    if config.x_column == "tau_q" and not config.include_plateau:
        kept = exclude_plateau(points)
        dropped += len(points) - len(kept)
        points = kept
    obj.echo(
        "    Fitting %d point%s (%d dropped)"
        % (len(points), plural_marker(len(points)), dropped)
    )

    table = ResultTable(FIT_COLUMNS)
    fit = fit_loglog(points, config.window)
    table.add_row(
        [
            "global",
            math.nan,
            fit.window[0],
            fit.window[1],
            fit.mu,
            fit.mu_stderr,
            fit.log_amplitude,
            fit.r_squared,
            fit.n_points,
        ]
    )
    if config.decades:
        for fit in decade_window_fits(points):
            table.add_row(
                [
                    "decade",
                    math.nan,
                    fit.window[0],
                    fit.window[1],
                    fit.mu,
                    fit.mu_stderr,
                    fit.log_amplitude,
                    fit.r_squared,
                    fit.n_points,
                ]
            )
    if config.sliding:
        delta_log = config.delta_log
        if delta_log is None:
            delta_log = float(RABI_SLIDING_DELTA_LOG)
        factor = 10.0**delta_log
        for local in sliding_window_exponents(points, delta_log):
            lo, hi = local.x_center / factor, local.x_center * factor
            table.add_row(
                [
                    "sliding",
                    local.x_center,
                    lo,
                    hi,
                    local.mu,
                    local.mu_stderr,
                    math.nan,
                    math.nan,
                    local.n_points,
                ]
            )
    return table


BUILDERS = {
    "effective": build_effective,
    "ed": build_ed,
    "quench": build_quench,
    "sweep": build_quench,
    "fit": build_fit,
    "kzm": build_kzm,
}


def _execute(ctx: Any, command: str, flags: Dict[str, Any]):
    obj = ctx.obj
    start = time.time()
    try:
        merged = dict(flags)
        merged.update(obj.group_flags)
        config = parse_config(command, merged, obj.config_file)
        table = BUILDERS[command](obj, config)
    except RabiConfigException as e:
        raise click.UsageError(e.message)
    except RabiException as e:
        obj.echo_always("%s %s" % (e.headline, e.message), err=True)
        ctx.exit(3)
        return
    delta_time = time.time() - start

    table.metadata["rabiqpt_version"] = rabiqpt_version
    table.metadata["command"] = command
    table.metadata["config"] = "; ".join(config.echo_lines())
    table.metadata["wall_time"] = "%.3f s" % delta_time

    if config.output:
        write_table(table, config)
        obj.echo("    Results written to '%s'" % config.output)
    else:
        click.echo(table.render(), nl=False)

    if "error" in table.column_names:
        failures = [r for r in table.rows if r[-1]]
        if failures:
            obj.echo_always(
                "%d of %d grid point%s failed; first error: %s"
                % (
                    len(failures),
                    len(table.rows),
                    plural_marker(len(table.rows)),
                    failures[0][-1],
                ),
                err=True,
            )
            ctx.exit(3)


def _flag(value: bool) -> Optional[bool]:
    # Boolean flags only override the config file when given
    return True if value else None


@click.group()
@click.pass_context
def cli(ctx):
    pass


@cli.group(help="Rabi model phase transition: closed forms, ED, quenches and fits.")
@click.option(
    "--quiet/--no-quiet",
    show_default=True,
    default=False,
    help="Suppress unnecessary messages",
)
@click.option(
    "--workers",
    default=None,
    type=int,
    help="Number of workers for grid points (0 for one per CPU). "
    "Defaults to METAFLOW_RABI_WORKERS",
)
@click.option(
    "--executor",
    default=None,
    type=click.Choice(["thread", "process"]),
    help="Pool used to run grid points. Defaults to METAFLOW_RABI_EXECUTOR",
)
@click.option(
    "--config",
    "config_file",
    default=None,
    type=click.Path(exists=True, readable=True, dir_okay=False, resolve_path=True),
    help="Flat 'key = value' file with default values for the options; "
    "options given on the command line take precedence",
)
@click.option(
    "--omega0",
    default=None,
    type=str,
    help="Energy unit used to rescale energies in the output (computations "
    "always use omega0 = 1). Defaults to METAFLOW_RABI_OMEGA0",
)
@click.pass_context
def rabi(
    ctx: Any,
    quiet: bool,
    workers: Optional[int],
    executor: Optional[str],
    config_file: Optional[str],
    omega0: Optional[str],
):
    if quiet:
        echo = echo_dev_null
    else:
        echo = echo_always

    obj = CommandObj()
    obj.quiet = quiet
    obj.echo = echo
    obj.echo_always = echo_always
    obj.config_file = config_file
    obj.group_flags = {
        k: v
        for k, v in (("workers", workers), ("executor", executor), ("omega0", omega0))
        if v is not None
    }
    ctx.obj = obj


def output_option(func):
    return click.option(
        "--output",
        default=None,
        type=click.Path(dir_okay=False, writable=True),
        help="Write the CSV here (plus a sibling .meta file) instead of stdout",
    )(func)


@rabi.command(help="Closed-form effective model observables.")
@click.option("--g", default=None, help="Coupling grid (start:stop:count[log])")
@click.option("--ratio", default=None, help="Omega/omega0 grid or 'inf' [default: inf]")
@output_option
@click.pass_context
def effective(ctx, g: Optional[str], ratio: Optional[str], output: Optional[str]):
    _execute(ctx, "effective", {"g": g, "ratio": ratio, "output": output})


@rabi.command(help="Exact diagonalization of the Rabi (or quartic) Hamiltonian.")
@click.option("--g", default=None, help="Coupling grid")
@click.option("--ratio", default=None, help="Finite Omega/omega0 grid")
@click.option("--levels", default=None, type=int, help="Number of levels [default: 2]")
@click.option(
    "--quartic",
    is_flag=True,
    default=False,
    help="Diagonalize the single-mode quartic Hamiltonian instead",
)
@click.option("--tol", default=None, help="Relative convergence tolerance on energies")
@click.option(
    "--solver",
    default=None,
    type=click.Choice(["dense", "banded"]),
    help="Eigensolver; chosen from the block dimension if not set",
)
@output_option
@click.pass_context
def ed(
    ctx,
    g: Optional[str],
    ratio: Optional[str],
    levels: Optional[int],
    quartic: bool,
    tol: Optional[str],
    solver: Optional[str],
    output: Optional[str],
):
    _execute(
        ctx,
        "ed",
        {
            "g": g,
            "ratio": ratio,
            "levels": levels,
            "quartic": _flag(quartic),
            "tol": tol,
            "solver": solver,
            "output": output,
        },
    )


def quench_options(func):
    func = click.option("--gf", default=None, help="Final coupling in (0, 1]")(func)
    func = click.option("--tauq", default=None, help="Quench time grid (1/omega0)")(
        func
    )
    func = click.option(
        "--ratio", default=None, help="Omega/omega0 or 'inf' [default: inf]"
    )(func)
    func = click.option("--rtol", default=None, help="Integrator relative tolerance")(
        func
    )
    func = click.option("--atol", default=None, help="Integrator absolute tolerance")(
        func
    )
    return output_option(func)


@rabi.command(help="Residual energy of linear quenches over (ratio, tau_q) grids.")
@quench_options
@click.pass_context
def quench(ctx, gf, tauq, ratio, rtol, atol, output):
    _execute(
        ctx,
        "quench",
        {
            "gf": gf,
            "tauq": tauq,
            "ratio": ratio,
            "rtol": rtol,
            "atol": atol,
            "output": output,
        },
    )


@rabi.command(help="Residual energy versus quench time at a single ratio.")
@quench_options
@click.pass_context
def sweep(ctx, gf, tauq, ratio, rtol, atol, output):
    _execute(
        ctx,
        "sweep",
        {
            "gf": gf,
            "tauq": tauq,
            "ratio": ratio,
            "rtol": rtol,
            "atol": atol,
            "output": output,
        },
    )


@rabi.command(help="Power-law fits of a result file.")
@click.option("--input", "input_file", default=None, help="CSV written by a command")
@click.option("--window", default=None, help="Fit window lo:hi (exclusive)")
@click.option(
    "--sliding", is_flag=True, default=False, help="Add sliding-window exponents"
)
@click.option(
    "--delta-log",
    default=None,
    help="Half-width in decades of the sliding windows. "
    "Defaults to METAFLOW_RABI_SLIDING_DELTA_LOG",
)
@click.option(
    "--decades", is_flag=True, default=False, help="Add one fit per decade"
)
@click.option(
    "--include-plateau",
    is_flag=True,
    default=False,
    help="Keep quench times below METAFLOW_RABI_PLATEAU_TAU",
)
@click.option("--x-column", default=None, help="Abscissa column [default: tau_q]")
@click.option("--y-column", default=None, help="Ordinate column [default: E_r]")
@output_option
@click.pass_context
def fit(
    ctx,
    input_file: Optional[str],
    window: Optional[str],
    sliding: bool,
    delta_log: Optional[str],
    decades: bool,
    include_plateau: bool,
    x_column: Optional[str],
    y_column: Optional[str],
    output: Optional[str],
):
    _execute(
        ctx,
        "fit",
        {
            "input": input_file,
            "window": window,
            "sliding": _flag(sliding),
            "delta_log": delta_log,
            "decades": _flag(decades),
            "include_plateau": _flag(include_plateau),
            "x_column": x_column,
            "y_column": y_column,
            "output": output,
        },
    )


@rabi.command(help="Kibble-Zurek freeze-out couplings of linear ramps to g = 1.")
@click.option("--tauq", default=None, help="Quench time grid (1/omega0)")
@output_option
@click.pass_context
def kzm(ctx, tauq: Optional[str], output: Optional[str]):
    _execute(ctx, "kzm", {"tauq": tauq, "output": output})
