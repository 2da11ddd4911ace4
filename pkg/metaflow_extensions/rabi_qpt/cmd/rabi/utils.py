import csv
import io
import math
import os
import tempfile

from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from metaflow.metaflow_config import (  # type: ignore
    RABI_EXECUTOR,
    RABI_OMEGA0,
    RABI_WORKERS,
)

from metaflow_extensions.rabi_qpt.plugins.rabi.utils import (
    INFINITE_LITERAL,
    RabiConfigException,
    RabiException,
)

COMMANDS = ("effective", "ed", "quench", "sweep", "fit", "kzm")

REQUIRED_KEYS = {
    "effective": ["g"],
    "ed": ["g", "ratio"],
    "quench": ["gf", "tauq"],
    "sweep": ["gf", "tauq"],
    "fit": ["input"],
    "kzm": ["tauq"],
}

# Grid syntax: a scalar, "inf" or start:stop:count with an optional "log" suffix on
# the count (1e-1:1e4:40log)


class Grid(NamedTuple):
    start: float
    stop: float
    count: int
    log: bool

    def values(self) -> List[float]:
        if self.count == 1:
            return [self.start]
        if self.log:
            vals = np.logspace(
                math.log10(self.start), math.log10(self.stop), self.count
            )
        else:
            vals = np.linspace(self.start, self.stop, self.count)
        result = [float(x) for x in vals]
        result[0], result[-1] = self.start, self.stop
        return result

    def __str__(self) -> str:
        if self.count == 1:
            return format_number(self.start)
        return "%s:%s:%d%s" % (
            format_number(self.start),
            format_number(self.stop),
            self.count,
            "log" if self.log else "",
        )


def parse_number(name: str, value: Any) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip()
    if text.lower() == INFINITE_LITERAL:
        return math.inf
    try:
        result = float(text)
    except ValueError:
        raise RabiConfigException("Malformed number '%s' for '%s'" % (value, name))
    if math.isnan(result):
        raise RabiConfigException("'%s' cannot be NaN" % name)
    return result


def parse_int(name: str, value: Any) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    try:
        return int(str(value).strip())
    except ValueError:
        raise RabiConfigException("Malformed integer '%s' for '%s'" % (value, name))


def parse_bool(name: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise RabiConfigException("Malformed boolean '%s' for '%s'" % (value, name))


def parse_grid(name: str, value: Any) -> Grid:
    if isinstance(value, Grid):
        return value
    text = str(value).strip()
    parts = text.split(":")
    if len(parts) == 1:
        scalar = parse_number(name, parts[0])
        return Grid(scalar, scalar, 1, False)
    if len(parts) != 3:
        raise RabiConfigException(
            "Grid '%s' for '%s' must be a number or start:stop:count[log]"
            % (text, name)
        )
    start = parse_number(name, parts[0])
    stop = parse_number(name, parts[1])
    count_text = parts[2].strip()
    log = count_text.lower().endswith("log")
    if log:
        count_text = count_text[:-3]
    count = parse_int(name, count_text)
    if count < 1:
        raise RabiConfigException(
            "Grid '%s' for '%s' needs a count >= 1" % (text, name)
        )
    if math.isinf(start) or math.isinf(stop):
        raise RabiConfigException(
            "Grid '%s' for '%s': '%s' is only allowed as a scalar"
            % (text, name, INFINITE_LITERAL)
        )
    if count > 1 and start > stop:
        raise RabiConfigException(
            "Grid '%s' for '%s' is contradictory: start > stop" % (text, name)
        )
    if log and start <= 0:
        raise RabiConfigException(
            "Log grid '%s' for '%s' must start above 0" % (text, name)
        )
    return Grid(start, stop, count, log)


def parse_window(name: str, value: Any) -> Tuple[float, float]:
    if isinstance(value, tuple):
        return value  # type: ignore
    parts = str(value).strip().split(":")
    if len(parts) != 2:
        raise RabiConfigException(
            "Window '%s' for '%s' must be lo:hi" % (value, name)
        )
    lo, hi = parse_number(name, parts[0]), parse_number(name, parts[1])
    if not lo < hi:
        raise RabiConfigException("Window '%s' for '%s' is empty" % (value, name))
    return lo, hi


def _parse_str(name: str, value: Any) -> str:
    return str(value).strip()


def _parse_executor(name: str, value: Any) -> str:
    value = str(value).strip()
    if value not in ("thread", "process"):
        raise RabiConfigException(
            "'%s' must be 'thread' or 'process' (got '%s')" % (name, value)
        )
    return value


def _parse_omega0(name: str, value: Any) -> float:
    result = parse_number(name, value)
    if not result > 0 or math.isinf(result):
        raise RabiConfigException("'%s' must be finite and > 0" % name)
    return result


CONFIG_KEYS = {
    "g": parse_grid,
    "ratio": parse_grid,
    "tauq": parse_grid,
    "gf": parse_number,
    "levels": parse_int,
    "quartic": parse_bool,
    "solver": _parse_str,
    "tol": parse_number,
    "rtol": parse_number,
    "atol": parse_number,
    "output": _parse_str,
    "workers": parse_int,
    "executor": _parse_executor,
    "omega0": _parse_omega0,
    "input": _parse_str,
    "window": parse_window,
    "sliding": parse_bool,
    "delta_log": parse_number,
    "decades": parse_bool,
    "include_plateau": parse_bool,
    "x_column": _parse_str,
    "y_column": _parse_str,
}  # type: Dict[str, Callable[[str, Any], Any]]


class RunConfig(NamedTuple):
    command: str
    g: Optional[Grid] = None
    ratio: Optional[Grid] = None
    tauq: Optional[Grid] = None
    gf: Optional[float] = None
    levels: int = 2
    quartic: bool = False
    solver: Optional[str] = None
    tol: Optional[float] = None
    rtol: Optional[float] = None
    atol: Optional[float] = None
    output: Optional[str] = None
    workers: int = 0
    executor: str = "thread"
    omega0: float = 1.0
    input: Optional[str] = None
    window: Optional[Tuple[float, float]] = None
    sliding: bool = False
    delta_log: Optional[float] = None
    decades: bool = False
    include_plateau: bool = False
    x_column: str = "tau_q"
    y_column: str = "E_r"

    def echo_lines(self) -> List[str]:
        """
        The configuration as key = value lines; readable again with --config.
        """
        lines = []
        for key in self._fields:
            if key == "command":
                continue
            value = getattr(self, key)
            if value is None:
                continue
            if key == "window":
                value = "%s:%s" % (format_number(value[0]), format_number(value[1]))
            elif isinstance(value, float):
                value = format_number(value)
            lines.append("%s = %s" % (key, value))
        return lines


def read_config_file(path: str) -> Dict[str, str]:
    values = {}  # type: Dict[str, str]
    try:
        with open(path, mode="r", encoding="utf-8") as f:
            content = f.readlines()
    except (IOError, OSError) as e:
        raise RabiConfigException("Cannot read config file '%s': %s" % (path, e))
    for lineno, line in enumerate(content, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RabiConfigException(
                "%s:%d: expected 'key = value' (got '%s')" % (path, lineno, line)
            )
        key, value = [x.strip() for x in line.split("=", 1)]
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise RabiConfigException(
                "%s:%d: unknown key '%s'" % (path, lineno, key)
            )
        values[key] = value
    return values


def parse_config(
    command: str, flags: Dict[str, Any], config_file: Optional[str] = None
) -> RunConfig:
    """
    Builds the RunConfig of a command. Flags that are set override values from the
    config file which override the defaults (from the Metaflow configuration for
    workers, executor and omega0).
    """
    if command not in COMMANDS:
        raise RabiConfigException("Unknown command '%s'" % command)
    raw = {
        "workers": RABI_WORKERS,
        "executor": RABI_EXECUTOR,
        "omega0": RABI_OMEGA0,
    }  # type: Dict[str, Any]
    if command in ("effective", "quench", "sweep"):
        raw["ratio"] = INFINITE_LITERAL
    if config_file:
        raw.update(read_config_file(config_file))
    for key, value in flags.items():
        if key not in CONFIG_KEYS:
            raise RabiConfigException("Unknown option '%s'" % key)
        if value is not None and value != ():
            raw[key] = value

    for key in REQUIRED_KEYS[command]:
        if raw.get(key) is None:
            raise RabiConfigException(
                "Missing option '--%s' for '%s'" % (key.replace("_", "-"), command)
            )

    values = {key: CONFIG_KEYS[key](key, value) for key, value in raw.items()}
    if values.get("levels", 2) < 1:
        raise RabiConfigException("'levels' must be >= 1")
    if values.get("workers", 0) < 0:
        raise RabiConfigException("'workers' must be >= 0")
    if command == "sweep" and values["ratio"].count != 1:
        raise RabiConfigException("'sweep' takes a single ratio")
    config = RunConfig(command=command, **values)
    if config.output:
        check_writable(config.output)
    return config


def check_writable(path: str):
    path = os.path.abspath(path)
    if os.path.isdir(path):
        raise RabiConfigException("Output '%s' is a directory" % path)
    if os.path.exists(path):
        if not os.access(path, os.W_OK):
            raise RabiConfigException("Output '%s' is not writable" % path)
        return
    parent = os.path.dirname(path)
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise RabiConfigException(
            "Cannot create output '%s': directory not writable" % path
        )


def format_number(value: float) -> str:
    if math.isinf(value):
        return INFINITE_LITERAL if value > 0 else "-" + INFINITE_LITERAL
    if math.isnan(value):
        return "nan"
    return "%.17g" % value


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format_number(float(value))
    return str(value)


class ResultTable(object):
    """
    Rows of a command with a fixed column schema of (name, unit) pairs and a
    metadata header. Numbers are written with 17 significant digits.
    """

    def __init__(self, columns: Sequence[Tuple[str, str]]):
        self._columns = list(columns)
        self._rows = []  # type: List[List[Any]]
        self.metadata = {}  # type: Dict[str, str]

    @property
    def column_names(self) -> List[str]:
        return [c[0] for c in self._columns]

    @property
    def rows(self) -> List[List[Any]]:
        return self._rows

    def add_row(self, row: Sequence[Any]):
        if len(row) != len(self._columns):
            raise RabiException(
                "Row has %d values for %d columns" % (len(row), len(self._columns))
            )
        self._rows.append(list(row))

    def body(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.column_names)
        for row in self._rows:
            writer.writerow([format_value(v) for v in row])
        return out.getvalue()

    def render(self) -> str:
        header = ["# %s: %s" % (k, v) for k, v in self.metadata.items()]
        header.append(
            "# units: %s"
            % ", ".join("%s [%s]" % (name, unit or "-") for name, unit in self._columns)
        )
        return "\n".join(header) + "\n" + self.body()


def write_atomic(path: str, content: str):
    path = os.path.abspath(path)
    fd, tmp_path = tempfile.mkstemp(
        prefix=".%s." % os.path.basename(path), dir=os.path.dirname(path)
    )
    try:
        with os.fdopen(fd, mode="w", encoding="utf-8") as f:
            f.write(content)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_table(table: ResultTable, config: RunConfig):
    assert config.output
    write_atomic(config.output, table.render())
    meta = ["# %s: %s" % (k, v) for k, v in table.metadata.items()]
    meta.append("command = %s" % config.command)
    write_atomic(config.output + ".meta", "\n".join(meta + config.echo_lines()) + "\n")


def read_table(path: str) -> Tuple[List[str], List[Dict[str, str]]]:
    try:
        with open(path, mode="r", encoding="utf-8") as f:
            lines = [l for l in f if not l.startswith("#")]
    except (IOError, OSError) as e:
        raise RabiConfigException("Cannot read input '%s': %s" % (path, e))
    reader = csv.DictReader(lines)
    rows = list(reader)
    return list(reader.fieldnames or []), rows


def run_grid(
    func: Callable[..., Tuple[Any, Optional[str]]],
    args_list: Sequence[Tuple[Any, ...]],
    workers: int = 0,
    executor: str = "thread",
) -> List[Tuple[Any, Optional[str]]]:
    """
    Runs func on every argument tuple and returns the (result, error) pairs in
    input order, whatever order they complete in.
    """
    results = [None] * len(args_list)  # type: List[Any]
    if not args_list:
        return results
    max_workers = workers or os.cpu_count() or 1
    max_workers = min(max_workers, len(args_list))
    if max_workers == 1:
        return [func(*args) for args in args_list]
    pool_cls = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
    with pool_cls(max_workers=max_workers) as pool:
        futures = {
            pool.submit(func, *args): idx for idx, args in enumerate(args_list)
        }
        for f in as_completed(futures):
            results[futures[f]] = f.result()
    return results
