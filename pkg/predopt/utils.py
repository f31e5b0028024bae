import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence

import psutil
from colorama import Back, Fore, Style, init
from pandas import DataFrame

# Initialize colorama
init(autoreset=True)

# Define color codes for logging using colorama
COLOR_CODES = {
    logging.DEBUG: Fore.WHITE,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Back.RED + Fore.WHITE,
}

LOG_FORMAT = "%(levelname)s: %(message)s"
REPORT_FORMATS = ("human", "structured")
SIZES = ("small", "large")
SOLVERS = ("exact", "ls", "lns", "two-stage", "construct")
MODES = ("det", "avg", "worst")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ColoredFormatter(logging.Formatter):
    def format(self, record):
        color = COLOR_CODES.get(record.levelno, "")
        record = logging.makeLogRecord(record.__dict__)
        # Format the message and levelname with color
        record.levelname = f"{color}{record.levelname}{Style.RESET_ALL}"
        record.msg = f"{color}{record.getMessage()}{Style.RESET_ALL}"
        record.args = None
        return super().format(record)


def setup_logging(level=logging.INFO, color: bool = True) -> None:
    """Set up logging on the root logger, colored unless color is False."""
    if isinstance(level, str):
        level = getattr(logging, level.upper())
    handler = logging.StreamHandler()
    formatter = ColoredFormatter(LOG_FORMAT) if color else logging.Formatter(LOG_FORMAT)
    handler.setFormatter(formatter)
    root = logging.getLogger()
    root.setLevel(level)
    root.handlers = []  # Remove any existing handlers
    root.addHandler(handler)


def default_workers() -> int:
    """Physical core count, or 1 when psutil cannot tell."""
    return psutil.cpu_count(logical=False) or 1


def _check_range(cfg: Any, key: str, lo: float, hi: float) -> None:
    pair = list(cfg[key])
    if len(pair) != 2 or not lo <= pair[0] <= pair[1] <= hi:
        raise ValueError(f"{key} must be a [min, max] pair inside [{lo}, {hi}], got {pair}")


def validate_config(cfg: Any) -> Any:
    """
    Validates the configuration object.

    Args:
        cfg: OmegaConf configuration built by run.create_default_config.

    Returns:
        The validated configuration object.

    Raises:
        ValueError: naming the first invalid key.
    """
    if cfg.format not in REPORT_FORMATS:
        raise ValueError(f"format must be one of {REPORT_FORMATS}, got {cfg.format!r}")
    if str(cfg.log_level).upper() not in LOG_LEVELS:
        raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {cfg.log_level!r}")
    if int(cfg.seed) < 0:
        raise ValueError("seed must be >= 0")

    gen = cfg.generator
    if gen.size not in SIZES:
        raise ValueError(f"generator.size must be one of {SIZES}, got {gen.size!r}")
    if gen.num_days < 7:
        raise ValueError("generator.num_days must be >= 7")
    if gen.num_buildings < 1 or gen.num_solar < 1:
        raise ValueError("generator.num_buildings and generator.num_solar must be >= 1")
    if gen.history_days < 0:
        raise ValueError("generator.history_days must be >= 0")
    _check_range(gen, "duration_range", 1, float("inf"))
    _check_range(gen, "rooms_range", 1, float("inf"))
    _check_range(gen, "power_fraction_range", 0.0, float("inf"))
    _check_range(gen, "value_multiplier_range", 0.0, float("inf"))
    _check_range(gen, "penalty_fraction_range", 0.0, float("inf"))
    for key in ("p_small", "p_precedence_recurring", "p_precedence_once_off"):
        if not 0.0 <= gen[key] <= 1.0:
            raise ValueError(f"generator.{key} must be between 0 and 1!")
    if gen.precedence_trials < 0 or gen.num_batteries < 0:
        raise ValueError("generator.precedence_trials and generator.num_batteries must be >= 0")
    if not 0.0 < gen.battery_efficiency <= 1.0:
        raise ValueError("generator.battery_efficiency must lie in (0, 1]")
    if not 0.0 <= gen.battery_initial <= gen.battery_capacity:
        raise ValueError("generator.battery_initial must lie in [0, battery_capacity]")
    if gen.battery_power <= 0:
        raise ValueError("generator.battery_power must be > 0")

    solver = cfg.solver
    if solver.name not in SOLVERS:
        raise ValueError(f"solver.name must be one of {SOLVERS}, got {solver.name!r}")
    if solver.mode not in MODES:
        raise ValueError(f"solver.mode must be one of {MODES}, got {solver.mode!r}")
    if solver.alpha < 1.0:
        raise ValueError("solver.alpha must be >= 1")
    if solver.budget_secs is not None and solver.budget_secs < 0:
        raise ValueError("solver.budget_secs must be >= 0")
    if solver.max_evaluations < 0:
        raise ValueError("solver.max_evaluations must be >= 0")
    if solver.exact_cap < 1:
        raise ValueError("solver.exact_cap must be >= 1")
    if solver.workers is not None and solver.workers < 1:
        raise ValueError("solver.workers must be >= 1")
    if solver.starts < 1:
        raise ValueError("solver.starts must be >= 1")

    lns = cfg.lns
    if lns.r_num < 0 or lns.a_num < 0 or lns.r_num + lns.a_num == 0:
        raise ValueError("lns.r_num and lns.a_num must be >= 0 and not both 0")
    if lns.max_iter < 0 or lns.patience < 0:
        raise ValueError("lns.max_iter and lns.patience must be >= 0")
    if lns.tol < 0:
        raise ValueError("lns.tol must be >= 0")
    if lns.sub_cap < 1 or lns.sub_evaluations < 0:
        raise ValueError("lns.sub_cap must be >= 1 and lns.sub_evaluations >= 0")

    fc = cfg.forecast
    if fc.weeks < 1:
        raise ValueError("forecast.weeks must be >= 1")
    if fc.season < 1:
        raise ValueError("forecast.season must be >= 1")
    if not all(0.0 < q < 1.0 for q in fc.quantiles):
        raise ValueError("forecast.quantiles must lie strictly between 0 and 1")

    return cfg


def _format_value(value: Any, structured: bool) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower() if structured else str(value)
    if isinstance(value, float):
        return f"{value:.6f}" if structured else f"{value:,.2f}"
    return str(value)


def format_report(
    title: str,
    fields: Mapping[str, Any],
    fmt: str = "human",
    rows: Optional[Sequence[str]] = None,
) -> str:
    """
    Render a command report.

    Structured reports are `key=value` lines (machine-readable, no color),
    followed by optional raw rows and a closing summary block. Human reports
    are an aligned two-column table.
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"report format must be one of {REPORT_FORMATS}, got {fmt!r}")
    lines = []
    if fmt == "structured":
        lines.append(f"report={title}")
        lines.extend(f"{key}={_format_value(value, True)}" for key, value in fields.items())
        lines.extend(rows or ())
        lines.append("end=" + title)
    else:
        lines.append(title)
        lines.append("-" * max(len(title), 30))
        lines.extend("{:<22} {}".format(key, _format_value(value, False)) for key, value in fields.items())
        lines.extend(rows or ())
    return "\n".join(lines)


def save_trace(trace: Iterable[float], path, extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Saves an objective trace as CSV (one row per iteration).

    Args:
        trace: objective value per iteration.
        path: CSV file; rows are appended when it already exists.
        extra: constant columns added to every row (e.g. seed, solver).

    Returns:
        Path: The path where the trace was saved.
    """
    values = list(trace)
    df = DataFrame({"iteration": range(len(values)), "objective": values})
    for key, value in (extra or {}).items():
        df[key] = value
    csv_file = Path(path)
    csv_file.parent.mkdir(parents=True, exist_ok=True)
    write_header = not csv_file.exists()
    df.to_csv(csv_file, mode="a", header=write_header, index=False)
    logging.info(f"Saved trace to {csv_file}")
    return csv_file
