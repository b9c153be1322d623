"""
Command-line entry point.

    overflowlab validate --network tandem.json
    overflowlab exact    --network mm1.json --n 2 --target 1
    overflowlab split    --network tandem.json --n 10 --target 1,1 --r 2 --m 10000 --seed 42
    overflowlab mc       --network mm1.json --n 5 --m 100000 --seed 7
    overflowlab scaling  --network tandem.json --n-list 10,15,20,25,30 --m 5000 --seed 1
    overflowlab check    --network tandem.json --n 5

Every command prints a human readable table by default and CSV with
`--format csv`. Stochastic commands require `--seed`.
"""
import argparse
import csv
import io
import itertools
import logging
import sys
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import __version__
from .chain import kernel_row, subsolution_residual
from .errors import OverflowLabError
from .exact import overflow_probability, regeneration_check
from .experiments import naive_mc, relative_error_bound, scaling_study, theoretical_exponents
from .network import (
    ValidatedNetwork,
    load_network,
    steady_state_ratio,
    target_params,
    validate,
)
from .reversed import reversed_kernel_row, reversed_network
from .settings import SolverSettings
from .splitting import build_levels, estimate

_LOGGER = logging.getLogger(__name__)

Row = Dict[str, Any]


@dataclass(frozen=True)
class RunConfig:
    command: str
    network_path: Path
    v: Optional[Tuple[int, ...]]
    x0: Optional[Tuple[int, ...]]
    n: Optional[int]
    n_list: Optional[Tuple[int, ...]]
    r: int
    m: Optional[int]
    seed: Optional[int]
    threads: int
    tolerance: float
    max_states: Optional[int]
    samples: int
    box: int
    output: Optional[Path]
    fmt: str


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _binary_list(text: str) -> Tuple[int, ...]:
    values = _int_list(text)
    if any(value not in (0, 1) for value in values):
        raise argparse.ArgumentTypeError(f"target must be a comma-separated 0/1 list, got {text!r}")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overflowlab",
        description="Overflow probabilities of open Jackson networks by multilevel splitting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", required=True, type=Path, help="network JSON file")
    common.add_argument("--format", dest="fmt", choices=("table", "csv"), default="table")
    common.add_argument("--output", type=Path, help="write the report here instead of stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    target = argparse.ArgumentParser(add_help=False)
    target.add_argument(
        "--target", type=_binary_list, help="comma-separated 0/1 vector, default all ones"
    )
    target.add_argument("--x", dest="x0", type=_int_list, help="start state, default the empty network")
    target.add_argument("--tol", type=_positive_float, default=1e-12, help="solver tolerance")
    target.add_argument("--max-states", type=_positive_int, help="state limit of the exact solver")

    stochastic = argparse.ArgumentParser(add_help=False)
    stochastic.add_argument("--m", type=_positive_int, required=True, help="replications")
    stochastic.add_argument("--seed", type=_non_negative_int, required=True, help="master seed")
    stochastic.add_argument("--threads", type=_positive_int, default=1, help="worker processes")

    subparsers.add_parser("validate", parents=[common], help="traffic intensities and bottlenecks")
    exact = subparsers.add_parser("exact", parents=[common, target], help="exact overflow probability")
    exact.add_argument("--n", type=_positive_int, required=True)

    split = subparsers.add_parser("split", parents=[common, target, stochastic], help="splitting estimate")
    split.add_argument("--n", type=_positive_int, required=True)
    split.add_argument("--r", type=int, default=2, help="splitting factor")

    mc = subparsers.add_parser("mc", parents=[common, target, stochastic], help="naive Monte Carlo")
    mc.add_argument("--n", type=_positive_int, required=True)

    scaling = subparsers.add_parser("scaling", parents=[common, target, stochastic], help="complexity study")
    scaling.add_argument("--n-list", type=_int_list, required=True)
    scaling.add_argument("--r", type=int, default=2, help="splitting factor")

    check = subparsers.add_parser("check", parents=[common, target], help="identity checks")
    check.add_argument("--n", type=_positive_int, required=True)
    check.add_argument("--samples", type=_positive_int, default=100, help="interior states to sample")
    check.add_argument("--box", type=_positive_int, default=6, help="side of the reversed-kernel box")
    check.add_argument("--seed", type=_non_negative_int, default=0, help="seed for sampled states")
    return parser


def parse_config(argv: Optional[Sequence[str]] = None) -> Tuple[RunConfig, int]:
    args = build_parser().parse_args(argv)
    config = RunConfig(
        command=args.command,
        network_path=args.network,
        v=getattr(args, "target", None),
        x0=getattr(args, "x0", None),
        n=getattr(args, "n", None),
        n_list=getattr(args, "n_list", None),
        r=getattr(args, "r", 2),
        m=getattr(args, "m", None),
        seed=getattr(args, "seed", None),
        threads=getattr(args, "threads", 1),
        tolerance=getattr(args, "tol", 1e-12),
        max_states=getattr(args, "max_states", None),
        samples=getattr(args, "samples", 100),
        box=getattr(args, "box", 6),
        output=args.output,
        fmt=args.fmt,
    )
    return config, args.verbose


def _format_value(value: Any, fixed: bool = False) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if fixed and (value == 0.0 or 1e-3 <= abs(value) < 1e9):
            return f"{value:.9f}"
        return f"{value:.9g}"
    return str(value)


def _write_csv(blocks: Sequence[List[Row]], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    for i, rows in enumerate(blocks):
        if i:
            out.write("\n")
        if not rows:
            continue
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_value(row[key]) for key in header])


def _write_table(blocks: Sequence[List[Row]], out: TextIO) -> None:
    for i, rows in enumerate(blocks):
        if i:
            out.write("\n")
        if not rows:
            continue
        header = list(rows[0])
        cells = [header] + [[_format_value(row[key], fixed=True) for key in header] for row in rows]
        widths = [max(len(line[k]) for line in cells) for k in range(len(header))]
        for line in cells:
            out.write("  ".join(cell.rjust(width) for cell, width in zip(line, widths)).rstrip() + "\n")


@contextmanager
def _open_output(path: Optional[Path]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    try:
        with path.open("w", encoding="utf-8", newline="") as out:
            yield out
    except OSError as e:
        raise OverflowLabError(f"{path}: cannot write report: {e.strerror or e}")


def _target_and_start(config: RunConfig, vn: ValidatedNetwork):
    v = config.v if config.v is not None else (1,) * vn.d
    target = target_params(vn, v)
    x0 = config.x0 if config.x0 is not None else (0,) * vn.d
    if len(x0) != vn.d:
        raise OverflowLabError(f"start state {x0} does not match a {vn.d}-station network")
    return target, x0


def _settings(config: RunConfig) -> SolverSettings:
    settings = SolverSettings.from_env(tolerance=config.tolerance)
    if config.max_states is not None:
        settings = replace(settings, max_states=config.max_states)
    return settings


def _cmd_validate(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    stations = [
        {
            "station": i + 1,
            "lambda": vn.spec.lam[i],
            "mu": vn.spec.mu[i],
            "phi": vn.phi[i],
            "rho": vn.rho[i],
            "bottleneck": abs(vn.rho[i] - vn.rho_star) <= 1e-9 * vn.rho_star,
        }
        for i in range(vn.d)
    ]
    summary = [{"stations": vn.d, "rho_star": vn.rho_star, "beta": vn.beta}]
    return [stations, summary]


def _cmd_exact(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    target, x0 = _target_and_start(config, vn)
    p = overflow_probability(vn, config.n, target.v, x0, tol=config.tolerance, settings=_settings(config))
    return [[{"n": config.n, "target": _vector(target.v), "x": _vector(x0), "probability": p}]]


def _stats_row(stats) -> Row:
    return {
        "m": stats.m,
        "mean": stats.mean,
        "std_error": stats.std_error,
        "variance": stats.variance,
        "cv2": stats.cv2,
        "mean_work": stats.mean_work,
        "work_normalized_cv2": stats.work_normalized_cv2,
        "mean_Nn": stats.mean_terminal_count,
        "rel_error_bound_10pct": relative_error_bound(stats, 0.1),
    }


def _cmd_split(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    target, x0 = _target_and_start(config, vn)
    scheme = build_levels(vn, target, config.n, config.r, x0)
    stats = estimate(vn, scheme, x0, config.m, config.seed, config.threads)
    row = {"n": config.n, "r": config.r, "levels": scheme.L, "C": scheme.C}
    row.update(_stats_row(stats))
    return [[row]]


def _cmd_mc(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    target, x0 = _target_and_start(config, vn)
    stats = naive_mc(vn, config.n, target.v, x0, config.m, config.seed, config.threads)
    row = {"n": config.n}
    row.update(_stats_row(stats))
    return [[row]]


def _cmd_scaling(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    target, x0 = _target_and_start(config, vn)
    report = scaling_study(
        vn, target, x0, config.n_list, config.r, config.m, config.seed, config.threads, _settings(config)
    )
    rows = [
        {
            "n": row.n,
            "estimate": row.estimate,
            "exact": row.exact,
            "cv2": row.cv2,
            "mean_Nn": row.mean_terminal_count,
            "mean_work": row.mean_work,
        }
        for row in report.rows
    ]
    fits = [
        {
            "quantity": fit.quantity,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "theoretical": fit.theoretical,
            "window_low": fit.low,
            "window_high": fit.high,
            "passed": fit.passed,
        }
        for fit in report.fits
    ]
    return [rows, fits]


def _box(d: int, side: int) -> Iterator[Tuple[int, ...]]:
    return itertools.product(range(side), repeat=d)


def _cmd_check(config: RunConfig, vn: ValidatedNetwork) -> List[List[Row]]:
    target, x0 = _target_and_start(config, vn)
    rng = np.random.default_rng(config.seed)
    interior = rng.integers(1, 2 * config.n + 1, size=(config.samples, vn.d))
    residual = max(abs(subsolution_residual(vn, target, tuple(int(xi) for xi in x))) for x in interior)

    reversed_vn = validate(reversed_network(vn))
    stochasticity = 0.0
    mismatch = 0.0
    for y in _box(vn.d, config.box):
        row = reversed_kernel_row(vn, y)
        stochasticity = max(stochasticity, abs(row.total - 1.0))
        closed_form = dict(kernel_row(reversed_vn, y))
        ratio = row.as_dict()
        for x in set(closed_form) | set(ratio):
            mismatch = max(mismatch, abs(closed_form.get(x, 0.0) - ratio.get(x, 0.0)))

    if config.x0 is None:
        x0 = tuple(1 if i == target.stations[0] else 0 for i in range(vn.d))
    lhs, rhs = regeneration_check(vn, config.n, target.v, x0, settings=_settings(config))
    exponents = theoretical_exponents(vn, target)
    return [
        [
            {"check": "max |subsolution residual| at interior states", "value": residual},
            {"check": "max |reversed row sum - 1|", "value": stochasticity},
            {"check": "max |ratio kernel - reversed network kernel|", "value": mismatch},
            {"check": "regeneration lhs p_n(x)", "value": lhs},
            {"check": "regeneration rhs taboo ratio", "value": rhs},
            {"check": "steady-state ratio P(V=n)/pi(x)", "value": steady_state_ratio(vn, target, config.n, x0)},
        ],
        [{"quantity": key, "exponent": value} for key, value in exponents.items()],
    ]


def _vector(values: Sequence[int]) -> str:
    return ",".join(str(value) for value in values)


_DISPATCH = {
    "validate": _cmd_validate,
    "exact": _cmd_exact,
    "split": _cmd_split,
    "mc": _cmd_mc,
    "scaling": _cmd_scaling,
    "check": _cmd_check,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse `argv`, dispatch the command and return the exit status."""
    try:
        config, verbosity = parse_config(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    try:
        vn = validate(load_network(config.network_path))
        _LOGGER.info("Running %s on %s (%d stations)", config.command, vn.name or config.network_path, vn.d)
        if config.command in ("split", "scaling") and config.r < 2:
            raise OverflowLabError(f"splitting factor must be at least 2, got {config.r}")
        blocks = _DISPATCH[config.command](config, vn)
        buffer = io.StringIO()
        (_write_csv if config.fmt == "csv" else _write_table)(blocks, buffer)
        with _open_output(config.output) as out:
            out.write(buffer.getvalue())
    except (OverflowLabError, ValueError) as e:
        print(f"overflowlab {config.command}: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
