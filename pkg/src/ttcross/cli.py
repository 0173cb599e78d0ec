"""Command-line interface: ``ttcross {interpolate,quasiopt,table,recover}``.

Exit status is 0 on success, 1 if a run did not converge (or a recovery
missed its tolerance) and 2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .bench import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    RunRecord,
    cmd_interpolate,
    cmd_quasiopt,
    cmd_recover,
    cmd_table,
)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_BAD_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with default option values")
    common.add_argument("--dims", type=_int_list, help="number of modes d (comma list for table)")
    common.add_argument("--mode-size", type=_int_list, help="mode size n (comma list for table)")
    common.add_argument(
        "--ranks",
        "--rank-cap",
        dest="ranks",
        type=_int_list,
        help="rank cap: one value, one per separator, or a comma list for table",
    )
    common.add_argument("--noise", type=float, help="noise level mu for quasiopt")
    common.add_argument("--trials", type=int, help="number of quasiopt trials")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--tol", type=float, help="relative stopping tolerance")
    common.add_argument("--samples", type=int, help="random entries for error estimates")
    common.add_argument("--sweeps", type=int, help="sweep limit")
    common.add_argument("--oracle", choices=("inverse-norm", "random-tt"), help="tensor for interpolate/table")
    common.add_argument("--scan", choices=("column-row", "row-column", "rook"), help="pivot line search")
    common.add_argument("--inner", choices=("single", "aca"), help="crosses per supercore visit")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--format", choices=("table", "csv", "json"), help="output format")
    common.add_argument("--trace", action="store_true", default=None, help="include sweep traces in json")

    parser = argparse.ArgumentParser(
        prog="ttcross", description="Greedy TT cross interpolation experiments."
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    sub.add_parser("interpolate", parents=[common], help="interpolate one tensor")
    sub.add_parser("quasiopt", parents=[common], help="quasioptimality trials on noisy TT tensors")
    sub.add_parser("table", parents=[common], help="accuracy/time table over a (d, n, r) grid")
    sub.add_parser("recover", parents=[common], help="exact recovery of a random TT")
    return parser


_KIND_DEFAULTS = {
    "quasiopt": {"dims": [16], "mode_size": [2], "ranks": [5], "tol": 1e-14},
    "recover": {"dims": [6], "mode_size": [4], "ranks": [3], "oracle": "random-tt"},
    "table": {"ranks": [6, 12]},
}


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict = dict(_KIND_DEFAULTS.get(args.kind, {}))
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        values.update({k.replace("-", "_"): v for k, v in doc.items()})
    for key, value in vars(args).items():
        if key != "config" and value is not None:
            values[key] = value
    values["kind"] = args.kind
    try:
        return ExperimentConfig.from_mapping(values)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _fmt(x: float) -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.1e}"


def format_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.csv_row())
    return buf.getvalue()


def format_cells(records: list[RunRecord]) -> str:
    """A grid with one row per ``(d, n)`` and one column per ``r``; each cell
    holds three lines: Chebyshev error, Frobenius error, seconds."""
    if not records:
        return "(empty grid)\n"
    rs = sorted({rec.r for rec in records})
    rows = sorted({(rec.d, rec.n) for rec in records})
    cell = {(rec.d, rec.n, rec.r): rec for rec in records}
    width = 10
    lines = ["d    n    | " + " | ".join(f"r={r}".ljust(width) for r in rs)]
    lines.append("-" * len(lines[0]))
    for d, n in rows:
        parts = []
        for r in rs:
            rec = cell.get((d, n, r))
            if rec is None:
                parts.append(["", "", ""])
            elif rec.error:
                parts.append(["failed", "", ""])
            else:
                parts.append([_fmt(rec.cheb_err), _fmt(rec.frob_err), f"{rec.seconds:.3f}"])
        for line in range(3):
            head = f"{d:<4} {n:<4} | " if line == 0 else " " * 10 + "| "
            lines.append(head + " | ".join(p[line].ljust(width) for p in parts))
        lines.append("-" * len(lines[0]))
    return "\n".join(lines) + "\n"


def format_record(rec: RunRecord) -> str:
    lines = [
        f"{rec.command}: d={rec.d} n={rec.n} r={rec.r} seed={rec.seed}",
        f"  ranks        {rec.ranks}",
        f"  cheb rel err {_fmt(rec.cheb_err)}",
        f"  frob rel err {_fmt(rec.frob_err)}",
        f"  seconds      {rec.seconds:.3f}",
        f"  oracle calls {rec.oracle_calls} distinct, {rec.total_calls} total",
        f"  stop         {rec.stop_reason} after {rec.sweeps} sweeps",
    ]
    for key, value in rec.extra.items():
        lines.append(f"  {key:<12} {value}")
    return "\n".join(lines) + "\n"


def format_quasiopt(records: list[RunRecord], summary: dict) -> str:
    lines = [
        f"quasiopt: {summary['count']} trials used, {len(summary['excluded'])} excluded (exact reference)",
        f"  log2 ratio mean {summary['mean']:.3f} std {summary['std']:.3f}",
        f"  bound violations {summary['bound_violations']}",
        "  histogram of log2 ratio:",
    ]
    edges, counts = summary["bins"], summary["counts"]
    top = max(counts, default=0)
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        bar = "#" * (round(40 * c / top) if top else 0)
        lines.append(f"  [{lo:6.2f}, {hi:6.2f}) {c:6d} {bar}")
    return "\n".join(lines) + "\n"


def _json(records: list[RunRecord], cfg: ExperimentConfig, summary: dict | None = None) -> str:
    doc = {
        "config": {k: v for k, v in vars(cfg).items()},
        "records": [r.to_dict(with_trace=cfg.trace) for r in records],
    }
    if summary is not None:
        doc["summary"] = summary
    return json.dumps(doc, indent=2, default=float) + "\n"


def run(cfg: ExperimentConfig) -> tuple[str, int]:
    """Run the configured experiment; return the rendered output and exit code."""
    summary = None
    if cfg.kind == "quasiopt":
        records, summary = cmd_quasiopt(cfg)
    elif cfg.kind == "table":
        records = cmd_table(cfg)
    elif cfg.kind == "recover":
        records = [cmd_recover(cfg)]
    else:
        records = [cmd_interpolate(cfg)]

    if cfg.format == "json":
        text = _json(records, cfg, summary)
    elif cfg.format == "csv":
        text = format_csv(records)
    elif cfg.kind == "quasiopt":
        text = format_quasiopt(records, summary)
    elif cfg.kind == "table":
        text = format_cells(records) + "\n" + format_csv(records)
    else:
        text = format_record(records[0])

    ok = all(rec.converged for rec in records if rec.error is None)
    return text, EXIT_OK if ok else EXIT_NOT_CONVERGED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"ttcross: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        text, code = run(cfg)
    except ConfigError as exc:
        print(f"ttcross: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except ValueError as exc:
        # e.g. a rank cap longer than the tensor allows or a too-large dense tensor
        print(f"ttcross: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
