"""Command-line entry point: ``smartoverlay generate|import|run|report``.

Exit codes: 0 on success, 2 for usage or input errors, 3 when a fixed
point fails to converge. ``SMARTOVERLAY_OUT`` sets the default output
directory of ``run``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .errors import NonConvergenceError, SmartOverlayError
from .experiment import config_from_dict, run_experiment
from .ingest import export_trace, import_ping_log
from .oracle import RoundReport, aggregate, gap_cdf_csv, hop_histogram_csv, timeseries_csv
from .overlay import OverlayTopology
from .trace import GeneratorSpec, generate_trace

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
OUT_ENV = "SMARTOVERLAY_OUT"


class CliError(Exception):
    """Input problem detected by the CLI itself."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: not valid JSON ({exc})") from exc


def cmd_generate(args: argparse.Namespace) -> int:
    spec = GeneratorSpec.from_dict(_read_json(args.spec))
    trace = generate_trace(spec, args.seed)
    export_trace(trace, args.out)
    n = trace.n_nodes
    summary = {
        "rounds": trace.rounds,
        "nodes": n,
        "rows": trace.rounds * n * (n - 1),
        "lost_samples": trace.loss_count(),
        "expected_outage_losses": spec.expected_outage_losses(),
        "seed": args.seed,
        "out": str(args.out),
    }
    print(_dump(summary))
    return EXIT_OK


def cmd_import(args: argparse.Namespace) -> int:
    topology = OverlayTopology.load(args.topology)
    trace, report = import_ping_log(args.log, topology, args.round_seconds)
    export_trace(trace, args.out)
    print(_dump(report.to_dict()))
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    raw = _read_json(args.config)
    # flags override the file
    if args.seed is not None:
        raw.setdefault("agent", {})["seed"] = args.seed
    if args.rounds is not None:
        raw["rounds"] = args.rounds
    config = config_from_dict(raw, Path(args.config).parent)
    out_dir = Path(args.out_dir or os.environ.get(OUT_ENV) or "out")
    out_dir.mkdir(parents=True, exist_ok=True)

    reports: list[RoundReport] = []
    with open(out_dir / "reports.ndjson", "w") as rep_f, open(out_dir / "outcomes.ndjson", "w") as out_f:

        def log_outcome(pair, outcome):
            out_f.write(_dump({"pair": list(pair), **outcome.to_dict()}) + "\n")

        for report in run_experiment(config, on_outcome=log_outcome):
            reports.append(report)
            rep_f.write(_dump(report.to_dict()) + "\n")

    stats = aggregate(reports)
    (out_dir / "aggregate.json").write_text(json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n")
    if args.verbose:
        print(f"{len(reports)} reports written to {out_dir}", file=sys.stderr)
    return EXIT_OK


def _parse_pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split("-"))
    except ValueError:
        raise CliError(f"pair must look like A-B, got {text!r}") from None
    return a, b


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.reports)
    reports = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            reports.append(RoundReport.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CliError(f"{path}:{line_no}: bad report ({exc})") from exc
    figure = args.figure
    if figure == "hops":
        text = hop_histogram_csv(aggregate(reports))
    elif figure == "gap":
        text = gap_cdf_csv(reports)
    elif figure.startswith("timeseries:"):
        text = timeseries_csv(reports, _parse_pair(figure.split(":", 1)[1]))
    else:
        raise CliError(f"unknown figure {figure!r}; use hops, gap or timeseries:A-B")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smartoverlay", description="Trace-driven overlay routing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a link trace from a generator spec")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("import", help="convert a raw ping log into a trace CSV")
    p.add_argument("log")
    p.add_argument("--topology", required=True)
    p.add_argument("--round-seconds", type=float, default=120.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--seed", type=int, help="override agent.seed")
    p.add_argument("--rounds", type=int, help="override rounds")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="CSV data for one figure")
    p.add_argument("reports")
    p.add_argument("--figure", required=True, help="hops, gap or timeseries:A-B")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(
            f"error: fixed point did not converge after {exc.iterations} iterations "
            f"(residual {exc.residual:.3e})",
            file=sys.stderr,
        )
        return EXIT_NUMERIC
    except (CliError, SmartOverlayError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
