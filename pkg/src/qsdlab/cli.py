"""Command-line interface: batch analyses with deterministic reports.

Exit codes: 0 when every verification in the requested sections passes,
2 when a verification fails, 1 on input or usage errors.  Reports are
byte-identical across runs with identical flags.
"""

from __future__ import annotations

import argparse
import os
import sys

from .chainspec import parse_chain_spec, parse_v_weights
from .errors import QsdLabError, UnknownCommand
from .reporting import (
    COMMAND_SECTIONS,
    SCHEMA,
    AnalysisOptions,
    analyze,
    canonical_json,
    write_tsv,
)

COMMANDS = tuple(COMMAND_SECTIONS)


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors carry exit code 1, not 2.

    Exit code 2 is reserved for verification failures; anything wrong
    with the invocation itself is an input error.
    """

    def error(self, message):
        raise UnknownCommand(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="qsdlab",
        description=(
            "Quasi-stationary analysis of periodic absorbed Markov chains: "
            "cyclic structure, leading spectral data, QSD reconstruction, "
            "periodic limit profiles, the conditioned-forever chain, "
            "quasi-ergodic averages and Monte Carlo cross-checks."
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} analysis")
        cmd.add_argument("--chain", required=True,
                         help="chain spec file (.json or .csv)")
        cmd.add_argument("--out", default=None,
                         help="write the JSON report here instead of stdout")
        cmd.add_argument("--seed", type=int, default=42,
                         help="base seed for all sampling (default 42)")
        cmd.add_argument("--n-max", type=int, default=40, dest="n_max",
                         help="block horizon for decay certifications")
        cmd.add_argument("--N-max", type=int, default=1000, dest="big_n_max",
                         help="horizon for time-average rate sweeps")
        cmd.add_argument("--paths", type=int, default=100_000,
                         help="Monte Carlo path count")
        cmd.add_argument("--tsv-dir", default=None, dest="tsv_dir",
                         help="directory for decay-curve TSVs and figures")
        cmd.add_argument("--tolerance", action="append", default=[],
                         metavar="KEY=VAL", help="override a named tolerance")
        cmd.add_argument("--v-weights", default=None, dest="v_weights",
                         help="JSON file with per-state weights (>= 1)")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker threads (default 1 for reproducibility)")
    return parser


def _parse_tolerances(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise UnknownCommand(f"--tolerance expects KEY=VAL, got {pair!r}")
        key, _, val = pair.partition("=")
        try:
            out[key.strip()] = float(val)
        except ValueError:
            raise UnknownCommand(f"--tolerance {key}: {val!r} is not a number") from None
    return out


def run(command: str, options: dict) -> tuple[dict, int]:
    """Execute one subcommand; returns (report document, exit code)."""
    if command not in COMMAND_SECTIONS:
        raise UnknownCommand(f"unknown command {command!r}")
    report: dict = {"schema": SCHEMA, "command": command}
    chain_path = options.get("chain")
    report["chain"] = str(chain_path)
    opts = AnalysisOptions(
        seed=int(options.get("seed", 42)),
        n_max=int(options.get("n_max", 40)),
        big_n_max=int(options.get("big_n_max", 1000)),
        n_paths=int(options.get("paths", 100_000)),
        threads=max(1, int(options.get("threads", 1))),
        tolerances=_parse_tolerances(options.get("tolerance", [])),
    )
    report["seed"] = opts.seed
    try:
        spec = parse_chain_spec(chain_path)
        if options.get("v_weights"):
            spec = type(spec)(
                kernel=spec.kernel,
                v_weights=parse_v_weights(options["v_weights"], spec.kernel),
                tolerances=spec.tolerances,
                metadata=spec.metadata,
                source_format=spec.source_format,
            )
        if spec.tolerances:
            merged = dict(spec.tolerances)
            merged.update(opts.tolerances)
            opts.tolerances = merged
        result = analyze(spec, COMMAND_SECTIONS[command], opts)
    except QsdLabError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        report["ok"] = False
        return report, 1
    if command == "report":
        report["sections"] = result.sections
    else:
        # single-stage commands surface their section at the top level
        last = COMMAND_SECTIONS[command][-1]
        section = dict(result.sections[last])
        section.pop("ok", None)
        report.update(section)
        report["sections"] = {
            k: v for k, v in result.sections.items() if k != last
        }
    report["ok"] = result.ok
    tsv_dir = options.get("tsv_dir")
    if tsv_dir:
        os.makedirs(tsv_dir, exist_ok=True)
        written = []
        for name, rows in sorted(result.curves.items()):
            path = os.path.join(tsv_dir, f"{name}.tsv")
            write_tsv(path, rows)
            written.append(path)
        report["tsv_files"] = [os.path.basename(p) for p in written]
        if written:
            from .plots import render_curve

            report["figure_files"] = [
                os.path.basename(render_curve(p)) for p in written
            ]
    return report, (0 if result.ok else 2)


def main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 1
        options = vars(args)
        command = options.pop("command")
        report, code = run(command, options)
    except QsdLabError as exc:
        report = {
            "schema": SCHEMA,
            "command": command,
            "error": {"type": type(exc).__name__, "message": str(exc)},
            "ok": False,
        }
        options = {}
        code = 1
    text = canonical_json(report)
    if options.get("out"):
        with open(options["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
