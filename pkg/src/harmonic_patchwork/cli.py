"""Command-line entry point: ``harmonic-patchwork run|validate|list-examples``."""
from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .errors import ConfigError, PatchworkError
from .runner import run_scenario
from .scenario import validate_config

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("harmonic_patchwork") / "scenarios"
    return {p.name: Path(str(p)) for p in sorted(root.iterdir(), key=lambda q: q.name) if p.name.endswith(".json")}


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        if path in bundled:
            p = bundled[path]
    return p.read_text()


def _load(path: str):
    try:
        text = _read(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return validate_config(text)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="harmonic-patchwork", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run a scenario and write report.json")
    run.add_argument("config", help="scenario file, or the name of a bundled example")
    run.add_argument("--out-dir", default="out", help="directory for report.json and CSV exports")
    run.add_argument("--seed", type=int, default=None, help="seed for randomized suites (overrides the scenario)")
    val = sub.add_parser("validate", help="check a scenario without running it")
    val.add_argument("config")
    sub.add_parser("list-examples", help="list bundled scenarios")
    args = parser.parse_args(argv)

    if args.cmd == "list-examples":
        for name in bundled_scenarios():
            print(name)
        return EXIT_OK
    try:
        scenario = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.cmd == "validate":
        print(f"{args.config}: ok ({len(scenario.commands)} commands, r = {scenario.family.r})")
        return EXIT_OK
    try:
        report = run_scenario(scenario, args.out_dir, args.seed)
    except (PatchworkError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in report.commands:
        mark = "PASS" if c.passed else c.status.upper() if c.status != "ok" else "FAIL"
        print(f"[{mark}] {c.index}: {c.command} {c.message}".rstrip())
    print(f"report: {Path(args.out_dir) / 'report.json'}")
    if report.errored:
        return EXIT_RUNTIME
    return EXIT_OK if report.passed else EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
