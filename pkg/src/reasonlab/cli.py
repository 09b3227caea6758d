"""Command line entry point.

    reasonlab run <scenario.json> [--out report.json] [--no-timestamp]
    reasonlab demos
    reasonlab demo <name> [--out report.json] [--no-timestamp]

Exit codes: 0 all requested checks pass, 1 at least one check fails,
2 the scenario could not be executed. ``REASONLAB_SEED`` overrides the
scenario seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from .core import ReasonlabError
from .scenario import load_scenario, render_text, run

DEMO_PACKAGE = "reasonlab.demos"


def demo_dir() -> Path:
    return Path(str(resources.files(DEMO_PACKAGE)))


def demo_paths() -> dict[str, Path]:
    return {p.stem: p for p in sorted(demo_dir().glob("*.json"))}


def list_demos() -> list[dict]:
    rows = []
    for name, path in demo_paths().items():
        meta = json.loads(path.read_text(encoding="utf-8")).get("demo", {})
        rows.append({
            "name": name,
            "failure_mode": meta.get("failure_mode", ""),
            "topic": meta.get("topic", ""),
            "expect_labels": meta.get("expect_labels", []),
        })
    return rows


def _seed_override() -> Optional[int]:
    raw = os.environ.get("REASONLAB_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw, 0)
    except ValueError:
        raise ReasonlabError(f"REASONLAB_SEED must be an integer, got {raw!r}") from None


def run_scenario(path, out=None, timestamp: bool = True, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        scen = load_scenario(path, _seed_override())
        report = run(scen, timestamp=timestamp)
    except (ReasonlabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if out is not None:
        Path(out).write_text(report.to_json(), encoding="utf-8")
    stream.write(render_text(report))
    return report.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reasonlab", description="Diagnose reasoning systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", type=Path)
    p_demo = sub.add_parser("demo", help="run a bundled demo scenario")
    p_demo.add_argument("name")
    for p in (p_run, p_demo):
        p.add_argument("--out", type=Path, help="write the JSON report here")
        p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp (byte-stable output)")

    sub.add_parser("demos", help="list bundled demo scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "demos":
        rows = list_demos()
        width = max(len(r["name"]) for r in rows)
        for r in rows:
            print(f"{r['name']:<{width}}  {r['failure_mode']:<16}  {r['topic']}")
        return 0
    if args.command == "demo":
        paths = demo_paths()
        if args.name not in paths:
            print(f"error: unknown demo {args.name!r}; try 'reasonlab demos'", file=sys.stderr)
            return 2
        return run_scenario(paths[args.name], args.out, not args.no_timestamp)
    return run_scenario(args.scenario, args.out, not args.no_timestamp)


if __name__ == "__main__":
    raise SystemExit(main())
