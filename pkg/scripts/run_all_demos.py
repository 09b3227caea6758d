"""Run every bundled demo, check its advertised labels and time the suite."""

import argparse
import json
import sys
import time
from pathlib import Path

from reasonlab import cli
from reasonlab.scenario import load_scenario, run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", type=Path, help="write one JSON report per demo here")
    args = ap.parse_args(argv)
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    bad = 0
    for name, path in cli.demo_paths().items():
        t = time.perf_counter()
        report = run(load_scenario(path), timestamp=False)
        expect = set(json.loads(path.read_text())["demo"]["expect_labels"])
        missing = expect - report.labels()
        ok = report.exit_code == 1 and not missing
        bad += not ok
        print(f"{'ok ' if ok else 'BAD'} {name:<24} exit={report.exit_code} "
              f"labels={sorted(report.labels())} {time.perf_counter() - t:.2f}s")
        if args.out_dir:
            (args.out_dir / f"{name}.json").write_text(report.to_json())
    print(f"{len(cli.demo_paths())} demos in {time.perf_counter() - t0:.2f}s, {bad} unexpected")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
