"""Run every config in configs/ and write reports under reports/<name>/."""
import argparse
import json
import sys
from pathlib import Path

from abstention.harness.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
COMMANDS = {
    "classification_shift": "classify-shift",
    "adversarial": "adversarial",
    "regression": "regress",
    "generalization": "generalize",
    "pq_metrics": "pq-metrics",
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=ROOT / "reports")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--trials", type=int, help="override every config's trial count")
    parser.add_argument("names", nargs="*", help="config stems to run (default: all experiments)")
    args = parser.parse_args()

    status = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        doc = json.loads(path.read_text())
        if "kind" not in doc or (args.names and path.stem not in args.names):
            continue
        argv = [COMMANDS[doc["kind"]], "--config", str(path), "--out", str(args.out / path.stem),
                "--jobs", str(args.jobs)]
        if args.trials:
            argv += ["--trials", str(args.trials)]
        print(f"== {path.stem}", flush=True)
        code = cli_main(argv)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
