"""Write experiment reports: per-trial CSV, summary JSON and a timing file.

Wall-clock times live in their own file so the CSV and summary are
byte-identical across runs with the same seed.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

COLUMNS = ("seed", "realized_loss", "certified_bound", "abstain_mass", "uncovered_error",
           "oracle_calls", "membership", "modified")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) or math.isinf(v) else v
    return value


def columns_for(records) -> list[str]:
    """Fixed leading columns, then any kind-specific extras in first-seen order."""
    extras = []
    for rec in records:
        for key in rec:
            if key not in COLUMNS and key not in extras:
                extras.append(key)
    return list(COLUMNS) + extras


def emit_report(report, out_dir) -> dict:
    """Write ``trials.csv``, ``summary.json`` and ``timing.json``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = columns_for(report.records)
    paths = {"trials": out / "trials.csv", "summary": out / "summary.json", "timing": out / "timing.json"}
    with open(paths["trials"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in report.records:
            writer.writerow([_cell(rec.get(c)) for c in cols])
    doc = {"schema_version": SCHEMA_VERSION, "config": report.config.to_dict(),
           "seeds": [str(s) for s in report.seeds], **report.summary}
    with open(paths["summary"], "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
    times = np.asarray(report.wall_times, dtype=float)
    timing = {"total_seconds": float(times.sum()), "per_trial_seconds": times.tolist(),
              "mean_seconds": float(times.mean()) if len(times) else 0.0}
    with open(paths["timing"], "w") as fh:
        json.dump(timing, fh, indent=2)
        fh.write("\n")
    return paths


def format_summary(summary: dict) -> str:
    lines = [f"{summary['kind']}: {summary['trials']} trials"]
    for key in ("mean_loss", "bound", "min_k_bound", "violation_rate", "membership_rate",
                "generalization_loss", "transductive_loss", "eps1", "eps2"):
        if key in summary and summary[key] is not None:
            lines.append(f"  {key} = {summary[key]:.6g}")
    for ch in summary.get("checks", []):
        mark = "PASS" if ch["passed"] else "FAIL"
        lines.append(f"  [{mark}] {ch['name']}: {ch['value']:.6g} vs {ch['limit']:.6g}")
    return "\n".join(lines)
