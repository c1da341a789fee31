"""Aggregate persisted run records into a markdown + CSV summary."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .records import ACCURACY_KEYS, Registry, RunRecord


def _cell(values: list[float]) -> str:
    if not values:
        return "-"
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return f"{100 * np.mean(values):.2f} ± {100 * sd:.2f}"


def render(records: list[RunRecord], missing: list[str], name: str) -> tuple[str, str]:
    """Pure function of its inputs: same records, same bytes."""
    records = sorted(records, key=lambda r: (r.method, r.tag, r.seed, r.run_id))
    md = [f"# {name}", ""]
    if not records:
        md += ["No runs.", ""]
    else:
        groups: dict[tuple[str, str], list[RunRecord]] = {}
        for r in records:
            groups.setdefault((r.method, r.tag), []).append(r)
        md += ["## Methods (mean ± sd over seeds, accuracy %)", "",
               "| method | tag | seeds | " + " | ".join(ACCURACY_KEYS) + " |",
               "|---|---|---|" + "---|" * len(ACCURACY_KEYS)]
        for (method, tag), rs in groups.items():
            cells = [_cell([r.accuracies[k] for r in rs if k in r.accuracies]) for k in ACCURACY_KEYS]
            seeds = ",".join(str(r.seed) for r in rs)
            md.append(f"| {method} | {tag or '-'} | {seeds} | " + " | ".join(cells) + " |")
        md += ["", "## Runs", "", "| run | method | tag | seed | " + " | ".join(ACCURACY_KEYS) + " |",
               "|---|---|---|---|" + "---|" * len(ACCURACY_KEYS)]
        for r in records:
            cells = [f"{100 * r.accuracies[k]:.2f}" if k in r.accuracies else "-" for k in ACCURACY_KEYS]
            md.append(f"| {r.run_id} | {r.method} | {r.tag or '-'} | {r.seed} | " + " | ".join(cells) + " |")
        md.append("")
    if missing:
        md += ["## Missing records", ""] + [f"- {m}" for m in sorted(missing)] + [""]

    buf = io.StringIO()
    rows = [{"run_id": r.run_id, "method": r.method, "tag": r.tag, "seed": r.seed,
             **{k: f"{r.accuracies[k]:.6f}" for k in ACCURACY_KEYS if k in r.accuracies}} for r in records]
    cols = ("method", "tag", "seed", "run_id") + ACCURACY_KEYS
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([row.get(c, "") for c in cols])
    return "\n".join(md), buf.getvalue()


def report(run_ids, registry: Registry | None = None, reports_dir: str | Path = "reports",
           name: str = "report") -> dict:
    """Write ``<reports_dir>/<name>.md`` and ``.csv``; unknown ids are listed, not fatal."""
    registry = registry or Registry()
    records, missing = [], []
    for rid in dict.fromkeys(run_ids):
        try:
            records.append(registry.load(rid))
        except FileNotFoundError:
            missing.append(rid)
    md, csv_text = render(records, missing, name)
    reports_dir = Path(reports_dir)
    reports_dir.mkdir(parents=True, exist_ok=True)
    md_path, csv_path = reports_dir / f"{name}.md", reports_dir / f"{name}.csv"
    md_path.write_text(md, encoding="utf-8")
    csv_path.write_text(csv_text, encoding="utf-8")
    return {"md": str(md_path), "csv": str(csv_path), "records": len(records), "missing": missing}

