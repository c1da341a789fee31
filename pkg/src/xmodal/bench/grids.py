"""Seed-averaged ablation tables and single-parameter sensitivity sweeps."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .experiment import ExperimentConfig, clear_memo, execute, persist
from .records import Registry, RunRecord, write_csv

TGMB_TERMS = ("L_rec", "L_D1", "L_D2", "L_IM")
TGKT_TERMS = ("L_kd", "L_f", "L_self")
TGMB_ROWS = (
    ("L_rec",),
    ("L_rec", "L_D1"),
    ("L_rec", "L_D2"),
    ("L_rec", "L_IM"),
    ("L_rec", "L_D1", "L_D2"),
    ("L_rec", "L_D1", "L_D2", "L_IM"),
)
TGKT_ROWS = (
    ("L_kd",),
    ("L_kd", "L_f"),
    ("L_kd", "L_self"),
    ("L_kd", "L_f", "L_self"),
)
SWEEP_GRIDS = {
    "alpha_d": (0.0, 0.1, 0.5, 1.0, 5.0),
    "alpha_im": (0.0, 0.1, 0.2, 0.5, 1.0),
    "beta_f": (0.0, 0.1, 0.2, 0.5, 2.0),
    "beta_self": (0.0, 0.1, 0.5, 1.0, 2.0),
}


class EmptySeedsError(ValueError):
    pass


@dataclass(frozen=True)
class AblationSpec:
    stage: str
    rows: tuple[tuple[str, ...], ...] = ()

    def __post_init__(self):
        if self.stage not in ("tgmb", "tgkt"):
            raise ValueError(f"ablations exist for tgmb and tgkt, not {self.stage!r}")
        rows = self.rows or (TGMB_ROWS if self.stage == "tgmb" else TGKT_ROWS)
        terms, anchor = (TGMB_TERMS, "L_rec") if self.stage == "tgmb" else (TGKT_TERMS, "L_kd")
        for row in rows:
            bad = set(row) - set(terms)
            if bad:
                raise ValueError(f"unknown {self.stage} terms {sorted(bad)}")
            if anchor not in row:
                raise ValueError(f"every {self.stage} ablation row keeps {anchor}")
        object.__setattr__(self, "rows", tuple(tuple(r) for r in rows))

    @property
    def terms(self) -> tuple[str, ...]:
        return TGMB_TERMS if self.stage == "tgmb" else TGKT_TERMS

    @property
    def metric(self) -> str:
        return "tgmb_translated" if self.stage == "tgmb" else "target_model"


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...] = ()
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.parameter not in SWEEP_GRIDS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}; expected one of {sorted(SWEEP_GRIDS)}")
        object.__setattr__(self, "values", tuple(self.values or SWEEP_GRIDS[self.parameter]))
        object.__setattr__(self, "seeds", tuple(self.seeds))

    @property
    def stage(self) -> str:
        return "tgmb" if self.parameter.startswith("alpha") else "tgkt"

    @property
    def metric(self) -> str:
        return "tgmb_translated" if self.stage == "tgmb" else "target_model"


def row_label(row: tuple[str, ...]) -> str:
    return "+".join(t.removeprefix("L_") for t in row)


def ablation_config(base: ExperimentConfig, stage: str, row: tuple[str, ...]) -> ExperimentConfig:
    if stage == "tgmb":
        w = base.tgmb.weights
        cfg = base.with_stage(
            "tgmb",
            use_d1="L_D1" in row, use_d2="L_D2" in row,
            alpha_d=w.alpha_d if ("L_D1" in row or "L_D2" in row) else 0.0,
            alpha_im=w.alpha_im if "L_IM" in row else 0.0,
        )
        return replace(cfg, method="tgmb")
    w = base.tgkt.weights
    cfg = base.with_stage("tgkt", beta_f=w.beta_f if "L_f" in row else 0.0,
                          beta_self=w.beta_self if "L_self" in row else 0.0)
    return replace(cfg, method="tgkt")


def sweep_config(base: ExperimentConfig, parameter: str, value: float) -> ExperimentConfig:
    stage = "tgmb" if parameter.startswith("alpha") else "tgkt"
    return replace(base.with_stage(stage, **{parameter: float(value)}), method=stage)


# ---------------------------------------------------------------------------
# fan-out


def _run_group(jobs: list[tuple[dict, str]], root: str) -> list[dict]:
    """Worker body: jobs sharing a seed run in one process so stages are reused."""
    registry = Registry(root)
    out = []
    for cfg_dict, tag in jobs:
        cfg = ExperimentConfig.from_dict(cfg_dict)
        out.append(persist(execute(cfg), cfg, registry, tag).to_dict())
    clear_memo()
    return out


def run_jobs(jobs: list[tuple[ExperimentConfig, str]], registry: Registry, threads: int = 1) -> list[RunRecord]:
    """Execute configs (grouped by seed), register them in job order."""
    groups: dict[int, list[int]] = {}
    for i, (cfg, _) in enumerate(jobs):
        groups.setdefault(cfg.seed, []).append(i)
    payload = {s: [(jobs[i][0].to_dict(), jobs[i][1]) for i in idx] for s, idx in groups.items()}
    results: dict[int, dict] = {}
    if threads <= 1 or len(groups) == 1:
        for s, idx in groups.items():
            for i, rec in zip(idx, _run_group(payload[s], str(registry.root))):
                results[i] = rec
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {s: pool.submit(_run_group, payload[s], str(registry.root)) for s in groups}
            for s, fut in futures.items():
                for i, rec in zip(groups[s], fut.result()):
                    results[i] = rec
    records = [RunRecord.from_dict(results[i]) for i in range(len(jobs))]
    for rec in records:
        registry.register(rec)
    return records


# ---------------------------------------------------------------------------
# tables


@dataclass
class TableRow:
    label: str
    values: list[float] = field(default_factory=list)
    flags: dict[str, bool] = field(default_factory=dict)
    run_ids: list[str] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0


@dataclass
class TableResult:
    name: str
    metric: str
    seeds: tuple[int, ...]
    rows: list[TableRow]
    columns: tuple[str, ...] = ()
    best: str | None = None
    paths: dict[str, str] = field(default_factory=dict)

    @property
    def flags_mode(self) -> bool:
        """Ablation tables show term check marks; sweep tables show the value."""
        return self.columns != ("value",)

    def row(self, label: str) -> TableRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)


def _fmt(v: float) -> str:
    return f"{100.0 * v:.2f}"


def render_text(table: TableResult) -> str:
    head = list(table.columns) + ["mean", "sd", "n"]
    body = []
    for r in table.rows:
        marks = ["x" if r.flags.get(c) else "" for c in table.columns] if table.flags_mode else [r.label]
        best = " *" if table.best == r.label else ""
        body.append(marks + [_fmt(r.mean) + best, _fmt(r.sd), str(len(r.values))])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"  # noqa: E731
    out = [f"## {table.name}", "", f"metric: {table.metric} accuracy (%), seeds: "
           + ",".join(str(s) for s in table.seeds), "", line(head),
           "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(b) for b in body]
    if table.best is not None:
        out += ["", f"* argmax: {table.best}"]
    return "\n".join(out) + "\n"


def write_table(table: TableResult, reports_dir: str | Path) -> TableResult:
    reports_dir = Path(reports_dir)
    reports_dir.mkdir(parents=True, exist_ok=True)
    csv_path = reports_dir / f"{table.name}.csv"
    md_path = reports_dir / f"{table.name}.md"
    cols = list(table.columns) + ["mean", "sd", "n", "argmax", "values", "run_ids"]
    rows = []
    for r in table.rows:
        cells = [int(bool(r.flags.get(c))) for c in table.columns] if table.flags_mode else [r.label]
        rows.append(cells + [f"{r.mean:.6f}", f"{r.sd:.6f}", len(r.values), int(table.best == r.label),
                             ";".join(f"{v:.6f}" for v in r.values), ";".join(r.run_ids)])
    write_csv(csv_path, cols, rows)
    md_path.write_text(render_text(table), encoding="utf-8")
    table.paths = {"csv": str(csv_path), "md": str(md_path)}
    return table


def _check_seeds(seeds) -> tuple[int, ...]:
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise EmptySeedsError("at least one seed is required")
    return seeds


def run_ablation(spec: AblationSpec, seeds, base: ExperimentConfig | None = None,
                 registry: Registry | None = None, reports_dir: str | Path = "reports",
                 name: str | None = None, threads: int = 1) -> TableResult:
    """One row per term subset, mean and sd of the stage metric over seeds."""
    seeds = _check_seeds(seeds)
    base = base or ExperimentConfig()
    registry = registry or Registry()
    jobs = [(ablation_config(base.with_seed(s), spec.stage, row), f"ablation:{spec.stage}:{row_label(row)}")
            for s in seeds for row in spec.rows]
    records = run_jobs(jobs, registry, threads)
    rows = {row_label(r): TableRow(row_label(r), flags={t: t in r for t in spec.terms}) for r in spec.rows}
    for (cfg, tag), rec in zip(jobs, records):
        row = rows[tag.rsplit(":", 1)[1]]
        row.values.append(rec.accuracies[spec.metric])
        row.run_ids.append(rec.run_id)
    table = TableResult(name or f"ablation_{spec.stage}", spec.metric, seeds, list(rows.values()), spec.terms)
    return write_table(table, reports_dir)


def run_sweep(spec: SweepSpec, base: ExperimentConfig | None = None, registry: Registry | None = None,
              reports_dir: str | Path = "reports", name: str | None = None, threads: int = 1) -> TableResult:
    """Grid x seeds; per-value mean accuracy with the argmax marked."""
    seeds = _check_seeds(spec.seeds)
    base = base or ExperimentConfig()
    registry = registry or Registry()
    jobs = [(sweep_config(base.with_seed(s), spec.parameter, v), f"sweep:{spec.parameter}={v:g}")
            for s in seeds for v in spec.values]
    records = run_jobs(jobs, registry, threads)
    rows = {f"{v:g}": TableRow(f"{v:g}") for v in spec.values}
    for (cfg, tag), rec in zip(jobs, records):
        row = rows[tag.split("=", 1)[1]]
        row.values.append(rec.accuracies[spec.metric])
        row.run_ids.append(rec.run_id)
    ordered = list(rows.values())
    best = max(ordered, key=lambda r: r.mean).label  # first value wins ties
    table = TableResult(name or f"sweep_{spec.parameter}", spec.metric, seeds, ordered, ("value",), best)
    return write_table(table, reports_dir)
