"""Run registry: one directory per run plus an append-only ``index.json``."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

ACCURACY_KEYS = ("source_test", "source_only_target", "tgmb_translated", "target_model")
RUNS_ENV = "XMODAL_RUNS_DIR"


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


@dataclass
class RunRecord:
    run_id: str
    method: str
    seed: int
    config: dict
    config_hash: str
    metrics: dict[str, str] = field(default_factory=dict)  # stage -> path relative to the run dir
    accuracies: dict[str, float] = field(default_factory=dict)
    tag: str = ""

    def __post_init__(self):
        for k, v in self.accuracies.items():
            if k not in ACCURACY_KEYS:
                raise ValueError(f"unknown accuracy key {k!r}")
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"accuracy {k}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)


class RunExistsError(FileExistsError):
    pass


class Registry:
    """Filesystem layout rooted at ``root`` (``runs/`` in the default workspace)."""

    def __init__(self, root: str | Path | None = None):
        if root is None:
            root = os.environ.get(RUNS_ENV) or "runs"
        self.root = Path(root)

    @property
    def index_path(self) -> Path:
        return self.root / "index.json"

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def new_run(self, method: str, seed: int) -> tuple[str, Path]:
        """Reserve a fresh run id and create its directory."""
        self.root.mkdir(parents=True, exist_ok=True)
        while True:
            run_id = f"{method}-s{seed}-{uuid.uuid4().hex[:10]}"
            path = self.run_dir(run_id)
            try:
                path.mkdir()
            except FileExistsError:
                continue
            return run_id, path

    def index(self) -> list[dict]:
        if not self.index_path.is_file():
            return []
        return json.loads(self.index_path.read_text(encoding="utf-8"))

    def register(self, rec: RunRecord) -> None:
        """Append to the index; existing entries are never rewritten."""
        entries = self.index()
        if any(e["run_id"] == rec.run_id for e in entries):
            raise RunExistsError(f"run {rec.run_id} already registered")
        entries.append({"run_id": rec.run_id, "method": rec.method, "seed": rec.seed, "tag": rec.tag})
        tmp = self.index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")
        tmp.replace(self.index_path)

    def load(self, run_id: str) -> RunRecord:
        path = self.run_dir(run_id) / "record.json"
        if not path.is_file():
            raise FileNotFoundError(f"no record for run {run_id} under {self.root}")
        return RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))


def write_config(run_dir: Path, cfg: dict) -> str:
    text = canonical_json(cfg)
    (run_dir / "config.json").write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_record(run_dir: Path, rec: RunRecord) -> None:
    (run_dir / "record.json").write_text(canonical_json(rec.to_dict()), encoding="utf-8")


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([row.get(c, "") for c in columns] if isinstance(row, dict) else row)
