"""Check that a generator setting produces a usable modality gap."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .generate import GenConfig, generate, replicate_channels
from .hygiene import evaluation

DEFAULT_GAMMAS = (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)


class GapUnreachableError(RuntimeError):
    def __init__(self, table: str):
        self.table = table
        super().__init__("no gamma puts the replicated-target accuracy inside the band:\n" + table)


@dataclass(frozen=True)
class GapReport:
    seed: int
    gamma: float
    source_accuracy: float
    target_accuracy: float
    band: tuple[float, float]

    @property
    def in_band(self) -> bool:
        lo, hi = self.band
        return self.source_accuracy >= 0.95 and lo <= self.target_accuracy <= hi


def gap_band(source_accuracy: float, n_classes: int) -> tuple[float, float]:
    return 1.2 / n_classes, 0.6 * source_accuracy


def format_table(reports: list[GapReport]) -> str:
    lines = ["gamma  A_s     A_x     band           ok"]
    for r in reports:
        lines.append(f"{r.gamma:<6g} {r.source_accuracy:.3f}  {r.target_accuracy:.3f}  "
                     f"[{r.band[0]:.3f}, {r.band[1]:.3f}] {'yes' if r.in_band else 'no'}")
    return "\n".join(lines)


def calibrate_gap(seed: int, spec: GenConfig = GenConfig(), gammas=None, source_cfg=None):
    """Train a throwaway source model and score it on replicated targets.

    With ``gammas`` unset, returns one :class:`GapReport` for ``spec.gamma``.
    Otherwise sweeps the given values, returns the list of reports, and raises
    :class:`GapUnreachableError` if none lands inside the band. The source
    model depends only on the source view, which gamma does not touch, so it
    is trained once per sweep.
    """
    from ..adapt import default_config, train_source
    from ..adapt.common import source_logits

    cfg = source_cfg or default_config("source", seed)
    grid = [spec.gamma] if gammas is None else [float(g) for g in gammas]
    base = generate(seed, replace(spec, gamma=grid[0]))
    f_s, c, rep = train_source(base, cfg, enforce_floor=False)
    a_s = float(rep["holdout_accuracy"])
    reports = []
    for g in grid:
        data = base if g == grid[0] else generate(seed, replace(spec, gamma=g))
        logits = source_logits(f_s, c, replicate_channels(data.tr_target.images, data.channel_mean,
                                                          data.channel_std))
        with evaluation():
            labels = data.tr_target.eval_labels()
        a_x = float(np.mean(logits.argmax(axis=1) == labels))
        reports.append(GapReport(seed, g, a_s, a_x, gap_band(a_s, data.n_classes)))
    if gammas is None:
        return reports[0]
    if not any(r.in_band for r in reports):
        raise GapUnreachableError(format_table(reports))
    return reports
