"""Metrics over sampling runs: manifold proximity, mode concentration,
temporal jitter, and uncertainty-mask localization.

Every metric is deterministic given the runs. Comparisons between two
samplers are made on matched seeds (identical initial noise), so any
difference is attributable to refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import (
    GmmOracle,
    MovingDotSpec,
    SineOracle,
    clip_centroids,
    temporal_jitter,
)
from .errors import CentroidUndefined, UsageError
from .sampler import SampleRun


@dataclass(frozen=True)
class MetricReport:
    """Per-seed metric values with their aggregate, tagged by config hash."""

    name: str
    values: tuple[float, ...]
    mean: float
    std: float
    count: int
    fingerprint: str
    excluded: int = 0

    @classmethod
    def from_values(
        cls, name: str, values, count: int, fingerprint: str, excluded: int = 0
    ) -> "MetricReport":
        vals = tuple(float(v) for v in values)
        return cls(
            name=name,
            values=vals,
            mean=float(np.mean(vals)),
            std=float(np.std(vals)),
            count=count,
            fingerprint=fingerprint,
            excluded=excluded,
        )


def _run_points(run: SampleRun) -> np.ndarray:
    return run.points()


def _check_point_runs(runs: list[SampleRun]):
    if not runs:
        raise UsageError("no runs given")
    for run in runs:
        if run.samples.shape[1:] != (1, 1, 1, 2):
            raise UsageError(
                f"run with sample shape {run.samples.shape} is not a 2D point run"
            )


def manifold_metric(
    runs: list[SampleRun], oracle: SineOracle | GmmOracle, fingerprint: str = ""
) -> MetricReport:
    """Mean distance of final samples to the true manifold, per seed."""
    _check_point_runs(runs)
    vals = [float(oracle.distance_points(_run_points(r)).mean()) for r in runs]
    return MetricReport.from_values(
        "manifold_distance", vals, count=sum(r.n for r in runs), fingerprint=fingerprint
    )


def mode_concentration(
    runs: list[SampleRun], oracle: GmmOracle, radius: float, fingerprint: str = ""
) -> tuple[MetricReport, MetricReport]:
    """Fraction of samples within `radius` of the nearest mode, and the
    natural-log entropy of the nearest-mode histogram; both per seed."""
    if radius <= 0:
        raise UsageError("concentration radius must be > 0")
    if not isinstance(oracle, GmmOracle):
        raise UsageError("mode concentration needs a mixture oracle")
    _check_point_runs(runs)
    fracs, ents = [], []
    for run in runs:
        pts = _run_points(run)
        d = oracle.distance_points(pts)
        fracs.append(float((d <= radius).mean()))
        idx = oracle.nearest_mode(pts)
        counts = np.bincount(idx, minlength=len(oracle.centers)).astype(np.float64)
        p = counts / counts.sum()
        nz = p[p > 0]
        ents.append(float(-(nz * np.log(nz)).sum()))
    total = sum(r.n for r in runs)
    return (
        MetricReport.from_values("mode_fraction", fracs, total, fingerprint),
        MetricReport.from_values("mode_entropy", ents, total, fingerprint),
    )


def jitter_metric(
    runs: list[SampleRun], spec: MovingDotSpec, fingerprint: str = ""
) -> MetricReport:
    """Mean temporal jitter over generated clips, per seed.

    Clips with an undefined centroid (a frame without positive mass) are
    excluded and counted in the report.
    """
    if not runs:
        raise UsageError("no runs given")
    vals, excluded = [], 0
    for run in runs:
        if run.samples.shape[1:] != spec.grid_shape:
            raise UsageError(
                f"run sample shape {run.samples.shape} != clip shape {spec.grid_shape}"
            )
        per_clip = []
        for clip in run.samples:
            try:
                per_clip.append(temporal_jitter(clip))
            except CentroidUndefined:
                excluded += 1
        if not per_clip:
            raise UsageError("every clip in a run had an undefined centroid")
        vals.append(float(np.mean(per_clip)))
    return MetricReport.from_values(
        "temporal_jitter",
        vals,
        count=sum(r.n for r in runs),
        fingerprint=fingerprint,
        excluded=excluded,
    )


def _trajectory_tube(spec: MovingDotSpec, centroids: np.ndarray) -> np.ndarray:
    """Boolean (f, h, w) tube: per frame, a disc of radius + 1 px around
    that frame's centroid."""
    yy = np.arange(spec.height, dtype=np.float64)[:, None]
    xx = np.arange(spec.width, dtype=np.float64)[None, :]
    r = spec.radius + 1.0
    tube = np.zeros((spec.frames, spec.height, spec.width), dtype=bool)
    for f in range(spec.frames):
        cy, cx = centroids[f]
        tube[f] = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
    return tube


def mask_localization(
    runs: list[SampleRun], spec: MovingDotSpec, fingerprint: str = ""
) -> MetricReport:
    """Inside/outside mean-mask ratio over the motion tube, per seed.

    Uses the accumulated mask of the first planned refinement step. The
    tube is the per-frame disc of radius + 1 px around the final clip's
    mass centroid. A zero outside-mean with mass inside reports +inf.
    """
    if not runs:
        raise UsageError("no runs given")
    vals, excluded = [], 0
    for run in runs:
        if run.trajectory is None:
            raise UsageError("run has no trajectory log")
        step = next((s for s in run.trajectory if s.iterations > 0 and s.iters), None)
        if step is None:
            raise UsageError("no refined step in the trajectory log")
        masks = step.iters[-1].mask  # (n, f, h, w, 1), accumulated
        inside_sum = inside_n = outside_sum = outside_n = 0.0
        for j in range(run.n):
            try:
                cents = clip_centroids(run.samples[j])
            except CentroidUndefined:
                excluded += 1
                continue
            tube = _trajectory_tube(spec, cents)
            m = masks[j, :, :, :, 0]
            inside_sum += float(m[tube].sum())
            inside_n += float(tube.sum())
            outside_sum += float(m[~tube].sum())
            outside_n += float((~tube).sum())
        if inside_n == 0 or outside_n == 0:
            raise UsageError("degenerate tube covering nothing or everything")
        inside_mean = inside_sum / inside_n
        outside_mean = outside_sum / outside_n
        if outside_mean == 0.0:
            vals.append(math.inf if inside_mean > 0 else 1.0)
        else:
            vals.append(inside_mean / outside_mean)
    return MetricReport.from_values(
        "mask_tube_ratio",
        vals,
        count=sum(r.n for r in runs),
        fingerprint=fingerprint,
        excluded=excluded,
    )


@dataclass
class AblationGrid:
    """Matched-seed sweeps along one axis; failed cells keep their error."""

    axis: str
    values: tuple[float, ...]
    cells: list[MetricReport | None] = field(default_factory=list)
    errors: dict[int, str] = field(default_factory=dict)

    def csv_rows(self) -> list[tuple]:
        rows = []
        for value, cell in zip(self.values, self.cells):
            if cell is None:
                continue
            for seed_idx, v in enumerate(cell.values):
                rows.append((self.axis, value, cell.fingerprint, seed_idx, cell.name, v))
        return rows
