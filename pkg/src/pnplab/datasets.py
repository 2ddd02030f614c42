"""Synthetic datasets with exact ground-truth oracles.

Three generators:
  * sine2d     - noisy points on y = A sin(w x), the thin-curve benchmark
  * gmm2d      - isotropic Gaussian mixture, used for mode-seeking studies
  * movingdot  - short clips of an anti-aliased disc moving at constant
                 velocity with elastic border bounces

Each generator has a matching oracle that measures distance to the true
manifold (curve, mode set, or per-clip trajectory). Positions follow the
(row, col) = (y, x) convention everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CentroidUndefined, ConfigurationError, UsageError
from .grid import Grid, GridShape
from .rng import RngStream

# -- dataset specifications -------------------------------------------


@dataclass(frozen=True)
class SineSpec:
    kind = "sine2d"
    x_range: tuple[float, float] = (-math.pi, math.pi)
    amplitude: float = 1.0
    frequency: float = 1.0
    noise: float = 0.02  # observation noise on y

    def __post_init__(self):
        if self.x_range[1] <= self.x_range[0]:
            raise ConfigurationError(f"empty x range {self.x_range}")
        if self.noise < 0:
            raise ConfigurationError("observation noise must be >= 0")

    @property
    def grid_shape(self) -> GridShape:
        return (1, 1, 1, 2)

    def curve(self, x):
        return self.amplitude * np.sin(self.frequency * np.asarray(x, dtype=np.float64))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "x_range": list(self.x_range),
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "noise": self.noise,
        }


@dataclass(frozen=True)
class GmmSpec:
    kind = "gmm2d"
    centers: tuple[tuple[float, float], ...]
    sigma: float = 0.15

    def __post_init__(self):
        if len(self.centers) == 0:
            raise ConfigurationError("mixture needs at least one mode")
        if self.sigma <= 0:
            raise ConfigurationError("mixture sigma must be > 0")

    @classmethod
    def ring(cls, modes: int = 8, radius: float = 3.0, sigma: float = 0.15) -> "GmmSpec":
        angles = 2.0 * np.pi * np.arange(modes) / modes
        centers = tuple((radius * math.cos(a), radius * math.sin(a)) for a in angles)
        return cls(centers=centers, sigma=sigma)

    @property
    def grid_shape(self) -> GridShape:
        return (1, 1, 1, 2)

    def center_array(self) -> np.ndarray:
        return np.asarray(self.centers, dtype=np.float64)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "centers": [list(c) for c in self.centers],
            "sigma": self.sigma,
        }


@dataclass(frozen=True)
class MovingDotSpec:
    kind = "movingdot"
    frames: int = 8
    height: int = 16
    width: int = 16
    radius: float = 1.5  # pixels
    speed: tuple[float, float] = (0.5, 1.5)  # pixels per frame
    intensity: float = 1.0

    def __post_init__(self):
        if min(self.frames, self.height, self.width) < 2:
            raise ConfigurationError("movingdot needs frames, height, width >= 2")
        if not 0.0 < self.intensity <= 1.0:
            raise ConfigurationError("intensity must lie in (0, 1]")
        if self.radius <= 0:
            raise ConfigurationError("dot radius must be > 0")
        lo, hi = self.bounce_box(self.height)
        if hi <= lo:
            raise ConfigurationError("dot radius too large for the frame")

    @property
    def grid_shape(self) -> GridShape:
        return (self.frames, self.height, self.width, 1)

    def bounce_box(self, size: int) -> tuple[float, float]:
        """Interval the dot center bounces in along an axis of `size` pixels."""
        return (self.radius, (size - 1) - self.radius)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "frames": self.frames,
            "height": self.height,
            "width": self.width,
            "radius": self.radius,
            "speed": list(self.speed),
            "intensity": self.intensity,
        }


DatasetSpec = SineSpec | GmmSpec | MovingDotSpec

_KINDS = {"sine2d": SineSpec, "gmm2d": GmmSpec, "movingdot": MovingDotSpec}


def dataset_spec_from_json(d: dict) -> DatasetSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ConfigurationError(f"unknown dataset kind {kind!r}")
    if kind == "sine2d":
        known = {"x_range", "amplitude", "frequency", "noise"}
    elif kind == "gmm2d":
        known = {"centers", "sigma"}
    else:
        known = {"frames", "height", "width", "radius", "speed", "intensity"}
    extra = set(d) - known
    if extra:
        raise ConfigurationError(f"unknown dataset keys for {kind}: {sorted(extra)}")
    if kind == "sine2d" and "x_range" in d:
        d["x_range"] = tuple(d["x_range"])
    if kind == "gmm2d" and "centers" in d:
        d["centers"] = tuple(tuple(c) for c in d["centers"])
    if kind == "movingdot" and "speed" in d:
        d["speed"] = tuple(d["speed"])
    return _KINDS[kind](**d)


# -- rendering and centroids ------------------------------------------


def render_dot_frame(spec: MovingDotSpec, center: np.ndarray) -> np.ndarray:
    """One (h, w, 1) frame: per-pixel linear coverage ramp of the disc edge."""
    yy = np.arange(spec.height, dtype=np.float64)[:, None]
    xx = np.arange(spec.width, dtype=np.float64)[None, :]
    dist = np.sqrt((yy - center[0]) ** 2 + (xx - center[1]) ** 2)
    cover = np.clip(spec.radius + 0.5 - dist, 0.0, 1.0)
    return (spec.intensity * cover)[:, :, None]


def render_dot_clip(spec: MovingDotSpec, trajectory: np.ndarray) -> np.ndarray:
    return np.stack([render_dot_frame(spec, c) for c in trajectory])


def _fold(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    # Triangle-wave reflection: elastic bounce of a point in [lo, hi].
    span = hi - lo
    y = np.mod(x - lo, 2.0 * span)
    return lo + (span - np.abs(y - span))


def dot_trajectory(spec: MovingDotSpec, start: np.ndarray, velocity: np.ndarray) -> np.ndarray:
    """(frames, 2) center positions with elastic bounces at the borders."""
    steps = np.arange(spec.frames, dtype=np.float64)[:, None]
    raw = start[None, :] + steps * velocity[None, :]
    lo_y, hi_y = spec.bounce_box(spec.height)
    lo_x, hi_x = spec.bounce_box(spec.width)
    out = np.empty_like(raw)
    out[:, 0] = _fold(raw[:, 0], lo_y, hi_y)
    out[:, 1] = _fold(raw[:, 1], lo_x, hi_x)
    return out


def frame_centroid(frame: np.ndarray) -> np.ndarray:
    """(y, x) centroid of a frame's positive mass."""
    mass = np.clip(frame[..., 0] if frame.ndim == 3 else frame, 0.0, None)
    total = mass.sum()
    if total <= 1e-12:
        raise CentroidUndefined("frame has no positive mass")
    yy = np.arange(mass.shape[0], dtype=np.float64)
    xx = np.arange(mass.shape[1], dtype=np.float64)
    cy = float((mass.sum(axis=1) * yy).sum() / total)
    cx = float((mass.sum(axis=0) * xx).sum() / total)
    return np.array([cy, cx])


def clip_centroids(clip: np.ndarray) -> np.ndarray:
    return np.stack([frame_centroid(f) for f in clip])


def temporal_jitter(video) -> float:
    """Deviation from constant-velocity motion of the clip's mass centroid.

    Mean over consecutive frame pairs of the Euclidean distance between the
    observed centroid displacement and the clip's mean displacement. Zero for
    perfectly uniform motion; raises CentroidUndefined on an empty frame.
    """
    clip = video.data if isinstance(video, Grid) else np.asarray(video, dtype=np.float64)
    if clip.shape[0] < 2:
        raise UsageError("temporal jitter needs at least 2 frames")
    cents = clip_centroids(clip)
    disp = np.diff(cents, axis=0)
    dev = disp - disp.mean(axis=0)
    return float(np.linalg.norm(dev, axis=1).mean())


def centroid_error_bound(spec: MovingDotSpec, probes: int = 48) -> float:
    """Measured bound on |rendered centroid - true center| for one frame.

    The error of the linear-coverage renderer depends only on the center's
    subpixel offset while the disc stays interior, so a dense fractional
    probe grid around one interior cell captures the worst case; a 1.25
    headroom factor covers positions between probes.
    """
    by, bx = spec.height // 2, spec.width // 2
    worst = 0.0
    for fy in np.linspace(0.0, 1.0, probes, endpoint=False):
        for fx in np.linspace(0.0, 1.0, probes, endpoint=False):
            center = np.array([by + fy, bx + fx])
            frame = render_dot_frame(spec, center)
            err = np.linalg.norm(frame_centroid(frame) - center)
            worst = max(worst, float(err))
    return 1.25 * worst


def centroid_quantization_bound(spec: MovingDotSpec, probes: int = 48) -> float:
    """Upper bound on temporal jitter of an ideally rendered bounce-free clip.

    With per-frame centroid error at most delta, each displacement is off
    by at most 2*delta and the subtracted mean displacement by at most
    2*delta/(F-1), so jitter <= 2*delta*(1 + 1/(F-1)).
    """
    delta = centroid_error_bound(spec, probes)
    return 2.0 * delta * (1.0 + 1.0 / (spec.frames - 1))


# -- sampling ----------------------------------------------------------


def sample_dataset(spec: DatasetSpec, n: int, rng: RngStream):
    """Draw n samples; returns (samples, labels).

    samples has shape (n, *spec.grid_shape). Labels are mode indices for
    gmm2d, exact (n, frames, 2) center trajectories for movingdot, and
    None for sine2d.
    """
    if n < 1:
        raise UsageError("need n >= 1 samples")
    if isinstance(spec, SineSpec):
        x = rng.uniform(spec.x_range[0], spec.x_range[1], (n,))
        y = spec.curve(x) + spec.noise * rng.normal((n,))
        pts = np.stack([x, y], axis=1)
        return pts.reshape(n, 1, 1, 1, 2), None
    if isinstance(spec, GmmSpec):
        centers = spec.center_array()
        idx = rng.integers(0, len(centers), (n,))
        pts = centers[idx] + spec.sigma * rng.normal((n, 2))
        return pts.reshape(n, 1, 1, 1, 2), idx
    if isinstance(spec, MovingDotSpec):
        lo_y, hi_y = spec.bounce_box(spec.height)
        lo_x, hi_x = spec.bounce_box(spec.width)
        starts = np.stack(
            [rng.uniform(lo_y, hi_y, (n,)), rng.uniform(lo_x, hi_x, (n,))], axis=1
        )
        speeds = rng.uniform(spec.speed[0], spec.speed[1], (n,))
        angles = rng.uniform(0.0, 2.0 * np.pi, (n,))
        vels = np.stack([speeds * np.sin(angles), speeds * np.cos(angles)], axis=1)
        clips = np.empty((n, *spec.grid_shape))
        trajs = np.empty((n, spec.frames, 2))
        for i in range(n):
            trajs[i] = dot_trajectory(spec, starts[i], vels[i])
            clips[i] = render_dot_clip(spec, trajs[i])
        return clips, trajs
    raise ConfigurationError(f"unknown dataset spec {type(spec).__name__}")


# -- oracles -----------------------------------------------------------


class SineOracle:
    """Distance to the noiseless curve via a dense polyline."""

    kind = "sine2d"

    def __init__(self, spec: SineSpec, segments: int = 20000):
        if segments < 10000:
            raise ConfigurationError("polyline needs >= 10^4 segments")
        self.spec = spec
        xs = np.linspace(spec.x_range[0], spec.x_range[1], segments + 1)
        self.polyline = np.stack([xs, spec.curve(xs)], axis=1)
        self.segment_length = float(
            np.linalg.norm(np.diff(self.polyline, axis=0), axis=1).max()
        )

    def curve(self, x):
        return self.spec.curve(x)

    def distance_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        a = self.polyline[:-1]
        ab = self.polyline[1:] - a
        ab_sq = (ab**2).sum(axis=1)
        out = np.empty(len(pts))
        chunk = max(1, int(2_000_000 // len(a)))
        for start in range(0, len(pts), chunk):
            p = pts[start : start + chunk]
            ap = p[:, None, :] - a[None, :, :]
            tt = np.clip((ap * ab[None, :, :]).sum(axis=2) / ab_sq[None, :], 0.0, 1.0)
            closest = a[None, :, :] + tt[:, :, None] * ab[None, :, :]
            d = np.linalg.norm(p[:, None, :] - closest, axis=2)
            out[start : start + chunk] = d.min(axis=1)
        return out


class GmmOracle:
    """Distance to the nearest mode center."""

    kind = "gmm2d"

    def __init__(self, spec: GmmSpec):
        self.spec = spec
        self.centers = spec.center_array()
        self.sigma = spec.sigma

    def nearest_mode(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        d = np.linalg.norm(pts[:, None, :] - self.centers[None, :, :], axis=2)
        return d.argmin(axis=1)

    def distance_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        d = np.linalg.norm(pts[:, None, :] - self.centers[None, :, :], axis=2)
        return d.min(axis=1)


class MovingDotOracle:
    """Per-clip oracle: the exact dot-center trajectory."""

    kind = "movingdot"

    def __init__(self, spec: MovingDotSpec, trajectory: np.ndarray):
        self.spec = spec
        self.trajectory = np.asarray(trajectory, dtype=np.float64)
        if self.trajectory.shape != (spec.frames, 2):
            raise UsageError(
                f"trajectory shape {self.trajectory.shape} != ({spec.frames}, 2)"
            )

    def distance_clip(self, clip: np.ndarray) -> float:
        clip = np.asarray(clip, dtype=np.float64)
        if clip.shape != self.spec.grid_shape:
            raise UsageError(f"clip shape {clip.shape} != {self.spec.grid_shape}")
        cents = clip_centroids(clip)
        return float(np.linalg.norm(cents - self.trajectory, axis=1).mean())


ManifoldOracle = SineOracle | GmmOracle | MovingDotOracle


def oracle_for(spec: DatasetSpec, label=None) -> ManifoldOracle:
    if isinstance(spec, SineSpec):
        return SineOracle(spec)
    if isinstance(spec, GmmSpec):
        return GmmOracle(spec)
    if isinstance(spec, MovingDotSpec):
        if label is None:
            raise UsageError("movingdot oracle needs the clip's trajectory label")
        return MovingDotOracle(spec, label)
    raise ConfigurationError(f"unknown dataset spec {type(spec).__name__}")


def oracle_distance(oracle: ManifoldOracle, sample) -> float:
    """Distance from one sample (Grid or bare array) to the true manifold."""
    data = sample.data if isinstance(sample, Grid) else np.asarray(sample, dtype=np.float64)
    if isinstance(oracle, (SineOracle, GmmOracle)):
        if data.size % 2 != 0:
            raise UsageError(f"sample of shape {data.shape} is not a 2D point set")
        d = oracle.distance_points(data.reshape(-1, 2))
        return float(d[0]) if d.size == 1 else float(d.mean())
    return oracle.distance_clip(data)
