"""ODE sampling with predict/perturb self-refinement.

The base sampler is the first-order Euler update
    z_{i+1} = z_i + (t_{i+1} - t_i) u(z_i, t_i).
At planned steps the state is refined before moving on: the endpoint
prediction zhat1 = z + (1-t) u is re-corrupted to the same noise level
(t zhat1 + (1-t) eps) and re-predicted, K times. An uncertainty mask
gates the refinement per spatio-temporal location:

    buffer = [pred_z1, pred_z_next, mask]      # carried across iterations
    z_pnp  = t * buffer[0] + (1-t) * eps       # perturb
    field  = u(z_pnp, t)                       # one evaluation (CFG inside)
    cand_z1, cand_zn = z_pnp + (1-t) field, z_pnp + dt field
    umap   = channel-mean |buffer[0] - cand_z1|
    mask   = (umap > tau) OR buffer[2]
    buffer = [blend(mask, cand_z1, buffer[0]), blend(mask, cand_zn, buffer[1]), mask]

and the final buffer's pred_z_next becomes the next state. The first
iteration compares against the endpoint prediction formed from the base
step's already-computed field, so it costs no extra evaluation; each
subsequent iteration costs exactly one.

Noise discipline: the initial state comes from rng.child("init"); the
perturbations at outer step i are drawn sequentially from
rng.child("pnp", i). Changing the plan or tau therefore never shifts the
noise used by other steps, which is what makes matched-seed comparisons
meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError, DomainError, UsageError
from .grid import Grid
from .net import VectorFieldNet
from .rng import RngStream

# -- schedules and plans ------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Strictly increasing timesteps with t_0 = 0 and t_T = 1."""

    timesteps: tuple[float, ...]

    def __post_init__(self):
        ts = self.timesteps
        if len(ts) < 2:
            raise ConfigurationError("schedule needs at least two timesteps")
        if ts[0] != 0.0 or ts[-1] != 1.0:
            raise ConfigurationError("schedule must start at 0 and end at 1")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("timesteps must be strictly increasing")

    @classmethod
    def uniform(cls, steps: int) -> "Schedule":
        return cls(tuple(np.linspace(0.0, 1.0, steps + 1)))

    @classmethod
    def shifted(cls, steps: int, s: float) -> "Schedule":
        """Uniform grid warped by t -> t / (t + s (1 - t)); s > 1 front-loads."""
        if s <= 0:
            raise ConfigurationError("shift factor must be > 0")
        u = np.linspace(0.0, 1.0, steps + 1)
        t = u / (u + s * (1.0 - u))
        t[0], t[-1] = 0.0, 1.0
        return cls(tuple(t))

    @property
    def num_steps(self) -> int:
        return len(self.timesteps) - 1


@dataclass(frozen=True)
class PnPPlan:
    """Which outer steps get refined, and how many iterations each.

    Ranges are (first, last, iterations) with inclusive step indices, e.g.
    ((3, 6, 3), (7, 14, 1)) refines steps 3-6 three times and 7-14 once.
    """

    ranges: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        covered: set[int] = set()
        for first, last, k in self.ranges:
            if first < 0 or last < first:
                raise ConfigurationError(f"bad step range {first}-{last}")
            if k < 1:
                raise ConfigurationError("planned ranges need at least one iteration")
            steps = set(range(first, last + 1))
            if steps & covered:
                raise ConfigurationError("plan ranges overlap")
            covered |= steps

    @classmethod
    def empty(cls) -> "PnPPlan":
        return cls(())

    @classmethod
    def single(cls, step: int, iterations: int) -> "PnPPlan":
        return cls(((step, step, iterations),))

    @classmethod
    def early(cls, num_steps: int, alpha: float, iterations: int, skip: int = 2) -> "PnPPlan":
        """Refine steps with index in (skip, alpha * num_steps), exclusive above.

        For a uniform schedule this is exactly 'timesteps below alpha',
        leaving the first `skip + 1` steps to settle coarse layout.
        """
        last = int(np.ceil(alpha * num_steps)) - 1
        if last <= skip:
            return cls.empty()
        return cls(((skip + 1, min(last, num_steps - 1), iterations),))

    def iterations_at(self, step: int) -> int:
        for first, last, k in self.ranges:
            if first <= step <= last:
                return k
        return 0

    @property
    def max_step(self) -> int:
        return max((last for _, last, _ in self.ranges), default=-1)

    def coverage(self, num_steps: int) -> float:
        """Largest covered step index over the step count (interval rate)."""
        return 0.0 if self.max_step < 0 else self.max_step / num_steps

    def extra_iterations(self) -> int:
        return sum((last - first + 1) * k for first, last, k in self.ranges)

    def validate_for(self, schedule: Schedule) -> None:
        if self.max_step >= schedule.num_steps:
            raise ConfigurationError(
                f"plan references step {self.max_step}, schedule has {schedule.num_steps} steps"
            )

    def with_iterations(self, k: int) -> "PnPPlan":
        """Same coverage, every range set to k iterations; k = 0 empties."""
        if k == 0:
            return PnPPlan.empty()
        return PnPPlan(tuple((first, last, k) for first, last, _ in self.ranges))

    def to_json(self) -> dict:
        return {f"{first}-{last}": k for first, last, k in self.ranges}

    @classmethod
    def from_json(cls, d: dict) -> "PnPPlan":
        ranges = []
        for key, k in d.items():
            parts = str(key).split("-")
            if len(parts) == 1:
                first = last = int(parts[0])
            elif len(parts) == 2:
                first, last = int(parts[0]), int(parts[1])
            else:
                raise ConfigurationError(f"bad plan range {key!r}")
            ranges.append((first, last, int(k)))
        ranges.sort()
        return cls(tuple(ranges))


@dataclass(frozen=True)
class CfgSpec:
    """Classifier-free guidance: u = u_null + scale * (u_cond - u_null)."""

    enabled: bool = False
    scale: float = 0.0
    cond: int | None = None

    def __post_init__(self):
        if self.scale < 0:
            raise ConfigurationError("guidance scale must be >= 0")
        if self.enabled and self.cond is None:
            raise ConfigurationError("enabled guidance needs a condition id")

    def to_json(self) -> dict:
        return {"enabled": self.enabled, "scale": self.scale, "cond": self.cond}


NO_CFG = CfgSpec()


def guided_field(net: VectorFieldNet, z: np.ndarray, t: float, cfg: CfgSpec):
    """CFG-combined field on a batch; returns (field, passes_consumed)."""
    if not cfg.enabled:
        return net.forward(z, t, cfg.cond), 1
    u_cond = net.forward(z, t, cfg.cond)
    u_null = net.forward(z, t, None)
    return u_null + cfg.scale * (u_cond - u_null), 2


# -- single-grid operators ----------------------------------------------


def euler_step(net: VectorFieldNet, z: Grid, t_i: float, t_next: float, cfg: CfgSpec = NO_CFG):
    """One Euler update; returns (z_next, field) so the field can be reused."""
    if not t_i < t_next <= 1.0:
        raise UsageError(f"need t_i < t_next <= 1, got {t_i}, {t_next}")
    field, _ = guided_field(net, z.data[None], t_i, cfg)
    field = field[0]
    return Grid(z.data + (t_next - t_i) * field), Grid(field)


def predict_endpoint(z: Grid, t: float, field: Grid) -> Grid:
    """Denoiser view: zhat1 = z + (1 - t) * field."""
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"time {t} outside [0, 1]")
    return Grid(z.data + (1.0 - t) * field.data)


def perturb(z: Grid, t: float, rng: RngStream) -> Grid:
    """Re-corrupt to noise level t: t*z + (1-t)*eps with eps ~ N(0, I)."""
    if not 0.0 <= t <= 1.0:
        raise UsageError(f"time {t} outside [0, 1]")
    eps = rng.normal(z.shape)
    return Grid(t * z.data + (1.0 - t) * eps)


def pnp_iteration(net: VectorFieldNet, z_t: Grid, t: float, cfg: CfgSpec, rng: RngStream):
    """One predict-then-perturb cycle; returns (z_refined, zhat1)."""
    if t >= 1.0:
        raise DomainError("refinement at t = 1 is degenerate")
    field, _ = guided_field(net, z_t.data[None], t, cfg)
    zhat1 = predict_endpoint(z_t, t, Grid(field[0]))
    return perturb(zhat1, t, rng), zhat1


def refined_euler_step(
    net: VectorFieldNet,
    z_t: Grid,
    t_i: float,
    t_next: float,
    K: int,
    cfg: CfgSpec = NO_CFG,
    rng: RngStream | None = None,
) -> Grid:
    """K refinement cycles, then one Euler step from the refined state.

    K = 0 reduces to euler_step exactly and consumes no randomness.
    """
    if K < 0:
        raise UsageError("iteration count must be >= 0")
    if K > 0 and rng is None:
        raise UsageError("refinement needs a noise stream")
    z = z_t
    for _ in range(K):
        z, _ = pnp_iteration(net, z, t_i, cfg, rng)
    z_next, _ = euler_step(net, z, t_i, t_next, cfg)
    return z_next


# -- uncertainty gating ---------------------------------------------------


def _channel_mean_absdiff(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    if prev.shape != cur.shape:
        raise UsageError(f"shape mismatch {prev.shape} vs {cur.shape}")
    return np.abs(prev - cur).mean(axis=-1, keepdims=True)


def uncertainty_map(prev_z1: Grid, cur_z1: Grid) -> Grid:
    """Per-location channel-averaged |prev - cur|, shape (f, h, w, 1)."""
    return Grid(_channel_mean_absdiff(prev_z1.data, cur_z1.data))


def uncertainty_mask(umap: Grid, tau: float, prev_mask: Grid) -> Grid:
    """(umap > tau) OR prev_mask; ties at tau stay unrefined."""
    if umap.shape != prev_mask.shape:
        raise UsageError(f"map shape {umap.shape} != mask shape {prev_mask.shape}")
    return Grid(np.maximum((umap.data > tau).astype(np.float64), prev_mask.data))


def masked_blend(mask: Grid, refined: Grid, kept: Grid) -> Grid:
    """Per-location select, the mask broadcasting over channels."""
    if refined.shape != kept.shape:
        raise UsageError(f"shape mismatch {refined.shape} vs {kept.shape}")
    m = mask.data
    if m.shape[:3] != refined.shape[:3] or m.shape[3] not in (1, refined.shape[3]):
        raise UsageError(f"mask shape {mask.shape} does not broadcast over {refined.shape}")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise UsageError("mask must be binary")
    return Grid(m * refined.data + (1.0 - m) * kept.data)


# -- full sampling runs ---------------------------------------------------


@dataclass
class PnPBuffer:
    """The triple carried across refinement iterations within one step."""

    pred_z1: np.ndarray
    pred_z_next: np.ndarray
    mask: np.ndarray


@dataclass
class IterationRecord:
    k: int
    uncertainty: np.ndarray | None  # (n, f, h, w, 1)
    mask: np.ndarray | None
    pred_z1: np.ndarray | None  # blended prediction after this iteration


@dataclass
class StepRecord:
    index: int
    t: float
    iterations: int
    z_next: np.ndarray
    z1_base: np.ndarray | None = None
    iters: list[IterationRecord] = dc_field(default_factory=list)


@dataclass
class SampleRun:
    samples: np.ndarray  # (n, f, h, w, c) states at t = 1
    nfe_used: int
    nfe_calls: int
    nfe_passes: int
    seed: int
    schedule: Schedule
    plan: PnPPlan
    tau: float
    cfg: CfgSpec
    nfe_mode: str
    trajectory: list[StepRecord] | None = None

    @property
    def n(self) -> int:
        return len(self.samples)

    def sample_grid(self, i: int) -> Grid:
        return Grid(self.samples[i])

    def points(self) -> np.ndarray:
        """(n, 2) view for runs over 2D point datasets."""
        if self.samples.shape[1:] != (1, 1, 1, 2):
            raise UsageError(f"run samples of shape {self.samples.shape} are not 2D points")
        return self.samples.reshape(-1, 2)


def nfe_total(
    schedule: Schedule,
    plan: PnPPlan,
    nfe_mode: str = "per-call",
    cfg: CfgSpec = NO_CFG,
) -> int:
    """Closed-form count of field evaluations a run consumes.

    per-call counts one per (possibly CFG-paired) evaluation; per-pass
    counts individual network passes, doubling when guidance is enabled.
    """
    plan_steps = [plan.iterations_at(i) for i in range(schedule.num_steps)]
    if plan.max_step >= schedule.num_steps:
        raise ConfigurationError("plan does not fit the schedule")
    calls = schedule.num_steps + sum(plan_steps)
    if nfe_mode == "per-call":
        return calls
    if nfe_mode == "per-pass":
        return calls * (2 if cfg.enabled else 1)
    raise ConfigurationError(f"unknown NFE counting mode {nfe_mode!r}")


def sample(
    net: VectorFieldNet,
    schedule: Schedule,
    plan: PnPPlan,
    tau: float,
    cfg: CfgSpec,
    n: int,
    rng: RngStream,
    log: bool = False,
    nfe_mode: str = "per-call",
) -> SampleRun:
    """Run n chains of the refined sampler from prior noise to t = 1.

    tau above every reachable uncertainty freezes all refinement (the run
    then matches plain Euler element-wise); tau < 0 refines everywhere.
    """
    plan.validate_for(schedule)
    if nfe_mode not in ("per-call", "per-pass"):
        raise ConfigurationError(f"unknown NFE counting mode {nfe_mode!r}")
    if n < 1:
        raise UsageError("need n >= 1 chains")
    ts = schedule.timesteps
    gshape = net.config.grid_shape
    z = rng.child("init").normal((n, *gshape))
    calls = passes = 0
    records: list[StepRecord] | None = [] if log else None

    for i in range(schedule.num_steps):
        t_i, t_next = ts[i], ts[i + 1]
        dt = t_next - t_i
        field, p = guided_field(net, z, t_i, cfg)
        calls += 1
        passes += p
        z_next = z + dt * field
        K = plan.iterations_at(i)
        rec = StepRecord(index=i, t=t_i, iterations=K, z_next=z_next) if log else None

        if K > 0:
            # Endpoint prediction from the already-computed base field.
            buf = PnPBuffer(
                pred_z1=z + (1.0 - t_i) * field,
                pred_z_next=z_next,
                mask=np.zeros((n, *gshape[:3], 1)),
            )
            if rec is not None:
                rec.z1_base = buf.pred_z1
            step_rng = rng.child("pnp", i)
            for k in range(1, K + 1):
                eps = step_rng.normal((n, *gshape))
                z_pnp = t_i * buf.pred_z1 + (1.0 - t_i) * eps
                fld, p = guided_field(net, z_pnp, t_i, cfg)
                calls += 1
                passes += p
                cand_z1 = z_pnp + (1.0 - t_i) * fld
                cand_zn = z_pnp + dt * fld
                umap = _channel_mean_absdiff(buf.pred_z1, cand_z1)
                mask = np.maximum(buf.mask, (umap > tau).astype(np.float64))
                buf = PnPBuffer(
                    pred_z1=mask * cand_z1 + (1.0 - mask) * buf.pred_z1,
                    pred_z_next=mask * cand_zn + (1.0 - mask) * buf.pred_z_next,
                    mask=mask,
                )
                if rec is not None:
                    rec.iters.append(
                        IterationRecord(k=k, uncertainty=umap, mask=mask, pred_z1=buf.pred_z1)
                    )
            z_next = buf.pred_z_next
            if rec is not None:
                rec.z_next = z_next
        z = z_next
        if records is not None:
            records.append(rec)

    nfe_used = calls if nfe_mode == "per-call" else passes
    run = SampleRun(
        samples=z,
        nfe_used=nfe_used,
        nfe_calls=calls,
        nfe_passes=passes,
        seed=rng.seed,
        schedule=schedule,
        plan=plan,
        tau=tau,
        cfg=cfg,
        nfe_mode=nfe_mode,
        trajectory=records,
    )
    expected = nfe_total(schedule, plan, nfe_mode, cfg)
    if run.nfe_used != expected:
        raise AssertionError(f"NFE accounting drifted: used {run.nfe_used}, expected {expected}")
    return run


def euler_states_at(
    net: VectorFieldNet,
    schedule: Schedule,
    step_index: int,
    n: int,
    rng: RngStream,
    cfg: CfgSpec = NO_CFG,
) -> np.ndarray:
    """Plain-Euler states at timestep index `step_index` (0 = prior noise).

    Uses the same init substream as `sample`, so these states equal the
    prefix of any run with the same seed.
    """
    if not 0 <= step_index <= schedule.num_steps:
        raise UsageError(f"step index {step_index} outside schedule")
    ts = schedule.timesteps
    z = rng.child("init").normal((n, *net.config.grid_shape))
    for i in range(step_index):
        field, _ = guided_field(net, z, ts[i], cfg)
        z = z + (ts[i + 1] - ts[i]) * field
    return z


def refinement_chain(
    net: VectorFieldNet,
    states: np.ndarray,
    t: float,
    K: int,
    cfg: CfgSpec,
    rng: RngStream,
) -> list[np.ndarray]:
    """Unmasked fixed-level refinement; returns [zhat1^(0), ..., zhat1^(K)].

    Each chain alternates corrupt-to-level-t and re-predict, starting from
    the given states at level t. Consumes K + 1 field evaluations.
    """
    if t >= 1.0:
        raise DomainError("refinement at t = 1 is degenerate")
    z = np.asarray(states, dtype=np.float64)
    field, _ = guided_field(net, z, t, cfg)
    zhat1 = z + (1.0 - t) * field
    out = [zhat1]
    for _ in range(K):
        eps = rng.normal(z.shape)
        z = t * out[-1] + (1.0 - t) * eps
        field, _ = guided_field(net, z, t, cfg)
        out.append(z + (1.0 - t) * field)
    return out
