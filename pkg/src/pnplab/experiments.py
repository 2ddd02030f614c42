"""Experiment drivers: matched-seed run batteries and ablation sweeps."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .canon import fingerprint
from .datasets import DatasetSpec, GmmOracle, GmmSpec, MovingDotSpec, SineSpec, oracle_for
from .errors import ConfigurationError, PnpLabError, UsageError
from .metrics import (
    AblationGrid,
    MetricReport,
    jitter_metric,
    manifold_metric,
    mask_localization,
    mode_concentration,
)
from .net import VectorFieldNet
from .rng import RngStream
from .sampler import (
    CfgSpec,
    NO_CFG,
    PnPPlan,
    SampleRun,
    Schedule,
    euler_states_at,
    refinement_chain,
    sample,
)

AXES = ("K_f", "tau", "alpha", "cfg_scale")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one sampling experiment needs besides the trained net."""

    dataset: DatasetSpec
    schedule: Schedule
    plan: PnPPlan
    tau: float
    cfg: CfgSpec = NO_CFG
    n: int = 512
    seeds: tuple[int, ...] = (1, 2, 3)
    metric: str = "manifold"  # manifold | mode_fraction | jitter
    radius: float | None = None  # mode_fraction; defaults to 2 sigma
    nfe_mode: str = "per-call"
    log: bool = False

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.to_json(),
            "schedule": list(self.schedule.timesteps),
            "plan": self.plan.to_json(),
            "tau": self.tau,
            "cfg": self.cfg.to_json(),
            "n": self.n,
            "seeds": list(self.seeds),
            "metric": self.metric,
            "radius": self.radius,
            "nfe_mode": self.nfe_mode,
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_json())

    def concentration_radius(self) -> float:
        if self.radius is not None:
            return self.radius
        if isinstance(self.dataset, GmmSpec):
            return 2.0 * self.dataset.sigma
        raise UsageError("concentration radius only defined for mixture datasets")


def run_seeds(net: VectorFieldNet, config: ExperimentConfig) -> list[SampleRun]:
    """One SampleRun per seed; identical seeds give identical initial noise."""
    return [
        sample(
            net,
            config.schedule,
            config.plan,
            config.tau,
            config.cfg,
            config.n,
            RngStream(seed),
            log=config.log,
            nfe_mode=config.nfe_mode,
        )
        for seed in config.seeds
    ]


def euler_vs_pnp(net: VectorFieldNet, config: ExperimentConfig):
    """Matched pair of run batteries: empty plan vs the configured plan."""
    base = dataclasses.replace(config, plan=PnPPlan.empty(), log=False)
    return run_seeds(net, base), run_seeds(net, config)


def evaluate_metric(config: ExperimentConfig, runs: list[SampleRun]) -> MetricReport:
    fp = config.fingerprint()
    if config.metric == "manifold":
        if isinstance(config.dataset, (SineSpec, GmmSpec)):
            return manifold_metric(runs, oracle_for(config.dataset), fp)
        raise UsageError("manifold metric needs a 2D point dataset")
    if config.metric == "mode_fraction":
        if not isinstance(config.dataset, GmmSpec):
            raise UsageError("mode_fraction needs a mixture dataset")
        frac, _ = mode_concentration(
            runs, GmmOracle(config.dataset), config.concentration_radius(), fp
        )
        return frac
    if config.metric == "jitter":
        if not isinstance(config.dataset, MovingDotSpec):
            raise UsageError("jitter metric needs a movingdot dataset")
        return jitter_metric(runs, config.dataset, fp)
    raise ConfigurationError(f"unknown metric {config.metric!r}")


def run_experiment(net: VectorFieldNet, config: ExperimentConfig) -> MetricReport:
    return evaluate_metric(config, run_seeds(net, config))


def mask_ratio_report(net: VectorFieldNet, config: ExperimentConfig) -> MetricReport:
    """Mask-localization ratio on logged runs of the configured plan."""
    if not isinstance(config.dataset, MovingDotSpec):
        raise UsageError("mask localization needs a movingdot dataset")
    runs = run_seeds(net, dataclasses.replace(config, log=True))
    return mask_localization(runs, config.dataset, config.fingerprint())


def endpoint_curve(
    net: VectorFieldNet,
    schedule: Schedule,
    step_index: int,
    K: int,
    n: int,
    seed: int,
    cfg: CfgSpec = NO_CFG,
) -> list[np.ndarray]:
    """Fixed-level refinement trace [zhat1^(0) .. zhat1^(K)] at one step.

    States arrive by plain Euler integration; the perturbation noise is the
    same substream a full sampling run would use at that step.
    """
    rng = RngStream(seed)
    states = euler_states_at(net, schedule, step_index, n, rng, cfg)
    t = schedule.timesteps[step_index]
    return refinement_chain(net, states, t, K, cfg, rng.child("pnp", step_index))


def apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Base config with one swept axis replaced; everything else shared."""
    if axis == "K_f":
        return dataclasses.replace(config, plan=config.plan.with_iterations(int(value)))
    if axis == "tau":
        return dataclasses.replace(config, tau=float(value))
    if axis == "alpha":
        k_base = max((k for _, _, k in config.plan.ranges), default=3)
        plan = PnPPlan.early(config.schedule.num_steps, float(value), k_base)
        return dataclasses.replace(config, plan=plan)
    if axis == "cfg_scale":
        if not config.cfg.enabled:
            raise ConfigurationError("cfg_scale sweep needs guidance enabled")
        return dataclasses.replace(
            config, cfg=dataclasses.replace(config.cfg, scale=float(value))
        )
    raise ConfigurationError(f"unknown ablation axis {axis!r}; choose from {AXES}")


def run_ablation(
    axis: str, values, net: VectorFieldNet, base: ExperimentConfig
) -> AblationGrid:
    """Matched-seed sweep along one axis; failed cells are recorded, not fatal."""
    values = tuple(float(v) for v in values)
    if not values:
        raise UsageError("ablation needs at least one value")
    grid = AblationGrid(axis=axis, values=values)
    for i, value in enumerate(values):
        try:
            cell = run_experiment(net, apply_axis(base, axis, value))
        except PnpLabError as exc:
            grid.cells.append(None)
            grid.errors[i] = str(exc)
        else:
            grid.cells.append(cell)
    return grid
