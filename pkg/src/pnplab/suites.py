"""Reproduction suites: canned experiments with pass/fail criteria.

Each suite trains (or loads from the cache) its reference model, runs
matched-seed sampling batteries, writes CSV metrics and SVG plots under
its output directory, and returns one result per criterion. Checkpoints
are cached by the fingerprint of their training config, so reruns skip
training and regenerate byte-identical artifacts.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .canon import canonical_json
from .cli import METRICS_HEADER, _float, _write_csv, train_from_doc
from .datasets import GmmOracle, GmmSpec, MovingDotSpec, SineOracle, SineSpec
from .experiments import (
    ExperimentConfig,
    endpoint_curve,
    euler_vs_pnp,
    run_ablation,
    run_seeds,
)
from .flow import load_checkpoint
from .metrics import (
    MetricReport,
    jitter_metric,
    manifold_metric,
    mask_localization,
    mode_concentration,
)
from .rng import RngStream
from .sampler import NO_CFG, PnPPlan, Schedule, nfe_total
from .svgplot import frame_strip, line_plot, scatter_plot


@dataclass
class SuiteContext:
    out: Path
    cache: Path
    jobs: int = 1


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str


# Reference training configs. All suites over one dataset share a model.
SINE_TRAIN = {
    "dataset": SineSpec().to_json(),
    "net": {"hidden": [64, 64], "activation": "tanh", "time_features": 4},
    "train": {"steps": 20000, "batch_size": 256, "lr": 1e-3, "t_delta": 0.005, "p_drop": 0.0, "seed": 7},
}
GMM_TRAIN = {
    "dataset": GmmSpec.ring(8, 3.0, 0.15).to_json(),
    "net": {"hidden": [64, 64], "activation": "tanh", "time_features": 4},
    "train": {"steps": 20000, "batch_size": 256, "lr": 1e-3, "t_delta": 0.005, "p_drop": 0.0, "seed": 7},
}
DOT_TRAIN = {
    "dataset": MovingDotSpec().to_json(),
    "net": {"hidden": [2048], "activation": "silu", "time_features": 4},
    "train": {"steps": 4000, "batch_size": 64, "lr": 1e-3, "t_delta": 0.005, "p_drop": 0.0, "seed": 7},
}

REFERENCE_SEEDS = (1, 2, 3)

# Toy sampling configuration: 50 uniform steps, refine the sub-0.2 window
# (steps 3..9) three times per step, no uncertainty gating for points.
SINE_STEPS = 50
SINE_PLAN = PnPPlan.early(SINE_STEPS, 0.2, 3)
SINE_TAU = -1.0


def cached_checkpoint(ctx: SuiteContext, train_doc: dict) -> Path:
    key = cfgmod.train_fingerprint(train_doc)
    path = ctx.cache / f"ckpt-{key}" / "checkpoint.ckpt"
    if not path.exists():
        train_from_doc(train_doc, path.parent)
    return path


def _write_reports(out: Path, name: str, reports: list[tuple[int, MetricReport]]) -> None:
    rows = []
    for seed_list, rep in reports:
        for seed, value in zip(seed_list, rep.values):
            rows.append((rep.fingerprint, seed, rep.name, _float(value)))
    _write_csv(out / name, METRICS_HEADER, rows)


def _sine_experiment(ctx: SuiteContext) -> tuple:
    ckpt = load_checkpoint(cached_checkpoint(ctx, SINE_TRAIN))
    net = ckpt.build_net()
    spec = SineSpec()
    config = ExperimentConfig(
        dataset=spec,
        schedule=Schedule.uniform(SINE_STEPS),
        plan=SINE_PLAN,
        tau=SINE_TAU,
        n=2000,
        seeds=REFERENCE_SEEDS,
        metric="manifold",
    )
    return net, spec, config


def suite_toy_sine(ctx: SuiteContext) -> list[CriterionResult]:
    """Manifold-proximity comparison plus fixed-level refinement curves."""
    net, spec, config = _sine_experiment(ctx)
    oracle = SineOracle(spec)
    ctx.out.mkdir(parents=True, exist_ok=True)
    euler_runs, pnp_runs = euler_vs_pnp(net, config)
    rep_e = manifold_metric(euler_runs, oracle, config.fingerprint())
    rep_p = manifold_metric(pnp_runs, oracle, config.fingerprint())
    ratio = rep_p.mean / rep_e.mean
    results = [
        CriterionResult(
            "manifold-ratio<=0.9",
            ratio <= 0.9,
            f"pnp {rep_p.mean:.5f} vs euler {rep_e.mean:.5f} (ratio {ratio:.3f})",
        ),
        CriterionResult("pnp-beats-euler", ratio < 1.0, f"ratio {ratio:.3f}"),
    ]
    expected = nfe_total(config.schedule, config.plan)
    used = pnp_runs[0].nfe_used
    results.append(
        CriterionResult(
            "nfe-plan-arithmetic",
            used == expected == SINE_STEPS + SINE_PLAN.extra_iterations(),
            f"used {used}, closed form {expected}",
        )
    )

    # Fixed-level refinement at t = 0.1 (one coarse step of a 10-step grid).
    chains = endpoint_curve(net, Schedule.uniform(10), 1, 3, 512, seed=REFERENCE_SEEDS[0])
    dists = [float(oracle.distance_points(z.reshape(-1, 2)).mean()) for z in chains]
    tol = 0.02 * dists[0]
    mono = all(dists[k + 1] <= dists[k] + tol for k in range(3))
    results.append(
        CriterionResult(
            "endpoint-distance-nonincreasing",
            mono,
            "k: " + " ".join(f"{d:.4f}" for d in dists) + f" (tol {tol:.4f})",
        )
    )
    final = chains[-1]
    conv = [
        float(np.linalg.norm((z - final).reshape(len(z), -1), axis=1).mean()) for z in chains
    ]
    ctol = 0.02 * conv[0]
    cmono = all(conv[k + 1] <= conv[k] + ctol for k in range(3))
    # Near-linearity is reported, not asserted: share of the total drop
    # happening in the first third of the iterations.
    first_share = (conv[0] - conv[1]) / conv[0] if conv[0] > 0 else 0.0
    results.append(
        CriterionResult(
            "endpoint-convergence-nonincreasing",
            cmono,
            "k: "
            + " ".join(f"{c:.4f}" for c in conv)
            + f" (first-step share {first_share:.2f}; linear would be 0.33)",
        )
    )

    _write_reports(
        ctx.out,
        "metrics.csv",
        [(list(config.seeds), rep_e), (list(config.seeds), rep_p)],
    )
    _write_csv(
        ctx.out / "endpoint_curve.csv",
        "k,mean_distance,mean_gap_to_final",
        [(k, _float(d), _float(c)) for k, (d, c) in enumerate(zip(dists, conv))],
    )
    svg = scatter_plot(
        [("euler", euler_runs[0].points()), ("refined", pnp_runs[0].points())],
        polyline=oracle.polyline,
        title="final samples, seed 1",
    )
    (ctx.out / "scatter.svg").write_text(svg, encoding="utf-8")
    (ctx.out / "endpoint_curve.svg").write_text(
        line_plot(
            list(range(len(dists))),
            [("distance", dists), ("gap-to-final", conv)],
            title="fixed-level refinement at t=0.1",
            x_label="iteration",
        ),
        encoding="utf-8",
    )
    (ctx.out / "config.json").write_text(
        canonical_json({"train": SINE_TRAIN, "experiment": config.to_json()}) + "\n",
        encoding="utf-8",
    )
    return results


def suite_mode_seek(ctx: SuiteContext) -> list[CriterionResult]:
    """Mixture concentration under strong fixed-level refinement."""
    ckpt = load_checkpoint(cached_checkpoint(ctx, GMM_TRAIN))
    net = ckpt.build_net()
    spec = GmmSpec.ring(8, 3.0, 0.15)
    oracle = GmmOracle(spec)
    ctx.out.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        dataset=spec,
        schedule=Schedule.uniform(4),
        plan=PnPPlan.single(2, 32),  # t = 0.5
        tau=SINE_TAU,
        n=2048,
        seeds=REFERENCE_SEEDS,
        metric="mode_fraction",
    )
    euler_runs, pnp_runs = euler_vs_pnp(net, config)
    radius = config.concentration_radius()
    frac_e, ent_e = mode_concentration(euler_runs, oracle, radius, config.fingerprint())
    frac_p, ent_p = mode_concentration(pnp_runs, oracle, radius, config.fingerprint())
    margin = frac_p.mean - frac_e.mean
    results = [
        CriterionResult(
            "concentration-margin>=0.05",
            frac_p.mean > frac_e.mean and margin >= 0.05,
            f"refined {frac_p.mean:.3f} vs euler {frac_e.mean:.3f} at r={radius}",
        ),
        CriterionResult(
            "entropy-not-higher",
            ent_p.mean <= ent_e.mean + 1e-9,
            f"refined {ent_p.mean:.4f} vs euler {ent_e.mean:.4f} (log M = {math.log(len(spec.centers)):.4f})",
        ),
    ]
    _write_reports(
        ctx.out,
        "metrics.csv",
        [
            (list(config.seeds), frac_e),
            (list(config.seeds), ent_e),
            (list(config.seeds), frac_p),
            (list(config.seeds), ent_p),
        ],
    )
    svg = scatter_plot(
        [("euler", euler_runs[0].points()), ("refined", pnp_runs[0].points())],
        polyline=None,
        title="mixture samples, seed 1",
    )
    (ctx.out / "scatter.svg").write_text(svg, encoding="utf-8")
    (ctx.out / "config.json").write_text(
        canonical_json({"train": GMM_TRAIN, "experiment": config.to_json()}) + "\n",
        encoding="utf-8",
    )
    return results


def suite_jitter(ctx: SuiteContext) -> list[CriterionResult]:
    """Temporal-jitter reduction and mask localization on clips."""
    ckpt = load_checkpoint(cached_checkpoint(ctx, DOT_TRAIN))
    net = ckpt.build_net()
    spec = MovingDotSpec()
    ctx.out.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        dataset=spec,
        schedule=Schedule.uniform(20),
        plan=PnPPlan(((1, 4, 2),)),
        tau=0.25,
        n=64,
        seeds=REFERENCE_SEEDS,
        metric="jitter",
        log=True,
    )
    euler_runs, pnp_runs = euler_vs_pnp(net, config)
    rep_e = jitter_metric(euler_runs, spec, config.fingerprint())
    rep_p = jitter_metric(pnp_runs, spec, config.fingerprint())
    ratio_report = mask_localization(pnp_runs, spec, config.fingerprint())
    results = [
        CriterionResult(
            "jitter-not-worse",
            rep_p.mean <= rep_e.mean,
            f"refined {rep_p.mean:.4f} vs euler {rep_e.mean:.4f} "
            f"(excluded {rep_p.excluded}/{rep_e.excluded})",
        ),
        CriterionResult(
            "mask-tube-ratio>1",
            ratio_report.mean > 1.0,
            f"inside/outside {ratio_report.mean:.3f} at tau=0.25",
        ),
    ]
    _write_reports(
        ctx.out,
        "metrics.csv",
        [
            (list(config.seeds), rep_e),
            (list(config.seeds), rep_p),
            (list(config.seeds), ratio_report),
        ],
    )
    first = pnp_runs[0]
    refined_steps = [r for r in first.trajectory if r.iterations > 0 and r.iters]
    mask = refined_steps[0].iters[-1].mask[0] if refined_steps else None
    svg = frame_strip(np.clip(first.samples[0], 0.0, 1.0), mask, title="refined clip, seed 1")
    (ctx.out / "strip.svg").write_text(svg, encoding="utf-8")
    (ctx.out / "config.json").write_text(
        canonical_json({"train": DOT_TRAIN, "experiment": config.to_json()}) + "\n",
        encoding="utf-8",
    )
    return results


def _ablation_suite(ctx: SuiteContext, axis: str, values) -> tuple:
    net, spec, config = _sine_experiment(ctx)
    ctx.out.mkdir(parents=True, exist_ok=True)
    grid = run_ablation(axis, values, net, config)
    _write_csv(
        ctx.out / "ablation.csv",
        "axis,value,fingerprint,seed,metric,value_out",
        [
            (axis, v, fp, s, m, _float(val))
            for (axis, v, fp, s, m, val) in grid.csv_rows()
        ],
    )
    means = [c.mean if c else float("nan") for c in grid.cells]
    (ctx.out / "ablation.svg").write_text(
        line_plot(
            list(grid.values),
            [("manifold distance", means)],
            title=f"sweep over {axis}",
            x_label=axis,
        ),
        encoding="utf-8",
    )
    (ctx.out / "config.json").write_text(
        canonical_json(
            {"train": SINE_TRAIN, "experiment": config.to_json(), "axis": axis, "values": list(values)}
        )
        + "\n",
        encoding="utf-8",
    )
    return net, config, grid, means


def suite_ablate_kf(ctx: SuiteContext) -> list[CriterionResult]:
    """Iteration-count sweep: more refinement must not hurt on average."""
    _, _, grid, means = _ablation_suite(ctx, "K_f", [0, 1, 3])
    complete = all(c is not None for c in grid.cells)
    tol = 0.02 * means[0] if complete else 0.0
    mono = complete and all(means[i + 1] <= means[i] + tol for i in range(len(means) - 1))
    detail = "means " + " ".join(f"{m:.5f}" for m in means)
    return [
        CriterionResult("cells-complete", complete, f"errors: {grid.errors or 'none'}"),
        CriterionResult("distance-nonincreasing-in-K", mono, detail),
    ]


def suite_ablate_tau(ctx: SuiteContext) -> list[CriterionResult]:
    """Threshold sweep: both tau extremes reproduce known trajectories."""
    net, spec, config = _sine_experiment(ctx)
    ctx.out.mkdir(parents=True, exist_ok=True)
    # tau_max: largest uncertainty the reference runs ever produce.
    probe = run_seeds(net, dataclasses.replace(config, tau=-1.0, log=True, n=256))
    tau_max = max(
        float(it.uncertainty.max())
        for run in probe
        for rec in run.trajectory
        for it in rec.iters
    )
    values = [0.0, 0.25, 2.0 * tau_max]
    _, _, grid, means = _ablation_suite(ctx, "tau", values)
    unmasked = run_seeds(net, dataclasses.replace(config, tau=-1.0))
    gate_zero = run_seeds(net, dataclasses.replace(config, tau=0.0))
    euler = run_seeds(net, dataclasses.replace(config, plan=PnPPlan.empty()))
    gate_off = run_seeds(net, dataclasses.replace(config, tau=2.0 * tau_max))
    low_equal = all(
        np.array_equal(a.samples, b.samples) for a, b in zip(gate_zero, unmasked)
    )
    high_equal = all(
        np.array_equal(a.samples, b.samples) for a, b in zip(gate_off, euler)
    )
    return [
        CriterionResult("cells-complete", all(c is not None for c in grid.cells), str(grid.errors or "none")),
        CriterionResult(
            "tau<=0-matches-unmasked", low_equal, f"tau=0 vs tau=-1 on seeds {config.seeds}"
        ),
        CriterionResult(
            "huge-tau-matches-euler", high_equal, f"tau={2.0 * tau_max:.3f} vs empty plan"
        ),
    ]


def suite_ablate_alpha(ctx: SuiteContext) -> list[CriterionResult]:
    """Coverage sweep: wider refinement windows must not hurt on average."""
    net, _, config = _sine_experiment(ctx)
    _, _, grid, means = _ablation_suite(ctx, "alpha", [0.1, 0.2, 0.4])
    complete = all(c is not None for c in grid.cells)
    euler = manifold_metric(
        run_seeds(net, dataclasses.replace(config, plan=PnPPlan.empty())),
        SineOracle(SineSpec()),
        config.fingerprint(),
    )
    never_hurts = complete and all(m <= euler.mean * 1.01 for m in means)
    wider_helps = complete and means[-1] <= means[0]
    return [
        CriterionResult("cells-complete", complete, str(grid.errors or "none")),
        CriterionResult(
            "coverage-never-hurts",
            never_hurts,
            f"cells {' '.join(f'{m:.5f}' for m in means)} vs euler {euler.mean:.5f}",
        ),
        CriterionResult(
            "wider-coverage-contracts-more", wider_helps, f"alpha 0.4 vs 0.1"
        ),
    ]


SUITES = {
    "toy-sine": suite_toy_sine,
    "mode-seek": suite_mode_seek,
    "jitter": suite_jitter,
    "ablate-kf": suite_ablate_kf,
    "ablate-tau": suite_ablate_tau,
    "ablate-alpha": suite_ablate_alpha,
}


def names() -> list[str]:
    return list(SUITES)
