"""Batch front-end: train models, sample, evaluate, and reproduce suites.

Exit codes: 0 success, 2 configuration or input error, 3 runtime numeric
failure, 1 reproduction-criteria failure. Every command writes a
canonicalized copy of its config beside its outputs, and rerunning a
command with the same config and seeds overwrites with identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .canon import canonical_json, fingerprint
from .datasets import (
    GmmOracle,
    GmmSpec,
    MovingDotSpec,
    SineOracle,
    SineSpec,
    dataset_spec_from_json,
    oracle_for,
)
from .errors import PnpLabError, TrainingDiverged, UsageError
from .flow import Checkpoint, load_checkpoint, save_checkpoint, train
from .gridio import read_grids, write_grids
from .metrics import jitter_metric, manifold_metric, mask_localization, mode_concentration
from .net import VectorFieldNet
from .rng import RngStream
from .sampler import (
    IterationRecord,
    NO_CFG,
    SampleRun,
    StepRecord,
    nfe_total,
    sample,
)
from .svgplot import frame_strip, scatter_plot

METRICS_HEADER = "fingerprint,seed,metric,value"


def _write_csv(path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _float(v: float) -> str:
    return repr(float(v))


# -- train -----------------------------------------------------------------


def train_from_doc(doc: dict, out: Path) -> Path:
    """Run training per config; returns the checkpoint path."""
    spec = cfgmod.build_dataset(doc)
    net_cfg = cfgmod.build_net_config(doc, spec)
    train_cfg = cfgmod.build_train_config(doc)
    net = VectorFieldNet.initialize(net_cfg, RngStream(train_cfg.seed))
    net, losses = train(spec, net, train_cfg)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.ckpt"
    save_checkpoint(ckpt_path, Checkpoint.of(spec, net, train_cfg.steps, train_cfg.seed))
    _write_csv(
        out / "loss_curve.csv",
        "step,loss",
        [(i, _float(v)) for i, v in enumerate(losses)],
    )
    cfgmod.write_canonical_config(doc, out / "config.json")
    return ckpt_path


def cmd_train(args) -> int:
    doc = cfgmod.load_config(args.config)
    if args.seed is not None:
        doc.setdefault("train", {})["seed"] = args.seed
        cfgmod.validate_config(doc)
    train_from_doc(doc, Path(args.out))
    return 0


# -- sample ------------------------------------------------------------------


def _seed_worker(payload):
    (ckpt_path, schedule, plan, tau, cfg, n, seed, log, nfe_mode) = payload
    net = load_checkpoint(ckpt_path).build_net()
    return sample(net, schedule, plan, tau, cfg, n, RngStream(seed), log=log, nfe_mode=nfe_mode)


def run_config_seeds(doc: dict, ckpt_path, jobs: int = 1) -> list[SampleRun]:
    schedule = cfgmod.build_schedule(doc)
    plan = cfgmod.build_plan(doc)
    cfg = cfgmod.build_cfg(doc)
    tau = float(doc.get("tau", 0.25))
    params = cfgmod.sample_params(doc)
    payloads = [
        (str(ckpt_path), schedule, plan, tau, cfg, params["n"], seed, params["log"], params["nfe_mode"])
        for seed in params["seeds"]
    ]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_seed_worker, payloads))
    return [_seed_worker(p) for p in payloads]


def write_runs(out: Path, doc: dict, runs: list[SampleRun]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_grids(out / "samples.grids", {f"seed{r.seed:04d}": r.samples for r in runs})
    if any(r.trajectory for r in runs):
        entries = {}
        for r in runs:
            for rec in r.trajectory or []:
                for it in rec.iters:
                    base = f"seed{r.seed:04d}/step{rec.index:03d}/iter{it.k:02d}"
                    entries[f"{base}/mask"] = it.mask
                    entries[f"{base}/uncertainty"] = it.uncertainty
        if entries:
            write_grids(out / "trajectory.grids", entries)
    schedule = cfgmod.build_schedule(doc)
    plan = cfgmod.build_plan(doc)
    cfg = cfgmod.build_cfg(doc)
    expected = nfe_total(schedule, plan, cfgmod.sample_params(doc)["nfe_mode"], cfg)
    _write_csv(
        out / "nfe.csv",
        "seed,calls,passes,used,expected,mode",
        [(r.seed, r.nfe_calls, r.nfe_passes, r.nfe_used, expected, r.nfe_mode) for r in runs],
    )
    run_meta = {
        "config": doc,
        "config_fingerprint": fingerprint(doc),
        "seeds": [r.seed for r in runs],
        "n": runs[0].n,
        "nfe_used": [r.nfe_used for r in runs],
    }
    (out / "run.json").write_text(canonical_json(run_meta) + "\n", encoding="utf-8")
    cfgmod.write_canonical_config(doc, out / "config.json")


def cmd_sample(args) -> int:
    doc = cfgmod.load_config(args.config)
    if args.seed is not None:
        doc.setdefault("sample", {})["seeds"] = [args.seed]
        cfgmod.validate_config(doc)
    ckpt_rel = doc.get("checkpoint")
    if not ckpt_rel:
        raise UsageError("sample config needs a 'checkpoint' path")
    ckpt_path = Path(ckpt_rel)
    if not ckpt_path.is_absolute():
        ckpt_path = Path(args.config).parent / ckpt_path
    if not ckpt_path.exists():
        raise UsageError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    spec = cfgmod.build_dataset(doc)
    if ckpt.net_config.grid_shape != spec.grid_shape:
        raise UsageError(
            f"checkpoint grid shape {ckpt.net_config.grid_shape} "
            f"does not match dataset shape {spec.grid_shape}"
        )
    runs = run_config_seeds(doc, ckpt_path, jobs=args.jobs)
    write_runs(Path(args.out), doc, runs)
    return 0


# -- eval ---------------------------------------------------------------------


def load_run_dir(path) -> tuple[dict, list[SampleRun]]:
    """Rebuild lightweight SampleRuns from a sample command's output dir."""
    path = Path(path)
    meta_path = path / "run.json"
    if not meta_path.exists():
        raise UsageError(f"missing run metadata: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    doc = meta["config"]
    grids = read_grids(path / "samples.grids")
    traj_path = path / "trajectory.grids"
    traj_entries = read_grids(traj_path) if traj_path.exists() else {}
    schedule = cfgmod.build_schedule(doc)
    plan = cfgmod.build_plan(doc)
    cfg = cfgmod.build_cfg(doc)
    runs = []
    for seed, used in zip(meta["seeds"], meta["nfe_used"]):
        key = f"seed{seed:04d}"
        trajectory = None
        step_recs: dict[int, StepRecord] = {}
        for name, arr in traj_entries.items():
            parts = name.split("/")
            if parts[0] != key:
                continue
            idx = int(parts[1][4:])
            k = int(parts[2][4:])
            rec = step_recs.setdefault(
                idx,
                StepRecord(
                    index=idx,
                    t=schedule.timesteps[idx],
                    iterations=plan.iterations_at(idx),
                    z_next=grids[key],
                ),
            )
            while len(rec.iters) < k:
                rec.iters.append(IterationRecord(k=len(rec.iters) + 1, uncertainty=None, mask=None, pred_z1=None))
            it = rec.iters[k - 1]
            if parts[3] == "mask":
                it.mask = arr
            else:
                it.uncertainty = arr
        if step_recs:
            trajectory = [step_recs[i] for i in sorted(step_recs)]
        runs.append(
            SampleRun(
                samples=grids[key],
                nfe_used=used,
                nfe_calls=used,
                nfe_passes=used,
                seed=seed,
                schedule=schedule,
                plan=plan,
                tau=float(doc.get("tau", 0.25)),
                cfg=cfg,
                nfe_mode=cfgmod.sample_params(doc)["nfe_mode"],
                trajectory=trajectory,
            )
        )
    return doc, runs


def _metric_rows(doc, runs, metric, radius) -> list[tuple]:
    spec = dataset_spec_from_json(doc["dataset"])
    fp = fingerprint(doc)
    if metric == "manifold":
        report = manifold_metric(runs, oracle_for(spec), fp)
        reports = [report]
    elif metric == "mode_fraction":
        r = radius if radius is not None else 2.0 * spec.sigma
        frac, ent = mode_concentration(runs, GmmOracle(spec), r, fp)
        reports = [frac, ent]
    elif metric == "jitter":
        reports = [jitter_metric(runs, spec, fp)]
    elif metric == "mask_ratio":
        reports = [mask_localization(runs, spec, fp)]
    else:
        raise UsageError(f"unknown metric {metric!r}")
    rows = []
    for rep in reports:
        for seed, value in zip([r.seed for r in runs], rep.values):
            rows.append((rep.fingerprint, seed, rep.name, _float(value)))
    return rows


def _plot_run(out: Path, tag: str, doc: dict, runs: list[SampleRun]) -> None:
    spec = dataset_spec_from_json(doc["dataset"])
    first = runs[0]
    if isinstance(spec, (SineSpec, GmmSpec)):
        if isinstance(spec, SineSpec):
            polyline = SineOracle(spec).polyline
        else:
            polyline = None
        svg = scatter_plot([(tag, first.points())], polyline=polyline, title=tag)
        (out / f"scatter_{tag}.svg").write_text(svg, encoding="utf-8")
    elif isinstance(spec, MovingDotSpec):
        clip = first.samples[0]
        mask = None
        if first.trajectory:
            refined = [r for r in first.trajectory if r.iterations > 0 and r.iters]
            if refined:
                mask = refined[0].iters[-1].mask[0]
        svg = frame_strip(np.clip(clip, 0.0, 1.0), mask, title=tag)
        (out / f"strip_{tag}.svg").write_text(svg, encoding="utf-8")


def cmd_eval(args) -> int:
    doc = cfgmod.load_config(args.config)
    section = doc.get("eval", {})
    run_dirs = section.get("runs", [])
    if not run_dirs:
        raise UsageError("eval config needs eval.runs (list of sample output dirs)")
    metrics = section.get("metrics", ["manifold"])
    radius = section.get("radius")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_rows = []
    per_dir_rows = []
    for run_dir in run_dirs:
        base = Path(run_dir)
        if not base.is_absolute():
            base = Path(args.config).parent / base
        run_doc, runs = load_run_dir(base)
        tag = base.name
        rows = []
        for metric in metrics:
            rows.extend(_metric_rows(run_doc, runs, metric, radius))
        per_dir_rows.append(rows)
        all_rows.extend(rows)
        _plot_run(out, tag, run_doc, runs)
    _write_csv(out / "metrics.csv", METRICS_HEADER, all_rows)
    if len(run_dirs) == 2:
        a, b = per_dir_rows
        paired = []
        bmap = {(seed, name): val for (_, seed, name, val) in b}
        for (_, seed, name, val) in a:
            if (seed, name) in bmap:
                delta = float(bmap[(seed, name)]) - float(val)
                paired.append((seed, name, val, bmap[(seed, name)], _float(delta)))
        _write_csv(out / "paired.csv", "seed,metric,value_a,value_b,delta", paired)
    cfgmod.write_canonical_config(doc, out / "config.json")
    return 0


# -- repro ----------------------------------------------------------------------


def cmd_repro(args) -> int:
    from . import suites

    if args.suite not in suites.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; known: {', '.join(suites.names())}")
    out = Path(args.out) / args.suite
    cache = Path(args.cache) if args.cache else Path(args.out) / "cache"
    results = suites.SUITES[args.suite](suites.SuiteContext(out=out, cache=cache, jobs=args.jobs))
    width = max(len(r.name) for r in results)
    print(f"suite {args.suite}:")
    for r in results:
        print(f"  {'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    _write_csv(
        out / "criteria.csv",
        "criterion,passed,detail",
        [(r.name, int(r.passed), r.detail.replace(",", ";")) for r in results],
    )
    return 0 if all(r.passed for r in results) else 1


def cmd_list_suites(_args) -> int:
    from . import suites

    for name in suites.names():
        print(name)
    return 0


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnplab", description="Flow-matching lab with self-refining samplers"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (
        ("train", cmd_train, True),
        ("sample", cmd_sample, True),
        ("eval", cmd_eval, True),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config)
        p.add_argument("--out", required=True)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(fn=fn)
    p = sub.add_parser("repro")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_repro)
    p = sub.add_parser("list-suites")
    p.set_defaults(fn=cmd_list_suites)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PnpLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
