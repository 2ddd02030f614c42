"""Run configuration: one strict JSON document per invocation.

Unknown keys are rejected with their full path so typos fail loudly.
Every command writes a canonicalized copy of its config next to its
outputs; fingerprints of config sections key the checkpoint cache.
"""

from __future__ import annotations

import json
from pathlib import Path

from .canon import canonical_json, fingerprint
from .datasets import DatasetSpec, dataset_spec_from_json
from .errors import ConfigurationError
from .flow import TrainConfig
from .net import NetConfig
from .sampler import CfgSpec, PnPPlan, Schedule

_TOP_KEYS = {
    "dataset",
    "net",
    "train",
    "schedule",
    "plan",
    "tau",
    "cfg",
    "sample",
    "eval",
    "checkpoint",
}
_SECTION_KEYS = {
    "net": {"hidden", "activation", "time_features", "num_classes", "cond_dim"},
    "train": {"steps", "batch_size", "lr", "t_delta", "p_drop", "seed"},
    "schedule": {"kind", "steps", "shift"},
    "cfg": {"enabled", "scale", "cond"},
    "sample": {"n", "seeds", "log", "nfe_mode"},
    "eval": {"runs", "metrics", "radius"},
}


def _reject_unknown(section: str, d: dict, allowed: set[str]):
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{section}.{extra[0]}" if section else extra[0]
        raise ConfigurationError(f"unknown config key: {where}")


def load_config(path) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config root must be a JSON object")
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    _reject_unknown("", doc, _TOP_KEYS)
    for section, allowed in _SECTION_KEYS.items():
        if section in doc:
            if not isinstance(doc[section], dict):
                raise ConfigurationError(f"config section {section!r} must be an object")
            _reject_unknown(section, doc[section], allowed)
    if "dataset" in doc:
        dataset_spec_from_json(doc["dataset"])  # validates keys and values
    if "plan" in doc:
        if not isinstance(doc["plan"], dict):
            raise ConfigurationError("config section 'plan' must be an object")
        PnPPlan.from_json(doc["plan"])


def build_dataset(doc: dict) -> DatasetSpec:
    if "dataset" not in doc:
        raise ConfigurationError("config needs a 'dataset' section")
    return dataset_spec_from_json(doc["dataset"])


def build_net_config(doc: dict, dataset: DatasetSpec) -> NetConfig:
    section = doc.get("net", {})
    return NetConfig(
        grid_shape=dataset.grid_shape,
        hidden=tuple(section.get("hidden", (64, 64))),
        activation=section.get("activation", "tanh"),
        time_features=int(section.get("time_features", 4)),
        num_classes=int(section.get("num_classes", 0)),
        cond_dim=int(section.get("cond_dim", 8)),
    )


def build_train_config(doc: dict) -> TrainConfig:
    section = doc.get("train", {})
    return TrainConfig(
        steps=int(section.get("steps", 20000)),
        batch_size=int(section.get("batch_size", 256)),
        lr=float(section.get("lr", 1e-3)),
        t_delta=float(section.get("t_delta", 0.005)),
        p_drop=float(section.get("p_drop", 0.0)),
        seed=int(section.get("seed", 0)),
    )


def build_schedule(doc: dict) -> Schedule:
    section = doc.get("schedule", {"kind": "uniform", "steps": 50})
    kind = section.get("kind", "uniform")
    steps = int(section.get("steps", 50))
    if kind == "uniform":
        return Schedule.uniform(steps)
    if kind == "shifted":
        return Schedule.shifted(steps, float(section.get("shift", 3.0)))
    raise ConfigurationError(f"unknown schedule kind {kind!r}")


def build_plan(doc: dict) -> PnPPlan:
    return PnPPlan.from_json(doc.get("plan", {}))


def build_cfg(doc: dict) -> CfgSpec:
    section = doc.get("cfg", {})
    cond = section.get("cond")
    return CfgSpec(
        enabled=bool(section.get("enabled", False)),
        scale=float(section.get("scale", 0.0)),
        cond=None if cond is None else int(cond),
    )


def sample_params(doc: dict) -> dict:
    section = doc.get("sample", {})
    return {
        "n": int(section.get("n", 512)),
        "seeds": tuple(int(s) for s in section.get("seeds", (1, 2, 3))),
        "log": bool(section.get("log", False)),
        "nfe_mode": str(section.get("nfe_mode", "per-call")),
    }


def train_fingerprint(doc: dict) -> str:
    """Cache key for a checkpoint: the sections that determine training."""
    return fingerprint(
        {
            "dataset": doc.get("dataset"),
            "net": doc.get("net", {}),
            "train": doc.get("train", {}),
        }
    )


def write_canonical_config(doc: dict, path) -> None:
    Path(path).write_text(canonical_json(doc) + "\n", encoding="utf-8")
