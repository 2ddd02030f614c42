import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pnplab.canon import canonical_json, fingerprint
from pnplab.config import (
    build_cfg,
    build_dataset,
    build_net_config,
    build_plan,
    build_schedule,
    build_train_config,
    load_config,
    sample_params,
    train_fingerprint,
    validate_config,
    write_canonical_config,
)
from pnplab.datasets import MovingDotSpec, SineSpec, dot_trajectory, render_dot_clip
from pnplab.errors import ConfigurationError, UsageError
from pnplab.gridio import read_grids, write_grids
from pnplab.rng import RngStream
from pnplab.svgplot import frame_strip, line_plot, scatter_plot


# -- grid containers ------------------------------------------------------


def test_container_round_trip(tmp_path):
    path = tmp_path / "out.grids"
    grids = {
        "seed0001": RngStream(1).normal((3, 1, 1, 1, 2)),
        "seed0002": RngStream(2).normal((3, 1, 1, 1, 2)),
        "scalarish": np.array([[1.5]]),
    }
    write_grids(path, grids)
    back = read_grids(path)
    assert set(back) == set(grids)
    for k in grids:
        assert np.array_equal(back[k], grids[k])


def test_container_write_is_byte_stable(tmp_path):
    a, b = tmp_path / "a.grids", tmp_path / "b.grids"
    grids = {"x": np.arange(6.0).reshape(2, 3), "y": np.ones((4,))}
    write_grids(a, grids)
    write_grids(b, {k: v.copy() for k, v in grids.items()})
    assert a.read_bytes() == b.read_bytes()


def test_container_rejects_corruption(tmp_path):
    path = tmp_path / "c.grids"
    write_grids(path, {"x": np.ones((2, 2))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(ConfigurationError):
        read_grids(path)
    path.write_bytes(b"WRONGMAG\n" + raw[9:])
    with pytest.raises(ConfigurationError):
        read_grids(path)


def test_container_rejects_unknown_version(tmp_path):
    import struct

    path = tmp_path / "v.grids"
    write_grids(path, {"x": np.ones(3)})
    raw = path.read_bytes()
    (mlen,) = struct.unpack_from("<Q", raw, 9)
    manifest = json.loads(raw[17 : 17 + mlen])
    manifest["version"] = 99
    blob = canonical_json(manifest).encode()
    path.write_bytes(raw[:9] + struct.pack("<Q", len(blob)) + blob + raw[17 + mlen :])
    with pytest.raises(ConfigurationError, match="version"):
        read_grids(path)


def test_container_requires_content(tmp_path):
    with pytest.raises(UsageError):
        write_grids(tmp_path / "e.grids", {})


# -- svg plots -------------------------------------------------------------


def _well_formed(svg: str):
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    return root


def test_scatter_plot_well_formed():
    pts = RngStream(3).normal((40, 2))
    curve = np.stack([np.linspace(-3, 3, 100), np.sin(np.linspace(-3, 3, 100))], axis=1)
    svg = scatter_plot([("euler", pts), ("refined", pts * 0.5)], polyline=curve, title="toy")
    root = _well_formed(svg)
    assert "polyline" in svg and "circle" in svg
    assert svg == scatter_plot(
        [("euler", pts), ("refined", pts * 0.5)], polyline=curve, title="toy"
    )


def test_frame_strip_with_mask():
    spec = MovingDotSpec(frames=3, height=6, width=6)
    traj = dot_trajectory(spec, np.array([3.0, 2.0]), np.array([0.4, 0.6]))
    clip = render_dot_clip(spec, traj)
    mask = (clip > 0.2).astype(float)
    svg = frame_strip(clip, mask, title="clip")
    _well_formed(svg)
    assert svg.count("<rect") > 3 * 36  # pixel rects plus overlays and borders


def test_line_plot_series():
    svg = line_plot([0, 1, 3], [("a", [0.5, 0.4, 0.2]), ("b", [0.6, 0.6, 0.5])])
    _well_formed(svg)


# -- canonical json / fingerprints ------------------------------------------


def test_canonical_json_sorted_and_compact():
    s = canonical_json({"b": 1, "a": [1.5, {"z": None}]})
    assert s == '{"a":[1.5,{"z":null}],"b":1}'
    assert fingerprint({"a": 1}) != fingerprint({"a": 2})
    assert len(fingerprint({})) == 16


# -- run configs -------------------------------------------------------------


GOOD = {
    "dataset": {"kind": "sine2d", "noise": 0.02},
    "net": {"hidden": [64, 64], "activation": "tanh", "time_features": 4},
    "train": {"steps": 10, "batch_size": 8, "lr": 0.001, "seed": 3},
    "schedule": {"kind": "uniform", "steps": 50},
    "plan": {"3-9": 3},
    "tau": -1.0,
    "cfg": {"enabled": False, "scale": 0.0, "cond": None},
    "sample": {"n": 16, "seeds": [1, 2, 3], "log": False, "nfe_mode": "per-call"},
    "eval": {"runs": [], "metrics": ["manifold"], "radius": None},
}


def test_load_and_build_sections(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(GOOD))
    doc = load_config(path)
    assert build_dataset(doc) == SineSpec()
    net_cfg = build_net_config(doc, build_dataset(doc))
    assert net_cfg.hidden == (64, 64)
    assert build_train_config(doc).steps == 10
    assert build_schedule(doc).num_steps == 50
    assert build_plan(doc).ranges == ((3, 9, 3),)
    assert build_cfg(doc).enabled is False
    assert sample_params(doc)["seeds"] == (1, 2, 3)


def test_unknown_keys_rejected_with_path():
    bad = dict(GOOD)
    bad["trian"] = {}
    with pytest.raises(ConfigurationError, match="trian"):
        validate_config(bad)
    bad2 = json.loads(json.dumps(GOOD))
    bad2["train"]["leraning_rate"] = 0.1
    with pytest.raises(ConfigurationError, match="train.leraning_rate"):
        validate_config(bad2)
    bad3 = json.loads(json.dumps(GOOD))
    bad3["dataset"]["amplitdue"] = 1.0
    with pytest.raises(ConfigurationError, match="amplitdue"):
        validate_config(bad3)


def test_bad_json_and_missing_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.json")


def test_train_fingerprint_ignores_sampling_sections():
    a = train_fingerprint(GOOD)
    changed = json.loads(json.dumps(GOOD))
    changed["sample"]["n"] = 999
    assert train_fingerprint(changed) == a
    changed["train"]["steps"] = 11
    assert train_fingerprint(changed) != a


def test_canonical_copy_is_stable(tmp_path):
    p1, p2 = tmp_path / "c1.json", tmp_path / "c2.json"
    write_canonical_config(GOOD, p1)
    write_canonical_config(json.loads(p1.read_text()), p2)
    assert p1.read_bytes() == p2.read_bytes()
