import math

import numpy as np
import pytest

from pnplab.datasets import (
    GmmOracle,
    GmmSpec,
    MovingDotOracle,
    MovingDotSpec,
    SineOracle,
    SineSpec,
    centroid_error_bound,
    centroid_quantization_bound,
    clip_centroids,
    dataset_spec_from_json,
    dot_trajectory,
    frame_centroid,
    oracle_distance,
    oracle_for,
    render_dot_clip,
    sample_dataset,
    temporal_jitter,
)
from pnplab.errors import CentroidUndefined, ConfigurationError, UsageError
from pnplab.grid import Grid
from pnplab.rng import RngStream


# -- generators ---------------------------------------------------------


def test_noiseless_sine_points_lie_on_curve():
    spec = SineSpec(noise=0.0)
    pts, labels = sample_dataset(spec, 200, RngStream(1))
    assert labels is None
    xy = pts.reshape(-1, 2)
    assert np.allclose(xy[:, 1], spec.curve(xy[:, 0]), atol=0.0)


def test_single_mode_gmm_sample_mean():
    # One mode at (3, 0), sigma 0.1, n=10^4: the law of large numbers puts
    # the sample mean within 4*sigma/sqrt(n) = 0.004 < 0.01 per coordinate.
    spec = GmmSpec(centers=((3.0, 0.0),), sigma=0.1)
    pts, labels = sample_dataset(spec, 10_000, RngStream(2))
    mean = pts.reshape(-1, 2).mean(axis=0)
    assert abs(mean[0] - 3.0) < 0.01
    assert abs(mean[1]) < 0.01
    assert np.all(labels == 0)


def test_gmm_labels_within_six_sigma():
    spec = GmmSpec.ring(8, 3.0, 0.15)
    pts, labels = sample_dataset(spec, 5000, RngStream(3))
    centers = spec.center_array()[labels]
    d = np.linalg.norm(pts.reshape(-1, 2) - centers, axis=1)
    assert np.all(d < 6.0 * spec.sigma)


def test_movingdot_argmax_tracks_trajectory():
    spec = MovingDotSpec()
    clips, trajs = sample_dataset(spec, 8, RngStream(4))
    for clip, traj in zip(clips, trajs):
        for f in range(spec.frames):
            flat = np.argmax(clip[f, :, :, 0])
            py, px = divmod(int(flat), spec.width)
            assert np.linalg.norm(np.array([py, px]) - traj[f]) <= spec.radius


def test_movingdot_pixel_range_and_bounce_box():
    spec = MovingDotSpec(intensity=0.8)
    clips, trajs = sample_dataset(spec, 4, RngStream(5))
    assert clips.min() >= 0.0 and clips.max() <= 0.8
    lo, hi = spec.bounce_box(spec.height)
    assert trajs[..., 0].min() >= lo - 1e-9 and trajs[..., 0].max() <= hi + 1e-9


def test_generation_is_deterministic():
    spec = MovingDotSpec()
    a, ta = sample_dataset(spec, 3, RngStream(77))
    b, tb = sample_dataset(spec, 3, RngStream(77))
    assert np.array_equal(a, b) and np.array_equal(ta, tb)


def test_invalid_specs_rejected():
    with pytest.raises(ConfigurationError):
        SineSpec(noise=-0.1)
    with pytest.raises(ConfigurationError):
        GmmSpec(centers=())
    with pytest.raises(ConfigurationError):
        GmmSpec(centers=((0, 0),), sigma=0.0)
    with pytest.raises(ConfigurationError):
        MovingDotSpec(frames=1)
    with pytest.raises(ConfigurationError):
        MovingDotSpec(radius=9.0)
    with pytest.raises(UsageError):
        sample_dataset(SineSpec(), 0, RngStream(0))


def test_spec_json_round_trip_rejects_unknown_keys():
    for spec in (SineSpec(), GmmSpec.ring(4), MovingDotSpec()):
        assert dataset_spec_from_json(spec.to_json()) == spec
    with pytest.raises(ConfigurationError):
        dataset_spec_from_json({"kind": "sine2d", "amplitdue": 2.0})
    with pytest.raises(ConfigurationError):
        dataset_spec_from_json({"kind": "nope"})


# -- oracles ------------------------------------------------------------


def test_point_on_curve_within_discretization_bound():
    spec = SineSpec(noise=0.0)
    oracle = SineOracle(spec)
    x = np.linspace(*spec.x_range, 37)
    pts = np.stack([x, spec.curve(x)], axis=1)
    d = oracle.distance_points(pts)
    assert np.all(d <= 0.5 * oracle.segment_length)


def test_gmm_distance_hand_case():
    oracle = GmmOracle(GmmSpec(centers=((0.0, 0.0), (3.0, 0.0)), sigma=0.1))
    # (3, 4) is 4 from (3, 0) and 5 from the origin.
    assert oracle_distance(oracle, Grid.from_points([[3.0, 4.0]])) == pytest.approx(4.0)


def test_vertical_projection_upper_bound():
    oracle = SineOracle(SineSpec(noise=0.0))
    for d in (0.3, 0.05, 0.001):
        pt = Grid.from_points([[0.0, math.sin(0.0) + d]])
        assert oracle_distance(oracle, pt) <= d + 1e-12


def test_oracle_distance_zero_on_modes():
    spec = GmmSpec.ring(8)
    oracle = GmmOracle(spec)
    d = oracle.distance_points(spec.center_array())
    assert np.all(d == 0.0)


def test_movingdot_oracle_distance_of_rendered_clip():
    spec = MovingDotSpec()
    clips, trajs = sample_dataset(spec, 2, RngStream(9))
    bound = centroid_error_bound(spec)
    for clip, traj in zip(clips, trajs):
        oracle = MovingDotOracle(spec, traj)
        # Every frame's centroid sits within the per-frame render bound of
        # the true center, so the mean distance stays below it too.
        assert oracle.distance_clip(clip) <= bound


def test_oracle_for_dispatch():
    assert isinstance(oracle_for(SineSpec()), SineOracle)
    assert isinstance(oracle_for(GmmSpec.ring(4)), GmmOracle)
    with pytest.raises(UsageError):
        oracle_for(MovingDotSpec())  # needs the trajectory label
    traj = np.tile([[8.0, 8.0]], (8, 1))
    assert isinstance(oracle_for(MovingDotSpec(), traj), MovingDotOracle)


def test_polyline_segment_count_enforced():
    with pytest.raises(ConfigurationError):
        SineOracle(SineSpec(), segments=100)


# -- centroids and jitter ------------------------------------------------


def test_frame_centroid_hand_case():
    frame = np.zeros((4, 4, 1))
    frame[1, 2, 0] = 1.0
    frame[3, 2, 0] = 1.0
    assert np.allclose(frame_centroid(frame), [2.0, 2.0])


def test_centroid_ignores_negative_mass():
    frame = np.zeros((4, 4, 1))
    frame[1, 1, 0] = 1.0
    frame[3, 3, 0] = -5.0
    assert np.allclose(frame_centroid(frame), [1.0, 1.0])


def test_empty_frame_centroid_undefined():
    with pytest.raises(CentroidUndefined):
        frame_centroid(np.zeros((4, 4, 1)))
    clip = np.zeros((3, 4, 4, 1))
    with pytest.raises(CentroidUndefined):
        temporal_jitter(clip)


def test_constant_velocity_clip_jitter_below_render_bound():
    spec = MovingDotSpec(frames=6)
    # Start and velocity chosen so the dot never reaches a border.
    traj = dot_trajectory(spec, np.array([4.0, 3.0]), np.array([0.7, 1.1]))
    assert np.allclose(np.diff(traj, axis=0), [0.7, 1.1])  # no bounce happened
    clip = render_dot_clip(spec, traj)
    assert temporal_jitter(clip) <= centroid_quantization_bound(spec)


def test_jitter_increases_with_displacement():
    spec = MovingDotSpec(frames=6)
    base = dot_trajectory(spec, np.array([4.0, 3.0]), np.array([0.7, 1.1]))
    jitters = []
    for delta in (0.0, 0.4, 0.9):
        traj = base.copy()
        traj[3, 0] += delta  # push one frame off the line
        jitters.append(temporal_jitter(render_dot_clip(spec, traj)))
    assert jitters[0] < jitters[1] < jitters[2]


def test_permuted_frames_increase_jitter():
    spec = MovingDotSpec()
    clips, _ = sample_dataset(spec, 1, RngStream(123))
    clip = clips[0]
    permuted = clip[[3, 0, 6, 1, 7, 2, 5, 4]]
    assert temporal_jitter(permuted) > temporal_jitter(clip)


def test_clip_centroids_shape():
    spec = MovingDotSpec()
    clips, _ = sample_dataset(spec, 1, RngStream(6))
    assert clip_centroids(clips[0]).shape == (spec.frames, 2)


def test_short_clip_rejected():
    with pytest.raises(UsageError):
        temporal_jitter(np.ones((1, 4, 4, 1)))
