import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from conftest import render
from lodestar_odom import scenarios
from lodestar_odom.geometry import Pose2, Trajectory, image_to_cloud, transform_cloud
from lodestar_odom.synth import (
    FULL,
    PARTIAL,
    FrameSpec,
    ScanSchedule,
    Scene,
    SceneBoundsError,
    bin_times_from_runs,
    format_scene,
    generate_sequence,
    load_scene,
    parse_scene,
    polygon_is_simple,
    render_frame,
    sector_runs,
)


def _lit_points(frame):
    return image_to_cloud(frame, 1e-9).xy


def test_empty_scene_renders_black(small_spec):
    f = render(Scene(), Pose2(), small_spec)
    assert not f.image.any()


def test_wall_lights_single_column(wall_scene, small_spec):
    f = render(wall_scene, Pose2(), small_spec)
    rows, cols = np.nonzero(f.image)
    c = small_spec.width // 2
    # 100 m east at 2 m/px is 50 columns right of center
    assert set(cols.tolist()) == {c + 50}
    # the wall is visible while its range is below r_max = 200 m:
    # |x| <= sqrt(200^2 - 100^2) = 173.2 m -> 86 px above and below
    assert rows.min() == c - 86 and rows.max() == c + 86
    assert len(rows) == 173


def test_rotated_vessel_matches_rotated_image(clean_scene, harbor):
    _, traj, spec, _ = harbor
    p = traj.poses[30]
    a = render(clean_scene, p, spec)
    b = render(clean_scene, p.compose(Pose2(math.radians(30))), spec)
    # world is static, so body coordinates rotate by -30 degrees
    expected = Pose2(math.radians(-30)).apply(_lit_points(a)) / spec.resolution
    got = _lit_points(b) / spec.resolution
    d_fwd, _ = cKDTree(expected).query(got)
    d_bwd, _ = cKDTree(got).query(expected)
    # both sets are rounded to pixel centers: stay inside the 8-neighbor ring
    assert d_fwd.max() <= math.sqrt(2) + 1e-9
    assert np.quantile(d_bwd, 0.99) <= math.sqrt(2) + 1e-9


def test_noise_off_pixels_lie_on_polygon_boundary(clean_scene, harbor):
    _, traj, spec, _ = harbor
    p = traj.poses[60]
    f = render(clean_scene, p, spec)
    world = p.apply(_lit_points(f))
    a, b, _ = clean_scene.edges()
    e = b - a
    t = np.clip(((world[:, None] - a[None]) * e[None]).sum(-1) / (e * e).sum(-1), 0, 1)
    d = np.linalg.norm(world[:, None] - (a[None] + t[..., None] * e[None]), axis=-1).min(axis=1)
    assert len(world) > 100
    assert d.max() <= spec.resolution


def test_quantized_intensities(harbor):
    scene, traj, spec, _ = harbor
    noisy_fa = scene.with_noise(speckle_sigma=0.0, false_alarm_rate=1e-3)
    f = render(noisy_fa, traj.poses[5], spec)
    levels = set(np.unique(f.image[f.image > 0]).tolist())
    assert levels <= set(noisy_fa.rcs_levels)
    assert 0.5 in levels and 1.0 in levels


def test_speckle_only_touches_returns(harbor):
    scene, traj, spec, _ = harbor
    clean = render(scene.with_noise(0.0, 0.0), traj.poses[5], spec)
    noisy = render(scene.with_noise(0.1, 0.0), traj.poses[5], spec)
    assert not noisy.image[clean.image == 0].any()
    assert np.abs(noisy.image - clean.image)[clean.image > 0].std() > 0.05


def test_false_alarm_rate(small_spec):
    scene = Scene(false_alarm_rate=0.01, seed=3)
    f = render(scene, Pose2(), small_spec)
    c = small_spec.width // 2
    rows, cols = np.mgrid[0:small_spec.width, 0:small_spec.width]
    disk = np.hypot(rows - c, cols - c) <= c
    rate = (f.image[disk] > 0).mean()
    assert 0.007 < rate < 0.013
    assert set(np.unique(f.image[f.image > 0])) == {1.0}
    assert not f.image[~disk].any()


def test_pose_outside_bounds_rejected(wall_scene, small_spec):
    with pytest.raises(SceneBoundsError):
        render(wall_scene, Pose2(0.0, 0.0, 5000.0), small_spec)


def test_scene_validation():
    bowtie = np.array([[0, 0], [10, 10], [10, 0], [0, 10]], float)
    assert not polygon_is_simple(bowtie)
    with pytest.raises(ValueError):
        Scene((bowtie,), (1.0,))
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    with pytest.raises(ValueError):
        Scene((square,), (1.0,), rcs_levels=(1.0, 0.0))
    with pytest.raises(ValueError):
        Scene((square,), (1.0,), rcs_levels=(0.5, 1.0))
    with pytest.raises(ValueError):
        ScanSchedule(frame_period=0.0)


def test_rcs_quantized_to_nearest_level():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    s = Scene((sq, sq + 5), (0.6, 0.2), rcs_levels=(0.0, 0.5, 1.0))
    assert s.quantized_rcs(0) == 0.5
    assert s.quantized_rcs(1) == 0.0


def test_one_pose_gives_one_frame(harbor):
    scene, traj, spec, sched = harbor
    frames, gt = generate_sequence(scene, Trajectory(traj.timestamps[:1], traj.poses[:1]), spec, sched)
    assert len(frames) == 1 and len(gt) == 1


def test_straight_run_is_pure_translation(clean_scene):
    _, traj, spec, sched = scenarios.straight_run(n_frames=10)
    frames, gt = generate_sequence(clean_scene, traj, spec, sched)
    assert len(frames) == 10
    for i in range(9):
        rel = gt.poses[i].inverse().compose(gt.poses[i + 1])
        assert abs(rel.theta) < 1e-12
        a = image_to_cloud(frames[i], 0.1)
        b = transform_cloud(image_to_cloud(frames[i + 1], 0.1), rel)
        d, _ = cKDTree(a.xy).query(b.xy)
        # small occlusion changes aside the coastline just shifts
        assert np.median(d) <= spec.resolution
        assert np.mean(d <= 2 * spec.resolution) > 0.95


def test_generation_is_deterministic(harbor):
    scene, traj, spec, sched = harbor
    sub = Trajectory(traj.timestamps[:3], traj.poses[:3])
    f1, _ = generate_sequence(scene, sub, spec, sched)
    f2, _ = generate_sequence(scene, sub, spec, sched)
    for a, b in zip(f1, f2):
        assert a.image.tobytes() == b.image.tobytes()


def test_sweep_times():
    s = ScanSchedule(0.25, 1.0, PARTIAL)
    bt = s.last_sweep_times(1.1, 4)
    # antenna at 36 deg when t = 1.1; bins at 0, 90, 180, 270 deg were
    # last passed at 1.0, 0.25, 0.5 and 0.75 s
    np.testing.assert_allclose(bt, [1.0, 0.25, 0.5, 0.75])


def test_partial_sector_keeps_stale_bins(harbor):
    scene, traj, spec, _ = harbor
    clean = scene.with_noise(0.0, 0.0)
    sched = ScanSchedule(0.25, 1.0, PARTIAL)
    prev = render_frame(clean, traj.poses[10], spec, ScanSchedule(1.0, 1.0, FULL), 0.0, 0)
    curr = render_frame(clean, traj.poses[11], spec, sched, 0.25, 1, previous=prev)
    fresh = curr.bin_times > prev.timestamp
    assert fresh.sum() == 90
    from lodestar_odom.geometry import pixel_bins
    stale_px = ~fresh[pixel_bins(spec.width, spec.bins)]
    np.testing.assert_array_equal(curr.image[stale_px], prev.image[stale_px])
    assert (curr.image[~stale_px] != prev.image[~stale_px]).any()


def test_partial_sequence_requires_matching_spacing(harbor):
    scene, traj, spec, _ = harbor
    with pytest.raises(ValueError):
        generate_sequence(scene, Trajectory(traj.timestamps[:3], traj.poses[:3]), spec,
                          ScanSchedule(0.25, 1.0, PARTIAL))


def test_sector_runs_roundtrip():
    bt = np.array([1.0, 1.0, 2.0, 2.0, 2.0, 0.5])
    runs = sector_runs(bt)
    assert runs == [(0, 2, 1.0), (2, 5, 2.0), (5, 6, 0.5)]
    np.testing.assert_array_equal(bin_times_from_runs(runs, 6), bt)
    with pytest.raises(ValueError):
        bin_times_from_runs(runs[:2], 6)


def test_scene_file_roundtrip(harbor):
    scene = harbor[0]
    back = parse_scene(format_scene(scene))
    assert back.rcs_levels == scene.rcs_levels
    assert back.speckle_sigma == scene.speckle_sigma and back.seed == scene.seed
    for a, b in zip(back.coast_polygons, scene.coast_polygons):
        np.testing.assert_array_equal(a, b)


def test_scene_file_grammar():
    text = """
    # comment
    rcs_levels = 0 0.5 1
    speckle_sigma = 0.1
    seed = 4
    polygon rcs=0.5
      0 0
      10 0
      10 10
    end
    polygon
      20 20
      30 20
      30 30
    end
    """
    s = parse_scene(text)
    assert s.polygon_rcs == (0.5, 1.0)
    assert s.seed == 4 and s.speckle_sigma == 0.1
    with pytest.raises(ValueError, match="<scene>:3"):
        parse_scene("seed = 1\npolygon\n 1 2 3\nend")
    with pytest.raises(ValueError, match="not closed"):
        parse_scene("polygon\n 0 0\n 1 0\n 1 1\n")


def test_missing_scene_file_names_path(tmp_path):
    p = tmp_path / "nope.scene"
    with pytest.raises(FileNotFoundError, match="nope.scene"):
        load_scene(p)


def test_frame_spec_rays_per_bin():
    # outer ring spacing stays below half a pixel
    spec = FrameSpec(301, 2.0, 360)
    per = spec.rays_per_bin()
    assert 2 * math.pi * 150 / (360 * per) <= 0.5
