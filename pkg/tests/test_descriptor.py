import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import render
from lodestar_odom.descriptor import (
    LodeStarDescriptor,
    circular_correlate,
    circular_correlate_naive,
    compute_descriptor,
    estimate_rotation,
)
from lodestar_odom.geometry import Pose2, RadarFrame


def _bilinear(img, r, c):
    """Plain bilinear lookup, edge-clamped (independent of scipy)."""
    n = img.shape[0]
    r = min(max(r, 0.0), n - 1.0)
    c = min(max(c, 0.0), n - 1.0)
    r0, c0 = int(math.floor(r)), int(math.floor(c))
    r1, c1 = min(r0 + 1, n - 1), min(c0 + 1, n - 1)
    fr, fc = r - r0, c - c0
    return ((1 - fr) * (1 - fc) * img[r0, c0] + (1 - fr) * fc * img[r0, c1]
            + fr * (1 - fc) * img[r1, c0] + fr * fc * img[r1, c1])


def _descriptor_oracle(img, bins):
    c = img.shape[0] // 2
    out = np.zeros(bins)
    for k in range(bins):
        th = 2 * math.pi * k / bins
        out[k] = sum(_bilinear(img, c - r * math.sin(th), c + r * math.cos(th)) for r in range(c + 1))
    return out


@pytest.mark.parametrize("width, bins", [(41, 24), (40, 24), (21, 360), (64, 8)])
def test_descriptor_matches_loop_oracle(width, bins):
    img = np.random.default_rng(width).random((width, width))
    got = compute_descriptor(RadarFrame(img, 1.0), bins).values
    np.testing.assert_allclose(got, _descriptor_oracle(img, bins), rtol=1e-12)


def test_zero_frame_gives_zero_descriptor():
    d = compute_descriptor(RadarFrame(np.zeros((51, 51)), 1.0), 64)
    assert d.bins == 64 and not d.values.any()


def test_uniform_frame_gives_flat_descriptor():
    d = compute_descriptor(RadarFrame(np.full((101, 101), 0.6), 1.0), 360).values
    assert d.max() / d.min() - 1.0 <= 0.02


def test_spoke_argmax():
    n, c = 101, 50
    for j in (0, 37, 90, 200, 333):
        th = math.radians(j)
        img = np.zeros((n, n))
        for r in range(c + 1):
            img[int(round(c - r * math.sin(th))), int(round(c + r * math.cos(th)))] = 1.0
        d = compute_descriptor(RadarFrame(img, 1.0), 360)
        assert int(np.argmax(d.values)) == j


def test_bins_must_be_at_least_8():
    with pytest.raises(ValueError):
        compute_descriptor(RadarFrame(np.zeros((11, 11)), 1.0), 4)


def test_descriptor_values_validated():
    with pytest.raises(ValueError):
        LodeStarDescriptor(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        LodeStarDescriptor(np.array([1.0, np.nan]))


def test_correlate_one_hot_same():
    a = np.zeros(8)
    a[0] = 1
    np.testing.assert_allclose(circular_correlate(a, a), a, atol=1e-12)


def test_correlate_one_hot_offset():
    # out[s] = sum_k a[(k+s) % 8] b[k] with b = e0 picks a[s]: peak at s = 3
    a, b = np.zeros(8), np.zeros(8)
    a[3], b[0] = 1.0, 1.0
    out = circular_correlate(a, b)
    expected = np.zeros(8)
    expected[3] = 1.0
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert int(np.argmax(out)) == 3


@pytest.mark.parametrize("n", [8, 64, 360])
def test_correlate_matches_naive(n):
    rng = np.random.default_rng(n)
    for _ in range(10):
        a, b = rng.random(n), rng.random(n)
        ref = circular_correlate_naive(a, b)
        np.testing.assert_allclose(circular_correlate(a, b), ref, rtol=1e-6, atol=1e-9 * np.abs(ref).max())


@settings(max_examples=40)
@given(st.integers(8, 64), st.integers(0, 1000), st.integers(-100, 100))
def test_correlate_shift_invariance(n, seed, s):
    rng = np.random.default_rng(seed)
    a, b = rng.random(n), rng.random(n)
    np.testing.assert_allclose(circular_correlate(np.roll(a, s), np.roll(b, s)),
                               circular_correlate(a, b), atol=1e-9)


def test_correlate_mismatch_raises():
    with pytest.raises(ValueError):
        circular_correlate(np.ones(8), np.ones(9))


def test_identical_descriptors_give_zero_rotation():
    d = LodeStarDescriptor(np.random.default_rng(2).random(360))
    est = estimate_rotation(d, d)
    assert est.theta_L == pytest.approx(0.0, abs=1e-12)
    assert est.peak_ratio >= 1.0


def test_all_zero_descriptor_is_degenerate():
    z = LodeStarDescriptor(np.zeros(360))
    d = LodeStarDescriptor(np.ones(360))
    for a, b in ((z, d), (d, z), (z, z)):
        est = estimate_rotation(a, b)
        assert est.theta_L == 0.0 and est.peak_ratio == 1.0


@settings(max_examples=60)
@given(st.integers(-400, 400), st.integers(0, 10_000), st.sampled_from([8, 64, 360]))
def test_shift_periodicity(s, seed, n):
    d = LodeStarDescriptor(np.random.default_rng(seed).random(n) * 50)
    est = estimate_rotation(d, d.shifted(s))
    err = math.remainder(est.theta_L - s * d.bin_width, 2 * math.pi)
    assert abs(err) <= 0.5 * d.bin_width + 1e-12


def test_positive_rotation_is_positive_heading_change(clean_scene, harbor):
    _, traj, spec, _ = harbor
    p = traj.poses[20]
    a = compute_descriptor(render(clean_scene, p, spec))
    b = compute_descriptor(render(clean_scene, p.compose(Pose2(math.radians(10))), spec))
    est = estimate_rotation(a, b)
    assert abs(math.degrees(est.theta_L) - 10.0) <= 0.5
    back = estimate_rotation(b, a)
    assert abs(est.theta_L + back.theta_L) <= 0.5 * a.bin_width


def test_antisymmetry_random():
    rng = np.random.default_rng(8)
    for _ in range(50):
        a = LodeStarDescriptor(rng.random(360))
        b = a.shifted(int(rng.integers(-180, 180)))
        b = LodeStarDescriptor(b.values + 0.05 * rng.random(360))
        fw, bw = estimate_rotation(a, b).theta_L, estimate_rotation(b, a).theta_L
        assert abs(math.remainder(fw + bw, 2 * math.pi)) <= 0.5 * a.bin_width


@settings(max_examples=40)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000), st.integers(0, 359))
def test_intensity_scale_invariance(c, seed, s):
    rng = np.random.default_rng(seed)
    a = LodeStarDescriptor(rng.random(360))
    b = LodeStarDescriptor(np.roll(a.values, s) + 0.1 * rng.random(360))
    for sub in (False, True):
        e1 = estimate_rotation(a, b, subbin=sub)
        e2 = estimate_rotation(a, LodeStarDescriptor(b.values * c), subbin=sub)
        assert round(e1.shift) == round(e2.shift)
        if not sub:
            assert e1.theta_L == e2.theta_L
        else:
            assert e1.theta_L == pytest.approx(e2.theta_L, abs=1e-9)


def test_subbin_refinement_recovers_fractional_shift():
    # a smooth periodic bump shifted by 12.3 bins
    n = 360
    k = np.arange(n)
    f = lambda s: np.exp(np.cos(2 * np.pi * (k - s) / n) * 8.0)
    est = estimate_rotation(LodeStarDescriptor(f(40.0)), LodeStarDescriptor(f(52.3)))
    assert est.shift == pytest.approx(12.3, abs=0.05)
    coarse = estimate_rotation(LodeStarDescriptor(f(40.0)), LodeStarDescriptor(f(52.3)), subbin=False)
    assert coarse.shift == 12.0


def test_random_frames_have_low_peak_ratio():
    rng = np.random.default_rng(21)
    ratios = []
    for _ in range(20):
        a = compute_descriptor(RadarFrame(rng.random((101, 101)), 1.0))
        b = compute_descriptor(RadarFrame(rng.random((101, 101)), 1.0))
        ratios.append(estimate_rotation(a, b).peak_ratio)
    assert min(ratios) >= 1.0
    assert np.median(ratios) < 1.2


def test_structured_frames_have_high_peak_ratio(clean_scene, harbor):
    _, traj, spec, _ = harbor
    a = compute_descriptor(render(clean_scene, traj.poses[50], spec))
    b = compute_descriptor(render(clean_scene, traj.poses[51], spec))
    assert estimate_rotation(a, b).peak_ratio > 1.5


def test_masked_estimate_ignores_invalid_bins():
    rng = np.random.default_rng(4)
    prev = LodeStarDescriptor(rng.random(360) * 10)
    # curr: true shift of 15 bins, but 40% of bins copied unchanged from prev
    curr = prev.shifted(15).values.copy()
    stale = np.zeros(360, bool)
    stale[:144] = True
    curr[stale] = prev.values[stale]
    curr = LodeStarDescriptor(curr)
    est = estimate_rotation(prev, curr, valid=~stale)
    assert est.shift == pytest.approx(15.0, abs=0.5)
    with pytest.raises(ValueError):
        estimate_rotation(prev, curr, valid=np.ones(10, bool))
    assert estimate_rotation(prev, curr, valid=np.zeros(360, bool)).theta_L == 0.0


def test_csv_dump():
    text = LodeStarDescriptor(np.array([0.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])).to_csv()
    lines = text.splitlines()
    assert lines[0] == "bin_index,value"
    assert lines[2] == "1,1.5"
    assert len(lines) == 9
