import math

import numpy as np
import pytest

from fractal_cut_locus.algo import smoothing
from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.smoothing import (
    SeamGeometry,
    curvature,
    derivative_mismatch,
    derivative_samples,
    normal_segments,
    plateau_from_left,
    plateau_from_right,
    riser_scale,
    smooth_profile,
    verify_profile,
)
from fractal_cut_locus.errors import DivergentSeries, GeometryError, NoAdmissibleYb


# --- Seam geometry ---


def test_demo_seam_constants(demo_seam):
    assert demo_seam.big_radius == pytest.approx(math.sqrt(2) + 0.1)
    assert demo_seam.small_radius == pytest.approx(math.sqrt(2) / 2 + 0.1)
    assert demo_seam.slant == pytest.approx(math.sqrt(2) / 2)
    assert float(demo_seam.f1(0.0)) == demo_seam.y_d
    assert float(demo_seam.f2(demo_seam.slant)) == pytest.approx(demo_seam.y_d, abs=1e-15)


def test_arcs_cross_between_the_tangency_points(demo_seam):
    x_r = demo_seam.crossing()
    assert 0.40 < x_r < 0.42
    assert float(demo_seam.f1(x_r)) == pytest.approx(float(demo_seam.f2(x_r)), abs=1e-12)


def test_frame_maps_back_to_the_meridian_plane(demo_seam):
    o = demo_seam.to_meridian(0.0, 0.0)
    assert np.allclose(o, [0.0, 0.0], atol=1e-15)
    q = demo_seam.to_meridian(*demo_seam.small_center)
    assert np.allclose(q, [1.0, 0.0], atol=1e-14)
    c_prime = demo_seam.to_meridian(0.0, demo_seam.y_d)
    assert np.linalg.norm(c_prime) == pytest.approx(demo_seam.big_radius)


def test_small_arc_undefined_outside_its_circle(demo_seam):
    assert float(demo_seam.f2(demo_seam.slant + 2.0)) == -math.inf


def test_seam_shape_validated():
    with pytest.raises(ValueError):
        SeamGeometry(big_radius=1.0, small_radius=1.5, slant=0.5, phi=0.5)
    with pytest.raises(ValueError):
        SeamGeometry(big_radius=1.0, small_radius=0.5, slant=1.5, phi=0.5)


# --- Profile construction ---


def test_plateau_heights_are_monotone_in_the_riser_width(demo_seam):
    x_r = demo_seam.crossing()
    left = [plateau_from_left(demo_seam, s) for s in np.linspace(0.05, x_r, 6)]
    right = [plateau_from_right(demo_seam, s) for s in np.linspace(x_r, demo_seam.slant - 0.05, 6)]
    assert all(a > b for a, b in zip(left, left[1:]))
    assert all(a < b for a, b in zip(right, right[1:]))


def test_profile_layout(demo_profile):
    assert 0.0 < demo_profile.x_q < demo_profile.x_r < demo_profile.x_s < demo_profile.end
    assert demo_profile.y_r < demo_profile.y_low < demo_profile.y_b < demo_profile.y_d
    assert demo_profile.y_b == pytest.approx(0.5 * (demo_profile.y_low + demo_profile.y_d))


def test_profile_endpoints(demo_profile):
    ends = np.array([0.0, demo_profile.end])
    assert np.all(demo_profile(ends) == demo_profile.y_d)
    assert np.max(np.abs(demo_profile.prime(ends))) < 1e-9


def test_profile_matches_the_arcs_outside_the_seam(demo_profile):
    seam = demo_profile.seam
    assert float(demo_profile(-0.1)) == float(seam.f1(-0.1))
    assert float(demo_profile(demo_profile.end + 0.1)) == float(seam.f2(demo_profile.end + 0.1))


def test_profile_plateau_is_flat(demo_profile):
    x = np.linspace(demo_profile.x_q, demo_profile.x_s, 11)
    assert np.all(demo_profile(x) == demo_profile.y_b)
    assert np.all(demo_profile.prime(x) == 0.0)


def test_sandwich(demo_profile):
    seam = demo_profile.seam
    x = np.linspace(0.0, demo_profile.end, 1000)
    F = demo_profile(x)
    assert np.all(F <= seam.y_d + 1e-12)
    assert np.all(F >= np.maximum(seam.f1(x), seam.f2(x)) - 1e-12)


def test_derivative_matches_finite_differences(demo_profile):
    for x in np.linspace(0.02, demo_profile.end - 0.02, 15):
        step = 1e-5
        pair = demo_profile(np.array([x - step, x + step]))
        central = (pair[1] - pair[0]) / (2 * step)
        analytic = float(demo_profile.prime(x))
        assert abs(central - analytic) <= max(1e-8, 1e-6 * abs(analytic))


@pytest.mark.parametrize("fraction", [0.25, 0.5, 0.8, 0.85, 0.9, 0.95, 0.99])
def test_profile_passes_across_the_feasible_interval(demo_seam, fraction):
    profile = smooth_profile(demo_seam, fraction=fraction)
    report = verify_profile(profile)
    assert report.checks["derivative"], report.derivative_mismatch
    assert report.passed


def test_derivative_samples_reach_into_narrow_risers(demo_seam):
    profile = smooth_profile(demo_seam, fraction=0.95)
    samples = derivative_samples(profile)
    width = riser_scale(profile.x_q)
    assert np.any(np.abs(samples - 0.5 * profile.x_q) < width)
    assert derivative_mismatch(profile) <= 1.0


def test_default_plateau_is_the_highest_that_passes(demo_seam):
    profile = smooth_profile(demo_seam)
    assert profile.fraction > 0.95
    assert profile.y_b > smooth_profile(demo_seam, fraction=0.95).y_b
    assert verify_profile(profile).passed


def test_plateau_search_stops_below_the_first_failing_height(monkeypatch, demo_seam):
    monkeypatch.setattr(smoothing, "_passes", lambda profile: profile.fraction <= 0.7)
    profile = smooth_profile(demo_seam, steps=10)
    assert 0.7 - 2.0**-11 < profile.fraction <= 0.7


def test_plateau_search_backs_off_below_one_half(monkeypatch, demo_seam):
    monkeypatch.setattr(smoothing, "_passes", lambda profile: profile.fraction <= 0.3)
    profile = smooth_profile(demo_seam, steps=12)
    assert 0.3 - 2.0**-12 < profile.fraction <= 0.3


def test_plateau_search_gives_up(monkeypatch, demo_seam):
    monkeypatch.setattr(smoothing, "_passes", lambda profile: False)
    with pytest.raises(NoAdmissibleYb):
        smooth_profile(demo_seam)


def test_fraction_range(demo_seam):
    with pytest.raises(ValueError):
        smooth_profile(demo_seam, fraction=1.0)


def test_no_admissible_plateau_when_the_arcs_miss():
    seam = SeamGeometry(big_radius=1.0, small_radius=0.1, slant=0.95, phi=0.5)
    with pytest.raises(NoAdmissibleYb) as info:
        smooth_profile(seam)
    assert isinstance(info.value, GeometryError)


def test_series_seam():
    params = ConstructionParams(k=3, n=3, phi=math.pi / 4, epsilon=0.1)
    seam = SeamGeometry.from_params(params)
    assert seam.slant == pytest.approx(1.0)
    profile = smooth_profile(seam, fraction=0.5)
    assert profile.x_q < profile.x_r < profile.x_s


def test_series_seam_refused_at_k2(params_k2):
    with pytest.raises(DivergentSeries):
        SeamGeometry.from_params(params_k2)


# --- Curvature ---


def test_arc_curvatures(demo_profile):
    seam = demo_profile.seam
    x = np.linspace(0.0, 0.6, 7)
    assert np.allclose(curvature(demo_profile, x, "f1"), -1.0 / seam.big_radius, rtol=1e-12)
    near = np.linspace(seam.slant - 0.3, seam.slant, 7)
    assert np.allclose(curvature(demo_profile, near, "f2"), -1.0 / seam.small_radius, rtol=1e-12)


def test_plateau_is_straight(demo_profile):
    x = np.linspace(demo_profile.x_q, demo_profile.x_s, 5)
    assert np.all(curvature(demo_profile, x, "F") == 0.0)


def test_smoothing_never_bends_more_than_the_arcs(demo_profile):
    x = np.linspace(0.0, demo_profile.end, 1000)
    assert np.all(curvature(demo_profile, x, "F1") >= curvature(demo_profile, x, "f1") - 1e-9)
    near = x[x > demo_profile.end - demo_profile.seam.small_radius]
    assert np.all(curvature(demo_profile, near, "F2") >= curvature(demo_profile, near, "f2") - 1e-9)


def test_unknown_piece(demo_profile):
    with pytest.raises(ValueError):
        curvature(demo_profile, 0.1, "g")


# --- Verification ---


def test_demo_profile_verifies(demo_profile):
    report = verify_profile(demo_profile)
    assert report.passed, report.checks
    assert report.normal_crossings == 0
    assert report.endpoint_slope < 1e-9
    assert report.derivative_mismatch <= 1.0


def test_normals_reach_the_axis(demo_profile):
    starts, stops = normal_segments(demo_profile, 200)
    assert starts.shape == stops.shape == (200, 2)
    assert np.allclose(stops[:, 1], 0.0, atol=1e-12)
    assert np.all(starts[:, 1] > 0.0)


def test_flattened_profile_breaks_the_sandwich(demo_profile):
    flattened = demo_profile.model_copy(update={"y_b": demo_profile.y_r - 0.01})
    report = verify_profile(flattened, normals=20)
    assert not report.checks["sandwich"]
    assert not report.passed
