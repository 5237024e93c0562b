import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractal_cut_locus.algo.hull import HullGeometry, assemble_boundary
from fractal_cut_locus.algo.randers import (
    Chart,
    CoefficientForm,
    MagneticProfile,
    RandersMetric,
    SampledCurve,
    ZeroForm,
    assemble_beta,
    classify_region,
    closedness_residual,
    curve_length,
    demo_ray_families,
    equal_length_check,
    exactness_check,
    length_convergence,
    positivity_check,
    randers_norm,
    randers_report,
    ray_length_closed_form,
    round_ball_metric,
    round_ball_rays,
)
from fractal_cut_locus.errors import OutsideDomain, PositivityViolated, SeamMismatch


def make_constant_form(b, chart: Chart = Chart.CARTESIAN) -> CoefficientForm:
    b = np.asarray(b, dtype=float)
    return CoefficientForm(
        chart=chart,
        func=lambda p: np.broadcast_to(b, p.shape).copy(),
        lower=np.array([0.1, 0.0]),
        upper=np.array([1.0, 2 * math.pi]),
    )


# --- Profiles ---


def test_profile_shape():
    profile = MagneticProfile(interval=(0.0, 1.0), c=0.5, delta=0.25)
    assert float(profile(0.5)) == 0.5
    assert float(profile(0.0)) == 0.0
    assert float(profile(1.0)) == 0.0
    assert profile.support == (0.375, 0.625)
    assert float(profile.cumulative(1.0)) == pytest.approx(profile.integral(), rel=1e-12)
    assert float(profile.cumulative(0.2)) == 0.0


def test_shifted_profile():
    profile = MagneticProfile(interval=(0.0, 0.8), c=0.5, delta=0.5)
    moved = profile.shifted(0.7)
    assert moved.interval == pytest.approx((0.7, 1.5))
    assert float(moved(1.1)) == pytest.approx(float(profile(0.4)), rel=1e-12)
    assert moved.integral() == pytest.approx(profile.integral(), rel=1e-12)


def test_profile_amplitude_gate():
    with pytest.raises(ValueError):
        MagneticProfile(interval=(0.0, 1.0), c=1.2, delta=0.25)
    with pytest.raises(ValueError):
        MagneticProfile(interval=(1.0, 0.0), c=0.5, delta=0.25)


# --- Norm ---


def test_inward_travel_is_longer():
    metric = round_ball_metric(c=0.5, delta=0.25)
    x = np.array([0.5, 0.0])
    assert randers_norm(metric, x, [-1.0, 0.0]) == pytest.approx(1.5, rel=1e-15)
    assert randers_norm(metric, x, [1.0, 0.0]) == pytest.approx(0.5, rel=1e-15)


def test_polar_chart_agrees():
    metric = round_ball_metric(c=0.5, delta=0.25, chart=Chart.POLAR)
    assert randers_norm(metric, [0.5, 0.3], [-1.0, 0.0]) == pytest.approx(1.5, rel=1e-15)
    assert randers_norm(metric, [0.5, 0.3], [0.0, 2.0]) == pytest.approx(1.0, rel=1e-15)


def test_positivity_violation_refused():
    metric = RandersMetric(form=make_constant_form([1.2, 0.0]))
    with pytest.raises(PositivityViolated):
        randers_norm(metric, [0.5, 0.0], [1.0, 0.0])


@given(
    st.floats(min_value=0.0, max_value=2 * math.pi),
    st.floats(min_value=0.05, max_value=0.95),
    st.floats(min_value=0.0, max_value=2 * math.pi),
    st.floats(min_value=0.01, max_value=100.0),
)
def test_homogeneity_and_asymmetry(angle, r, direction, scale):
    metric = round_ball_metric(c=0.5, delta=0.25)
    x = r * np.array([math.cos(angle), math.sin(angle)])
    y = np.array([math.cos(direction), math.sin(direction)])
    forward = randers_norm(metric, x, y)
    assert randers_norm(metric, x, scale * y) == pytest.approx(scale * forward, rel=1e-12)
    assert abs(forward - randers_norm(metric, x, -y)) <= 2 * 0.5 + 1e-15


def test_positivity_check_margin():
    report = positivity_check(round_ball_metric(c=0.5, delta=0.25))
    assert report.passed
    assert report.margin == pytest.approx(0.5, abs=1e-6)


def test_positivity_check_flags_large_field():
    report = positivity_check(RandersMetric(form=make_constant_form([1.2, 0.0])))
    assert not report.passed
    assert report.sup_norm == pytest.approx(1.2)


# --- Lengths ---


def test_unit_ray_closed_form():
    metric = round_ball_metric(c=0.5, delta=0.25)
    profile = metric.form.profile
    length = curve_length(metric, SampledCurve.segment([1.0, 0.0], [0.0, 0.0]))
    assert length.riemannian == pytest.approx(1.0, abs=1e-14)
    assert length.finslerian == pytest.approx(1.0 + profile.integral(), abs=1e-7)
    assert ray_length_closed_form(profile) == pytest.approx(1.0 + profile.integral(), rel=1e-14)


def test_finite_difference_tangents():
    metric = round_ball_metric(c=0.5, delta=0.25)
    t = np.linspace(0.0, 1.0, 257)
    curve = SampledCurve(parameter=t, points=np.column_stack([1.0 - t, np.zeros_like(t)]))
    exact = curve_length(metric, SampledCurve.segment([1.0, 0.0], [0.0, 0.0]))
    assert curve_length(metric, curve).finslerian == pytest.approx(exact.finslerian, abs=1e-12)


def test_length_converges_at_least_quadratically():
    metric = round_ball_metric(c=0.5, delta=0.5)
    exact = ray_length_closed_form(metric.form.profile, length=0.45)
    errors, orders = length_convergence(metric, [1.0, 0.0], [0.55, 0.0], exact, counts=(65, 129, 257, 513))
    assert errors[-1] < errors[0]
    assert orders
    assert min(orders) >= 2.0


def test_round_ball_rays_have_equal_length():
    metric = round_ball_metric(c=0.5, delta=0.25)
    report = equal_length_check(metric, round_ball_rays(360))
    assert report.passed
    assert report.rays == 360
    assert report.max_deviation < 1e-6


def test_perturbed_ray_is_detected():
    metric = round_ball_metric(c=0.5, delta=0.25)
    profile = metric.form.profile
    bumped = profile.rescaled(1.0 + 1e-3 / profile.integral())
    rays = round_ball_rays(360)
    metrics = [metric] * 359 + [RandersMetric(form=metric.form.model_copy(update={"profile": bumped}))]
    report = equal_length_check(metrics, rays)
    assert not report.passed
    assert report.max_deviation == pytest.approx(1e-3, rel=0.01)


def test_equal_length_check_pairs_metrics_with_rays():
    metric = round_ball_metric()
    with pytest.raises(ValueError):
        equal_length_check([metric, metric], round_ball_rays(3))
    with pytest.raises(ValueError):
        equal_length_check(metric, [])


# --- Closedness ---


def test_round_ball_field_is_closed():
    assert closedness_residual(round_ball_metric(c=0.5, delta=0.5).form) < 1e-8


def test_rotational_fault_is_detected():
    fault = CoefficientForm(
        chart=Chart.POLAR,
        func=lambda p: np.column_stack([np.zeros(len(p)), 0.1 * p[:, 0]]),
        lower=np.array([0.1, 0.0]),
        upper=np.array([1.0, 2 * math.pi]),
    )
    assert closedness_residual(fault) == pytest.approx(0.1, rel=1e-6)


# --- Region decomposition ---


@pytest.mark.parametrize(
    "point, region",
    [([1.0, 0.5], 2), ([-1.0, 0.0], 1), ([1.3, 0.0], 3), ([0.0, 1.4], 1), ([1.0, -0.5], 2)],
)
def test_classify_examples(demo_decomposition, point, region):
    result = demo_decomposition.classify(point)
    assert result.region == region
    assert not result.seam


def test_band_coordinates(demo_decomposition):
    rho, u = demo_decomposition.classify([1.0, 0.5]).coords
    assert rho == pytest.approx(0.5 / math.sqrt(2), rel=1e-15)
    assert u == pytest.approx(0.5, rel=1e-15)


def test_seam_points_are_flagged(demo_decomposition):
    result = demo_decomposition.classify([0.5, 0.5])
    assert result.seam
    assert result.regions == [1, 2]
    assert demo_decomposition.classify([1.2, -0.2]).regions == [2, 3]


def test_outside_points_are_refused(demo_decomposition):
    with pytest.raises(OutsideDomain):
        demo_decomposition.classify([3.0, 0.0])
    with pytest.raises(OutsideDomain):
        demo_decomposition.classify([1.5, 1.0])


def test_regions_cover_the_dilated_hull_once(demo_decomposition):
    surface = assemble_boundary(HullGeometry.demo(depth=0, n=2).dilated(0.1))
    lo, hi = demo_decomposition.bounds
    rng = np.random.default_rng(7)
    points = lo + (hi - lo) * rng.random((100_000, 2))
    inside = surface.inside(points)
    assert np.array_equal(demo_decomposition.inside(points), inside)
    member = demo_decomposition.memberships(points[inside], tol=0.0)
    assert np.all(member.sum(axis=1) == 1)


# --- Assembled field ---


def test_assembled_field_is_closed(demo_randers):
    assert closedness_residual(demo_randers.form) < 1e-8


def test_unshifted_outer_profile_breaks_the_seam(demo_decomposition):
    profile = MagneticProfile(interval=(0.0, demo_decomposition.band_height), c=0.5, delta=0.5)
    with pytest.raises(SeamMismatch):
        assemble_beta(profile, profile, profile, demo_decomposition)
    with pytest.raises(SeamMismatch):
        assemble_beta(profile.shifted(math.sqrt(2) / 2), profile, profile.rescaled(0.5), demo_decomposition)


def test_assembled_field_vanishes_on_the_boundary(demo_randers, demo_decomposition):
    boundary = demo_decomposition.seam_points(32)["boundary"]
    assert np.max(np.abs(demo_randers.form.coefficients(boundary))) == 0.0


def test_demo_families_have_equal_length(demo_randers, demo_decomposition):
    families = demo_ray_families(demo_decomposition, count=8)
    assert {"cap_o", "cap_q", "cone_0.5"} <= set(families)
    for name, rays in families.items():
        report = equal_length_check(demo_randers, rays)
        assert report.passed, name


def test_cone_ray_gains_the_profile_area(demo_randers, demo_decomposition):
    ray = demo_ray_families(demo_decomposition, count=1, fractions=(0.5,))["cone_0.5"][0]
    length = curve_length(demo_randers, ray)
    area = demo_randers.form.h2.integral()
    assert length.finslerian == pytest.approx(length.riemannian + area, abs=1e-7)


@pytest.mark.parametrize("fraction", [0.1, 0.5, 0.9])
def test_cone_families_mix_feet_that_are_not_mirror_images(demo_randers, demo_decomposition, fraction):
    rays = demo_ray_families(demo_decomposition, count=1, fractions=(fraction,))[f"cone_{fraction:g}"]
    assert len(rays) >= 3
    feet = np.array([ray.points[0] for ray in rays])
    mirrored = feet * np.array([1.0, -1.0])
    lonely = [foot for foot in feet if not np.any(np.all(np.isclose(mirrored, foot, atol=1e-12), axis=1))]
    assert len(lonely) >= 2
    ends = np.array([ray.points[-1] for ray in rays])
    region, seam = demo_decomposition.classify_many(ends)
    assert np.all(region == 2) and not seam.any()
    lengths = [curve_length(demo_randers, ray) for ray in rays]
    assert max(l.riemannian for l in lengths) - min(l.riemannian for l in lengths) < 1e-12
    assert equal_length_check(demo_randers, rays).passed


def test_exactness_proxy(demo_randers):
    report = exactness_check(demo_randers, paths=20)
    assert report.passed
    assert report.max_deviation < 1e-8


def test_exactness_proxy_needs_an_assembled_field():
    with pytest.raises(ValueError):
        exactness_check(round_ball_metric())


def test_randers_report():
    report = randers_report(epsilon=0.1, c=0.5, delta=0.5)
    assert report.passed
    assert report.positivity.margin == pytest.approx(0.5, abs=1e-3)
    assert report.round_ball.rays == 360


def test_classify_region_builds_its_own_decomposition():
    result = classify_region([1.0, 0.0], epsilon=0.05)
    assert result.region == 2
    assert result.coords[1] == pytest.approx(1.0)


def test_zero_field_is_riemannian():
    metric = RandersMetric(form=ZeroForm())
    assert positivity_check(metric, count=256).margin == 1.0
    assert closedness_residual(metric.form, count=32) == 0.0
    ray = SampledCurve.segment([1.0, 0.0], [0.0, 0.0])
    length = curve_length(metric, ray)
    assert length.finslerian == pytest.approx(length.riemannian, abs=1e-15)


def test_reversed_ray_is_shorter():
    metric = round_ball_metric(c=0.5, delta=0.25)
    inward = curve_length(metric, SampledCurve.segment([1.0, 0.0], [0.0, 0.0])).finslerian
    outward = curve_length(metric, SampledCurve.segment([0.0, 0.0], [1.0, 0.0])).finslerian
    gain = metric.form.profile.integral()
    assert inward == pytest.approx(1.0 + gain, abs=1e-7)
    assert outward == pytest.approx(1.0 - gain, abs=1e-7)
