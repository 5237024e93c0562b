import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.self_similar import (
    DimensionReport,
    SimilarityMap,
    SimilaritySystem,
    addresses_of_depth,
    analytic_dimension,
    box_counting_dimension,
    canonical_n,
    cantor_sample,
    check_open_set_condition,
    mandala_box_anchor,
    mandala_point,
    mandala_sample,
    mandala_system,
    moran_dimension,
    natural_scales,
)
from fractal_cut_locus.algo.tree import Address
from fractal_cut_locus.errors import DegenerateAlpha, DegenerateScales


def inflate(system, factor):
    maps = [m.model_copy(update={"ratio": m.ratio * factor}) for m in system.maps]
    return system.model_copy(update={"maps": maps})


def test_mandala_point_examples(params):
    assert mandala_point(Address(word=(0,)), params) == pytest.approx([0.0, 0.0])
    assert mandala_point(Address(word=(1,)), params) == pytest.approx([1 / 3, 0.0], rel=1e-15)
    y = mandala_point(Address(word=(1, 1)), params)
    assert y[0] == pytest.approx(1 / 3 + 2 * 1.5 / 81, rel=1e-14)
    assert y[0] == pytest.approx(0.370370, abs=1e-6)


def test_mandala_needs_k3(params_k2):
    with pytest.raises(DegenerateAlpha):
        mandala_point(Address(word=(1,)), params_k2)
    with pytest.raises(DegenerateAlpha):
        mandala_system(params_k2)


def test_mandala_system_shape(canonical_params):
    system = mandala_system(canonical_params)
    assert len(system.maps) == 11
    assert all(r == pytest.approx(1 / 9, rel=1e-15) for r in system.ratios)
    origin = np.zeros(5)
    assert system.map_for(0)(origin) == pytest.approx(origin)


def test_maps_reproduce_mandala_points(canonical_params):
    system = mandala_system(canonical_params)
    origin = np.zeros(5)
    for address in addresses_of_depth(3, canonical_params)[::13]:
        assert np.allclose(system.apply_word(address, origin), mandala_point(address, canonical_params), atol=1e-10)


def test_sample_matches_points(canonical_params):
    sample = mandala_sample(2, canonical_params)
    addresses = addresses_of_depth(2, canonical_params)
    assert len(sample) == 121
    for address, point in zip(addresses, sample):
        assert np.allclose(point, mandala_point(address, canonical_params), atol=1e-15)


@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(0.01, 0.99),
)
def test_similarity_ratio(x, y, ratio):
    m = SimilarityMap(ratio=ratio, shift=np.array([0.3, -1.0, 2.0]))
    x, y = np.array(x), np.array(y)
    distance = np.linalg.norm(x - y)
    assert np.linalg.norm(m(x) - m(y)) == pytest.approx(ratio * distance, rel=1e-12, abs=1e-12)


def test_open_set_condition_holds(canonical_params):
    report = check_open_set_condition(mandala_system(canonical_params))
    t1 = 1 / 9
    assert report.passed
    assert report.containment_margin == pytest.approx(t1, abs=1e-12)
    assert report.separation_margin == pytest.approx(2 * t1, abs=1e-12)


def test_open_set_condition_fails_for_duplicates(canonical_params):
    system = mandala_system(canonical_params)
    duplicated = system.model_copy(update={"maps": system.maps + [system.maps[0]]})
    report = check_open_set_condition(duplicated)
    assert not report.passed
    assert report.separation_margin < 0


def test_open_set_condition_fails_when_inflated(canonical_params):
    report = check_open_set_condition(inflate(mandala_system(canonical_params), 3.0))
    assert not report.passed


@pytest.mark.parametrize(
    "ratios, expected",
    [
        ([1 / 3] * 5, math.log(5) / math.log(3)),
        ([0.4], 0.0),
        ([0.5] * 4, 2.0),
        ([0.5, 0.25, 0.25], 1.0),
    ],
)
def test_moran_dimension(ratios, expected):
    assert moran_dimension(ratios) == pytest.approx(expected, abs=1e-12)


def test_moran_matches_closed_form():
    unequal = moran_dimension([1 / 9] * 10 + [1 / 9 * (1 - 1e-9)])
    assert unequal == pytest.approx(math.log(11) / math.log(9), abs=1e-8)


def test_moran_rejects_bad_ratio():
    with pytest.raises(ValueError):
        moran_dimension([1.5, 0.2])


@pytest.mark.parametrize(
    "k, n, expected",
    [(2, 3, 1.464974), (3, 6, math.log(11) / (2 * math.log(3)))],
)
def test_analytic_dimension(k, n, expected):
    result = analytic_dimension(k, n)
    assert result.s == pytest.approx(expected, abs=1e-6)
    assert result.in_open_range


def test_analytic_dimension_boundary():
    result = analytic_dimension(3, 5)
    assert result.s == 1.0
    assert not result.in_open_range


@pytest.mark.parametrize("k, n", [(2, 3), (3, 6), (4, 15)])
def test_canonical_n(k, n):
    report = canonical_n(k)
    assert report.n == n
    assert report.integral and report.in_range


def test_box_count_segment():
    points = np.linspace(0.0, 1.0, 10_000, endpoint=False)[:, None]
    result = box_counting_dimension(points, [2.0**-s for s in range(2, 10)])
    assert result.slope == pytest.approx(1.0, abs=0.05)
    assert result.reliable


def test_box_count_cantor():
    points = cantor_sample(10)
    assert len(points) == 1024
    result = box_counting_dimension(points, [3.0**-s for s in range(1, 9)])
    assert result.counts == [2**s for s in range(1, 9)]
    assert result.slope == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_box_count_scaling_invariance():
    points = cantor_sample(10)
    scales = [3.0**-s for s in range(1, 9)]
    base = box_counting_dimension(points, scales)
    scaled = box_counting_dimension(points * 4.0, [4.0 * s for s in scales])
    assert scaled.counts == base.counts


def test_box_count_preconditions():
    with pytest.raises(ValueError):
        box_counting_dimension(np.zeros((10, 2)), [0.5, 0.25, 0.125, 0.0625])
    with pytest.raises(ValueError):
        box_counting_dimension(np.random.default_rng(0).random((2000, 2)), [0.5, 0.25])
    with pytest.raises(DegenerateScales):
        box_counting_dimension(np.zeros((2000, 2)), [0.5, 0.25, 0.125, 0.0625])


def test_mandala_box_count_matches_analytic(canonical_params):
    points = mandala_sample(4, canonical_params)
    assert len(points) == 14641
    result = box_counting_dimension(
        points, natural_scales(canonical_params, 4), anchor=mandala_box_anchor(canonical_params)
    )
    assert result.counts == [11, 121, 1331, 14641]
    assert result.slope == pytest.approx(analytic_dimension(3, 6).s, abs=0.05)


def test_dimension_report(canonical_params):
    report = DimensionReport.from_params(canonical_params, depth=4)
    assert report.moran_s == pytest.approx(report.analytic_s, abs=1e-12)
    assert report.osc.passed
    assert report.boxcount.slope == pytest.approx(report.analytic_s, abs=0.05)
    assert report.tree_boxcount is not None


def test_dimension_report_k2(params_k2):
    report = DimensionReport.from_params(params_k2)
    assert report.analytic_s == pytest.approx(math.log(5) / math.log(3))
    assert report.moran_s is None and report.osc is None


def test_custom_system_ratios():
    system = SimilaritySystem(
        maps=[SimilarityMap(ratio=1 / 3, shift=np.array([0.0])), SimilarityMap(ratio=1 / 3, shift=np.array([2 / 3]))],
        center=np.array([0.5]),
        radius=0.5,
    )
    # middle-third maps on (0, 1): images touch nothing and stay inside
    assert check_open_set_condition(system).passed
    assert moran_dimension(system.ratios) == pytest.approx(math.log(2) / math.log(3))
    assert ConstructionParams(k=3, n=3).contraction == pytest.approx(1 / 9)
