import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractal_cut_locus.algo.geometry import rotate, rotation_matrix
from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.sequences import l_seq, theta, total_tree_length
from fractal_cut_locus.algo.tree import (
    Address,
    branch_angles,
    build_tree,
    endpoint_sample,
    grow_tree,
    node_position,
    verify_sphere_invariant,
)
from fractal_cut_locus.errors import AlphabetOutOfRange, BudgetExceeded

coords = st.floats(min_value=-10, max_value=10, allow_nan=False)
angles = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


def test_quarter_turn():
    p = rotate([1.0, 0.0, 0.0], np.zeros(3), (1, 2), math.pi / 2)
    assert p == pytest.approx([0.0, 1.0, 0.0], abs=1e-15)


@given(st.lists(coords, min_size=4, max_size=4), st.lists(coords, min_size=4, max_size=4), angles)
def test_rotation_inverse_and_isometry(p, center, angle):
    q = rotate(p, center, (2, 4), angle)
    back = rotate(q, center, (2, 4), -angle)
    assert np.allclose(back, p, atol=1e-12)
    assert np.linalg.norm(q - np.array(center)) == pytest.approx(
        np.linalg.norm(np.array(p) - np.array(center)), abs=1e-12
    )
    # orthogonal complement is fixed
    assert q[0] == pytest.approx(p[0], abs=1e-12)
    assert q[2] == pytest.approx(p[2], abs=1e-12)


def test_rotation_plane_validation():
    with pytest.raises(ValueError):
        rotation_matrix(3, (1, 1), 0.1)
    with pytest.raises(ValueError):
        rotation_matrix(3, (1, 4), 0.1)


def test_address_order_and_parse():
    words = [Address(word=w) for w in [(1,), (-1, 2), (), (0, -2), (-1,)]]
    ordered = sorted(words)
    assert [a.word for a in ordered] == [(), (-1,), (-1, 2), (0, -2), (1,)]
    assert Address.parse("1;-2;0").word == (1, -2, 0)
    assert str(Address(word=(1, -2))) == "1;-2"
    assert Address.parse("").depth == 0


def test_node_position_examples(params):
    assert node_position(Address(), params) == pytest.approx([math.sqrt(2), 0, 0], rel=1e-15)
    q0 = node_position(Address(word=(0,)), params)
    assert q0 == pytest.approx([l_seq(0, params) + l_seq(1, params), 0, 0], rel=1e-15)
    q1 = node_position(Address(word=(1,)), params)
    assert q1[0] == pytest.approx(1.828886, abs=1e-6)
    assert q1[1] == pytest.approx(1 / 9, abs=1e-12)
    assert q1[2] == 0.0


def test_node_position_alphabet(params):
    with pytest.raises(AlphabetOutOfRange):
        node_position(Address(word=(0, 3)), params)


def test_build_matches_node_position(params):
    tree = build_tree(3, params, threads=2)
    for level in range(4):
        for index in range(0, len(tree.levels[level]), 7):
            address = tree.address_of(level, index)
            assert tree.levels[level][index] == pytest.approx(node_position(address, params), abs=1e-12)


def test_counts(params):
    tree = build_tree(2, params)
    assert tree.segment_count == 31
    assert tree.node_count == 32
    assert len(tree.segments()) == 31
    assert tree.segment_array().shape == (31, 2, 3)
    assert len(list(tree.nodes())) == 32
    assert len(tree.rays()) == 31


def test_depth_zero_is_root_segment(params):
    tree = build_tree(0, params)
    (segment,) = tree.segments()
    assert segment.start == pytest.approx([0, 0, 0])
    assert segment.end == pytest.approx([math.sqrt(2), 0, 0])
    assert segment.length == pytest.approx(l_seq(0, params), rel=1e-15)


def test_depth_one_on_sphere(params):
    points = endpoint_sample(1, params)
    q = np.array([l_seq(0, params), 0, 0])
    assert len(points) == 5
    assert np.linalg.norm(points - q, axis=1) == pytest.approx([l_seq(1, params)] * 5, abs=1e-12)


def test_endpoint_sample_bounded(params):
    points = endpoint_sample(4, params)
    assert len(points) == 625
    assert np.linalg.norm(points, axis=1).max() < total_tree_length(params).value


def test_sphere_invariant(params):
    report = verify_sphere_invariant(build_tree(3, params))
    assert report.passed
    assert report.max_residual < 1e-9
    assert report.checked == 1 + 5 + 25 + 125


def test_sphere_invariant_detects_corruption(params):
    tree = build_tree(3, params)
    tree.levels[3][17] = tree.levels[3][17] + np.array([0.0, 1e-6, 0.0])
    report = verify_sphere_invariant(tree)
    assert not report.passed
    assert report.worst_address == str(tree.address_of(3, 17))


def test_branch_angles(params):
    angles_table = branch_angles(build_tree(2, params))
    letters = list(range(-2, 3))
    for a, _ in enumerate(letters):
        for b, j2 in enumerate(letters):
            expected = 0.0 if j2 == 0 else theta(2, params.phi)
            assert angles_table[a, b] == pytest.approx(expected, abs=1e-9)


def test_threads_do_not_change_output(params):
    single = build_tree(4, params, threads=1)
    pooled = build_tree(4, params, threads=4)
    again = build_tree(4, params, threads=4)
    for a, b, c in zip(single.levels, pooled.levels, again.levels):
        assert np.array_equal(a, b)
        assert np.array_equal(b, c)


def test_budget_exceeded(params):
    with pytest.raises(BudgetExceeded):
        grow_tree(6, 3, params.phi, [1.0] * 7, budget=1000)


def test_k2_tree_is_finite(params_k2):
    tree = build_tree(5, params_k2)
    assert all(np.isfinite(level).all() for level in tree.levels)


def test_higher_dimension_tree():
    p = ConstructionParams(k=3, n=5)
    tree = build_tree(2, p)
    assert len(tree.endpoints()) == 81
    assert verify_sphere_invariant(tree).passed
