
from fractal_cut_locus.algo.cut_locus import Skeleton, medial_axis
from fractal_cut_locus.algo.randers import demo_ray_families
from fractal_cut_locus.algo.tree import build_tree
from fractal_cut_locus.algo.visualization import plot_cut_locus, plot_profile, plot_randers, plot_tree


def is_svg(path) -> bool:
    text = path.read_text()
    return text.startswith("<?xml") and "<svg" in text


def test_tree_svg_is_reproducible(tmp_path, params):
    tree = build_tree(2, params)
    first = plot_tree(tree, tmp_path / "tree.svg").read_bytes()
    second = plot_tree(tree, tmp_path / "tree.svg").read_bytes()
    assert is_svg(tmp_path / "tree.svg")
    assert first == second


def test_profile_svg(tmp_path, demo_profile):
    assert is_svg(plot_profile(demo_profile, tmp_path / "profile.svg", samples=200))


def test_cut_locus_svg(tmp_path, demo_surface):
    sample = medial_axis(demo_surface, resolution=64)
    skeleton = Skeleton.from_segment([0.0, 0.0], [1.0, 0.0])
    assert is_svg(plot_cut_locus(sample, skeleton, tmp_path / "cutlocus.svg"))


def test_randers_svg(tmp_path, demo_randers, demo_decomposition):
    rays = demo_ray_families(demo_decomposition, count=4, fractions=(0.5,), samples=33)
    path = plot_randers(demo_randers.form, rays, tmp_path / "randers.svg", grid=12)
    assert is_svg(path)
