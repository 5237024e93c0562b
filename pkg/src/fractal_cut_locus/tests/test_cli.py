import json

import pytest

from fractal_cut_locus.algo.tree import tree_node_count
from fractal_cut_locus.cli import EXIT_INVALID, EXIT_OK, RunConfig, _check_tree, main


def run(capsys, *argv):
    code = main(list(argv))
    lines = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(lines[-1]) if lines else None


def test_dim_closed_form(capsys, tmp_path):
    code, summary = run(capsys, "dim", "--k", "2", "--n", "3", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert summary["status"] == "passed"
    assert summary["s"] == pytest.approx(1.46497, abs=5e-6)
    assert (tmp_path / "dim" / "dim.json").exists()


def test_divergent_series_exits_invalid(capsys, tmp_path):
    code, summary = run(capsys, "sequences", "--k", "2", "--show", "r", "--out", str(tmp_path))
    assert code == EXIT_INVALID
    assert summary["error"] == "DivergentSeries"


def test_boxcount_refused_at_k2(capsys, tmp_path):
    code, summary = run(capsys, "dim", "--k", "2", "--n", "3", "--boxcount", "--out", str(tmp_path))
    assert code == EXIT_INVALID
    assert summary["error"] == "DegenerateAlpha"


def test_sequences_at_k2_show_convergent_columns(capsys, tmp_path):
    code, summary = run(capsys, "sequences", "--k", "2", "--n", "3", "--count", "4", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert summary["show"] == ["t", "l"]
    header = (tmp_path / "sequences" / "sequences.csv").read_text().splitlines()[0]
    assert header == "i,t,l"


@pytest.mark.parametrize(
    "argv",
    [
        ["tree", "--phi", "2.0"],
        ["tree", "--epsilon", "-1"],
        ["tree", "--k", "3", "--n", "5", "--tol-tail", "1e-3"],
        ["tree", "--format", "png"],
        ["tree", "--tol-sphere", "0"],
        ["tree", "--no-such-flag"],
        ["frobnicate"],
    ],
)
def test_invalid_parameters_are_refused_before_work(capsys, tmp_path, argv):
    code = main(argv + ["--out", str(tmp_path)])
    capsys.readouterr()
    assert code == EXIT_INVALID
    assert not (tmp_path / "tree").exists()


def test_sequences_artifacts_are_idempotent(capsys, tmp_path):
    argv = ("sequences", "--k", "3", "--n", "3", "--count", "6", "--format", "csv,json", "--out", str(tmp_path))
    assert run(capsys, *argv)[0] == EXIT_OK
    first = {p.name: p.read_bytes() for p in (tmp_path / "sequences").iterdir()}
    assert run(capsys, *argv)[0] == EXIT_OK
    second = {p.name: p.read_bytes() for p in (tmp_path / "sequences").iterdir()}
    assert set(first) == {"sequences.csv", "sequences.json"}
    assert first == second


def test_tree_command(capsys, tmp_path):
    code, summary = run(capsys, "tree", "--k", "3", "--n", "3", "--depth", "2", "--format", "csv,svg", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert summary["nodes"] == tree_node_count(2, 3)
    assert summary["max_residual"] < 1e-9
    lines = (tmp_path / "tree" / "tree.csv").read_text().splitlines()
    assert lines[0] == "depth,address,x1,x2,x3"
    assert len(lines) == 1 + summary["nodes"]
    assert (tmp_path / "tree" / "tree.svg").exists()


def test_hull_demo_writes_obj(capsys, tmp_path):
    code, summary = run(
        capsys, "hull", "--demo", "--n", "3", "--depth", "0", "--format", "json,obj", "--out", str(tmp_path)
    )
    assert code == EXIT_OK
    assert summary["convex"] is True
    assert summary["patches"] == 3
    assert (tmp_path / "hull" / "hull.obj").read_text().startswith("v ")


def test_smooth_demo(capsys, tmp_path):
    code, summary = run(capsys, "smooth", "--demo", "--format", "csv,json", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert all(summary["profile"].values())
    assert summary["fraction"] > 0.5
    frame_header = (tmp_path / "smooth" / "profile.csv").read_text().splitlines()[0]
    assert frame_header == "x,F,F_prime,f1,f2"


def test_smooth_demo_at_a_pinned_fraction(capsys, tmp_path):
    code, summary = run(capsys, "smooth", "--demo", "--fraction", "0.9", "--format", "json", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert summary["fraction"] == 0.9
    assert summary["profile"]["derivative"]


def test_sphere_invariant_check_covers_depths_up_to_four(tmp_path):
    result = _check_tree(RunConfig(command="verify-all", out=tmp_path, threads=1))
    assert result["passed"]
    for label in ("n3", "canonical"):
        assert {f"{label}_depth{depth}" for depth in range(5)} <= set(result)
