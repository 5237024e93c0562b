"""Command-line entry point: one subcommand per stage of the construction."""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

from fractal_cut_locus.algo.cut_locus import medial_axis, surface_skeleton, verify_cut_locus
from fractal_cut_locus.algo.differentiability import differentiability_probe
from fractal_cut_locus.algo.export import dumps, points_frame, surface_mesh, write_csv, write_json, write_obj
from fractal_cut_locus.algo.hull import HullGeometry, assemble_boundary, convexity_probe, dilate, seam_report
from fractal_cut_locus.algo.params import ConstructionParams, canonical_dimension_n
from fractal_cut_locus.algo.randers import (
    EQUAL_LENGTH_TOL,
    RandersMetric,
    RegionDecomposition,
    demo_ray_families,
    equal_length_check,
    exactness_check,
    length_convergence,
    randers_report,
    ray_length_closed_form,
    round_ball_metric,
    round_ball_rays,
    single_profile_beta,
)
from fractal_cut_locus.algo.self_similar import (
    DimensionReport,
    analytic_dimension,
    box_counting_dimension,
    cantor_sample,
)
from fractal_cut_locus.algo.sequences import alpha_seq, l_seq, r_seq, t_seq
from fractal_cut_locus.algo.smoothing import SeamGeometry, smooth_profile, verify_profile
from fractal_cut_locus.algo.tree import build_tree, verify_sphere_invariant
from fractal_cut_locus.algo.visualization import plot_cut_locus, plot_profile, plot_randers, plot_tree
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import (
    BudgetExceeded,
    DegenerateAlpha,
    FractalCutLocusError,
    IllPosedRegime,
    InvalidInput,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2

COMMANDS = ("sequences", "tree", "dim", "hull", "cutlocus", "smooth", "randers", "verify-all")
FORMATS = ("csv", "json", "svg", "obj")
SHOW = ("t", "l", "r", "alpha", "all")
BOXCOUNT_TOL = 0.05
TREE_CHECK_DEPTH = 4


class RunConfig(BaseModel):
    command: str
    k: int = 3
    n: int | None = None
    phi: float = math.pi / 4
    epsilon: float = 0.1
    depth: int = 2
    grid: int = 512
    out: Path
    formats: list[str] = ["csv", "json"]
    threads: int
    show: str = "all"
    count: int = 10
    boxcount: bool = False
    demo: bool = False
    dilated: bool = False
    strict: bool = False
    fraction: float | None = None
    c: float = 0.5
    delta: float = 0.5
    tail_tol: float | None = None
    verbose: bool = False

    @field_validator("command")
    @classmethod
    def validate_command(cls, v: str) -> str:
        if v not in COMMANDS:
            raise ValueError(f"unknown subcommand {v!r}")
        return v

    @field_validator("formats")
    @classmethod
    def validate_formats(cls, v: list[str]) -> list[str]:
        unknown = sorted(set(v) - set(FORMATS))
        if unknown:
            raise ValueError(f"unknown output formats {unknown}, choose from {list(FORMATS)}")
        return v

    @field_validator("depth", "count", "threads")
    @classmethod
    def validate_non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"must be >= 0, got {v}")
        return v

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        values = {k: v for k, v in vars(args).items() if v is not None}
        values["command"] = args.command
        values["formats"] = [f for part in (args.format or ["csv,json"]) for f in part.split(",") if f]
        values["out"] = Path(args.out) if args.out else Config.output_dir()
        values["threads"] = args.threads if args.threads is not None else Config.threads()
        return cls(**values)

    def params(self) -> ConstructionParams:
        """Construction parameters; n defaults to the canonical dimension for k."""
        kwargs = {"k": self.k, "phi": self.phi, "epsilon": self.epsilon}
        if self.tail_tol is not None:
            kwargs["tail_tol"] = self.tail_tol
        if self.n is None:
            return ConstructionParams.canonical_for(**kwargs)
        return ConstructionParams(n=self.n, **kwargs)

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    def path(self, name: str) -> Path:
        return self.out / self.command / name


class Outcome(BaseModel):
    summary: dict
    passed: bool


# --- Subcommands ---


def run_sequences(cfg: RunConfig) -> Outcome:
    params = cfg.params()
    show = SHOW[:-1] if cfg.show == "all" else (cfg.show,)
    if cfg.show == "all" and params.k == 2:
        show = ("t", "l")
    rows: dict[str, list] = {"i": list(range(cfg.count))}
    if "t" in show:
        rows["t"] = [t_seq(i, params) for i in range(cfg.count)]
    if "l" in show:
        rows["l"] = [l_seq(i, params) for i in range(cfg.count)]
    if "alpha" in show:
        rows["alpha"] = [alpha_seq(i, params) for i in range(cfg.count)]
    if "r" in show:
        # r_{-1} is the radius of the root sphere; shift so row i holds r_i
        values = [r_seq(i, params) for i in range(-1, cfg.count)]
        rows["r_prev"] = [v.value for v in values[:-1]]
        rows["r"] = [v.value for v in values[1:]]
        rows["r_bound"] = [v.bound for v in values[1:]]
    frame = pd.DataFrame(rows)
    if cfg.wants("csv"):
        write_csv(cfg.path("sequences.csv"), frame)
    if cfg.wants("json"):
        write_json(cfg.path("sequences.json"), {"k": params.k, "n": params.n, "phi": params.phi, "table": rows})
    return Outcome(summary={"k": params.k, "show": list(show), "rows": cfg.count, "first": frame.iloc[0].to_dict()}, passed=True)


def run_tree(cfg: RunConfig) -> Outcome:
    params = cfg.params()
    tree = build_tree(cfg.depth, params, threads=cfg.threads)
    report = verify_sphere_invariant(tree)
    if cfg.wants("csv"):
        nodes = list(tree.nodes())
        frame = points_frame(
            np.array([node.position for node in nodes]),
            depth=[node.depth for node in nodes],
            address=[str(node.address) for node in nodes],
        )
        write_csv(cfg.path("tree.csv"), frame)
    if cfg.wants("json"):
        write_json(cfg.path("tree.json"), {"params": params, "sphere_invariant": report, "nodes": tree.node_count})
    if cfg.wants("svg"):
        plot_tree(tree, cfg.path("tree.svg"))
    summary = {"k": params.k, "n": params.n, "depth": cfg.depth, "nodes": tree.node_count, "max_residual": report.max_residual}
    return Outcome(summary=summary, passed=report.passed)


def run_dim(cfg: RunConfig) -> Outcome:
    n = canonical_dimension_n(cfg.k) if cfg.n is None else cfg.n
    analytic = analytic_dimension(cfg.k, n)
    summary: dict = {"k": cfg.k, "n": n, "s": analytic.s, "in_open_range": analytic.in_open_range}
    passed = True
    report = None
    if cfg.boxcount:
        if cfg.k == 2:
            raise DegenerateAlpha("box counting runs on the mandala, whose similarity system is degenerate at k = 2")
        report = DimensionReport.from_params(cfg.params(), depth=cfg.depth, boxcount=True)
        slope = report.boxcount.slope
        passed = abs(slope - analytic.s) <= BOXCOUNT_TOL and report.osc.passed
        summary.update({"moran_s": report.moran_s, "boxcount_slope": slope, "osc": report.osc.passed})
    if cfg.wants("json"):
        write_json(cfg.path("dim.json"), report if report is not None else summary)
    if cfg.wants("csv") and report is not None:
        write_csv(cfg.path("boxcount.csv"), pd.DataFrame({"scale": report.boxcount.scales, "count": report.boxcount.counts}))
    return Outcome(summary=summary, passed=passed)


def _geometry(cfg: RunConfig) -> HullGeometry:
    if cfg.demo:
        return HullGeometry.demo(depth=cfg.depth, n=2 if cfg.n is None else cfg.n)
    return HullGeometry.from_params(cfg.params(), cfg.depth)


def run_hull(cfg: RunConfig) -> Outcome:
    surface = assemble_boundary(_geometry(cfg), strict=cfg.strict)
    seams = seam_report(surface)
    passed = seams.passed
    summary = {
        "n": surface.dimension,
        "depth": surface.depth,
        "patches": len(surface.patches),
        "overlapping_hole_pairs": len(surface.overlaps),
        "max_tangency_residual": surface.geometry.check_tangency(),
        "seam_max_angle": seams.max_angle,
    }
    if surface.depth == 0:
        convexity = convexity_probe(surface)
        passed &= convexity.passed
        summary["convex"] = convexity.passed
    if cfg.wants("json"):
        write_json(cfg.path("hull.json"), {"summary": summary, "seams": seams, "patches": surface.inventory()})
    if cfg.wants("obj"):
        if surface.dimension == 3:
            write_obj(cfg.path("hull.obj"), surface_mesh(surface))
        else:
            logger.warning("OBJ export skipped: the surface lives in R^%d", surface.dimension)
    return Outcome(summary=summary, passed=passed)


def run_cutlocus(cfg: RunConfig) -> Outcome:
    surface = assemble_boundary(_geometry(cfg))
    skeleton = surface_skeleton(surface)
    if cfg.dilated:
        surface = dilate(surface, cfg.epsilon).surface
    resolution = cfg.grid if surface.dimension <= 3 else None
    report = verify_cut_locus(surface, skeleton, resolution=resolution, threads=cfg.threads)
    if resolution is not None and (cfg.wants("csv") or cfg.wants("svg")):
        sample = medial_axis(surface, resolution, threads=cfg.threads)
        if cfg.wants("csv"):
            write_csv(cfg.path("medial.csv"), points_frame(sample.points, spread=sample.spreads))
        if cfg.wants("svg"):
            plot_cut_locus(sample, skeleton, cfg.path("cutlocus.svg"))
    if cfg.wants("json"):
        write_json(cfg.path("cutlocus.json"), report)
    summary = {
        "n": surface.dimension,
        "depth": surface.depth,
        "dilated": cfg.dilated,
        "hausdorff": report.hausdorff,
        "tol_hausdorff": report.tol_hausdorff,
        "max_spread": report.concentration.max_spread if report.concentration else None,
    }
    return Outcome(summary=summary, passed=report.passed)


def run_smooth(cfg: RunConfig) -> Outcome:
    params = None if cfg.demo else cfg.params()
    seam = SeamGeometry.from_demo(cfg.epsilon) if cfg.demo else SeamGeometry.from_params(params)
    profile = smooth_profile(seam, cfg.fraction)
    report = verify_profile(profile)
    passed = report.passed
    summary: dict = {
        "demo": cfg.demo,
        "x_r": profile.x_r,
        "y_b": profile.y_b,
        "fraction": profile.fraction,
        "profile": report.checks,
    }
    probe = None
    if params is not None:
        probe = differentiability_probe(params, threads=cfg.threads)
        passed &= probe.boundary_at_k and probe.bounded_within
        summary["trends"] = {f.r: f.trend.value for f in probe.fits}
        summary["closed_form_bound"] = probe.closed_form_bound
    if cfg.wants("csv"):
        x = np.linspace(0.0, profile.end, 1001)
        frame = pd.DataFrame(
            {"x": x, "F": profile(x), "F_prime": profile.prime(x), "f1": seam.f1(x), "f2": seam.f2(x)}
        )
        write_csv(cfg.path("profile.csv"), frame.replace([np.inf, -np.inf], np.nan))
        if probe is not None:
            write_csv(cfg.path("zeta.csv"), pd.DataFrame(probe.table(), columns=["m", "r", "ratio", "binomial_ratio"]))
    if cfg.wants("json"):
        write_json(cfg.path("smooth.json"), {"profile": report, "differentiability": probe})
    if cfg.wants("svg"):
        plot_profile(profile, cfg.path("profile.svg"))
    return Outcome(summary=summary, passed=passed)


def run_randers(cfg: RunConfig) -> Outcome:
    report = randers_report(epsilon=cfg.epsilon, c=cfg.c, delta=cfg.delta, threads=cfg.threads)
    if cfg.wants("csv"):
        rows = [
            (name, i, length)
            for name, family in [("round_ball", report.round_ball)] + sorted(report.families.items())
            for i, length in enumerate(family.lengths)
        ]
        write_csv(cfg.path("ray_lengths.csv"), pd.DataFrame(rows, columns=["family", "ray", "finsler_length"]))
    if cfg.wants("json"):
        write_json(cfg.path("randers.json"), report)
    if cfg.wants("svg"):
        decomposition = RegionDecomposition(epsilon=cfg.epsilon)
        form = single_profile_beta(decomposition, c=cfg.c, delta=cfg.delta)
        plot_randers(form, demo_ray_families(decomposition, count=8), cfg.path("randers.svg"))
    summary = {
        "positivity_margin": report.positivity.margin,
        "closedness": report.closedness,
        "round_ball_deviation": report.round_ball.max_deviation,
        "family_deviation": max(f.max_deviation for f in report.families.values()),
        "exactness": report.exactness.max_deviation,
    }
    return Outcome(summary=summary, passed=report.passed)


# --- Acceptance suite ---


def _check_dimension(cfg: RunConfig) -> dict:
    s = analytic_dimension(2, 3).s
    return {"s": s, "passed": abs(s - 1.46497) < 5e-6}


def _check_boxcount(cfg: RunConfig) -> dict:
    params = ConstructionParams.canonical_for(3)
    report = DimensionReport.from_params(params, depth=4, boxcount=True)
    cantor = box_counting_dimension(cantor_sample(10), [3.0**-s for s in range(1, 9)])
    control = math.log(2) / math.log(3)
    passed = abs(report.boxcount.slope - report.analytic_s) <= BOXCOUNT_TOL and abs(cantor.slope - control) <= BOXCOUNT_TOL
    return {"mandala": report.boxcount, "cantor": cantor, "passed": passed}


def _check_alpha(cfg: RunConfig) -> dict:
    worst = 0.0
    for k in (3, 4, 5):
        params = ConstructionParams(k=k, n=3)
        for i in range(21):
            a = alpha_seq(i, params)
            worst = max(worst, abs(a - (3 * alpha_seq(i + 1, params) + t_seq(i, params))) / a)
    return {"max_relative_residual": worst, "passed": worst <= 1e-12}


def _check_tree(cfg: RunConfig) -> dict:
    reports = {}
    for label, params in (("n3", ConstructionParams(k=cfg.k, n=3)), ("canonical", ConstructionParams.canonical_for(cfg.k))):
        for depth in range(max(cfg.depth, TREE_CHECK_DEPTH) + 1):
            reports[f"{label}_depth{depth}"] = verify_sphere_invariant(build_tree(depth, params, threads=cfg.threads))
    return {**reports, "passed": all(r.passed for r in reports.values())}


def _check_tangency(cfg: RunConfig) -> dict:
    residuals = {
        "demo": HullGeometry.demo(depth=cfg.depth).check_tangency(),
        "series": HullGeometry.from_params(ConstructionParams(k=cfg.k, n=3), cfg.depth).check_tangency(),
    }
    return {**residuals, "passed": all(r < 1e-9 for r in residuals.values())}


def _check_cut_locus(cfg: RunConfig) -> dict:
    surface = assemble_boundary(HullGeometry.demo(depth=0))
    report = verify_cut_locus(surface, surface_skeleton(surface), resolution=cfg.grid, threads=cfg.threads)
    return {"report": report, "passed": report.passed}


def _check_dilation_invariance(cfg: RunConfig) -> dict:
    surface = assemble_boundary(HullGeometry.demo(depth=0))
    skeleton = surface_skeleton(surface)
    reports = {
        f"epsilon_{epsilon:g}": verify_cut_locus(
            dilate(surface, epsilon).surface, skeleton, resolution=cfg.grid, threads=cfg.threads
        )
        for epsilon in (0.05, 0.1)
    }
    return {**reports, "passed": all(r.passed for r in reports.values())}


def _check_smoothing(cfg: RunConfig) -> dict:
    report = verify_profile(smooth_profile(SeamGeometry.from_demo(cfg.epsilon)))
    return {"report": report, "passed": report.passed}


def _check_differentiability(cfg: RunConfig) -> dict:
    probe = differentiability_probe(ConstructionParams(k=3, n=3, epsilon=cfg.epsilon), threads=cfg.threads)
    return {"report": probe, "passed": probe.boundary_at_k and probe.bounded_within}


def _check_ray_lengths(cfg: RunConfig) -> dict:
    metric = round_ball_metric()
    exact = ray_length_closed_form(metric.form.profile)
    report = equal_length_check(metric, round_ball_rays(360), threads=cfg.threads)
    off_target = max(abs(length - exact) for length in report.lengths)
    # partial ray: a full one has a compactly supported integrand and converges too fast to show an order
    partial = round_ball_metric(delta=0.5)
    errors, orders = length_convergence(
        partial, [1.0, 0.0], [0.55, 0.0], ray_length_closed_form(partial.form.profile, length=0.45),
        counts=(65, 129, 257, 513),
    )
    passed = report.passed and off_target < EQUAL_LENGTH_TOL and bool(orders) and min(orders) >= 2.0
    return {"report": report, "exact": exact, "off_target": off_target, "errors": errors, "orders": orders, "passed": passed}


def _check_exactness(cfg: RunConfig) -> dict:
    metric = RandersMetric(form=single_profile_beta(RegionDecomposition(epsilon=cfg.epsilon)))
    report = exactness_check(metric)
    return {"report": report, "passed": report.passed}


def _check_regime_guards(cfg: RunConfig) -> dict:
    params = ConstructionParams(k=2, n=3)
    refused = []
    for name, call in (("r", lambda: r_seq(0, params)), ("alpha", lambda: alpha_seq(0, params))):
        try:
            call()
        except IllPosedRegime as exc:
            refused.append(f"{name}: {type(exc).__name__}")
    return {"refused": refused, "passed": len(refused) == 2}


CHECKS: dict[str, Callable[[RunConfig], dict]] = {
    "dimension": _check_dimension,
    "boxcount": _check_boxcount,
    "alpha_recursion": _check_alpha,
    "sphere_invariant": _check_tree,
    "tangency": _check_tangency,
    "cut_locus": _check_cut_locus,
    "dilation_invariance": _check_dilation_invariance,
    "smoothing": _check_smoothing,
    "differentiability": _check_differentiability,
    "ray_lengths": _check_ray_lengths,
    "exactness": _check_exactness,
    "regime_guards": _check_regime_guards,
}


def run_verify_all(cfg: RunConfig) -> Outcome:
    results = {}
    for name, check in CHECKS.items():
        logger.info("running check %s", name)
        outcome = check(cfg)
        results[name] = bool(outcome["passed"])
        write_json(cfg.path(f"{name}.json"), outcome)
        if not results[name]:
            logger.warning("check %s failed", name)
    return Outcome(summary={"checks": results}, passed=all(results.values()))


RUNNERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "sequences": run_sequences,
    "tree": run_tree,
    "dim": run_dim,
    "hull": run_hull,
    "cutlocus": run_cutlocus,
    "smooth": run_smooth,
    "randers": run_randers,
    "verify-all": run_verify_all,
}


# --- Entry point ---


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, help="Differentiability order (>= 2).")
    common.add_argument("--n", type=int, help="Ambient dimension; defaults to the canonical n for k.")
    common.add_argument("--phi", type=float, help="Opening angle of the root cone, in (0, pi/2).")
    common.add_argument("--epsilon", type=float, help="Dilatation distance.")
    common.add_argument("--depth", type=int, help="Tree or hull depth.")
    common.add_argument("--grid", type=int, help="Medial axis grid resolution.")
    common.add_argument("--out", type=str, help="Output directory (default from FCL_OUTPUT_DIR).")
    common.add_argument("--format", action="append", help="Comma separated subset of csv,json,svg,obj.")
    common.add_argument("--threads", type=int, help="Worker cap for parallel stages.")
    common.add_argument("--tol-tail", dest="tail_tol", type=float, help="Relative truncation tolerance of the series.")
    common.add_argument("--tol-sphere", dest="tol_sphere", type=float, help="Sphere invariant tolerance.")
    common.add_argument("--tol-tangency", dest="tol_tangency", type=float, help="Cone/sphere tangency tolerance.")
    common.add_argument("--tol-quad", dest="tol_quad", type=float, help="Quadrature agreement tolerance.")
    common.add_argument("--tol-seam", dest="tol_seam", type=float, help="Seam normal angle tolerance.")
    common.add_argument("-v", "--verbose", action="store_true", default=None, help="Debug logging on stderr.")

    parser = argparse.ArgumentParser(prog="fractal-cut-locus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sequences = sub.add_parser("sequences", parents=[common], help="Tables of t_i, l_i, r_i and alpha_i.")
    sequences.add_argument("--show", choices=SHOW)
    sequences.add_argument("--count", type=int)
    sub.add_parser("tree", parents=[common], help="Build the tree and check the sphere invariant.")
    dim = sub.add_parser("dim", parents=[common], help="Dimension of the endpoint set.")
    dim.add_argument("--boxcount", action="store_true", default=None)
    for name, text in (("hull", "Assemble the hull boundary."), ("cutlocus", "Verify the inner cut locus.")):
        cmd = sub.add_parser(name, parents=[common], help=text)
        cmd.add_argument("--demo", action="store_true", default=None, help="Use the two-ball demo geometry.")
        cmd.add_argument("--strict", action="store_true", default=None)
        cmd.add_argument("--dilated", action="store_true", default=None)
    smooth = sub.add_parser("smooth", parents=[common], help="Smoothing profile and differentiability probe.")
    smooth.add_argument("--demo", action="store_true", default=None)
    smooth.add_argument("--fraction", type=float)
    randers = sub.add_parser("randers", parents=[common], help="Randers magnetic metric checks.")
    randers.add_argument("--c", type=float, help="Bump amplitude, in (0, 1).")
    randers.add_argument("--delta", type=float, help="Bump half-width, in (0, 1).")
    sub.add_parser("verify-all", parents=[common], help="Run every acceptance check.")
    return parser


TOLERANCE_FLAGS = {"tol_sphere": "SPHERE_TOL", "tol_tangency": "TANGENCY_TOL", "tol_quad": "QUAD_TOL", "tol_seam": "SEAM_TOL"}


def _apply_overrides(args: argparse.Namespace) -> None:
    """Command-line tolerances win over FCL_* environment values for this process."""
    for flag, attr in TOLERANCE_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            if value <= 0.0:
                raise ValueError(f"--{flag.replace('_', '-')} must be positive, got {value}")
            setattr(Config, attr, repr(value))


def _report_error(command: str, status: str, exc: Exception) -> None:
    logger.error("%s: %s", type(exc).__name__, exc)
    print(dumps({"command": command, "status": status, "error": type(exc).__name__, "message": str(exc)}))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else Config.log_level(),
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
    )

    # parameters are validated before any computation starts
    try:
        _apply_overrides(args)
        cfg = RunConfig.from_args(args)
        if cfg.command != "dim":
            cfg.params()
    except ValueError as exc:
        _report_error(args.command, "invalid", exc)
        return EXIT_INVALID

    try:
        outcome = RUNNERS[cfg.command](cfg)
    except (IllPosedRegime, InvalidInput, BudgetExceeded, ValueError) as exc:
        _report_error(cfg.command, "invalid", exc)
        return EXIT_INVALID
    except FractalCutLocusError as exc:
        _report_error(cfg.command, "failed", exc)
        return EXIT_FAILED

    if not outcome.passed:
        logger.warning("%s: verification failed", cfg.command)
    print(dumps({"command": cfg.command, "status": "passed" if outcome.passed else "failed", **outcome.summary}))
    return EXIT_OK if outcome.passed else EXIT_FAILED
