from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from fractal_cut_locus.algo.cut_locus import MedialAxisSample, Skeleton  # noqa: E402
from fractal_cut_locus.algo.randers import AssembledForm, SampledCurve  # noqa: E402
from fractal_cut_locus.algo.smoothing import SmoothedProfile  # noqa: E402
from fractal_cut_locus.algo.tree import TreeApprox  # noqa: E402

# fixed element ids so rewrites are byte-identical
plt.rcParams["svg.hashsalt"] = "fractal-cut-locus"


def _viewport(points: np.ndarray, pad: float = 0.05) -> tuple[tuple[float, float], tuple[float, float]]:
    low, high = points.min(axis=0), points.max(axis=0)
    margin = pad * float(np.max(high - low))
    return (low[0] - margin, high[0] + margin), (low[1] - margin, high[1] + margin)


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_tree(tree: TreeApprox, path: Path, plane: tuple[int, int] = (1, 2)) -> Path:
    """Projection of the tree segments onto the coordinate 2-plane (a, b), 1-based."""
    a, b = plane[0] - 1, plane[1] - 1
    segments = tree.segment_array()[:, :, [a, b]]
    fig, ax = plt.subplots(figsize=(8, 8))
    depth = np.concatenate([np.full(len(level), i) for i, level in enumerate(tree.levels)])
    lines = LineCollection(segments, array=depth, cmap="viridis", linewidths=1.0)
    ax.add_collection(lines)
    ax.plot(*tree.origin[[a, b]], "k.", label="o")
    xlim, ylim = _viewport(segments.reshape(-1, 2))
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    ax.set_aspect("equal")
    ax.set_xlabel(f"x{plane[0]}")
    ax.set_ylabel(f"x{plane[1]}")
    fig.colorbar(lines, ax=ax, label="depth")
    ax.set_title(f"Tree to depth {tree.depth} (n = {tree.n})")
    return _save(fig, path)


def plot_cut_locus(sample: MedialAxisSample, skeleton: Skeleton, path: Path) -> Path:
    """Medial grid points over the skeleton, first two coordinates."""
    fig, ax = plt.subplots(figsize=(8, 8))
    if len(sample.points):
        ax.scatter(sample.points[:, 0], sample.points[:, 1], s=2, c="tab:red", label="medial grid points")
    ax.add_collection(LineCollection(skeleton.segments[:, :, :2], colors="black", linewidths=1.5, label="skeleton"))
    reference = np.concatenate([skeleton.segments[:, :, :2].reshape(-1, 2), sample.points[:, :2]])
    xlim, ylim = _viewport(reference, pad=0.1)
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    ax.set_aspect("equal")
    ax.legend(loc="upper right")
    ax.grid(True)
    ax.set_title(f"Medial axis at resolution {sample.resolution}")
    return _save(fig, path)


def plot_profile(profile: SmoothedProfile, path: Path, samples: int = 1000) -> Path:
    seam = profile.seam
    x = np.linspace(-0.1 * profile.end, 1.1 * profile.end, samples)
    fig, axs = plt.subplots(2, 1, figsize=(10, 9), sharex=True)

    # --- [0] Profile against the arcs ---
    axs[0].plot(x, seam.f1(x), color="blue", linestyle="--", label="f1 (big sphere)")
    f2 = seam.f2(x)
    axs[0].plot(x, np.where(np.isfinite(f2), f2, np.nan), color="orange", linestyle="--", label="f2 (small sphere)")
    axs[0].axhline(seam.y_d, color="gray", linestyle=":", label="d")
    axs[0].plot(x, profile(x), color="black", label="F")
    for mark, name in ((profile.x_q, "x_Q"), (profile.x_r, "x_R"), (profile.x_s, "x_S")):
        axs[0].axvline(mark, color="purple", alpha=0.3)
        axs[0].annotate(name, (mark, profile.y_b), textcoords="offset points", xytext=(3, -12))
    low = min(profile.y_r, profile.y_b) - 0.2 * (seam.y_d - profile.y_r)
    axs[0].set_ylim(low, seam.y_d + 0.2 * (seam.y_d - profile.y_r))
    axs[0].set_ylabel("y")
    axs[0].legend()
    axs[0].grid(True)

    # --- [1] Slope ---
    inside = (x >= 0.0) & (x <= profile.end)
    axs[1].plot(x[inside], profile.prime(x[inside]), color="black", label="F'")
    axs[1].axhline(0.0, color="gray", linewidth=0.5)
    axs[1].set_xlabel("x")
    axs[1].set_ylabel("slope")
    axs[1].legend()
    axs[1].grid(True)

    plt.suptitle("Smoothed meridian profile")
    return _save(fig, path)


def plot_randers(form: AssembledForm, rays: dict[str, list[SampledCurve]], path: Path, grid: int = 25) -> Path:
    """beta as arrows over the dilated demo domain, with the inward ray families."""
    decomposition = form.decomposition
    lo, hi = decomposition.bounds
    axes = [np.linspace(lo[i], hi[i], grid) for i in range(2)]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    points = points[decomposition.inside(points)]
    beta = form.coefficients(points)
    fig, ax = plt.subplots(figsize=(10, 8))
    boundary = decomposition.seam_points(128)["boundary"]
    ax.scatter(boundary[:, 0], boundary[:, 1], s=1, c="gray")
    ax.quiver(points[:, 0], points[:, 1], beta[:, 0], beta[:, 1], color="tab:blue", angles="xy")
    colors = plt.get_cmap("tab10")
    for i, (name, family) in enumerate(sorted(rays.items())):
        for j, ray in enumerate(family):
            ax.plot(ray.points[:, 0], ray.points[:, 1], color=colors(i % 10), linewidth=0.6, label=name if j == 0 else "")
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.legend(loc="lower left", fontsize="small")
    ax.set_title(f"Magnetic one-form (epsilon = {decomposition.epsilon})")
    return _save(fig, path)
