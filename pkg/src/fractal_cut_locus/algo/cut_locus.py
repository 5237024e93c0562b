import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from typing import Protocol, runtime_checkable

import numpy as np
from matplotlib.path import Path
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.spatial import cKDTree

from fractal_cut_locus.algo.geometry import Sphere, complement_basis, sphere_directions
from fractal_cut_locus.algo.hull import BoundarySurface, CapPatch, ConePatch
from fractal_cut_locus.algo.tree import TreeApprox
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import EmptySet, UnsupportedDimension

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 64
DISTANCE_TOL = 1e-6
SEPARATION_CELLS = 10
CHUNK = 16_384


@runtime_checkable
class Surface(Protocol):
    dimension: int

    def signed_distance(self, points: np.ndarray) -> np.ndarray: ...

    def nearest_candidates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...

    def bounds(self) -> tuple[np.ndarray, np.ndarray]: ...


class PolygonSurface(BaseModel):
    """Closed 2D polygon, vertices in order."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vertices: np.ndarray

    @field_validator("vertices")
    @classmethod
    def validate_vertices(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError(f"polygon needs at least 3 vertices in the plane, got shape {v.shape}")
        return v

    @property
    def dimension(self) -> int:
        return 2

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def _projections(self, points: np.ndarray) -> np.ndarray:
        starts = self.vertices
        edges = np.roll(self.vertices, -1, axis=0) - starts
        rel = points[:, None, :] - starts[None, :, :]
        s = np.clip(np.sum(rel * edges, axis=2) / np.sum(edges * edges, axis=1), 0.0, 1.0)
        return starts[None, :, :] + s[:, :, None] * edges[None, :, :]

    def nearest_candidates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(points)
        cands = self._projections(points)
        return np.linalg.norm(cands - points[:, None, :], axis=2), cands

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dists, _ = self.nearest_candidates(points)
        inside = Path(self.vertices).contains_points(points)
        return np.where(inside, -dists.min(axis=1), dists.min(axis=1))


class RoundBallSurface(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sphere: Sphere

    @property
    def dimension(self) -> int:
        return len(self.sphere.center)

    @property
    def patches(self) -> list[CapPatch]:
        axis = np.eye(self.dimension)[0]
        return [CapPatch(level=-1, address="", sphere=self.sphere, axis=axis, aperture=math.pi)]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.sphere.center - self.sphere.radius, self.sphere.center + self.sphere.radius

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(points - self.sphere.center, axis=1) - self.sphere.radius

    def nearest_candidates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cands = self.patches[0].candidates(points)
        dists = np.linalg.norm(cands - points[:, None, :], axis=2)
        return np.where(np.isnan(dists), np.inf, dists), cands


def round_ball_surface(center, radius: float) -> RoundBallSurface:
    return RoundBallSurface(sphere=Sphere(center=np.asarray(center, dtype=float), radius=radius))


class Skeleton(BaseModel):
    """Finite union of segments, stored as an (S, 2, n) array."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    segments: np.ndarray

    @classmethod
    def from_tree(cls, tree: TreeApprox) -> "Skeleton":
        return cls(segments=tree.segment_array())

    @classmethod
    def from_segment(cls, start, end) -> "Skeleton":
        return cls(segments=np.array([[start, end]], dtype=float))

    @classmethod
    def from_point(cls, point) -> "Skeleton":
        point = np.asarray(point, dtype=float)
        return cls(segments=np.array([[point, point]]))

    def sample(self, step: float) -> np.ndarray:
        if step <= 0.0:
            raise ValueError(f"sampling step must be positive, got {step}")
        parts = []
        for start, end in self.segments:
            count = max(2, int(math.ceil(np.linalg.norm(end - start) / step)) + 1)
            parts.append(start + np.linspace(0.0, 1.0, count)[:, None] * (end - start))
        return np.concatenate(parts)

    def distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        starts, ends = self.segments[:, 0], self.segments[:, 1]
        edges = ends - starts
        length2 = np.sum(edges * edges, axis=1)
        rel = points[:, None, :] - starts[None, :, :]
        s = np.clip(np.sum(rel * edges, axis=2) / np.where(length2 > 0, length2, 1.0), 0.0, 1.0)
        closest = starts[None] + s[:, :, None] * edges[None]
        return np.linalg.norm(points[:, None, :] - closest, axis=2).min(axis=1)


class MedialAxisSample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    resolution: int
    cell: float
    interior_count: int
    points: np.ndarray
    spreads: np.ndarray


class RayFamily(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    patch: int
    address: str
    kind: str
    fraction: float | None
    arrival: np.ndarray
    target: np.ndarray
    spread: float
    deviation: float
    foot_residual: float


class ConcentrationReport(BaseModel):
    families: list[RayFamily]
    max_spread: float
    max_deviation: float
    max_foot_residual: float
    monotone: bool


class CutLocusReport(BaseModel):
    hausdorff: float | None
    tol_hausdorff: float | None
    medial_count: int | None
    concentration: ConcentrationReport | None
    tol_concentration: float
    passed: bool


# --- Point sets ---


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.size == 0 or b.size == 0:
        raise EmptySet("Hausdorff distance needs two nonempty point sets")
    forward, _ = cKDTree(b).query(a)
    backward, _ = cKDTree(a).query(b)
    return float(max(forward.max(), backward.max()))


# --- Grid medial axis ---


def _grid(surface: Surface, resolution: int) -> tuple[np.ndarray, float]:
    low, high = surface.bounds()
    cell = float(np.max(high - low)) / resolution
    axes = [np.arange(math.ceil(lo / cell), math.floor(hi / cell) + 1) * cell for lo, hi in zip(low, high)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(axes)), cell


def _medial_chunk(surface: Surface, points: np.ndarray, separation: float, distance_tol: float):
    interior = points[surface.signed_distance(points) < 0.0]
    if len(interior) == 0:
        return interior, np.zeros(0), 0
    dists, cands = surface.nearest_candidates(interior)
    best = np.argmin(dists, axis=1)
    dmin = dists[np.arange(len(interior)), best]
    close = dists <= (dmin + distance_tol)[:, None]
    anchor = cands[np.arange(len(interior)), best]
    gaps = np.linalg.norm(cands - anchor[:, None, :], axis=2)
    spread = np.where(close & np.isfinite(gaps), gaps, 0.0).max(axis=1)
    medial = spread > separation
    return interior[medial], spread[medial], len(interior)


def medial_axis(
    surface: Surface,
    resolution: int = 512,
    threads: int | None = None,
    distance_tol: float = DISTANCE_TOL,
    separation_cells: int = SEPARATION_CELLS,
) -> MedialAxisSample:
    """Interior grid points with two nearest boundary candidates far apart.

    Grid points sit at integer multiples of the cell size inside the
    surface bounds.
    """
    if surface.dimension > 3:
        raise UnsupportedDimension(f"grid medial axis supports dimension 2 or 3, got {surface.dimension}")
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    threads = Config.threads() if threads is None else threads
    grid, cell = _grid(surface, resolution)
    chunks = [grid[i : i + CHUNK] for i in range(0, len(grid), CHUNK)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        results = list(
            executor.map(lambda c: _medial_chunk(surface, c, separation_cells * cell, distance_tol), chunks)
        )
    points = np.concatenate([r[0] for r in results]) if results else np.zeros((0, surface.dimension))
    spreads = np.concatenate([r[1] for r in results]) if results else np.zeros(0)
    interior = sum(r[2] for r in results)
    logger.debug("medial axis: %d of %d interior grid points flagged", len(points), interior)
    return MedialAxisSample(resolution=resolution, cell=cell, interior_count=interior, points=points, spreads=spreads)


# --- Ray concentration ---


def family_arrival(feet: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean of the pairwise closest-approach midpoints of the lines feet + t * directions,
    and the largest distance of any closest point from it."""
    closest = []
    for i, j in combinations(range(len(feet)), 2):
        d1, d2 = directions[i], directions[j]
        w = feet[i] - feet[j]
        b = d1 @ d2
        denom = 1.0 - b * b
        if denom < 1e-12:
            continue
        t = (b * (d2 @ w) - (d1 @ w)) / denom
        s = ((d2 @ w) - b * (d1 @ w)) / denom
        closest += [feet[i] + t * d1, feet[j] + s * d2]
    if not closest:
        logger.warning("ray family of %d rays has no pair of non-parallel rays", len(feet))
        return feet.mean(axis=0), math.inf
    closest = np.array(closest)
    arrival = closest.mean(axis=0)
    return arrival, float(np.linalg.norm(closest - arrival, axis=1).max())


def axis_target(cone: ConePatch, fraction: float) -> np.ndarray:
    """Point of the segment at the given fraction; inward normals from the ruling at that fraction meet it."""
    return cone.start + fraction * cone.length * cone.axis


def _family(patch, feet: np.ndarray) -> tuple[np.ndarray, float, float]:
    arrival, spread = family_arrival(feet, patch.inward_normals(feet))
    return arrival, spread, float(np.max(np.abs(patch.distance(feet))))


def ray_concentration(
    surface,
    samples: int = 8,
    fractions: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9),
    skeleton: Skeleton | None = None,
) -> ConcentrationReport:
    """Follow inward normals from latitude circles of cones and from caps to their concentration points."""
    families: list[RayFamily] = []
    monotone = True
    for index, patch in enumerate(surface.patches):
        n = len(patch.axis)
        if isinstance(patch, ConePatch):
            basis = complement_basis(patch.axis)
            directions = sphere_directions(basis.shape[1], max(samples, 2)) @ basis.T
            previous = -math.inf
            for fraction in fractions:
                arrival, spread, residual = _family(patch, patch.point_at(fraction, directions))
                along = float((arrival - patch.start) @ patch.axis)
                monotone &= along > previous
                previous = along
                families.append(
                    RayFamily(
                        patch=index, address=patch.address, kind="cone", fraction=fraction,
                        arrival=arrival, target=axis_target(patch, fraction), spread=spread,
                        deviation=0.0, foot_residual=residual,
                    )
                )
        else:
            feet = patch.sample(samples * samples)
            if len(feet) < 2:
                feet = patch.sphere.center + patch.sphere.radius * np.concatenate([np.eye(n), -np.eye(n)])
            arrival, spread, residual = _family(patch, feet)
            families.append(
                RayFamily(
                    patch=index, address=patch.address, kind="cap", fraction=None,
                    arrival=arrival, target=patch.sphere.center, spread=spread,
                    deviation=0.0, foot_residual=residual,
                )
            )
    for family in families:
        family.deviation = float(np.linalg.norm(family.arrival - family.target))
        if skeleton is not None:
            family.deviation = max(family.deviation, float(skeleton.distance(family.arrival[None, :])[0]))
    report = ConcentrationReport(
        families=families,
        max_spread=max(f.spread for f in families),
        max_deviation=max(f.deviation for f in families),
        max_foot_residual=max(f.foot_residual for f in families),
        monotone=monotone,
    )
    logger.info(
        "ray concentration: %d families, max spread %.3e, max deviation %.3e",
        len(families), report.max_spread, report.max_deviation,
    )
    return report


# --- Verification ---


def verify_cut_locus(
    surface,
    skeleton: Skeleton,
    resolution: int | None = 512,
    tol_cells: float = 2.0,
    tol_concentration: float = 1e-9,
    rays: bool = True,
    threads: int | None = None,
) -> CutLocusReport:
    """Compare the medial axis and the normal-ray arrivals with the skeleton.

    The grid stage runs when resolution is given and the dimension is at
    most 3; the ray stage runs on surfaces built from patches.
    """
    hausdorff = tol_h = medial_count = None
    passed = True
    if resolution is not None and surface.dimension <= 3:
        sample = medial_axis(surface, resolution, threads=threads)
        medial_count = len(sample.points)
        tol_h = tol_cells * sample.cell
        if medial_count == 0:
            logger.warning("no medial grid points found at resolution %d", resolution)
            passed = False
        else:
            hausdorff = hausdorff_distance(sample.points, skeleton.sample(sample.cell / 4))
            passed &= hausdorff < tol_h
    concentration = None
    if rays and hasattr(surface, "patches"):
        concentration = ray_concentration(surface, skeleton=skeleton)
        passed &= (
            concentration.monotone
            and concentration.max_deviation < tol_concentration
            and concentration.max_spread < tol_concentration
            and concentration.max_foot_residual < tol_concentration
        )
    logger.info("cut locus check %s (Hausdorff %s)", "passed" if passed else "failed", hausdorff)
    return CutLocusReport(
        hausdorff=hausdorff,
        tol_hausdorff=tol_h,
        medial_count=medial_count,
        concentration=concentration,
        tol_concentration=tol_concentration,
        passed=bool(passed),
    )


def surface_skeleton(surface: BoundarySurface) -> Skeleton:
    return Skeleton.from_tree(surface.tree)
