import logging
import math
from enum import Enum
from itertools import combinations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from fractal_cut_locus.algo.geometry import (
    Circle,
    Cone,
    Sphere,
    axial_split,
    complement_basis,
    segment_closest_2d,
    sphere_directions,
    tangency_residual,
)
from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.sequences import l_seq, r_seq, theta
from fractal_cut_locus.algo.tree import Address, TreeApprox, grow_tree
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import OnSeam, OverlappingHoles, TangencyViolation

logger = logging.getLogger(__name__)

DEMO_PHI = math.pi / 4
DEMO_BIG_RADIUS = math.sqrt(2)
DEMO_SMALL_RADIUS = math.sqrt(2) / 2


def angle_to(directions: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Angle between each unit row of directions and the unit axis."""
    along = directions @ axis
    across = np.linalg.norm(directions - along[:, None] * axis, axis=1)
    return np.arctan2(across, along)


class HullGeometry(BaseModel):
    """Edge lengths l_0..l_m and radii r_{-1}..r_m (radii[0] is r_{-1})."""

    n: int = Field(ge=2)
    phi: float
    lengths: list[float]
    radii: list[float]

    @model_validator(mode="after")
    def validate_sizes(self) -> "HullGeometry":
        if len(self.radii) != len(self.lengths) + 1:
            raise ValueError(f"need {len(self.lengths) + 1} radii for {len(self.lengths)} lengths, got {len(self.radii)}")
        if any(r <= 0.0 for r in self.radii) or any(l <= 0.0 for l in self.lengths):
            raise ValueError("radii and edge lengths must be positive")
        return self

    @property
    def depth(self) -> int:
        return len(self.lengths) - 1

    def radius(self, i: int) -> float:
        return self.radii[i + 1]

    def theta(self, i: int) -> float:
        return theta(i, self.phi)

    def tangency_residuals(self) -> list[float]:
        """|r_{i-1} - (l_i cos theta_i + r_i)| per level."""
        return [
            abs(self.radius(i - 1) - (self.lengths[i] * math.cos(self.theta(i)) + self.radius(i)))
            for i in range(self.depth + 1)
        ]

    def check_tangency(self, tol: float | None = None) -> float:
        tol = Config.tangency_tol() if tol is None else tol
        residuals = self.tangency_residuals()
        worst = max(residuals)
        if worst >= tol:
            level = residuals.index(worst)
            raise TangencyViolation(f"radii are not tangency-consistent at level {level}: residual {worst:.3e}")
        return worst

    def dilated(self, epsilon: float) -> "HullGeometry":
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        return self.model_copy(update={"radii": [r + epsilon for r in self.radii]})

    def truncated(self, depth: int) -> "HullGeometry":
        if not 0 <= depth <= self.depth:
            raise ValueError(f"depth must lie in 0..{self.depth}, got {depth}")
        return self.model_copy(update={"lengths": self.lengths[: depth + 1], "radii": self.radii[: depth + 2]})

    @classmethod
    def from_params(cls, params: ConstructionParams, depth: int) -> "HullGeometry":
        return cls(
            n=params.n,
            phi=params.phi,
            lengths=[l_seq(i, params) for i in range(depth + 1)],
            radii=[r_seq(i, params).value for i in range(-1, depth + 1)],
        )

    @classmethod
    def from_radii(
        cls, n: int, phi: float, lengths: list[float], radii: list[float], tol: float | None = None
    ) -> "HullGeometry":
        geometry = cls(n=n, phi=phi, lengths=lengths, radii=radii)
        geometry.check_tangency(tol)
        return geometry

    @classmethod
    def demo(cls, depth: int = 0, n: int = 2) -> "HullGeometry":
        """S(o, sqrt 2) and S((1,0,...), sqrt 2 / 2) with phi = pi/4; deeper radii shrink by 3."""
        lengths, radii = [1.0], [DEMO_BIG_RADIUS, DEMO_SMALL_RADIUS]
        for i in range(1, depth + 1):
            radii.append(radii[-1] / 3.0)
            lengths.append((radii[-2] - radii[-1]) / math.cos(theta(i, DEMO_PHI)))
        return cls(n=n, phi=DEMO_PHI, lengths=lengths, radii=radii)


# --- Patches ---


class PatchKind(Enum):
    CAP = "cap"
    CONE = "cone"


class Hole(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    axis: np.ndarray
    angle: float


class Patch(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    level: int
    address: str

    @property
    def kind(self) -> PatchKind:
        raise NotImplementedError

    def distance(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inward_normals(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def candidates(self, points: np.ndarray) -> np.ndarray:
        """(N, K, n) surface points that can be nearest to each query; NaN rows are absent."""
        raise NotImplementedError

    def boundary_circles(self) -> list[Circle]:
        raise NotImplementedError

    def sample(self, count: int, margin: float = 1e-3) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class CapPatch(Patch):
    """Directions within aperture of axis, minus the holes, on a sphere."""

    sphere: Sphere
    axis: np.ndarray
    aperture: float
    holes: list[Hole] = []
    overlaps: list[tuple[int, int]] = []

    @field_validator("aperture")
    @classmethod
    def validate_aperture(cls, v: float) -> float:
        if not 0.0 < v <= math.pi:
            raise ValueError(f"cap aperture must lie in (0, pi], got {v}")
        return v

    @property
    def kind(self) -> PatchKind:
        return PatchKind.CAP

    @property
    def full(self) -> bool:
        return self.aperture >= math.pi and not self.holes

    def _directions(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rel = np.atleast_2d(points) - self.sphere.center
        dist = np.linalg.norm(rel, axis=1)
        safe = np.where(dist > 0.0, dist, 1.0)
        return rel / safe[:, None], dist

    def in_region(self, directions: np.ndarray, margin: float = 0.0) -> np.ndarray:
        inside = angle_to(directions, self.axis) <= self.aperture - margin
        for hole in self.holes:
            inside &= angle_to(directions, hole.axis) >= hole.angle + margin
        return inside

    def boundary_circles(self) -> list[Circle]:
        c, r = self.sphere.center, self.sphere.radius
        circles = []
        if self.aperture < math.pi:
            circles.append(
                Circle(center=c + r * math.cos(self.aperture) * self.axis, axis=self.axis, radius=r * math.sin(self.aperture))
            )
        for hole in self.holes:
            circles.append(
                Circle(center=c + r * math.cos(hole.angle) * hole.axis, axis=hole.axis, radius=r * math.sin(hole.angle))
            )
        return circles

    def distance(self, points: np.ndarray) -> np.ndarray:
        directions, dist = self._directions(points)
        radial = np.abs(dist - self.sphere.radius)
        at_center = dist < 1e-12 * self.sphere.radius
        covered = self.in_region(directions) | at_center
        result = np.where(covered, radial, np.inf)
        for circle in self.boundary_circles():
            result = np.minimum(result, np.where(covered, np.inf, circle.distance(points)))
        return result

    def inward_normals(self, points: np.ndarray) -> np.ndarray:
        directions, _ = self._directions(points)
        return -directions

    def candidates(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        c, r, n = self.sphere.center, self.sphere.radius, points.shape[1]
        directions, dist = self._directions(points)
        at_center = dist < 1e-12 * r
        radial = c + r * directions
        radial[~self.in_region(directions) | at_center] = np.nan
        slots = [radial[:, None, :]]
        # every point of the sphere is nearest to its centre: offer the coordinate poles
        poles = c + r * np.concatenate([np.eye(n), -np.eye(n)])
        pole_ok = self.in_region(np.concatenate([np.eye(n), -np.eye(n)]))
        centre_slots = np.where(
            (at_center[:, None] & pole_ok[None, :])[:, :, None], poles[None, :, :], np.nan
        )
        slots.append(centre_slots)
        for circle in self.boundary_circles():
            near, far = circle.nearest_and_opposite(points)
            slots.append(np.stack([near, far], axis=1))
        return np.concatenate(slots, axis=1)

    def sample(self, count: int, margin: float = 1e-3) -> np.ndarray:
        basis = complement_basis(self.axis)
        polar_count = max(2, int(math.sqrt(count)))
        alphas = self.aperture * (np.arange(polar_count) + 0.5) / polar_count
        dirs = sphere_directions(basis.shape[1], max(2, count // polar_count)) @ basis.T
        directions = (
            np.cos(alphas)[:, None, None] * self.axis + np.sin(alphas)[:, None, None] * dirs[None, :, :]
        ).reshape(-1, len(self.axis))
        directions = directions[self.in_region(directions, margin)]
        return self.sphere.center + self.sphere.radius * directions

    def describe(self) -> dict:
        return {
            "type": self.kind.value,
            "level": self.level,
            "address": self.address,
            "center": self.sphere.center.tolist(),
            "radius": self.sphere.radius,
            "axis": self.axis.tolist(),
            "aperture": self.aperture,
            "holes": [{"axis": h.axis.tolist(), "angle": h.angle} for h in self.holes],
            "overlapping_holes": [list(pair) for pair in self.overlaps],
        }


class ConePatch(Patch):
    """Truncated cone between the tangency circles on S(start, big_radius)
    and S(start + length * axis, small_radius)."""

    start: np.ndarray
    axis: np.ndarray
    length: float
    big_radius: float
    small_radius: float
    theta: float

    @property
    def kind(self) -> PatchKind:
        return PatchKind.CONE

    @property
    def end(self) -> np.ndarray:
        return self.start + self.length * self.axis

    @property
    def cone(self) -> Cone:
        return Cone(
            vertex=self.start + self.big_radius / math.cos(self.theta) * self.axis,
            axis=self.axis,
            half_angle=math.pi / 2 - self.theta,
            address=self.address,
        )

    @property
    def meridian(self) -> tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return (
            np.array([self.big_radius * c, self.big_radius * s]),
            np.array([self.length + self.small_radius * c, self.small_radius * s]),
        )

    def boundary_circles(self) -> list[Circle]:
        t1, t2 = self.meridian
        return [
            Circle(center=self.start + t1[0] * self.axis, axis=self.axis, radius=float(t1[1])),
            Circle(center=self.start + t2[0] * self.axis, axis=self.axis, radius=float(t2[1])),
        ]

    def distance(self, points: np.ndarray) -> np.ndarray:
        a, rho, _ = axial_split(points, self.start, self.axis)
        t1, t2 = self.meridian
        dist, _ = segment_closest_2d(np.column_stack([a, rho]), t1, t2)
        return dist

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Inside the frustum between the two tangency planes."""
        a, rho, _ = axial_split(points, self.start, self.axis)
        t1, t2 = self.meridian
        s = (a - t1[0]) / (t2[0] - t1[0])
        bound = t1[1] + s * (t2[1] - t1[1])
        return (s >= 0.0) & (s <= 1.0) & (rho <= bound)

    def inward_normals(self, points: np.ndarray) -> np.ndarray:
        _, _, w = axial_split(points, self.start, self.axis)
        return -(math.cos(self.theta) * self.axis + math.sin(self.theta) * w)

    def candidates(self, points: np.ndarray) -> np.ndarray:
        a, rho, w = axial_split(points, self.start, self.axis)
        t1, t2 = self.meridian
        slots = []
        for sign in (1.0, -1.0):
            _, closest = segment_closest_2d(np.column_stack([a, sign * rho]), t1, t2)
            slots.append(self.start + closest[:, :1] * self.axis + sign * closest[:, 1:2] * w)
        return np.stack(slots, axis=1)

    def point_at(self, fraction: float | np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Points at the given fraction of the ruling from the big circle, one per radial direction."""
        t1, t2 = self.meridian
        fraction = np.atleast_1d(fraction)
        merid = t1 + fraction[:, None] * (t2 - t1)
        return (
            self.start
            + merid[:, None, 0:1] * self.axis
            + merid[:, None, 1:2] * directions[None, :, :]
        ).reshape(-1, len(self.axis))

    def sample(self, count: int, margin: float = 1e-3) -> np.ndarray:
        basis = complement_basis(self.axis)
        ruling_count = max(2, int(math.sqrt(count)))
        fractions = margin + (1.0 - 2.0 * margin) * (np.arange(ruling_count) + 0.5) / ruling_count
        dirs = sphere_directions(basis.shape[1], max(2, count // ruling_count)) @ basis.T
        return self.point_at(fractions, dirs)

    def describe(self) -> dict:
        cone = self.cone
        return {
            "type": self.kind.value,
            "level": self.level,
            "address": self.address,
            "vertex": cone.vertex.tolist(),
            "axis": self.axis.tolist(),
            "half_angle": cone.half_angle,
            "start": self.start.tolist(),
            "length": self.length,
            "big_radius": self.big_radius,
            "small_radius": self.small_radius,
        }


class Adjacency(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    first: int
    second: int
    circle: Circle


class HoleOverlap(BaseModel):
    patch: int
    address: str
    first: int
    second: int
    depth_of_overlap: float


class NormalResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    normal: np.ndarray
    patch: int
    on_seam: bool


class BoundarySurface(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    geometry: HullGeometry
    tree: TreeApprox
    patches: list[Patch]
    adjacency: list[Adjacency]
    overlaps: list[HoleOverlap] = []

    @property
    def depth(self) -> int:
        return self.tree.depth

    @property
    def dimension(self) -> int:
        return self.geometry.n

    def spheres(self) -> list[Sphere]:
        return [p.sphere for p in self.patches if isinstance(p, CapPatch)]

    def cones(self) -> list[ConePatch]:
        return [p for p in self.patches if isinstance(p, ConePatch)]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        spheres = self.spheres()
        lows = np.array([s.center - s.radius for s in spheres])
        highs = np.array([s.center + s.radius for s in spheres])
        return lows.min(axis=0), highs.max(axis=0)

    def patch_distances(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.stack([patch.distance(points) for patch in self.patches], axis=1)

    def inside(self, points: np.ndarray) -> np.ndarray:
        """Membership in the union of the balls and the frusta joining consecutive balls."""
        points = np.atleast_2d(points)
        result = np.zeros(len(points), dtype=bool)
        for sphere in self.spheres():
            result |= np.linalg.norm(points - sphere.center, axis=1) <= sphere.radius
        for cone in self.cones():
            result |= cone.inside(points)
        return result

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dist = self.patch_distances(points).min(axis=1)
        return np.where(self.inside(points), -dist, dist)

    def nearest_candidates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cands = np.concatenate([patch.candidates(points) for patch in self.patches], axis=1)
        dists = np.linalg.norm(cands - points[:, None, :], axis=2)
        return np.where(np.isnan(dists), np.inf, dists), cands

    def inward_normal(self, point: np.ndarray, strict: bool = False, seam_tol: float | None = None) -> NormalResult:
        seam_tol = Config.seam_tol() if seam_tol is None else seam_tol
        point = np.asarray(point, dtype=float)
        index = int(np.argmin(self.patch_distances(point)[0]))
        patch = self.patches[index]
        on_seam = any(float(c.distance(point[None, :])[0]) < seam_tol for c in patch.boundary_circles())
        if on_seam and strict:
            raise OnSeam(f"point {point.tolist()} lies within {seam_tol} of a boundary circle of patch {index}")
        return NormalResult(normal=patch.inward_normals(point[None, :])[0], patch=index, on_seam=on_seam)

    def sample(self, count_per_patch: int = 64, margin: float = 1e-3) -> np.ndarray:
        return np.concatenate([patch.sample(count_per_patch, margin) for patch in self.patches])

    def inventory(self) -> list[dict]:
        return [patch.describe() for patch in self.patches]


class DilatedBall(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    base: BoundarySurface
    epsilon: float
    surface: BoundarySurface


class SeamReport(BaseModel):
    checked: int
    max_gap: float
    max_angle: float
    passed: bool


class ConvexityReport(BaseModel):
    pairs: int
    max_midpoint_distance: float
    passed: bool


# --- Assembly ---


def _patch_holes(
    cap_index: int, address: str, axis: np.ndarray, aperture: float, holes: list[Hole], strict: bool
) -> list[HoleOverlap]:
    for hole in holes:
        reach = float(angle_to(hole.axis[None, :], axis)[0]) + hole.angle
        if reach > aperture + 1e-12:
            raise OverlappingHoles(
                f"hole on cap {address or 'root'} reaches angle {reach:.6f} beyond the cap aperture {aperture:.6f}"
            )
    overlaps = []
    for a, b in combinations(range(len(holes)), 2):
        gap = float(angle_to(holes[a].axis[None, :], holes[b].axis)[0])
        depth = holes[a].angle + holes[b].angle - gap
        if depth > 1e-12:
            overlaps.append(HoleOverlap(patch=cap_index, address=address, first=a, second=b, depth_of_overlap=depth))
    if overlaps and strict:
        first = overlaps[0]
        raise OverlappingHoles(
            f"holes {first.first} and {first.second} on cap {address or 'root'} overlap by {first.depth_of_overlap:.6f} rad"
        )
    return overlaps


def assemble_boundary(
    geometry: HullGeometry,
    depth: int | None = None,
    strict: bool = False,
    tol: float | None = None,
) -> BoundarySurface:
    """Cones and caps of the hull boundary down to depth.

    Patch order: root cap, then per level and node the truncated cone of the
    incoming segment followed by the cap on the node's sphere.
    """
    depth = geometry.depth if depth is None else depth
    geometry = geometry.truncated(depth)
    tol = Config.tangency_tol() if tol is None else tol
    geometry.check_tangency(tol)
    n = geometry.n
    tree = grow_tree(depth, n, geometry.phi, geometry.lengths)

    root_axis = -np.eye(n)[0]
    patches: list[Patch] = [
        CapPatch(
            level=-1,
            address="",
            sphere=Sphere(center=tree.origin.copy(), radius=geometry.radius(-1), level=-1),
            axis=root_axis,
            aperture=math.pi - geometry.theta(0),
        )
    ]
    adjacency: list[Adjacency] = []
    overlaps: list[HoleOverlap] = []
    cap_of_node: dict[tuple[int, int], int] = {}
    parent_cap = 0

    for level in range(depth + 1):
        starts = tree.parent_position(level)
        for index in range(len(tree.levels[level])):
            address = str(tree.address_of(level, index))
            if level > 0:
                parent_cap = cap_of_node[(level - 1, index // tree.branching)]
            u = tree.directions[level][index]
            cone = ConePatch(
                level=level,
                address=address,
                start=np.array(starts[index]),
                axis=u,
                length=geometry.lengths[level],
                big_radius=geometry.radius(level - 1),
                small_radius=geometry.radius(level),
                theta=geometry.theta(level),
            )
            sphere = Sphere(center=tree.levels[level][index], radius=geometry.radius(level), level=level, address=address)
            big = Sphere(center=cone.start, radius=cone.big_radius, level=level - 1)
            for s in (big, sphere):
                residual = tangency_residual(cone.cone, s)
                if residual >= tol:
                    raise TangencyViolation(f"cone {address or 'root'} misses its sphere by {residual:.3e}")

            holes = []
            if level < depth:
                children = range(index * tree.branching, (index + 1) * tree.branching)
                holes = [Hole(axis=tree.directions[level + 1][c], angle=geometry.theta(level + 1)) for c in children]
            cone_index = len(patches)
            cap_index = cone_index + 1
            found = _patch_holes(cap_index, address, u, geometry.theta(level), holes, strict)
            cap = CapPatch(
                level=level,
                address=address,
                sphere=sphere,
                axis=u,
                aperture=geometry.theta(level),
                holes=holes,
                overlaps=[(o.first, o.second) for o in found],
            )
            patches += [cone, cap]
            overlaps += found
            cap_of_node[(level, index)] = cap_index
            first, second = cone.boundary_circles()
            adjacency.append(Adjacency(first=parent_cap, second=cone_index, circle=first))
            adjacency.append(Adjacency(first=cone_index, second=cap_index, circle=second))
        logger.debug("assembled level %d: %d patches so far", level, len(patches))

    if overlaps:
        logger.info("recorded %d overlapping sibling hole pairs", len(overlaps))
    return BoundarySurface(geometry=geometry, tree=tree, patches=patches, adjacency=adjacency, overlaps=overlaps)


def cone_for_segment(address: Address, geometry: HullGeometry | ConstructionParams) -> Cone:
    """Cone of the segment ending at address: vertex r_{m-1}/cos(theta_m) from the parent node."""
    depth = address.depth
    if isinstance(geometry, ConstructionParams):
        geometry = HullGeometry.from_params(geometry, depth)
    address.validate_for(geometry.n)
    tree = grow_tree(depth, geometry.n, geometry.phi, geometry.lengths[: depth + 1])
    index = tree.addresses(depth).index(address)
    start = tree.parent_position(depth)[index]
    u = tree.directions[depth][index]
    angle = geometry.theta(depth)
    return Cone(
        vertex=start + geometry.radius(depth - 1) / math.cos(angle) * u,
        axis=u,
        half_angle=math.pi / 2 - angle,
        address=str(address),
    )


def dilate(surface: BoundarySurface, epsilon: float, strict: bool = False) -> DilatedBall:
    dilated = assemble_boundary(surface.geometry.dilated(epsilon), surface.depth, strict=strict)
    return DilatedBall(base=surface, epsilon=epsilon, surface=dilated)


# --- Checks ---


def seam_report(surface: BoundarySurface, samples: int = 16, tol: float | None = None) -> SeamReport:
    """Positional gap and normal mismatch along every shared circle."""
    tol = Config.seam_tol() if tol is None else tol
    max_gap, max_angle, checked = 0.0, 0.0, 0
    for adj in surface.adjacency:
        points = adj.circle.sample(samples)
        a, b = surface.patches[adj.first], surface.patches[adj.second]
        gap = float(np.max(np.maximum(a.distance(points), b.distance(points))))
        na, nb = a.inward_normals(points), b.inward_normals(points)
        along = np.sum(na * nb, axis=1)
        across = np.linalg.norm(nb - along[:, None] * na, axis=1)
        angle = float(np.max(np.arctan2(across, along)))
        max_gap, max_angle = max(max_gap, gap), max(max_angle, angle)
        checked += len(points)
    passed = max_gap < 1e-9 and max_angle < tol
    logger.info("seams: %d points, max gap %.3e, max normal angle %.3e", checked, max_gap, max_angle)
    return SeamReport(checked=checked, max_gap=max_gap, max_angle=max_angle, passed=passed)


def convexity_probe(surface: BoundarySurface, pairs: int = 10_000, seed: int = 0) -> ConvexityReport:
    """Midpoints of random pairs of boundary points must not lie outside.

    The assembled surface is the exact convex hull of its balls at depth 0.
    """
    points = surface.sample(256)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, len(points), pairs)
    j = rng.integers(0, len(points), pairs)
    mid = 0.5 * (points[i] + points[j])
    worst = float(np.max(surface.signed_distance(mid)))
    passed = worst <= 1e-9
    if not passed:
        logger.warning("convexity probe: midpoint %.3e outside the surface", worst)
    return ConvexityReport(pairs=pairs, max_midpoint_distance=worst, passed=passed)
