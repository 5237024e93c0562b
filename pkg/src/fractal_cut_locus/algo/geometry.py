import math

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.linalg import null_space
from scipy.stats import norm, qmc


def rotation_matrix(n: int, plane: tuple[int, int], theta: float) -> np.ndarray:
    """Rotation by theta in the coordinate 2-plane (a, b), 1-based, sending e_a towards e_b."""
    a, b = plane
    if a == b or not (1 <= a <= n and 1 <= b <= n):
        raise ValueError(f"plane {plane} must hold two distinct axes within 1..{n}")
    c, s = math.cos(theta), math.sin(theta)
    R = np.eye(n)
    i, j = a - 1, b - 1
    R[i, i] = c
    R[j, j] = c
    R[j, i] = s
    R[i, j] = -s
    return R


def rotate(p, center, plane: tuple[int, int], theta: float) -> np.ndarray:
    """Rotate p (a point or an (N, n) array) about the affine subspace through
    center orthogonal to the coordinate plane."""
    p = np.asarray(p, dtype=float)
    center = np.asarray(center, dtype=float)
    R = rotation_matrix(p.shape[-1], plane, theta)
    return center + (p - center) @ R.T


def unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def complement_basis(axis: np.ndarray) -> np.ndarray:
    """Orthonormal basis (n, n-1) of the hyperplane orthogonal to axis."""
    return null_space(np.asarray(axis, dtype=float)[None, :])


def sphere_directions(dim: int, count: int) -> np.ndarray:
    """Deterministic unit vectors in R^dim.

    dim 1 gives the two signs, dim 2 evenly spaced angles, higher dimensions
    a Halton sequence pushed through the normal quantile function.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(angles), np.sin(angles)])
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    gauss = norm.ppf(sampler.random(count))
    return unit(gauss)


def axial_split(points: np.ndarray, origin: np.ndarray, axis: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Axial coordinate, radial distance and unit radial direction of points
    relative to the line origin + t * axis.

    Points on the line get an arbitrary fixed radial direction.
    """
    rel = np.atleast_2d(points) - origin
    a = rel @ axis
    perp = rel - a[:, None] * axis
    rho = np.linalg.norm(perp, axis=1)
    fallback = complement_basis(axis)[:, 0]
    on_axis = rho < 1e-14
    w = np.where(on_axis[:, None], fallback, perp / np.where(on_axis, 1.0, rho)[:, None])
    return a, rho, w


def segment_closest_2d(points: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance from each 2D point to the segment p0-p1 and the closest points."""
    d = p1 - p0
    length2 = float(d @ d)
    if length2 == 0.0:
        closest = np.broadcast_to(p0, points.shape)
    else:
        s = np.clip((points - p0) @ d / length2, 0.0, 1.0)
        closest = p0 + s[:, None] * d
    return np.linalg.norm(points - closest, axis=1), closest


class Sphere(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    center: np.ndarray
    radius: float
    level: int = -1
    address: str = ""

    @field_validator("radius")
    @classmethod
    def validate_radius(cls, v: float) -> float:
        if v <= 0.0:
            raise ValueError(f"sphere radius must be positive, got {v}")
        return v


class Circle(BaseModel):
    """(n-2)-sphere: points center + radius * w with w a unit vector orthogonal to axis."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    center: np.ndarray
    axis: np.ndarray
    radius: float

    def distance(self, points: np.ndarray) -> np.ndarray:
        h, rho, _ = axial_split(points, self.center, self.axis)
        return np.hypot(h, rho - self.radius)

    def nearest_and_opposite(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        _, _, w = axial_split(points, self.center, self.axis)
        return self.center + self.radius * w, self.center - self.radius * w

    def sample(self, count: int) -> np.ndarray:
        basis = complement_basis(self.axis)
        dirs = sphere_directions(basis.shape[1], count) @ basis.T
        return self.center + self.radius * dirs


class Cone(BaseModel):
    """Right circular cone tangent to a parent and a child sphere.

    axis is the branch direction (parent to child); the cone opens from its
    vertex back along -axis with the given half-angle.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vertex: np.ndarray
    axis: np.ndarray
    half_angle: float
    address: str = ""

    @field_validator("half_angle")
    @classmethod
    def validate_half_angle(cls, v: float) -> float:
        if not 0.0 < v < math.pi / 2:
            raise ValueError(f"half-angle must lie in (0, pi/2), got {v}")
        return v

    def distance_to_lateral(self, points: np.ndarray) -> np.ndarray:
        a, rho, _ = axial_split(points, self.vertex, -self.axis)
        c, s = math.cos(self.half_angle), math.sin(self.half_angle)
        along = a * c + rho * s
        return np.where(along >= 0.0, np.abs(-a * s + rho * c), np.hypot(a, rho))


def tangency_residual(cone: Cone, sphere: Sphere) -> float:
    distance = float(cone.distance_to_lateral(sphere.center[None, :])[0])
    return abs(distance - sphere.radius)
