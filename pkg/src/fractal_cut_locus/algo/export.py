import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from fractal_cut_locus.algo.geometry import complement_basis
from fractal_cut_locus.algo.hull import BoundarySurface, CapPatch, ConePatch, Patch
from fractal_cut_locus.errors import UnsupportedDimension

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


# --- JSON ---


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def dumps(payload: Any) -> str:
    """One-line JSON with sorted keys; floats keep their exact round-trip digits."""
    return json.dumps(to_jsonable(payload), sort_keys=True, allow_nan=False, separators=(",", ":"))


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(to_jsonable(payload), sort_keys=True, allow_nan=False, indent=2) + "\n", encoding="utf-8"
    )
    logger.debug("wrote %s", path)
    return path


# --- CSV ---


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def points_frame(points: np.ndarray, prefix: str = "x", **columns) -> pd.DataFrame:
    """Coordinates as x1..xn columns, preceded by any extra columns."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    data = dict(columns)
    for i in range(points.shape[1]):
        data[f"{prefix}{i + 1}"] = points[:, i]
    return pd.DataFrame(data)


# --- OBJ ---


class Mesh(BaseModel):
    """Triangles (a, b, c) with cross(b - a, c - a) pointing out of the body."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vertices: np.ndarray
    faces: np.ndarray

    def face_normals(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        cross = np.cross(b - a, c - a)
        return cross / np.linalg.norm(cross, axis=1, keepdims=True)

    def centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    @classmethod
    def concatenate(cls, meshes: list["Mesh"]) -> "Mesh":
        offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
        return cls(
            vertices=np.concatenate([m.vertices for m in meshes]),
            faces=np.concatenate([m.faces + off for m, off in zip(meshes, offsets)]),
        )


def revolve(meridian: np.ndarray, origin: np.ndarray, axis: np.ndarray, segments: int) -> Mesh:
    """Surface of revolution of a meridian polyline given as (axial, radial) pairs."""
    basis = complement_basis(axis)
    psi = 2.0 * math.pi * np.arange(segments) / segments
    rings = np.cos(psi)[:, None] * basis[:, 0] + np.sin(psi)[:, None] * basis[:, 1]
    vertices = (
        origin + meridian[:, None, 0:1] * axis + meridian[:, None, 1:2] * rings[None, :, :]
    ).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(len(meridian) - 1), np.arange(segments), indexing="ij")
    a = i * segments + j
    b = i * segments + (j + 1) % segments
    c = a + segments
    d = b + segments
    faces = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])
    return Mesh(vertices=vertices, faces=faces)


def _orient_outward(mesh: Mesh, patch: Patch) -> Mesh:
    p = mesh.vertices[mesh.faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = np.linalg.norm(cross, axis=1)
    keep = area > 1e-14 * max(1.0, float(np.max(area, initial=0.0)))
    faces, cross = mesh.faces[keep], cross[keep]
    outward = -patch.inward_normals(mesh.vertices[faces].mean(axis=1))
    flip = np.sum(cross * outward, axis=1) < 0.0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return Mesh(vertices=mesh.vertices, faces=faces)


def patch_mesh(patch: Patch, rings: int = 16, segments: int = 48) -> Mesh:
    """Triangulated patch; cap triangles whose centroid falls in a hole are dropped."""
    if isinstance(patch, ConePatch):
        t1, t2 = patch.meridian
        s = np.linspace(0.0, 1.0, rings + 1)
        mesh = revolve(t1 + s[:, None] * (t2 - t1), patch.start, patch.axis, segments)
        return _orient_outward(mesh, patch)
    if isinstance(patch, CapPatch):
        r = patch.sphere.radius
        alpha = np.linspace(0.0, patch.aperture, rings + 1)
        mesh = revolve(np.column_stack([r * np.cos(alpha), r * np.sin(alpha)]), patch.sphere.center, patch.axis, segments)
        mesh = _orient_outward(mesh, patch)
        if patch.holes:
            rel = mesh.centroids() - patch.sphere.center
            directions = rel / np.linalg.norm(rel, axis=1, keepdims=True)
            mesh = Mesh(vertices=mesh.vertices, faces=mesh.faces[patch.in_region(directions)])
        return mesh
    raise TypeError(f"no mesher for patch type {type(patch).__name__}")


def surface_mesh(surface: BoundarySurface, rings: int = 16, segments: int = 48) -> Mesh:
    if surface.dimension != 3:
        raise UnsupportedDimension(f"OBJ export needs a surface in R^3, got dimension {surface.dimension}")
    mesh = Mesh.concatenate([patch_mesh(p, rings, segments) for p in surface.patches])
    logger.debug("meshed %d patches: %d vertices, %d faces", len(surface.patches), len(mesh.vertices), len(mesh.faces))
    return mesh


def write_obj(path: Path, mesh: Mesh) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {FLOAT_FORMAT % x} {FLOAT_FORMAT % y} {FLOAT_FORMAT % z}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path
