import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import product
from typing import Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import cKDTree

from fractal_cut_locus.algo.geometry import rotate, rotation_matrix
from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.sequences import l_seq, theta
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import AlphabetOutOfRange, BudgetExceeded, DegenerateCollision

logger = logging.getLogger(__name__)


class Address(BaseModel):
    """Finite word j_1 ... j_m over {-(n-1), ..., n-1}. The empty word is the root segment."""

    model_config = ConfigDict(frozen=True)

    word: tuple[int, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.word)

    def validate_for(self, n: int) -> "Address":
        for letter in self.word:
            if abs(letter) > n - 1:
                raise AlphabetOutOfRange(f"letter {letter} outside {{-{n - 1}, ..., {n - 1}}} for n = {n}")
        return self

    def child(self, letter: int) -> "Address":
        return Address(word=self.word + (letter,))

    def parent(self) -> "Address":
        if not self.word:
            raise ValueError("the root address has no parent")
        return Address(word=self.word[:-1])

    def __lt__(self, other: "Address") -> bool:
        return self.word < other.word

    def __str__(self) -> str:
        return ";".join(str(j) for j in self.word)

    @classmethod
    def parse(cls, text: str) -> "Address":
        text = text.strip()
        if not text:
            return cls()
        return cls(word=tuple(int(part) for part in text.replace(",", ";").split(";")))


class TreeNode(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    address: Address
    position: np.ndarray
    depth: int


class Segment(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    start: np.ndarray
    end: np.ndarray
    address: Address

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))


class Ray(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    origin: np.ndarray
    direction: np.ndarray
    address: Address


class SphereInvariantReport(BaseModel):
    max_residual: float
    worst_address: str
    checked: int
    tolerance: float
    passed: bool


class TreeApprox(BaseModel):
    """Finite approximation of the tree down to a given depth.

    levels[i] holds the (2n-1)^i depth-i node positions in lexicographic
    address order (levels[0] is q alone); directions[i] the unit direction
    of the segment ending at each of them.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    depth: int = Field(ge=0)
    n: int = Field(ge=2)
    phi: float
    lengths: list[float]
    origin: np.ndarray
    levels: list[np.ndarray]
    directions: list[np.ndarray]

    @property
    def letters(self) -> tuple[int, ...]:
        return tuple(range(-(self.n - 1), self.n))

    @property
    def branching(self) -> int:
        return 2 * self.n - 1

    @property
    def node_count(self) -> int:
        return 1 + sum(len(level) for level in self.levels)

    @property
    def segment_count(self) -> int:
        return sum(len(level) for level in self.levels)

    def address_of(self, level: int, index: int) -> Address:
        word = []
        for _ in range(level):
            index, digit = divmod(index, self.branching)
            word.append(self.letters[digit])
        return Address(word=tuple(reversed(word)))

    def addresses(self, level: int) -> list[Address]:
        return [Address(word=w) for w in product(self.letters, repeat=level)]

    def parent_position(self, level: int) -> np.ndarray:
        if level == 0:
            return np.broadcast_to(self.origin, (1, self.n))
        return np.repeat(self.levels[level - 1], self.branching, axis=0)

    def nodes(self) -> Iterator[TreeNode]:
        yield TreeNode(address=Address(), position=self.origin.copy(), depth=-1)
        for level, positions in enumerate(self.levels):
            for address, position in zip(self.addresses(level), positions):
                yield TreeNode(address=address, position=position, depth=level)

    def segment_array(self) -> np.ndarray:
        """All segments as an (S, 2, n) array, root segment first, then level by level."""
        starts = np.concatenate([self.parent_position(i) for i in range(self.depth + 1)])
        ends = np.concatenate(self.levels)
        return np.stack([starts, ends], axis=1)

    def segments(self) -> list[Segment]:
        result = []
        for level, positions in enumerate(self.levels):
            starts = self.parent_position(level)
            for address, start, end in zip(self.addresses(level), starts, positions):
                result.append(Segment(start=np.array(start), end=end, address=address))
        return result

    def rays(self) -> list[Ray]:
        result = []
        for level, positions in enumerate(self.levels):
            starts = self.parent_position(level)
            for address, start, direction in zip(self.addresses(level), starts, self.directions[level]):
                result.append(Ray(origin=np.array(start), direction=direction, address=address))
        return result

    def endpoints(self) -> np.ndarray:
        return self.levels[self.depth]


# --- Construction ---


def tree_node_count(depth: int, n: int) -> int:
    return 1 + sum((2 * n - 1) ** i for i in range(depth + 1))


def _letter_rotations(n: int, angle: float) -> np.ndarray:
    rots = []
    for j in range(-(n - 1), n):
        if j == 0:
            rots.append(np.eye(n))
        else:
            rots.append(rotation_matrix(n, (1, abs(j) + 1), math.copysign(angle, j)))
    return np.stack(rots)


def _grow_levels(
    positions: np.ndarray,
    frames: np.ndarray,
    first_level: int,
    depth: int,
    n: int,
    phi: float,
    lengths: Sequence[float],
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Grow levels first_level..depth below the given nodes.

    Each child frame is the parent frame times the letter rotation by
    phi / 3^m in plane (1, |j|+1); the child sits l_m along its first column.
    """
    out_pos, out_dir = [], []
    for m in range(first_level, depth + 1):
        rots = _letter_rotations(n, theta(m, phi))
        frames = np.matmul(frames[:, None, :, :], rots[None, :, :, :]).reshape(-1, n, n)
        direction = frames[:, :, 0]
        positions = np.repeat(positions, len(rots), axis=0) + lengths[m] * direction
        out_pos.append(positions)
        out_dir.append(direction)
        logger.debug("level %d: %d nodes", m, len(positions))
    return out_pos, out_dir, frames


def grow_tree(
    depth: int,
    n: int,
    phi: float,
    lengths: Sequence[float],
    threads: int | None = None,
    budget: int | None = None,
) -> TreeApprox:
    """Build the tree from explicit edge lengths l_0..l_depth."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if len(lengths) < depth + 1:
        raise ValueError(f"need {depth + 1} edge lengths, got {len(lengths)}")
    budget = Config.node_budget() if budget is None else budget
    count = tree_node_count(depth, n)
    if count > budget:
        raise BudgetExceeded(f"tree of depth {depth} in R^{n} has {count} nodes, budget is {budget}")
    threads = Config.threads() if threads is None else threads

    origin = np.zeros(n)
    q = origin.copy()
    q[0] = lengths[0]
    levels = [q[None, :]]
    directions = [np.eye(n)[None, 0, :]]
    if depth >= 1:
        first_pos, first_dir, frames = _grow_levels(levels[0], np.eye(n)[None], 1, 1, n, phi, lengths)
        levels += first_pos
        directions += first_dir
    if depth >= 2:
        # one subtree per first letter, concatenated in letter order
        jobs = [(levels[1][i : i + 1], frames[i : i + 1]) for i in range(2 * n - 1)]
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(
                executor.map(lambda job: _grow_levels(job[0], job[1], 2, depth, n, phi, lengths), jobs)
            )
        for offset in range(depth - 1):
            levels.append(np.concatenate([res[0][offset] for res in results]))
            directions.append(np.concatenate([res[1][offset] for res in results]))

    tree = TreeApprox(
        depth=depth, n=n, phi=phi, lengths=list(lengths[: depth + 1]), origin=origin, levels=levels, directions=directions
    )
    if not all(np.isfinite(level).all() for level in tree.levels):
        raise ValueError("tree construction produced non-finite coordinates")
    logger.debug("built tree of depth %d in R^%d with %d nodes", depth, n, tree.node_count)
    return tree


def build_tree(depth: int, params: ConstructionParams, threads: int | None = None) -> TreeApprox:
    lengths = [l_seq(i, params) for i in range(depth + 1)]
    return grow_tree(depth, params.n, params.phi, lengths, threads=threads)


def node_position(address: Address, params: ConstructionParams) -> np.ndarray:
    """Position of q_{j_1...j_m} by the literal rotation composition.

    The spine point q_{0...0 j_m} is transported by R_{m-1}, ..., R_1, each
    about the straight-spine node at depth i-1, the rightmost rotation first.
    """
    address.validate_for(params.n)
    word = address.word
    m = len(word)
    lengths = [l_seq(i, params) for i in range(m + 1)]
    n = params.n

    p = np.zeros(n)
    if m == 0:
        p[0] = lengths[0]
        return p
    last = word[-1]
    angle = theta(m, params.phi)
    p[0] = sum(lengths[:m]) + lengths[m] * math.cos(angle)
    if last != 0:
        p[abs(last)] = math.copysign(lengths[m] * math.sin(angle), last)
    for i in range(m - 1, 0, -1):
        letter = word[i - 1]
        if letter == 0:
            continue
        center = np.zeros(n)
        center[0] = sum(lengths[:i])
        p = rotate(p, center, (1, abs(letter) + 1), math.copysign(theta(i, params.phi), letter))
    return p


def endpoint_sample(depth: int, params: ConstructionParams, threads: int | None = None) -> np.ndarray:
    tree = build_tree(depth, params, threads=threads)
    points = tree.endpoints()
    pairs = cKDTree(points).query_pairs(1e-12)
    if pairs:
        a, b = min(pairs)
        first, second = str(tree.address_of(depth, a)), str(tree.address_of(depth, b))
        raise DegenerateCollision(
            f"addresses {first} and {second} map within 1e-12 of each other", addresses=(first, second)
        )
    return points


def verify_sphere_invariant(tree: TreeApprox, tol: float | None = None) -> SphereInvariantReport:
    tol = Config.sphere_tol() if tol is None else tol
    worst, worst_address, checked = -1.0, "", 0
    for level in range(tree.depth + 1):
        distances = np.linalg.norm(tree.levels[level] - tree.parent_position(level), axis=1)
        residuals = np.abs(distances - tree.lengths[level])
        checked += len(residuals)
        idx = int(np.argmax(residuals))
        if residuals[idx] > worst:
            worst, worst_address = float(residuals[idx]), str(tree.address_of(level, idx))
    report = SphereInvariantReport(
        max_residual=worst, worst_address=worst_address, checked=checked, tolerance=tol, passed=worst < tol
    )
    if report.passed:
        logger.info("sphere invariant holds over %d edges, max residual %.3e", checked, worst)
    else:
        logger.warning("sphere invariant fails at address %s, residual %.3e", worst_address, worst)
    return report


def branch_angles(tree: TreeApprox) -> np.ndarray:
    """(2n-1, 2n-1) table of angles at q_{j1} between s_{j1} and s_{j1 j2}."""
    if tree.depth < 2:
        raise ValueError(f"branch angles need a tree of depth >= 2, got {tree.depth}")
    incoming = np.repeat(tree.directions[1], tree.branching, axis=0)
    outgoing = tree.directions[2]
    along = np.sum(incoming * outgoing, axis=1)
    across = np.linalg.norm(outgoing - along[:, None] * incoming, axis=1)
    return np.arctan2(across, along).reshape(tree.branching, tree.branching)
