import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations, product
from typing import Annotated, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, validate_call
from scipy.optimize import brentq
from scipy.stats import linregress

from fractal_cut_locus.algo.params import ConstructionParams, canonical_dimension_n
from fractal_cut_locus.algo.sequences import alpha_seq, t_seq
from fractal_cut_locus.algo.tree import Address, endpoint_sample
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import DegenerateScales

logger = logging.getLogger(__name__)

RELIABLE_RESIDUAL = 0.1
MIN_BOX_POINTS = 1000
MIN_BOX_SCALES = 4


class SimilarityMap(BaseModel):
    """x -> ratio * x + shift on R^d."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    ratio: float
    shift: np.ndarray
    letter: int = 0

    @field_validator("ratio")
    @classmethod
    def validate_ratio(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError(f"similarity ratio must lie in (0, 1), got {v}")
        return v

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.ratio * np.asarray(x, dtype=float) + self.shift


class SimilaritySystem(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    maps: list[SimilarityMap]
    center: np.ndarray
    radius: float

    @property
    def ratios(self) -> list[float]:
        return [m.ratio for m in self.maps]

    def map_for(self, letter: int) -> SimilarityMap:
        for m in self.maps:
            if m.letter == letter:
                return m
        raise KeyError(f"no map for letter {letter}")

    def apply_word(self, address: Address, x: np.ndarray) -> np.ndarray:
        """R_{j1} o ... o R_{jm} (x): the innermost letter is applied first."""
        for letter in reversed(address.word):
            x = self.map_for(letter)(x)
        return x


class OpenSetReport(BaseModel):
    containment_margin: float
    separation_margin: float
    margin: float
    worst_pair: tuple[int, int] | None
    passed: bool


class AnalyticDimension(BaseModel):
    s: float
    in_open_range: bool


class CanonicalDimension(BaseModel):
    k: int
    n: int
    integral: bool
    lower: float
    upper: float
    in_range: bool
    s: float


class BoxCountResult(BaseModel):
    scales: list[float]
    counts: list[int]
    slope: float
    intercept: float
    residual: float
    reliable: bool


class DimensionReport(BaseModel):
    k: int
    n: int
    analytic_s: float
    moran_s: float | None
    boxcount: BoxCountResult | None
    tree_boxcount: BoxCountResult | None
    osc: OpenSetReport | None

    @classmethod
    def from_params(cls, params: ConstructionParams, depth: int = 4, boxcount: bool = True) -> "DimensionReport":
        analytic = analytic_dimension(params.k, params.n)
        if params.k == 2:
            logger.warning("alpha system is degenerate at k = 2, reporting the analytic dimension only")
            return cls(
                k=params.k, n=params.n, analytic_s=analytic.s, moran_s=None, boxcount=None, tree_boxcount=None, osc=None
            )
        system = mandala_system(params)
        mandala_counts = tree_counts = None
        if boxcount:
            scales = natural_scales(params, depth)
            # box grid offset by -c/2 from the origin so clusters sit mid-box
            mandala_counts = box_counting_dimension(
                mandala_sample(depth, params), scales, anchor=mandala_box_anchor(params)
            )
            tree_counts = box_counting_dimension(endpoint_sample(depth, params), scales)
        return cls(
            k=params.k,
            n=params.n,
            analytic_s=analytic.s,
            moran_s=moran_dimension(system.ratios),
            boxcount=mandala_counts,
            tree_boxcount=tree_counts,
            osc=check_open_set_condition(system),
        )


# --- Mandala points and maps ---


def mandala_point(address: Address, params: ConstructionParams) -> np.ndarray:
    """y_{j1...jm}: coordinate j collects +2 alpha_i where j_i = j and -2 alpha_i where j_i = -j."""
    address.validate_for(params.n)
    y = np.zeros(params.n - 1)
    for i, letter in enumerate(address.word, start=1):
        if letter != 0:
            y[abs(letter) - 1] += math.copysign(2.0 * alpha_seq(i, params), letter)
    return y


def mandala_sample(depth: int, params: ConstructionParams) -> np.ndarray:
    """Every depth-m mandala point in lexicographic address order."""
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    d = params.n - 1
    points = np.zeros((1, d))
    for i in range(1, depth + 1):
        steps = np.zeros((params.branching, d))
        weight = 2.0 * alpha_seq(i, params)
        for row, letter in enumerate(params.alphabet):
            if letter != 0:
                steps[row, abs(letter) - 1] = math.copysign(weight, letter)
        points = (points[:, None, :] + steps[None, :, :]).reshape(-1, d)
    return points


def mandala_system(params: ConstructionParams) -> SimilaritySystem:
    c = params.contraction
    step = 2.0 * alpha_seq(1, params)
    maps = []
    for letter in params.alphabet:
        shift = np.zeros(params.n - 1)
        if letter != 0:
            shift[abs(letter) - 1] = math.copysign(step, letter)
        maps.append(SimilarityMap(ratio=c, shift=shift, letter=letter))
    radius = alpha_seq(0, params) - t_seq(0, params)
    return SimilaritySystem(maps=maps, center=np.zeros(params.n - 1), radius=radius)


def check_open_set_condition(system: SimilaritySystem) -> OpenSetReport:
    """Images of the open ball V must lie inside V and be pairwise disjoint."""
    centers = [m(system.center) for m in system.maps]
    radii = [m.ratio * system.radius for m in system.maps]
    containment = min(
        system.radius - (float(np.linalg.norm(c - system.center)) + r) for c, r in zip(centers, radii)
    )
    separation, worst = math.inf, None
    for a, b in combinations(range(len(centers)), 2):
        gap = float(np.linalg.norm(centers[a] - centers[b])) - radii[a] - radii[b]
        if gap < separation:
            separation, worst = gap, (a, b)
    margin = min(containment, separation)
    passed = margin > 1e-12 * system.radius
    logger.info("open set condition %s, margin %.3e", "holds" if passed else "fails", margin)
    return OpenSetReport(
        containment_margin=containment,
        separation_margin=separation,
        margin=margin,
        worst_pair=worst,
        passed=passed,
    )


# --- Dimensions ---


@validate_call
def moran_dimension(
    ratios: list[Annotated[float, Field(gt=0.0, lt=1.0)]], tol: float = 1e-14
) -> float:
    """Solve sum c_j^s = 1."""
    if not ratios:
        raise ValueError("need at least one similarity ratio")
    if len(ratios) == 1:
        return 0.0
    if max(ratios) == min(ratios):
        return math.log(len(ratios)) / math.log(1.0 / ratios[0])
    ratios = np.asarray(ratios)

    def excess(s: float) -> float:
        return float(np.sum(ratios**s)) - 1.0

    upper = 1.0
    while excess(upper) > 0.0:
        upper *= 2.0
    return brentq(excess, 0.0, upper, xtol=tol)


def analytic_dimension(k: int, n: int) -> AnalyticDimension:
    if k < 2 or n < 2:
        raise ValueError(f"need k >= 2 and n >= 2, got k = {k}, n = {n}")
    count = 2 * n - 1
    if count == 3 ** (k - 1):
        s = 1.0
    else:
        s = math.log(count) / ((k - 1) * math.log(3.0))
    return AnalyticDimension(s=s, in_open_range=1.0 < s < 2.0)


def canonical_n(k: int) -> CanonicalDimension:
    """n = (3^(k-1)+3)/2, checked against the open range 3^(k-1)/2 < n < (3^(2(k-1))+1)/2."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    n = canonical_dimension_n(k)
    lower = 3 ** (k - 1) / 2
    upper = (3 ** (2 * (k - 1)) + 1) / 2
    return CanonicalDimension(
        k=k,
        n=n,
        integral=(3 ** (k - 1) + 3) % 2 == 0,
        lower=lower,
        upper=upper,
        in_range=lower < n < upper,
        s=analytic_dimension(k, n).s,
    )


# --- Box counting ---


def natural_scales(params: ConstructionParams, count: int) -> list[float]:
    c = params.contraction
    return [c**s for s in range(1, count + 1)]


def mandala_box_anchor(params: ConstructionParams) -> np.ndarray:
    """Grid anchor that puts every mandala cluster in the middle of its box at the scales c^s."""
    return np.full(params.n - 1, -params.contraction / 2.0)


def _count_boxes(points: np.ndarray, anchor: np.ndarray, scale: float) -> int:
    cells = np.floor((points - anchor) / scale).astype(np.int64)
    count = len(np.unique(cells, axis=0))
    logger.debug("scale %.3e: %d boxes", scale, count)
    return count


def box_counting_dimension(
    points: np.ndarray,
    scales: Sequence[float],
    anchor: np.ndarray | None = None,
    threads: int | None = None,
) -> BoxCountResult:
    """Slope of log N(delta) against log(1/delta) over the given scales.

    Boxes are aligned to a grid anchored at the origin unless an anchor is
    given. residual is the RMS deviation of the log counts from the fit.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < MIN_BOX_POINTS:
        raise ValueError(f"box counting needs at least {MIN_BOX_POINTS} points, got {len(points)}")
    if len(scales) < MIN_BOX_SCALES:
        raise ValueError(f"box counting needs at least {MIN_BOX_SCALES} scales, got {len(scales)}")
    if any(s <= 0.0 for s in scales):
        raise ValueError(f"scales must be positive, got {list(scales)}")
    anchor = np.zeros(points.shape[1]) if anchor is None else np.asarray(anchor, dtype=float)
    threads = Config.threads() if threads is None else threads

    with ThreadPoolExecutor(max_workers=threads) as executor:
        counts = list(executor.map(lambda s: _count_boxes(points, anchor, s), scales))
    if len(set(counts)) < 2:
        raise DegenerateScales(f"box counts {counts} take fewer than 2 distinct values")

    x = np.log(1.0 / np.asarray(scales))
    y = np.log(np.asarray(counts, dtype=float))
    fit = linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    reliable = residual <= RELIABLE_RESIDUAL
    if not reliable:
        logger.warning("box-count fit residual %.3f exceeds %.1f", residual, RELIABLE_RESIDUAL)
    return BoxCountResult(
        scales=list(scales),
        counts=counts,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        residual=residual,
        reliable=reliable,
    )


def cantor_sample(depth: int) -> np.ndarray:
    """Midpoints of the 2^depth intervals of the middle-third construction, as (N, 1)."""
    left = np.zeros(1)
    for i in range(1, depth + 1):
        left = np.concatenate([left, left + 2.0 * 3.0**-i])
    return np.sort(left + 0.5 * 3.0**-depth)[:, None]


def addresses_of_depth(depth: int, params: ConstructionParams) -> list[Address]:
    return [Address(word=w) for w in product(params.alphabet, repeat=depth)]
