import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import quad, simpson
from scipy.stats import qmc

from fractal_cut_locus.algo.bumps import bump_h, bump_h_prime
from fractal_cut_locus.algo.hull import DEMO_BIG_RADIUS, DEMO_SMALL_RADIUS
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import OutsideDomain, PositivityViolated, SeamMismatch

logger = logging.getLogger(__name__)

EQUAL_LENGTH_TOL = 1e-6
EXACTNESS_TOL = 1e-8
SEAM_MATCH_TOL = 1e-12
REGION_TOL = 1e-12
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


class Chart(Enum):
    POLAR = "polar"
    CARTESIAN = "cartesian"


def _halton_box(lo: np.ndarray, hi: np.ndarray, count: int) -> np.ndarray:
    sampler = qmc.Halton(d=len(lo), scramble=False)
    sampler.fast_forward(1)
    return qmc.scale(sampler.random(count), lo, hi)


# --- Magnetic profiles ---


class MagneticProfile(BaseModel):
    """Bump of amplitude c on [a, b]: the unit bump with half-width delta stretched over the interval.

    Vanishes, with every derivative, outside the middle delta-fraction of [a, b].
    """

    interval: tuple[float, float]
    c: float
    delta: float

    @model_validator(mode="after")
    def validate_profile(self) -> "MagneticProfile":
        a, b = self.interval
        if not a < b:
            raise ValueError(f"profile interval must satisfy a < b, got {self.interval}")
        bump_h(0.0, self.c, self.delta)
        return self

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]

    @property
    def support(self) -> tuple[float, float]:
        a, b = self.interval
        middle, half = 0.5 * (a + b), 0.5 * self.delta * self.width
        return middle - half, middle + half

    def _unit(self, s) -> np.ndarray:
        return 2.0 * (np.asarray(s, dtype=float) - self.interval[0]) / self.width - 1.0

    def __call__(self, s) -> np.ndarray:
        return bump_h(self._unit(s), self.c, self.delta)

    def prime(self, s) -> np.ndarray:
        return bump_h_prime(self._unit(s), self.c, self.delta) * (2.0 / self.width)

    def integral(self) -> float:
        lo, hi = self.support
        value, _ = quad(lambda s: float(self(s)), lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        return value

    def cumulative(self, s) -> np.ndarray:
        """int_a^s of the profile, for each s."""
        s = np.asarray(s, dtype=float)
        lo, hi = self.support
        out = np.empty(s.shape)
        for idx, value in np.ndenumerate(s):
            top = min(max(value, lo), hi)
            if top <= lo:
                out[idx] = 0.0
            else:
                out[idx] = quad(lambda t: float(self(t)), lo, top, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)[0]
        return out

    def shifted(self, offset: float) -> "MagneticProfile":
        a, b = self.interval
        return self.model_copy(update={"interval": (a + offset, b + offset)})

    def rescaled(self, factor: float) -> "MagneticProfile":
        return MagneticProfile(interval=self.interval, c=self.c * factor, delta=self.delta)


# --- One-forms ---


class OneForm(BaseModel):
    """Coefficients b_i of a one-form beta = b_i dx^i in a chart."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    chart: Chart = Chart.CARTESIAN

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def potential(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def domain_sample(self, count: int) -> np.ndarray:
        raise NotImplementedError

    def stencil_ok(self, center: np.ndarray, stencil: np.ndarray) -> bool:
        return True


class ZeroForm(OneForm):
    dim: int = 2

    @property
    def dimension(self) -> int:
        return self.dim

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.atleast_2d(np.asarray(points, dtype=float)))

    def potential(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(np.atleast_2d(points)))

    def domain_sample(self, count: int) -> np.ndarray:
        return _halton_box(-np.ones(self.dim), np.ones(self.dim), count)


class CoefficientForm(OneForm):
    """Arbitrary coefficient field on a box, given as a callable (N, d) -> (N, d)."""

    func: Callable[[np.ndarray], np.ndarray]
    lower: np.ndarray
    upper: np.ndarray

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(np.asarray(points, dtype=float))), dtype=float)

    def domain_sample(self, count: int) -> np.ndarray:
        return _halton_box(np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float), count)


class RadialForm(OneForm):
    """beta = -h(R - r) dr on the ball B(center, R); r is the distance to center.

    Inward travel (dr < 0) is lengthened by h, outward travel shortened.
    In the polar chart points are (r, theta) about the center.
    """

    profile: MagneticProfile
    center: np.ndarray
    radius: float

    @property
    def dimension(self) -> int:
        return len(self.center)

    def _radial(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.chart == Chart.POLAR:
            return points[:, 0], np.zeros_like(points)
        rel = points - self.center
        r = np.linalg.norm(rel, axis=1)
        return r, rel

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        r, rel = self._radial(points)
        if np.any(r > self.radius * (1.0 + REGION_TOL)):
            raise OutsideDomain(f"point at distance {r.max():.6g} lies outside the ball of radius {self.radius}")
        h = self.profile(self.radius - r)
        if self.chart == Chart.POLAR:
            return np.column_stack([-h, np.zeros_like(h)])
        safe = np.where(r > 0.0, r, 1.0)
        return -(h / safe)[:, None] * rel

    def potential(self, points: np.ndarray) -> np.ndarray:
        r, _ = self._radial(points)
        return self.profile.cumulative(self.radius - r)

    def domain_sample(self, count: int) -> np.ndarray:
        if self.chart == Chart.POLAR:
            return _halton_box(np.array([0.0, 0.0]), np.array([self.radius, 2.0 * math.pi]), count)
        box = _halton_box(self.center - self.radius, self.center + self.radius, count)
        return box[np.linalg.norm(box - self.center, axis=1) < self.radius]


# --- Region decomposition of the dilated demo domain ---


class RegionClassification(BaseModel):
    region: int
    coords: tuple[float, float]
    seam: bool
    regions: list[int]


class RegionDecomposition(BaseModel):
    """Split of the dilated demo domain into three regions.

    Region 1 is the big ball sector |theta| >= pi/4 about o (coordinates
    r1, theta), region 2 the band 0 <= u <= 1 under the cone with
    u = x - |y| and rho = (x + |y| - 1)/sqrt 2, region 3 the small ball
    sector |theta| <= pi/4 about q = (1, 0) (coordinates r2, theta).
    """

    epsilon: float = 0.1

    @model_validator(mode="after")
    def validate_epsilon(self) -> "RegionDecomposition":
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        return self

    @property
    def big_radius(self) -> float:
        return DEMO_BIG_RADIUS + self.epsilon

    @property
    def small_radius(self) -> float:
        return DEMO_SMALL_RADIUS + self.epsilon

    @property
    def band_height(self) -> float:
        return DEMO_SMALL_RADIUS + self.epsilon

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([-self.big_radius, -self.big_radius]),
            np.array([1.0 + self.small_radius, self.big_radius]),
        )

    def local(self, points: np.ndarray) -> dict[str, np.ndarray]:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = points[:, 0], points[:, 1]
        return {
            "r1": np.hypot(x, y),
            "theta1": np.mod(np.arctan2(y, x), 2.0 * math.pi),
            "r2": np.hypot(x - 1.0, y),
            "theta2": np.arctan2(y, x - 1.0),
            "u": x - np.abs(y),
            "rho": (x + np.abs(y) - 1.0) / math.sqrt(2.0),
        }

    def memberships(self, points: np.ndarray, tol: float = REGION_TOL) -> np.ndarray:
        """(N, 3) closed-region membership."""
        c = self.local(points)
        in1 = (c["u"] <= tol) & (c["r1"] <= self.big_radius + tol)
        in2 = (c["u"] >= -tol) & (c["u"] <= 1.0 + tol) & (c["rho"] <= self.band_height + tol)
        in3 = (c["u"] >= 1.0 - tol) & (c["r2"] <= self.small_radius + tol)
        return np.column_stack([in1, in2, in3])

    def classify_many(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Region id per point (0 outside) and a seam flag for points in more than one closed region."""
        member = self.memberships(points)
        count = member.sum(axis=1)
        region = np.where(count > 0, np.argmax(member, axis=1) + 1, 0)
        return region, count > 1

    def classify(self, point) -> RegionClassification:
        point = np.asarray(point, dtype=float)
        member = self.memberships(point[None, :])[0]
        regions = [i + 1 for i in range(3) if member[i]]
        if not regions:
            raise OutsideDomain(f"point {point.tolist()} lies outside the dilated domain (epsilon {self.epsilon})")
        c = {k: float(v[0]) for k, v in self.local(point[None, :]).items()}
        region = regions[0]
        coords = {1: (c["r1"], c["theta1"]), 2: (c["rho"], c["u"]), 3: (c["r2"], c["theta2"])}[region]
        return RegionClassification(region=region, coords=coords, seam=len(regions) > 1, regions=regions)

    def inside(self, points: np.ndarray) -> np.ndarray:
        return self.classify_many(points)[0] > 0

    def sample(self, count: int) -> np.ndarray:
        lo, hi = self.bounds
        box = _halton_box(lo, hi, count)
        return box[self.inside(box)]

    def seam_points(self, count: int = 64) -> dict[str, np.ndarray]:
        """Points on the two lateral seams (both mirror images) and on the outer boundary."""
        s = np.linspace(0.0, 1.0, count)
        reach1 = self.big_radius / math.sqrt(2.0)
        reach2 = self.small_radius / math.sqrt(2.0)
        lateral1 = np.concatenate([np.column_stack([s * reach1, s * reach1]), np.column_stack([s * reach1, -s * reach1])])
        lateral2 = np.concatenate(
            [np.column_stack([1.0 + s * reach2, s * reach2]), np.column_stack([1.0 + s * reach2, -s * reach2])]
        )
        angles1 = math.pi / 4 + s * 1.5 * math.pi
        angles3 = -math.pi / 4 + s * 0.5 * math.pi
        u = s
        top = (math.sqrt(2.0) * self.band_height + 1.0 - u) / 2.0
        boundary = np.concatenate(
            [
                self.big_radius * np.column_stack([np.cos(angles1), np.sin(angles1)]),
                np.column_stack([1.0 + self.small_radius * np.cos(angles3), self.small_radius * np.sin(angles3)]),
                np.column_stack([u + top, top]),
                np.column_stack([u + top, -top]),
            ]
        )
        return {"lateral1": lateral1, "lateral2": lateral2, "boundary": boundary}


class AssembledForm(OneForm):
    """beta = -h1(r1) dr1, -h2(rho) drho, -h3(r2) dr2 on regions 1, 2, 3."""

    decomposition: RegionDecomposition
    h1: MagneticProfile
    h2: MagneticProfile
    h3: MagneticProfile

    @property
    def dimension(self) -> int:
        return 2

    def region_coefficients(self, points: np.ndarray, region: int) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x, y = points[:, 0], points[:, 1]
        c = self.decomposition.local(points)
        if region == 1:
            r = c["r1"]
            scale = -self.h1(r) / np.where(r > 0.0, r, 1.0)
            return scale[:, None] * points
        if region == 2:
            h = -self.h2(c["rho"]) / math.sqrt(2.0)
            return np.column_stack([h, h * np.where(y >= 0.0, 1.0, -1.0)])
        r = c["r2"]
        scale = -self.h3(r) / np.where(r > 0.0, r, 1.0)
        return scale[:, None] * np.column_stack([x - 1.0, y])

    def coefficients(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        region, _ = self.decomposition.classify_many(points)
        if np.any(region == 0):
            bad = points[region == 0][0]
            raise OutsideDomain(f"point {bad.tolist()} lies outside the dilated domain")
        out = np.empty_like(points)
        for r in (1, 2, 3):
            mask = region == r
            if mask.any():
                out[mask] = self.region_coefficients(points[mask], r)
        return out

    def potential(self, points: np.ndarray) -> np.ndarray:
        """Psi with d Psi = beta on each region."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        region, _ = self.decomposition.classify_many(points)
        c = self.decomposition.local(points)
        out = np.zeros(len(points))
        for r, profile, key in ((1, self.h1, "r1"), (2, self.h2, "rho"), (3, self.h3, "r2")):
            mask = region == r
            if mask.any():
                out[mask] = -profile.cumulative(c[key][mask])
        return out

    def domain_sample(self, count: int) -> np.ndarray:
        return self.decomposition.sample(count)

    def stencil_ok(self, center: np.ndarray, stencil: np.ndarray) -> bool:
        region, seam = self.decomposition.classify_many(np.vstack([center[None, :], stencil]))
        return bool(region[0] > 0 and np.all(region == region[0]) and not seam.any())


def classify_region(point, epsilon: float = 0.1) -> RegionClassification:
    return RegionDecomposition(epsilon=epsilon).classify(point)


def assemble_beta(
    h1: MagneticProfile,
    h2: MagneticProfile,
    h3: MagneticProfile,
    decomposition: RegionDecomposition,
    samples: int = 64,
) -> AssembledForm:
    """Glue the three regional fields and check they agree on every seam and vanish on the boundary."""
    form = AssembledForm(decomposition=decomposition, h1=h1, h2=h2, h3=h3)
    seams = decomposition.seam_points(samples)
    checks = {
        "region 1 / region 2": (seams["lateral1"], 1, 2),
        "region 2 / region 3": (seams["lateral2"], 2, 3),
    }
    for name, (points, first, second) in checks.items():
        gap = float(np.max(np.abs(form.region_coefficients(points, first) - form.region_coefficients(points, second))))
        if gap > SEAM_MATCH_TOL:
            raise SeamMismatch(f"beta jumps by {gap:.3e} across the {name} seam")
    boundary = form.coefficients(seams["boundary"])
    edge = float(np.max(np.abs(boundary)))
    if edge > SEAM_MATCH_TOL:
        raise SeamMismatch(f"beta does not vanish on the dilated boundary: max {edge:.3e}")
    logger.debug("assembled beta on %d seam samples", 4 * samples)
    return form


def single_profile_beta(
    decomposition: RegionDecomposition, c: float = 0.5, delta: float = 0.5
) -> AssembledForm:
    """One bump H on [0, sqrt2/2 + epsilon]; h1(r) = H(r - sqrt2/2), h2 = h3 = H."""
    profile = MagneticProfile(interval=(0.0, decomposition.band_height), c=c, delta=delta)
    return assemble_beta(profile.shifted(DEMO_SMALL_RADIUS), profile, profile, decomposition)


# --- Randers norm ---


class RandersMetric(BaseModel):
    """F(x, y) = alpha(x, y) + beta(x, y) over a flat base.

    alpha is Euclidean in the Cartesian chart and sqrt(dr^2 + r^2 dtheta^2)
    in the polar chart.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    form: OneForm

    @property
    def chart(self) -> Chart:
        return self.form.chart

    def metric_matrix(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points.shape[1]
        a = np.broadcast_to(np.eye(d), (len(points), d, d)).copy()
        if self.chart == Chart.POLAR:
            a[:, 1, 1] = points[:, 0] ** 2
        return a

    def alpha(self, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
        a = self.metric_matrix(points)
        return np.sqrt(np.einsum("ni,nij,nj->n", tangents, a, tangents))

    def beta(self, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
        return np.sum(self.form.coefficients(points) * tangents, axis=1)

    def beta_norm(self, points: np.ndarray) -> np.ndarray:
        """||beta||_a = sqrt(a^ij b_i b_j)."""
        b = self.form.coefficients(points)
        inverse = np.linalg.inv(self.metric_matrix(points))
        return np.sqrt(np.einsum("ni,nij,nj->n", b, inverse, b))

    def __call__(self, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
        return self.alpha(points, tangents) + self.beta(points, tangents)


def randers_norm(metric: RandersMetric, x, y) -> float:
    x = np.asarray(x, dtype=float)[None, :]
    y = np.asarray(y, dtype=float)[None, :]
    size = float(metric.beta_norm(x)[0])
    if size >= 1.0:
        raise PositivityViolated(f"||beta|| = {size:.6g} >= 1 at {x[0].tolist()}")
    return float(metric(x, y)[0])


class PositivityReport(BaseModel):
    samples: int
    sup_norm: float
    margin: float
    passed: bool


def positivity_check(metric: RandersMetric, count: int = 4096) -> PositivityReport:
    points = metric.form.domain_sample(count)
    if metric.chart == Chart.POLAR:
        points = points[points[:, 0] > 0.0]
    sup = float(np.max(metric.beta_norm(points))) if len(points) else 0.0
    report = PositivityReport(samples=len(points), sup_norm=sup, margin=1.0 - sup, passed=sup < 1.0)
    if report.passed:
        logger.info("Randers positivity holds on %d samples, margin %.6f", len(points), report.margin)
    else:
        logger.warning("Randers positivity fails: sup ||beta|| = %.6f", sup)
    return report


def _derivative(func: Callable[[np.ndarray], np.ndarray], point: np.ndarray, axis: int, step: float) -> np.ndarray:
    """Fourth-order central difference of func along one coordinate."""
    e = np.zeros_like(point)
    e[axis] = step
    values = func(np.stack([point + 2 * e, point + e, point - e, point - 2 * e]))
    return (-values[0] + 8.0 * values[1] - 8.0 * values[2] + values[3]) / (12.0 * step)


def closedness_residual(form: OneForm, count: int = 256, step: float = 1e-5) -> float:
    """max |d beta| = |d b_2/dx^1 - d b_1/dx^2| over domain samples whose stencil stays in one region."""
    if form.dimension != 2:
        raise ValueError(f"closedness is checked for planar forms, got dimension {form.dimension}")
    worst, used = 0.0, 0
    for point in form.domain_sample(count):
        offsets = np.array([[2, 0], [-2, 0], [0, 2], [0, -2]], dtype=float) * step
        if not form.stencil_ok(point, point + offsets):
            continue
        try:
            d1 = _derivative(form.coefficients, point, 0, step)
            d2 = _derivative(form.coefficients, point, 1, step)
        except OutsideDomain:
            continue
        worst = max(worst, abs(float(d1[1] - d2[0])))
        used += 1
    logger.debug("closedness residual %.3e over %d samples", worst, used)
    return worst


# --- Lengths ---


class SampledCurve(BaseModel):
    """Ordered chart points over a parameter, with tangents (finite differences when omitted)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    parameter: np.ndarray
    points: np.ndarray
    tangents: np.ndarray | None = None

    @model_validator(mode="after")
    def validate_samples(self) -> "SampledCurve":
        if len(self.parameter) < 3 or len(self.points) != len(self.parameter):
            raise ValueError(
                f"need at least 3 samples with one point each, got {len(self.parameter)} and {len(self.points)}"
            )
        if self.tangents is None:
            self.tangents = np.gradient(self.points, self.parameter, axis=0, edge_order=2)
        return self

    @classmethod
    def segment(cls, start, end, samples: int = 257) -> "SampledCurve":
        start, end = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
        t = np.linspace(0.0, 1.0, samples)
        points = start + t[:, None] * (end - start)
        return cls(parameter=t, points=points, tangents=np.broadcast_to(end - start, points.shape).copy())


class CurveLength(BaseModel):
    riemannian: float
    finslerian: float


def curve_length(metric: RandersMetric, curve: SampledCurve) -> CurveLength:
    """Composite Simpson integrals of alpha and F along the curve."""
    alpha = metric.alpha(curve.points, curve.tangents)
    beta = metric.beta(curve.points, curve.tangents)
    riemannian = float(simpson(alpha, x=curve.parameter))
    finslerian = float(simpson(alpha + beta, x=curve.parameter))
    return CurveLength(riemannian=riemannian, finslerian=finslerian)


def ray_length_closed_form(profile: MagneticProfile, length: float | None = None) -> float:
    """Finsler length of an inward ray of the given Euclidean length starting where the profile starts.

    For a full ray this is length + int h.
    """
    length = profile.width if length is None else length
    if length <= 0.0:
        raise ValueError(f"ray length must be positive, got {length}")
    return length + float(profile.cumulative(profile.interval[0] + length))


class EqualLengthReport(BaseModel):
    rays: int
    lengths: list[float]
    mean: float
    max_deviation: float
    tolerance: float
    passed: bool


def equal_length_check(
    metric: RandersMetric | Sequence[RandersMetric],
    rays: Sequence[SampledCurve],
    tol: float = EQUAL_LENGTH_TOL,
    threads: int | None = None,
) -> EqualLengthReport:
    """Finsler lengths of a ray family and their largest deviation from the family mean."""
    if not rays:
        raise ValueError("need at least one ray")
    metrics = [metric] * len(rays) if isinstance(metric, RandersMetric) else list(metric)
    if len(metrics) != len(rays):
        raise ValueError(f"got {len(metrics)} metrics for {len(rays)} rays")
    threads = Config.threads() if threads is None else threads
    with ThreadPoolExecutor(max_workers=threads) as executor:
        lengths = list(executor.map(lambda pair: curve_length(pair[0], pair[1]).finslerian, zip(metrics, rays)))
    mean = float(np.mean(lengths))
    deviation = float(np.max(np.abs(np.asarray(lengths) - mean)))
    return EqualLengthReport(
        rays=len(rays), lengths=lengths, mean=mean, max_deviation=deviation, tolerance=tol, passed=deviation < tol
    )


# --- Ray families ---


def round_ball_rays(count: int = 360, samples: int = 257, radius: float = 1.0) -> list[SampledCurve]:
    """Inward radii of the planar ball B(0, radius), from the boundary to the centre."""
    angles = 2.0 * math.pi * np.arange(count) / count
    return [
        SampledCurve.segment(radius * np.array([math.cos(a), math.sin(a)]), np.zeros(2), samples) for a in angles
    ]


def round_ball_metric(
    c: float = 0.5, delta: float = 0.25, radius: float = 1.0, chart: Chart = Chart.CARTESIAN
) -> RandersMetric:
    profile = MagneticProfile(interval=(0.0, radius), c=c, delta=delta)
    return RandersMetric(form=RadialForm(profile=profile, center=np.zeros(2), radius=radius, chart=chart))


def band_foot(decomposition: RegionDecomposition, u: float, side: float = 1.0) -> np.ndarray:
    """Point of the cone boundary (rho = band height) on the line u = x - |y|, above the axis for side > 0."""
    top = 1.0 + math.sqrt(2.0) * decomposition.band_height
    return np.array([(u + top) / 2.0, math.copysign((top - u) / 2.0, side)])


def demo_ray_families(
    decomposition: RegionDecomposition,
    count: int = 16,
    fractions: Sequence[float] = (0.1, 0.3, 0.5, 0.7, 0.9),
    samples: int = 257,
) -> dict[str, list[SampledCurve]]:
    """Boundary-orthogonal inward rays of the dilated demo domain grouped by length.

    Big cap rays end at o, small cap rays at q. A cone family of fraction f
    holds the two rays ending at (f, 0) plus rays from the feet u = f/2
    (upper) and u = f/3 (lower), cut to the same length so that they stop
    above and below the axis.
    """
    families: dict[str, list[SampledCurve]] = {}
    big = math.pi / 4 + 1.5 * math.pi * (np.arange(count) + 0.5) / count
    families["cap_o"] = [
        SampledCurve.segment(decomposition.big_radius * np.array([math.cos(a), math.sin(a)]), np.zeros(2), samples)
        for a in big
    ]
    small = -math.pi / 4 + 0.5 * math.pi * (np.arange(count) + 0.5) / count
    q = np.array([1.0, 0.0])
    families["cap_q"] = [
        SampledCurve.segment(q + decomposition.small_radius * np.array([math.cos(a), math.sin(a)]), q, samples)
        for a in small
    ]
    for f in fractions:
        if not 0.0 < f < 1.0:
            raise ValueError(f"cone fractions must lie in (0, 1), got {f}")
        reach = decomposition.band_height - (f - 1.0) / math.sqrt(2.0)
        rays = []
        for u, side in ((f, 1.0), (f, -1.0), (f / 2.0, 1.0), (f / 3.0, -1.0)):
            foot = band_foot(decomposition, u, side)
            inward = np.array([-1.0, -side]) / math.sqrt(2.0)
            rays.append(SampledCurve.segment(foot, foot + reach * inward, samples))
        families[f"cone_{f:g}"] = rays
    return families


def length_convergence(
    metric: RandersMetric,
    start,
    end,
    exact: float,
    counts: Sequence[int] = (33, 65, 129, 257),
) -> tuple[list[float], list[float]]:
    """Errors of curve_length against an exact Finsler length and the observed orders between doublings."""
    errors = [abs(curve_length(metric, SampledCurve.segment(start, end, n)).finslerian - exact) for n in counts]
    orders = [
        math.log2(a / b) for a, b in zip(errors, errors[1:]) if a > 1e-13 and b > 1e-13
    ]
    return errors, orders


# --- Exactness proxy ---


class ExactnessReport(BaseModel):
    paths: int
    max_deviation: float
    tolerance: float
    passed: bool


def _path_integral(metric: RandersMetric, vertices: np.ndarray) -> tuple[float, float]:
    riemannian = finslerian = 0.0
    for a, b in zip(vertices, vertices[1:]):
        edge = b - a
        integrand = lambda s: float(metric(a[None, :] + s * edge[None, :], edge[None, :])[0])
        finslerian += quad(integrand, 0.0, 1.0, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)[0]
        riemannian += float(np.linalg.norm(edge))
    return riemannian, finslerian


def exactness_check(
    metric: RandersMetric, paths: int = 100, vertices: int = 5, seed: int = 0, tol: float = EXACTNESS_TOL
) -> ExactnessReport:
    """(Finsler - Riemannian length) against Psi(end) - Psi(start) on random polygonal paths.

    Paths live in the half disc x <= 0 of the big ball, which region 1 contains.
    """
    form = metric.form
    if not isinstance(form, AssembledForm):
        raise ValueError("the exactness proxy runs on an assembled field")
    rng = np.random.default_rng(seed)
    radius = form.decomposition.big_radius * (1.0 - 1e-9)
    worst = 0.0
    for _ in range(paths):
        r = radius * np.sqrt(rng.random(vertices))
        angle = math.pi / 2 + math.pi * rng.random(vertices)
        points = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
        riemannian, finslerian = _path_integral(metric, points)
        psi = form.potential(points[[0, -1]])
        worst = max(worst, abs((finslerian - riemannian) - (psi[1] - psi[0])))
    report = ExactnessReport(paths=paths, max_deviation=worst, tolerance=tol, passed=worst < tol)
    logger.info("exactness proxy over %d paths: max deviation %.3e", paths, worst)
    return report


# --- Report ---


class RandersReport(BaseModel):
    epsilon: float
    c: float
    delta: float
    positivity: PositivityReport
    closedness: float
    round_ball: EqualLengthReport
    families: dict[str, EqualLengthReport]
    exactness: ExactnessReport
    passed: bool


def randers_report(
    epsilon: float = 0.1, c: float = 0.5, delta: float = 0.5, threads: int | None = None
) -> RandersReport:
    decomposition = RegionDecomposition(epsilon=epsilon)
    metric = RandersMetric(form=single_profile_beta(decomposition, c=c, delta=delta))
    positivity = positivity_check(metric)
    closedness = closedness_residual(metric.form)
    ball = equal_length_check(round_ball_metric(c=c, delta=delta), round_ball_rays(), threads=threads)
    families = {
        name: equal_length_check(metric, rays, threads=threads)
        for name, rays in demo_ray_families(decomposition).items()
    }
    exactness = exactness_check(metric)
    passed = (
        positivity.passed
        and closedness < EXACTNESS_TOL
        and ball.passed
        and all(f.passed for f in families.values())
        and exactness.passed
    )
    return RandersReport(
        epsilon=epsilon,
        c=c,
        delta=delta,
        positivity=positivity,
        closedness=closedness,
        round_ball=ball,
        families=families,
        exactness=exactness,
        passed=passed,
    )
