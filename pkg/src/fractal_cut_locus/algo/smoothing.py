import logging
import math

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.integrate import quad
from scipy.optimize import brentq

from fractal_cut_locus.algo.bumps import g_sigma, g_sigma_prime
from fractal_cut_locus.algo.hull import DEMO_BIG_RADIUS, DEMO_PHI, DEMO_SMALL_RADIUS, HullGeometry
from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.errors import NoAdmissibleYb

logger = logging.getLogger(__name__)

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-13
ROOT_XTOL = 1e-15
SANDWICH_TOL = 1e-12
CURVATURE_TOL = 1e-9
SLOPE_TOL = 1e-9
FD_STEP = 1e-5
SEARCH_STEPS = 12
SEARCH_FLOOR = 1.0 / 64.0
SEARCH_POINTS = 400
SEARCH_NORMALS = 100
PIECES = ("F", "F1", "F2", "f1", "f2")


class SeamGeometry(BaseModel):
    """Meridian data of one cone seam, in the frame rotated so the cone line d is horizontal.

    The origin is the centre of the big sphere, c' = (0, R1) its tangency
    point with d and c = (L, R1) the small sphere's. f1 and f2 are the upper
    arcs of the two circles, d the line y = R1.
    """

    big_radius: float
    small_radius: float
    slant: float
    phi: float

    @model_validator(mode="after")
    def validate_shape(self) -> "SeamGeometry":
        if not 0.0 < self.small_radius < self.big_radius:
            raise ValueError(
                f"need 0 < small radius < big radius, got {self.small_radius} and {self.big_radius}"
            )
        if not 0.0 < self.slant < self.big_radius:
            raise ValueError(f"slant length must lie in (0, {self.big_radius}), got {self.slant}")
        if not 0.0 < self.phi < math.pi / 2:
            raise ValueError(f"phi must lie in (0, pi/2), got {self.phi}")
        return self

    @classmethod
    def from_geometry(cls, geometry: HullGeometry, level: int = 0) -> "SeamGeometry":
        angle = geometry.theta(level)
        return cls(
            big_radius=geometry.radius(level - 1),
            small_radius=geometry.radius(level),
            slant=geometry.lengths[level] * math.sin(angle),
            phi=angle,
        )

    @classmethod
    def from_demo(cls, epsilon: float = 0.1) -> "SeamGeometry":
        if epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        return cls(
            big_radius=DEMO_BIG_RADIUS + epsilon,
            small_radius=DEMO_SMALL_RADIUS + epsilon,
            slant=math.sin(DEMO_PHI),
            phi=DEMO_PHI,
        )

    @classmethod
    def from_params(cls, params: ConstructionParams, level: int = 0) -> "SeamGeometry":
        geometry = HullGeometry.from_params(params, level).dilated(params.epsilon)
        return cls.from_geometry(geometry, level)

    @property
    def y_d(self) -> float:
        return self.big_radius

    @property
    def small_center(self) -> tuple[float, float]:
        return self.slant, self.big_radius - self.small_radius

    # --- arcs ---

    def d(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.y_d)

    def f1(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(self.big_radius**2 - x**2)

    def f1_prime(self, x):
        x = np.asarray(x, dtype=float)
        return -x / np.sqrt(self.big_radius**2 - x**2)

    def f1_second(self, x):
        x = np.asarray(x, dtype=float)
        return -(self.big_radius**2) / (self.big_radius**2 - x**2) ** 1.5

    def _small_offset(self, x) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(x, dtype=float) - self.slant
        inside = np.abs(u) < self.small_radius
        return u, inside

    def f2(self, x):
        u, inside = self._small_offset(x)
        root = np.sqrt(np.where(inside, self.small_radius**2 - u**2, 0.0))
        return np.where(inside, self.big_radius - self.small_radius + root, -np.inf)

    def f2_prime(self, x):
        u, inside = self._small_offset(x)
        root = np.sqrt(np.where(inside, self.small_radius**2 - u**2, 1.0))
        return np.where(inside, -u / root, np.nan)

    def f2_second(self, x):
        u, inside = self._small_offset(x)
        base = np.where(inside, self.small_radius**2 - u**2, 1.0)
        return np.where(inside, -(self.small_radius**2) / base**1.5, np.nan)

    def crossing(self) -> float:
        """x_R, where the two arcs meet between c' and c."""
        lower = max(0.0, self.slant - self.small_radius) + 1e-12 * self.slant
        gap = lambda x: float(self.f1(x) - self.f2(x))
        if gap(lower) <= 0.0 or gap(self.slant) >= 0.0:
            raise NoAdmissibleYb("the two arcs do not cross between the tangency points")
        return brentq(gap, lower, self.slant, xtol=ROOT_XTOL)

    # --- back to the meridian plane ---

    def to_meridian(self, x, y) -> np.ndarray:
        """(axial, radial) coordinates of rotated-frame points."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        c, s = math.cos(self.phi), math.sin(self.phi)
        down = y - self.y_d
        axial = self.big_radius * c + x * s + down * c
        radial = self.big_radius * s - x * c + down * s
        return np.stack([axial, radial], axis=-1)

    def direction_to_meridian(self, dx, dy) -> np.ndarray:
        dx, dy = np.broadcast_arrays(np.asarray(dx, dtype=float), np.asarray(dy, dtype=float))
        c, s = math.cos(self.phi), math.sin(self.phi)
        return np.stack([dx * s + dy * c, -dx * c + dy * s], axis=-1)


def _integrate(integrand, a: float, b: float) -> float:
    if a == b:
        return 0.0
    value, _ = quad(integrand, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
    return value


def _accumulate(integrand, anchor: float, xs: np.ndarray) -> np.ndarray:
    """Integral of integrand from anchor to each x, summed piecewise in order of distance from anchor."""
    xs = np.asarray(xs, dtype=float)
    order = np.argsort(np.abs(xs - anchor), kind="stable")
    out = np.empty_like(xs)
    total, previous = 0.0, anchor
    for idx in order:
        total += _integrate(integrand, previous, xs[idx])
        previous = xs[idx]
        out[idx] = total
    return out


def plateau_from_left(seam: SeamGeometry, sigma: float) -> float:
    """Height reached by F1 = y_d + int_0^x (1 - g_sigma) f1' once x passes sigma."""
    integrand = lambda t: float((1.0 - g_sigma(t, sigma)) * seam.f1_prime(t))
    return seam.y_d + _integrate(integrand, 0.0, sigma)


def _right_weight(seam: SeamGeometry, sigma: float):
    width = seam.slant - sigma
    return lambda t: g_sigma(np.asarray(t, dtype=float) - sigma, width)


def plateau_from_right(seam: SeamGeometry, sigma: float) -> float:
    """Height of F2 = y_d - int_x^L w f2' left of sigma, with w rising from 0 at sigma to 1 at L."""
    weight = _right_weight(seam, sigma)
    integrand = lambda t: float(weight(t) * seam.f2_prime(t))
    return seam.y_d - _integrate(integrand, sigma, seam.slant)


class SmoothedProfile(BaseModel):
    """F: F1 on [0, x_Q], the plateau y_b on [x_Q, x_S], F2 on [x_S, L]; f1 left of 0 and f2 right of L."""

    seam: SeamGeometry
    x_r: float
    y_r: float
    x_q: float
    x_s: float
    y_b: float
    y_low: float
    fraction: float

    @property
    def y_d(self) -> float:
        return self.seam.y_d

    @property
    def end(self) -> float:
        return self.seam.slant

    @property
    def feasible(self) -> tuple[float, float]:
        return self.y_low, self.y_d

    def _left_integrand(self):
        return lambda t: float((1.0 - g_sigma(t, self.x_q)) * self.seam.f1_prime(t))

    def _right_weight(self):
        return _right_weight(self.seam, self.x_s)

    def F1(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        clipped = np.clip(x, 0.0, self.x_q)
        return self.y_d + _accumulate(self._left_integrand(), 0.0, np.atleast_1d(clipped)).reshape(x.shape)

    def F2(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        clipped = np.clip(x, self.x_s, self.end)
        weight = self._right_weight()
        integrand = lambda t: float(weight(t) * self.seam.f2_prime(t))
        return self.y_d + _accumulate(integrand, self.end, np.atleast_1d(clipped)).reshape(x.shape)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x)
        out = np.full(flat.shape, self.y_b)
        left, right = flat < 0.0, flat > self.end
        rise, fall = (flat >= 0.0) & (flat < self.x_q), (flat > self.x_s) & (flat <= self.end)
        out[left] = self.seam.f1(flat[left])
        out[right] = self.seam.f2(flat[right])
        if rise.any():
            out[rise] = self.F1(flat[rise])
        if fall.any():
            out[fall] = self.F2(flat[fall])
        return out.reshape(x.shape)

    # --- analytic derivatives ---

    def F1_prime(self, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - g_sigma(x, self.x_q)) * self.seam.f1_prime(x)

    def F1_second(self, x):
        x = np.asarray(x, dtype=float)
        g, dg = g_sigma(x, self.x_q), g_sigma_prime(x, self.x_q)
        return (1.0 - g) * self.seam.f1_second(x) - dg * self.seam.f1_prime(x)

    def F2_prime(self, x):
        x = np.asarray(x, dtype=float)
        w = self._right_weight()(x)
        return np.where(w > 0.0, w * np.nan_to_num(self.seam.f2_prime(x)), 0.0)

    def F2_second(self, x):
        x = np.asarray(x, dtype=float)
        width = self.end - self.x_s
        w = self._right_weight()(x)
        dw = g_sigma_prime(x - self.x_s, width)
        f2p, f2pp = np.nan_to_num(self.seam.f2_prime(x)), np.nan_to_num(self.seam.f2_second(x))
        return np.where(w > 0.0, w * f2pp + dw * f2p, 0.0)

    def prime(self, x):
        x = np.asarray(x, dtype=float)
        return np.select(
            [x < 0.0, x > self.end, x <= self.x_s],
            [self.seam.f1_prime(x), np.nan_to_num(self.seam.f2_prime(x)), self.F1_prime(x)],
            self.F2_prime(x),
        )

    def second(self, x):
        x = np.asarray(x, dtype=float)
        return np.select(
            [x < 0.0, x > self.end, x <= self.x_s],
            [self.seam.f1_second(x), np.nan_to_num(self.seam.f2_second(x)), self.F1_second(x)],
            self.F2_second(x),
        )

    # --- meridian picture ---

    def meridian_curve(self, x) -> np.ndarray:
        return self.seam.to_meridian(x, self(x))

    def inward_normals(self, x) -> np.ndarray:
        """Unit normals pointing from the graph of F towards the axis, in meridian coordinates."""
        slope = self.prime(x)
        norm = np.sqrt(1.0 + slope**2)
        return self.seam.direction_to_meridian(slope / norm, -1.0 / norm)


def _profile_at(seam: SeamGeometry, x_r: float, y_low: float, fraction: float) -> SmoothedProfile:
    y_b = y_low + fraction * (seam.y_d - y_low)
    tiny = 1e-9 * seam.slant
    try:
        x_q = brentq(lambda s: plateau_from_left(seam, s) - y_b, tiny, x_r, xtol=ROOT_XTOL)
        x_s = brentq(lambda s: plateau_from_right(seam, s) - y_b, x_r, seam.slant - tiny, xtol=ROOT_XTOL)
    except ValueError as exc:
        raise NoAdmissibleYb(f"plateau y_b = {y_b:.12g} is not reachable: {exc}", feasible=(y_low, seam.y_d))
    return SmoothedProfile(
        seam=seam, x_r=x_r, y_r=float(seam.f1(x_r)), x_q=x_q, x_s=x_s, y_b=y_b, y_low=y_low, fraction=fraction
    )


def _passes(profile: SmoothedProfile) -> bool:
    return verify_profile(profile, points=SEARCH_POINTS, normals=SEARCH_NORMALS).passed


def _highest_passing(seam: SeamGeometry, x_r: float, y_low: float, steps: int) -> SmoothedProfile:
    """Bisect towards y_d, starting from the first passing fraction among 1/2, 1/4, ..."""
    lo = 0.5
    best = _profile_at(seam, x_r, y_low, lo)
    while not _passes(best):
        lo /= 2.0
        if lo < SEARCH_FLOOR:
            raise NoAdmissibleYb(
                "no plateau height in the feasible interval passes the profile checks", feasible=(y_low, seam.y_d)
            )
        best = _profile_at(seam, x_r, y_low, lo)
    hi = 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        candidate = _profile_at(seam, x_r, y_low, mid)
        if _passes(candidate):
            lo, best = mid, candidate
        else:
            hi = mid
    logger.debug("plateau fraction bracketed in [%.6f, %.6f]", lo, hi)
    return best


def smooth_profile(seam: SeamGeometry, fraction: float | None = None, steps: int = SEARCH_STEPS) -> SmoothedProfile:
    """Glue f1 and f2 into F with a plateau at y_b.

    Without a fraction, y_b is the highest plateau, closest to y_d, whose
    profile still passes verify_profile; the search bisects over the
    fraction of the feasible interval (y_low, y_d). A given fraction places
    y_b there directly. x_Q < x_R and x_S > x_R solve F1(x_Q) = F2(x_S) = y_b.
    """
    if fraction is not None and not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    x_r = seam.crossing()
    y_low = max(plateau_from_left(seam, x_r), plateau_from_right(seam, x_r))
    if not y_low < seam.y_d:
        raise NoAdmissibleYb(
            f"no plateau height fits between {y_low:.12g} and {seam.y_d:.12g}", feasible=(y_low, seam.y_d)
        )
    if fraction is None:
        profile = _highest_passing(seam, x_r, y_low, steps)
    else:
        profile = _profile_at(seam, x_r, y_low, fraction)
    logger.info(
        "smoothed seam: x_Q = %.6f, x_R = %.6f, x_S = %.6f, y_b = %.9f (fraction %.6f)",
        profile.x_q,
        profile.x_r,
        profile.x_s,
        profile.y_b,
        profile.fraction,
    )
    return profile


def curvature(profile: SmoothedProfile, x, piece: str = "F") -> np.ndarray:
    """Signed graph curvature y'' / (1 + y'^2)^(3/2); circle tops are negative."""
    x = np.asarray(x, dtype=float)
    seam = profile.seam
    derivatives = {
        "F": (profile.prime, profile.second),
        "F1": (profile.F1_prime, profile.F1_second),
        "F2": (profile.F2_prime, profile.F2_second),
        "f1": (seam.f1_prime, seam.f1_second),
        "f2": (seam.f2_prime, seam.f2_second),
    }
    if piece not in derivatives:
        raise ValueError(f"piece must be one of {PIECES}, got {piece!r}")
    first, second = derivatives[piece]
    return second(x) / (1.0 + first(x) ** 2) ** 1.5


# --- Verification ---


class ProfileReport(BaseModel):
    points: int
    monotone: bool
    endpoint_slope: float
    endpoint_value_error: float
    plateau_mismatch: float
    sandwich_margin: float
    curvature_margin: float
    derivative_mismatch: float
    normals: int
    normal_crossings: int
    checks: dict[str, bool] = Field(default_factory=dict)
    passed: bool


def _segment_crossings(starts: np.ndarray, ends: np.ndarray, floor: float) -> int:
    """Pairs of segments meeting at a point whose radial coordinate exceeds floor."""
    d = ends - starts
    rel = starts[None, :, :] - starts[:, None, :]
    denom = d[:, None, 0] * d[None, :, 1] - d[:, None, 1] * d[None, :, 0]
    safe = np.where(np.abs(denom) > 1e-300, denom, 1.0)
    s = (rel[..., 0] * d[None, :, 1] - rel[..., 1] * d[None, :, 0]) / safe
    u = (rel[..., 0] * d[:, None, 1] - rel[..., 1] * d[:, None, 0]) / safe
    meet = starts[:, None, :] + s[..., None] * d[:, None, :]
    hit = (np.abs(denom) > 1e-300) & (s >= 0.0) & (s <= 1.0) & (u >= 0.0) & (u <= 1.0) & (meet[..., 1] > floor)
    return int(np.count_nonzero(np.triu(hit, k=1)))


def normal_segments(profile: SmoothedProfile, count: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Inward normal segments from interior points of F down to the rotation axis."""
    x = np.linspace(0.0, profile.end, count + 2)[1:-1]
    starts = profile.meridian_curve(x)
    normals = profile.inward_normals(x)
    reach = 2.0 * profile.seam.big_radius
    falling = normals[:, 1] < -1e-15
    length = np.where(falling, -starts[:, 1] / np.where(falling, normals[:, 1], -1.0), reach)
    return starts, starts + length[:, None] * normals


def riser_scale(width: float) -> float:
    """Length over which g_sigma climbs; its logistic argument changes at rate 8 / width^2 mid-riser."""
    return min(width / 8.0, width**2 / 8.0)


def _derivative_step(profile: SmoothedProfile, x: float) -> float:
    if 0.0 < x < profile.x_q:
        return min(FD_STEP, 1e-3 * riser_scale(profile.x_q))
    if profile.x_s < x < profile.end:
        return min(FD_STEP, 1e-3 * riser_scale(profile.end - profile.x_s))
    return FD_STEP


def derivative_samples(profile: SmoothedProfile, points: int = 1000) -> np.ndarray:
    """A coarse grid plus points packed around the middle of both risers, where F' turns fastest."""
    grid = np.linspace(0.0, profile.end, points)[:: max(1, points // 100)]
    offsets = np.arange(-3, 4, dtype=float)
    left = 0.5 * profile.x_q + riser_scale(profile.x_q) * offsets
    width = profile.end - profile.x_s
    right = profile.x_s + 0.5 * width + riser_scale(width) * offsets
    return np.concatenate([grid, left, right])


def derivative_mismatch(profile: SmoothedProfile, points: int = 1000) -> float:
    """Largest |F'_fd - F'| over its tolerance; Richardson-extrapolated central differences.

    The step shrinks with the riser width and the tolerance carries the
    rounding of F over the step, 3 eps |F| / h.
    """
    worst = 0.0
    for xi in derivative_samples(profile, points):
        h = _derivative_step(profile, xi)
        if not 2 * h < xi < profile.end - 2 * h:
            continue
        values = profile(xi + h * np.array([-1.0, -0.5, 0.5, 1.0]))
        wide = (values[3] - values[0]) / (2 * h)
        narrow = (values[2] - values[1]) / h
        estimate = (4.0 * narrow - wide) / 3.0
        analytic = float(profile.prime(xi))
        rounding = 3.0 * np.finfo(float).eps * float(np.max(np.abs(values))) / h
        tol = max(1e-8, 1e-6 * abs(analytic), rounding)
        worst = max(worst, abs(estimate - analytic) / tol)
    return worst


def verify_profile(profile: SmoothedProfile, points: int = 1000, normals: int = 200) -> ProfileReport:
    seam = profile.seam
    x = np.linspace(0.0, profile.end, points)
    F = profile(x)

    left, right = x <= profile.x_r, x >= profile.x_r
    monotone = bool(np.all(np.diff(F[left]) <= 1e-13) and np.all(np.diff(F[right]) >= -1e-13))

    ends = np.array([0.0, profile.end])
    endpoint_slope = float(np.max(np.abs(profile.prime(ends))))
    endpoint_value_error = float(np.max(np.abs(profile(ends) - seam.y_d)))
    plateau_mismatch = max(
        abs(float(profile.F1(profile.x_q)) - profile.y_b), abs(float(profile.F2(profile.x_s)) - profile.y_b)
    )

    floor = np.maximum(seam.f1(x), seam.f2(x))
    sandwich_margin = float(min(np.min(seam.d(x) - F), np.min(F - floor)))

    first_arc = curvature(profile, x, "F1") - curvature(profile, x, "f1")
    on_small = x > profile.end - seam.small_radius
    second_arc = curvature(profile, x[on_small], "F2") - curvature(profile, x[on_small], "f2")
    curvature_margin = float(min(np.min(first_arc), np.min(second_arc)))

    mismatch = derivative_mismatch(profile, points)

    starts, stops = normal_segments(profile, normals)
    crossings = _segment_crossings(starts, stops, 1e-9 * seam.big_radius)

    checks = {
        "monotone": monotone,
        "endpoint_slope": endpoint_slope < SLOPE_TOL,
        "endpoint_value": endpoint_value_error < SANDWICH_TOL,
        "plateau": plateau_mismatch < 1e-10,
        "sandwich": sandwich_margin >= -SANDWICH_TOL,
        "curvature": curvature_margin >= -CURVATURE_TOL,
        "derivative": mismatch <= 1.0,
        "normals": crossings == 0,
    }
    passed = all(checks.values())
    if passed:
        logger.info("smoothing profile verified on %d points and %d normals", points, normals)
    else:
        logger.warning("smoothing profile fails: %s", ", ".join(k for k, ok in checks.items() if not ok))
    return ProfileReport(
        points=points,
        monotone=monotone,
        endpoint_slope=endpoint_slope,
        endpoint_value_error=endpoint_value_error,
        plateau_mismatch=plateau_mismatch,
        sandwich_margin=sandwich_margin,
        curvature_margin=curvature_margin,
        derivative_mismatch=mismatch,
        normals=normals,
        normal_crossings=crossings,
        checks=checks,
        passed=passed,
    )
