import logging
import math
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from pydantic import BaseModel, model_validator
from scipy.integrate import quad, trapezoid
from scipy.special import comb, expit

from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import AmplitudeTooLarge

logger = logging.getLogger(__name__)

JOINT_STEPS = (1e-3, 5e-4, 2.5e-4)
JOINT_ORDERS = (1, 2, 3, 4, 5, 6)
JOINT_TOL = 1e-6


class BumpKind(Enum):
    PHI = "phi"
    G_SIGMA = "g_sigma"
    H_RHO = "h_rho"
    BUMP_H = "bump_h"


# --- Elementary functions ---


def phi(t):
    """e^(-1/t) for t > 0, 0 otherwise."""
    t = np.asarray(t, dtype=float)
    positive = t > 0.0
    safe = np.where(positive, t, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def phi_prime(t):
    t = np.asarray(t, dtype=float)
    positive = t > 0.0
    safe = np.where(positive, t, 1.0)
    return np.where(positive, np.exp(-1.0 / safe) / safe**2, 0.0)


def _check_width(name: str, value: float) -> None:
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value}")


def g_sigma(t, sigma: float):
    """Smooth riser: 0 for t <= 0, 1 for t >= sigma, g(sigma/2) = 1/2.

    phi(t) / (phi(t) + phi(sigma - t)) is evaluated as a logistic of
    1/(sigma - t) - 1/t so that narrow risers do not divide 0 by 0.
    """
    _check_width("sigma", sigma)
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < sigma)
    u = np.where(inside, t, 0.5 * sigma)
    value = expit(1.0 / (sigma - u) - 1.0 / u)
    return np.where(inside, value, np.where(t >= sigma, 1.0, 0.0))


def g_sigma_prime(t, sigma: float):
    _check_width("sigma", sigma)
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < sigma)
    u = np.where(inside, t, 0.5 * sigma)
    g = expit(1.0 / (sigma - u) - 1.0 / u)
    return np.where(inside, g * (1.0 - g) * (1.0 / u**2 + 1.0 / (sigma - u) ** 2), 0.0)


def h_rho(t, rho: float):
    """Smooth fall: 1 for t <= 0, 0 for t >= rho."""
    _check_width("rho", rho)
    return g_sigma(rho - np.asarray(t, dtype=float), rho)


def _check_bump(c: float, delta: float) -> None:
    if c <= 0.0:
        raise ValueError(f"bump amplitude must be positive, got {c}")
    if c >= 1.0:
        raise AmplitudeTooLarge(f"bump amplitude {c} must stay below 1 to keep the Randers norm positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"bump half-width must lie in (0, 1), got {delta}")


def bump_h(t, c: float, delta: float):
    """Even bump c * g_1((t + delta)/delta) * g_1((delta - t)/delta), zero for |t| >= delta."""
    _check_bump(c, delta)
    t = np.asarray(t, dtype=float)
    return c * (g_sigma((t + delta) / delta, 1.0) * g_sigma((delta - t) / delta, 1.0))


def bump_h_prime(t, c: float, delta: float):
    _check_bump(c, delta)
    t = np.asarray(t, dtype=float)
    left, right = (t + delta) / delta, (delta - t) / delta
    return (c / delta) * (
        g_sigma_prime(left, 1.0) * g_sigma(right, 1.0) - g_sigma(left, 1.0) * g_sigma_prime(right, 1.0)
    )


class BumpProfile(BaseModel):
    kind: BumpKind
    sigma: float | None = None
    rho: float | None = None
    c: float | None = None
    delta: float | None = None

    @model_validator(mode="after")
    def validate_parameters(self) -> "BumpProfile":
        if self.kind == BumpKind.G_SIGMA:
            _check_width("sigma", self.sigma if self.sigma is not None else 0.0)
        elif self.kind == BumpKind.H_RHO:
            _check_width("rho", self.rho if self.rho is not None else 0.0)
        elif self.kind == BumpKind.BUMP_H:
            if self.c is None or self.delta is None:
                raise ValueError("bump_h needs both c and delta")
            _check_bump(self.c, self.delta)
        return self

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == BumpKind.BUMP_H:
            return -self.delta, self.delta
        if self.kind == BumpKind.G_SIGMA:
            return 0.0, math.inf
        if self.kind == BumpKind.H_RHO:
            return -math.inf, self.rho
        return 0.0, math.inf

    @property
    def joints(self) -> list[float]:
        if self.kind == BumpKind.G_SIGMA:
            return [0.0, self.sigma]
        if self.kind == BumpKind.H_RHO:
            return [0.0, self.rho]
        if self.kind == BumpKind.BUMP_H:
            return [-self.delta, self.delta]
        return [0.0]

    def __call__(self, t):
        if self.kind == BumpKind.PHI:
            return phi(t)
        if self.kind == BumpKind.G_SIGMA:
            return g_sigma(t, self.sigma)
        if self.kind == BumpKind.H_RHO:
            return h_rho(t, self.rho)
        return bump_h(t, self.c, self.delta)

    def scaled(self, factor: float) -> "BumpProfile":
        if self.kind != BumpKind.BUMP_H:
            raise ValueError(f"only bump_h profiles carry an amplitude, got {self.kind.value}")
        return self.model_copy(update={"c": self.c * factor})


def bump(c: float, delta: float) -> BumpProfile:
    return BumpProfile(kind=BumpKind.BUMP_H, c=c, delta=delta)


# --- Numerical checks ---


class JointReport(BaseModel):
    joint: float
    max_mismatch: float
    worst_order: int
    worst_step: float
    passed: bool


def _one_sided_quotient(func: Callable, x: float, order: int, step: float, side: int) -> float:
    offsets = x + side * step * np.arange(order + 1)
    values = np.asarray(func(offsets), dtype=float)
    weights = np.array([(-1) ** (order - i) * comb(order, i, exact=True) for i in range(order + 1)], dtype=float)
    return float(side**order * weights @ values / step**order)


def joint_smoothness(
    func: Callable,
    joint: float,
    orders: Sequence[int] = JOINT_ORDERS,
    steps: Sequence[float] = JOINT_STEPS,
    tol: float = JOINT_TOL,
) -> JointReport:
    """Compare left and right difference quotients of each order at a gluing point."""
    worst, worst_order, worst_step = 0.0, orders[0], steps[0]
    for step in steps:
        for order in orders:
            left = _one_sided_quotient(func, joint, order, step, -1)
            right = _one_sided_quotient(func, joint, order, step, 1)
            mismatch = abs(left - right)
            if mismatch > worst:
                worst, worst_order, worst_step = mismatch, order, step
    report = JointReport(
        joint=joint, max_mismatch=worst, worst_order=worst_order, worst_step=worst_step, passed=worst < tol
    )
    logger.debug("joint %.6g: max quotient mismatch %.3e (order %d)", joint, worst, worst_order)
    return report


class BumpIntegral(BaseModel):
    value: float
    trapezoid: float
    discrepancy: float
    agreed: bool


def bump_integral(
    profile: Callable, a: float, b: float, samples: int = 200_001, tol: float | None = None
) -> BumpIntegral:
    """Integral of profile over [a, b] by adaptive quadrature, cross-checked by a fine trapezoid rule."""
    if b <= a:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    tol = Config.quad_tol() if tol is None else tol
    breakpoints = None
    if isinstance(profile, BumpProfile):
        breakpoints = [j for j in profile.joints if a < j < b] or None
    value, _ = quad(lambda t: float(profile(t)), a, b, epsabs=1e-14, epsrel=1e-13, limit=200, points=breakpoints)
    grid = np.linspace(a, b, samples)
    trap = float(trapezoid(np.asarray(profile(grid), dtype=float), grid))
    discrepancy = abs(value - trap)
    return BumpIntegral(value=value, trapezoid=trap, discrepancy=discrepancy, agreed=discrepancy < tol)
