import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from itertools import product

import numpy as np
from pydantic import BaseModel
from scipy.stats import linregress

from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.algo.sequences import r_seq, tail_sum
from fractal_cut_locus.config import Config
from fractal_cut_locus.errors import DivergentSeries

logger = logging.getLogger(__name__)

TREND_LEVELS = 6
TREND_EXPONENT = 0.5


class Trend(Enum):
    VANISHING = "vanishing"
    BOUNDED = "bounded"
    DIVERGING = "diverging"


class ZetaCell(BaseModel):
    m: int
    r: int
    numerator: float
    step: float
    ratio: float
    binomial_ratio: float


class TrendFit(BaseModel):
    r: int
    exponent: float
    residual: float
    trend: Trend
    supremum: float


class DifferentiabilityReport(BaseModel):
    k: int
    phi: float
    epsilon: float
    prefactor: float
    closed_form_bound: float
    limit: float
    cells: list[ZetaCell]
    fits: list[TrendFit]
    boundary_at_k: bool
    bounded_within: bool

    def table(self) -> list[list[float]]:
        return [[c.m, c.r, c.ratio, c.binomial_ratio] for c in self.cells]


def _check_regime(params: ConstructionParams) -> None:
    if params.k == 2:
        raise DivergentSeries("the finite-difference bound needs the radii r_m, which diverge for k = 2")


def zeta_numerator(m: int, params: ConstructionParams) -> float:
    """sum_{i >= m} 3^(-(k-1) i) tan(phi 3^-i / 2): distance from the level-m node to the end of its spine."""
    _check_regime(params)
    term = lambda i: 3.0 ** (-(params.k - 1) * i) * math.tan(0.5 * params.phi * 3.0**-i)
    value, _ = tail_sum(term, m, params.tail_tol, 3.0 ** (-params.k))
    return value


def zeta_step(m: int, params: ConstructionParams) -> float:
    """h = phi 3^-(m-1) (r_{m-1} + epsilon)."""
    _check_regime(params)
    return params.phi * 3.0 ** (-(m - 1)) * (r_seq(m - 1, params).value + params.epsilon)


def zeta_ratio(m: int, r: int, params: ConstructionParams, prefactor: float | None = None) -> ZetaCell:
    """Upper bound prefactor * N_m / h^r on the order-r difference quotient of zeta at level m.

    prefactor defaults to 2^(k-1); binomial_ratio uses 2^(r-1) instead.
    """
    if m < 1:
        raise ValueError(f"level m must be >= 1, got {m}")
    if r < 1:
        raise ValueError(f"difference order r must be >= 1, got {r}")
    _check_regime(params)
    prefactor = 2.0 ** (params.k - 1) if prefactor is None else prefactor
    numerator = zeta_numerator(m, params)
    step = zeta_step(m, params)
    bare = numerator / step**r
    return ZetaCell(
        m=m, r=r, numerator=numerator, step=step, ratio=prefactor * bare, binomial_ratio=2.0 ** (r - 1) * bare
    )


def closed_form_bound(params: ConstructionParams) -> float:
    """(1/2) 3^-k phi^(1-k) epsilon^-k."""
    k = params.k
    return 0.5 * 3.0**-k * params.phi ** (1 - k) * params.epsilon**-k


def ratio_limit(params: ConstructionParams, prefactor: float | None = None) -> float:
    """Limit in m of zeta_ratio(m, k): the closed form times prefactor / (1 - 3^-k)."""
    prefactor = 2.0 ** (params.k - 1) if prefactor is None else prefactor
    return prefactor * closed_form_bound(params) / (1.0 - 3.0 ** (-params.k))


def expected_trend(r: int, k: int) -> Trend:
    if r < k:
        return Trend.VANISHING
    if r == k:
        return Trend.BOUNDED
    return Trend.DIVERGING


def _fit(r: int, cells: list[ZetaCell], levels: int) -> TrendFit:
    tail = cells[-levels:]
    m = np.array([c.m for c in tail], dtype=float)
    y = np.log(np.array([c.ratio for c in tail]))
    fit = linregress(m, y)
    residual = float(np.max(np.abs(y - (fit.intercept + fit.slope * m))))
    exponent = float(fit.slope / math.log(3.0))
    if exponent < -TREND_EXPONENT:
        trend = Trend.VANISHING
    elif exponent > TREND_EXPONENT:
        trend = Trend.DIVERGING
    else:
        trend = Trend.BOUNDED
    return TrendFit(r=r, exponent=exponent, residual=residual, trend=trend, supremum=max(c.ratio for c in cells))


def differentiability_probe(
    params: ConstructionParams,
    r_max: int | None = None,
    m_max: int = 16,
    prefactor: float | None = None,
    threads: int | None = None,
) -> DifferentiabilityReport:
    """Table of zeta_ratio over m = 1..m_max, r = 1..r_max with a geometric trend per order.

    Each order is classified by the exponent e of ratio ~ 3^(e m) over the
    last levels: consecutive levels differ by 3^(r-k), so the boundary
    between vanishing and diverging sits at r = k.
    """
    _check_regime(params)
    r_max = params.k + 1 if r_max is None else r_max
    if r_max < 1:
        raise ValueError(f"r_max must be >= 1, got {r_max}")
    if m_max < TREND_LEVELS:
        raise ValueError(f"m_max must be >= {TREND_LEVELS} for the trend fit, got {m_max}")
    threads = Config.threads() if threads is None else threads
    prefactor = 2.0 ** (params.k - 1) if prefactor is None else prefactor

    grid = list(product(range(1, r_max + 1), range(1, m_max + 1)))
    with ThreadPoolExecutor(max_workers=threads) as executor:
        cells = list(executor.map(lambda rm: zeta_ratio(rm[1], rm[0], params, prefactor), grid))

    fits = [_fit(r, [c for c in cells if c.r == r], TREND_LEVELS) for r in range(1, r_max + 1)]
    boundary_at_k = all(f.trend == expected_trend(f.r, params.k) for f in fits)
    limit = ratio_limit(params, prefactor)
    bounded = [f for f in fits if f.r == params.k]
    bounded_within = all(f.supremum <= limit * (1.0 + 1e-3) for f in bounded)
    for f in fits:
        logger.info("order %d: exponent %.4f, %s", f.r, f.exponent, f.trend.value)
    if not boundary_at_k:
        logger.warning("differentiability boundary is not at r = k = %d", params.k)
    return DifferentiabilityReport(
        k=params.k,
        phi=params.phi,
        epsilon=params.epsilon,
        prefactor=prefactor,
        closed_form_bound=closed_form_bound(params),
        limit=limit,
        cells=cells,
        fits=fits,
        boundary_at_k=boundary_at_k,
        bounded_within=bounded_within,
    )
