import logging
import math
from functools import lru_cache
from typing import Callable

import numpy as np
from pydantic import BaseModel

from fractal_cut_locus.algo.params import ConstructionParams
from fractal_cut_locus.errors import DegenerateAlpha, DivergentSeries

logger = logging.getLogger(__name__)

MAX_TERMS = 20_000


class SeriesValue(BaseModel):
    value: float
    bound: float


class TreeLength(BaseModel):
    value: float | None
    bound: float | None
    divergent: bool


class SequenceTables(BaseModel):
    t: list[float]
    l: list[float]
    r: list[SeriesValue] | None  # r[0] holds r_{-1}
    alpha: list[float] | None

    def radius(self, i: int) -> float:
        if self.r is None:
            raise DivergentSeries("radii are undefined when k = 2")
        return self.r[i + 1].value


def _check_index(i: int, lowest: int = 0) -> None:
    if i < lowest:
        raise ValueError(f"index must be >= {lowest}, got {i}")


def theta(i: int, phi: float) -> float:
    return phi * 3.0 ** (-i)


def t_seq(i: int, params: ConstructionParams) -> float:
    _check_index(i)
    return 3.0 ** ((1 - params.k) * i)


def l_seq(i: int, params: ConstructionParams) -> float:
    # t_i / sin(phi 3^-i) written through sinc so the quotient never underflows
    _check_index(i)
    x = theta(i, params.phi)
    return 3.0 ** ((2 - params.k) * i) / (params.phi * float(np.sinc(x / math.pi)))


def limit_ratio_for(params: ConstructionParams) -> float:
    return 3.0 ** (2 - params.k)


def _r_term(nu: int, params: ConstructionParams) -> float:
    return l_seq(nu, params) * math.cos(theta(nu, params.phi))


def tail_sum(
    term: Callable[[int], float], start: int, tol: float, limit_ratio: float
) -> tuple[float, float]:
    """Sum term(start) + term(start+1) + ... for a positive series.

    The term ratio of every series summed here is monotone and tends to
    limit_ratio < 1, so max(current ratio, limit_ratio) bounds every later
    ratio and following / (1 - that) bounds the remainder. Summation stops
    once the bound is below tol * partial sum.
    """
    total = 0.0
    current = term(start)
    for nu in range(start, start + MAX_TERMS):
        total += current
        following = term(nu + 1)
        if following == 0.0:
            return total, 0.0
        ratio = max(following / current, limit_ratio)
        if ratio >= 1.0:
            raise DivergentSeries(f"term ratio {ratio} >= 1 at index {nu}")
        bound = following / (1.0 - ratio)
        if bound <= tol * total:
            logger.debug("series from %d truncated after %d terms, bound %.3e", start, nu - start + 1, bound)
            return total, bound
        current = following
    raise DivergentSeries(f"series from {start} did not reach tolerance {tol} in {MAX_TERMS} terms")


@lru_cache(maxsize=8192)
def _r_cached(params: ConstructionParams, i: int) -> tuple[float, float]:
    return tail_sum(lambda nu: _r_term(nu, params), i + 1, params.tail_tol, limit_ratio_for(params))


def r_seq(i: int, params: ConstructionParams) -> SeriesValue:
    _check_index(i, lowest=-1)
    if params.k == 2:
        raise DivergentSeries(
            f"r_{i} diverges for k = 2: its terms tend to 1/phi = {1.0 / params.phi:.6f}, not 0"
        )
    value, bound = _r_cached(params, i)
    return SeriesValue(value=value, bound=bound)


def alpha_seq(i: int, params: ConstructionParams) -> float:
    _check_index(i)
    if params.k == 2:
        raise DegenerateAlpha("alpha_0 = 3^(k-2) / (3^(k-2) - 1) has a zero denominator at k = 2")
    base = 3.0 ** (params.k - 2)
    return base / (base - 1.0) * 3.0 ** ((1 - params.k) * i)


def total_tree_length(params: ConstructionParams) -> TreeLength:
    if params.k == 2:
        logger.warning("total tree length diverges for k = 2")
        return TreeLength(value=None, bound=None, divergent=True)
    value, bound = tail_sum(lambda i: l_seq(i, params), 0, params.tail_tol, limit_ratio_for(params))
    return TreeLength(value=value, bound=bound, divergent=False)


def sequence_tables(params: ConstructionParams, count: int) -> SequenceTables:
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    convergent = params.k >= 3
    return SequenceTables(
        t=[t_seq(i, params) for i in range(count)],
        l=[l_seq(i, params) for i in range(count)],
        r=[r_seq(i, params) for i in range(-1, count)] if convergent else None,
        alpha=[alpha_seq(i, params) for i in range(count)] if convergent else None,
    )
