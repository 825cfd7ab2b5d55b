"""Closed-form calculators used to reason about regularized evolution.

Rank convention used throughout: rank 1 is the worst member of the
population and rank P the best, so ``P - rank`` counts the strictly better
members.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from statistics import NormalDist

_STD_NORMAL = NormalDist()

# exact rational evaluation up to this population size, log-gamma beyond
EXACT_LIMIT = 5000


@dataclass(frozen=True)
class HypergeomParams:
    N: int  # population total
    K: int  # marked members
    n: int  # draws

    def __post_init__(self):
        if min(self.N, self.K, self.n) < 0 or self.K > self.N or self.n > self.N:
            raise ValueError(f"invalid hypergeometric parameters {self}")


def hypergeom_pmf_exact(params: HypergeomParams, k: int) -> Fraction:
    N, K, n = params.N, params.K, params.n
    if k < 0 or k > K or n - k > N - K or k > n:
        return Fraction(0)
    return Fraction(math.comb(K, k) * math.comb(N - K, n - k), math.comb(N, n))


def _log_comb(a: int, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def hypergeom_pmf(params: HypergeomParams, k: int) -> float:
    """P(X = k) for X ~ H(N, K, n); zero outside the support."""
    if params.N <= EXACT_LIMIT:
        return float(hypergeom_pmf_exact(params, k))
    N, K, n = params.N, params.K, params.n
    if k < 0 or k > K or n - k > N - K or k > n:
        return 0.0
    return math.exp(_log_comb(K, k) + _log_comb(N - K, n - k) - _log_comb(N, n))


def transfer_prob_bound(P: int, rank: int, s: int) -> float:
    """Upper bound on the chance a rank-``rank`` member is picked as parent in one draw.

    Equals the probability that a size-``s`` sample contains none of the
    ``P - rank`` strictly better members, i.e. C(rank, s) / C(P, s).
    """
    if not 1 <= rank <= P or not 1 <= s <= P:
        raise ValueError(f"need 1 <= rank <= P and 1 <= s <= P, got P={P}, rank={rank}, s={s}")
    if rank < s:
        return 0.0
    return hypergeom_pmf(HypergeomParams(P, P - rank, s), 0)


def birthday_threshold(c: float, k: int, p: float) -> float:
    """Sample size at which some of ``c`` equally likely values repeats ``k`` times w.p. ``p``."""
    if c < 1 or k < 2 or not 0 < p < 1:
        raise ValueError(f"need c >= 1, k >= 2, 0 < p < 1; got c={c}, k={k}, p={p}")
    log_val = (k - 1) * math.log(c) + math.lgamma(k + 1) + math.log(-math.log1p(-p))
    return math.exp(log_val / k)


def normal_order_stat(r: int, w: int) -> float:
    """Approximate expected r-th smallest of w standard normal draws (Blom)."""
    if not 1 <= r <= w:
        raise ValueError(f"need 1 <= r <= w, got r={r}, w={w}")
    arg = (r - math.pi / 8) / (w - math.pi / 4 + 1)
    if not 0 < arg < 1:
        raise ValueError(f"inverse normal argument {arg} outside (0, 1)")
    return _STD_NORMAL.inv_cdf(arg)


def quanta_delay_bound(s_wait: int, w: int, mu: float, sigma: float) -> float:
    """Average extra wait (seconds) caused by waiting for ``s_wait`` of ``w`` workers.

    ``mu`` does not enter the bound; it is accepted so callers can pass the
    whole duration model.
    """
    if not 1 <= s_wait <= w:
        raise ValueError(f"need 1 <= s_wait <= w, got s_wait={s_wait}, w={w}")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0 or s_wait == w:
        return 0.0
    return sigma * abs(normal_order_stat(s_wait, w) - normal_order_stat(w, w))


def expected_evals_until_donor(P: int, s: int) -> float:
    """Mean number of parent draws until the current best is picked: P / s."""
    if not 1 <= s <= P:
        raise ValueError(f"need 1 <= s <= P, got P={P}, s={s}")
    return P / s
