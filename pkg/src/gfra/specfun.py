"""Numerically stable combinatorial and special-function kernels.

Everything downstream (closed-form success probabilities, collision
statistics) is assembled from three primitives kept here: log-domain
binomial weights, the regularized upper incomplete gamma function at
integer shape (equivalently a Poisson tail), and the occupancy
probability that K independent preamble picks avoid a tagged preamble
while using exactly S distinct others.

The occupancy probability has a textbook expression through Stirling
numbers of the second kind, but that form overflows long before the
operating range of interest (P**K and the Stirling numbers are
astronomical, and the Stirling inclusion-exclusion sum alternates in
sign).  The production path is therefore an all-nonnegative dynamic
program over selection counts; the Stirling route survives only as an
exact arbitrary-precision oracle for small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln


def log_factorial(n: int) -> float:
    """ln(n!) for nonnegative integer n."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    return math.lgamma(n + 1)


def binomial_pmf(k: int, n: int, p: float) -> float:
    """P(X = k) for X ~ Binomial(n, p), computed in the log domain.

    Stays finite and accurate for n up to ~1e5 where the naive
    product of factorials would overflow.
    """
    if not 0 <= k <= n:
        raise ValueError(f"require 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        return 1.0 if k == 0 else 0.0
    if p == 1.0:
        return 1.0 if k == n else 0.0
    log_pmf = (
        log_factorial(n)
        - log_factorial(k)
        - log_factorial(n - k)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    return math.exp(log_pmf)


def binomial_pmf_row(n: int, p: float) -> np.ndarray:
    """All binomial probabilities, pmf[k] = P(X = k) for k = 0..n."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    k = np.arange(n + 1)
    if p == 0.0 or p == 1.0:
        row = np.zeros(n + 1)
        row[n if p == 1.0 else 0] = 1.0
        return row
    log_row = (
        gammaln(n + 1)
        - gammaln(k + 1)
        - gammaln(n - k + 1)
        + k * math.log(p)
        + (n - k) * math.log1p(-p)
    )
    return np.exp(log_row)


def regularized_upper_gamma_log_row(s_max: int, x: float) -> np.ndarray:
    """ln Q(s, x) for every integer shape s = 1..s_max (index s-1).

    Q(s, x) = Gamma(s, x) / Gamma(s) is the Poisson(x) CDF evaluated at
    s - 1; the row is a running log-sum-exp of the Poisson log-masses,
    so one call prices every shape up to s_max.
    """
    if s_max < 1:
        raise ValueError(f"s_max must be >= 1, got {s_max}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return np.zeros(s_max)
    k = np.arange(s_max)
    log_terms = k * math.log(x) - gammaln(k + 1)
    acc = np.logaddexp.accumulate(log_terms)
    # Q <= 1 exactly; rounding in the accumulation may push marginally past it.
    return np.minimum(acc - x, 0.0)


def regularized_upper_gamma_int(s: int, x: float) -> float:
    """Q(s, x) = Gamma(s, x) / Gamma(s) for integer shape s >= 1.

    Evaluated as exp(-x) * sum_{k<s} x**k / k! with each term formed in
    the log domain and the terms combined by exact summation; exact 1.0
    at x = 0 and monotone nonincreasing in x up to term roundoff.
    """
    if s < 1:
        raise ValueError(f"s must be a positive integer, got {s}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return 1.0
    k = np.arange(s)
    log_terms = k * math.log(x) - x - gammaln(k + 1)
    return min(math.fsum(np.exp(log_terms)), 1.0)


def stirling2_exact(K: int, S: int) -> int:
    """Stirling number of the second kind {K, S} as an exact integer.

    Number of partitions of a K-set into S nonempty blocks, by the
    recurrence {K,S} = S*{K-1,S} + {K-1,S-1}.  Oracle use only; cost
    grows quadratically and the values explode, so keep K small.
    """
    if K < 0 or S < 0:
        raise ValueError("K and S must be nonnegative")
    if S > K:
        return 0
    if K == 0:
        return 1 if S == 0 else 0
    if S == 0:
        return 0
    prev = [1] + [0] * S  # row K=0
    for k in range(1, K + 1):
        row = [0] * (S + 1)
        for s in range(1, min(k, S) + 1):
            row[s] = s * prev[s] + prev[s - 1]
        prev = row
    return prev[S]


def _occupancy_rows(K_max: int, P: int, one, p_stay, p_new):
    """Shared DP kernel; the arithmetic type is whatever `one` is."""
    zero = one * 0
    width = min(K_max, P - 1) + 1
    table = [[zero] * width for _ in range(K_max + 1)]
    table[0][0] = one
    for k in range(1, K_max + 1):
        prev = table[k - 1]
        for s in range(0, min(k, P - 1) + 1):
            acc = prev[s] * p_stay(s)
            if s >= 1:
                acc += prev[s - 1] * p_new(s)
            table[k][s] = acc
    return table


@dataclass(frozen=True)
class OccupancyTable:
    """Probabilities q(k, s) that k contenders, each picking uniformly
    from P preambles, all avoid one tagged preamble and jointly use
    exactly s distinct others.

    Row sums over s give (1 - 1/P)**k, the total probability that the
    tagged preamble is never chosen.  Entries with s > min(k, P-1) are
    structurally zero and stored as such.
    """

    max_contenders: int
    pool_size: int
    table: np.ndarray  # shape (K_max+1, min(K_max, P-1)+1)

    @classmethod
    def build(cls, max_contenders: int, pool_size: int) -> "OccupancyTable":
        if max_contenders < 0:
            raise ValueError("max_contenders must be nonnegative")
        if pool_size < 1:
            raise ValueError("pool_size must be a positive integer")
        P = pool_size
        rows = _occupancy_rows(
            max_contenders, P, 1.0, lambda s: s / P, lambda s: (P - s) / P
        )
        return cls(max_contenders, pool_size, np.array(rows))

    def prob(self, k: int, s: int) -> float:
        if not 0 <= k <= self.max_contenders:
            raise ValueError(f"k out of range: {k}")
        if s > min(k, self.pool_size - 1):
            raise ValueError(f"s={s} exceeds min(k, P-1) for k={k}")
        return float(self.table[k, s])


def occupancy_table_exact(K_max: int, P: int) -> list[list[Fraction]]:
    """The occupancy DP run in exact rational arithmetic (oracle path)."""
    if K_max < 0 or P < 1:
        raise ValueError("require K_max >= 0 and P >= 1")
    return _occupancy_rows(
        K_max, P, Fraction(1), lambda s: Fraction(s, P), lambda s: Fraction(P - s, P)
    )


def occupancy_no_tag_collision(K: int, S: int, P: int) -> float:
    """Probability that K uniform picks from P preambles avoid the tagged
    preamble and occupy exactly S distinct non-tagged preambles.

    Equals C(P-1, S) * S! * {K, S} / P**K, but evaluated through the
    stable nonnegative recurrence
        q(k, s) = q(k-1, s) * s/P + q(k-1, s-1) * (P-s)/P,  q(0, 0) = 1.
    """
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if P < 1:
        raise ValueError(f"P must be a positive integer, got {P}")
    if not 0 <= S <= min(K, P - 1):
        raise ValueError(f"require 0 <= S <= min(K, P-1), got K={K}, S={S}, P={P}")
    return OccupancyTable.build(K, P).prob(K, S)
