"""Closed-form success probabilities for grant-free random access.

A tagged UE succeeds when (a) no cochannel contender picks its preamble
and (b) its post-beamforming SINR clears the threshold.  The functions
here price that event for conjugate beamforming (CB) and zero-forcing
beamforming (ZFB) receivers, for the even-user-distribution upper bound
and its large-antenna limit, and for the single-antenna slotted-ALOHA
baseline, plus the derived load-at-target metrics (MIMO gain, gap to
the even-distribution bound).

All SINR thresholds and SNRs are linear-scale; dB conversion belongs to
the CLI boundary.  Interference-limited quantities are evaluated in the
log domain throughout: the mixture weights of the CB interference CDF
carry powers like eta**(1-K) that overflow for moderate K, and the ZFB
double sum contains factorial-sized terms that only make sense as
log-weights.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from .specfun import (
    OccupancyTable,
    binomial_pmf_row,
    regularized_upper_gamma_int,
    regularized_upper_gamma_log_row,
)

# Contributions smaller than this fraction of remaining probability mass
# are dropped; every discarded factor is <= 1, so the bound is absolute.
BINOMIAL_TAIL_EPS = 1e-12

# Occupancy weights below this are skipped inside the ZFB double sum.
# At most ~5e4 (K, S) pairs are skipped, so the absolute error stays
# below 1e-12 as well.
_OCCUPANCY_SKIP_EPS = 1e-17


class BeamformerKind(enum.Enum):
    CB = "cb"
    ZF = "zf"


@dataclass(frozen=True)
class SystemParams:
    """Scalar system parameters of one random-access slot.

    M antennas at the base station, N_a active UEs spread over C
    channels with P orthogonal preambles; gamma_th is the linear SINR
    threshold and rho_r the linear per-UE uplink SNR (receive power
    over noise power, noise normalized to 1).
    """

    M: int
    N_a: int
    C: int
    P: int
    gamma_th: float
    rho_r: float

    def __post_init__(self):
        for name in ("M", "N_a", "C", "P"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not self.gamma_th > 0:
            raise ValueError(f"gamma_th must be positive, got {self.gamma_th}")
        if not self.rho_r > 0:
            raise ValueError(f"rho_r must be positive, got {self.rho_r}")

    @property
    def eta(self) -> float:
        """Average load per channel, N_a / C."""
        return self.N_a / self.C

    def integer_eta(self) -> int:
        if self.N_a % self.C != 0:
            raise ValueError(
                f"load eta = N_a/C = {self.N_a}/{self.C} is not an integer"
            )
        return self.N_a // self.C


@dataclass(frozen=True)
class CbPdfParams:
    """Parameters of the Gamma-mixture CDF of the CB interference term.

    Definitional only; always recomputed from (M, K, gamma_th, rho_r),
    never stored.  pdf_eta is the mixture ratio (distinct from the
    per-channel load eta); lam is the interference level the SINR
    threshold maps to.
    """

    pdf_beta: float
    pdf_eta: float
    lam: float

    @classmethod
    def for_contenders(
        cls, M: int, K: int, gamma_th: float, rho_r: float
    ) -> "CbPdfParams":
        if K < 1:
            raise ValueError("the interference mixture needs K >= 1 contenders")
        root_m = math.sqrt(M)
        return cls(
            pdf_beta=root_m / (root_m + K - 1),
            pdf_eta=K / (root_m + K - 1),
            lam=M / gamma_th - 1.0 / rho_r,
        )


def cb_interference_cdf(M: int, K: int, y: float) -> float:
    """P(Y_K <= y) where Y_K is the normalized CB interference power
    accumulated over K cochannel contenders (Gamma-mixture model).
    """
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    if K == 0:
        return 1.0 if y >= 0 else 0.0
    if y <= 0:
        return 0.0
    if K == 1:
        # single contender: unit-mean exponential
        return -math.expm1(-y)
    if M < 2:
        raise ValueError("the K >= 2 interference mixture requires M >= 2")
    root_m = math.sqrt(M)
    beta = root_m / (root_m + K - 1)
    eta = K / (root_m + K - 1)
    log_eta = math.log(eta)
    c = root_m / (root_m - 1)

    head = math.exp((1 - K) * log_eta - beta * y)
    n = np.arange(K - 1)  # n = 0 .. K-2
    log_q = regularized_upper_gamma_log_row(K - 1, c * y)  # ln Q(n+1, c*y)
    log_terms = math.log1p(-eta) + (n - K + 1) * log_eta + log_q
    tail = float(np.exp(log_terms).sum())
    return min(max(1.0 - head + tail, 0.0), 1.0)


def cb_conditional_success(M: int, K: int, gamma_th: float, rho_r: float) -> float:
    """Probability the CB SINR clears gamma_th given K cochannel
    contenders with successfully estimated tagged channel.
    """
    lam = M / gamma_th - 1.0 / rho_r
    if lam < 0:
        # threshold above the interference-free ceiling M * rho_r
        return 0.0
    return cb_interference_cdf(M, K, lam)


def _truncated_binomial_sum(N_a: int, C: int, term: Callable[[int], float]) -> float:
    """sum_K B(K, N_a-1, 1/C) * term(K), truncated once the remaining
    binomial tail mass drops below BINOMIAL_TAIL_EPS (term <= 1 always).
    """
    pmf = binomial_pmf_row(N_a - 1, 1.0 / C)
    total = 0.0
    cum = 0.0
    for K, w in enumerate(pmf):
        if w > 0.0:
            total += w * term(K)
        cum += w
        if 1.0 - cum < BINOMIAL_TAIL_EPS:
            break
    return min(max(total, 0.0), 1.0)


def cb_success(params: SystemParams) -> float:
    """Success probability of the tagged UE under CB with uniform random
    channel selection: binomial mixture over the cochannel count K of
    (no tagged preamble collision) x (SINR above threshold | K).
    """
    no_collision = 1.0 - 1.0 / params.P

    def term(K: int) -> float:
        return no_collision**K * cb_conditional_success(
            params.M, K, params.gamma_th, params.rho_r
        )

    return _truncated_binomial_sum(params.N_a, params.C, term)


def _zf_conditional_from_row(
    M: int, K: int, S: int, gamma_th: float, log_q_row: np.ndarray
) -> float:
    """ZF conditional success given precomputed ln Q(m, gamma_th/rho_r)
    for m = 1..M (log_q_row index m-1); see zf_conditional_success.
    """
    if S > K:
        raise ValueError(f"require S <= K, got K={K}, S={S}")
    if S + 1 > M:
        # more beamforming constraints than antennas: the basis Gram
        # matrix is singular and the UE cannot be separated
        return 0.0
    if K == S:
        return float(math.exp(log_q_row[M - K - 1]))
    n0 = K - S
    N = M - S
    q = np.arange(N)
    log_t = math.log(gamma_th) - math.log1p(gamma_th)
    # negative-binomial weights: the residual interference of the K-S
    # unresolved contenders mixes the Poisson tail shapes
    log_w = (
        gammaln(n0 + q)
        - gammaln(q + 1)
        - gammaln(n0)
        + q * log_t
        - n0 * math.log1p(gamma_th)
    )
    total = float(np.exp(log_w + log_q_row[N - 1 - q]).sum())
    return min(max(total, 0.0), 1.0)


def zf_conditional_success(
    M: int, K: int, S: int, gamma_th: float, rho_r: float
) -> float:
    """Probability the ZFB SINR clears gamma_th given K cochannel
    contenders occupying exactly S distinct non-tagged preambles.

    With K = S every contender is perfectly separated and only thermal
    noise remains (a Poisson tail of shape M - K).  With K > S the
    residual interference of the K - S unresolved contenders enters as
    an Erlang-vs-Gamma tail probability; every term is positive and
    priced in the log domain because the factorial-sized pieces
    overflow on their own.
    """
    if S > K:
        raise ValueError(f"require S <= K, got K={K}, S={S}")
    if S + 1 > M:
        return 0.0
    row = regularized_upper_gamma_log_row(M, gamma_th / rho_r)
    return _zf_conditional_from_row(M, K, S, gamma_th, row)


def zf_success(params: SystemParams) -> float:
    """Success probability of the tagged UE under ZFB with uniform
    random channel selection: binomial mixture over K of the occupancy-
    weighted conditional SINR tail.

    The lone-UE term is kept: at K = 0 the occupancy weight of S = 0 is
    exactly 1 and the conditional reduces to the noise-only tail, so a
    single active UE gets the correct success probability.
    """
    occupancy = OccupancyTable.build(params.N_a - 1, params.P)
    log_q_row = regularized_upper_gamma_log_row(params.M, params.gamma_th / params.rho_r)

    def term(K: int) -> float:
        weights = occupancy.table[K]
        acc = 0.0
        for S in range(min(K, params.P - 1) + 1):
            w = weights[S]
            if w < _OCCUPANCY_SKIP_EPS:
                continue
            acc += w * _zf_conditional_from_row(
                params.M, K, S, params.gamma_th, log_q_row
            )
        return acc

    return _truncated_binomial_sum(params.N_a, params.C, term)


def eud_success(params: SystemParams, kind: BeamformerKind) -> float:
    """Success probability under genie even user distribution: exactly
    eta = N_a/C UEs on every channel, so the tagged UE always faces
    K = eta - 1 contenders.  Requires integer eta."""
    K = params.integer_eta() - 1
    if kind is BeamformerKind.CB:
        no_collision = (1.0 - 1.0 / params.P) ** K
        return no_collision * cb_conditional_success(
            params.M, K, params.gamma_th, params.rho_r
        )
    occupancy = OccupancyTable.build(K, params.P)
    log_q_row = regularized_upper_gamma_log_row(params.M, params.gamma_th / params.rho_r)
    acc = 0.0
    for S in range(min(K, params.P - 1) + 1):
        w = occupancy.table[K][S]
        if w < _OCCUPANCY_SKIP_EPS:
            continue
        acc += w * _zf_conditional_from_row(params.M, K, S, params.gamma_th, log_q_row)
    return min(max(acc, 0.0), 1.0)


def infinite_preamble_success(params: SystemParams, kind: BeamformerKind) -> float:
    """Success probability with an unbounded preamble pool: random user
    distribution, no preamble collisions ever, every contender
    perfectly separated (S = K for ZFB).
    """
    if kind is BeamformerKind.CB:

        def term(K: int) -> float:
            return cb_conditional_success(params.M, K, params.gamma_th, params.rho_r)

    else:
        log_q_row = regularized_upper_gamma_log_row(
            params.M, params.gamma_th / params.rho_r
        )

        def term(K: int) -> float:
            if K + 1 > params.M:
                return 0.0
            return _zf_conditional_from_row(
                params.M, K, K, params.gamma_th, log_q_row
            )

    return _truncated_binomial_sum(params.N_a, params.C, term)


def eud_limit(P: int, eta: int) -> float:
    """Large-antenna limit of the even-distribution success probability:
    only the preamble collision survives, (1 - 1/P)**(eta - 1)."""
    if P < 1:
        raise ValueError(f"P must be a positive integer, got {P}")
    if eta < 1:
        raise ValueError(f"eta must be a positive integer, got {eta}")
    return (1.0 - 1.0 / P) ** (eta - 1)


def cb_asymptotic_sinr(M: int, eta: int, rho_r: float) -> float:
    """Deterministic equivalent of the CB SINR under even distribution
    as the antenna count grows: (M/eta) * rho_r / (1 + rho_r*(eta-1)/eta).
    """
    if eta < 1:
        raise ValueError(f"eta must be a positive integer, got {eta}")
    v = rho_r / (1.0 + rho_r * (eta - 1) / eta)
    return (M / eta) * v


def single_antenna_success(N_a: int, C: int) -> float:
    """Slotted-ALOHA baseline: a single-antenna receiver needs sole
    occupancy of the chosen channel, so success is (1 - 1/C)**(N_a-1)."""
    if N_a < 1 or C < 1:
        raise ValueError("N_a and C must be positive integers")
    return (1.0 - 1.0 / C) ** (N_a - 1)


def mimo_gain(eta_m: float, eta_s: float) -> float:
    """Ratio of supportable loads at a target success probability,
    massive-MIMO over single-antenna."""
    if eta_s <= 0:
        raise ValueError("eta_s must be positive")
    return eta_m / eta_s


def gap_to_eud(eta_e: float, eta_r: float) -> float:
    """Relative shortfall of random user distribution against the even-
    distribution bound, (eta_e - eta_r) / eta_r (fraction, not %)."""
    if eta_r <= 0:
        raise ValueError("eta_r must be positive")
    return (eta_e - eta_r) / eta_r


def eta_at_target_from_samples(
    etas: Sequence[float],
    values: Sequence[float],
    target: float,
    *,
    nonmonotone_tol: float | Sequence[float] = 1e-9,
) -> float:
    """Largest load eta with success >= target on a sampled curve.

    The curve is expected nonincreasing; any adjacent increase beyond
    nonmonotone_tol (scalar, or one tolerance per adjacent pair for
    noisy Monte Carlo curves) signals a mis-specified sweep.  Crossings
    are located by interpolating log(success) linearly between the two
    bracketing samples -- success curves are near-geometric in eta --
    falling back to linear interpolation when a bracket value is 0.
    Returns the relevant endpoint when the target is never crossed.
    """
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=float)
    if etas.ndim != 1 or etas.size < 1 or etas.shape != values.shape:
        raise ValueError("etas and values must be matching 1-D samples")
    if etas.size > 1 and not np.all(np.diff(etas) > 0):
        raise ValueError("etas must be strictly increasing")
    if not 0.0 < target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target}")

    rises = np.diff(values)
    tol = np.broadcast_to(np.asarray(nonmonotone_tol, dtype=float), rises.shape)
    worst = int(np.argmax(rises - tol)) if rises.size else 0
    if rises.size and rises[worst] > tol[worst]:
        raise ValueError(
            "curve is not nonincreasing: success rises by "
            f"{rises[worst]:.3g} between eta={etas[worst]} and eta={etas[worst + 1]}"
        )

    above = values >= target
    if not above[0]:
        return float(etas[0])
    if above[-1]:
        return float(etas[-1])
    i = int(np.max(np.nonzero(above)[0]))  # largest eta still at/above target
    e0, e1 = etas[i], etas[i + 1]
    v0, v1 = values[i], values[i + 1]
    if v0 > 0 and v1 > 0 and v0 > v1:
        frac = (math.log(target) - math.log(v0)) / (math.log(v1) - math.log(v0))
    elif v0 > v1:
        frac = (v0 - target) / (v0 - v1)
    else:
        frac = 0.0
    return float(e0 + frac * (e1 - e0))


def eta_at_target(
    curve: Callable[[float], float],
    target: float,
    eta_min: float,
    eta_max: float,
    *,
    step: float = 1.0,
    nonmonotone_tol: float = 1e-9,
) -> float:
    """Largest eta in [eta_min, eta_max] with curve(eta) >= target.

    curve is evaluated on the arithmetic grid eta_min, eta_min + step,
    ...; see eta_at_target_from_samples for crossing interpolation and
    the monotonicity check.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if eta_max < eta_min:
        raise ValueError("empty eta range")
    n_steps = int(round((eta_max - eta_min) / step))
    etas = eta_min + step * np.arange(n_steps + 1)
    if etas[-1] < eta_max - 1e-12:
        etas = np.append(etas, eta_max)
    values = [curve(float(e)) for e in etas]
    return eta_at_target_from_samples(
        etas, values, target, nonmonotone_tol=nonmonotone_tol
    )
