"""Monte Carlo link-level simulator of one grant-free RA slot.

Each trial replays the slot from the tagged UE's point of view: draw
how many contenders landed on its channel, draw everyone's preamble
pick, and -- if the tagged preamble survived uncontested -- generate
small-scale fading, estimate the per-preamble channel basis, beamform,
and compare the SINR against the threshold.

Scoring uses the expected-power SINR: data symbols and noise enter
through their average powers (unit-power symbols, noise power times
the combiner norm), which is the quantity the closed forms price and
sidesteps picking a symbol alphabet.

Reproducibility contract: trial t of a run with seed s draws from a
Philox4x64 counter-based stream keyed by (s, t) and nothing else, so
estimates are bit-identical no matter how trials are chunked, ordered,
or spread across workers.  The batched engine only vectorizes the
arithmetic after the draws; `run_trial` is the plain reference path
and produces the same outcomes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .analytic import BeamformerKind, SystemParams
from .specfun import binomial_pmf_row

# Gram matrices whose eigenvalue spread exceeds this are treated as not
# invertible by a real receiver: the trial counts as a failure instead
# of aborting the run.
ZF_CONDITION_LIMIT = 1e12

_SQRT_HALF = math.sqrt(0.5)


class UserMode(enum.Enum):
    """How the cochannel contender count of the tagged UE arises."""

    RANDOM = "random"  # everyone picks one of C channels uniformly
    EUD = "eud"  # genie places exactly N_a/C UEs per channel
    INFINITE_P = "infinite_p"  # random channels, unbounded preamble pool


@dataclass(frozen=True)
class IidRayleigh:
    """Independent Rayleigh fading: unit-variance complex Gaussian entries."""

    def label(self) -> str:
        return "iid"


@dataclass(frozen=True)
class CorrelatedRayleigh:
    """Spatially correlated Rayleigh fading over a uniform linear array.

    Per UE: an azimuth drawn uniformly over the sector, num_paths
    arrival angles uniform within +-angle_spread/2 of it, and the
    channel formed as the steering matrix times an i.i.d. complex
    Gaussian path vector.  num_paths=None means half the antenna count
    (rounded down), recomputed per M.
    """

    angle_spread_deg: float = 20.0
    azimuth_low_deg: float = -60.0
    azimuth_high_deg: float = 60.0
    antenna_spacing: float = 0.5  # in wavelengths
    num_paths: int | None = None

    def __post_init__(self):
        if not self.angle_spread_deg > 0:
            raise ValueError("angle_spread_deg must be positive")
        if not self.azimuth_low_deg < self.azimuth_high_deg:
            raise ValueError("require azimuth_low_deg < azimuth_high_deg")
        if not self.antenna_spacing > 0:
            raise ValueError("antenna_spacing must be positive")
        if self.num_paths is not None and self.num_paths < 1:
            raise ValueError("num_paths must be a positive integer")

    def paths_for(self, M: int) -> int:
        return self.num_paths if self.num_paths is not None else max(M // 2, 1)

    def label(self) -> str:
        return "correlated"


ChannelModel = Union[IidRayleigh, CorrelatedRayleigh]


@dataclass(frozen=True)
class PreambleAssignment:
    """Outcome of the preamble lottery among the tagged UE's cochannel
    contenders.

    groups holds the contender column indices (1-based, column 0 is the
    tagged UE) keyed by distinct non-tagged preamble, in increasing
    preamble order; colliders_with_tag are the contenders that picked
    the tagged preamble.  Together they partition the K contenders.
    """

    tagged_preamble: int
    groups: tuple[np.ndarray, ...]
    colliders_with_tag: np.ndarray

    @property
    def S(self) -> int:
        return len(self.groups)

    @property
    def tagged_collided(self) -> bool:
        return self.colliders_with_tag.size > 0


@dataclass(frozen=True)
class TrialOutcome:
    """One trial from the tagged UE's perspective.  sinr is 0.0 when the
    trial failed before an SINR existed (preamble collision or a basis
    the receiver could not invert)."""

    K: int
    S: int
    tagged_collided: bool
    sinr: float
    success: bool

    def __post_init__(self):
        if self.tagged_collided and self.success:
            raise ValueError("collided trials cannot succeed")
        if self.sinr < 0 or not math.isfinite(self.sinr):
            raise ValueError("sinr must be finite and nonnegative")


@dataclass(frozen=True)
class McEstimate:
    """Aggregated success-rate estimate with binomial standard error."""

    p_hat: float
    stderr: float
    trials: int
    success_count: int
    seed: int

    @classmethod
    def from_counts(cls, success_count: int, trials: int, seed: int) -> "McEstimate":
        p = success_count / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials, success_count, seed)


@dataclass(frozen=True)
class DiagnosticSample:
    """Conditioned realizations of the three analyzed functionals: the
    CB interference level, the ZF post-combining signal strength, and
    the ZF residual-interference term."""

    y_k: float
    u_1: float
    z_val: float


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    """Independent counter-based stream for one trial, keyed by
    (seed, trial index).  Philox4x64; documented and kept fixed."""
    key = np.array([seed, trial_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _TrialStreams:
    """Re-keys one Philox instance per trial instead of constructing a
    fresh generator; produces draws identical to trial_rng."""

    def __init__(self):
        self._bg = np.random.Philox(key=np.zeros(2, dtype=np.uint64))
        self._gen = np.random.Generator(self._bg)
        self._state = self._bg.state

    def get(self, seed: int, trial_index: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["key"][0] = seed
        st["state"]["key"][1] = trial_index
        st["buffer_pos"] = 4  # discard any buffered block
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bg.state = st
        return self._gen


@lru_cache(maxsize=64)
def _cochannel_cdf(N_a: int, C: int) -> np.ndarray:
    cdf = np.cumsum(binomial_pmf_row(N_a - 1, 1.0 / C))
    cdf[-1] = max(cdf[-1], 1.0)
    return cdf


def draw_cochannel_count(
    rng: np.random.Generator, N_a: int, C: int, mode: UserMode
) -> int:
    """Number of contenders sharing the tagged UE's channel.

    RANDOM (and INFINITE_P): Binomial(N_a - 1, 1/C), sampled by
    inverting a precomputed CDF with a single uniform so the stream
    layout never depends on the library's binomial algorithm.
    EUD: deterministic N_a/C - 1 (requires integer load).
    """
    if N_a < 1 or C < 1:
        raise ValueError("N_a and C must be positive integers")
    if mode is UserMode.EUD:
        if N_a % C != 0:
            raise ValueError(
                f"even user distribution needs integer load, got N_a/C = {N_a}/{C}"
            )
        return N_a // C - 1
    if N_a == 1:
        return 0
    cdf = _cochannel_cdf(N_a, C)
    u = rng.random()
    return int(min(np.searchsorted(cdf, u, side="left"), N_a - 1))


def assign_preambles(
    rng: np.random.Generator, K: int, P: int, infinite_p: bool = False
) -> PreambleAssignment:
    """Uniform i.i.d. preamble picks for the tagged UE and K contenders.

    infinite_p models an unbounded pool: all picks distinct by fiat
    (S = K, no collision, no randomness consumed).
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    if P < 1:
        raise ValueError("P must be a positive integer")
    if infinite_p:
        groups = tuple(np.array([i]) for i in range(1, K + 1))
        return PreambleAssignment(0, groups, np.empty(0, dtype=np.int64))
    picks = rng.integers(0, P, size=K + 1)
    tagged = int(picks[0])
    contenders = picks[1:]
    colliders = np.nonzero(contenders == tagged)[0] + 1
    foreign = np.nonzero(contenders != tagged)[0]
    values = contenders[foreign]
    order = np.argsort(values, kind="stable")
    values, foreign = values[order], foreign[order]
    boundaries = np.nonzero(np.diff(values))[0] + 1
    groups = tuple(idx + 1 for idx in np.split(foreign, boundaries)) if foreign.size else ()
    return PreambleAssignment(tagged, groups, colliders)


def _draw_iid(rng: np.random.Generator, M: int, count: int) -> np.ndarray:
    z = rng.standard_normal((M, count, 2))
    return (z[..., 0] + 1j * z[..., 1]) * _SQRT_HALF


def _draw_correlated(
    rng: np.random.Generator, model: CorrelatedRayleigh, M: int, count: int
):
    """Random material for `count` correlated-fading UEs: per-path unit
    phasors of the steering progression and the path gains."""
    Q = model.paths_for(M)
    span = model.azimuth_high_deg - model.azimuth_low_deg
    azimuth = model.azimuth_low_deg + span * rng.random(count)
    offsets = model.angle_spread_deg * (rng.random((count, Q)) - 0.5)
    angles = np.radians(azimuth[:, None] + offsets)
    base = np.exp(-2j * np.pi * model.antenna_spacing * np.cos(angles))
    z = rng.standard_normal((count, Q, 2))
    v = (z[..., 0] + 1j * z[..., 1]) * (_SQRT_HALF / math.sqrt(Q))
    return base, v


def _synthesize_correlated(base: np.ndarray, v: np.ndarray, M: int) -> np.ndarray:
    """Channel columns h[:, u] = sum_q v[u, q] * base[u, q]**m across
    antenna index m, via a running product (no M x paths intermediate)."""
    W = v.copy()
    H = np.empty((M, base.shape[0]), dtype=np.complex128)
    H[0] = W.sum(axis=1)
    for m in range(1, M):
        W *= base
        H[m] = W.sum(axis=1)
    return H


def gen_channels(
    rng: np.random.Generator, model: ChannelModel, M: int, count: int
) -> np.ndarray:
    """M x count matrix of small-scale fading columns, one per UE
    (column 0 is the tagged UE by convention).  Large-scale fading is
    absorbed by perfect power control, so E||h||^2 = M either way."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if isinstance(model, IidRayleigh):
        return _draw_iid(rng, M, count)
    base, v = _draw_correlated(rng, model, M, count)
    return _synthesize_correlated(base, v, M)


def estimate_basis(H: np.ndarray, assignment: PreambleAssignment) -> np.ndarray:
    """Noiseless channel estimates visible to the receiver: the tagged
    UE's column followed by one summed column per collision group."""
    if assignment.tagged_collided:
        raise ValueError("no basis exists when the tagged preamble collided")
    cols = [H[:, 0]]
    for members in assignment.groups:
        # sequential (ufunc) reduction so the batched engine, which sums
        # groups with add.reduceat, accumulates in the identical order
        cols.append(np.add.reduce(H[:, members], axis=1))
    return np.column_stack(cols)


def cb_sinr(H: np.ndarray, rho_r: float) -> float:
    """Expected-power SINR of the tagged UE under conjugate combining."""
    h1 = H[:, 0]
    g = h1.conj() @ H
    noise = float(np.real(h1.conj() @ h1))  # E|h1^H n|^2 with unit noise power
    if noise == 0.0:
        return 0.0
    signal = abs(g[0]) ** 2
    interference = float((np.abs(g[1:]) ** 2).sum())
    return rho_r * signal / (noise + rho_r * interference)


def zf_sinr(H: np.ndarray, basis: np.ndarray, rho_r: float) -> float:
    """Expected-power SINR of the tagged UE under zero-forcing combining.

    The combiner is the first row of the basis pseudo-inverse, obtained
    through the Hermitian Gram system; it nulls every estimated column,
    so interference survives only from contenders hidden inside
    multi-UE collision groups.  Returns NaN when the Gram matrix is too
    ill-conditioned to invert (the caller scores the trial as failed).
    """
    M, S1 = basis.shape
    if S1 > M:
        raise ValueError(f"basis has {S1} columns but only {M} antennas")
    G = basis.conj().T @ basis
    w = np.linalg.eigvalsh(G)
    if w[0] <= 0.0 or w[-1] > ZF_CONDITION_LIMIT * w[0]:
        return float("nan")
    e1 = np.zeros(S1, dtype=np.complex128)
    e1[0] = 1.0
    x = np.linalg.solve(G, e1)
    b1 = (basis @ x).conj()
    z = b1 @ H
    b_norm2 = float(np.real(b1 @ b1.conj()))
    signal = abs(z[0]) ** 2
    interference = float((np.abs(z[1:]) ** 2).sum())
    return rho_r * signal / (b_norm2 + rho_r * interference)


def run_trial(
    params: SystemParams,
    model: ChannelModel,
    kind: BeamformerKind,
    mode: UserMode,
    seed: int,
    trial_index: int,
) -> TrialOutcome:
    """Reference single-trial path; the batched engine reproduces it."""
    rng = trial_rng(seed, trial_index)
    K = draw_cochannel_count(rng, params.N_a, params.C, mode)
    assignment = assign_preambles(
        rng, K, params.P, infinite_p=(mode is UserMode.INFINITE_P)
    )
    if assignment.tagged_collided:
        return TrialOutcome(K, assignment.S, True, 0.0, False)
    H = gen_channels(rng, model, params.M, K + 1)
    if kind is BeamformerKind.CB:
        sinr = cb_sinr(H, params.rho_r)
    else:
        if assignment.S + 1 > params.M:
            return TrialOutcome(K, assignment.S, False, 0.0, False)
        sinr = zf_sinr(H, estimate_basis(H, assignment), params.rho_r)
    if not math.isfinite(sinr):
        return TrialOutcome(K, assignment.S, False, 0.0, False)
    return TrialOutcome(K, assignment.S, False, sinr, sinr >= params.gamma_th)


def _batched_cb_successes(stacks, gamma_th: float, rho_r: float) -> int:
    """CB success count over buckets of equal-K trials."""
    total = 0
    for H in stacks:
        h1 = H[:, :, 0]
        g = np.einsum("bm,bmk->bk", h1.conj(), H)
        noise = np.einsum("bm,bm->b", h1, h1.conj()).real
        signal = np.abs(g[:, 0]) ** 2
        interference = (np.abs(g[:, 1:]) ** 2).sum(axis=1)
        sinr = rho_r * signal / (noise + rho_r * interference)
        total += int((sinr >= gamma_th).sum())
    return total


def _batched_zf_successes(stacks, gamma_th: float, rho_r: float) -> int:
    """ZF success count over buckets of equal-(K, S) trials."""
    total = 0
    for H, A in stacks:
        B = A.shape[0]
        G = np.einsum("bms,bmt->bst", A.conj(), A)
        w = np.linalg.eigvalsh(G)
        bad = (w[:, 0] <= 0.0) | (w[:, -1] > ZF_CONDITION_LIMIT * w[:, 0])
        if bad.any():
            # keep the batched solve well-posed; results are discarded
            G = G.copy()
            G[bad] = np.eye(A.shape[2])
        e1 = np.zeros((B, A.shape[2]), dtype=np.complex128)
        e1[:, 0] = 1.0
        x = np.linalg.solve(G, e1[..., None])[..., 0]
        b1 = np.einsum("bms,bs->bm", A, x).conj()
        z = np.einsum("bm,bmk->bk", b1, H)
        b_norm2 = np.einsum("bm,bm->b", b1, b1.conj()).real
        signal = np.abs(z[:, 0]) ** 2
        interference = (np.abs(z[:, 1:]) ** 2).sum(axis=1)
        sinr = rho_r * signal / (b_norm2 + rho_r * interference)
        total += int(((sinr >= gamma_th) & ~bad).sum())
    return total


def _grouping(contenders: np.ndarray, tagged: int):
    """(order, starts) describing the collision groups: contender
    positions sorted by preamble value, plus the offset where each
    distinct preamble's run begins.  None if the tagged preamble
    collided."""
    if contenders.size and np.any(contenders == tagged):
        return None
    order = np.argsort(contenders, kind="stable")
    values = contenders[order]
    if values.size:
        starts = np.flatnonzero(np.r_[True, values[1:] != values[:-1]])
    else:
        starts = np.empty(0, dtype=np.int64)
    return order, starts


def _run_chunk(
    params: SystemParams,
    model: ChannelModel,
    kind: BeamformerKind,
    mode: UserMode,
    seed: int,
    start: int,
    stop: int,
    streams: "_TrialStreams",
) -> int:
    """Success count for trials [start, stop)."""
    infinite_p = mode is UserMode.INFINITE_P
    zf = kind is BeamformerKind.ZF
    if mode is UserMode.EUD:
        fixed_k = params.N_a // params.C - 1
        cdf = None
    else:
        fixed_k = None
        cdf = _cochannel_cdf(params.N_a, params.C) if params.N_a > 1 else None
    survivors = []  # (K, order, starts, channel material)
    for t in range(start, stop):
        rng = streams.get(seed, t)
        if fixed_k is not None:
            K = fixed_k
        elif cdf is None:
            K = 0
        else:
            K = int(min(np.searchsorted(cdf, rng.random(), side="left"), params.N_a - 1))
        if infinite_p:
            order = np.arange(K)
            starts = np.arange(K)
        else:
            picks = rng.integers(0, params.P, size=K + 1)
            grouping = _grouping(picks[1:], int(picks[0]))
            if grouping is None:
                continue  # tagged preamble collided
            order, starts = grouping
        if zf and starts.size + 1 > params.M:
            continue  # more constraints than antennas: receiver stuck
        if isinstance(model, IidRayleigh):
            material = _draw_iid(rng, params.M, K + 1)
        else:
            material = _draw_correlated(rng, model, params.M, K + 1)
        survivors.append((K, order, starts, material))

    if not survivors:
        return 0

    if isinstance(model, IidRayleigh):
        channels = [m for (_, _, _, m) in survivors]
    else:
        base = np.concatenate([b for (_, _, _, (b, _)) in survivors], axis=0)
        v = np.concatenate([vv for (_, _, _, (_, vv)) in survivors], axis=0)
        joint = _synthesize_correlated(base, v, params.M)
        channels = []
        offset = 0
        for K, _, _, _ in survivors:
            channels.append(joint[:, offset : offset + K + 1])
            offset += K + 1

    if kind is BeamformerKind.CB:
        buckets: dict[int, list[np.ndarray]] = {}
        for (K, _, _, _), H in zip(survivors, channels):
            buckets.setdefault(K, []).append(H)
        stacks = [np.stack(hs) for hs in buckets.values()]
        return _batched_cb_successes(stacks, params.gamma_th, params.rho_r)

    zf_buckets: dict[tuple[int, int], list[tuple[np.ndarray, np.ndarray]]] = {}
    for (K, order, starts, _), H in zip(survivors, channels):
        if starts.size:
            grouped = np.add.reduceat(H[:, order + 1], starts, axis=1)
            A = np.concatenate([H[:, :1], grouped], axis=1)
        else:
            A = H[:, :1]
        zf_buckets.setdefault((K, starts.size), []).append((H, A))
    stacks = [
        (np.stack([h for h, _ in pairs]), np.stack([a for _, a in pairs]))
        for pairs in zf_buckets.values()
    ]
    return _batched_zf_successes(stacks, params.gamma_th, params.rho_r)


def run_trials(
    params: SystemParams,
    model: ChannelModel,
    kind: BeamformerKind,
    mode: UserMode,
    trials: int,
    seed: int,
    *,
    chunk: int = 512,
) -> McEstimate:
    """Monte Carlo estimate of the tagged UE's success probability.

    Bit-identical for a given (params, model, kind, mode, trials, seed)
    regardless of chunking or parallel execution; see the module
    docstring for the stream layout.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode is UserMode.EUD and params.N_a % params.C != 0:
        raise ValueError(
            f"even user distribution needs integer load, got N_a/C = "
            f"{params.N_a}/{params.C}"
        )
    successes = 0
    streams = _TrialStreams()
    for start in range(0, trials, chunk):
        successes += _run_chunk(
            params, model, kind, mode, seed, start, min(start + chunk, trials), streams
        )
    return McEstimate.from_counts(successes, trials, seed)


def run_single_antenna_trials(
    N_a: int, C: int, trials: int, seed: int
) -> McEstimate:
    """Slotted-ALOHA baseline: with one antenna the tagged UE succeeds
    only when its channel has no other occupant at all."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if N_a < 1 or C < 1:
        raise ValueError("N_a and C must be positive integers")
    successes = 0
    streams = _TrialStreams()
    p_alone = _cochannel_cdf(N_a, C)[0] if N_a > 1 else 1.0
    for t in range(trials):
        rng = streams.get(seed, t)
        if N_a == 1 or rng.random() <= p_alone:
            successes += 1
    return McEstimate.from_counts(successes, trials, seed)


def _even_groups(K: int, S: int) -> tuple[np.ndarray, ...]:
    """K contenders split into S groups with sizes as even as possible."""
    if S == 0:
        if K != 0:
            raise ValueError("K >= 1 contenders cannot form S = 0 groups")
        return ()
    size, extra = divmod(K, S)
    groups = []
    next_member = 1
    for s in range(S):
        width = size + (1 if s < extra else 0)
        groups.append(np.arange(next_member, next_member + width))
        next_member += width
    return tuple(groups)


def collect_diagnostics(
    params: SystemParams,
    model: ChannelModel,
    kind: BeamformerKind,
    K: int,
    S: int,
    samples: int,
    seed: int,
) -> list[DiagnosticSample]:
    """Conditioned realizations for distribution checks: force K
    contenders grouped into S collision groups of near-equal size and
    record, per sample, the CB interference level Y, the ZF signal
    strength U (inverse first diagonal of the basis Gram inverse), and
    the residual-interference functional Z built from each group's
    non-representative members (representative = lowest index; all
    three are recorded whatever `kind` says).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if S > K:
        raise ValueError(f"require S <= K, got K={K}, S={S}")
    if S + 1 > params.M:
        raise ValueError(f"S + 1 = {S + 1} beamforming constraints exceed M = {params.M}")
    if K >= 1 and S == 0:
        raise ValueError("K >= 1 contenders cannot occupy S = 0 preambles")
    groups = _even_groups(K, S)
    assignment = PreambleAssignment(0, groups, np.empty(0, dtype=np.int64))
    excess = (
        np.concatenate([g[1:] for g in groups]) if K > S else np.empty(0, dtype=np.int64)
    )
    out = []
    for i in range(samples):
        rng = trial_rng(seed, i)
        H = gen_channels(rng, model, params.M, K + 1)
        h1 = H[:, 0]
        y = float((np.abs(h1.conj() @ H[:, 1:]) ** 2).sum() / params.M) if K else 0.0
        A = estimate_basis(H, assignment)
        G = A.conj().T @ A
        e1 = np.zeros(S + 1, dtype=np.complex128)
        e1[0] = 1.0
        x = np.linalg.solve(G, e1)
        u1 = 1.0 / float(np.real(x[0]))
        if excess.size:
            b1 = (A @ x).conj()
            b1_unit = b1 / np.linalg.norm(b1)
            z = float(abs(math.sqrt(2.0) * (b1_unit @ H[:, excess].sum(axis=1))) ** 2)
        else:
            z = 0.0
        out.append(DiagnosticSample(y, u1, z))
    return out
