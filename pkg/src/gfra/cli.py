"""Command-line front end: parameter sweeps, analytic/Monte-Carlo
comparison, paper-style reproduction targets, CSV emission.

Subcommands
-----------
analytic    evaluate the closed forms over a sweep
simulate    run the Monte Carlo simulator over a sweep
compare     both, plus a max-gap summary and optional tolerance gate
reproduce   canned sweeps behind the reference figures/tables
diagnose    conditioned distribution samples + KS statistics

All dB quantities are converted to linear scale here and nowhere else.
CSV goes to stdout (or --out); progress and summaries go to stderr so
stdout stays machine-parseable.  Exit codes: 0 success, 1 experiment or
tolerance failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import enum
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytic, mcsim
from .analytic import BeamformerKind, SystemParams
from .mcsim import ChannelModel, CorrelatedRayleigh, IidRayleigh, McEstimate, UserMode


class ConfigError(Exception):
    """Invalid configuration or flags (exit code 2)."""


class ExperimentFailure(Exception):
    """A grid point failed or a tolerance was exceeded (exit code 1)."""


class SweepMode(enum.Enum):
    RANDOM = "random"
    EUD = "eud"
    INFINITE_P = "infinite_p"
    EUD_LIMIT = "eud_limit"
    SINGLE_ANTENNA = "single_antenna"
    SINGLE_ANTENNA_EUD = "single_antenna_eud"


_USER_MODES = {
    SweepMode.RANDOM: UserMode.RANDOM,
    SweepMode.EUD: UserMode.EUD,
    SweepMode.INFINITE_P: UserMode.INFINITE_P,
}

RESULT_COLUMNS = [
    "M",
    "C",
    "P",
    "N_a",
    "eta",
    "rho_db",
    "gamma_th_db",
    "beamformer",
    "channel_model",
    "mode",
    "analytic",
    "mc_estimate",
    "mc_stderr",
    "trials",
    "seed",
]

DEFAULT_TRIALS = 100_000
DEFAULT_TRIALS_CORRELATED = 20_000
TABLE_STAGE1_TRIALS = 2_000
TABLE_TARGET_SUCCESS = 0.95
REPRODUCE_C = 10
REPRODUCE_GAMMA_TH_DB = 8.0

# Reference values the table targets are compared against (reported,
# never asserted here; the acceptance suite owns the tolerances).
TABLE3_REFERENCE = {100: 35.8, 200: 99.6, 400: 120.3}
TABLE4_REFERENCE = {1: 19.17, 50: 0.68, 100: 0.47, 200: 0.24, 400: 0.16}


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: a base parameter set, an axis, and the evaluation modes."""

    M: int = 200
    C: int = 10
    P: int = 256
    gamma_th_db: float = 8.0
    rho_db: float = 0.0
    eta: float = 4.0  # base load, used when the axis is rho_db
    axis: str = "load_eta"
    axis_values: tuple[float, ...] = tuple(float(e) for e in range(1, 11))
    beamformer: BeamformerKind = BeamformerKind.CB
    channel: ChannelModel = field(default_factory=IidRayleigh)
    modes: tuple[SweepMode, ...] = (SweepMode.RANDOM,)
    trials: int = 10_000
    seed: int = 1
    run_analytic: bool = True
    run_mc: bool = True

    def validate(self) -> None:
        if self.axis not in ("load_eta", "rho_db"):
            raise ConfigError(f"unknown axis {self.axis!r}")
        if not self.axis_values:
            raise ConfigError("axis_values must be nonempty")
        if any(b >= a for a, b in zip(self.axis_values[1:], self.axis_values)):
            raise ConfigError("axis_values must be strictly increasing")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for name in ("M", "C", "P"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        etas = self.axis_values if self.axis == "load_eta" else (self.eta,)
        for eta in etas:
            n_a = eta * self.C
            if abs(n_a - round(n_a)) > 1e-9 or round(n_a) < 1:
                raise ConfigError(
                    f"load eta={eta} with C={self.C} gives non-integer N_a"
                )
        if self.axis == "load_eta" and (
            SweepMode.EUD in self.modes or SweepMode.EUD_LIMIT in self.modes
        ):
            for eta in self.axis_values:
                if abs(eta - round(eta)) > 1e-9:
                    raise ConfigError(
                        f"EUD modes need integer loads, got eta={eta}"
                    )


@dataclass(frozen=True)
class GridPoint:
    mode: SweepMode
    eta: float
    rho_db: float
    params: SystemParams


@dataclass
class ResultRow:
    point: GridPoint
    channel: ChannelModel
    beamformer: BeamformerKind
    analytic_value: Optional[float]
    estimate: Optional[McEstimate]
    trials: int
    seed: int

    def as_record(self) -> list[str]:
        p = self.point.params
        single = self.point.mode in (
            SweepMode.SINGLE_ANTENNA,
            SweepMode.SINGLE_ANTENNA_EUD,
        )
        est = self.estimate
        return [
            str(1 if single else p.M),
            str(p.C),
            str(p.P),
            str(p.N_a),
            _fmt(self.point.eta),
            _fmt(self.point.rho_db),
            _fmt(linear_to_db(p.gamma_th)),
            self.beamformer.value,
            self.channel.label(),
            self.point.mode.value,
            _fmt(self.analytic_value),
            _fmt(est.p_hat if est else None),
            _fmt(est.stderr if est else None),
            str(est.trials) if est else "",
            str(self.seed),
        ]


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    return format(float(x), ".12g")


def grid_points(spec: SweepSpec) -> list[GridPoint]:
    points = []
    for mode in spec.modes:
        for value in spec.axis_values:
            if spec.axis == "load_eta":
                eta, rho_db = float(value), spec.rho_db
            else:
                eta, rho_db = spec.eta, float(value)
            params = SystemParams(
                M=spec.M,
                N_a=int(round(eta * spec.C)),
                C=spec.C,
                P=spec.P,
                gamma_th=db_to_linear(spec.gamma_th_db),
                rho_r=db_to_linear(rho_db),
            )
            points.append(GridPoint(mode, eta, rho_db, params))
    return points


def analytic_value(point: GridPoint, spec: SweepSpec) -> Optional[float]:
    """Closed form for one grid point, or None when no closed form
    applies (the CB/ZF analysis assumes independent Rayleigh fading)."""
    mode, params = point.mode, point.params
    if mode is SweepMode.SINGLE_ANTENNA:
        return analytic.single_antenna_success(params.N_a, params.C)
    if mode is SweepMode.SINGLE_ANTENNA_EUD:
        # with exactly eta UEs per channel a single-antenna receiver
        # succeeds only when it is alone on the channel
        return 1.0 if point.eta <= 1.0 else 0.0
    if mode is SweepMode.EUD_LIMIT:
        eta = point.eta
        if abs(eta - round(eta)) > 1e-9:
            raise ExperimentFailure(f"eud_limit needs integer load, got eta={eta}")
        return analytic.eud_limit(params.P, int(round(eta)))
    if isinstance(spec.channel, CorrelatedRayleigh):
        return None
    kind = spec.beamformer
    if mode is SweepMode.RANDOM:
        fn = analytic.cb_success if kind is BeamformerKind.CB else analytic.zf_success
        return fn(params)
    if mode is SweepMode.EUD:
        try:
            return analytic.eud_success(params, kind)
        except ValueError as exc:
            raise ExperimentFailure(str(exc)) from exc
    if mode is SweepMode.INFINITE_P:
        return analytic.infinite_preamble_success(params, kind)
    raise ConfigError(f"unhandled mode {mode}")


def mc_job(point: GridPoint, spec: SweepSpec, trials: int, seed: int):
    """Picklable (fn, args) pair for the Monte Carlo half of a point, or
    None for analytic-only modes."""
    if point.mode in (SweepMode.EUD_LIMIT, SweepMode.SINGLE_ANTENNA_EUD):
        return None
    if point.mode is SweepMode.SINGLE_ANTENNA:
        p = point.params
        return (mcsim.run_single_antenna_trials, (p.N_a, p.C, trials, seed))
    user_mode = _USER_MODES[point.mode]
    if user_mode is UserMode.EUD and point.params.N_a % point.params.C != 0:
        raise ExperimentFailure(
            f"EUD needs integer load, got eta={point.eta}"
        )
    return (
        mcsim.run_trials,
        (point.params, spec.channel, spec.beamformer, user_mode, trials, seed),
    )


def _run_job(job):
    fn, args = job
    return fn(*args)


def compute_rows(
    spec: SweepSpec, threads: int = 1, progress: bool = True
) -> tuple[list[ResultRow], list[str]]:
    """Evaluate the whole grid; returns rows in grid order plus a
    manifest of per-point failures (empty on full success)."""
    points = grid_points(spec)
    manifest: list[str] = []
    analytic_vals: list[Optional[float]] = []
    jobs: list = []
    for point in points:
        value = None
        job = None
        try:
            if spec.run_analytic:
                value = analytic_value(point, spec)
            if spec.run_mc:
                job = mc_job(point, spec, spec.trials, spec.seed)
        except ExperimentFailure as exc:
            manifest.append(
                f"{point.mode.value} eta={point.eta:g} rho_db={point.rho_db:g}: {exc}"
            )
        analytic_vals.append(value)
        jobs.append(job)

    estimates: list[Optional[McEstimate]] = [None] * len(points)
    pending = [(i, job) for i, job in enumerate(jobs) if job is not None]
    if pending and threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for (i, _), est in zip(
                pending, pool.map(_run_job, [job for _, job in pending])
            ):
                estimates[i] = est
                if progress:
                    print(f"  mc point {i + 1}/{len(points)} done", file=sys.stderr)
    else:
        for i, job in pending:
            estimates[i] = _run_job(job)
            if progress:
                print(f"  mc point {i + 1}/{len(points)} done", file=sys.stderr)

    rows = []
    for point, value, est in zip(points, analytic_vals, estimates):
        if value is None and est is None:
            continue  # failed or nothing requested for this point
        rows.append(
            ResultRow(
                point=point,
                channel=spec.channel,
                beamformer=spec.beamformer,
                analytic_value=value,
                estimate=est,
                trials=spec.trials,
                seed=spec.seed,
            )
        )
    return rows, manifest


def write_rows(rows: Sequence[ResultRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.as_record())


def _open_out(out: Optional[str]):
    if out is None or out == "-":
        return sys.stdout, False
    path = Path(out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline=""), True


# ---------------------------------------------------------------------------
# configuration plumbing


_CONFIG_KEYS = {
    "M",
    "C",
    "P",
    "gamma_th_db",
    "rho_db",
    "eta",
    "axis",
    "axis_values",
    "beamformer",
    "channel",
    "modes",
    "trials",
    "seed",
    "run_analytic",
    "run_mc",
    "tolerance",
    "threads",
}

_CHANNEL_KEYS = {
    "model",
    "angle_spread_deg",
    "azimuth_low_deg",
    "azimuth_high_deg",
    "antenna_spacing",
    "num_paths",
}


def _channel_from_config(cfg) -> ChannelModel:
    if isinstance(cfg, str):
        cfg = {"model": cfg}
    if not isinstance(cfg, dict) or "model" not in cfg:
        raise ConfigError("channel must be a name or an object with a 'model' key")
    unknown = set(cfg) - _CHANNEL_KEYS
    if unknown:
        raise ConfigError(f"unknown channel keys: {sorted(unknown)}")
    model = cfg["model"]
    if model == "iid":
        return IidRayleigh()
    if model == "correlated":
        kwargs = {k: v for k, v in cfg.items() if k != "model"}
        try:
            return CorrelatedRayleigh(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown channel model {model!r}")


def _parse_modes(raw) -> tuple[SweepMode, ...]:
    if isinstance(raw, str):
        raw = [m.strip() for m in raw.split(",") if m.strip()]
    try:
        return tuple(SweepMode(m) for m in raw)
    except ValueError as exc:
        raise ConfigError(f"unknown mode in {raw!r}") from exc


def _parse_axis_values(raw) -> tuple[float, ...]:
    if isinstance(raw, str):
        raw = [v.strip() for v in raw.split(",") if v.strip()]
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad axis_values {raw!r}") from exc


def build_spec(args: argparse.Namespace) -> tuple[SweepSpec, float | None, int]:
    """Merge config file (if any) with CLI flags; flags win."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def pick(flag_name, cfg_name, default):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        if cfg_name in cfg:
            return cfg[cfg_name]
        return default

    base = SweepSpec()
    try:
        beamformer = BeamformerKind(pick("beamformer", "beamformer", base.beamformer.value))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    spec = SweepSpec(
        M=int(pick("antennas", "M", base.M)),
        C=int(pick("num_channels", "C", base.C)),
        P=int(pick("preambles", "P", base.P)),
        gamma_th_db=float(pick("gamma_th_db", "gamma_th_db", base.gamma_th_db)),
        rho_db=float(pick("rho_db", "rho_db", base.rho_db)),
        eta=float(pick("eta", "eta", base.eta)),
        axis=pick("axis", "axis", base.axis),
        axis_values=_parse_axis_values(
            pick("axis_values", "axis_values", list(base.axis_values))
        ),
        beamformer=beamformer,
        channel=_channel_from_config(pick("channel", "channel", "iid")),
        modes=_parse_modes(pick("modes", "modes", [m.value for m in base.modes])),
        trials=int(pick("trials", "trials", base.trials)),
        seed=int(pick("seed", "seed", base.seed)),
    )
    spec.validate()
    tolerance = pick("tolerance", "tolerance", None)
    tolerance = float(tolerance) if tolerance is not None else None
    threads = int(pick("threads", "threads", 1))
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    return spec, tolerance, threads


# ---------------------------------------------------------------------------
# subcommands


def cmd_analytic(args) -> int:
    spec, _, threads = build_spec(args)
    spec = replace(spec, run_analytic=True, run_mc=False)
    rows, manifest = compute_rows(spec, threads=threads, progress=False)
    stream, close = _open_out(args.out)
    try:
        write_rows(rows, stream)
    finally:
        if close:
            stream.close()
    return _finish(manifest)


def cmd_simulate(args) -> int:
    spec, _, threads = build_spec(args)
    spec = replace(spec, run_analytic=False, run_mc=True)
    rows, manifest = compute_rows(spec, threads=threads)
    stream, close = _open_out(args.out)
    try:
        write_rows(rows, stream)
    finally:
        if close:
            stream.close()
    return _finish(manifest)


def cmd_compare(args) -> int:
    spec, tolerance, threads = build_spec(args)
    spec = replace(spec, run_analytic=True, run_mc=True)
    rows, manifest = compute_rows(spec, threads=threads)
    stream, close = _open_out(args.out)
    try:
        write_rows(rows, stream)
    finally:
        if close:
            stream.close()
    gaps = [
        abs(r.analytic_value - r.estimate.p_hat)
        for r in rows
        if r.analytic_value is not None and r.estimate is not None
    ]
    if gaps:
        max_gap = max(gaps)
        print(
            f"compare: max |analytic - mc| = {max_gap:.6f} over {len(gaps)} points",
            file=sys.stderr,
        )
    else:
        max_gap = None
        print("compare: no points had both analytic and mc values", file=sys.stderr)
    code = _finish(manifest)
    if tolerance is not None and max_gap is not None and max_gap > tolerance:
        print(
            f"compare: max gap {max_gap:.6f} exceeds tolerance {tolerance:g}",
            file=sys.stderr,
        )
        return 1
    return code


def _finish(manifest: list[str]) -> int:
    if manifest:
        print("failed grid points:", file=sys.stderr)
        for line in manifest:
            print(f"  {line}", file=sys.stderr)
        return 1
    return 0


def cmd_diagnose(args) -> int:
    M, K, S = args.antennas, args.contenders, args.groups
    params = SystemParams(
        M=M, N_a=max(K + 1, 1), C=1, P=max(S + 1, 1),
        gamma_th=db_to_linear(args.gamma_th_db), rho_r=db_to_linear(args.rho_db),
    )
    channel = _channel_from_config(args.channel or "iid")
    try:
        samples = mcsim.collect_diagnostics(
            params, channel, BeamformerKind.ZF, K, S, args.samples, args.seed
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    stream, close = _open_out(args.out)
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["sample_index", "y_k", "u_1", "z_val"])
        for i, s in enumerate(samples):
            writer.writerow([str(i), _fmt(s.y_k), _fmt(s.u_1), _fmt(s.z_val)])
    finally:
        if close:
            stream.close()

    from scipy import stats

    u = np.array([s.u_1 for s in samples])
    y = np.array([s.y_k for s in samples])
    z = np.array([s.z_val for s in samples])
    ks_u = stats.ks_1samp(u, stats.gamma(a=M - S).cdf).statistic
    print(f"diagnose: KS(u_1 vs Erlang({M - S},1)) = {ks_u:.5f}", file=sys.stderr)
    if K >= 1:
        ks_y = stats.ks_1samp(
            y, lambda t: np.vectorize(analytic.cb_interference_cdf)(M, K, t)
        ).statistic
        print(f"diagnose: KS(y_k vs mixture cdf, K={K}) = {ks_y:.5f}", file=sys.stderr)
    if K > S:
        ks_z = stats.ks_1samp(z, stats.gamma(a=K - S).cdf).statistic
        print(
            f"diagnose: KS(z vs Gamma({K - S},1)) = {ks_z:.5f} "
            "(reference is the independent-term approximation the closed "
            "form uses; the coherent functional need not follow it)",
            file=sys.stderr,
        )
    else:
        print(f"diagnose: z identically zero fraction = {np.mean(z == 0.0):.4f}",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# reproduce targets


def _spec_rho_axis(beamformer, channel, M, P, eta, trials, seed, modes, rho_values):
    return SweepSpec(
        M=M, C=REPRODUCE_C, P=P,
        gamma_th_db=REPRODUCE_GAMMA_TH_DB, rho_db=0.0, eta=eta,
        axis="rho_db", axis_values=tuple(rho_values),
        beamformer=beamformer, channel=channel, modes=modes,
        trials=trials, seed=seed,
    )


def _spec_eta_axis(beamformer, channel, M, P, rho_db, trials, seed, modes, etas):
    return SweepSpec(
        M=M, C=REPRODUCE_C, P=P,
        gamma_th_db=REPRODUCE_GAMMA_TH_DB, rho_db=rho_db, eta=4.0,
        axis="load_eta", axis_values=tuple(float(e) for e in etas),
        beamformer=beamformer, channel=channel, modes=modes,
        trials=trials, seed=seed,
    )


RHO_GRID = tuple(float(v) for v in range(-10, 11, 2))
ETA_GRID = tuple(float(e) for e in range(1, 21))


def _figure_curves(target: str, trials_iid: int, trials_corr: int, seed: int):
    """(label, SweepSpec) pairs behind each figure target."""
    iid = IidRayleigh()
    corr = CorrelatedRayleigh()
    cb, zf = BeamformerKind.CB, BeamformerKind.ZF
    curves = []
    if target == "fig4":
        for M in (50, 100, 200):
            for P in (64, 256):
                curves.append((
                    f"cb_iid_random_M{M}_P{P}",
                    _spec_rho_axis(cb, iid, M, P, 4.0, trials_iid, seed,
                                   (SweepMode.RANDOM,), RHO_GRID),
                ))
    elif target == "fig5":
        for M in (100, 200):
            for P in (64, 128, 256):
                curves.append((
                    f"cb_iid_random_M{M}_P{P}",
                    _spec_eta_axis(cb, iid, M, P, 0.0, trials_iid, seed,
                                   (SweepMode.RANDOM,), ETA_GRID),
                ))
        for P in (64, 128, 256):
            curves.append((
                f"cb_iid_eud_M200_P{P}",
                _spec_eta_axis(cb, iid, 200, P, 0.0, trials_iid, seed,
                               (SweepMode.EUD,), ETA_GRID),
            ))
            curves.append((
                f"cb_eud_limit_P{P}",
                _spec_eta_axis(cb, iid, 200, P, 0.0, trials_iid, seed,
                               (SweepMode.EUD_LIMIT,), ETA_GRID),
            ))
        curves.append((
            "cb_iid_infinite_p_M200",
            _spec_eta_axis(cb, iid, 200, 256, 0.0, trials_iid, seed,
                           (SweepMode.INFINITE_P,), ETA_GRID),
        ))
    elif target == "fig7":
        for M in (50, 200):
            for P in (64, 256):
                curves.append((
                    f"zf_iid_random_M{M}_P{P}",
                    _spec_rho_axis(zf, iid, M, P, 4.0, trials_iid, seed,
                                   (SweepMode.RANDOM,), RHO_GRID),
                ))
    elif target == "fig8":
        for M in (50, 100):
            for P in (64, 128, 256):
                curves.append((
                    f"zf_iid_random_M{M}_P{P}",
                    _spec_eta_axis(zf, iid, M, P, 0.0, trials_iid, seed,
                                   (SweepMode.RANDOM,), ETA_GRID),
                ))
        for P in (64, 128, 256):
            curves.append((
                f"zf_iid_eud_M50_P{P}",
                _spec_eta_axis(zf, iid, 50, P, 0.0, trials_iid, seed,
                               (SweepMode.EUD,), ETA_GRID),
            ))
            curves.append((
                f"zf_eud_limit_P{P}",
                _spec_eta_axis(zf, iid, 50, P, 0.0, trials_iid, seed,
                               (SweepMode.EUD_LIMIT,), ETA_GRID),
            ))
        curves.append((
            "zf_iid_infinite_p_M50",
            _spec_eta_axis(zf, iid, 50, 256, 0.0, trials_iid, seed,
                           (SweepMode.INFINITE_P,), ETA_GRID),
        ))
    elif target == "fig10":
        for M in (50, 100, 200, 400):
            curves.append((
                f"zf_correlated_random_M{M}_P128",
                _spec_rho_axis(zf, corr, M, 128, 4.0, trials_corr, seed,
                               (SweepMode.RANDOM,), RHO_GRID),
            ))
    elif target == "fig11":
        for P in (64, 128, 256):
            curves.append((
                f"zf_correlated_random_M400_P{P}",
                _spec_eta_axis(zf, corr, 400, P, 0.0, trials_corr, seed,
                               (SweepMode.RANDOM,), ETA_GRID),
            ))
            curves.append((
                f"zf_correlated_eud_M400_P{P}",
                _spec_eta_axis(zf, corr, 400, P, 0.0, trials_corr, seed,
                               (SweepMode.EUD,), ETA_GRID),
            ))
            curves.append((
                f"zf_eud_limit_P{P}",
                _spec_eta_axis(zf, corr, 400, P, 0.0, trials_corr, seed,
                               (SweepMode.EUD_LIMIT,), ETA_GRID),
            ))
    elif target == "fig12":
        curves.append((
            "zf_correlated_random_M200_P128",
            _spec_eta_axis(zf, corr, 200, 128, 0.0, trials_corr, seed,
                           (SweepMode.RANDOM,), ETA_GRID),
        ))
        curves.append((
            "zf_correlated_eud_M200_P128",
            _spec_eta_axis(zf, corr, 200, 128, 0.0, trials_corr, seed,
                           (SweepMode.EUD,), ETA_GRID),
        ))
        sa_etas = tuple(round(0.1 * k, 10) for k in range(1, 31))
        curves.append((
            "single_antenna_random",
            _spec_eta_axis(zf, corr, 200, 128, 0.0, trials_corr, seed,
                           (SweepMode.SINGLE_ANTENNA,), sa_etas),
        ))
        curves.append((
            "single_antenna_eud",
            _spec_eta_axis(zf, corr, 200, 128, 0.0, trials_corr, seed,
                           (SweepMode.SINGLE_ANTENNA_EUD,), (1.0, 2.0, 3.0, 4.0)),
        ))
    else:
        raise ConfigError(f"unknown reproduce target {target!r}")
    return curves


def _refined_mc_curve(
    M: int,
    P: int,
    mode: UserMode,
    etas: Sequence[int],
    trials_stage1: int,
    trials_final: int,
    seed: int,
    label: str,
):
    """Monte Carlo success curve over integer loads with two-stage
    refinement: a cheap pass everywhere, then full trials around the
    target crossing.  Rerunning with more trials reuses the same
    per-trial streams, so refinement only extends a point's sample."""
    channel = CorrelatedRayleigh()
    gamma_lin = db_to_linear(REPRODUCE_GAMMA_TH_DB)

    def run(eta: int, trials: int) -> McEstimate:
        params = SystemParams(
            M=M, N_a=eta * REPRODUCE_C, C=REPRODUCE_C, P=P,
            gamma_th=gamma_lin, rho_r=1.0,
        )
        return mcsim.run_trials(
            params, channel, BeamformerKind.ZF, mode, trials, seed
        )

    estimates: dict[int, McEstimate] = {}
    for eta in etas:
        estimates[eta] = run(eta, trials_stage1)
        print(
            f"  {label}: stage1 eta={eta} p={estimates[eta].p_hat:.4f}",
            file=sys.stderr,
        )
    if trials_final <= trials_stage1:
        return estimates

    def crossing_pair() -> tuple[int, int]:
        values = [estimates[e].p_hat for e in etas]
        above = [v >= TABLE_TARGET_SUCCESS for v in values]
        if not above[0]:
            return etas[0], etas[min(1, len(etas) - 1)]
        if above[-1]:
            return etas[max(len(etas) - 2, 0)], etas[-1]
        i = max(j for j, a in enumerate(above) if a)
        return etas[i], etas[min(i + 1, len(etas) - 1)]

    for _ in range(3):
        lo, hi = crossing_pair()
        window = [e for e in etas if lo - 2 <= e <= hi + 2]
        todo = [e for e in window if estimates[e].trials < trials_final]
        if not todo:
            break
        for eta in todo:
            estimates[eta] = run(eta, trials_final)
            print(
                f"  {label}: refine eta={eta} p={estimates[eta].p_hat:.4f}",
                file=sys.stderr,
            )
    return estimates


def _eta_from_estimates(etas, estimates, label: str) -> float:
    values = np.array([estimates[e].p_hat for e in etas])
    stderrs = np.array([estimates[e].stderr for e in etas])
    tol = 4.0 * (stderrs[:-1] + stderrs[1:]) + 1e-9
    try:
        return analytic.eta_at_target_from_samples(
            list(map(float, etas)), values, TABLE_TARGET_SUCCESS, nonmonotone_tol=tol
        )
    except ValueError as exc:
        raise ExperimentFailure(f"{label}: {exc}") from exc


def _single_antenna_eta(C: int) -> float:
    grid = [k / C for k in range(1, 3 * C + 1)]
    values = [analytic.single_antenna_success(round(e * C), C) for e in grid]
    return analytic.eta_at_target_from_samples(grid, values, TABLE_TARGET_SUCCESS)


def _single_antenna_eud_eta() -> float:
    grid = [1.0, 2.0, 3.0]
    values = [1.0 if e <= 1.0 else 0.0 for e in grid]
    return analytic.eta_at_target_from_samples(grid, values, TABLE_TARGET_SUCCESS)


def _write_curve_csv(out_dir: Path, name: str, rows: list[ResultRow]) -> Path:
    path = out_dir / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        write_rows(rows, fh)
    return path


def _estimates_to_rows(
    M, P, mode: SweepMode, etas, estimates, seed
) -> list[ResultRow]:
    channel = CorrelatedRayleigh()
    rows = []
    for eta in etas:
        params = SystemParams(
            M=M, N_a=eta * REPRODUCE_C, C=REPRODUCE_C, P=P,
            gamma_th=db_to_linear(REPRODUCE_GAMMA_TH_DB), rho_r=1.0,
        )
        est = estimates[eta]
        rows.append(
            ResultRow(
                point=GridPoint(mode, float(eta), 0.0, params),
                channel=channel,
                beamformer=BeamformerKind.ZF,
                analytic_value=None,
                estimate=est,
                trials=est.trials,
                seed=seed,
            )
        )
    return rows


def run_mimo_gain_tables(
    targets: set[str],
    out_dir: Path,
    trials_final: int,
    seed: int,
    trials_stage1: int = TABLE_STAGE1_TRIALS,
    eta_max: int = 12,
):
    """Shared engine behind the table3/table4 targets.

    Correlated-fading ZF sweeps at P=128, rho=0 dB, 95% target; random
    user distribution gives the supportable load eta_R (also the MIMO
    numerator eta_M), even user distribution gives eta_E, and the
    slotted-ALOHA closed form gives the single-antenna loads.  Channel
    count C is fixed at 10 because the reference leaves it unstated;
    the single-antenna load is strongly C-dependent, so the table3 CSV
    also reports the gain under C=5 and C=20 (same Monte Carlo
    numerator, which depends on C only weakly).

    The default load grid stops at eta_max=12: no-preamble-collision
    probability alone caps success at (1 - 1/(C*P))**(eta*C - 1), so
    with P=128 no curve can cross the 95% target beyond eta ~ 7.5 and
    the grid brackets every crossing with margin.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    etas = list(range(1, eta_max + 1))
    need_random = sorted(
        ({100, 200, 400} if "table3" in targets else set())
        | ({50, 100, 200, 400} if "table4" in targets else set())
    )
    need_eud = [50, 100, 200, 400] if "table4" in targets else []

    eta_random: dict[int, float] = {}
    eta_eud: dict[int, float] = {}
    files: list[Path] = []
    for M in need_random:
        label = f"random M={M}"
        est = _refined_mc_curve(
            M, 128, UserMode.RANDOM, etas, trials_stage1, trials_final, seed, label
        )
        eta_random[M] = _eta_from_estimates(etas, est, label)
        files.append(_write_curve_csv(
            out_dir, f"curve_random_M{M}",
            _estimates_to_rows(M, 128, SweepMode.RANDOM, etas, est, seed),
        ))
    for M in need_eud:
        label = f"eud M={M}"
        est = _refined_mc_curve(
            M, 128, UserMode.EUD, etas, trials_stage1, trials_final, seed, label
        )
        eta_eud[M] = _eta_from_estimates(etas, est, label)
        files.append(_write_curve_csv(
            out_dir, f"curve_eud_M{M}",
            _estimates_to_rows(M, 128, SweepMode.EUD, etas, est, seed),
        ))

    results = {"eta_random": eta_random, "eta_eud": eta_eud, "files": files}

    if "table3" in targets:
        eta_s = _single_antenna_eta(REPRODUCE_C)
        gains = {M: analytic.mimo_gain(eta_random[M], eta_s) for M in (100, 200, 400)}
        results["eta_single"] = eta_s
        results["gains"] = gains
        path = out_dir / "table3.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([
                "M", "eta_mimo", "eta_single", "gain", "gain_reference",
                "rel_deviation", "gain_if_C5", "gain_if_C20",
            ])
            for M in (100, 200, 400):
                ref = TABLE3_REFERENCE[M]
                gain = gains[M]
                w.writerow([
                    str(M), _fmt(eta_random[M]), _fmt(eta_s), _fmt(gain), _fmt(ref),
                    _fmt((gain - ref) / ref),
                    _fmt(analytic.mimo_gain(eta_random[M], _single_antenna_eta(5))),
                    _fmt(analytic.mimo_gain(eta_random[M], _single_antenna_eta(20))),
                ])
        files.append(path)
        for M in (100, 200, 400):
            ref = TABLE3_REFERENCE[M]
            print(
                f"table3: M={M} gain={gains[M]:.1f} reference={ref}"
                f" deviation={(gains[M] - ref) / ref:+.1%}",
                file=sys.stderr,
            )

    if "table4" in targets:
        gaps = {}
        eta_e_sa = _single_antenna_eud_eta()
        eta_r_sa = _single_antenna_eta(REPRODUCE_C)
        gaps[1] = analytic.gap_to_eud(eta_e_sa, eta_r_sa)
        for M in (50, 100, 200, 400):
            gaps[M] = analytic.gap_to_eud(eta_eud[M], eta_random[M])
        results["gaps"] = gaps
        results["eta_eud"][1] = eta_e_sa
        results["eta_random"][1] = eta_r_sa
        path = out_dir / "table4.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([
                "M", "eta_eud", "eta_random", "gap", "gap_reference",
                "rel_deviation", "note",
            ])
            for M in (1, 50, 100, 200, 400):
                ref = TABLE4_REFERENCE[M]
                gap = gaps[M]
                note = (
                    "single-antenna baseline; strongly dependent on the "
                    "unstated channel count (C=10 here; the reference value "
                    "matches the large-C limit)"
                ) if M == 1 else ""
                w.writerow([
                    str(M),
                    _fmt(eta_eud[M] if M > 1 else eta_e_sa),
                    _fmt(eta_random[M] if M > 1 else eta_r_sa),
                    _fmt(gap), _fmt(ref), _fmt((gap - ref) / ref), note,
                ])
        files.append(path)
        for M in (1, 50, 100, 200, 400):
            ref = TABLE4_REFERENCE[M]
            print(
                f"table4: M={M} gap={gaps[M]:.1%} reference={ref:.0%}"
                f" deviation={(gaps[M] - ref) / ref:+.1%}",
                file=sys.stderr,
            )
        if abs(gaps[1] - TABLE4_REFERENCE[1]) / TABLE4_REFERENCE[1] > 0.25:
            print(
                "table4: M=1 deviates from the reference because the "
                "single-antenna load depends on the unstated C "
                f"(C=10 -> gap {gaps[1]:.0%}; the reference {TABLE4_REFERENCE[1]:.0%} "
                "is approached as C grows)",
                file=sys.stderr,
            )
    return results


def cmd_reproduce(args) -> int:
    target = args.target
    out_dir = Path(args.out) if args.out else Path(f"reproduce_{target}")
    trials_iid = args.trials if args.trials else DEFAULT_TRIALS
    trials_corr = args.trials if args.trials else DEFAULT_TRIALS_CORRELATED
    seed = args.seed if args.seed is not None else 1

    if target in ("table3", "table4"):
        results = run_mimo_gain_tables({target}, out_dir, trials_corr, seed)
        for path in results["files"]:
            print(f"wrote {path}", file=sys.stderr)
        return 0

    curves = _figure_curves(target, trials_iid, trials_corr, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: list[str] = []
    for label, spec in curves:
        print(f"reproduce {target}: {label}", file=sys.stderr)
        threads = args.threads if args.threads else 1
        rows, fails = compute_rows(spec, threads=threads)
        manifest.extend(f"{label}: {line}" for line in fails)
        path = out_dir / f"{target}__{label}.csv"
        with open(path, "w", newline="") as fh:
            write_rows(rows, fh)
        print(f"wrote {path}", file=sys.stderr)
    return _finish(manifest)


# ---------------------------------------------------------------------------
# argument parsing


def _add_sweep_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--seed", type=int, help="base RNG seed (default 1)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
    p.add_argument("--tolerance", type=float,
                   help="compare: fail (exit 1) if max |analytic-mc| exceeds this")
    p.add_argument("--threads", type=int, help="worker processes for MC points")
    p.add_argument("--antennas", "-M", dest="antennas", type=int, help="BS antennas M")
    p.add_argument("--num-channels", dest="num_channels", type=int,
                   help="RA channels C")
    p.add_argument("--preambles", "-P", dest="preambles", type=int,
                   help="preamble pool size P")
    p.add_argument("--eta", type=float, help="base load N_a/C (rho_db axis)")
    p.add_argument("--gamma-th-db", dest="gamma_th_db", type=float,
                   help="SINR threshold in dB")
    p.add_argument("--rho-db", dest="rho_db", type=float,
                   help="uplink SNR in dB (load_eta axis)")
    p.add_argument("--axis", choices=("load_eta", "rho_db"), help="sweep axis")
    p.add_argument("--axis-values", dest="axis_values",
                   help="comma-separated axis values")
    p.add_argument("--beamformer", choices=("cb", "zf"), help="receive beamformer")
    p.add_argument("--channel", help="iid or correlated")
    p.add_argument("--modes",
                   help="comma-separated subset of random,eud,infinite_p,"
                        "eud_limit,single_antenna,single_antenna_eud")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfra",
        description="Grant-free random access with massive MIMO: closed-form "
                    "success probabilities cross-validated by Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="evaluate closed forms over a sweep")
    _add_sweep_flags(p)
    p.set_defaults(fn=cmd_analytic)

    p = sub.add_parser("simulate", help="Monte Carlo sweep")
    _add_sweep_flags(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compare", help="closed forms vs Monte Carlo")
    _add_sweep_flags(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("reproduce", help="run a canned figure/table sweep")
    p.add_argument("target", choices=(
        "fig4", "fig5", "fig7", "fig8", "fig10", "fig11", "fig12",
        "table3", "table4",
    ))
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int,
                   help="override per-point trials (default 1e5 iid, 2e4 correlated)")
    p.add_argument("--threads", type=int)
    p.set_defaults(fn=cmd_reproduce)

    p = sub.add_parser("diagnose", help="conditioned distribution samples")
    p.add_argument("--antennas", "-M", dest="antennas", type=int, required=True)
    p.add_argument("--contenders", "-K", dest="contenders", type=int, required=True)
    p.add_argument("--groups", "-S", dest="groups", type=int, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--channel", help="iid or correlated (default iid)")
    p.add_argument("--gamma-th-db", dest="gamma_th_db", type=float, default=8.0)
    p.add_argument("--rho-db", dest="rho_db", type=float, default=0.0)
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.set_defaults(fn=cmd_diagnose)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
