"""Spatial correlation costs antennas.

Generates uniform-linear-array channels where each UE's energy arrives
over a narrow angular spread, compares the supportable load against the
independent-fading case, and samples the diagnostic functionals whose
distributions the zero-forcing analysis relies on.

Run: python demos/correlated_channel.py        (~2 minutes)
"""

import numpy as np
from scipy import stats

from gfra import analytic, mcsim
from gfra.analytic import BeamformerKind, SystemParams
from gfra.mcsim import CorrelatedRayleigh, IidRayleigh, UserMode

GAMMA_8DB = 10.0**0.8
SEED = 1

model = CorrelatedRayleigh()  # 20 deg spread, +-60 deg sector, M/2 paths
print("channel sanity: mean column power should equal the antenna count")
H = mcsim.gen_channels(mcsim.trial_rng(SEED, 0), model, 100, 400)
print(f"  E||h||^2 = {float((np.abs(H) ** 2).sum(0).mean()):.1f} (M = 100)\n")

print("== zero-forcing success vs load, correlated vs i.i.d. (P=128) ==")
print(f"{'M':>4} {'eta':>4} {'iid (analytic)':>15} {'correlated (mc)':>16}")
for M in (100, 200):
    for eta in (2, 4, 6):
        p = SystemParams(M=M, N_a=10 * eta, C=10, P=128,
                         gamma_th=GAMMA_8DB, rho_r=1.0)
        closed = analytic.zf_success(p)
        est = mcsim.run_trials(p, model, BeamformerKind.ZF, UserMode.RANDOM,
                               4_000, SEED)
        print(f"{M:>4} {eta:>4} {closed:>15.4f} {est.p_hat:>16.4f}")
print("-> correlation drags the curve down; doubling M claws it back\n")

print("== diagnostic functionals at forced K=10 contenders in S=5 groups ==")
p = SystemParams(M=100, N_a=11, C=1, P=6, gamma_th=GAMMA_8DB, rho_r=1.0)
samples = mcsim.collect_diagnostics(
    p, IidRayleigh(), BeamformerKind.ZF, 10, 5, 4_000, SEED
)
u = np.array([s.u_1 for s in samples])
y = np.array([s.y_k for s in samples])
ks = stats.ks_1samp(u, stats.gamma(a=95).cdf).statistic
print(f"post-combining signal strength: mean {u.mean():.1f} (Erlang(95,1) mean 95),"
      f" KS = {ks:.3f}")
print(f"conjugate interference level:   mean {y.mean():.2f} (expected K = 10)")
