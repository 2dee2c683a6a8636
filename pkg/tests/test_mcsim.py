import math

import numpy as np
import pytest
from scipy import stats

from gfra import analytic, mcsim
from gfra.analytic import BeamformerKind, SystemParams
from gfra.mcsim import (
    CorrelatedRayleigh,
    IidRayleigh,
    PreambleAssignment,
    UserMode,
    assign_preambles,
    cb_sinr,
    draw_cochannel_count,
    estimate_basis,
    gen_channels,
    trial_rng,
    zf_sinr,
)

GAMMA_8DB = 10.0**0.8


def params(M=100, N_a=40, C=10, P=64, gamma_th=GAMMA_8DB, rho_r=1.0):
    return SystemParams(M=M, N_a=N_a, C=C, P=P, gamma_th=gamma_th, rho_r=rho_r)


class TestTrialStreams:
    def test_rekeyed_stream_matches_fresh_generator(self):
        streams = mcsim._TrialStreams()
        for seed, idx in [(1, 0), (1, 1), (97, 2**40), (2**63, 5)]:
            assert np.array_equal(
                trial_rng(seed, idx).random(6), streams.get(seed, idx).random(6)
            )
            assert np.array_equal(
                trial_rng(seed, idx).integers(0, 1000, 8),
                streams.get(seed, idx).integers(0, 1000, 8),
            )
            assert np.array_equal(
                trial_rng(seed, idx).standard_normal(11),
                streams.get(seed, idx).standard_normal(11),
            )

    def test_distinct_trials_are_distinct_streams(self):
        a = trial_rng(3, 0).random(4)
        b = trial_rng(3, 1).random(4)
        assert not np.allclose(a, b)


class TestDrawCochannelCount:
    def test_lone_ue(self):
        rng = trial_rng(0, 0)
        assert all(draw_cochannel_count(rng, 1, 5, UserMode.RANDOM) == 0 for _ in range(5))

    def test_eud_deterministic(self):
        rng = trial_rng(0, 0)
        assert draw_cochannel_count(rng, 50, 10, UserMode.EUD) == 4

    def test_eud_rejects_fractional_load(self):
        with pytest.raises(ValueError):
            draw_cochannel_count(trial_rng(0, 0), 55, 10, UserMode.EUD)

    def test_binomial_mean(self):
        n = 20_000
        total = sum(
            draw_cochannel_count(trial_rng(5, t), 50, 10, UserMode.RANDOM)
            for t in range(n)
        )
        mean = total / n
        sd = math.sqrt(49 * 0.1 * 0.9 / n)
        assert abs(mean - 4.9) < 4 * sd


class TestAssignPreambles:
    def test_single_preamble_always_collides(self):
        for t in range(20):
            asg = assign_preambles(trial_rng(1, t), 3, 1)
            assert asg.tagged_collided

    def test_infinite_pool(self):
        asg = assign_preambles(trial_rng(1, 0), 7, 4, infinite_p=True)
        assert not asg.tagged_collided
        assert asg.S == 7
        assert all(len(g) == 1 for g in asg.groups)

    def test_partition_invariant(self):
        for t in range(200):
            K = 8
            asg = assign_preambles(trial_rng(2, t), K, 4)
            members = sorted(
                int(i) for g in asg.groups for i in g
            ) + sorted(int(i) for i in asg.colliders_with_tag)
            assert sorted(members) == list(range(1, K + 1))
            assert all(len(g) > 0 for g in asg.groups)
            assert asg.S <= min(K, 3)

    def test_empirical_group_statistics(self):
        # P(no tagged collision and S = 2) for K=2, P=4 is 6/16
        n = 30_000
        hits = 0
        for t in range(n):
            asg = assign_preambles(trial_rng(3, t), 2, 4)
            if not asg.tagged_collided and asg.S == 2:
                hits += 1
        p = hits / n
        se = math.sqrt(0.375 * 0.625 / n)
        assert abs(p - 0.375) < 4 * se


class TestChannels:
    def test_iid_unit_variance(self):
        H = gen_channels(trial_rng(0, 0), IidRayleigh(), 64, 2000)
        power = float((np.abs(H) ** 2).mean())
        assert abs(power - 1.0) < 0.03

    def test_correlated_mean_power(self):
        M = 64
        H = gen_channels(trial_rng(0, 1), CorrelatedRayleigh(), M, 1500)
        power = float((np.abs(H) ** 2).sum(axis=0).mean())
        assert abs(power - M) < 0.03 * M

    def test_single_path_is_rank_one(self):
        M = 16
        H = gen_channels(trial_rng(0, 2), CorrelatedRayleigh(num_paths=1), M, 3)
        for u in range(3):
            col = H[:, u]
            ratio = col / col[0]
            # steering progression has unit-modulus ratios
            assert np.allclose(np.abs(ratio), 1.0, atol=1e-9)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            CorrelatedRayleigh(angle_spread_deg=0.0)
        with pytest.raises(ValueError):
            CorrelatedRayleigh(azimuth_low_deg=10.0, azimuth_high_deg=-10.0)
        with pytest.raises(ValueError):
            CorrelatedRayleigh(num_paths=0)

    def test_paths_default_half_antennas(self):
        assert CorrelatedRayleigh().paths_for(400) == 200
        assert CorrelatedRayleigh().paths_for(101) == 50
        assert CorrelatedRayleigh(num_paths=7).paths_for(400) == 7


class TestEstimateBasis:
    def test_rejects_collided(self):
        asg = PreambleAssignment(0, (), np.array([1]))
        with pytest.raises(ValueError):
            estimate_basis(np.eye(2, dtype=complex), asg)

    def test_group_sum(self):
        H = np.array([[1.0, 0.0, 1.0], [2.0, 1.0, 0.0]], dtype=complex)
        asg = PreambleAssignment(0, (np.array([1, 2]),), np.empty(0, dtype=np.int64))
        A = estimate_basis(H, asg)
        assert np.allclose(A[:, 0], H[:, 0])
        assert np.allclose(A[:, 1], [1.0, 1.0])

    def test_singletons_reproduce_columns(self):
        H = gen_channels(trial_rng(0, 3), IidRayleigh(), 8, 4)
        asg = assign_preambles(trial_rng(0, 4), 3, 1000, infinite_p=True)
        A = estimate_basis(H, asg)
        assert np.allclose(A, H)


class TestCbSinr:
    def test_no_interference(self):
        h1 = np.array([1.0 + 0j, 2.0])
        assert cb_sinr(h1[:, None], 2.0) == pytest.approx(2.0 * 5.0)

    def test_orthogonal_interferer(self):
        H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)
        assert cb_sinr(H, 1.0) == pytest.approx(2.0)

    def test_aligned_interferer(self):
        h = np.array([1.0 + 1j, 2.0 - 1j, 0.5j])
        H = np.stack([h, h], axis=1)
        n2 = float(np.sum(np.abs(h) ** 2))
        rho = 0.7
        expected = rho * n2**2 / (n2 + rho * n2**2)
        assert cb_sinr(H, rho) == pytest.approx(expected, rel=1e-12)

    def test_zero_channel(self):
        assert cb_sinr(np.zeros((4, 2), dtype=complex), 1.0) == 0.0


class TestZfSinr:
    def test_hand_example_two_antennas(self):
        H = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=complex).T
        # columns: h1=[1,0], h2=[0,1], h3=[1,0]; group {2,3} -> a1=[1,1]
        H = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]], dtype=complex)
        asg = PreambleAssignment(0, (np.array([1, 2]),), np.empty(0, dtype=np.int64))
        A = estimate_basis(H, asg)
        b1_expected = np.array([1.0, -1.0])
        G = A.conj().T @ A
        x = np.linalg.solve(G, np.array([1.0, 0.0], dtype=complex))
        assert np.allclose((A @ x).conj(), b1_expected)
        assert zf_sinr(H, A, 1.0) == pytest.approx(0.25, rel=1e-12)

    def test_orthonormal_basis_no_collisions(self):
        M = 16
        rng = trial_rng(0, 5)
        Q, _ = np.linalg.qr(
            rng.standard_normal((M, 4)) + 1j * rng.standard_normal((M, 4))
        )
        H = Q.copy()
        asg = assign_preambles(trial_rng(0, 6), 3, 999, infinite_p=True)
        A = estimate_basis(H, asg)
        assert zf_sinr(H, A, 0.8) == pytest.approx(0.8, rel=1e-10)

    @pytest.mark.parametrize("M,K", [(50, 5), (200, 12), (400, 20)])
    def test_exact_nulling_when_fully_resolved(self, M, K):
        H = gen_channels(trial_rng(1, M + K), IidRayleigh(), M, K + 1)
        asg = assign_preambles(trial_rng(1, 0), K, 10**9, infinite_p=True)
        A = estimate_basis(H, asg)
        G = A.conj().T @ A
        x = np.linalg.solve(G, np.eye(K + 1, dtype=complex)[:, 0])
        b1 = (A @ x).conj()
        signal = abs(b1 @ H[:, 0]) ** 2
        interference = float((np.abs(b1 @ H[:, 1:]) ** 2).sum())
        assert interference <= 1e-10 * signal

    def test_ill_conditioned_reports_nan(self):
        h = np.array([1.0, 1.0 + 1e-14], dtype=complex)
        H = np.stack([h, h * (1 + 1e-15)], axis=1)
        A = H.copy()
        assert math.isnan(zf_sinr(H, A, 1.0))

    def test_rejects_more_constraints_than_antennas(self):
        H = np.ones((2, 4), dtype=complex)
        with pytest.raises(ValueError):
            zf_sinr(H, np.ones((2, 3), dtype=complex) + np.eye(2, 3), 1.0)


class TestUnitaryInvariance:
    def test_both_beamformers(self):
        M, K = 24, 5
        rng = trial_rng(7, 0)
        H = gen_channels(rng, IidRayleigh(), M, K + 1)
        Z = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
        U, _ = np.linalg.qr(Z)
        asg = assign_preambles(trial_rng(7, 1), K, 8)
        if asg.tagged_collided:
            asg = assign_preambles(trial_rng(7, 2), K, 8)
        assert not asg.tagged_collided
        A = estimate_basis(H, asg)
        assert cb_sinr(U @ H, 1.3) == pytest.approx(cb_sinr(H, 1.3), abs=1e-10, rel=1e-10)
        assert zf_sinr(U @ H, U @ A, 1.3) == pytest.approx(
            zf_sinr(H, A, 1.3), abs=1e-10, rel=1e-10
        )


class TestRunTrials:
    def test_deterministic_and_chunk_invariant(self):
        p = params()
        kw = dict(trials=1500, seed=42)
        a = mcsim.run_trials(p, IidRayleigh(), BeamformerKind.ZF, UserMode.RANDOM, **kw)
        b = mcsim.run_trials(p, IidRayleigh(), BeamformerKind.ZF, UserMode.RANDOM, **kw)
        c = mcsim.run_trials(
            p, IidRayleigh(), BeamformerKind.ZF, UserMode.RANDOM, chunk=97, **kw
        )
        assert a.success_count == b.success_count == c.success_count
        assert a.p_hat == a.success_count / a.trials
        assert a.stderr == pytest.approx(
            math.sqrt(a.p_hat * (1 - a.p_hat) / a.trials), rel=1e-12
        )

    @pytest.mark.parametrize("kind", [BeamformerKind.CB, BeamformerKind.ZF])
    @pytest.mark.parametrize("model", [IidRayleigh(), CorrelatedRayleigh()])
    @pytest.mark.parametrize("mode", [UserMode.RANDOM, UserMode.EUD, UserMode.INFINITE_P])
    def test_engine_matches_reference_path(self, kind, model, mode):
        p = params(M=48, N_a=40, C=10, P=16)
        n = 160
        ref = sum(
            mcsim.run_trial(p, model, kind, mode, 11, t).success for t in range(n)
        )
        eng = mcsim.run_trials(p, model, kind, mode, n, 11).success_count
        assert ref == eng

    def test_lone_ue_zf_matches_noise_tail(self):
        p = params(M=50, N_a=1, C=10, P=256)
        est = mcsim.run_trials(
            p, IidRayleigh(), BeamformerKind.ZF, UserMode.RANDOM, 4000, 13
        )
        expected = analytic.zf_conditional_success(50, 0, 0, p.gamma_th, 1.0)
        assert abs(est.p_hat - expected) <= max(3 * est.stderr, 1e-3)

    def test_single_preamble_reduces_to_aloha(self):
        # P=1: success only when the channel is otherwise empty
        p = params(M=4, N_a=21, C=10, P=1, gamma_th=0.5)
        est = mcsim.run_trials(
            p, IidRayleigh(), BeamformerKind.CB, UserMode.RANDOM, 6000, 17
        )
        expected = analytic.single_antenna_success(21, 10)
        se = math.sqrt(expected * (1 - expected) / est.trials)
        assert abs(est.p_hat - expected) < 4 * se

    def test_eud_with_huge_pool_matches_poisson_tail(self):
        # fixed K = eta - 1 contenders, collisions vanishingly rare:
        # success reduces to the fully-resolved noise tail at K = S
        p = params(M=12, N_a=50, C=10, P=10**6, gamma_th=GAMMA_8DB)
        est = mcsim.run_trials(
            p, IidRayleigh(), BeamformerKind.ZF, UserMode.EUD, 4000, 19
        )
        expected = analytic.zf_conditional_success(12, 4, 4, p.gamma_th, 1.0)
        assert abs(est.p_hat - expected) <= max(3 * est.stderr, 1e-3)

    def test_infinite_pool_matches_closed_form(self):
        p = params(M=12, N_a=50, C=10, P=7, gamma_th=GAMMA_8DB)
        est = mcsim.run_trials(
            p, IidRayleigh(), BeamformerKind.ZF, UserMode.INFINITE_P, 4000, 19
        )
        expected = analytic.infinite_preamble_success(p, BeamformerKind.ZF)
        assert abs(est.p_hat - expected) <= max(3 * est.stderr, 1e-3)

    def test_collision_statistics_match_occupancy(self):
        # frequency of {no tagged collision and S = s} vs the closed form
        from gfra.specfun import occupancy_no_tag_collision

        for P in (4, 64):
            K = 6
            n = 12_000
            counts = {}
            for t in range(n):
                asg = assign_preambles(trial_rng(23 + P, t), K, P)
                if not asg.tagged_collided:
                    counts[asg.S] = counts.get(asg.S, 0) + 1
            for s in range(0, min(K, P - 1) + 1):
                expected = occupancy_no_tag_collision(K, s, P)
                se = math.sqrt(max(expected * (1 - expected), 1e-9) / n)
                observed = counts.get(s, 0) / n
                assert abs(observed - expected) < max(4 * se, 2e-3), (P, s)

    def test_eud_rejects_fractional_load(self):
        p = params(N_a=55, C=10)
        with pytest.raises(ValueError):
            mcsim.run_trials(p, IidRayleigh(), BeamformerKind.CB, UserMode.EUD, 10, 1)


class TestSingleAntenna:
    def test_matches_closed_form(self):
        est = mcsim.run_single_antenna_trials(11, 10, 20_000, 29)
        expected = analytic.single_antenna_success(11, 10)
        se = math.sqrt(expected * (1 - expected) / est.trials)
        assert abs(est.p_hat - expected) < 4 * se

    def test_lone_ue_always_succeeds(self):
        est = mcsim.run_single_antenna_trials(1, 4, 50, 1)
        assert est.p_hat == 1.0


class TestDiagnostics:
    def test_signal_strength_mean(self):
        M, K, S = 50, 6, 3
        p = params(M=M, N_a=K + 1, C=1, P=S + 1)
        samples = mcsim.collect_diagnostics(
            p, IidRayleigh(), BeamformerKind.ZF, K, S, 3000, 31
        )
        u = np.array([s.u_1 for s in samples])
        # Erlang(M - S, 1): mean M - S, variance M - S
        se = math.sqrt((M - S) / len(u))
        assert abs(u.mean() - (M - S)) < 4 * se

    def test_interference_mean(self):
        M, K = 64, 5
        p = params(M=M, N_a=K + 1, C=1, P=K + 1)
        samples = mcsim.collect_diagnostics(
            p, IidRayleigh(), BeamformerKind.ZF, K, K, 2500, 37
        )
        y = np.array([s.y_k for s in samples])
        sd = y.std(ddof=1) / math.sqrt(len(y))
        assert abs(y.mean() - K) < 4 * sd

    def test_residual_zero_when_fully_resolved(self):
        p = params(M=32, N_a=5, C=1, P=6)
        samples = mcsim.collect_diagnostics(
            p, IidRayleigh(), BeamformerKind.ZF, 4, 4, 200, 41
        )
        assert all(s.z_val == 0.0 for s in samples)

    def test_u1_distribution_ks(self):
        M, S = 50, 3
        K = 2 * S
        p = params(M=M, N_a=K + 1, C=1, P=S + 1)
        samples = mcsim.collect_diagnostics(
            p, IidRayleigh(), BeamformerKind.ZF, K, S, 4000, 43
        )
        u = np.array([s.u_1 for s in samples])
        ks = stats.ks_1samp(u, stats.gamma(a=M - S).cdf).statistic
        assert ks < 0.03

    def test_infeasible_combinations_rejected(self):
        p = params(M=4)
        with pytest.raises(ValueError):
            mcsim.collect_diagnostics(p, IidRayleigh(), BeamformerKind.ZF, 2, 4, 10, 1)
        with pytest.raises(ValueError):
            mcsim.collect_diagnostics(p, IidRayleigh(), BeamformerKind.ZF, 3, 0, 10, 1)
        with pytest.raises(ValueError):
            mcsim.collect_diagnostics(p, IidRayleigh(), BeamformerKind.ZF, 9, 5, 10, 1)


class TestTrialOutcome:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            mcsim.TrialOutcome(K=1, S=1, tagged_collided=True, sinr=1.0, success=True)
        with pytest.raises(ValueError):
            mcsim.TrialOutcome(K=1, S=1, tagged_collided=False, sinr=-1.0, success=False)

    def test_reference_trial_fields(self):
        p = params(M=32, N_a=12, C=3, P=8, gamma_th=2.0)
        seen_collision = False
        seen_success = False
        for t in range(120):
            out = mcsim.run_trial(p, IidRayleigh(), BeamformerKind.ZF, UserMode.RANDOM, 3, t)
            if out.tagged_collided:
                seen_collision = True
                assert not out.success
                assert out.sinr == 0.0
            if out.success:
                seen_success = True
                assert out.sinr >= p.gamma_th
            assert out.S <= out.K
        assert seen_collision and seen_success
