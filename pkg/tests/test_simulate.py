import math
import warnings

import numpy as np
import pytest

from nts.itcore import Channel, Distribution, ResourceLimitError
from nts.oracle import exact_finite_n
from nts.simulate import (
    Scheme,
    SimConfig,
    build_codebook,
    estimate_exponent,
    fixed_q_event_counts,
    fixed_q_outcomes,
    natural_decode,
    nts_run,
    threshold_decide,
    trial_rng,
)

BSC = Channel.bsc(0.1)
UNIF = Distribution.uniform(2)
Q34 = Distribution(np.array([0.75, 0.25]))


class TestBuildCodebook:
    def test_rate_zero_single_codeword(self):
        cb = build_codebook(UNIF, 8, 0.0, np.random.default_rng(0))
        assert cb.shape == (1, 8)

    def test_point_mass_constant_codewords(self):
        q = Distribution.point_mass(2, 1)
        cb = build_codebook(q, 10, 0.3, np.random.default_rng(0))
        assert np.all(cb == 1)

    def test_letter_frequencies_concentrate(self):
        q = Distribution(np.array([0.3, 0.7]))
        cb = build_codebook(q, 50, 0.15, np.random.default_rng(1), codebook_cap=2**20)
        total = cb.size
        freq = (cb == 0).sum() / total
        se = math.sqrt(0.3 * 0.7 / total)
        assert abs(freq - 0.3) <= 5 * se

    def test_cap_enforced(self):
        with pytest.raises(ResourceLimitError):
            build_codebook(UNIF, 100, 1.0, np.random.default_rng(0), codebook_cap=2**10)

    def test_deterministic_given_seed(self):
        a = build_codebook(UNIF, 6, 0.4, np.random.default_rng(5))
        b = build_codebook(UNIF, 6, 0.4, np.random.default_rng(5))
        assert np.array_equal(a, b)


class TestNaturalDecode:
    def test_hand_example(self):
        codebook = np.array([[0, 1], [0, 0]])
        y = np.array([0, 1])
        out = natural_decode(codebook, y, Q34, 0.5)
        assert out.decoded == 0
        assert out.winner_metric == pytest.approx(0.836988, abs=1e-6)
        assert out.runner_up_metric == pytest.approx(0.287682, abs=1e-6)
        assert out.feedback == 1

    def test_exact_tie_is_erasure(self):
        codebook = np.array([[0, 1], [0, 1]])
        out = natural_decode(codebook, np.array([0, 1]), Q34, 0.0)
        assert out.decoded is None and out.feedback == 0

    def test_single_codeword_wins_vacuously(self):
        out = natural_decode(np.array([[0, 1]]), np.array([0, 1]), Q34, 0.3)
        assert out.decoded == 0 and out.feedback == 1

    def test_delta_inf_forces_zero(self):
        out = natural_decode(np.array([[0, 1]]), np.array([0, 1]), Q34, math.inf)
        assert out.feedback == 0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        codebook = build_codebook(UNIF, 12, 0.2, rng)
        y = rng.integers(0, 2, size=12)
        out = natural_decode(codebook, y, UNIF, 0.05)
        perm = rng.permutation(codebook.shape[0])
        out_p = natural_decode(codebook[perm], y, UNIF, 0.05)
        if out.decoded is None:
            assert out_p.decoded is None
        else:
            assert perm[out_p.decoded] == out.decoded
        assert out.feedback == out_p.feedback
        assert out.winner_metric == pytest.approx(out_p.winner_metric, abs=1e-14)

    def test_decoder_never_reads_channel(self):
        # Pure function of (codebook, y, Q, delta): no channel argument exists,
        # and repeated calls give identical results.
        codebook = np.array([[0, 1, 1], [1, 0, 0]])
        y = np.array([0, 1, 0])
        a = natural_decode(codebook, y, Q34, 0.1)
        b = natural_decode(codebook, y, Q34, 0.1)
        assert a == b


class TestThresholdDecide:
    def test_boundary_is_strict(self):
        assert threshold_decide(0.5, 0.3, 0.2) == 0
        assert threshold_decide(0.5 + 1e-9, 0.3, 0.2) == 1

    def test_large_metric(self):
        assert threshold_decide(1e9, 0.3, 0.2) == 1


class TestAgainstExactAnalyzer:
    def test_literal_mc_matches_exact(self):
        n, rate, delta = 6, math.log(3) / 6, 0.2
        rep = exact_finite_n(n, rate, delta, UNIF, BSC)
        counts = fixed_q_event_counts(UNIF, BSC, n, rate, delta, trials=30000, seed=9)
        t = counts["trials"]
        for key, exact in (
            ("error", rep.p_error),
            ("correct_strict", rep.p_correct_strict),
            ("feedback1", rep.p_feedback1),
        ):
            se = math.sqrt(exact * (1 - exact) / t)
            assert abs(counts[key] / t - exact) <= 5 * se

    def test_virtual_path_matches_exact(self):
        # Force the sampled path by setting the codebook cap below m.
        n, rate, delta = 6, math.log(3) / 6, 0.15
        q = Distribution(np.array([0.6, 0.4]))
        rep = exact_finite_n(n, rate, delta, q, BSC)
        outs = fixed_q_outcomes(q, BSC, n, rate, delta, blocks=20000, seed=4, codebook_cap=1)
        t = len(outs)
        freq_err = sum(not o.correct for o in outs) / t
        freq_f1 = sum(o.correct and o.feedback == 1 for o in outs) / t
        se_err = math.sqrt(rep.p_error * (1 - rep.p_error) / t)
        se_f1 = math.sqrt(rep.p_feedback1 * (1 - rep.p_feedback1) / t)
        assert abs(freq_err - rep.p_error) <= 5 * se_err
        assert abs(freq_f1 - rep.p_feedback1) <= 5 * se_f1

    def test_literal_and_virtual_paths_agree(self):
        n, rate, delta = 5, 0.3, 0.1
        lit = fixed_q_outcomes(UNIF, BSC, n, rate, delta, blocks=15000, seed=2)
        vir = fixed_q_outcomes(UNIF, BSC, n, rate, delta, blocks=15000, seed=3, codebook_cap=1)
        f_lit = sum(o.correct for o in lit) / len(lit)
        f_vir = sum(o.correct for o in vir) / len(vir)
        se = math.sqrt(0.25 / 15000)
        assert abs(f_lit - f_vir) <= 6 * se


class TestNtsRun:
    def _config(self, **kw):
        base = dict(
            n=8,
            rate=0.2,
            delta=0.05,
            blocks=30,
            q0=Distribution(np.array([0.7, 0.3])),
            channel_schedule=((0, BSC),),
            seed=11,
        )
        base.update(kw)
        return SimConfig(**base)

    def test_zero_blocks(self):
        res = nts_run(self._config(blocks=0))
        assert res.trace == ()
        assert np.allclose(res.summary.q_final.probs, [0.7, 0.3])

    def test_delta_inf_never_updates(self):
        res = nts_run(self._config(delta=math.inf, blocks=40))
        assert res.summary.updates == 0
        assert np.allclose(res.summary.q_final.probs, [0.7, 0.3])

    def test_updates_stay_in_initial_support(self):
        q0 = Distribution(np.array([0.5, 0.5, 0.0]))
        p = Channel(np.array([[0.8, 0.2], [0.2, 0.8], [0.5, 0.5]]))
        cfg = SimConfig(
            n=10, rate=0.15, delta=0.02, blocks=60, q0=q0,
            channel_schedule=((0, p),), seed=3,
        )
        res = nts_run(cfg)
        for out in res.trace:
            assert out.q_next.probs[2] == 0.0

    def test_update_uses_winner_marginal_type(self):
        res = nts_run(self._config(blocks=80))
        for out in res.trace:
            if out.feedback == 1 and out.correct:
                marg = out.joint_type.counts.sum(axis=0) / out.joint_type.n
                assert np.allclose(out.q_next.probs, marg, atol=1e-12)

    def test_feedback_requires_margin(self):
        res = nts_run(self._config(blocks=60))
        for out in res.trace:
            if out.feedback == 1:
                assert out.decoded is not None
                assert out.winner_metric - out.runner_up_metric > 0.05

    def test_channel_schedule_switches(self):
        flip = Channel(np.array([[0.1, 0.9], [0.9, 0.1]]))
        cfg = self._config(blocks=10, channel_schedule=((0, BSC), (5, flip)))
        res = nts_run(cfg)
        assert len(res.trace) == 10

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            self._config(channel_schedule=((1, BSC),))
        with pytest.raises(ValueError):
            self._config(channel_schedule=((0, BSC), (0, BSC)))

    def test_ml_decoder_only_with_threshold(self):
        with pytest.raises(ValueError):
            self._config(use_ml_decoder=True)
        cfg = self._config(scheme=Scheme.THRESHOLD, use_ml_decoder=True, blocks=20)
        res = nts_run(cfg)
        assert len(res.trace) == 20

    def test_threshold_scheme_runs(self):
        res = nts_run(self._config(scheme=Scheme.THRESHOLD, blocks=40))
        for out in res.trace:
            if out.feedback == 1:
                assert out.winner_metric > 0.2 + 0.05

    def test_reproducible(self):
        a = nts_run(self._config(blocks=25))
        b = nts_run(self._config(blocks=25))
        assert [o.feedback for o in a.trace] == [o.feedback for o in b.trace]
        assert np.allclose(a.summary.q_final.probs, b.summary.q_final.probs)


class TestThresholdScheme:
    def test_feedback_frequency_decays_with_blocklength(self):
        # At a rate+delta above I(QoP) the threshold event is exponentially
        # rare, so its frequency should drop as n grows.
        q = Distribution(np.array([0.6, 0.4]))
        rate, delta = 0.45, 0.2
        freqs = []
        for n, seed in ((4, 1), (10, 2)):
            outs = fixed_q_outcomes(q, BSC, n, rate, delta, blocks=4000, seed=seed, scheme=Scheme.THRESHOLD)
            freqs.append(sum(o.feedback for o in outs) / len(outs))
        assert freqs[1] < freqs[0]


class TestEstimateExponent:
    def test_exact_exponential(self):
        samples = [(n, math.exp(-0.2 * n)) for n in (10, 20, 30)]
        fit = estimate_exponent(samples)
        assert fit.slope == pytest.approx(0.2, abs=1e-12)
        assert fit.stderr == pytest.approx(0.0, abs=1e-12)

    def test_constant_frequency(self):
        fit = estimate_exponent([(10, 1.0), (20, 1.0), (30, 1.0)])
        assert fit.slope == 0.0

    def test_censoring_warns(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = estimate_exponent([(10, 0.5), (20, 0.25), (30, 0.125), (40, 0.0)])
            assert any("censored" in str(w.message) for w in caught)
        assert fit.censored == (40,)

    def test_too_few_blocklengths(self):
        with pytest.raises(ValueError):
            estimate_exponent([(10, 0.5), (20, 0.25)])

    def test_frequency_domain(self):
        with pytest.raises(ValueError):
            estimate_exponent([(10, 0.5), (20, 1.5), (30, 0.2)])


class TestTrialRng:
    def test_streams_independent_and_reproducible(self):
        a = trial_rng(7, 0).random(4)
        b = trial_rng(7, 0).random(4)
        c = trial_rng(7, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
