"""Estimator-level tests: encoding, loss weights, rank-one updates, scores.

The incremental estimator is checked throughout against a dense oracle that
rebuilds ``V = lam*I + sum w a a^T`` explicitly and solves for the estimate.
"""

import math

import numpy as np
import pytest

from linuct.bandit import (
    BetaSchedule,
    ConvexLoss,
    DesignState,
    InvalidActionError,
    JointAction,
    NumericError,
    encode_batch,
)


def dense_oracle(dim, lam, updates):
    """Explicit inversion reference: returns (V, theta) after the updates."""
    v = lam * np.eye(dim)
    m = np.zeros(dim)
    for enc, x, w in updates:
        v += w * np.outer(enc, enc)
        m += w * x * enc
    return v, np.linalg.solve(v, m)


def random_action(rng, n, d):
    return JointAction(n, d, tuple(int(j) for j in rng.integers(0, d, n)))


class TestJointAction:
    def test_encoding_positions(self):
        a = JointAction(2, 3, (0, 2))
        np.testing.assert_array_equal(a.encode(), [1, 0, 0, 0, 0, 1])

    def test_single_agent_single_action(self):
        np.testing.assert_array_equal(JointAction(1, 1, (0,)).encode(), [1.0])

    def test_norm_is_sqrt_n(self):
        a = JointAction(3, 2, (1, 1, 0))
        assert np.linalg.norm(a.encode()) == pytest.approx(math.sqrt(3))

    def test_exactly_one_per_block(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n, d = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            enc = random_action(rng, n, d).encode()
            blocks = enc.reshape(n, d)
            np.testing.assert_array_equal(blocks.sum(axis=1), np.ones(n))

    def test_index_out_of_range(self):
        with pytest.raises(InvalidActionError):
            JointAction(2, 3, (0, 3))
        with pytest.raises(InvalidActionError):
            JointAction(2, 3, (-1, 0))

    def test_wrong_length(self):
        with pytest.raises(InvalidActionError):
            JointAction(2, 3, (0,))

    def test_encode_batch_matches_single(self):
        rng = np.random.default_rng(1)
        acts = [random_action(rng, 3, 4) for _ in range(20)]
        batch = encode_batch(acts, 3, 4)
        for row, a in zip(batch, acts):
            np.testing.assert_array_equal(row, a.encode())


class TestConvexLoss:
    def test_positive_residual_gets_plus_branch(self):
        loss = ConvexLoss(w_plus=1.0, w_minus=0.75)
        assert loss.weight(0.5) == 1.0

    def test_zero_residual_ties_to_plus(self):
        loss = ConvexLoss(w_plus=1.0, w_minus=0.75)
        assert loss.weight(0.0) == 1.0
        assert loss.weight(-1e-12) == 0.75

    def test_symmetric_curvature_ignores_sign(self):
        loss = ConvexLoss(w_plus=0.5, w_minus=0.5)
        assert loss.weight(3.0) == loss.weight(-3.0) == 0.5

    def test_bounds(self):
        loss = ConvexLoss(w_plus=1.0, w_minus=0.75)
        assert loss.eps == 0.75 and loss.mu == 1.0
        rng = np.random.default_rng(2)
        for r in rng.normal(size=100):
            assert loss.eps <= loss.weight(r) <= loss.mu

    def test_invalid_curvatures(self):
        with pytest.raises(ValueError):
            ConvexLoss(w_plus=0.0)
        with pytest.raises(ValueError):
            ConvexLoss(w_minus=-1.0)


class TestDesignState:
    def test_fresh_state(self):
        st = DesignState(2, 2, lam=0.5)
        a = JointAction(2, 2, (0, 1))
        st.register(a)
        np.testing.assert_array_equal(st.theta, np.zeros(4))
        np.testing.assert_array_equal(st.m_accum, np.zeros(4))
        # cached product at t=0 is a / lam and trace is dim * lam
        assert st.quadform(a) == pytest.approx(2 / 0.5)
        assert st.trace_v == pytest.approx(4 * 0.5)
        assert st.logdet == 0.0

    def test_single_update_closed_form(self):
        # two agents with one action each: a = [1, 1], lam = 1
        st = DesignState(2, 1, lam=1.0)
        a = JointAction(2, 1, (0, 0))
        st.update(a, reward=1.0, weight=1.0)
        np.testing.assert_allclose(st.theta, [1 / 3, 1 / 3], atol=1e-12)

    def test_incremental_matches_dense_oracle(self):
        rng = np.random.default_rng(7)
        n, d = 4, 6
        st = DesignState(n, d, lam=1e-2, track_dense_inverse=False)
        cands = [random_action(rng, n, d) for _ in range(15)]
        st.register_all(cands)
        updates = []
        for _ in range(200):
            a = cands[rng.integers(0, len(cands))]
            x = float(rng.normal())
            w = float(rng.choice([0.75, 1.0]))
            st.update(a, x, weight=w)
            updates.append((a.encode(), x, w))
        v, theta = dense_oracle(n * d, 1e-2, updates)
        np.testing.assert_allclose(st.theta, theta, atol=1e-8)
        vinv = np.linalg.inv(v)
        for a in cands:
            np.testing.assert_allclose(
                st._vinv[st.register(a)], vinv @ a.encode(), atol=1e-8
            )

    def test_lazy_registration_replay_matches_dense(self):
        rng = np.random.default_rng(8)
        n, d = 3, 4
        st = DesignState(n, d, lam=1.0, track_dense_inverse=False)
        for _ in range(60):
            st.update(random_action(rng, n, d), float(rng.normal()), weight=1.0)
        late = JointAction(n, d, (3, 3, 3))
        row = st.register(late)
        vinv = np.linalg.inv(st.dense_v())
        np.testing.assert_allclose(st._vinv[row], vinv @ late.encode(), atol=1e-9)

    def test_dense_tracking_agrees_with_replay(self):
        rng = np.random.default_rng(9)
        n, d = 2, 5
        tracked = DesignState(n, d, lam=0.1, track_dense_inverse=True)
        replay = DesignState(n, d, lam=0.1, track_dense_inverse=False)
        seq = [(random_action(rng, n, d), float(rng.normal())) for _ in range(40)]
        for a, x in seq:
            tracked.update(a, x, weight=0.9)
            replay.update(a, x, weight=0.9)
        probe = JointAction(n, d, (4, 4))
        np.testing.assert_allclose(
            tracked._vinv[tracked.register(probe)],
            replay._vinv[replay.register(probe)],
            atol=1e-9,
        )

    def test_trace_law_exact(self):
        rng = np.random.default_rng(10)
        n, d = 3, 3
        st = DesignState(n, d, lam=1e-4)
        total_w = 0.0
        for _ in range(100):
            w = float(rng.choice([0.75, 1.0]))
            st.update(random_action(rng, n, d), float(rng.normal()), weight=w)
            total_w += w
            assert st.trace_v == pytest.approx(n * d * 1e-4 + n * total_w, abs=1e-12)

    def test_logdet_matches_dense_determinant(self):
        rng = np.random.default_rng(11)
        n, d = 2, 4
        st = DesignState(n, d, lam=0.5)
        for _ in range(80):
            st.update(random_action(rng, n, d), float(rng.normal()), weight=1.0)
        _, dense_logdet = np.linalg.slogdet(st.dense_v())
        expected = dense_logdet - n * d * math.log(0.5)
        assert st.logdet == pytest.approx(expected, rel=1e-10)

    def test_weight_from_loss_uses_pre_update_residual(self):
        st = DesignState(2, 1, lam=1.0)
        a = JointAction(2, 1, (0, 0))
        loss = ConvexLoss(w_plus=1.0, w_minus=0.75)
        st.update(a, reward=1.0, loss=loss)  # residual +1 -> weight 1.0
        assert st.history[0][0] == 1.0
        st.update(a, reward=-5.0, loss=loss)  # estimate now positive -> minus branch
        assert st.history[1][0] == 0.75

    def test_rejects_non_finite(self):
        st = DesignState(2, 2)
        a = JointAction(2, 2, (0, 0))
        with pytest.raises(NumericError):
            st.update(a, float("nan"), weight=1.0)
        with pytest.raises(NumericError):
            st.update(a, float("inf"), weight=1.0)
        with pytest.raises(NumericError):
            st.update(a, 1.0, weight=0.0)

    def test_mismatched_shape_rejected(self):
        st = DesignState(2, 2)
        with pytest.raises(InvalidActionError):
            st.register(JointAction(2, 3, (0, 0)))


class TestScores:
    def test_fresh_state_closed_form(self):
        # V = lam*I: radius = sqrt(n/lam), trace = n*d*lam
        st = DesignState(2, 2, lam=1.0)
        a = JointAction(2, 2, (0, 1))
        score = st.ucb_score(a, prior=0.25, c=1.0)
        assert score == pytest.approx(0.25 * 4.0 * math.sqrt(2.0))

    def test_pure_exploitation(self):
        st = DesignState(2, 3, lam=1.0)
        best = JointAction(2, 3, (1, 2))
        st.theta = best.encode() * 10.0
        assert st.ucb_score(best, prior=0.5, c=0.0) == pytest.approx(10.0 * 2)

    def test_score_matches_dense_formula(self):
        rng = np.random.default_rng(12)
        n, d = 3, 3
        st = DesignState(n, d, lam=0.2)
        for _ in range(50):
            st.update(random_action(rng, n, d), float(rng.normal()), weight=1.0)
        vinv = np.linalg.inv(st.dense_v())
        a = JointAction(n, d, (2, 0, 1))
        enc = a.encode()
        expected = enc @ st.theta + 1.3 * 0.1 * st.trace_v * math.sqrt(enc @ vinv @ enc)
        assert st.ucb_score(a, prior=0.1, c=1.3) == pytest.approx(expected, rel=1e-9)

    def test_vectorized_scores_match_scalar(self):
        rng = np.random.default_rng(13)
        n, d = 2, 4
        st = DesignState(n, d, lam=1.0)
        cands = [JointAction(n, d, (i, j)) for i in range(d) for j in range(d)]
        st.register_all(cands)
        for _ in range(30):
            st.update(cands[rng.integers(0, len(cands))], float(rng.normal()), weight=1.0)
        priors = rng.dirichlet(np.ones(len(cands)))
        batch = st.scores_registered(priors=priors, c=0.7)
        for k, a in enumerate(cands):
            assert batch[k] == pytest.approx(st.ucb_score(a, priors[k], 0.7), rel=1e-12)
        beta_batch = st.scores_registered(beta=2.0)
        for k, a in enumerate(cands):
            assert beta_batch[k] == pytest.approx(st.theoretical_score(a, 2.0), rel=1e-12)

    def test_prior_must_be_probability(self):
        st = DesignState(2, 2)
        with pytest.raises(ValueError):
            st.ucb_score(JointAction(2, 2, (0, 0)), prior=1.5, c=1.0)


class TestBetaSchedule:
    def test_initial_value(self):
        sched = BetaSchedule(delta=0.1, s_bound=2.0, mu=1.0, lam=0.25)
        expected = math.sqrt(2 * math.log(10.0)) + 0.5 * 2.0
        assert sched.beta_at(0.0) == pytest.approx(expected)

    def test_floor_and_monotonicity(self):
        sched = BetaSchedule(delta=0.05, s_bound=3.0, mu=0.8, lam=0.04)
        logdets = np.linspace(0.0, 50.0, 100)
        betas = [sched.beta_at(x) for x in logdets]
        assert all(b >= math.sqrt(0.04) * 3.0 for b in betas)
        assert all(b2 >= b1 for b1, b2 in zip(betas, betas[1:]))

    def test_log_growth_with_horizon_confidence(self):
        # delta = 1/T makes beta grow like sqrt(ln T)
        betas = [BetaSchedule(delta=1.0 / t, s_bound=1.0).beta_at(0.0) for t in (10, 100, 1000)]
        assert betas[0] < betas[1] < betas[2]
        growth = (betas[2] - betas[1]) / (betas[1] - betas[0])
        assert growth < 1.0  # concave in ln T

    def test_matches_dense_determinant_after_updates(self):
        rng = np.random.default_rng(14)
        n, d = 2, 3
        st = DesignState(n, d, lam=0.7)
        sched = BetaSchedule(delta=0.1, s_bound=1.0, mu=1.0, lam=0.7)
        for _ in range(40):
            st.update(random_action(rng, n, d), float(rng.normal()), weight=0.75)
        _, logdet_v = np.linalg.slogdet(st.dense_v())
        ratio = logdet_v - n * d * math.log(0.7)
        expected = math.sqrt(2 * (0.5 * ratio + math.log(10.0))) + math.sqrt(0.7)
        assert sched.beta(st) == pytest.approx(expected, rel=1e-10)

    def test_invalid_delta(self):
        with pytest.raises(ValueError):
            BetaSchedule(delta=0.0, s_bound=1.0)
        with pytest.raises(ValueError):
            BetaSchedule(delta=1.0, s_bound=1.0)


class TestEllipticalPotential:
    def test_potential_bounded_by_logdet(self):
        # sum_t min(1, w_t * |a_t|^2_{V_{t-1}^{-1}}) <= 2 * (ln det V_T - ln det V_0)
        rng = np.random.default_rng(15)
        for trial in range(20):
            n, d = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            st = DesignState(n, d, lam=float(rng.uniform(0.01, 2.0)))
            potential = 0.0
            for _ in range(150):
                a = random_action(rng, n, d)
                w = float(rng.choice([0.75, 1.0]))
                potential += min(1.0, w * st.quadform(a))
                st.update(a, float(rng.normal()), weight=w)
            assert potential <= 2.0 * st.logdet + 1e-9
