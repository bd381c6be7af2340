import math
import unittest

import numpy as np

from mtcool.clique_learner import (
    HedgeCliqueLearner,
    InteractionMatrix,
    KTBettor,
    KTCliqueLearner,
    KTLearnerBank,
    dykstra_project,
    hedge_weights,
    kt_bet,
    make_learner,
    restore_snapshot,
)
from mtcool.domain import LearnerKind, LearnerStateError, ProjectionMode
from mtcool.graph_core import task_variance


def _drive(learner, steps, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    for _ in range(steps):
        idx = int(rng.integers(learner.n))
        learner.predict(idx)
        gradient = rng.normal(size=learner.d)
        learner.update(idx, scale * gradient / max(1.0, np.linalg.norm(gradient)))


class InteractionMatrixTests(unittest.TestCase):
    def test_inverse_diagonal_formula(self):
        for n in range(2, 21):
            with self.subTest(n=n):
                interaction = InteractionMatrix(n)
                inverse = np.linalg.inv(interaction.matrix())
                np.testing.assert_allclose(np.diag(inverse), interaction.inverse_diagonal,
                                           rtol=0, atol=1e-12)
                np.testing.assert_allclose(inverse, interaction.inverse(), rtol=0, atol=1e-12)

    def test_norm_splits_into_row_norms_and_variance(self):
        rng = np.random.default_rng(10)
        for n in range(2, 21):
            interaction = InteractionMatrix(n)
            for _ in range(100):
                x = rng.normal(size=(n, 3))
                expected = float(np.sum(x * x)) + n * (n - 1) * task_variance(x)
                direct = float(np.trace(x.T @ interaction.matrix() @ x))
                self.assertAlmostEqual(interaction.norm_sq(x), expected, delta=1e-9 * max(1.0, expected))
                self.assertAlmostEqual(direct, expected, delta=1e-9 * max(1.0, expected))

    def test_apply_inverse_matches_dense_inverse(self):
        x = np.random.default_rng(1).normal(size=(5, 2))
        interaction = InteractionMatrix(5)

        np.testing.assert_allclose(interaction.apply_inverse(x), interaction.inverse() @ x,
                                   atol=1e-14)

    def test_rejects_empty_clique(self):
        with self.assertRaises(LearnerStateError):
            InteractionMatrix(0)


class HedgeWeightTests(unittest.TestCase):
    def test_uniform_at_zero_loss(self):
        np.testing.assert_allclose(hedge_weights(np.zeros(4), 1.0, 4), np.full(4, 0.25))

    def test_lower_loss_gets_more_mass(self):
        weights = hedge_weights(np.array([0.0, 1.0, 2.0]), 1.0, 3)

        self.assertAlmostEqual(weights.sum(), 1.0)
        self.assertTrue(weights[0] > weights[1] > weights[2])

    def test_huge_losses_stay_finite(self):
        weights = hedge_weights(np.array([1e6, 1e6 + 1.0]), 1e-3, 2)

        self.assertTrue(np.all(np.isfinite(weights)))
        self.assertAlmostEqual(weights.sum(), 1.0)

    def test_hedge_regret_bound_on_random_sequences(self):
        rng = np.random.default_rng(21)
        horizon = 400
        for trial in range(20):
            n = int(rng.integers(2, 9))
            losses = rng.uniform(0.0, 1.0, size=(horizon, n))
            losses[:, trial % n] *= 0.7
            cumloss = np.zeros(n)
            mixed = 0.0
            for t in range(horizon):
                mixed += float(hedge_weights(cumloss, math.sqrt(1 + t), n) @ losses[t])
                cumloss += losses[t]

            with self.subTest(trial=trial, n=n):
                self.assertLessEqual(
                    mixed, cumloss.min() + 2.0 * math.sqrt(horizon * math.log(n)) + 1.0)

    def test_nonpositive_beta_is_rejected(self):
        with self.assertRaises(LearnerStateError):
            hedge_weights(np.zeros(2), 0.0, 2)


class KTBettorTests(unittest.TestCase):
    def test_bet_formula(self):
        self.assertEqual(kt_bet(1, 0.0, 0.0), 0.0)
        self.assertAlmostEqual(kt_bet(3, 1.0, 0.5), -(1.0 / 3) * 0.5)

    def test_wealth_stays_positive_on_bounded_outcomes(self):
        bettor = KTBettor()
        rng = np.random.default_rng(3)
        for _ in range(2000):
            bettor.observe(float(rng.choice([-1.0, 1.0, rng.uniform(-1, 1)])))
            self.assertGreater(bettor.wealth, 0.0)
            self.assertLessEqual(abs(bettor.bet), bettor.wealth + 1e-12)


class DykstraTests(unittest.TestCase):
    def test_feasible_points_are_fixed(self):
        point = np.array([[0.1, 0.0], [0.0, 0.1]])

        np.testing.assert_array_equal(dykstra_project(point, 1.0), point)

    def test_projection_lands_in_both_sets(self):
        point = np.random.default_rng(4).normal(scale=2.0, size=(6, 3))
        for xi in (0.05, 0.5, 1.0):
            with self.subTest(xi=xi):
                projected = dykstra_project(point, xi)
                self.assertTrue(np.all(np.linalg.norm(projected, axis=1) <= 1.0 + 1e-9))
                self.assertLessEqual(task_variance(projected), xi + 1e-3)


class HedgeCliqueLearnerTests(unittest.TestCase):
    def test_first_prediction_is_zero(self):
        learner = HedgeCliqueLearner(3, 2)

        np.testing.assert_array_equal(learner.predict(1), np.zeros(2))

    def test_row_predictions_match_the_full_matrix(self):
        learner = HedgeCliqueLearner(4, 3, beta_scale=0.5)
        _drive(learner, 40)

        matrix = learner.predict_matrix()
        for idx in range(4):
            np.testing.assert_allclose(learner.predict(idx), matrix[idx], atol=1e-12)

    def test_experts_respect_their_radii(self):
        learner = HedgeCliqueLearner(5, 2, beta_scale=0.2)
        _drive(learner, 60, seed=2, scale=1.0)

        experts = learner.experts()
        radii = learner.expert_radii()
        self.assertEqual(experts.shape, (5, 5, 2))
        for k in range(5):
            self.assertLessEqual(learner.interaction.norm(experts[k]), radii[k] + 1e-9)
        np.testing.assert_array_equal(learner.expert_prediction(learner.grid[2]), experts[2])
        with self.assertRaises(LearnerStateError):
            learner.expert_prediction(0.33)

    def test_exact_projection_stays_in_the_ball(self):
        learner = HedgeCliqueLearner(3, 2, projection=ProjectionMode.EXACT)
        _drive(learner, 20, seed=5, scale=1.0)

        matrix = learner.predict_matrix()
        self.assertTrue(np.all(np.linalg.norm(matrix, axis=1) <= 1.0 + 1e-9))

    def test_update_moves_every_row(self):
        learner = HedgeCliqueLearner(3, 1)
        learner.update(0, np.array([1.0]))

        matrix = learner.predict_matrix()
        self.assertTrue(np.all(matrix < 0))
        self.assertLess(matrix[0, 0], matrix[1, 0])
        self.assertEqual(learner.local_t, 1)

    def test_invalid_arguments(self):
        with self.assertRaises(LearnerStateError):
            HedgeCliqueLearner(2, 2, beta_scale=-1.0)
        self.assertEqual(HedgeCliqueLearner(2, 2, beta_scale=0.0).beta_scale, 1.0)
        with self.assertRaises(LearnerStateError):
            HedgeCliqueLearner(2, 2).predict(2)

    def test_expert_size_grows_with_the_variance_level(self):
        learner = HedgeCliqueLearner(5, 2, beta_scale=0.2)
        for seed in range(4):
            _drive(learner, 15, seed=seed, scale=1.0)
            sizes = np.linalg.norm(learner.experts(), axis=(1, 2))

            with self.subTest(steps=learner.local_t):
                self.assertTrue(np.all(np.diff(sizes) >= -1e-12))

    def test_pair_clique_shares_a_gradient_with_the_silent_member(self):
        learner = HedgeCliqueLearner(2, 2)
        g = 0.1
        learner.update(0, np.array([g, 0.0]))

        beta = math.sqrt(2)
        for k, xi in enumerate(learner.grid):
            rate = (2 / beta) * math.sqrt(1 + xi)
            expected = -rate * np.array([[2 * g / 3, 0.0], [g / 3, 0.0]])
            with self.subTest(xi=xi):
                np.testing.assert_allclose(learner.expert_prediction(xi), expected, atol=1e-12)
                self.assertLess(learner.experts()[k][1, 0], 0.0)

    def test_gradient_excess_warns_once(self):
        learner = HedgeCliqueLearner(2, 1, lipschitz=1.0)

        with self.assertLogs("mtcool.clique_learner", level="WARNING") as logs:
            learner.update(0, np.array([5.0]))
            learner.update(1, np.array([5.0]))

        self.assertEqual(len(logs.records), 1)


class KTCliqueLearnerTests(unittest.TestCase):
    def test_row_predictions_match_the_full_matrix(self):
        learner = KTCliqueLearner(4, 3)
        _drive(learner, 50, seed=7)

        matrix = learner.predict_matrix()
        for idx in range(4):
            np.testing.assert_allclose(learner.predict(idx), matrix[idx], atol=1e-12)

    def test_single_agent_alternating_signs(self):
        learner = KTCliqueLearner(1, 2)
        horizon = 4096
        regret = 0.0
        for t in range(horizon):
            gradient = np.array([1.0 if t % 2 == 0 else -1.0, 0.0])
            regret += float(gradient @ learner.predict(0))
            learner.update(0, gradient)

        # The gradients cancel, so the best fixed point is 0 with zero loss.
        self.assertLessEqual(regret, 2.5 * math.sqrt(horizon))
        self.assertGreater(learner.bettor.wealth, 0.0)


class KTLearnerBankTests(unittest.TestCase):
    def test_matches_standalone_learners(self):
        sizes = [1, 3, 4, 2]
        scales = [0.5, 1.0, 0.0, 2.0]
        bank = KTLearnerBank(sizes, 3, scales, lipschitz=1.5)
        learners = [KTCliqueLearner(n, 3, s, 1.5) for n, s in zip(sizes, scales)]
        rng = np.random.default_rng(17)

        for _ in range(300):
            chosen = rng.choice(len(sizes), size=int(rng.integers(1, len(sizes) + 1)),
                                replace=False)
            positions = np.array([rng.integers(sizes[k]) for k in chosen])
            rows = bank.direction_rows(chosen, positions)
            predictions = bank.bets[chosen, None] * rows
            gradients = rng.normal(size=(len(chosen), 3))
            gradients /= np.maximum(1.0, np.linalg.norm(gradients, axis=1, keepdims=True))
            for k, position, prediction in zip(chosen, positions, predictions):
                np.testing.assert_allclose(
                    learners[k].predict(int(position)), prediction, rtol=0, atol=1e-10)
            for k, position, gradient in zip(chosen, positions, gradients):
                learners[k].update(int(position), gradient)
            bank.update(chosen, positions, rows, gradients)

        for k, learner in enumerate(learners):
            unpacked = bank.learner(k)
            with self.subTest(learner=k):
                np.testing.assert_allclose(unpacked.theta, learner.theta, atol=1e-12)
                self.assertAlmostEqual(unpacked.bettor.bet, learner.bettor.bet, delta=1e-10)
                self.assertEqual(unpacked.local_t, learner.local_t)

    def test_rejects_bad_shapes(self):
        with self.assertRaises(LearnerStateError):
            KTLearnerBank([], 2)
        with self.assertRaises(LearnerStateError):
            KTLearnerBank([2, 0], 2)
        with self.assertRaises(LearnerStateError):
            KTLearnerBank([2, 2], 2, beta_scales=[1.0])


class SnapshotTests(unittest.TestCase):
    def test_restore_reproduces_predictions(self):
        for kind in LearnerKind:
            with self.subTest(kind=kind):
                learner = make_learner(kind, 3, 2, beta_scale=0.7)
                _drive(learner, 25, seed=9)
                restored = restore_snapshot(learner.to_snapshot())
                for idx in range(3):
                    np.testing.assert_array_equal(restored.predict(idx), learner.predict(idx))


if __name__ == "__main__":
    unittest.main()
