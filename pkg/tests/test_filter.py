"""
Tests for the ensemble Kalman-Bucy filter steps
"""

import numpy as np
import pytest

from enkbf_nmpc.core.ensemble import Ensemble, moment_matched_initial
from enkbf_nmpc.core.errors import DimensionError, DivergenceError
from enkbf_nmpc.core.filter import (
    FilterState,
    assimilate_members,
    assimilate_step,
    simulate_members,
    simulated_step,
)
from enkbf_nmpc.core.model import InitialLaw, linear_model


def _state(members, t=0.0):
    return FilterState(Ensemble(np.asarray(members, dtype=float)), t)


class TestAssimilateStep:
    def test_hand_computed_step(self, scalar_model):
        """One assimilation step against a hand computation"""
        dt = 0.01
        new = assimilate_step(_state([[-1.0], [1.0]]), scalar_model, np.zeros(1), np.zeros(1), dt)
        np.testing.assert_allclose(new.ensemble.members, [[-1.0 + dt / 2], [1.0 - dt / 2]])
        assert new.t == pytest.approx(dt)

    def test_zero_gain_keeps_deviations(self):
        """No observation coupling leaves deviations alone"""
        model = linear_model(
            np.zeros((2, 2)), np.zeros(2), np.eye(2), np.zeros((1, 2)), np.eye(1)
        )
        members = np.random.default_rng(0).normal(size=(5, 2))
        new = assimilate_step(_state(members), model, np.zeros(2), np.zeros(1), 0.1)
        np.testing.assert_allclose(new.ensemble.members, members)

    def test_rejects_bad_increment(self, scalar_model):
        """Increment shape is checked"""
        with pytest.raises(DimensionError):
            assimilate_step(_state([[0.0], [1.0]]), scalar_model, np.zeros(1), np.zeros(2), 0.1)

    def test_rejects_non_positive_dt(self, scalar_model):
        """dt must be positive"""
        with pytest.raises(DimensionError):
            assimilate_step(_state([[0.0], [1.0]]), scalar_model, np.zeros(1), np.zeros(1), 0.0)

    def test_non_finite_member(self, scalar_model):
        """Non-finite members raise DivergenceError"""
        with np.errstate(invalid="ignore"):
            with pytest.raises(DivergenceError):
                assimilate_members(
                    np.array([[np.inf], [1.0]]), scalar_model, np.zeros(1), np.zeros(1), 0.1
                )


class TestSimulatedStep:
    def test_pure_control_translation(self):
        """Control shifts every member equally"""
        model = linear_model(
            np.zeros((2, 2)), np.zeros(2), np.eye(2), np.zeros((1, 2)), np.eye(1)
        )
        members = np.random.default_rng(1).normal(size=(4, 2))
        v = np.array([1.0, -2.0])
        new = simulated_step(_state(members), model, v, np.zeros(1), 0.05)
        np.testing.assert_allclose(new.ensemble.members, members + 0.05 * v)

    def test_collapsed_ensemble_stays_collapsed(self, scalar_model):
        """Collapsed ensembles stay collapsed"""
        members = np.full((6, 1), 0.7)
        new = simulated_step(_state(members), scalar_model, np.zeros(1), np.array([0.3]), 0.01)
        deviations = new.ensemble.deviations()
        np.testing.assert_allclose(deviations, 0.0, atol=1e-15)

    def test_variance_contracts(self, scalar_model):
        """Observed variance contracts"""
        members = np.array([[-1.0], [1.0], [0.5], [-0.5]])
        C = float(np.mean(members**2))
        dt = 1e-3
        new = simulated_step(_state(members), scalar_model, np.zeros(1), np.array([0.2]), dt)
        ratio = float(new.ensemble.covariance()[0, 0]) / C
        assert ratio == pytest.approx(1.0 - C * dt, abs=1e-5)

    def test_noise_moves_only_the_mean(self, scalar_model):
        """Simulated noise shifts the mean only"""
        members = np.array([[-1.0], [1.0], [0.25]])
        a = simulated_step(_state(members), scalar_model, np.zeros(1), np.zeros(1), 0.01)
        b = simulated_step(_state(members), scalar_model, np.zeros(1), np.array([0.4]), 0.01)
        shift = b.ensemble.members - a.ensemble.members
        np.testing.assert_allclose(shift, shift[0] * np.ones_like(shift), atol=1e-15)


class TestBatchedSteps:
    def setup_method(self):
        """Batch of pendulum ensembles"""
        self.model = linear_model(
            np.array([[0.0, 1.0], [-1.0, -0.2]]),
            np.zeros(2),
            np.array([[0.0], [1.0]]),
            np.array([[1.0, 0.0]]),
            np.array([[0.5]]),
        )
        rng = np.random.default_rng(2)
        self.members = rng.normal(size=(3, 6, 2))
        self.u = rng.normal(size=(3, 1))
        self.dW = rng.normal(size=(3, 1)) * 0.1

    def test_batch_matches_loop(self):
        """Batched steps match the per-realization loop"""
        batch = simulate_members(self.members, self.model, self.u, self.dW, 0.01)
        for k in range(3):
            single = simulate_members(self.members[k], self.model, self.u[k], self.dW[k], 0.01)
            np.testing.assert_allclose(batch[k], single, atol=1e-14)

    def test_forms_agree_on_deviations(self):
        """Both forms move deviations identically"""
        a = assimilate_members(self.members[0], self.model, self.u[0], self.dW[0], 0.01)
        b = simulate_members(self.members[0], self.model, self.u[0], self.dW[0], 0.01)
        np.testing.assert_allclose(
            a - a.mean(axis=0), b - b.mean(axis=0), atol=1e-13
        )

    def test_control_batch_mismatch(self):
        """Control batch must match the ensembles"""
        with pytest.raises(DimensionError):
            simulate_members(self.members, self.model, np.zeros((2, 1)), self.dW, 0.01)


def test_covariance_stays_symmetric_psd():
    """Covariance stays symmetric PSD over many steps"""
    model = linear_model(
        np.array([[0.0, 1.0], [0.0, 0.0]]),
        np.zeros(2),
        np.array([[0.0], [1.0]]),
        np.array([[1.0, 0.0]]),
        np.eye(1),
    )
    law = InitialLaw(mean=np.array([1.0, 0.0]), cov=0.1 * np.eye(2))
    rng = np.random.default_rng(3)
    state = FilterState(moment_matched_initial(law, 8, rng))
    for _ in range(200):
        state = assimilate_step(state, model, np.zeros(1), rng.normal(size=1) * 0.03, 0.005)
        cov = state.ensemble.covariance()
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.linalg.eigvalsh(cov)[0] >= -1e-10
