"""
Tests for the linear-Gaussian reference solutions
"""

import numpy as np
import pytest

from enkbf_nmpc.control.riccati_oracle import LtiSpec, integrate_riccati, kalman_bucy_moments
from enkbf_nmpc.core.errors import DimensionError, RiccatiBlowUpError
from enkbf_nmpc.core.model import InitialLaw, QuadraticCost, quadratic_cost


def _scalar_lti(a=0.0, g=1.0, h=1.0, r=1.0):
    return LtiSpec(A=[[a]], b=[0.0], G=[[g]], H=[[h]], R=[[r]])


def _tanh_error(dt):
    schedule = integrate_riccati(_scalar_lti(), quadratic_cost(1, 1.0, 0.0), 1.0, dt)
    exact = np.tanh(1.0 - schedule.grid)
    return float(np.max(np.abs(schedule.Lambda[:, 0, 0] - exact)))


class TestIntegrateRiccati:
    def test_zero_cost(self, double_integrator):
        """Zero cost gives zero gains"""
        cost = QuadraticCost(V=np.zeros((2, 2)), c=[3.0, -1.0], V_T=np.zeros((2, 2)), c_T=[1.0, 1.0])
        schedule = integrate_riccati(double_integrator, cost, 1.0, 0.01)
        np.testing.assert_array_equal(schedule.Lambda, 0.0)
        np.testing.assert_array_equal(schedule.lam, 0.0)

    def test_tanh_closed_form(self):
        """Scalar Riccati against its tanh closed form"""
        assert _tanh_error(1e-4) < 1e-6
        schedule = integrate_riccati(_scalar_lti(), quadratic_cost(1, 1.0, 0.0), 1.0, 1e-3)
        assert schedule.Lambda[0, 0, 0] == pytest.approx(0.76159, abs=1e-5)

    def test_fourth_order_convergence(self):
        """RK4 error falls with the fourth power of dt"""
        dts = np.array([0.1, 0.05, 0.025])
        errors = np.array([_tanh_error(dt) for dt in dts])
        order = np.polyfit(np.log(dts), np.log(errors), 1)[0]
        assert order >= 3.5

    def test_terminal_node(self, double_integrator):
        """Terminal node carries the terminal weight"""
        cost = quadratic_cost(2, 1.0, 2.0, terminal_target=[1.0, 0.5])
        schedule = integrate_riccati(double_integrator, cost, 1.0, 0.01)
        np.testing.assert_array_equal(schedule.Lambda[-1], 2.0 * np.eye(2))
        np.testing.assert_array_equal(schedule.lam[-1], [-2.0, -1.0])
        assert schedule.mu is None

    def test_symmetric_psd(self, double_integrator):
        """Gains stay symmetric PSD"""
        schedule = integrate_riccati(double_integrator, quadratic_cost(2, 1.0, 1.0), 2.0, 0.01)
        np.testing.assert_array_equal(schedule.Lambda, np.swapaxes(schedule.Lambda, 1, 2))
        assert np.linalg.eigvalsh(schedule.Lambda).min() >= -1e-10

    def test_blow_up_reported(self):
        """Finite escape raises RiccatiBlowUpError"""
        lti = _scalar_lti(a=20.0, g=0.0)
        with pytest.raises(RiccatiBlowUpError) as excinfo:
            integrate_riccati(lti, quadratic_cost(1, 1.0, 1.0), 1.0, 0.01)
        assert excinfo.value.t is not None
        assert 0.0 <= excinfo.value.t < 1.0

    def test_dimension_mismatch(self, double_integrator):
        """Cost and system dimensions must agree"""
        with pytest.raises(DimensionError):
            integrate_riccati(double_integrator, quadratic_cost(3, 1.0, 1.0), 1.0, 0.01)

    def test_csv_matches_schedule_format(self, double_integrator, tmp_path):
        """Oracle CSV uses the gain schedule columns"""
        schedule = integrate_riccati(double_integrator, quadratic_cost(2, 1.0, 1.0), 0.1, 0.01)
        path = schedule.to_csv(tmp_path / "riccati.csv")
        assert path.read_text().splitlines()[0].startswith("t,Lambda_0_0")


class TestKalmanBucyMoments:
    def test_scalar_closed_form(self):
        """Scalar Kalman-Bucy variance against its closed form"""
        law = InitialLaw(mean=[0.0], cov=[[1.0]])
        path = kalman_bucy_moments(_scalar_lti(), law, None, 1.0, 1e-3)
        t = np.linspace(0.0, 1.0, 1001)
        np.testing.assert_allclose(path.cov[:, 0, 0], 1.0 / (1.0 + t), atol=1e-6)

    def test_unobserved_static_covariance_constant(self):
        """Unobserved static covariance stays constant"""
        lti = LtiSpec(A=np.zeros((2, 2)), b=np.zeros(2), G=np.eye(2), H=np.zeros((1, 2)), R=np.eye(1))
        cov = np.array([[0.3, 0.1], [0.1, 0.2]])
        path = kalman_bucy_moments(lti, InitialLaw(np.zeros(2), cov), None, 0.5, 0.01)
        np.testing.assert_allclose(path.cov, np.broadcast_to(cov, path.cov.shape), atol=1e-15)

    def test_degenerate_law_stays_degenerate(self, double_integrator):
        """A degenerate law stays degenerate"""
        di = double_integrator
        lti = LtiSpec(A=np.zeros((2, 2)), b=np.zeros(2), G=di.G, H=di.H, R=di.R)
        path = kalman_bucy_moments(lti, InitialLaw(np.ones(2), np.zeros((2, 2))), None, 1.0, 0.01)
        np.testing.assert_array_equal(path.cov, 0.0)

    def test_symmetric_every_step(self, double_integrator, double_integrator_law):
        """Covariances are symmetric at every node"""
        path = kalman_bucy_moments(double_integrator, double_integrator_law, None, 1.0, 0.01)
        np.testing.assert_allclose(path.cov, np.swapaxes(path.cov, 1, 2), atol=1e-12)
        assert np.linalg.eigvalsh(path.cov).min() >= -1e-10

    def test_control_signal_forms(self):
        """Control paths as None, callable or array"""
        law = InitialLaw(mean=[0.5], cov=[[1.0]])
        grid = np.linspace(0.0, 1.0, 11)
        from_callable = kalman_bucy_moments(_scalar_lti(), law, lambda t: [1.0], 1.0, 0.1)
        from_array = kalman_bucy_moments(_scalar_lti(), law, np.ones((11, 1)), 1.0, 0.1)
        np.testing.assert_allclose(from_callable.mean[:, 0], 0.5 + grid, atol=1e-12)
        np.testing.assert_allclose(from_array.mean, from_callable.mean, atol=1e-12)


class TestLtiSpec:
    def test_to_model(self, double_integrator):
        """LtiSpec converts to a ModelSpec"""
        model = double_integrator.to_model()
        np.testing.assert_allclose(model.f(np.array([1.0, 2.0])), [2.0, 0.0])
        np.testing.assert_allclose(model.h(np.array([1.0, 2.0])), [1.0])
        assert (model.d_x, model.d_u, model.d_y) == (2, 1, 1)

    def test_observation_covariance_must_be_spd(self):
        """R must be SPD"""
        with pytest.raises(DimensionError):
            LtiSpec(A=np.eye(2), b=np.zeros(2), G=np.ones((2, 1)), H=np.ones((1, 2)), R=[[0.0]])

    def test_inconsistent_dimensions(self):
        """Matrix dimensions must agree"""
        with pytest.raises(DimensionError):
            LtiSpec(A=np.eye(2), b=np.zeros(3), G=np.ones((2, 1)), H=np.ones((1, 2)), R=[[1.0]])
