"""
Tests for the environment models and their derived quantities.
"""

import numpy as np
import pytest

from brwtie_lab.environment import (
    AnalyticLaplace,
    GaussianBinary,
    TabulatedLaplace,
    legendre_of_conjugate,
    natural_speed,
)
from brwtie_lab.errors import (
    DomainViolationError,
    InfeasibleEnvironmentError,
    SamplingUnsupportedError,
)
from brwtie_lab.fields import ScalarField

ROOT_2LOG2 = np.sqrt(2.0 * np.log(2.0))


@pytest.fixture
def binary():
    """Binary branching with sigma(t) = 2 - t."""
    return GaussianBinary(ScalarField.linear(2.0, -1.0))


@pytest.fixture
def exponential():
    """Binary branching with Exp(1) displacements."""
    return AnalyticLaplace.exponential(ScalarField.constant(1.0))


class TestGaussianBinary:
    """Test the closed-form Gaussian environment."""

    def test_kappa_and_derivatives(self, binary):
        """Test kappa, kappa' and kappa'' at one point."""
        assert binary.kappa(0.5, 1.0) == pytest.approx(np.log(2.0) + 1.125)
        assert binary.d_kappa(0.5, 1.0) == pytest.approx(2.25)
        assert binary.d2_kappa(0.5, 1.0) == pytest.approx(2.25)

    def test_natural_speed(self, binary):
        """Test v_t = sigma_t sqrt(2 log 2) and theta-bar = sqrt(2 log 2) / sigma_t."""
        speed, theta_bar = natural_speed(binary, np.array([0.0, 1.0]))

        assert np.allclose(speed, [2.0 * ROOT_2LOG2, ROOT_2LOG2])
        assert np.allclose(theta_bar, [ROOT_2LOG2 / 2.0, ROOT_2LOG2])

    def test_conjugate_vanishes_at_natural_speed(self, binary):
        """Test kappa*_t(v_t) = 0."""
        speed, _ = binary.natural_speed(0.3)
        assert binary.kappa_star(0.3, speed) == pytest.approx(0.0, abs=1e-12)

    def test_conjugate_below_mean(self, binary):
        """Test that kappa*_t(a) = -kappa_t(0) for a <= kappa'_t(0)."""
        assert binary.kappa_star(0.5, -1.0) == pytest.approx(-np.log(2.0))
        assert binary.d_kappa_star(0.5, -1.0) == 0.0

    def test_nonpositive_sigma_rejected(self):
        """Test that sigma must stay positive."""
        with pytest.raises(InfeasibleEnvironmentError):
            GaussianBinary(ScalarField.linear(1.0, -2.0))

    def test_homogeneity(self, binary):
        """Test the homogeneity check."""
        assert not binary.is_homogeneous()
        assert GaussianBinary(ScalarField.constant(1.0)).is_homogeneous()

    def test_natural_speed_fields_derivatives(self, binary):
        """Test closed-form derivatives of v and theta-bar."""
        speed, theta_bar = binary.natural_speed_fields()

        assert speed.derivative(0.2) == pytest.approx(-ROOT_2LOG2)
        assert theta_bar.derivative(0.0) == pytest.approx(ROOT_2LOG2 / 4.0)
        assert speed.fundamental_theorem_residual() < 1e-10

    def test_sample_shape(self, binary):
        """Test children displacement array shape."""
        rng = np.random.default_rng(0)
        assert binary.sample_displacements(0.5, 7, rng).shape == (7, 2)


class TestGenericDerivations:
    """Test conjugates and speeds computed numerically from kappa alone."""

    def test_generic_fields_match_closed_form(self, binary):
        """Test numerically differentiated speed fields against exact ones."""
        generic = AnalyticLaplace.gaussian(ScalarField.linear(2.0, -1.0))
        exact_speed, exact_theta = binary.natural_speed_fields()
        speed, theta_bar = generic.natural_speed_fields()
        t = np.linspace(0.05, 0.95, 7)

        assert np.allclose(speed(t), exact_speed(t), atol=1e-10)
        assert np.allclose(speed.derivative(t), exact_speed.derivative(t), atol=1e-5)
        assert np.allclose(
            theta_bar.derivative(t), exact_theta.derivative(t), atol=1e-5
        )

    def test_generic_conjugate_matches_closed_form(self, binary):
        """Test the Newton-based Legendre conjugate."""
        generic = AnalyticLaplace.gaussian(ScalarField.linear(2.0, -1.0))
        a = np.array([0.5, 1.0, 3.0])

        assert np.allclose(generic.kappa_star(0.4, a), binary.kappa_star(0.4, a))
        assert np.allclose(generic.d_kappa_star(0.4, a), binary.d_kappa_star(0.4, a))

    def test_double_conjugate(self, exponential):
        """Test that the conjugate of kappa* recovers kappa."""
        assert legendre_of_conjugate(exponential, 0.5, 0.4) == pytest.approx(
            float(exponential.kappa(0.5, 0.4)), abs=1e-8
        )

    def test_exponential_natural_speed(self, exponential):
        """Test that the exponential law's natural speed zeroes kappa*."""
        speed, theta_bar = exponential.natural_speed(0.5)

        assert 0.0 < theta_bar < 1.0
        assert exponential.kappa_star(0.5, speed) == pytest.approx(0.0, abs=1e-9)

    def test_growth_sign(self, exponential):
        """Test e_t(theta) < 0 below theta-bar and > 0 above."""
        _, theta_bar = exponential.natural_speed(0.5)

        assert exponential.growth(0.5, 0.5 * theta_bar) < 0.0
        assert exponential.growth(0.5, 0.5 * (theta_bar + 1.0)) > 0.0


class TestDomainAndValidation:
    """Test domain checks and infeasible environments."""

    def test_theta_beyond_domain(self, exponential):
        """Test that theta >= beta raises with the offending point."""
        with pytest.raises(DomainViolationError) as exc_info:
            exponential.kappa(0.25, 1.5)

        assert exc_info.value.t == 0.25
        assert exc_info.value.value == 1.5

    def test_negative_theta(self, binary):
        """Test that negative theta is outside the domain."""
        with pytest.raises(DomainViolationError):
            binary.kappa(0.5, -0.1)

    def test_subcritical_rejected(self):
        """Test that kappa_t(0) <= 0 is infeasible."""
        with pytest.raises(InfeasibleEnvironmentError, match="supercritical"):
            AnalyticLaplace.gaussian_growth(ScalarField.constant(1.0), -0.1)

    def test_nonconvex_rejected(self):
        """Test that a concave kappa is infeasible."""
        with pytest.raises(InfeasibleEnvironmentError, match="convex"):
            AnalyticLaplace(
                "concave",
                kappa_fn=lambda t, th: 1.0 + th - th**2,
                d_kappa_fn=lambda t, th: 1.0 - 2.0 * th,
                d2_kappa_fn=lambda t, th: np.full(np.shape(th), -2.0),
            )

    def test_no_sampler(self):
        """Test that a kappa-only environment cannot sample children."""
        env = AnalyticLaplace.gaussian_growth(ScalarField.constant(1.0), 0.5)

        with pytest.raises(SamplingUnsupportedError):
            env.sample_displacements(0.0, 1, np.random.default_rng(0))


class TestTiltedSampling:
    """Test spine step samplers."""

    def test_gaussian_tilt_mean(self, binary):
        """Test that the Gaussian tilt shifts the mean to phi sigma^2."""
        sample = binary.tilted_step_sampler(0.0, 0.5)
        steps = sample(np.random.default_rng(1), 100_000)

        assert steps.mean() == pytest.approx(2.0, abs=0.03)
        assert steps.std() == pytest.approx(2.0, abs=0.03)

    def test_generic_tilt_mean(self, exponential):
        """Test the inverse-CDF tilt of an exponential law."""
        sample = exponential.tilted_step_sampler(0.5, 0.5)
        steps = sample(np.random.default_rng(2), 200_000)

        assert steps.min() >= 0.0
        assert steps.mean() == pytest.approx(
            float(exponential.d_kappa(0.5, 0.5)), abs=0.03
        )


class TestTabulatedLaplace:
    """Test tabulated kappa."""

    def test_matches_source(self, binary):
        """Test spline interpolation against the tabulated environment."""
        table = TabulatedLaplace.from_environment(
            binary, np.linspace(0.0, 1.0, 65), np.linspace(0.0, 4.0, 81)
        )

        assert table.kappa(0.5, 1.3) == pytest.approx(
            float(binary.kappa(0.5, 1.3)), rel=1e-4
        )
        assert table.d_kappa(0.5, 1.3) == pytest.approx(
            float(binary.d_kappa(0.5, 1.3)), rel=1e-3
        )

    def test_delegates_sampling(self, binary):
        """Test that sampling goes through the base law."""
        table = TabulatedLaplace.from_environment(
            binary, [0.0, 1.0], np.linspace(0.0, 4.0, 41)
        )
        rng = np.random.default_rng(0)
        assert table.sample_displacements(0.5, 3, rng).shape == (3, 2)

    def test_shape_mismatch(self):
        """Test that a wrongly shaped table is rejected."""
        with pytest.raises(ValueError, match="shape"):
            TabulatedLaplace([0.0, 1.0], [0.0, 1.0, 2.0], np.ones((2, 2)))

    def test_must_cover_unit_interval(self):
        """Test that the time grid must span [0, 1]."""
        with pytest.raises(ValueError, match="cover"):
            TabulatedLaplace([0.0, 0.5], [0.0, 1.0], np.ones((2, 2)))

    def test_no_base_cannot_sample(self):
        """Test that a bare table refuses to sample."""
        table = TabulatedLaplace(
            [0.0, 1.0], [0.0, 1.0, 2.0], np.log(2.0) + np.ones((2, 3))
        )
        with pytest.raises(SamplingUnsupportedError):
            table.tilted_step_sampler(0.5, 0.5)
