"""
Tests for the rate functionals and the barrier functional H.
"""

import numpy as np
import pytest

from brwtie_lab.airy import HALFLINE_CONSTANT, psi
from brwtie_lab.environment import GaussianBinary
from brwtie_lab.errors import PreconditionError
from brwtie_lab.fields import IndicatorSet, ScalarField
from brwtie_lab.functional import (
    BarrierSpec,
    composite_integral,
    energy_K,
    energy_K_running,
    eval_H,
    integrate_H,
    running_H,
    spine_energy,
)

UNIT = ScalarField.constant(1.0)
LOG2 = np.log(2.0)


def band(f=-1.0, g=1.0, F=None, G=None, h=None):
    """Constant barriers with the given sets and weight."""
    return BarrierSpec(
        f=ScalarField.constant(f),
        g=ScalarField.constant(g),
        F=F if F is not None else IndicatorSet.full(),
        G=G if G is not None else IndicatorSet.full(),
        h=h if h is not None else ScalarField.constant(0.0),
    )


class TestQuadrature:
    """Test the composite Gauss-Legendre rule."""

    def test_polynomial_exact(self):
        """Test that low-degree polynomials integrate exactly."""
        assert composite_integral(lambda t: t**2, 0.0, 1.0) == pytest.approx(1 / 3)

    def test_kink_split(self):
        """Test that a cut at the kink keeps |t - 1/2| exact."""
        value = composite_integral(lambda t: np.abs(t - 0.5), 0.0, 1.0, (0.5,), 1)
        assert value == pytest.approx(0.25, abs=1e-14)


class TestEnergies:
    """Test K* and the spine energy."""

    def test_energy_k_constant_profile(self):
        """Test K*(b)_1 = b^2 / 2 - log 2 for unit Gaussian steps."""
        env = GaussianBinary(UNIT)
        assert energy_K(env, ScalarField.constant(1.5)) == pytest.approx(
            1.125 - LOG2, abs=1e-12
        )

    def test_energy_k_vanishes_at_natural_speed(self):
        """Test K*(v)_1 = 0 along the natural speed."""
        env = GaussianBinary(ScalarField.linear(2.0, -1.0))
        speed, _ = env.natural_speed_fields()
        assert energy_K(env, speed) == pytest.approx(0.0, abs=1e-10)

    def test_running_energy(self):
        """Test that running K* grows linearly for a constant integrand."""
        env = GaussianBinary(UNIT)
        values = energy_K_running(env, ScalarField.constant(0.0), [0.0, 0.5, 1.0])
        assert np.allclose(values, [0.0, -0.5 * LOG2, -LOG2])

    def test_spine_energy(self):
        """Test E(phi)_t = t (phi^2 / 2 - log 2)."""
        env = GaussianBinary(UNIT)
        phi = ScalarField.constant(2.0)
        assert spine_energy(env, phi, 0.5) == pytest.approx(0.5 * (2.0 - LOG2))


class TestBarrierSpec:
    """Test barrier preconditions."""

    def test_weight_must_fall_inside_f(self):
        """Test that a falling weight outside F is rejected."""
        spec = band(F=IndicatorSet([(0.0, 0.2)]), h=ScalarField.linear(0.0, -1.0))
        with pytest.raises(PreconditionError, match="decreases outside F"):
            spec.check_weight_sets()

    def test_weight_must_rise_inside_g(self):
        """Test that a rising weight outside G is rejected."""
        spec = band(G=IndicatorSet.empty(), h=ScalarField.linear(0.0, 1.0))
        with pytest.raises(PreconditionError, match="increases outside G"):
            spec.check_weight_sets()

    def test_barriers_must_not_cross(self):
        """Test that f < g is required."""
        with pytest.raises(PreconditionError, match="meets"):
            band(f=1.0, g=1.0).check_barriers()

    def test_start_between_barriers(self):
        """Test that 0 must lie in (f(0), g(0))."""
        with pytest.raises(PreconditionError, match="outside"):
            band(f=0.5, g=1.0).check_barriers()

    @pytest.mark.parametrize("f, g", [(0.0, 1.0), (-1.0, 0.0)])
    def test_start_on_a_barrier_rejected(self, f, g):
        """Test that a barrier starting at the root is refused."""
        with pytest.raises(PreconditionError, match="outside"):
            band(f=f, g=g).check_barriers()

    def test_start_strictly_inside(self):
        """Test that f(0) < 0 < g(0) passes both checks."""
        band(f=-1e-9, g=1e-9).validate()

    def test_weight_without_derivative(self):
        """Test that h needs an attached derivative."""
        spec = band(h=ScalarField.from_samples([0.0, 0.0]))
        with pytest.raises(PreconditionError, match="derivative"):
            spec.h_dot(np.array([0.5]))

    def test_breakpoints_collect_set_endpoints(self):
        """Test that interior set endpoints become quadrature cuts."""
        spec = band(F=IndicatorSet([(0.0, 0.3)]), G=IndicatorSet([(0.6, 1.0)]))
        assert spec.breakpoints() == (0.3, 0.6)


class TestBarrierFunctional:
    """Test H in each barrier regime."""

    def test_flat_band(self):
        """Test H = -pi^2 sigma^2 / (2 w^2) for a flat band of width w."""
        assert eval_H(band(), UNIT) == pytest.approx(-(np.pi**2) / 8.0, abs=1e-9)

    def test_flat_band_with_sigma(self):
        """Test the sigma^2 scaling."""
        value = eval_H(band(), ScalarField.constant(2.0))
        assert value == pytest.approx(-(np.pi**2) / 2.0, abs=1e-9)

    def test_both_barriers_with_slope(self):
        """Test the Psi term when the weight rises between two barriers."""
        spec = band(f=-0.5, g=0.5, h=ScalarField.linear(0.0, 1.0))
        assert eval_H(spec, UNIT) == pytest.approx(0.5 + psi(1.0), abs=1e-8)

    def test_upper_barrier_only(self):
        """Test h' g + A (h' sigma)^(2/3) on G alone."""
        spec = band(F=IndicatorSet.empty(), h=ScalarField.linear(0.0, 1.0))
        assert eval_H(spec, UNIT) == pytest.approx(1.0 + HALFLINE_CONSTANT, abs=1e-10)

    def test_lower_barrier_only(self):
        """Test h' f + A (-h' sigma)^(2/3) on F alone."""
        spec = band(G=IndicatorSet.empty(), h=ScalarField.linear(0.0, -1.0))
        assert eval_H(spec, UNIT) == pytest.approx(1.0 + HALFLINE_CONSTANT, abs=1e-10)

    def test_no_barrier_flat_weight(self):
        """Test that a constant weight with no barrier contributes nothing."""
        spec = band(F=IndicatorSet.empty(), G=IndicatorSet.empty())
        assert eval_H(spec, UNIT) == 0.0

    def test_regimes_split_at_set_endpoint(self):
        """Test that H switches regime exactly at the end of F."""
        spec = band(F=IndicatorSet([(0.0, 0.5)]))
        assert eval_H(spec, UNIT) == pytest.approx(-(np.pi**2) / 16.0, abs=1e-9)

    def test_running_values(self):
        """Test H_t on several times from one partition."""
        values = running_H(band(), UNIT, [0.0, 0.25, 1.0])
        assert np.allclose(values, -(np.pi**2) / 8.0 * np.array([0.0, 0.25, 1.0]))

    def test_partial_integral(self):
        """Test integrate_H over a sub-interval."""
        value = integrate_H(band(), UNIT, 0.5, 1.0)
        assert value == pytest.approx(-(np.pi**2) / 16.0, abs=1e-9)

    def test_eval_checks_weight_sets(self):
        """Test that eval_H enforces the weight monotonicity rules."""
        spec = band(G=IndicatorSet.empty(), h=ScalarField.linear(0.0, 1.0))
        with pytest.raises(PreconditionError):
            eval_H(spec, UNIT)
