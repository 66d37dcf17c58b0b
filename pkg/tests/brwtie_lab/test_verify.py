"""
Tests for the acceptance checks.
"""

from unittest.mock import patch

import numpy as np
import pytest

from brwtie_lab.errors import ConvergenceError
from brwtie_lab.models import CheckResult
from brwtie_lab.verify import (
    FULL,
    HOMOGENEOUS_LAMBDA_STAR,
    QUICK,
    check_airy_zeros,
    check_determinism,
    check_psi_at_zero,
    check_psi_reflection,
    run_checks,
    unit_environment,
)


def failing_check(_seed):
    raise ConvergenceError("iteration limit reached", residuals={"energy": 1.0})


def passing_check(_seed):
    return CheckResult(name="passing", passed=True)


class TestProfiles:
    """Test profile composition and error handling."""

    def test_full_extends_quick(self):
        """Test that the full profile contains every quick check."""
        assert FULL[: len(QUICK)] == QUICK
        assert len(FULL) > len(QUICK)

    def test_errors_become_failures(self):
        """Test that a laboratory error is reported as a failed check."""
        with patch("brwtie_lab.verify.QUICK", (passing_check, failing_check)):
            results = run_checks("quick", seed=0)

        assert [r.passed for r in results] == [True, False]
        assert results[1].name == "failing_check"
        assert "ConvergenceError" in results[1].detail
        assert "iteration limit reached" in results[1].detail

    def test_unexpected_errors_propagate(self):
        """Test that programming errors are not swallowed."""

        def broken(_seed):
            raise ZeroDivisionError

        with patch("brwtie_lab.verify.QUICK", (broken,)):
            with pytest.raises(ZeroDivisionError):
                run_checks("quick")


class TestClosedFormChecks:
    """Test the fast closed-form checks."""

    def test_airy_zeros(self):
        """Test the first Airy zero and the residuals of fifty zeros."""
        assert check_airy_zeros(0).passed

    def test_psi_at_zero(self):
        """Test Psi(0) = -pi^2 / 2 and the slope at the origin."""
        result = check_psi_at_zero(0)
        assert result.passed
        assert result.value == pytest.approx(-(np.pi**2) / 2.0)

    def test_psi_reflection(self):
        """Test Psi(h) - Psi(-h) = -h."""
        assert check_psi_reflection(0).passed

    def test_determinism(self):
        """Test that repeated seeded runs produce identical tables."""
        assert check_determinism(3).passed

    def test_unit_environment(self):
        """Test theta* = 1 for the homogeneous unit environment."""
        env = unit_environment()
        assert float(env.kappa(0.0, 1.0)) == pytest.approx(float(env.d_kappa(0.0, 1.0)))
        assert HOMOGENEOUS_LAMBDA_STAR == pytest.approx(2.4554, abs=1e-3)


@pytest.mark.slow
class TestProfilesEndToEnd:
    """Run whole profiles."""

    def test_quick_profile_passes(self):
        """Test that every quick check passes."""
        results = run_checks("quick", seed=1)
        assert [r.name for r in results if not r.passed] == []

    def test_full_profile_passes(self):
        """Test that every full check passes."""
        results = run_checks("full", seed=1)
        assert [r.name for r in results if not r.passed] == []
