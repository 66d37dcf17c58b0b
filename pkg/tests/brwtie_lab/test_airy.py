"""
Tests for the Airy functions, their zeros and the Psi eigenvalue function.
"""

from unittest.mock import patch

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from brwtie_lab.airy import (
    ALPHA_1,
    CBRT2,
    PSI_ZERO,
    LatticePsi,
    PsiEvaluator,
    ai,
    airy_zero,
    airy_zero_table,
    bi,
    cross_wronskian_root,
    eigenfunction_halfline,
    eigenfunction_interval,
    normalized_cross_wronskian,
    psi,
    scaled_eigenvalue,
)
from brwtie_lab.errors import AiryOverflowError


class TestAiryFunctions:
    """Test Airy values, zeros and overflow handling."""

    def test_first_zero(self):
        """Test the first zero of Ai against its tabulated value."""
        assert ALPHA_1 == pytest.approx(-2.338107410459767, abs=1e-12)
        assert abs(ai(ALPHA_1)) < 1e-12

    def test_zeros_decrease(self):
        """Test that zeros are listed in decreasing order."""
        table = airy_zero_table(5)

        assert table.count == 5
        assert table.zeros[0] == ALPHA_1
        assert all(a > b for a, b in zip(table.zeros, table.zeros[1:]))
        assert airy_zero(3) == table.zeros[2]

    def test_zero_asymptotics(self):
        """Test |alpha_n| / n^(2/3) against (3 pi / 2)^(2/3) at n = 50."""
        ratio = abs(airy_zero(50)) / 50 ** (2.0 / 3.0)
        assert ratio == pytest.approx((1.5 * np.pi) ** (2.0 / 3.0), rel=5e-2)
        assert abs(ai(airy_zero(50))) < 1e-8

    def test_zero_index_must_be_positive(self):
        """Test that index zero is rejected."""
        with pytest.raises(ValueError):
            airy_zero(0)
        with pytest.raises(ValueError):
            airy_zero_table(0)

    def test_bi_overflow(self):
        """Test that Bi overflow raises with the offending abscissa."""
        with pytest.raises(AiryOverflowError) as exc_info:
            bi(np.array([1.0, 200.0]))

        assert exc_info.value.x == 200.0

    def test_bi_finite(self):
        """Test a finite Bi value."""
        assert bi(0.0) == pytest.approx(0.6149266274460007, rel=1e-12)


class TestHalflineEigenfunctions:
    """Test the Airy half-line eigen-system."""

    def test_boundary_value_and_slope(self):
        """Test psi_n(0) = 0 and psi_n'(0) = 1."""
        for n in (1, 2, 3):
            assert abs(eigenfunction_halfline(n, 0.0)) < 1e-12
            slope = (eigenfunction_halfline(n, 1e-7) - eigenfunction_halfline(n, 0.0))
            assert slope / 1e-7 == pytest.approx(1.0, rel=1e-5)

    def test_unit_norm(self):
        """Test that psi_1 has unit L2 norm on the half-line."""
        x = np.linspace(0.0, 30.0, 30001)
        norm = trapezoid(eigenfunction_halfline(1, x) ** 2, x)
        assert norm == pytest.approx(1.0, rel=1e-6)

    def test_orthogonal(self):
        """Test that psi_1 and psi_2 are orthogonal on the half-line."""
        inner, _ = quad(
            lambda x: eigenfunction_halfline(1, x) * eigenfunction_halfline(2, x),
            0.0,
            40.0,
            limit=200,
        )
        assert abs(inner) < 1e-9

    def test_eigen_equation(self):
        """Test psi_n'' = (x + alpha_n) psi_n."""
        x = np.linspace(0.1, 8.0, 200)
        step = 1e-3
        for n in (1, 2, 3):
            values = eigenfunction_halfline(n, x)
            second = (
                eigenfunction_halfline(n, x + step)
                - 2.0 * values
                + eigenfunction_halfline(n, x - step)
            ) / step**2
            residual = np.max(np.abs(second - (x + airy_zero(n)) * values))
            assert residual < 1e-4


class TestCrossWronskian:
    """Test the interval eigenvalue roots."""

    @pytest.mark.parametrize("h", [0.01, 1.0, 25.0])
    def test_root_residual(self, h):
        """Test that the polished root zeroes the normalized Wronskian."""
        root = cross_wronskian_root(h, 1)

        assert root.residual < 1e-9
        assert root.bracket[0] <= root.lambda_n <= root.bracket[1]
        assert abs(normalized_cross_wronskian(root.lambda_n, h)) < 1e-9

    def test_roots_are_ordered(self):
        """Test that lambda_1 > lambda_2 > lambda_3."""
        values = [cross_wronskian_root(2.0, n).lambda_n for n in (1, 2, 3)]
        assert values[0] > values[1] > values[2]

    def test_small_h_recovers_sine_spectrum(self):
        """Test that weak potentials give -pi^2 n^2 / 2 - h / 2."""
        h = 1e-3
        for n in (1, 2):
            expected = -(np.pi**2) * n**2 / 2.0 - h / 2.0
            assert scaled_eigenvalue(h, n) == pytest.approx(expected, abs=1e-6)

    def test_nonpositive_h_rejected(self):
        """Test that h <= 0 raises."""
        with pytest.raises(ValueError):
            cross_wronskian_root(0.0)
        with pytest.raises(ValueError):
            cross_wronskian_root(1.0, 0)

    @pytest.mark.parametrize("h", [0.5, 5.0])
    def test_high_modes_approach_sine_spectrum(self, h):
        """Test (h^(2/3) / 2^(1/3)) lambda_n^h / n^2 -> -pi^2 / 2 at n = 40."""
        ratio = scaled_eigenvalue(h, 40) / 40**2 / (-(np.pi**2) / 2.0)
        assert ratio == pytest.approx(1.0, rel=2e-2)


class TestIntervalEigenfunctions:
    """Test the interval eigenfunctions."""

    @pytest.mark.parametrize("h", [0.0, 0.5, 10.0])
    def test_dirichlet_and_normalized(self, h):
        """Test boundary values, positive slope at 0 and unit norm."""
        x = np.linspace(0.0, 1.0, 4001)
        values = eigenfunction_interval(h, 1, x)

        assert abs(values[0]) < 1e-8
        assert abs(values[-1]) < 1e-8
        assert values[1] > 0.0
        assert trapezoid(values**2, x) == pytest.approx(1.0, rel=1e-5)

    def test_second_mode_changes_sign_once(self):
        """Test that phi_2 has exactly one interior node."""
        x = np.linspace(0.01, 0.99, 999)
        values = eigenfunction_interval(3.0, 2, x)
        assert np.count_nonzero(np.diff(np.sign(values))) == 1

    def test_negative_h_rejected(self):
        """Test that the interval eigenfunctions need h >= 0."""
        with pytest.raises(ValueError):
            eigenfunction_interval(-1.0, 1, 0.5)

    @pytest.mark.parametrize("h", [0.5, 4.0])
    def test_orthogonal(self, h):
        """Test that phi_1 and phi_2 are orthogonal in L2(0, 1)."""
        inner, _ = quad(
            lambda x: eigenfunction_interval(h, 1, x) * eigenfunction_interval(h, 2, x),
            0.0,
            1.0,
            limit=200,
        )
        assert abs(inner) < 1e-8

    @pytest.mark.parametrize("h, n", [(0.5, 1), (2.0, 1), (2.0, 2)])
    def test_eigen_equation(self, h, n):
        """Test phi'' / 2 - h x phi = (h^(2/3) / 2^(1/3)) lambda_n^h phi."""
        x = np.linspace(0.05, 0.95, 181)
        step = 1e-3
        values = eigenfunction_interval(h, n, x)
        second = (
            eigenfunction_interval(h, n, x + step)
            - 2.0 * values
            + eigenfunction_interval(h, n, x - step)
        ) / step**2
        residual = 0.5 * second - h * x * values - scaled_eigenvalue(h, n) * values
        assert np.max(np.abs(residual)) < 1e-3


class TestPsi:
    """Test Psi and its evaluators."""

    def test_value_at_zero(self):
        """Test Psi(0) = -pi^2 / 2."""
        assert psi(0.0) == PSI_ZERO

    def test_slope_at_zero(self):
        """Test Psi'(0) = -1/2."""
        assert psi(1e-4) == pytest.approx(PSI_ZERO - 5e-5, abs=1e-5)

    @pytest.mark.parametrize("h", [0.1, 1.0, 7.5])
    def test_reflection(self, h):
        """Test Psi(h) - Psi(-h) = -h."""
        assert psi(h) - psi(-h) == pytest.approx(-h, abs=1e-9)

    def test_large_h_matches_halfline(self):
        """Test Psi(h) ~ alpha_1 h^(2/3) / 2^(1/3) for large h."""
        h = 1000.0
        assert psi(h) == pytest.approx(ALPHA_1 * h ** (2.0 / 3.0) / CBRT2, rel=1e-6)

    def test_decreasing(self):
        """Test that Psi is decreasing."""
        values = psi(np.linspace(-5.0, 5.0, 21))
        assert np.all(np.diff(values) < 0)

    def test_midpoint_convex(self):
        """Test Psi(h - d) + Psi(h + d) >= 2 Psi(h) on a grid."""
        values = np.asarray(psi(np.linspace(-20.0, 20.0, 161)))
        gaps = values[:-2] + values[2:] - 2.0 * values[1:-1]
        assert np.min(gaps) > -1e-9

    def test_array_shape_kept(self):
        """Test that array input keeps its shape."""
        assert psi(np.zeros((2, 3))).shape == (2, 3)

    def test_evaluator_caches_positive_arguments(self):
        """Test one root solve per quantized argument, shared with -h."""
        evaluator = PsiEvaluator()
        with patch(
            "brwtie_lab.airy.scaled_eigenvalue", return_value=-5.0
        ) as mock_solve:
            first = evaluator.evaluate(0.5)
            second = evaluator.evaluate(0.5)
            reflected = evaluator.evaluate(-0.5)

        assert mock_solve.call_count == 1
        assert first == second == -5.0
        assert reflected == pytest.approx(-4.5)
        assert len(evaluator) == 1

    def test_evaluator_linear_below_threshold(self):
        """Test that tiny arguments skip the root solve."""
        evaluator = PsiEvaluator()
        with patch("brwtie_lab.airy.scaled_eigenvalue") as mock_solve:
            value = evaluator.evaluate(1e-8)

        mock_solve.assert_not_called()
        assert value == pytest.approx(PSI_ZERO - 5e-9)

    def test_lattice_interpolation(self):
        """Test that the lattice interpolant tracks Psi closely."""
        lattice = LatticePsi()
        h = np.array([-1.3, 0.3, 1.7])
        assert np.allclose(lattice(h), psi(h), atol=1e-6)
