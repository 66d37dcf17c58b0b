"""
Tests for geometric bracket extension.
"""

import numpy as np
import pytest

from brwtie_lab.brackets import BracketConfig, expand_bracket, next_step
from brwtie_lab.config import AiryConfig
from brwtie_lab.errors import BracketError


class TestBracketConfiguration:
    """Test bracket configuration and step growth."""

    def test_default_values(self):
        """Test that defaults come from the Airy configuration."""
        config = BracketConfig()

        assert config.max_extensions == AiryConfig.MAX_BRACKET_EXTENSIONS
        assert config.growth_factor == 2.0
        assert config.max_width == np.inf

    def test_step_growth(self):
        """Test geometric growth of the extension step."""
        config = BracketConfig(growth_factor=3.0)
        assert next_step(1.0, config) == 3.0

    def test_step_growth_capped(self):
        """Test that the step never exceeds max_width."""
        config = BracketConfig(growth_factor=10.0, max_width=5.0)
        assert next_step(1.0, config) == 5.0


class TestExpandBracket:
    """Test widening a bracket until a sign change appears."""

    def test_existing_bracket_returned_unchanged(self):
        """Test that a valid bracket needs no extension."""
        lo, hi, f_lo, f_hi = expand_bracket(lambda x: x, -1.0, 1.0, BracketConfig())

        assert (lo, hi) == (-1.0, 1.0)
        assert f_lo < 0 < f_hi

    def test_extends_upward(self):
        """Test that the upper end moves when only it may."""
        lo, hi, f_lo, f_hi = expand_bracket(
            lambda x: x - 10.0, 0.0, 1.0, BracketConfig(), direction="up"
        )

        assert lo == 0.0
        assert hi >= 10.0
        assert f_lo * f_hi <= 0

    def test_extends_downward(self):
        """Test that the lower end moves when only it may."""
        lo, hi, _, _ = expand_bracket(
            lambda x: x + 7.0, 0.0, 1.0, BracketConfig(), direction="down"
        )

        assert lo <= -7.0
        assert hi == 1.0

    def test_respects_limits(self):
        """Test that a hard limit stops the search with a typed error."""
        with pytest.raises(BracketError) as exc_info:
            expand_bracket(
                lambda x: x - 10.0,
                0.0,
                1.0,
                BracketConfig(),
                direction="up",
                upper_limit=4.0,
            )

        assert exc_info.value.last_bracket == (0.0, 4.0)

    def test_extensions_exhausted(self):
        """Test that the error carries the last bracket and extension count."""
        config = BracketConfig(max_extensions=3)

        with pytest.raises(BracketError) as exc_info:
            expand_bracket(lambda x: 1.0 + x * x, -1.0, 1.0, config)

        assert exc_info.value.extensions == 3
        lo, hi = exc_info.value.last_bracket
        assert hi - lo > 2.0

    def test_logs_each_extension(self, caplog):
        """Test that each widening is logged as a warning."""
        with caplog.at_level("WARNING"):
            expand_bracket(
                lambda x: x - 5.0, 0.0, 1.0, BracketConfig(), direction="up"
            )

        assert any("Bracket extension" in r.message for r in caplog.records)
