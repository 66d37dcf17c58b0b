"""
Bracket extension for one-dimensional root finding.

A bracket [lo, hi] is widened geometrically until the target function changes
sign across it, the same way a failing call is retried with exponential
backoff: each extension is logged and the loop ends with a typed error that
carries the last bracket tried.
"""

import logging
from typing import Callable, Tuple

import numpy as np

from brwtie_lab.config import AiryConfig
from brwtie_lab.errors import BracketError

logger = logging.getLogger(__name__)


class BracketConfig:
    """Configuration for bracket extension."""

    def __init__(
        self,
        max_extensions: int = AiryConfig.MAX_BRACKET_EXTENSIONS,
        growth_factor: float = 2.0,
        max_width: float = np.inf,
    ):
        """
        Initialize bracket configuration.

        Args:
            max_extensions: Maximum number of widenings before giving up
            growth_factor: Multiplier applied to the moving side's step
            max_width: Upper limit on the bracket width
        """
        self.max_extensions = max_extensions
        self.growth_factor = growth_factor
        self.max_width = max_width


def next_step(step: float, config: BracketConfig) -> float:
    """
    Grow an extension step geometrically.

    Args:
        step: Current step
        config: Bracket configuration

    Returns:
        The next step, capped by the configured maximum width
    """
    return min(step * config.growth_factor, config.max_width)


def expand_bracket(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    config: BracketConfig,
    direction: str = "both",
    lower_limit: float = -np.inf,
    upper_limit: float = np.inf,
) -> Tuple[float, float, float, float]:
    """
    Widen [lo, hi] until fn changes sign across it.

    Args:
        fn: Scalar function
        lo: Initial lower end
        hi: Initial upper end
        config: Bracket configuration
        direction: "down", "up" or "both"; which ends may move
        lower_limit: Hard lower limit for lo
        upper_limit: Hard upper limit for hi

    Returns:
        (lo, hi, fn(lo), fn(hi)) with fn(lo) * fn(hi) <= 0

    Raises:
        BracketError: If no sign change is found within the extension limit
    """
    f_lo, f_hi = fn(lo), fn(hi)
    step = max(hi - lo, 1e-12)

    for extension in range(1, config.max_extensions + 1):
        if np.sign(f_lo) * np.sign(f_hi) <= 0:
            return lo, hi, f_lo, f_hi

        step = next_step(step, config)
        move_down = direction == "down" or (
            direction == "both" and abs(f_lo) <= abs(f_hi)
        )
        if move_down and lo > lower_limit:
            lo = max(lo - step, lower_limit)
            f_lo = fn(lo)
        elif hi < upper_limit:
            hi = min(hi + step, upper_limit)
            f_hi = fn(hi)
        else:
            break

        logger.warning(
            "Bracket extension %d/%d for %s: [%.6g, %.6g]",
            extension,
            config.max_extensions,
            getattr(fn, "__name__", "function"),
            lo,
            hi,
        )

    if np.sign(f_lo) * np.sign(f_hi) <= 0:
        return lo, hi, f_lo, f_hi

    raise BracketError(
        f"No sign change of {getattr(fn, '__name__', 'function')} after "
        f"{config.max_extensions} extensions",
        last_bracket=(lo, hi),
        extensions=config.max_extensions,
    )
