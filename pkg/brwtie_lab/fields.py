"""
Functions of time on [0, 1] and Riemann-integrable subsets of [0, 1].
"""

from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad

ArrayLike = float | np.ndarray


class ScalarField:
    """
    A function of t in [0, 1], closed form or piecewise-linear samples.

    Closed forms are vectorised callables. Samples live on the uniform grid
    linspace(0, 1, len(values)). A derivative, when attached, is another
    ScalarField. Breakpoints list the interior times where the field or its
    derivative is not smooth; quadratures and integrators split there.
    """

    def __init__(
        self,
        func: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        samples: Optional[Sequence[float]] = None,
        derivative: Optional["ScalarField"] = None,
        breakpoints: Iterable[float] = (),
        name: str = "",
    ):
        if (func is None) == (samples is None):
            raise ValueError("ScalarField needs exactly one of func or samples")
        self._func = func
        self._samples = None if samples is None else np.asarray(samples, float)
        if self._samples is not None and self._samples.size < 2:
            raise ValueError("ScalarField samples need at least two points")
        self._grid = (
            None
            if self._samples is None
            else np.linspace(0.0, 1.0, self._samples.size)
        )
        self.derivative = derivative
        self.breakpoints = tuple(
            sorted(float(b) for b in breakpoints if 0.0 < float(b) < 1.0)
        )
        self.name = name

    def __call__(self, t: ArrayLike) -> ArrayLike:
        t_arr = np.asarray(t, dtype=float)
        if self._samples is not None:
            values = np.interp(t_arr, self._grid, self._samples)
        else:
            values = np.asarray(self._func(t_arr), dtype=float)
            if values.shape != t_arr.shape:
                values = np.broadcast_to(values, t_arr.shape).copy()
        return float(values) if values.ndim == 0 else values

    def __repr__(self) -> str:
        kind = "samples" if self._samples is not None else "closed form"
        return f"ScalarField({self.name or kind})"

    @property
    def has_derivative(self) -> bool:
        return self.derivative is not None

    @property
    def is_sampled(self) -> bool:
        return self._samples is not None

    @property
    def grid(self) -> Optional[np.ndarray]:
        return self._grid

    @property
    def samples(self) -> Optional[np.ndarray]:
        return self._samples

    def all_breakpoints(self) -> Tuple[float, ...]:
        """Breakpoints of the field and of its derivative."""
        points = set(self.breakpoints)
        if self.derivative is not None:
            points.update(self.derivative.breakpoints)
        return tuple(sorted(points))

    def with_derivative(self, derivative: "ScalarField") -> "ScalarField":
        """Return a copy carrying the given derivative."""
        return ScalarField(
            func=self._func,
            samples=self._samples,
            derivative=derivative,
            breakpoints=self.breakpoints,
            name=self.name,
        )

    def fundamental_theorem_residual(self, grid: Optional[np.ndarray] = None) -> float:
        """
        Max over the grid of |F(t) - F(0) - int_0^t F'(s) ds|.

        Raises:
            ValueError: If no derivative is attached
        """
        if self.derivative is None:
            raise ValueError(f"{self!r} has no derivative attached")
        grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid)
        base = self(0.0)
        cuts = self.all_breakpoints()
        worst = 0.0
        for t in grid:
            pieces = [0.0, *[c for c in cuts if c < t], float(t)]
            integral = sum(
                quad(self.derivative, a, b, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
                for a, b in zip(pieces[:-1], pieces[1:])
                if b > a
            )
            worst = max(worst, abs(self(float(t)) - base - integral))
        return worst

    # Named closed forms

    @classmethod
    def constant(cls, value: float, name: str = "") -> "ScalarField":
        value = float(value)
        zero = cls(func=lambda t: np.zeros_like(t), name="0")
        return cls(
            func=lambda t: np.full_like(t, value),
            derivative=zero,
            name=name or f"{value:g}",
        )

    @classmethod
    def linear(cls, intercept: float, slope: float, name: str = "") -> "ScalarField":
        intercept, slope = float(intercept), float(slope)
        derivative = cls(func=lambda t: np.full_like(t, slope), name=f"{slope:g}")
        return cls(
            func=lambda t: intercept + slope * t,
            derivative=derivative,
            name=name or f"{intercept:g} + {slope:g} t",
        )

    @classmethod
    def vshape(
        cls, base: float, slope: float, center: float = 0.5, name: str = ""
    ) -> "ScalarField":
        """base + slope * |t - center|"""
        base, slope, center = float(base), float(slope), float(center)
        derivative = cls(
            func=lambda t: slope * np.sign(t - center),
            breakpoints=(center,),
            name="vshape'",
        )
        return cls(
            func=lambda t: base + slope * np.abs(t - center),
            derivative=derivative,
            breakpoints=(center,),
            name=name or f"{base:g} + {slope:g} |t - {center:g}|",
        )

    @classmethod
    def peak(
        cls, top: float, slope: float, center: float = 0.5, name: str = ""
    ) -> "ScalarField":
        """top - slope * |t - center|"""
        return cls.vshape(top, -slope, center, name=name)

    @classmethod
    def from_callable(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        breakpoints: Iterable[float] = (),
        name: str = "",
    ) -> "ScalarField":
        breakpoints = tuple(breakpoints)
        deriv = (
            None
            if derivative is None
            else cls(func=derivative, breakpoints=breakpoints, name=f"{name}'")
        )
        return cls(func=func, derivative=deriv, breakpoints=breakpoints, name=name)

    @classmethod
    def from_samples(
        cls,
        values: Sequence[float],
        derivative_values: Optional[Sequence[float]] = None,
        name: str = "",
    ) -> "ScalarField":
        deriv = (
            None
            if derivative_values is None
            else cls(samples=derivative_values, name=f"{name}'")
        )
        return cls(samples=values, derivative=deriv, name=name)


class IndicatorSet:
    """A finite union of disjoint closed subintervals of [0, 1]."""

    def __init__(self, intervals: Iterable[Tuple[float, float]] = ()):
        cleaned = []
        for a, b in intervals:
            a, b = max(0.0, float(a)), min(1.0, float(b))
            if a > b:
                raise ValueError(f"Interval [{a}, {b}] is reversed")
            cleaned.append((a, b))
        cleaned.sort()

        merged: List[Tuple[float, float]] = []
        for a, b in cleaned:
            if merged and a <= merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], b))
            else:
                merged.append((a, b))
        self.intervals: Tuple[Tuple[float, float], ...] = tuple(merged)

    def __repr__(self) -> str:
        body = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in self.intervals)
        return f"IndicatorSet({body or 'empty'})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndicatorSet) and self.intervals == other.intervals

    def __hash__(self) -> int:
        return hash(self.intervals)

    @classmethod
    def full(cls) -> "IndicatorSet":
        return cls([(0.0, 1.0)])

    @classmethod
    def empty(cls) -> "IndicatorSet":
        return cls([])

    @classmethod
    def from_mask(cls, grid: np.ndarray, mask: np.ndarray) -> "IndicatorSet":
        """
        Snap a boolean mask on a sorted grid to closed intervals.

        Each maximal run of True nodes becomes the interval between its first
        and last node.
        """
        grid = np.asarray(grid, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return cls.empty()
        padded = np.concatenate(([False], mask, [False])).astype(int)
        edges = np.flatnonzero(np.diff(padded))
        starts, stops = edges[0::2], edges[1::2] - 1
        return cls((grid[s], grid[e]) for s, e in zip(starts, stops))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, t: ArrayLike) -> np.ndarray | bool:
        t_arr = np.asarray(t, dtype=float)
        inside = np.zeros(t_arr.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (t_arr >= a) & (t_arr <= b)
        return bool(inside) if inside.ndim == 0 else inside

    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def endpoints(self) -> Tuple[float, ...]:
        return tuple(sorted({x for interval in self.intervals for x in interval}))

    def complement(self) -> "IndicatorSet":
        """Closure of [0, 1] minus the set."""
        pieces, cursor = [], 0.0
        for a, b in self.intervals:
            if a > cursor:
                pieces.append((cursor, a))
            cursor = b
        if cursor < 1.0:
            pieces.append((cursor, 1.0))
        return IndicatorSet(pieces)

    def intersection(self, other: "IndicatorSet") -> "IndicatorSet":
        pieces = []
        for a, b in self.intervals:
            for c, d in other.intervals:
                lo, hi = max(a, c), min(b, d)
                if lo <= hi:
                    pieces.append((lo, hi))
        return IndicatorSet(pieces)

    def union(self, other: "IndicatorSet") -> "IndicatorSet":
        return IndicatorSet(self.intervals + other.intervals)

    def discretize(self, n: int) -> np.ndarray:
        """
        Boolean mask over k = 0..n of {k : [k/n, (k+1)/n] meets the set}.
        """
        k = np.arange(n + 1, dtype=float)
        lo, hi = k / n, (k + 1.0) / n
        hit = np.zeros(n + 1, dtype=bool)
        for a, b in self.intervals:
            hit |= (lo <= b) & (hi >= a)
        return hit
