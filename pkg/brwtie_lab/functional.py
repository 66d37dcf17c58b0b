"""
Rate functionals along a time profile.

energy_K integrates kappa*_s(b_s), spine_energy integrates the growth
e_s(phi_s) = phi_s kappa'_s(phi_s) - kappa_s(phi_s), and eval_H integrates the
barrier functional whose integrand depends on which of the lower barrier set F
and upper barrier set G contain the current time.
"""

import logging
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict

from brwtie_lab.airy import HALFLINE_CONSTANT, PsiEvaluator, default_psi_evaluator
from brwtie_lab.config import FunctionalConfig
from brwtie_lab.environment import EnvironmentModel
from brwtie_lab.errors import PreconditionError
from brwtie_lab.fields import IndicatorSet, ScalarField

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]


class BarrierSpec(BaseModel):
    """
    Barriers f < g, their activity sets F and G, and the weight h.

    The weight may only decrease on F and only increase on G.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    f: ScalarField
    g: ScalarField
    F: IndicatorSet
    G: IndicatorSet
    h: ScalarField

    def h_dot(self, t: np.ndarray) -> np.ndarray:
        if self.h.derivative is None:
            raise PreconditionError("the weight h needs an attached derivative")
        return np.asarray(self.h.derivative(t), dtype=float)

    def breakpoints(self) -> tuple:
        cuts = set(self.F.endpoints()) | set(self.G.endpoints())
        for field in (self.f, self.g, self.h):
            cuts.update(field.all_breakpoints())
        return tuple(sorted(c for c in cuts if 0.0 < c < 1.0))

    def check_weight_sets(self, grid_size: int = FunctionalConfig.CHECK_GRID) -> None:
        """
        Raises:
            PreconditionError: If h decreases outside F or increases outside G
        """
        t = np.linspace(0.0, 1.0, grid_size)
        slope = self.h_dot(t)
        band = FunctionalConfig.HDOT_ZERO
        falling = (slope < -band) & ~self.F.contains(t)
        rising = (slope > band) & ~self.G.contains(t)
        if np.any(falling):
            raise PreconditionError(
                f"h decreases outside F at t = {t[np.argmax(falling)]:.6g}"
            )
        if np.any(rising):
            raise PreconditionError(
                f"h increases outside G at t = {t[np.argmax(rising)]:.6g}"
            )

    def check_barriers(self, grid_size: int = FunctionalConfig.CHECK_GRID) -> None:
        """
        Raises:
            PreconditionError: If f >= g somewhere, or 0 is not strictly
                between f_0 and g_0
        """
        t = np.linspace(0.0, 1.0, grid_size)
        lower, upper = np.asarray(self.f(t)), np.asarray(self.g(t))
        if np.any(lower >= upper):
            bad = t[np.argmax(lower >= upper)]
            raise PreconditionError(
                f"lower barrier meets upper barrier at t = {bad:.6g}"
            )
        if not self.f(0.0) < 0.0 < self.g(0.0):
            raise PreconditionError(
                f"start 0 outside (f(0), g(0)) = ({self.f(0.0):.6g}, {self.g(0.0):.6g})"
            )

    def validate(self) -> "BarrierSpec":
        self.check_barriers()
        self.check_weight_sets()
        return self


@lru_cache(maxsize=4)
def _gauss_rule(nodes: int = FunctionalConfig.GAUSS_NODES):
    return leggauss(nodes)


def _partition(lo: float, hi: float, cuts: Iterable[float]) -> np.ndarray:
    points = {lo, hi}
    points.update(c for c in cuts if lo < c < hi)
    return np.array(sorted(points))


def _segment_integral(
    func: Integrand, a: float, b: float, cells_per_unit: int
) -> float:
    if b <= a:
        return 0.0
    nodes, weights = _gauss_rule()
    cells = max(1, int(np.ceil(cells_per_unit * (b - a) - 1e-9)))
    edges = np.linspace(a, b, cells + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    t = (mids[:, None] + half[:, None] * nodes[None, :]).ravel()
    values = np.asarray(func(t), dtype=float).reshape(cells, nodes.size)
    return float(np.sum(half[:, None] * weights[None, :] * values))


def composite_integral(
    func: Integrand,
    lo: float,
    hi: float,
    cuts: Iterable[float] = (),
    cells: int = FunctionalConfig.CELLS,
) -> float:
    """Composite Gauss-Legendre integral of a vectorised func, split at cuts."""
    edges = _partition(lo, hi, cuts)
    return sum(
        _segment_integral(func, a, b, cells) for a, b in zip(edges[:-1], edges[1:])
    )


def running_integral(
    func_for_segment: Callable[[float, float], Integrand],
    times: Sequence[float],
    cuts: Iterable[float] = (),
    cells: int = FunctionalConfig.CELLS,
) -> np.ndarray:
    """
    Cumulative integrals from 0 to each of `times`.

    func_for_segment(a, b) returns the integrand to use on a segment [a, b]
    containing no cut in its interior.
    """
    times = np.asarray(times, dtype=float)
    end = float(times.max()) if times.size else 0.0
    edges = _partition(0.0, end, list(cuts) + [t for t in times if 0.0 < t < end])
    pieces = np.array(
        [
            _segment_integral(func_for_segment(a, b), a, b, cells)
            for a, b in zip(edges[:-1], edges[1:])
        ]
    )
    cumulative = np.concatenate(([0.0], np.cumsum(pieces)))
    idx = np.searchsorted(edges, times)
    idx = np.clip(idx, 0, edges.size - 1)
    # Snap to the partition point equal to t.
    return cumulative[idx]


# Energies


def _env_cuts(env: EnvironmentModel, field: ScalarField) -> tuple:
    return tuple(sorted(set(env.breakpoints()) | set(field.all_breakpoints())))


def energy_K(env: EnvironmentModel, b: ScalarField, t: float = 1.0) -> float:
    """
    K*(b)_t, the integral of kappa*_s(b_s) over [0, t].

    Raises:
        DomainViolationError: If kappa*_s(b_s) is infinite somewhere
    """
    return composite_integral(
        lambda s: env.kappa_star(s, b(s)), 0.0, t, _env_cuts(env, b)
    )


def energy_K_running(
    env: EnvironmentModel, b: ScalarField, times: Sequence[float]
) -> np.ndarray:
    return running_integral(
        lambda a, c: lambda s: env.kappa_star(s, b(s)), times, _env_cuts(env, b)
    )


def spine_energy(env: EnvironmentModel, phi: ScalarField, t: float = 1.0) -> float:
    """E(phi)_t, the integral of phi kappa'(phi) - kappa(phi) over [0, t]."""
    return composite_integral(
        lambda s: env.growth(s, phi(s)), 0.0, t, _env_cuts(env, phi)
    )


# Barrier functional


def _regime_integrand(
    spec: BarrierSpec,
    sigma: ScalarField,
    in_f: bool,
    in_g: bool,
    psi_eval: PsiEvaluator,
) -> Integrand:
    zero = FunctionalConfig.HDOT_ZERO

    def integrand(t: np.ndarray) -> np.ndarray:
        slope = spec.h_dot(t)
        sig = np.asarray(sigma(t), dtype=float)
        lower = np.asarray(spec.f(t), dtype=float)
        upper = np.asarray(spec.g(t), dtype=float)

        if in_f and in_g:
            width = upper - lower
            arg = width**3 * slope / sig**2
            return slope * upper + sig**2 / width**2 * psi_eval(arg)
        if in_g:
            rise = np.maximum(slope, 0.0)
            return slope * upper + HALFLINE_CONSTANT * (rise * sig) ** (2.0 / 3.0)
        if in_f:
            fall = np.maximum(-slope, 0.0)
            return slope * lower + HALFLINE_CONSTANT * (fall * sig) ** (2.0 / 3.0)
        flat = np.abs(slope) <= zero
        return np.where(flat, 0.0, slope * np.where(np.isfinite(upper), upper, 0.0))

    return integrand


def _segment_integrand_factory(
    spec: BarrierSpec, sigma: ScalarField, psi_eval: PsiEvaluator
) -> Callable[[float, float], Integrand]:
    def factory(a: float, b: float) -> Integrand:
        mid = 0.5 * (a + b)
        in_f, in_g = bool(spec.F.contains(mid)), bool(spec.G.contains(mid))
        return _regime_integrand(spec, sigma, in_f, in_g, psi_eval)

    return factory


def _h_cuts(spec: BarrierSpec, sigma: ScalarField) -> tuple:
    return tuple(sorted(set(spec.breakpoints()) | set(sigma.all_breakpoints())))


def running_H(
    spec: BarrierSpec,
    sigma: ScalarField,
    times: Sequence[float],
    psi_eval: Optional[PsiEvaluator] = None,
    check: bool = True,
) -> np.ndarray:
    """
    H_t for every t in `times`, from one partition of [0, 1].

    Raises:
        PreconditionError: If h decreases outside F or increases outside G
    """
    if check:
        spec.check_weight_sets()
    psi_eval = psi_eval or default_psi_evaluator()
    return running_integral(
        _segment_integrand_factory(spec, sigma, psi_eval), times, _h_cuts(spec, sigma)
    )


def integrate_H(
    spec: BarrierSpec,
    sigma: ScalarField,
    lo: float,
    hi: float,
    psi_eval: Optional[PsiEvaluator] = None,
) -> float:
    """The barrier functional's integral over [lo, hi]."""
    psi_eval = psi_eval or default_psi_evaluator()
    factory = _segment_integrand_factory(spec, sigma, psi_eval)
    edges = _partition(lo, hi, _h_cuts(spec, sigma))
    return sum(
        _segment_integral(factory(a, b), a, b, FunctionalConfig.CELLS)
        for a, b in zip(edges[:-1], edges[1:])
    )


def eval_H(
    spec: BarrierSpec,
    sigma: ScalarField,
    t: float = 1.0,
    psi_eval: Optional[PsiEvaluator] = None,
) -> float:
    """
    H_t^{F,G}(f, g, h) with step standard deviation sigma.

    Raises:
        PreconditionError: If h decreases outside F or increases outside G
    """
    spec.check_weight_sets()
    value = integrate_H(spec, sigma, 0.0, t, psi_eval)
    logger.debug("H_%g = %.12g", t, value)
    return value
