"""
Boundary ODEs for the maximal displacement with selection.

Given a positive weight phi, step standard deviation sigma, a lower barrier f
active on F and an upper set G, the trajectory g^lambda solves

    phi_t g_t = phi_0 lambda + H_t^{F,G}(f, g, phi)

with H the barrier functional. Differentiating gives g' = R(t, g) / phi with
R the regime term of H without phi' g. On F and G together the solver
integrates y = (g - f)^3 instead of g, which keeps the right-hand side bounded
as g approaches f. Integration stops at t_lambda, the first time g comes
within EPS_STOP of f, or at 1.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq

from brwtie_lab.airy import HALFLINE_CONSTANT, LatticePsi
from brwtie_lab.brackets import BracketConfig, expand_bracket
from brwtie_lab.config import OdeConfig, worker_count
from brwtie_lab.environment import EnvironmentModel
from brwtie_lab.errors import (
    BracketError,
    MissingDerivativeError,
    PreconditionError,
    RootNotFoundError,
    StepSizeCollapseError,
)
from brwtie_lab.fields import IndicatorSet, ScalarField
from brwtie_lab.functional import BarrierSpec, running_H
from brwtie_lab.models import OdeSolution, OptimalPath
from brwtie_lab.reporting import write_csv, write_json

logger = logging.getLogger(__name__)

BOTH, UPPER, LOWER, FREE = "FG", "G", "F", "free"


class OdeSpec(BaseModel):
    """Weight phi, step deviation sigma, lower barrier f and the sets F, G."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phi: ScalarField
    sigma: ScalarField
    f: ScalarField
    F: IndicatorSet
    G: IndicatorSet

    def breakpoints(self) -> Tuple[float, ...]:
        cuts = set(self.F.endpoints()) | set(self.G.endpoints())
        for field in (self.phi, self.sigma, self.f):
            cuts.update(field.all_breakpoints())
        return tuple(sorted(c for c in cuts if 0.0 < c < 1.0))

    def regime(self, t: float) -> str:
        in_f, in_g = bool(self.F.contains(t)), bool(self.G.contains(t))
        if in_f and in_g:
            return BOTH
        if in_g:
            return UPPER
        if in_f:
            return LOWER
        return FREE

    def lower_start(self) -> float:
        return float(self.f(0.0)) if self.F.contains(0.0) else -np.inf

    def shifted(self, mu: float) -> "OdeSpec":
        """The same spec with the lower barrier moved down by mu."""
        f = self.f
        derivative = f.derivative
        moved = ScalarField.from_callable(
            lambda t: np.asarray(f(t)) - mu,
            derivative,
            f.all_breakpoints(),
            name=f"{f.name} - {mu:g}",
        )
        return self.model_copy(update={"f": moved})


def _sigma_along(env: EnvironmentModel, theta: ScalarField) -> ScalarField:
    return ScalarField.from_callable(
        lambda t: np.sqrt(np.asarray(env.d2_kappa(t, theta(t)))),
        breakpoints=theta.all_breakpoints(),
        name="sigma",
    )


def optimal_path_spec(env: EnvironmentModel, path: OptimalPath) -> OdeSpec:
    """No lower barrier; the trajectory ends at g_1 = lambda + l*."""
    return OdeSpec(
        phi=path.theta,
        sigma=_sigma_along(env, path.theta),
        f=ScalarField.constant(-np.inf, name="-inf"),
        F=IndicatorSet.empty(),
        G=IndicatorSet.full(),
    )


def cmd_spec(env: EnvironmentModel, path: OptimalPath, mu: float = 0.0) -> OdeSpec:
    """Killing barrier -mu everywhere, upper set the contact set of the path."""
    return OdeSpec(
        phi=path.theta,
        sigma=_sigma_along(env, path.theta),
        f=ScalarField.constant(-mu, name=f"{-mu:g}"),
        F=IndicatorSet.full(),
        G=path.contact_set,
    )


class _Drift:
    """Right-hand sides per regime, for the state g or y = (g - f)^3."""

    def __init__(self, spec: OdeSpec, psi: Callable):
        if spec.phi.derivative is None:
            raise MissingDerivativeError("phi needs an attached derivative")
        self.spec = spec
        self.psi = psi

    def _coefficients(self, t: float):
        spec = self.spec
        return (
            float(spec.phi(t)),
            float(spec.phi.derivative(t)),
            float(spec.sigma(t)),
            float(spec.f(t)),
        )

    def g_rate(self, t: float, g: float, regime: str) -> float:
        phi, dphi, sigma, lower = self._coefficients(t)
        if regime == BOTH:
            width = g - lower
            arg = width**3 * dphi / sigma**2
            return sigma**2 * float(self.psi(arg)) / (width**2 * phi)
        if regime == UPPER:
            return HALFLINE_CONSTANT * (max(dphi, 0.0) * sigma) ** (2.0 / 3.0) / phi
        if regime == LOWER:
            fall = max(-dphi, 0.0)
            pushed = HALFLINE_CONSTANT * (fall * sigma) ** (2.0 / 3.0)
            return (dphi * (lower - g) + pushed) / phi
        return 0.0

    def y_rate(self, t: float, y: float) -> float:
        phi, dphi, sigma, _ = self._coefficients(t)
        slope = self.spec.f.derivative
        if slope is None:
            raise MissingDerivativeError("the lower barrier needs a derivative on F")
        df = float(slope(t))
        return 3.0 * sigma**2 * float(self.psi(y * dphi / sigma**2)) / phi - (
            3.0 * np.cbrt(y) ** 2 * df
        )


class _Segment:
    def __init__(self, start: float, stop: float, regime: str, solution, uses_y: bool):
        self.start = start
        self.stop = stop
        self.regime = regime
        self.solution = solution
        self.uses_y = uses_y


class _Trajectory:
    """Piecewise dense output, converted back to g."""

    def __init__(self, spec: OdeSpec, segments: List[_Segment], t_max: float):
        self.spec = spec
        self.segments = segments
        self.t_max = t_max
        self._starts = np.array([s.start for s in segments])

    def __call__(self, t):
        t_arr = np.clip(np.asarray(t, dtype=float), 0.0, self.t_max)
        flat = np.atleast_1d(t_arr).ravel()
        out = np.empty_like(flat)
        idx = np.clip(np.searchsorted(self._starts, flat, side="right") - 1, 0, None)
        for k in np.unique(idx):
            seg = self.segments[k]
            mask = idx == k
            state = seg.solution(flat[mask])
            state = np.atleast_2d(state)[0]
            if seg.uses_y:
                state = np.asarray(self.spec.f(flat[mask])) + np.cbrt(state)
            out[mask] = state
        out = out.reshape(t_arr.shape)
        return float(out) if out.ndim == 0 else out


def _segments(spec: OdeSpec) -> List[Tuple[float, float, str]]:
    edges = [0.0, *spec.breakpoints(), 1.0]
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            pieces.append((a, b, spec.regime(0.5 * (a + b))))
    return pieces


def solve_g_lambda(
    spec: OdeSpec,
    lam: float,
    psi: Optional[Callable] = None,
    samples: int = OdeConfig.SAMPLES,
) -> OdeSolution:
    """
    Integrate g^lambda from g_0 = lambda until t_lambda.

    Args:
        spec: Weight, deviation, barrier and sets
        lam: Initial value lambda > f_0
        psi: Psi evaluator (a LatticePsi by default)
        samples: Number of output samples on [0, t_lambda]

    Returns:
        OdeSolution with the sampled trajectory and t_lambda

    Raises:
        PreconditionError: If lambda does not lie above the barrier at 0
        StepSizeCollapseError: If the integrator cannot advance
    """
    eps = OdeConfig.EPS_STOP
    if lam <= spec.lower_start():
        raise PreconditionError(
            f"lambda = {lam:.6g} is not above the lower barrier "
            f"{spec.lower_start():.6g}"
        )
    drift = _Drift(spec, psi or _shared_lattice())
    g = float(lam)
    t_max, hit_lower = 1.0, False
    done: List[_Segment] = []

    for start, stop, regime in _segments(spec):
        lower = float(spec.f(start))
        uses_y = regime == BOTH
        if regime in (BOTH, LOWER) and g - lower <= eps:
            t_max, hit_lower = start, True
            break

        if uses_y:
            state0 = (g - lower) ** 3

            def rate(t, state, _drift=drift):
                return [_drift.y_rate(t, state[0])]

            def barrier(t, state):
                return state[0] - eps**3

        else:

            def rate(t, state, _drift=drift, _regime=regime):
                return [_drift.g_rate(t, state[0], _regime)]

            def barrier(t, state):
                return state[0] - float(spec.f(t)) - eps

            state0 = g

        barrier.terminal = True
        barrier.direction = -1
        events = [barrier] if regime in (BOTH, LOWER) else None

        sol = solve_ivp(
            rate,
            (start, stop),
            [state0],
            method="RK45",
            rtol=OdeConfig.RTOL,
            atol=OdeConfig.ATOL,
            dense_output=True,
            events=events,
        )
        if sol.status == -1:
            last = float(sol.t[-1]) if sol.t.size else start
            raise StepSizeCollapseError(
                f"integrator failed for lambda = {lam:.10g}: {sol.message}",
                last_time=last,
            )
        done.append(_Segment(start, stop, regime, sol.sol, uses_y))

        end_state = float(sol.y[0, -1])
        if sol.status == 1:
            t_max, hit_lower = float(sol.t_events[0][0]), True
            break
        g = float(spec.f(stop)) + np.cbrt(end_state) if uses_y else end_state

    if not done:
        trajectory = ScalarField.constant(lam, name="g")
        times = np.array([0.0])
        values = np.array([lam])
    else:
        path = _Trajectory(spec, done, t_max)
        trajectory = ScalarField.from_callable(path, name="g")
        times = np.linspace(0.0, t_max, samples)
        values = np.asarray(path(times), dtype=float)
        values[0] = lam

    logger.debug(
        "g^%.10g: t_max = %.10g, g_end = %.10g, hit_lower = %s",
        lam,
        t_max,
        values[-1],
        hit_lower,
    )
    return OdeSolution(
        lam=float(lam),
        t_max=float(t_max),
        times=times,
        values=values,
        hit_lower=hit_lower,
        trajectory=trajectory,
    )


_lattice: Optional[LatticePsi] = None


def _shared_lattice() -> LatticePsi:
    global _lattice  # pylint: disable=global-statement
    if _lattice is None:
        _lattice = LatticePsi()
    return _lattice


def _start_above(spec: OdeSpec) -> float:
    return spec.lower_start() + 10.0 * OdeConfig.EPS_STOP


def find_lambda_c(spec: OdeSpec, psi: Optional[Callable] = None) -> float:
    """
    Smallest lambda whose trajectory survives to t = 1, to LAMBDA_C_TOL.

    Returns -inf when there is no lower barrier.

    Raises:
        BracketError: If no surviving lambda is found
    """
    if spec.F.is_empty:
        return -np.inf
    lo = _start_above(spec)

    def survives(lam: float) -> bool:
        return not solve_g_lambda(spec, lam, psi, samples=2).hit_lower

    if survives(lo):
        return spec.lower_start()

    step = OdeConfig.LAMBDA_START_WIDTH
    hi = lo + step
    config = BracketConfig()
    extensions = 0
    while not survives(hi):
        extensions += 1
        if extensions > config.max_extensions:
            raise BracketError(
                "no surviving lambda found",
                last_bracket=(lo, hi),
                extensions=extensions,
            )
        lo, step = hi, step * config.growth_factor
        hi = lo + step
        logger.warning("Extending lambda_c bracket to [%.6g, %.6g]", lo, hi)

    while hi - lo > OdeConfig.LAMBDA_C_TOL:
        mid = 0.5 * (lo + hi)
        if survives(mid):
            hi = mid
        else:
            lo = mid
    logger.info("lambda_c = %.10g", hi)
    return hi


def terminal_value(spec: OdeSpec, lam: float, psi: Optional[Callable] = None) -> float:
    """
    g^lambda_1 for surviving trajectories, f(t_lambda) - (1 - t_lambda) otherwise.

    Continuous and increasing in lambda, so its zero is lambda*.
    """
    sol = solve_g_lambda(spec, lam, psi, samples=2)
    if not sol.hit_lower:
        return sol.g_end
    return float(spec.f(sol.t_max)) - (1.0 - sol.t_max)


def find_lambda_star(
    spec: OdeSpec,
    l_star: float = 0.0,
    psi: Optional[Callable] = None,
) -> float:
    """
    The lambda whose trajectory ends at g_1 = 0.

    The search starts on [f_0 + eps, max(0, -l*) + 1] and extends upward.

    Raises:
        RootNotFoundError: If g^lambda_1 > 0 already at the lowest admissible lambda
    """
    if spec.F.is_empty:
        lo = -(abs(l_star) + OdeConfig.LAMBDA_START_WIDTH)
    else:
        lo = _start_above(spec)
    hi = max(0.0, -l_star) + OdeConfig.LAMBDA_START_WIDTH
    hi = max(hi, lo + OdeConfig.LAMBDA_START_WIDTH)

    def value(lam: float) -> float:
        return terminal_value(spec, lam, psi)

    value_lo = value(lo)
    if value_lo > 0.0:
        if spec.F.is_empty:
            lo, hi, _, _ = expand_bracket(value, lo, hi, BracketConfig(), "down")
        else:
            raise RootNotFoundError(
                f"g^lambda_1 = {value_lo:.6g} > 0 already at lambda = {lo:.6g}"
            )
    else:
        lo, hi, _, _ = expand_bracket(value, lo, hi, BracketConfig(), "up")
    root = brentq(value, lo, hi, xtol=OdeConfig.LAMBDA_STAR_TOL)
    logger.info("lambda* = %.10g", root)
    return float(root)


def selection_frontier(spec: OdeSpec, psi: Optional[Callable] = None) -> float:
    """
    g^0_1, the centering constant of the selected maximum in n^(1/3) units.

    Raises:
        PreconditionError: If lambda = 0 is not admissible (lambda_c >= 0)
    """
    lam_c = find_lambda_c(spec, psi)
    if lam_c >= 0.0:
        raise PreconditionError(
            f"selection frontier needs lambda_c < 0, got {lam_c:.6g}"
        )
    return solve_g_lambda(spec, 0.0, psi).g_end


def tail_exponent(spec: OdeSpec, lam: float) -> float:
    """Predicted exponent -phi_0 lambda of the upper tail at g^lambda_1."""
    return -float(spec.phi(0.0)) * lam


def barrier_spec_for(spec: OdeSpec, solution: OdeSolution) -> BarrierSpec:
    """The barrier functional's inputs with g replaced by a solved trajectory."""
    return BarrierSpec(
        f=spec.f, g=solution.trajectory, F=spec.F, G=spec.G, h=spec.phi
    )


def integral_residual(spec: OdeSpec, solution: OdeSolution) -> float:
    """
    max over samples of |phi_t g_t - phi_0 lambda - H_t(f, g, phi)|, with H
    recomputed by quadrature from the solved trajectory.
    """
    times = solution.times
    barrier = barrier_spec_for(spec, solution)
    h_values = running_H(barrier, spec.sigma, times, check=False)
    lhs = np.asarray(spec.phi(times)) * solution.values
    rhs = float(spec.phi(0.0)) * solution.lam + h_values
    return float(np.max(np.abs(lhs - rhs)))


def sweep_lambda(
    spec: OdeSpec,
    lambdas: Sequence[float],
    workers: Optional[int] = None,
    psi: Optional[Callable] = None,
) -> List[OdeSolution]:
    """Solve for several lambdas on a thread pool; results keep input order."""
    workers = workers or worker_count()
    if workers == 1:
        return [solve_g_lambda(spec, lam, psi) for lam in lambdas]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda lam: solve_g_lambda(spec, lam, psi), lambdas))


def lipschitz_bound(
    spec: OdeSpec, lower: OdeSolution, upper: OdeSolution
) -> Tuple[float, float]:
    """
    Compare two trajectories against the Gronwall bound.

    Returns:
        (observed sup |g^upper - g^lower| / |lambda gap|, exp(L)) where L is
        the integral over the common interval of the largest |dR/dg| / phi
        along the two trajectories, estimated by finite differences.
    """
    t_end = min(lower.t_max, upper.t_max)
    times = np.linspace(0.0, t_end, 401)
    g_lo = np.asarray(lower.trajectory(times), dtype=float)
    g_hi = np.asarray(upper.trajectory(times), dtype=float)
    gap = abs(upper.lam - lower.lam)
    observed = float(np.max(np.abs(g_hi - g_lo)) / gap)

    drift = _Drift(spec, _shared_lattice())
    slopes = np.empty_like(times)
    for i, t in enumerate(times):
        regime = spec.regime(t)
        rates = []
        for g in (g_lo[i], g_hi[i]):
            delta = 1e-6 * (1.0 + abs(g))
            up = drift.g_rate(t, g + delta, regime)
            down = drift.g_rate(t, g - delta, regime)
            rates.append(abs(up - down) / (2.0 * delta))
        slopes[i] = max(rates)
    lipschitz = float(trapezoid(slopes, times))
    return observed, float(np.exp(lipschitz))


def write_ode_solution(
    solution: OdeSolution, out_dir: Path, hash_value: Optional[str] = None
) -> Tuple[Path, Path]:
    """Write (t, g) samples and the (lambda, t_lambda, g_end) record."""
    out_dir = Path(out_dir)
    stem = f"g_lambda_{solution.lam:+.6f}"
    table = write_csv(
        out_dir / f"{stem}.csv", {"t": solution.times, "g": solution.values}, hash_value
    )
    record = write_json(
        out_dir / f"{stem}.json",
        {
            "lambda": solution.lam,
            "t_lambda": solution.t_max,
            "g_end": solution.g_end,
            "hit_lower": solution.hit_lower,
        },
        hash_value,
    )
    return table, record
