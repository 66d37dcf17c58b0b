"""
Optimal speed profile of a time-inhomogeneous branching random walk.

The profile is a_t = kappa'_t(theta_t) where theta maximizes the integral of
kappa'_t(theta_t) over non-decreasing positive theta whose energy
E_t = integral over [0, t] of e_s(theta_s), e_s = theta kappa'_s - kappa_s,
stays non-positive and vanishes at t = 1.

Two solvers are provided. "pava" runs pool-adjacent-violators on the convex
dual (minimize the integral of kappa_t(theta_t) / theta_t over non-decreasing
theta); a pooled block takes the value where its weighted growth sums to zero,
and unpooled points sit at theta-bar. "penalty" runs projected ascent on a
penalized primal with isotonic projection.
"""

import logging
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad, simpson
from scipy.optimize import brentq, isotonic_regression

from brwtie_lab.airy import HALFLINE_CONSTANT
from brwtie_lab.config import OptimalPathConfig
from brwtie_lab.environment import EnvironmentModel
from brwtie_lab.errors import (
    CaseMismatchError,
    ConvergenceError,
    InfeasibleEnvironmentError,
    MissingDerivativeError,
)
from brwtie_lab.fields import IndicatorSet, ScalarField
from brwtie_lab.functional import composite_integral
from brwtie_lab.models import KktReport, OptimalPath
from brwtie_lab.reporting import write_csv, write_json

logger = logging.getLogger(__name__)

SPECIAL_CASES = ("nondecreasing", "nonincreasing", "mixed")


class Discretization:
    """Uniform time grid with trapezoid weights and theta-bar samples."""

    def __init__(self, env: EnvironmentModel, grid: int | np.ndarray):
        self.env = env
        self.t = (
            np.linspace(0.0, 1.0, int(grid))
            if np.ndim(grid) == 0
            else np.asarray(grid, dtype=float)
        )
        if self.t.size < 3 or self.t[0] != 0.0 or self.t[-1] != 1.0:
            raise ValueError("time grid must span [0, 1] with at least 3 points")
        dt = np.diff(self.t)
        self.w = np.zeros_like(self.t)
        self.w[:-1] += 0.5 * dt
        self.w[1:] += 0.5 * dt
        self.spacing = float(dt.max())
        self.speed_field, self.theta_bar_field = env.natural_speed_fields()
        self.theta_bar = np.asarray(self.theta_bar_field(self.t), dtype=float)

    def growth(self, theta: np.ndarray, idx=slice(None)) -> np.ndarray:
        return np.asarray(self.env.growth(self.t[idx], theta), dtype=float)

    def energy(self, theta: np.ndarray) -> np.ndarray:
        """Node sums E_k = sum over i <= k of w_i e_i(theta_i)."""
        return np.cumsum(self.w * self.growth(theta))

    def contact_tolerance(self) -> float:
        return (
            OptimalPathConfig.CONTACT_FACTOR
            * OptimalPathConfig.ENERGY_TOLERANCE
            * self.spacing
        )


def _kkt_from_samples(
    theta: np.ndarray, energy: np.ndarray, tol: float
) -> KktReport:
    steps = np.diff(theta)
    inverse_steps = np.diff(1.0 / theta)
    return KktReport(
        monotonicity=float(max(0.0, -steps.min(initial=0.0))),
        energy_positivity=float(max(0.0, energy.max())),
        terminal_energy=float(abs(energy[-1])),
        slackness=float(abs(np.sum(energy[:-1] * inverse_steps))),
        tolerance=tol,
    )


def _l_star_integral(
    env: EnvironmentModel, theta: ScalarField, grid: np.ndarray
) -> float:
    if theta.derivative is None:
        raise MissingDerivativeError("l* needs theta with an attached derivative")

    def integrand(t):
        th = np.asarray(theta(t), dtype=float)
        rate = np.maximum(np.asarray(theta.derivative(t), dtype=float), 0.0)
        spread = np.sqrt(np.asarray(env.d2_kappa(t, th), dtype=float))
        return (rate * spread) ** (2.0 / 3.0) / th

    if theta.is_sampled or theta.derivative.is_sampled:
        integral = float(simpson(integrand(grid), x=grid))
    else:
        cuts = sorted(set(theta.all_breakpoints()) | set(env.breakpoints()))
        integral, _ = quad(
            lambda s: float(integrand(s)),
            0.0,
            1.0,
            points=cuts or None,
            limit=400,
            epsabs=1e-13,
            epsrel=1e-11,
        )
    return HALFLINE_CONSTANT * integral


def _assemble(
    disc: Discretization,
    theta: ScalarField,
    method: str,
    tol: float = OptimalPathConfig.ENERGY_TOLERANCE,
) -> OptimalPath:
    env, t = disc.env, disc.t
    theta_samples = np.asarray(theta(t), dtype=float)
    energy = disc.energy(theta_samples)

    if theta.is_sampled:
        a_samples = np.asarray(env.d_kappa(t, theta_samples), dtype=float)
        a_field = ScalarField.from_samples(a_samples, name="a")
        v_star = float(np.sum(disc.w * a_samples))
    else:
        a_field = ScalarField.from_callable(
            lambda s: env.d_kappa(s, theta(s)),
            breakpoints=theta.all_breakpoints(),
            name="a",
        )
        cuts = sorted(set(theta.all_breakpoints()) | set(env.breakpoints()))
        v_star = composite_integral(a_field, 0.0, 1.0, cuts)

    contact = IndicatorSet.from_mask(t, energy >= -disc.contact_tolerance())
    l_star = (
        _l_star_integral(env, theta, t) if theta.derivative is not None else None
    )
    return OptimalPath(
        grid=t,
        a=a_field,
        theta=theta,
        theta_bar=disc.theta_bar,
        energy=energy,
        v_star=v_star,
        l_star=l_star,
        contact_set=contact,
        kkt_report=_kkt_from_samples(theta_samples, energy, tol),
        method=method,
    )


# Pool-adjacent-violators on the dual


def _block_value(disc: Discretization, start: int, stop: int) -> float:
    idx = slice(start, stop + 1)
    weights = disc.w[idx]
    lo, hi = disc.theta_bar[idx].min(), disc.theta_bar[idx].max()
    if hi - lo <= OptimalPathConfig.BLOCK_XTOL:
        return float(lo)

    def pooled_growth(theta: float) -> float:
        pooled = np.full(stop - start + 1, theta)
        return float(np.sum(weights * disc.growth(pooled, idx)))

    f_lo, f_hi = pooled_growth(lo), pooled_growth(hi)
    if f_lo > 0.0 or f_hi < 0.0:
        if min(abs(f_lo), abs(f_hi)) <= OptimalPathConfig.BLOCK_XTOL:
            return float(lo if abs(f_lo) < abs(f_hi) else hi)
        raise InfeasibleEnvironmentError(
            f"pooled growth on [{disc.t[start]:.4g}, {disc.t[stop]:.4g}] does not "
            f"change sign between {lo:.6g} and {hi:.6g}"
        )
    return float(brentq(pooled_growth, lo, hi, xtol=OptimalPathConfig.BLOCK_XTOL))


def _pava(disc: Discretization) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (theta samples, mask of points that sit in singleton blocks)
    """
    blocks = []
    for i, value in enumerate(disc.theta_bar):
        blocks.append([i, i, float(value)])
        while len(blocks) > 1 and blocks[-2][2] > blocks[-1][2]:
            last = blocks.pop()
            blocks[-1][1] = last[1]
            blocks[-1][2] = _block_value(disc, blocks[-1][0], blocks[-1][1])

    theta = np.empty_like(disc.theta_bar)
    free = np.zeros(theta.size, dtype=bool)
    for start, stop, value in blocks:
        theta[start : stop + 1] = value
        if start == stop:
            free[start] = True
    logger.debug("PAVA finished with %d blocks", len(blocks))
    return theta, free


def _solve_pava(disc: Discretization) -> OptimalPath:
    theta, free = _pava(disc)
    slope = np.where(free, np.asarray(disc.theta_bar_field.derivative(disc.t)), 0.0)
    field = ScalarField.from_samples(theta, slope, name="theta")
    return _assemble(disc, field, "pava")


# Penalized projected ascent


def _solve_penalty(disc: Discretization) -> OptimalPath:
    env, t, w = disc.env, disc.t, disc.w

    def objective(theta: np.ndarray, rho: float) -> float:
        energy = disc.energy(theta)
        reward = np.sum(w * np.asarray(env.d_kappa(t, theta)))
        penalty = rho * np.sum(np.maximum(energy, 0.0) ** 2) + rho * energy[-1] ** 2
        return float(reward - penalty)

    def gradient(theta: np.ndarray, rho: float) -> np.ndarray:
        energy = disc.energy(theta)
        curvature = np.asarray(env.d2_kappa(t, theta))
        growth_slope = w * theta * curvature
        excess = np.cumsum(np.maximum(energy, 0.0)[::-1])[::-1]
        return w * curvature - 2.0 * rho * growth_slope * (excess + energy[-1])

    def project(theta: np.ndarray) -> np.ndarray:
        fitted = isotonic_regression(theta, weights=w, increasing=True).x
        return np.maximum(fitted, 1e-8)

    theta = np.full_like(t, disc.theta_bar.min())
    for rho in OptimalPathConfig.PENALTY_SCHEDULE:
        step = OptimalPathConfig.PENALTY_STEP
        value = objective(theta, rho)
        for _ in range(OptimalPathConfig.PENALTY_INNER_ITERATIONS):
            grad = gradient(theta, rho)
            direction = grad / w
            accepted = False
            while step > OptimalPathConfig.PENALTY_MIN_STEP:
                candidate = project(theta + step * direction)
                candidate_value = objective(candidate, rho)
                if candidate_value >= value + 1e-4 * np.dot(grad, candidate - theta):
                    accepted = True
                    break
                step *= OptimalPathConfig.PENALTY_BACKTRACK
            if not accepted:
                break
            moved = np.max(np.abs(candidate - theta))
            theta, value = candidate, candidate_value
            if moved < 1e-13:
                break
            step = min(2.0 * step, OptimalPathConfig.PENALTY_STEP)
        logger.debug("penalty %.0e: objective %.10g", rho, value)

    slope = np.gradient(theta, t)
    field = ScalarField.from_samples(theta, slope, name="theta")
    path = _assemble(disc, field, "penalty")
    report = path.kkt_report
    infeasibility = max(report.energy_positivity, report.terminal_energy)
    if infeasibility > OptimalPathConfig.PENALTY_FEASIBILITY:
        raise ConvergenceError(
            "penalized ascent ended infeasible",
            residuals=report.residuals(),
            best=path,
        )
    return path


def solve_optimal_profile(
    env: EnvironmentModel,
    grid: int | np.ndarray = OptimalPathConfig.GRID,
    method: str = "pava",
) -> OptimalPath:
    """
    Solve for the optimal speed profile.

    Args:
        env: Environment
        grid: Number of uniform grid points, or the grid itself
        method: "pava" (exact dual solve) or "penalty"

    Returns:
        OptimalPath with v*, l*, the contact set and the optimality report

    Raises:
        ConvergenceError: If the result violates the optimality conditions
        InfeasibleEnvironmentError: If a pooled block has no admissible value
    """
    disc = Discretization(env, grid)
    if method == "pava":
        path = _solve_pava(disc)
    elif method == "penalty":
        path = _solve_penalty(disc)
    else:
        raise ValueError(f"unknown optimal-path method {method!r}")

    if method == "pava" and not path.kkt_report.passed:
        raise ConvergenceError(
            "optimality conditions violated",
            residuals=path.kkt_report.residuals(),
            best=path,
        )
    logger.info(
        "Optimal profile (%s, %d points): v* = %.10g, l* = %.10g",
        method,
        disc.t.size,
        path.v_star,
        path.l_star if path.l_star is not None else float("nan"),
    )
    return path


# Closed-form cases


def _shape_of(theta_bar: np.ndarray) -> str:
    steps = np.diff(theta_bar)
    tol = 1e-12 * max(1.0, float(np.abs(theta_bar).max()))
    if np.all(steps >= -tol):
        return "nondecreasing"
    if np.all(steps <= tol):
        return "nonincreasing"
    top = int(np.argmax(theta_bar))
    if np.all(steps[:top] >= -tol) and np.all(steps[top:] <= tol):
        return "peak"
    bottom = int(np.argmin(theta_bar))
    if np.all(steps[:bottom] <= tol) and np.all(steps[bottom:] >= -tol):
        return "valley"
    return "irregular"


def _growth_integral(
    disc: Discretization, theta: float, lo: float, hi: float
) -> float:
    env = disc.env
    cuts = sorted(set(env.breakpoints()) | set(disc.theta_bar_field.all_breakpoints()))
    return composite_integral(
        lambda s: env.growth(s, np.full_like(s, theta)), lo, hi, cuts
    )


def _constant_root(disc: Discretization) -> float:
    lo, hi = disc.theta_bar.min(), disc.theta_bar.max()
    if hi - lo <= OptimalPathConfig.SPECIAL_CASE_XTOL:
        return float(lo)
    return float(
        brentq(
            lambda th: _growth_integral(disc, th, 0.0, 1.0),
            lo,
            hi,
            xtol=OptimalPathConfig.SPECIAL_CASE_XTOL,
        )
    )


def _switch_time(
    equation: Callable[[float], float], lo: float, hi: float, default: float
) -> float:
    f_lo, f_hi = equation(lo), equation(hi)
    if f_lo * f_hi > 0.0:
        return default
    return float(brentq(equation, lo, hi, xtol=OptimalPathConfig.SPECIAL_CASE_XTOL))


def solve_special_case(
    env: EnvironmentModel,
    grid: int | np.ndarray = OptimalPathConfig.GRID,
    case: str = "nondecreasing",
) -> OptimalPath:
    """
    Closed-form optimal profile when theta-bar is monotone or single-humped.

    nondecreasing: theta = theta-bar. nonincreasing: theta is the constant
    whose total energy vanishes. mixed: for a peaked theta-bar,
    theta_s = theta-bar at min(s, t*); for a valley, theta-bar at max(s, t*),
    with t* the switch time where the energy of the flat part vanishes.

    Raises:
        CaseMismatchError: If theta-bar does not have the requested shape
    """
    if case not in SPECIAL_CASES:
        raise ValueError(f"unknown case {case!r}, expected one of {SPECIAL_CASES}")
    disc = Discretization(env, grid)
    bar = disc.theta_bar_field
    shape = _shape_of(disc.theta_bar)
    if case in ("nondecreasing", "nonincreasing") and shape != case:
        raise CaseMismatchError(f"theta-bar is {shape}, not {case}")
    if case == "mixed" and shape not in ("peak", "valley"):
        raise CaseMismatchError(f"theta-bar is {shape}, not single-humped")

    if case == "nondecreasing":
        theta = bar
    elif case == "nonincreasing":
        theta = ScalarField.constant(_constant_root(disc), name="theta")
    elif shape == "peak":
        top = float(disc.t[np.argmax(disc.theta_bar)])
        switch = _switch_time(
            lambda s: _growth_integral(disc, float(bar(s)), s, 1.0), 0.0, top, 0.0
        )
        theta = ScalarField.from_callable(
            lambda s: bar(np.minimum(s, switch)),
            lambda s: np.where(s < switch, bar.derivative(s), 0.0),
            (*bar.all_breakpoints(), switch),
            name="theta",
        )
        logger.info("Peaked theta-bar: switch time t* = %.10g", switch)
    else:
        bottom = float(disc.t[np.argmin(disc.theta_bar)])
        if _growth_integral(disc, float(bar(1.0)), 0.0, 1.0) < 0.0:
            theta = ScalarField.constant(_constant_root(disc), name="theta")
        else:
            switch = _switch_time(
                lambda s: _growth_integral(disc, float(bar(s)), 0.0, s),
                bottom,
                1.0,
                1.0,
            )
            theta = ScalarField.from_callable(
                lambda s: bar(np.maximum(s, switch)),
                lambda s: np.where(s > switch, bar.derivative(s), 0.0),
                (*bar.all_breakpoints(), switch),
                name="theta",
            )
            logger.info("Valley theta-bar: switch time t* = %.10g", switch)

    return _assemble(disc, theta, f"special:{case}")


# Verification and helpers


def check_optimality(
    env: EnvironmentModel,
    path: OptimalPath,
    tol: float = OptimalPathConfig.ENERGY_TOLERANCE,
) -> KktReport:
    """Residuals of monotonicity, energy sign, terminal energy and slackness."""
    disc_t = path.grid
    theta = np.asarray(path.theta(disc_t), dtype=float)
    dt = np.diff(disc_t)
    w = np.zeros_like(disc_t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    energy = np.cumsum(w * np.asarray(env.growth(disc_t, theta)))
    return _kkt_from_samples(theta, energy, tol)


def correction_l_star(env: EnvironmentModel, path: OptimalPath) -> float:
    """
    l* = (alpha_1 / 2^(1/3)) * integral of (theta' sigma)^(2/3) / theta,
    sigma^2 = kappa''(theta).

    Raises:
        MissingDerivativeError: If theta carries no derivative
    """
    return _l_star_integral(env, path.theta, path.grid)


def perturb_theta(
    env: EnvironmentModel,
    path: OptimalPath,
    delta: float,
    window: Tuple[float, float] = (0.4, 0.6),
) -> OptimalPath:
    """Shift theta by delta on a window and re-evaluate the profile."""
    t = path.grid
    bump = np.where((t >= window[0]) & (t <= window[1]), delta, 0.0)
    theta = np.asarray(path.theta(t), dtype=float) + bump
    slope = (
        np.asarray(path.theta.derivative(t), dtype=float)
        if path.theta.derivative is not None
        else np.gradient(theta, t)
    )
    field = ScalarField.from_samples(theta, slope, name="theta")
    return _assemble(Discretization(env, t), field, f"{path.method}+perturbed")


def contact_measure(path: OptimalPath) -> float:
    return path.contact_set.measure()


def write_optimal_path(
    path: OptimalPath, out_dir: Path, hash_value: Optional[str] = None
) -> Tuple[Path, Path]:
    """Write the profile table and its JSON summary."""
    out_dir = Path(out_dir)
    t = path.grid
    table = write_csv(
        out_dir / "optimal_path.csv",
        {
            "t": t,
            "a": path.a(t),
            "theta": path.theta(t),
            "theta_bar": path.theta_bar,
            "energy": path.energy,
        },
        hash_value,
    )
    summary = write_json(
        out_dir / "optimal_path.json",
        {
            "method": path.method,
            "v_star": path.v_star,
            "l_star": path.l_star,
            "contact_set": list(path.contact_set.intervals),
            "contact_measure": contact_measure(path),
            "kkt": path.kkt_report.residuals() if path.kkt_report else None,
        },
        hash_value,
    )
    return table, summary
