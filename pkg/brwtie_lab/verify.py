"""
Acceptance checks.

Each check returns a CheckResult and never raises a laboratory error: a
solver failure becomes a failed check carrying the error message. The quick
profile covers the closed forms and identities that run in seconds; the full
profile adds the PDE cross-oracle, the optimal-path comparison and the Monte
Carlo runs.
"""

import logging
import tempfile
from pathlib import Path
from typing import Callable, List, Literal, Tuple

import numpy as np
from scipy.integrate import quad

from brwtie_lab.airy import PSI_ZERO, HALFLINE_CONSTANT, ai, airy_zero, psi
from brwtie_lab.environment import AnalyticLaplace, EnvironmentModel, GaussianBinary
from brwtie_lab.errors import BrwLabError
from brwtie_lab.fields import IndicatorSet, ScalarField
from brwtie_lab.functional import BarrierSpec
from brwtie_lab.models import CheckResult
from brwtie_lab.ode import (
    cmd_spec,
    find_lambda_star,
    integral_residual,
    solve_g_lambda,
)
from brwtie_lab.optimal_path import (
    correction_l_star,
    solve_optimal_profile,
    solve_special_case,
)
from brwtie_lab.pde import feynman_kac_decay
from brwtie_lab.simulate import (
    BrwConfig,
    PopulationControl,
    brw_run,
    collect,
    full_tree_moment,
    path_positions,
    rw_weighted_expectation,
    spine_moment,
    write_trials,
)

logger = logging.getLogger(__name__)

Profile = Literal["quick", "full"]
Check = Callable[[int], CheckResult]

HOMOGENEOUS_LAMBDA_STAR = (1.5 * np.pi**2) ** (1.0 / 3.0)


def unit_environment() -> EnvironmentModel:
    """Homogeneous Gaussian environment with sigma = 1 and theta* = 1."""
    return AnalyticLaplace.gaussian_growth(ScalarField.constant(1.0), 0.5)


def _result(
    name: str, passed: bool, value=None, expected=None, detail: str = ""
) -> CheckResult:
    return CheckResult(
        name=name,
        passed=bool(passed),
        value=None if value is None else float(value),
        expected=None if expected is None else float(expected),
        detail=detail,
    )


def check_airy_zeros(_seed: int) -> CheckResult:
    first = airy_zero(1)
    residual = max(abs(float(ai(airy_zero(n)))) for n in range(1, 51))
    passed = abs(first - (-2.3381)) <= 5e-4 and residual <= 1e-8
    return _result(
        "airy_zeros", passed, first, -2.3381, f"max |Ai(alpha_n)| = {residual:.3g}"
    )


def check_psi_at_zero(_seed: int) -> CheckResult:
    at_zero = psi(0.0)
    near = psi(1e-4)
    passed = abs(at_zero - PSI_ZERO) <= 1e-9 and abs(near - (at_zero - 5e-5)) <= 1e-5
    return _result("psi_at_zero", passed, at_zero, PSI_ZERO, f"psi(1e-4) = {near:.10g}")


def check_psi_reflection(_seed: int) -> CheckResult:
    worst = max(abs(psi(h) - psi(-h) + h) for h in (0.1, 1.0, 10.0, 100.0))
    return _result("psi_reflection", worst <= 1e-9, worst, 0.0)


def check_psi_asymptotics(_seed: int) -> CheckResult:
    ratios = [
        psi(h) / (HALFLINE_CONSTANT * h ** (2.0 / 3.0)) for h in (10.0, 1e2, 1e3, 1e4)
    ]
    gaps = np.abs(np.asarray(ratios) - 1.0)
    passed = gaps[-1] <= 0.1 and bool(np.all(np.diff(gaps) < 0.0))
    return _result(
        "psi_asymptotics",
        passed,
        ratios[-1],
        1.0,
        "ratios " + ", ".join(f"{r:.4f}" for r in ratios),
    )


def check_pde_cross_oracle(_seed: int) -> CheckResult:
    worst = 0.0
    for h in (0.0, 0.5, 1.0, 2.0, 5.0):
        worst = max(worst, abs(feynman_kac_decay(h, "interval") - psi(h)))
    for h in (0.5, 1.0, 2.0):
        exact = HALFLINE_CONSTANT * h ** (2.0 / 3.0)
        worst = max(worst, abs(feynman_kac_decay(h, "halfline") - exact))
    return _result("pde_cross_oracle", worst <= 1e-3, worst, 0.0)


SPECIAL_SIGMAS: Tuple[Tuple[str, ScalarField], ...] = (
    ("nondecreasing", ScalarField.linear(2.0, -1.0)),
    ("nonincreasing", ScalarField.linear(1.0, 1.0)),
    ("mixed", ScalarField.vshape(1.0, 1.0)),
)


def check_optimal_path(_seed: int) -> CheckResult:
    details, passed = [], True
    for case, sigma in SPECIAL_SIGMAS:
        env = GaussianBinary(sigma)
        generic = solve_optimal_profile(env, 2048)
        closed = solve_special_case(env, 2048, case)
        grid = generic.grid
        gap_v = abs(generic.v_star - closed.v_star)
        gap_theta = float(np.max(np.abs(generic.theta(grid) - closed.theta(grid))))
        kkt = max(generic.kkt_report.residuals().values())
        ok = gap_v <= 1e-4 and gap_theta <= 1e-3 and kkt <= 1e-6
        passed &= ok
        details.append(f"{case}: dv={gap_v:.2g} dtheta={gap_theta:.2g} kkt={kkt:.2g}")
    return _result("optimal_path", passed, detail="; ".join(details))


def check_l_star(_seed: int) -> CheckResult:
    env = GaussianBinary(ScalarField.linear(2.0, -1.0))
    path = solve_special_case(env, 2048, "nondecreasing")
    computed = correction_l_star(env, path)
    integral = quad(lambda t: (2.0 - t) ** (1.0 / 3.0), 0.0, 1.0)[0]
    exact = HALFLINE_CONSTANT / (2.0 * np.log(2.0)) ** (1.0 / 6.0) * integral
    homogeneous = correction_l_star(
        GaussianBinary(ScalarField.constant(1.0)),
        solve_special_case(GaussianBinary(ScalarField.constant(1.0)), 256),
    )
    passed = abs(computed - exact) <= 1e-6 and homogeneous == 0.0
    return _result("l_star", passed, computed, exact, f"homogeneous l* = {homogeneous}")


def check_lambda_star(_seed: int) -> CheckResult:
    env = unit_environment()
    path = solve_special_case(env, 256, "nondecreasing")
    lam = find_lambda_star(cmd_spec(env, path), path.l_star)
    relative = abs(lam - HOMOGENEOUS_LAMBDA_STAR) / HOMOGENEOUS_LAMBDA_STAR
    bounds = [lam >= -path.l_star]
    for _, sigma in SPECIAL_SIGMAS[:1]:
        other_env = GaussianBinary(sigma)
        other = solve_special_case(other_env, 1024, "nondecreasing")
        other_lam = find_lambda_star(cmd_spec(other_env, other), other.l_star)
        bounds.append(other_lam >= -other.l_star)
    return _result(
        "lambda_star",
        relative <= 1e-4 and all(bounds),
        lam,
        HOMOGENEOUS_LAMBDA_STAR,
        f"lambda* >= -l* on {sum(bounds)}/{len(bounds)} environments",
    )


def check_ode_identities(_seed: int) -> CheckResult:
    env = unit_environment()
    path = solve_special_case(env, 256, "nondecreasing")
    base = cmd_spec(env, path)
    mu, lam = 0.5, 3.0
    shifted = solve_g_lambda(cmd_spec(env, path, mu=mu), lam)
    moved = solve_g_lambda(base, lam + mu)
    times = shifted.times
    shift_gap = float(np.max(np.abs(shifted.values - (moved.trajectory(times) - mu))))
    residual = max(
        integral_residual(base, solve_g_lambda(base, value)) for value in (2.5, 3.0)
    )
    passed = shift_gap <= 1e-8 and residual <= 1e-7
    return _result(
        "ode_identities",
        passed,
        max(shift_gap, residual),
        0.0,
        f"shift {shift_gap:.2g}, residual {residual:.2g}",
    )


def _bounded_functionals() -> List[Callable[[np.ndarray], np.ndarray]]:
    return [
        lambda paths: (paths[:, -1] > 0.0).astype(float),
        lambda paths: (np.max(paths, axis=1) <= 2.0).astype(float),
        lambda paths: np.exp(-np.abs(paths[:, -1])),
        lambda paths: np.cos(paths[:, 3]),
        lambda paths: 1.0 / (1.0 + paths[:, -1] ** 2),
    ]


def check_many_to_one(seed: int) -> CheckResult:
    env = GaussianBinary(ScalarField.constant(1.0))
    tilt = ScalarField.constant(0.5)
    worst = 0.0
    for functional in _bounded_functionals():
        spine, spine_se = spine_moment(env, tilt, 6, functional, 100_000, seed)
        tree, tree_se = full_tree_moment(env, 6, functional, 20_000, seed + 1)
        worst = max(worst, abs(spine - tree) / np.hypot(spine_se, tree_se))
    return _result("many_to_one", worst <= 4.0, worst, 0.0, "max gap in std errors")


def _band_spec() -> BarrierSpec:
    return BarrierSpec(
        f=ScalarField.constant(-1.0),
        g=ScalarField.constant(1.0),
        F=IndicatorSet.full(),
        G=IndicatorSet.full(),
        h=ScalarField.constant(0.0),
    )


def check_band_walk(seed: int) -> CheckResult:
    target = PSI_ZERO / 4.0
    sigma = ScalarField.constant(1.0)
    estimates = [
        rw_weighted_expectation(sigma, _band_spec(), n, 10_000, seed).estimate
        for n in (1_000, 10_000, 100_000)
    ]
    gaps = np.abs(np.asarray(estimates) - target)
    passed = gaps[-1] <= 0.15 * abs(target) and bool(np.all(np.diff(gaps) < 0.0))
    return _result(
        "band_walk",
        passed,
        estimates[-1],
        target,
        "estimates " + ", ".join(f"{e:.4f}" for e in estimates),
    )


def _first_order_run(seed: int, trials: int):
    env = GaussianBinary(ScalarField.constant(1.0))
    path = solve_special_case(env, 256, "nondecreasing")
    config = BrwConfig(
        env=env,
        n=16,
        population_control=PopulationControl(mode="full_tree"),
        trials=trials,
        seed=seed,
    )
    return config, path, collect(config, brw_run(config, path.a))


def check_brw_first_order(seed: int) -> CheckResult:
    config, path, result = _first_order_run(seed, 2000)
    mean = float(np.mean(result.max_displacements())) / config.n
    reference = path_positions(path.a, config.n)[-1]
    maxima = result.max_displacements()
    consistent = np.all(result.consistent_displacements() >= reference - maxima - 1e-12)
    # second-order correction (3 / 2 theta*) log n of the homogeneous maximum
    theta = float(path.theta(0.0))
    predicted = path.v_star - 1.5 * np.log(config.n) / (theta * config.n)
    passed = abs(mean - predicted) <= 0.1 and mean < path.v_star and bool(consistent)
    return _result(
        "brw_first_order",
        passed,
        mean,
        path.v_star,
        f"consistent-displacement bound holds: {bool(consistent)}",
    )


def check_determinism(seed: int) -> CheckResult:
    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        for attempt in range(2):
            _, _, result = _first_order_run(seed, 8)
            table, _ = write_trials(result, Path(tmp) / str(attempt), "check")
            outputs.append(table.read_bytes())
    return _result("determinism", outputs[0] == outputs[1])


QUICK: Tuple[Check, ...] = (
    check_airy_zeros,
    check_psi_at_zero,
    check_psi_reflection,
    check_psi_asymptotics,
    check_l_star,
    check_lambda_star,
    check_ode_identities,
    check_determinism,
)
FULL: Tuple[Check, ...] = QUICK + (
    check_pde_cross_oracle,
    check_optimal_path,
    check_many_to_one,
    check_band_walk,
    check_brw_first_order,
)


def run_checks(profile: Profile = "quick", seed: int = 0) -> List[CheckResult]:
    """Run every check of a profile, turning laboratory errors into failures."""
    checks = QUICK if profile == "quick" else FULL
    results = []
    for check in checks:
        name = check.__name__.removeprefix("check_")
        try:
            result = check(seed)
        except BrwLabError as exc:
            result = _result(name, False, detail=f"{type(exc).__name__}: {exc.message}")
        level = logging.INFO if result.passed else logging.ERROR
        verdict = "pass" if result.passed else "FAIL"
        logger.log(level, "Check %s: %s", result.name, verdict)
        results.append(result)
    return results
