"""
Feynman-Kac heat equations with a linear potential.

u_t = u_xx / 2 - h x u is solved by Crank-Nicolson on [0, 1] with Dirichlet
ends, or on the half-line truncated at L with u(L) = 0. The first few steps
are backward Euler half-steps to damp the high modes Crank-Nicolson leaves
oscillating. The solution is renormalised every step and the log of the
discarded norms gives the exponential decay rate, which is the leading
eigenvalue: Psi(h) on the interval and (alpha_1 / 2^(1/3)) h^(2/3) on the
half-line.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from brwtie_lab.airy import CBRT2, PSI_ZERO, airy_zero, scaled_eigenvalue
from brwtie_lab.config import PdeConfig
from brwtie_lab.errors import PdeConvergenceError, PreconditionError
from brwtie_lab.models import PdeRun
from brwtie_lab.reporting import write_csv, write_json

logger = logging.getLogger(__name__)

Domain = Literal["interval", "halfline"]


@dataclass
class _Problem:
    x: np.ndarray
    u0: np.ndarray
    dt: float
    t_final: float
    length: float


@dataclass
class _Evolution:
    times: np.ndarray
    log_norms: np.ndarray
    final: np.ndarray
    snapshot_times: np.ndarray
    snapshots: np.ndarray


def halfline_length(h: float, length: Optional[float] = None) -> float:
    """Truncation point, at least the default length and with h L^3 >= 200."""
    confined = (PdeConfig.HALFLINE_CONFINEMENT / h) ** (1.0 / 3.0)
    return max(confined, length or PdeConfig.HALFLINE_LENGTH)


def _problem(
    h: float,
    domain: Domain,
    resolution: float,
    length: Optional[float],
    initial: str = "default",
) -> _Problem:
    if resolution <= 0:
        raise PreconditionError(f"resolution must be positive, got {resolution}")

    if domain == "interval":
        nx = max(8, int(round(PdeConfig.INTERVAL_POINTS * resolution)))
        x = np.linspace(0.0, 1.0, nx + 1)
        u0 = np.sin(np.pi * x)
        if initial == "asymmetric":
            u0 = x * (1.0 - x) * np.exp(-2.0 * x)
        return _Problem(
            x, u0, PdeConfig.INTERVAL_DT / resolution, PdeConfig.INTERVAL_T_FINAL, 1.0
        )

    if domain == "halfline":
        if h <= 0:
            raise PreconditionError(
                f"the half-line needs a confining potential, got h = {h}"
            )
        total = halfline_length(h, length)
        dx = PdeConfig.HALFLINE_DX / resolution
        nx = int(np.ceil(total / dx))
        x = np.linspace(0.0, nx * dx, nx + 1)
        u0 = x * np.exp(-x)
        u0[-1] = 0.0
        return _Problem(
            x, u0, PdeConfig.HALFLINE_DT / resolution, PdeConfig.HALFLINE_T_FINAL, x[-1]
        )

    raise PreconditionError(f"unknown domain {domain!r}")


def _operator(x: np.ndarray, h: float) -> Tuple[np.ndarray, float]:
    """Diagonal and off-diagonal of u_xx / 2 - h x u on the interior nodes."""
    dx = x[1] - x[0]
    inner = x[1:-1]
    return -1.0 / dx**2 - h * inner, 0.5 / dx**2


def _step_matrices(diag: np.ndarray, off: float, dt: float, implicit: float):
    n = diag.size
    banded = np.zeros((3, n))
    banded[0, 1:] = -implicit * dt * off
    banded[1, :] = 1.0 - implicit * dt * diag
    banded[2, :-1] = -implicit * dt * off
    explicit = (1.0 - implicit) * dt

    def apply_explicit(u: np.ndarray) -> np.ndarray:
        if explicit == 0.0:
            return u.copy()
        out = u + explicit * diag * u
        out[:-1] += explicit * off * u[1:]
        out[1:] += explicit * off * u[:-1]
        return out

    return banded, apply_explicit


def _evolve(
    problem: _Problem, h: float, dt: float, snapshot_count: int = 0
) -> _Evolution:
    x = problem.x
    dx = x[1] - x[0]
    diag, off = _operator(x, h)

    def norm(values: np.ndarray) -> float:
        return float(np.sqrt(dx * np.sum(values**2)))

    u = problem.u0[1:-1].astype(float)
    u /= norm(u)

    smoothing = PdeConfig.SMOOTHING_STEPS
    euler = _step_matrices(diag, off, 0.5 * dt, implicit=1.0)
    crank = _step_matrices(diag, off, dt, implicit=0.5)
    t_smooth = 0.5 * dt * smoothing
    steps = int(round((problem.t_final - t_smooth) / dt))

    times = np.empty(smoothing + steps + 1)
    log_norms = np.empty_like(times)
    times[0], log_norms[0] = 0.0, 0.0
    stride = max(1, (smoothing + steps) // snapshot_count) if snapshot_count else 0
    snap_times, snaps = [], []

    t, total = 0.0, 0.0
    for k in range(1, smoothing + steps + 1):
        banded, apply_explicit = euler if k <= smoothing else crank
        u = solve_banded((1, 1), banded, apply_explicit(u))
        t += 0.5 * dt if k <= smoothing else dt
        size = norm(u)
        if not np.isfinite(size) or size == 0.0:
            raise PdeConvergenceError(
                f"solution norm degenerated at t = {t:.6g}",
                diagnostics={"time": t, "norm": size},
            )
        u /= size
        total += np.log(size)
        times[k], log_norms[k] = t, total
        if stride and k % stride == 0:
            snap_times.append(t)
            snaps.append(u.copy())

    final = np.concatenate(([0.0], u, [0.0]))
    return _Evolution(
        times=times,
        log_norms=log_norms,
        final=final,
        snapshot_times=np.array(snap_times),
        snapshots=np.array(snaps),
    )


def _window_slope(evolution: _Evolution, start: float, stop: float) -> float:
    mask = (evolution.times >= start) & (evolution.times <= stop)
    return float(np.polyfit(evolution.times[mask], evolution.log_norms[mask], 1)[0])


def run_feynman_kac(
    h: float,
    domain: Domain = "interval",
    resolution: float = 1.0,
    length: Optional[float] = None,
) -> PdeRun:
    """
    Solve the heat equation with potential -h x and extract its decay rate.

    The log-norm slope over [T/2, T] is measured at dt and dt/2 and
    Richardson-extrapolated in dt.

    Args:
        h: Potential strength
        domain: "interval" or "halfline"
        resolution: Refinement factor; grid points scale up and dt down by it
        length: Minimal half-line truncation point

    Returns:
        PdeRun with the decay rate and the final profile at unit sup norm

    Raises:
        PreconditionError: For a half-line run with h <= 0
        PdeConvergenceError: If the slope still drifts across the window
    """
    problem = _problem(h, domain, resolution, length)
    t_final = problem.t_final
    coarse = _evolve(problem, h, problem.dt)
    fine = _evolve(problem, h, 0.5 * problem.dt)

    slope_coarse = _window_slope(coarse, 0.5 * t_final, t_final)
    slope_fine = _window_slope(fine, 0.5 * t_final, t_final)
    early = _window_slope(fine, 0.5 * t_final, 0.75 * t_final)
    late = _window_slope(fine, 0.75 * t_final, t_final)
    decay = (4.0 * slope_fine - slope_coarse) / 3.0

    diagnostics: Dict[str, float] = {
        "slope_dt": slope_coarse,
        "slope_half_dt": slope_fine,
        "early_window_slope": early,
        "late_window_slope": late,
        "window_mismatch": abs(early - late),
        "points": float(problem.x.size),
    }
    if abs(early - late) > PdeConfig.SLOPE_TOLERANCE:
        raise PdeConvergenceError(
            f"log-norm slope has not settled for h = {h:g} on the {domain}",
            diagnostics=diagnostics,
        )

    profile = fine.final / np.max(np.abs(fine.final))
    if profile[np.argmax(np.abs(profile))] < 0:
        profile = -profile

    logger.info("Decay rate on the %s for h = %g: %.10g", domain, h, decay)
    return PdeRun(
        h=float(h),
        domain=domain,
        length=float(problem.length),
        x=problem.x,
        dt=float(problem.dt),
        t_final=float(t_final),
        decay_rate=float(decay),
        profile=profile,
        diagnostics=diagnostics,
    )


def feynman_kac_decay(
    h: float, domain: Domain = "interval", resolution: float = 1.0
) -> float:
    """Exponential decay rate of the solution norm."""
    return run_feynman_kac(h, domain, resolution).decay_rate


def leading_profile(
    h: float, domain: Domain = "interval", resolution: float = 1.0
) -> Tuple[np.ndarray, np.ndarray]:
    """(x, profile) of the long-time solution, nonnegative with unit sup norm."""
    run = run_feynman_kac(h, domain, resolution)
    return run.x, run.profile


def expected_gap(h: float, domain: Domain = "interval") -> float:
    """First minus second eigenvalue of u_xx / 2 - h x u."""
    if domain == "halfline":
        return (airy_zero(1) - airy_zero(2)) * h ** (2.0 / 3.0) / CBRT2
    if h == 0:
        return PSI_ZERO - 4.0 * PSI_ZERO
    return scaled_eigenvalue(h, 1) - scaled_eigenvalue(h, 2)


def spectral_gap(
    h: float, domain: Domain = "interval", resolution: float = 1.0
) -> float:
    """
    Rate at which the normalised solution approaches its long-time profile.

    Starts from an initial condition without reflection symmetry so the
    second mode is present, and fits log ||u_t / ||u_t|| - profile|| against t
    while that distance is between 1e-9 and 1e-2.

    Raises:
        PdeConvergenceError: If too few snapshots fall in the fitting band
    """
    problem = _problem(h, domain, resolution, None, initial="asymmetric")
    evolution = _evolve(problem, h, problem.dt, snapshot_count=400)
    dx = problem.x[1] - problem.x[0]
    target = evolution.final[1:-1]
    distance = np.sqrt(dx * np.sum((evolution.snapshots - target) ** 2, axis=1))
    band = (distance > 1e-9) & (distance < 1e-2)
    if np.count_nonzero(band) < 3:
        raise PdeConvergenceError(
            "not enough snapshots to fit the spectral gap",
            diagnostics={"in_band": float(np.count_nonzero(band))},
        )
    slope = np.polyfit(evolution.snapshot_times[band], np.log(distance[band]), 1)[0]
    logger.debug("Spectral gap estimate on the %s for h = %g: %.6g", domain, h, -slope)
    return float(-slope)


def write_pde_run(
    run: PdeRun, out_dir: Path, hash_value: Optional[str] = None
) -> Tuple[Path, Path]:
    """Write the profile as CSV and the scalar summary as JSON."""
    out_dir = Path(out_dir)
    stem = f"pde_{run.domain}_h{run.h:g}"
    table = write_csv(
        out_dir / f"{stem}_profile.csv", {"x": run.x, "u": run.profile}, hash_value
    )
    summary = write_json(
        out_dir / f"{stem}.json",
        {
            "h": run.h,
            "domain": run.domain,
            "length": run.length,
            "points": int(run.x.size),
            "dt": run.dt,
            "t_final": run.t_final,
            "decay_rate": run.decay_rate,
            "diagnostics": run.diagnostics,
        },
        hash_value,
    )
    return table, summary
