"""
Monte Carlo engine.

Three samplers share one seeding scheme: every trial draws from its own
Philox stream keyed by (seed, trial), so results do not depend on how trials
are scheduled across workers.

- brw_run simulates the branching random walk generation by generation, either
  the full tree under a population cap or with individuals killed below a
  barrier.
- sample_spine draws the tilted random walk of the many-to-one identity with
  its exact log weight.
- rw_weighted_expectation estimates exponentially weighted expectations of a
  random walk kept in a moving band by sequential Monte Carlo.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Iterator, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from brwtie_lab.config import SimulationConfig, worker_count
from brwtie_lab.environment import EnvironmentModel
from brwtie_lab.errors import (
    PopulationCapError,
    PreconditionError,
    WeightOverflowError,
    ZeroSurvivorError,
)
from brwtie_lab.fields import IndicatorSet, ScalarField
from brwtie_lab.functional import BarrierSpec
from brwtie_lab.models import (
    BrwResult,
    CountEstimate,
    RwEstimate,
    SpineSample,
    TrialRecord,
)
from brwtie_lab.reporting import write_csv, write_json

logger = logging.getLogger(__name__)

PathFunctional = Callable[[np.ndarray], np.ndarray]


def make_generator(seed: int, trial: int = 0) -> np.random.Generator:
    """Counter-based generator for one trial."""
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(trial) << 64)))


def _times(n: int) -> np.ndarray:
    """t_k = k / n for k = 0..n."""
    return np.arange(n + 1, dtype=float) / n


def path_positions(speed: ScalarField, n: int) -> np.ndarray:
    """Discrete path: 0 followed by the partial sums of speed(k / n), k = 1..n."""
    steps = np.asarray(speed(_times(n)[1:]), dtype=float)
    return np.concatenate(([0.0], np.cumsum(steps)))


class _Band:
    """Lower and upper bounds at k = 0..n around a discrete path."""

    def __init__(
        self,
        n: int,
        centre: np.ndarray,
        f: Optional[ScalarField] = None,
        F: Optional[IndicatorSet] = None,
        g: Optional[ScalarField] = None,
        G: Optional[IndicatorSet] = None,
    ):
        t = _times(n)
        scale = n ** (1.0 / 3.0)
        self.lower = np.full(n + 1, -np.inf)
        self.upper = np.full(n + 1, np.inf)
        if f is not None and F is not None:
            active = F.discretize(n)
            self.lower[active] = centre[active] + np.asarray(f(t))[active] * scale
        if g is not None and G is not None:
            active = G.discretize(n)
            self.upper[active] = centre[active] + np.asarray(g(t))[active] * scale

    def inside(self, k: int, positions: np.ndarray) -> np.ndarray:
        return (positions >= self.lower[k]) & (positions <= self.upper[k])


# Branching random walk


class PopulationControl(BaseModel):
    """Full tree under a cap, or killing below path + barrier n^(1/3) on F."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mode: Literal["full_tree", "killing"] = "killing"
    max_pop: int = Field(default=SimulationConfig.MAX_POPULATION, ge=1)
    barrier: Optional[ScalarField] = None
    F: IndicatorSet = Field(default_factory=IndicatorSet.full)

    @model_validator(mode="after")
    def _barrier_below_start(self) -> "PopulationControl":
        if self.mode == "killing":
            if self.barrier is None:
                raise ValueError("killing needs a barrier")
            if not self.barrier(0.0) < 0.0:
                raise ValueError("the killing barrier must start strictly below 0")
        return self


class BrwConfig(BaseModel):
    """Environment, length, population control, trial count and seed."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    env: EnvironmentModel
    n: int = Field(ge=1)
    population_control: PopulationControl
    trials: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=1 << 64)


def _run_trial(
    config: BrwConfig,
    trial: int,
    path: np.ndarray,
    killing: Optional[_Band],
    followers: Optional[_Band],
) -> TrialRecord:
    env, n = config.env, config.n
    control = config.population_control
    rng = make_generator(config.seed, trial)

    positions = np.zeros(1)
    delay = np.zeros(1)
    following = np.ones(1, dtype=bool)
    population = [1]

    for k in range(1, n + 1):
        t = k / n
        children = env.offspring_count(t) * positions.size
        if children > control.max_pop:
            raise PopulationCapError(
                f"generation {k} would hold {children} individuals "
                f"(cap {control.max_pop})"
            )
        steps = env.sample_displacements(t, positions.size, rng)
        width = steps.shape[1]
        positions = (positions[:, None] + steps).ravel()
        delay = np.maximum(np.repeat(delay, width), path[k] - positions)
        following = np.repeat(following, width)

        if killing is not None:
            keep = positions >= killing.lower[k]
            positions, delay, following = positions[keep], delay[keep], following[keep]
        if followers is not None:
            following &= followers.inside(k, positions)

        population.append(int(positions.size))
        if positions.size == 0:
            break

    survived = positions.size > 0
    return TrialRecord(
        trial=trial,
        max_displacement=float(positions.max()) if survived else float("nan"),
        consistent_displacement=float(delay.min()) if survived else float("nan"),
        survived=survived,
        aborted=False,
        population=population,
        followers=int(np.count_nonzero(following)) if followers is not None else None,
    )


def _guarded_trial(config: BrwConfig, trial: int, *bands) -> TrialRecord:
    try:
        return _run_trial(config, trial, *bands)
    except PopulationCapError as exc:
        logger.warning("Trial %d aborted: %s", trial, exc)
        return TrialRecord(
            trial=trial,
            max_displacement=float("nan"),
            consistent_displacement=float("nan"),
            survived=False,
            aborted=True,
            population=[],
        )


def brw_run(
    config: BrwConfig,
    path: ScalarField,
    barriers: Optional[BarrierSpec] = None,
    workers: Optional[int] = None,
) -> Iterator[TrialRecord]:
    """
    Simulate config.trials independent branching random walks.

    Args:
        config: Environment, length, population control, trials and seed
        path: Speed profile whose partial sums give the reference path; the
            consistent maximal displacement is measured against it and the
            killing barrier hangs below it
        barriers: When given, each record counts the individuals of the last
            generation that stayed in the band [f, g] n^(1/3) around the path
            at the times of F and G
        workers: Thread-pool size (BRWTIE_WORKERS by default)

    Yields:
        TrialRecord per trial, in trial order. A trial that would exceed the
        population cap is aborted and flagged.
    """
    n = config.n
    centre = path_positions(path, n)
    control = config.population_control
    killing = (
        _Band(n, centre, f=control.barrier, F=control.F)
        if control.mode == "killing"
        else None
    )
    followers = (
        _Band(n, centre, barriers.f, barriers.F, barriers.g, barriers.G)
        if barriers is not None
        else None
    )
    workers = workers or worker_count()
    logger.info(
        "Simulating %d trials of length %d (%s, %d workers)",
        config.trials,
        n,
        control.mode,
        workers,
    )

    def one(trial: int) -> TrialRecord:
        return _guarded_trial(config, trial, centre, killing, followers)

    if workers == 1:
        for trial in range(config.trials):
            yield one(trial)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(one, range(config.trials))


def collect(config: BrwConfig, records: Iterable[TrialRecord]) -> BrwResult:
    """Merge a record stream by trial index."""
    ordered = sorted(records, key=lambda record: record.trial)
    result = BrwResult(n=config.n, seed=config.seed, records=ordered)
    aborted = len(ordered) - len(result.completed)
    if aborted:
        logger.warning(
            "%d of %d trials aborted at the population cap", aborted, len(ordered)
        )
    return result


# Spine


def _log_weight_increment(
    env: EnvironmentModel, t: float, phi: float, steps: np.ndarray
) -> np.ndarray:
    return float(env.kappa(t, phi)) - phi * steps


def sample_spine(
    env: EnvironmentModel,
    phi: ScalarField,
    n: int,
    size: int,
    rng: np.random.Generator,
    generations: Optional[int] = None,
    barriers: Optional[BarrierSpec] = None,
) -> SpineSample:
    """
    Draw the spine of the many-to-one identity.

    Step k has density k_t p_t(x) exp(phi_t x - kappa_t(phi_t)) at t = k / n,
    and E[sum over |u| = k of F(V(u_1), ..., V(u_k))] equals
    E[exp(sum_j kappa_j(phi_j) - phi_j X_j) F(S_1, ..., S_k)].

    Args:
        env: Environment
        phi: Tilt parameter as a function of time
        n: Time scale; step k uses the law at k / n
        size: Number of independent spines
        rng: Random generator
        generations: Number of steps (n by default)
        barriers: When given, flag the spines that stay in the band around
            the path of tilted means

    Returns:
        SpineSample with positions of shape (size, generations + 1)

    Raises:
        WeightOverflowError: If a log weight is not finite
    """
    generations = n if generations is None else generations
    positions = np.zeros((size, generations + 1))
    log_weights = np.zeros(size)
    means = np.zeros(generations + 1)

    for k in range(1, generations + 1):
        t = k / n
        tilt = float(phi(t))
        steps = env.tilted_step_sampler(t, tilt)(rng, size)
        positions[:, k] = positions[:, k - 1] + steps
        log_weights += _log_weight_increment(env, t, tilt, steps)
        means[k] = means[k - 1] + float(env.d_kappa(t, tilt))

    if not np.all(np.isfinite(log_weights)):
        raise WeightOverflowError("non-finite many-to-one log weight")

    inside = None
    if barriers is not None:
        band = _Band(n, means, barriers.f, barriers.F, barriers.g, barriers.G)
        inside = np.ones(size, dtype=bool)
        for k in range(1, generations + 1):
            inside &= band.inside(k, positions[:, k])

    return SpineSample(
        positions=positions, log_weights=log_weights, path=means, inside=inside
    )


def _weighted_mean(log_weights: np.ndarray, values: np.ndarray) -> Tuple[float, float]:
    terms = np.exp(log_weights) * values
    return float(terms.mean()), float(terms.std(ddof=1) / np.sqrt(terms.size))


def spine_moment(
    env: EnvironmentModel,
    phi: ScalarField,
    k: int,
    functional: PathFunctional,
    trials: int,
    seed: int,
    n: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Many-to-one estimate of E[sum over |u| = k of functional(path of u)].

    functional maps an array of paths (rows, k + 1) to one value per row.

    Returns:
        (estimate, standard error)
    """
    spine = sample_spine(env, phi, n or k, trials, make_generator(seed), generations=k)
    values = np.asarray(functional(spine.positions), dtype=float)
    return _weighted_mean(spine.log_weights, values)


def full_tree_moment(
    env: EnvironmentModel,
    k: int,
    functional: PathFunctional,
    trials: int,
    seed: int,
    n: Optional[int] = None,
) -> Tuple[float, float]:
    """
    Direct estimate of E[sum over |u| = k of functional(path of u)] from
    complete trees.

    Returns:
        (estimate, standard error)
    """
    n = n or k
    totals = np.empty(trials)
    for trial in range(trials):
        rng = make_generator(seed, trial)
        paths = np.zeros((1, 1))
        for j in range(1, k + 1):
            steps = env.sample_displacements(j / n, paths.shape[0], rng)
            width = steps.shape[1]
            paths = np.repeat(paths, width, axis=0)
            paths = np.column_stack((paths, paths[:, -1] + steps.ravel()))
        totals[trial] = float(np.sum(functional(paths)))
    return float(totals.mean()), float(totals.std(ddof=1) / np.sqrt(trials))


def tilted_step_moments(
    env: EnvironmentModel, t: float, phi: float, size: int, seed: int
) -> Tuple[float, float, float, float]:
    """
    Empirical and exact mean and variance of the spine step at time t.

    Returns:
        (sample mean, sample variance, kappa'_t(phi), kappa''_t(phi))
    """
    steps = env.tilted_step_sampler(t, phi)(make_generator(seed), size)
    return (
        float(steps.mean()),
        float(steps.var(ddof=1)),
        float(env.d_kappa(t, phi)),
        float(env.d2_kappa(t, phi)),
    )


def _log_moments(log_terms: np.ndarray) -> Tuple[float, float]:
    """log of the mean and relative standard error of exp(log_terms)."""
    if not np.any(np.isfinite(log_terms)):
        return -np.inf, np.inf
    size = log_terms.size
    top = float(np.max(log_terms))
    scaled = np.exp(log_terms - top)
    mean = scaled.mean()
    rel_se = float(scaled.std(ddof=1) / (mean * np.sqrt(size)))
    return top + float(np.log(mean)), rel_se


def spine_estimate_counts(
    env: EnvironmentModel,
    path: ScalarField,
    barriers: BarrierSpec,
    n: int,
    trials: int,
    x: float = 1.0,
    seed: int = 0,
) -> CountEstimate:
    """
    Importance-sampling estimates of the first moments of the band counts.

    A_n counts the individuals of generation n that stay above path + f n^(1/3)
    at the times of F and below path + g n^(1/3) at the times of G. B_n also
    requires the final position to exceed path_n + (g_1 - x) n^(1/3). The
    spine is tilted by barriers.h.

    Args:
        env: Environment
        path: Speed profile b of the reference path
        barriers: f, g, F, G and the tilt h
        n: Number of generations
        trials: Number of spines
        x: Window below g_1 for B_n
        seed: Seed

    Returns:
        CountEstimate with log-means and relative standard errors
    """
    times = _times(n)
    tilt = np.asarray(barriers.h(times), dtype=float)
    if np.any(tilt < 0.0) or np.any(tilt >= np.asarray(env.theta_max(times))):
        raise PreconditionError("the tilt leaves the domain of kappa")

    spine = sample_spine(env, barriers.h, n, trials, make_generator(seed))
    centre = path_positions(path, n)
    band = _Band(n, centre, barriers.f, barriers.F, barriers.g, barriers.G)
    inside = np.ones(trials, dtype=bool)
    for k in range(1, n + 1):
        inside &= band.inside(k, spine.positions[:, k])
    scale = n ** (1.0 / 3.0)
    high = spine.positions[:, -1] >= centre[-1] + (float(barriers.g(1.0)) - x) * scale

    log_a, rel_a = _log_moments(np.where(inside, spine.log_weights, -np.inf))
    log_b, rel_b = _log_moments(np.where(inside & high, spine.log_weights, -np.inf))
    if not np.isfinite(log_b):
        logger.warning("No spine of %d ended in the window for n = %d", trials, n)
    logger.info("log E[A_%d] = %.6g, log E[B_%d] = %.6g", n, log_a, n, log_b)
    return CountEstimate(
        n=n,
        trials=trials,
        x=float(x),
        log_mean_a=log_a,
        rel_se_a=rel_a,
        log_mean_b=log_b,
        rel_se_b=rel_b,
    )


# Weighted random walk in a band


def _systematic_resample(log_w: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    size = log_w.size
    weights = np.exp(log_w - np.max(log_w))
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    ticks = (rng.random() + np.arange(size)) / size
    return np.minimum(np.searchsorted(cdf, ticks), size - 1)


def rw_weighted_expectation(
    sigma: ScalarField,
    spec: BarrierSpec,
    n: int,
    trials: int,
    seed: int = 0,
    batches: int = SimulationConfig.SMC_BATCHES,
) -> RwEstimate:
    """
    n^(-1/3) log E[exp(sum_j (h_{(j+1)/n} - h_{j/n}) S_j); S_j in I_j, j <= n].

    S has centred Gaussian steps of variance sigma_{j/n}^2 and I_j is
    [f n^(1/3), g n^(1/3)] with the lower end active on F and the upper on G.
    The trials are split into independent batches of particles. Each batch
    runs sequential Monte Carlo: particles leaving the band are killed, the
    weights accumulate in log space, and the batch is resampled whenever its
    effective sample size falls below ESS_THRESHOLD times its size.

    Returns:
        RwEstimate with the normalised log of the batch-averaged estimate and
        the standard error of the normalised batch log-estimates

    Raises:
        PreconditionError: If h decreases outside F or increases outside G
        ZeroSurvivorError: If every batch loses all its particles
    """
    spec.check_weight_sets()
    spec.check_barriers()
    particles = max(2, trials // batches)
    times = _times(n)
    steps_sd = np.asarray(sigma(times), dtype=float)
    h_values = np.asarray(spec.h(np.append(times, 1.0 + 1.0 / n).clip(0.0, 1.0)))
    slopes = np.diff(h_values)
    band = _Band(n, np.zeros(n + 1), spec.f, spec.F, spec.g, spec.G)
    rng = make_generator(seed)

    positions = np.zeros((batches, particles))
    log_w = np.zeros((batches, particles))
    log_z = np.zeros(batches)
    alive = np.ones(batches, dtype=bool)
    threshold = SimulationConfig.ESS_THRESHOLD * particles

    for j in range(1, n + 1):
        positions += steps_sd[j] * rng.standard_normal((batches, particles))
        inside = (positions >= band.lower[j]) & (positions <= band.upper[j])
        log_w = np.where(inside, log_w + slopes[j] * positions, -np.inf)

        for b in np.flatnonzero(alive):
            row = log_w[b]
            top = np.max(row)
            if not np.isfinite(top):
                alive[b] = False
                log_z[b] = -np.inf
                logger.warning("Batch %d lost all particles at step %d of %d", b, j, n)
                continue
            weights = np.exp(row - top)
            ess = weights.sum() ** 2 / np.sum(weights**2)
            if ess < threshold:
                log_z[b] += float(logsumexp(row)) - np.log(particles)
                picks = _systematic_resample(row, rng)
                positions[b] = positions[b, picks]
                log_w[b] = 0.0

    for b in np.flatnonzero(alive):
        log_z[b] += float(logsumexp(log_w[b])) - np.log(particles)

    if not np.any(alive):
        raise ZeroSurvivorError(f"every batch died out for n = {n}")

    scale = n ** (1.0 / 3.0)
    estimate = (float(logsumexp(log_z)) - np.log(batches)) / scale
    normalised = log_z[alive] / scale
    std_error = (
        float(normalised.std(ddof=1) / np.sqrt(normalised.size))
        if normalised.size > 1
        else float("inf")
    )
    logger.info(
        "Weighted walk in a band, n = %d: %.6g +/- %.2g", n, estimate, std_error
    )
    return RwEstimate(
        n=n,
        estimate=estimate,
        std_error=std_error,
        batches=batches,
        particles=particles,
        batch_log_estimates=[float(v) for v in log_z],
    )


# Output


def write_trials(
    result: BrwResult, out_dir: Path, hash_value: Optional[str] = None
) -> Tuple[Path, Path]:
    """Per-trial CSV and aggregate JSON."""
    out_dir = Path(out_dir)
    records = result.records
    columns = {
        "trial": np.array([r.trial for r in records], dtype=float),
        "max_displacement": np.array([r.max_displacement for r in records]),
        "consistent_displacement": np.array(
            [r.consistent_displacement for r in records]
        ),
        "survived": np.array([r.survived for r in records], dtype=float),
        "aborted": np.array([r.aborted for r in records], dtype=float),
        "followers": np.array(
            [np.nan if r.followers is None else r.followers for r in records],
            dtype=float,
        ),
    }
    table = write_csv(out_dir / "brw_trials.csv", columns, hash_value)

    maxima = result.max_displacements()
    delays = result.consistent_displacements()

    def summary(values: np.ndarray) -> dict:
        if values.size < 2:
            return {"mean": float(values.mean()) if values.size else None}
        return {
            "mean": float(values.mean()),
            "std_error": float(values.std(ddof=1) / np.sqrt(values.size)),
        }

    aggregate = write_json(
        out_dir / "brw_summary.json",
        {
            "n": result.n,
            "seed": result.seed,
            "trials": len(records),
            "completed": len(result.completed),
            "survival_rate": result.survival_rate(),
            "max_displacement": summary(maxima),
            "max_displacement_over_n": summary(maxima / result.n),
            "consistent_displacement": summary(delays),
        },
        hash_value,
    )
    return table, aggregate


def write_estimate(
    estimate: RwEstimate | CountEstimate,
    out_dir: Path,
    name: str,
    hash_value: Optional[str] = None,
) -> Path:
    return write_json(Path(out_dir) / f"{name}.json", estimate, hash_value)
