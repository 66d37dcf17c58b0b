"""
Time-inhomogeneous reproduction laws through their log-Laplace transforms.

An environment gives, for each macroscopic time t in [0, 1], the log-Laplace
transform kappa_t(theta) = log E[sum over children of exp(theta * position)],
its theta-derivatives, its Legendre conjugate kappa*_t(a) (supremum over
theta >= 0), and the means to sample children and spine steps.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar, newton

from brwtie_lab.brackets import BracketConfig, expand_bracket
from brwtie_lab.config import EnvironmentConfig
from brwtie_lab.errors import (
    BracketError,
    DomainViolationError,
    InfeasibleEnvironmentError,
    RootNotFoundError,
    SamplingUnsupportedError,
)
from brwtie_lab.fields import ScalarField

logger = logging.getLogger(__name__)

ArrayLike = float | np.ndarray
StepSampler = Callable[[np.random.Generator, int], np.ndarray]
DrawFn = Callable[[float, int, np.random.Generator], np.ndarray]


def _out(values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(values) == 0 else values


class EnvironmentModel(ABC):
    """
    Base class for environments.

    Subclasses supply kappa and its first two theta-derivatives on the domain
    0 <= theta < theta_max(t). Everything else (conjugates, natural speed,
    generic tilted sampling) is derived here.
    """

    name = "environment"

    def __init__(self, offspring: Optional[int] = None, validate: bool = True):
        self.offspring = offspring
        if validate:
            self.validate()

    # Subclass interface

    @abstractmethod
    def _kappa(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _d_kappa(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _d2_kappa(self, t: np.ndarray, theta: np.ndarray) -> np.ndarray: ...

    def theta_max(self, t: ArrayLike) -> ArrayLike:
        """Right end of the domain in theta (exclusive)."""
        return _out(np.full(np.shape(t), np.inf))

    def displacement_density(self, t: float, x: np.ndarray) -> np.ndarray:
        """Density of one child's displacement at time t."""
        raise SamplingUnsupportedError(f"{self.name} has no displacement density")

    def support_lower(self, t: float) -> float:
        return -np.inf

    def _draw_displacements(
        self, t: float, parents: int, rng: np.random.Generator
    ) -> np.ndarray:
        raise SamplingUnsupportedError(f"{self.name} cannot sample children")

    # Validation

    def validate(self) -> None:
        """
        Check supercriticality on a fine time grid and convexity on a coarse one.

        Raises:
            InfeasibleEnvironmentError: If kappa_t(0) <= 0 somewhere or kappa_t
                is not convex in theta
        """
        times = np.linspace(0.0, 1.0, EnvironmentConfig.SUPERCRITICAL_GRID)
        at_zero = self._kappa(times, np.zeros_like(times))
        if np.any(~np.isfinite(at_zero)) or np.any(at_zero <= 0.0):
            worst = int(np.argmin(at_zero))
            raise InfeasibleEnvironmentError(
                f"{self.name} is not supercritical: kappa_{times[worst]:.4g}(0) = "
                f"{at_zero[worst]:.6g}"
            )

        for t in np.linspace(0.0, 1.0, 16):
            upper = min(4.0, 0.9 * float(self.theta_max(t)))
            thetas = np.linspace(0.0, upper, EnvironmentConfig.CONVEXITY_GRID)
            curvature = self._d2_kappa(np.full_like(thetas, t), thetas)
            if np.any(curvature < -EnvironmentConfig.CONVEXITY_TOLERANCE):
                raise InfeasibleEnvironmentError(
                    f"{self.name}: kappa_{t:.4g} is not convex on [0, {upper:.4g}]"
                )

    def _check_domain(self, t: np.ndarray, theta: np.ndarray) -> None:
        limit = np.asarray(self.theta_max(t), dtype=float)
        bad = (theta < -1e-14) | (theta >= limit)
        if np.any(bad):
            first = np.flatnonzero(np.atleast_1d(bad))[0]
            t_bad = float(np.atleast_1d(t)[first])
            theta_bad = float(np.atleast_1d(theta)[first])
            raise DomainViolationError(
                f"theta = {theta_bad:.6g} outside the domain of kappa_{t_bad:.6g}",
                t=t_bad,
                value=theta_bad,
            )

    def _prepare(self, t: ArrayLike, theta: ArrayLike) -> Tuple[np.ndarray, ...]:
        t_arr, theta_arr = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(theta, dtype=float)
        )
        self._check_domain(t_arr, theta_arr)
        return t_arr, theta_arr

    # Log-Laplace transform

    def kappa(self, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
        return _out(self._kappa(*self._prepare(t, theta)))

    def d_kappa(self, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
        return _out(self._d_kappa(*self._prepare(t, theta)))

    def d2_kappa(self, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
        return _out(self._d2_kappa(*self._prepare(t, theta)))

    def growth(self, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
        """e_t(theta) = theta kappa'_t(theta) - kappa_t(theta)."""
        t_arr, theta_arr = self._prepare(t, theta)
        return _out(
            theta_arr * self._d_kappa(t_arr, theta_arr) - self._kappa(t_arr, theta_arr)
        )

    # Legendre conjugate

    def _legendre_point(self, t: float, a: float) -> Tuple[float, float]:
        """
        (kappa*_t(a), maximizing theta) for one (t, a).

        Newton on kappa'_t(theta) = a from a bracketed start, with a bounded
        scalar minimization as fallback.
        """
        t_vec = np.array([t])
        slope_at_zero = float(self._d_kappa(t_vec, np.zeros(1))[0])
        if a <= slope_at_zero:
            return -float(self._kappa(t_vec, np.zeros(1))[0]), 0.0

        limit = float(self.theta_max(t))
        ceiling = limit * (1.0 - 1e-12) if np.isfinite(limit) else np.inf

        def slope_gap(theta: float) -> float:
            return float(self._d_kappa(t_vec, np.array([theta]))[0]) - a

        start = min(EnvironmentConfig.THETA_SEARCH_START, 0.5 * ceiling)
        try:
            lo, hi, _, _ = expand_bracket(
                slope_gap, 0.0, start, BracketConfig(), "up", upper_limit=ceiling
            )
        except BracketError as exc:
            raise DomainViolationError(
                f"kappa*_{t:.6g}({a:.6g}) is infinite: slope never reaches {a:.6g}",
                t=t,
                value=a,
            ) from exc

        try:
            theta = float(
                newton(
                    slope_gap,
                    0.5 * (lo + hi),
                    fprime=lambda th: float(self._d2_kappa(t_vec, np.array([th]))[0]),
                    tol=EnvironmentConfig.LEGENDRE_XTOL,
                    maxiter=50,
                )
            )
            if not lo <= theta <= hi:
                raise RuntimeError("Newton left the bracket")
        except (RuntimeError, ZeroDivisionError):
            logger.debug("Newton failed for kappa*_%g(%g); bounded fallback", t, a)
            result = minimize_scalar(
                lambda th: float(self._kappa(t_vec, np.array([th]))[0]) - th * a,
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": EnvironmentConfig.LEGENDRE_XTOL},
            )
            theta = float(result.x)

        value = theta * a - float(self._kappa(t_vec, np.array([theta]))[0])
        return value, theta

    def _conjugate(self, t: ArrayLike, a: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        t_arr, a_arr = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(a, dtype=float)
        )
        values = np.empty(t_arr.shape)
        thetas = np.empty(t_arr.shape)
        for idx in np.ndindex(t_arr.shape):
            values[idx], thetas[idx] = self._legendre_point(
                float(t_arr[idx]), float(a_arr[idx])
            )
        return values, thetas

    def kappa_star(self, t: ArrayLike, a: ArrayLike) -> ArrayLike:
        """kappa*_t(a) = sup over theta >= 0 of theta a - kappa_t(theta)."""
        return _out(self._conjugate(t, a)[0])

    def d_kappa_star(self, t: ArrayLike, a: ArrayLike) -> ArrayLike:
        """The maximizing theta, which is the a-derivative of kappa*_t."""
        return _out(self._conjugate(t, a)[1])

    # Natural speed

    def _natural_point(self, t: float) -> Tuple[float, float]:
        t_vec = np.array([t])
        limit = float(self.theta_max(t))
        ceiling = limit * (1.0 - 1e-12) if np.isfinite(limit) else np.inf

        def growth(theta: float) -> float:
            th = np.array([theta])
            return float(
                theta * self._d_kappa(t_vec, th)[0] - self._kappa(t_vec, th)[0]
            )

        start = min(EnvironmentConfig.THETA_SEARCH_START, 0.5 * ceiling)
        try:
            lo, hi, _, _ = expand_bracket(
                growth, 0.0, start, BracketConfig(), "up", upper_limit=ceiling
            )
        except BracketError as exc:
            raise RootNotFoundError(
                f"kappa*_{t:.6g} has no zero inside the domain of {self.name}"
            ) from exc
        theta_bar = brentq(growth, lo, hi, xtol=EnvironmentConfig.LEGENDRE_XTOL)
        speed = float(self._d_kappa(t_vec, np.array([theta_bar]))[0])
        return speed, float(theta_bar)

    def natural_speed(self, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
        """
        (v_t, theta-bar_t): the zero of kappa*_t and its conjugate parameter.

        Raises:
            RootNotFoundError: If the domain ends before the zero crossing
        """
        t_arr = np.asarray(t, dtype=float)
        speeds = np.empty(t_arr.shape)
        thetas = np.empty(t_arr.shape)
        for idx in np.ndindex(t_arr.shape):
            speeds[idx], thetas[idx] = self._natural_point(float(t_arr[idx]))
        return _out(speeds), _out(thetas)

    def breakpoints(self) -> Tuple[float, ...]:
        return ()

    def _time_derivative(
        self, func: Callable[[np.ndarray, np.ndarray], np.ndarray], t, theta
    ) -> np.ndarray:
        step = EnvironmentConfig.TIME_STEP
        t = np.asarray(t, dtype=float)
        up = np.minimum(t + step, 1.0)
        down = np.maximum(t - step, 0.0)
        return (func(up, theta) - func(down, theta)) / (up - down)

    def natural_speed_fields(self) -> Tuple[ScalarField, ScalarField]:
        """
        v and theta-bar as ScalarFields with derivatives.

        theta-bar' comes from implicit differentiation of e_t(theta-bar_t) = 0:
        theta-bar' = -(d/dt e_t)(theta-bar) / (theta-bar kappa''), with the
        t-derivative taken by central differences.
        """

        def theta_bar(t):
            return np.asarray(self.natural_speed(t)[1], dtype=float)

        def speed(t):
            return np.asarray(self.natural_speed(t)[0], dtype=float)

        def growth_raw(t, theta):
            return theta * self._d_kappa(t, theta) - self._kappa(t, theta)

        def theta_bar_dot(t):
            t = np.asarray(t, dtype=float)
            th = theta_bar(t)
            dt_growth = self._time_derivative(growth_raw, t, th)
            return -dt_growth / (th * self._d2_kappa(t, th))

        def speed_dot(t):
            t = np.asarray(t, dtype=float)
            th = theta_bar(t)
            dt_slope = self._time_derivative(self._d_kappa, t, th)
            return dt_slope + self._d2_kappa(t, th) * theta_bar_dot(t)

        cuts = self.breakpoints()
        return (
            ScalarField.from_callable(speed, speed_dot, cuts, name="v"),
            ScalarField.from_callable(theta_bar, theta_bar_dot, cuts, name="theta_bar"),
        )

    def is_homogeneous(self, tol: float = 1e-12) -> bool:
        """True when kappa_t does not depend on t (checked on a grid)."""
        times = np.linspace(0.0, 1.0, 33)
        for theta in (0.0, 0.5, 1.0):
            limit = np.min(np.asarray(self.theta_max(times)))
            theta = min(theta, 0.5 * limit)
            values = self._kappa(times, np.full_like(times, theta))
            if np.ptp(values) > tol:
                return False
        return True

    # Sampling

    def offspring_count(self, t: float) -> int:
        if self.offspring is None:
            raise SamplingUnsupportedError(f"{self.name} has no offspring count")
        return self.offspring

    def sample_displacements(
        self, t: float, parents: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Children displacements, shape (parents, offspring_count(t))."""
        self.offspring_count(t)
        return self._draw_displacements(t, parents, rng)

    def tilted_step_sampler(self, t: float, phi: float) -> StepSampler:
        """
        Sampler for the spine step law at time t under tilt phi.

        The law has density k p_t(x) exp(phi x - kappa_t(phi)) where p_t is the
        displacement density; it is inverted numerically on a grid spanning the
        tilted mean plus or minus TILT_SPAN standard deviations.
        """
        k = self.offspring_count(t)
        mean = float(self.d_kappa(t, phi))
        spread = float(np.sqrt(self.d2_kappa(t, phi)))
        lo = max(self.support_lower(t), mean - EnvironmentConfig.TILT_SPAN * spread)
        hi = mean + EnvironmentConfig.TILT_SPAN * spread
        x = np.linspace(lo, hi, EnvironmentConfig.TILT_GRID_POINTS)
        log_density = (
            np.log(k * self.displacement_density(t, x))
            + phi * x
            - float(self.kappa(t, phi))
        )
        cdf = cumulative_trapezoid(np.exp(log_density), x, initial=0.0)
        cdf /= cdf[-1]

        def sample(rng: np.random.Generator, size: int) -> np.ndarray:
            return np.interp(rng.random(size), cdf, x)

        return sample


class GaussianBinary(EnvironmentModel):
    """
    k children (two by default) with i.i.d. N(0, sigma_t^2) displacements.

    kappa_t(theta) = log k + theta^2 sigma_t^2 / 2.
    """

    name = "gaussian_binary"

    def __init__(self, sigma: ScalarField, offspring: int = 2, validate: bool = True):
        self.sigma = sigma
        self.log_k = float(np.log(offspring))
        grid = np.linspace(0.0, 1.0, EnvironmentConfig.SUPERCRITICAL_GRID)
        if np.any(np.asarray(sigma(grid)) <= 0.0):
            raise InfeasibleEnvironmentError("sigma must be positive on [0, 1]")
        super().__init__(offspring=offspring, validate=validate)

    def _kappa(self, t, theta):
        return self.log_k + 0.5 * theta**2 * self.sigma(t) ** 2

    def _d_kappa(self, t, theta):
        return theta * self.sigma(t) ** 2

    def _d2_kappa(self, t, theta):
        return np.broadcast_to(self.sigma(t) ** 2, np.shape(theta)).astype(float)

    def _conjugate(self, t, a):
        t_arr, a_arr = np.broadcast_arrays(
            np.asarray(t, dtype=float), np.asarray(a, dtype=float)
        )
        var = self.sigma(t_arr) ** 2
        positive = a_arr > 0.0
        values = np.where(positive, a_arr**2 / (2.0 * var), 0.0) - self.log_k
        thetas = np.where(positive, a_arr / var, 0.0)
        return values, thetas

    def natural_speed(self, t):
        sigma = np.asarray(self.sigma(t), dtype=float)
        root = np.sqrt(2.0 * self.log_k)
        return _out(sigma * root), _out(root / sigma)

    def breakpoints(self):
        return self.sigma.all_breakpoints()

    def natural_speed_fields(self):
        if not self.sigma.has_derivative:
            return super().natural_speed_fields()
        root = np.sqrt(2.0 * self.log_k)
        sigma, d_sigma = self.sigma, self.sigma.derivative
        cuts = self.breakpoints()
        speed = ScalarField.from_callable(
            lambda t: root * sigma(t), lambda t: root * d_sigma(t), cuts, name="v"
        )
        theta_bar = ScalarField.from_callable(
            lambda t: root / sigma(t),
            lambda t: -root * d_sigma(t) / sigma(t) ** 2,
            cuts,
            name="theta_bar",
        )
        return speed, theta_bar

    def is_homogeneous(self, tol=1e-12):
        return bool(np.ptp(self.sigma(np.linspace(0.0, 1.0, 33))) <= tol)

    def displacement_density(self, t, x):
        sigma = float(self.sigma(t))
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))

    def _draw_displacements(self, t, parents, rng):
        return rng.normal(0.0, float(self.sigma(t)), size=(parents, self.offspring))

    def tilted_step_sampler(self, t, phi):
        sigma = float(self.sigma(t))
        mean = phi * sigma**2

        def sample(rng: np.random.Generator, size: int) -> np.ndarray:
            return rng.normal(mean, sigma, size=size)

        return sample


class AnalyticLaplace(EnvironmentModel):
    """Closed-form kappa given by callbacks in (t, theta)."""

    def __init__(
        self,
        name: str,
        kappa_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        d_kappa_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        d2_kappa_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        theta_max_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        offspring: Optional[int] = None,
        density_fn: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        draw_fn: Optional[DrawFn] = None,
        lower_support: float = -np.inf,
        breakpoints: Sequence[float] = (),
        validate: bool = True,
    ):
        self.name = name
        self._kappa_fn = kappa_fn
        self._d_kappa_fn = d_kappa_fn
        self._d2_kappa_fn = d2_kappa_fn
        self._theta_max_fn = theta_max_fn
        self._density_fn = density_fn
        self._draw_fn = draw_fn
        self._lower_support = lower_support
        self._breakpoints = tuple(breakpoints)
        super().__init__(offspring=offspring, validate=validate)

    def _kappa(self, t, theta):
        return self._kappa_fn(t, theta)

    def _d_kappa(self, t, theta):
        return self._d_kappa_fn(t, theta)

    def _d2_kappa(self, t, theta):
        return self._d2_kappa_fn(t, theta)

    def theta_max(self, t):
        if self._theta_max_fn is None:
            return super().theta_max(t)
        return _out(np.asarray(self._theta_max_fn(np.asarray(t, dtype=float))))

    def breakpoints(self):
        return self._breakpoints

    def support_lower(self, t):
        return self._lower_support

    def displacement_density(self, t, x):
        if self._density_fn is None:
            return super().displacement_density(t, x)
        return self._density_fn(t, x)

    def _draw_displacements(self, t, parents, rng):
        if self._draw_fn is None:
            return super()._draw_displacements(t, parents, rng)
        return self._draw_fn(t, parents, rng)

    @classmethod
    def gaussian(cls, sigma: ScalarField, offspring: int = 2) -> "AnalyticLaplace":
        """Gaussian displacements written through callbacks."""
        log_k = float(np.log(offspring))
        return cls(
            name="analytic_gaussian",
            kappa_fn=lambda t, th: log_k + 0.5 * th**2 * sigma(t) ** 2,
            d_kappa_fn=lambda t, th: th * sigma(t) ** 2,
            d2_kappa_fn=lambda t, th: np.broadcast_to(sigma(t) ** 2, np.shape(th)),
            offspring=offspring,
            density_fn=lambda t, x: np.exp(-0.5 * (x / sigma(t)) ** 2)
            / (sigma(t) * np.sqrt(2.0 * np.pi)),
            draw_fn=lambda t, parents, rng: rng.normal(
                0.0, float(sigma(t)), size=(parents, offspring)
            ),
            breakpoints=sigma.all_breakpoints(),
        )

    @classmethod
    def gaussian_growth(
        cls, sigma: ScalarField, log_growth: float
    ) -> "AnalyticLaplace":
        """
        kappa_t(theta) = log_growth + theta^2 sigma_t^2 / 2 for any positive
        log mean offspring number. Has no sampler.
        """
        return cls(
            name="gaussian_growth",
            kappa_fn=lambda t, th: log_growth + 0.5 * th**2 * sigma(t) ** 2,
            d_kappa_fn=lambda t, th: th * sigma(t) ** 2,
            d2_kappa_fn=lambda t, th: np.broadcast_to(sigma(t) ** 2, np.shape(th)),
            breakpoints=sigma.all_breakpoints(),
        )

    @classmethod
    def exponential(cls, beta: ScalarField, offspring: int = 2) -> "AnalyticLaplace":
        """
        k children with i.i.d. Exp(beta_t) displacements.

        kappa_t(theta) = log k + log beta_t - log(beta_t - theta), theta < beta_t.
        """
        log_k = float(np.log(offspring))
        return cls(
            name="exponential",
            kappa_fn=lambda t, th: log_k + np.log(beta(t)) - np.log(beta(t) - th),
            d_kappa_fn=lambda t, th: 1.0 / (beta(t) - th),
            d2_kappa_fn=lambda t, th: 1.0 / (beta(t) - th) ** 2,
            theta_max_fn=lambda t: np.asarray(beta(t), dtype=float),
            offspring=offspring,
            density_fn=lambda t, x: np.where(
                x >= 0.0, beta(t) * np.exp(-beta(t) * np.maximum(x, 0.0)), 0.0
            ),
            draw_fn=lambda t, parents, rng: rng.exponential(
                1.0 / float(beta(t)), size=(parents, offspring)
            ),
            lower_support=0.0,
            breakpoints=beta.all_breakpoints(),
        )


class TabulatedLaplace(EnvironmentModel):
    """
    kappa tabulated on a (t, theta) grid.

    Cubic spline in theta, linear interpolation in t. The theta domain is the
    tabulated range. Sampling is delegated to an optional base environment.
    """

    name = "tabulated"

    def __init__(
        self,
        t_points: Sequence[float],
        theta_points: Sequence[float],
        values: np.ndarray,
        offspring: Optional[int] = None,
        base: Optional[EnvironmentModel] = None,
        validate: bool = True,
    ):
        self.t_points = np.asarray(t_points, dtype=float)
        self.theta_points = np.asarray(theta_points, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (self.t_points.size, self.theta_points.size):
            raise ValueError(
                f"kappa table has shape {values.shape}, expected "
                f"({self.t_points.size}, {self.theta_points.size})"
            )
        if self.t_points[0] > 0.0 or self.t_points[-1] < 1.0:
            raise ValueError("t_points must cover [0, 1]")
        if self.theta_points[0] > 0.0:
            raise ValueError("theta_points must start at or below 0")
        self.values = values
        self.base = base
        self._splines = [
            CubicSpline(self.theta_points, values, axis=1),
        ]
        self._splines.append(self._splines[0].derivative(1))
        self._splines.append(self._splines[0].derivative(2))
        if offspring is None and base is not None:
            offspring = base.offspring
        super().__init__(offspring=offspring, validate=validate)

    @classmethod
    def from_environment(
        cls,
        env: EnvironmentModel,
        t_points: Sequence[float],
        theta_points: Sequence[float],
    ) -> "TabulatedLaplace":
        """Tabulate another environment on a grid, keeping it for sampling."""
        t_grid, theta_grid = np.meshgrid(
            np.asarray(t_points, dtype=float),
            np.asarray(theta_points, dtype=float),
            indexing="ij",
        )
        return cls(
            t_points,
            theta_points,
            np.asarray(env.kappa(t_grid, theta_grid)),
            offspring=env.offspring,
            base=env,
        )

    def theta_max(self, t):
        # The last tabulated abscissa is included in the domain.
        return _out(np.full(np.shape(t), np.nextafter(self.theta_points[-1], np.inf)))

    def _interpolate(self, order: int, t, theta) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        theta = np.asarray(theta, dtype=float)
        flat_t, flat_theta = t.ravel(), theta.ravel()
        rows = self._splines[order](flat_theta)
        idx = np.clip(
            np.searchsorted(self.t_points, flat_t, side="right") - 1,
            0,
            self.t_points.size - 2,
        )
        t0, t1 = self.t_points[idx], self.t_points[idx + 1]
        weight = (flat_t - t0) / (t1 - t0)
        cols = np.arange(flat_t.size)
        result = (1.0 - weight) * rows[idx, cols] + weight * rows[idx + 1, cols]
        return result.reshape(t.shape)

    def _kappa(self, t, theta):
        return self._interpolate(0, t, theta)

    def _d_kappa(self, t, theta):
        return self._interpolate(1, t, theta)

    def _d2_kappa(self, t, theta):
        return self._interpolate(2, t, theta)

    def _require_base(self) -> EnvironmentModel:
        if self.base is None:
            raise SamplingUnsupportedError(
                "tabulated environment has no base law to sample from"
            )
        return self.base

    def displacement_density(self, t, x):
        return self._require_base().displacement_density(t, x)

    def support_lower(self, t):
        return self._require_base().support_lower(t)

    def _draw_displacements(self, t, parents, rng):
        return self._require_base().sample_displacements(t, parents, rng)

    def tilted_step_sampler(self, t, phi):
        return self._require_base().tilted_step_sampler(t, phi)


# Functional interface


def kappa(env: EnvironmentModel, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
    return env.kappa(t, theta)


def d_kappa(env: EnvironmentModel, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
    return env.d_kappa(t, theta)


def d2_kappa(env: EnvironmentModel, t: ArrayLike, theta: ArrayLike) -> ArrayLike:
    return env.d2_kappa(t, theta)


def kappa_star(env: EnvironmentModel, t: ArrayLike, a: ArrayLike) -> ArrayLike:
    return env.kappa_star(t, a)


def d_kappa_star(env: EnvironmentModel, t: ArrayLike, a: ArrayLike) -> ArrayLike:
    return env.d_kappa_star(t, a)


def natural_speed(env: EnvironmentModel, t: ArrayLike) -> Tuple[ArrayLike, ArrayLike]:
    return env.natural_speed(t)


def natural_speed_fields(env: EnvironmentModel) -> Tuple[ScalarField, ScalarField]:
    return env.natural_speed_fields()


def is_homogeneous(env: EnvironmentModel) -> bool:
    return env.is_homogeneous()


def legendre_of_conjugate(env: EnvironmentModel, t: float, theta: float) -> float:
    """
    sup over a of theta a - kappa*_t(a), which recovers kappa_t(theta).

    The supremum is attained at a = kappa'_t(theta); the search runs over a
    bounded window around it.
    """
    low = float(env.d_kappa(t, 0.0))
    guess = float(env.d_kappa(t, theta))
    high = guess + max(guess - low, 1.0)
    result = minimize_scalar(
        lambda a: float(env.kappa_star(t, a)) - theta * a,
        bounds=(low, high),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return -float(result.fun)
