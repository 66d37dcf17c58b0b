"""
Airy functions, their zeros, and the two Airy eigen-systems.

The half-line system is built on the zeros alpha_n of Ai. The interval system
on [0, 1] with potential -h x is built on the roots lambda_n^h of the
cross-Wronskian Ai(l) Bi(l + c) - Bi(l) Ai(l + c), c = (2h)^(1/3). The
function Psi(h) is the principal eigenvalue of (1/2) d^2/dx^2 - h x on [0, 1]
with Dirichlet conditions, equal to (h^(2/3) / 2^(1/3)) lambda_1^h for h > 0.
"""

import logging
import threading
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ai_zeros, airy, airye

from brwtie_lab.brackets import BracketConfig, expand_bracket
from brwtie_lab.config import AiryConfig
from brwtie_lab.errors import AiryOverflowError, BracketError
from brwtie_lab.models import AiryZeroTable, CrossWronskianRoot

logger = logging.getLogger(__name__)

ArrayLike = float | np.ndarray

PSI_ZERO = -(np.pi**2) / 2.0
CBRT2 = 2.0 ** (1.0 / 3.0)


def _scalar_or_array(values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(values) == 0 else values


def ai(x: ArrayLike) -> ArrayLike:
    """Airy function of the first kind."""
    return _scalar_or_array(airy(np.asarray(x, dtype=float))[0])


def ai_prime(x: ArrayLike) -> ArrayLike:
    """Derivative of Ai."""
    return _scalar_or_array(airy(np.asarray(x, dtype=float))[1])


def bi(x: ArrayLike) -> ArrayLike:
    """
    Airy function of the second kind.

    Raises:
        AiryOverflowError: If Bi(x) exceeds the floating-point range
    """
    x_arr = np.asarray(x, dtype=float)
    values = airy(x_arr)[2]
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise AiryOverflowError(float(np.atleast_1d(x_arr)[np.atleast_1d(bad)][0]))
    return _scalar_or_array(values)


@lru_cache(maxsize=8)
def _zero_arrays(count: int) -> Tuple[np.ndarray, np.ndarray]:
    zeros, _, _, ai_prime_at_zeros = ai_zeros(count)
    return zeros, ai_prime_at_zeros


def _table_size(n: int) -> int:
    # Grow in powers of two so repeated calls share one table.
    return max(64, 1 << int(np.ceil(np.log2(n))))


def airy_zero_table(count: int) -> AiryZeroTable:
    """The first `count` zeros of Ai, alpha_1 > alpha_2 > ..."""
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    zeros, _ = _zero_arrays(_table_size(count))
    return AiryZeroTable(zeros=tuple(float(z) for z in zeros[:count]), count=count)


def airy_zero(n: int) -> float:
    """
    The n-th zero alpha_n of Ai, counted in decreasing order.

    Args:
        n: Index, n >= 1

    Returns:
        alpha_n < 0
    """
    if n < 1:
        raise ValueError(f"Airy zero index must be >= 1, got {n}")
    zeros, _ = _zero_arrays(_table_size(n))
    return float(zeros[n - 1])


ALPHA_1 = airy_zero(1)
HALFLINE_CONSTANT = ALPHA_1 / CBRT2


def eigenfunction_halfline(n: int, x: ArrayLike) -> ArrayLike:
    """
    psi_n(x) = Ai(x + alpha_n) / Ai'(alpha_n), x >= 0.

    Unit L2 norm on [0, inf) because the integral of Ai^2 over
    [alpha_n, inf) equals Ai'(alpha_n)^2. The sign makes psi_n'(0) = 1.
    """
    zeros, primes = _zero_arrays(_table_size(n))
    alpha, slope = zeros[n - 1], primes[n - 1]
    x_arr = np.asarray(x, dtype=float)
    return _scalar_or_array(airy(x_arr + alpha)[0] / slope)


# Interval system


def _modulus_phase(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Write Ai = M a, Bi = M b with a^2 + b^2 = 1.

    Returns:
        (a, b, log M), computed from exponentially scaled Airy functions for
        positive arguments so that nothing overflows.
    """
    x = np.asarray(x, dtype=float)
    a = np.empty_like(x)
    b = np.empty_like(x)
    log_m = np.empty_like(x)

    neg = x <= 0.0
    if np.any(neg):
        ai_v, _, bi_v, _ = airy(x[neg])
        modulus = np.hypot(ai_v, bi_v)
        a[neg] = ai_v / modulus
        b[neg] = bi_v / modulus
        log_m[neg] = np.log(modulus)

    pos = ~neg
    if np.any(pos):
        xp = x[pos]
        e_ai, _, e_bi, _ = airye(xp)
        zeta = (2.0 / 3.0) * xp**1.5
        ratio = (e_ai / e_bi) * np.exp(-2.0 * zeta)
        norm = np.sqrt(1.0 + ratio**2)
        a[pos] = ratio / norm
        b[pos] = 1.0 / norm
        log_m[pos] = np.log(e_bi) + zeta + np.log(norm)

    return a, b, log_m


def normalized_cross_wronskian(lam: ArrayLike, h: float) -> ArrayLike:
    """
    Cross-Wronskian divided by M(lam) M(lam + c).

    Equals sin(theta(lam) - theta(lam + c)) in terms of the Airy phase, so it
    stays bounded while keeping the roots of the raw cross-Wronskian.
    """
    lam_arr = np.asarray(lam, dtype=float)
    shift = (2.0 * h) ** (1.0 / 3.0)
    a0, b0, _ = _modulus_phase(lam_arr)
    a1, b1, _ = _modulus_phase(lam_arr + shift)
    return _scalar_or_array(a0 * b1 - b0 * a1)


@lru_cache(maxsize=1)
def _phase_rule() -> Tuple[np.ndarray, np.ndarray]:
    return leggauss(AiryConfig.PHASE_NODES)


def _phase_increment(lam: float, shift: float) -> float:
    """(1/pi) * integral over [lam, lam + shift] of dx / (Ai^2 + Bi^2)."""
    upper = min(lam + shift, AiryConfig.PHASE_CUTOFF)
    if upper <= lam:
        return 0.0
    nodes, weights = _phase_rule()
    half = 0.5 * (upper - lam)
    x = lam + half * (nodes + 1.0)
    _, _, log_m = _modulus_phase(x)
    return float(half * np.sum(weights * np.exp(-2.0 * log_m)) / np.pi)


def _eigenvalue_bounds(h: float, n: int) -> Tuple[float, float]:
    """
    Bracket for lambda_n^h from the min-max bounds on the unscaled eigenvalue.

    The potential -h x lies in [-h, 0], so the n-th eigenvalue of
    (1/2) d^2/dx^2 - h x lies in [-pi^2 n^2 / 2 - h, -pi^2 n^2 / 2].
    """
    scale = CBRT2 / h ** (2.0 / 3.0)
    top = -(np.pi**2) * n**2 / 2.0
    lo, hi = (top - h) * scale, top * scale
    pad = 1e-9 * (1.0 + abs(lo))
    return lo - pad, hi + pad


def cross_wronskian_root(h: float, n: int = 1) -> CrossWronskianRoot:
    """
    Locate the n-th largest root lambda_n^h of the cross-Wronskian.

    A root of the phase equation P(lam) = n pi, where P is the Airy phase
    increment over [lam, lam + (2h)^(1/3)], gives the estimate; the estimate is
    then polished on the normalized cross-Wronskian itself.

    Args:
        h: Potential strength, h > 0
        n: Root index, n >= 1

    Returns:
        CrossWronskianRoot with the polishing bracket and the final residual

    Raises:
        BracketError: If a sign change cannot be established
    """
    if h <= 0:
        raise ValueError(f"cross-Wronskian roots need h > 0, got {h}")
    if n < 1:
        raise ValueError(f"root index must be >= 1, got {n}")

    shift = (2.0 * h) ** (1.0 / 3.0)
    target = n * np.pi

    def phase_gap(lam: float) -> float:
        return _phase_increment(lam, shift) - target

    config = BracketConfig()
    lo, hi = _eigenvalue_bounds(h, n)
    lo, hi, _, _ = expand_bracket(phase_gap, lo, hi, config)
    estimate = brentq(phase_gap, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)

    def wronskian(lam: float) -> float:
        return float(normalized_cross_wronskian(lam, h))

    width = AiryConfig.POLISH_WIDTH * (1.0 + abs(estimate))
    polish = BracketConfig(growth_factor=10.0)
    try:
        lo, hi, _, _ = expand_bracket(
            wronskian, estimate - width, estimate + width, polish
        )
    except BracketError as exc:
        logger.error("Polishing bracket failed for h=%g, n=%d: %s", h, n, exc)
        raise
    root = brentq(wronskian, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    residual = abs(wronskian(root))

    logger.debug(
        "lambda_%d(h=%g) = %.15g, phase estimate %.15g, residual %.2e",
        n,
        h,
        root,
        estimate,
        residual,
    )
    return CrossWronskianRoot(
        h=float(h), n=n, lambda_n=float(root), bracket=(lo, hi), residual=residual
    )


def lambda_n(h: float, n: int = 1) -> float:
    """The n-th largest cross-Wronskian root lambda_n^h."""
    return cross_wronskian_root(h, n).lambda_n


def scaled_eigenvalue(h: float, n: int = 1) -> float:
    """(h^(2/3) / 2^(1/3)) lambda_n^h, the n-th Dirichlet eigenvalue."""
    return h ** (2.0 / 3.0) / CBRT2 * lambda_n(h, n)


class IntervalEigenfunction:
    """
    phi_n^h on [0, 1], normalized in L2 with phi_n^h'(0) > 0.

    The combination a(w) Bi(lam + c x) - b(w) Ai(lam + c x) with w = lam + c
    vanishes at x = 1 by construction and at x = 0 because lam is a root.
    It is evaluated as M(z) / M(w) times a bounded phase difference.
    """

    def __init__(self, h: float, n: int = 1):
        self.h = float(h)
        self.n = n
        self.shift = (2.0 * h) ** (1.0 / 3.0)
        self.lam = lambda_n(h, n)
        w = self.lam + self.shift
        a_w, b_w, log_m_w = _modulus_phase(np.array([w]))
        self._a_w, self._b_w, self._log_m_w = a_w[0], b_w[0], log_m_w[0]

        _, ai_p, _, bi_p = airy(self.lam)
        slope = self._a_w * bi_p - self._b_w * ai_p
        self._sign = 1.0 if slope >= 0 else -1.0

        norm_sq, _ = quad(
            lambda x: self._raw(np.array([x]))[0] ** 2,
            0.0,
            1.0,
            limit=max(200, 20 * n),
            epsabs=1e-14,
            epsrel=1e-12,
        )
        self._scale = self._sign / np.sqrt(norm_sq)

    def _raw(self, x: np.ndarray) -> np.ndarray:
        z = self.lam + self.shift * x
        a_z, b_z, log_m_z = _modulus_phase(z)
        phase = self._a_w * b_z - self._b_w * a_z
        return np.exp(log_m_z - self._log_m_w) * phase

    def __call__(self, x: ArrayLike) -> ArrayLike:
        x_arr = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x_arr).ravel()
        values = (self._scale * self._raw(flat)).reshape(x_arr.shape)
        return _scalar_or_array(values)


_eigenfunctions: Dict[Tuple[float, int], IntervalEigenfunction] = {}
_eigenfunctions_lock = threading.Lock()


def _interval_eigenfunction(h: float, n: int) -> IntervalEigenfunction:
    key = (float(h), n)
    with _eigenfunctions_lock:
        cached = _eigenfunctions.get(key)
    if cached is None:
        cached = IntervalEigenfunction(h, n)
        with _eigenfunctions_lock:
            _eigenfunctions[key] = cached
    return cached


def eigenfunction_interval(h: float, n: int, x: ArrayLike) -> ArrayLike:
    """
    phi_n^h(x) for x in [0, 1].

    For h = 0 the potential vanishes and phi_n = sqrt(2) sin(n pi x).
    """
    if h < 0:
        raise ValueError(f"eigenfunction_interval needs h >= 0, got {h}")
    if h == 0:
        x_arr = np.asarray(x, dtype=float)
        return _scalar_or_array(np.sqrt(2.0) * np.sin(n * np.pi * x_arr))
    return _interval_eigenfunction(h, n)(x)


class PsiEvaluator:
    """
    Cached evaluator of Psi(h).

    Positive arguments are quantized to `quantum` before lookup. Negative
    arguments use Psi(h) = Psi(-h) - h, and tiny arguments use the first-order
    expansion -pi^2/2 - h/2.
    """

    def __init__(
        self,
        tolerance: float = AiryConfig.PSI_TOLERANCE,
        quantum: float = AiryConfig.PSI_QUANTUM,
        linear_below: float = AiryConfig.PSI_LINEAR_BELOW,
    ):
        self.tolerance = tolerance
        self.quantum = quantum
        self.linear_below = linear_below
        self.cache: Dict[int, float] = {}
        self._lock = threading.Lock()

    def _positive(self, h: float) -> float:
        if h < self.linear_below:
            return PSI_ZERO - 0.5 * h
        key = int(round(h / self.quantum))
        with self._lock:
            value = self.cache.get(key)
        if value is None:
            value = scaled_eigenvalue(key * self.quantum, 1)
            with self._lock:
                self.cache[key] = value
        return value

    def evaluate(self, h: float) -> float:
        h = float(h)
        if h == 0.0:
            return PSI_ZERO
        if h > 0.0:
            return self._positive(h)
        return self._positive(-h) - h

    def __call__(self, h: ArrayLike) -> ArrayLike:
        h_arr = np.asarray(h, dtype=float)
        if h_arr.ndim == 0:
            return self.evaluate(float(h_arr))
        flat = h_arr.ravel()
        unique, inverse = np.unique(flat, return_inverse=True)
        values = np.array([self.evaluate(u) for u in unique])
        return values[inverse].reshape(h_arr.shape)

    def __len__(self) -> int:
        return len(self.cache)


class LatticePsi:
    """
    Psi by four-point Lagrange interpolation between lattice nodes k * step.

    Nodes are solved lazily through a PsiEvaluator, so an ODE right-hand side
    that sweeps a continuum of arguments costs one root solve per node.
    """

    def __init__(
        self,
        evaluator: Optional[PsiEvaluator] = None,
        step: float = AiryConfig.PSI_LATTICE_STEP,
    ):
        self.evaluator = evaluator or default_psi_evaluator()
        self.step = step
        self._nodes: Dict[int, float] = {}
        self._lock = threading.Lock()

    def _node_values(self, keys: np.ndarray) -> np.ndarray:
        missing = []
        with self._lock:
            for key in np.unique(keys):
                if int(key) not in self._nodes:
                    missing.append(int(key))
        fresh = {key: self.evaluator.evaluate(key * self.step) for key in missing}
        with self._lock:
            self._nodes.update(fresh)
            return np.vectorize(self._nodes.__getitem__, otypes=[float])(keys)

    def __call__(self, h: ArrayLike) -> ArrayLike:
        h_arr = np.asarray(h, dtype=float)
        scaled = h_arr / self.step
        base = np.floor(scaled).astype(np.int64)
        frac = scaled - base
        offsets = np.array([-1, 0, 1, 2])
        keys = base[..., None] + offsets
        values = self._node_values(keys)
        u = frac
        weights = np.stack(
            [
                -u * (u - 1.0) * (u - 2.0) / 6.0,
                (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
                -(u + 1.0) * u * (u - 2.0) / 2.0,
                (u + 1.0) * u * (u - 1.0) / 6.0,
            ],
            axis=-1,
        )
        return _scalar_or_array(np.sum(weights * values, axis=-1))


@lru_cache(maxsize=1)
def default_psi_evaluator() -> PsiEvaluator:
    """Process-wide Psi evaluator shared by the functional and ODE solvers."""
    return PsiEvaluator()


def psi(h: ArrayLike) -> ArrayLike:
    """Psi(h) through the shared evaluator."""
    return default_psi_evaluator()(h)
