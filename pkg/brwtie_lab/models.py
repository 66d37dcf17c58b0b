"""
Pydantic models for solver results and simulation records.
"""

from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from brwtie_lab.fields import IndicatorSet, ScalarField


class ResultModel(BaseModel):
    """Frozen base model that accepts numpy arrays and field objects."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class AiryZeroTable(ResultModel):
    """The first `count` zeros of Ai in decreasing order."""

    zeros: Tuple[float, ...]
    count: int


class CrossWronskianRoot(ResultModel):
    """The n-th largest root of the Airy cross-Wronskian at strength h."""

    h: float
    n: int
    lambda_n: float
    bracket: Tuple[float, float]
    residual: float


class KktReport(ResultModel):
    """Residuals of the three optimality conditions of a speed profile."""

    monotonicity: float
    energy_positivity: float
    terminal_energy: float
    slackness: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return max(self.residuals().values()) <= self.tolerance

    def residuals(self) -> Dict[str, float]:
        return {
            "monotonicity": self.monotonicity,
            "energy_positivity": self.energy_positivity,
            "terminal_energy": self.terminal_energy,
            "slackness": self.slackness,
        }


class OptimalPath(ResultModel):
    """Optimal speed profile a with its parameter theta on a time grid."""

    grid: np.ndarray
    a: ScalarField
    theta: ScalarField
    theta_bar: np.ndarray
    energy: np.ndarray
    v_star: float
    l_star: Optional[float] = None
    contact_set: IndicatorSet
    kkt_report: Optional[KktReport] = None
    method: str


class OdeSolution(ResultModel):
    """A solved boundary trajectory g on [0, t_max]."""

    lam: float
    t_max: float
    times: np.ndarray
    values: np.ndarray
    hit_lower: bool
    trajectory: ScalarField

    @property
    def survived(self) -> bool:
        return not self.hit_lower

    @property
    def g_end(self) -> float:
        return float(self.values[-1])


class PdeRun(ResultModel):
    """A Feynman-Kac run with its decay rate and long-time profile."""

    h: float
    domain: Literal["interval", "halfline"]
    length: float
    x: np.ndarray
    dt: float
    t_final: float
    decay_rate: float
    profile: np.ndarray
    diagnostics: Dict[str, float] = Field(default_factory=dict)


class TrialRecord(ResultModel):
    """Outcome of one branching random walk trial."""

    trial: int
    max_displacement: float
    consistent_displacement: float
    survived: bool
    aborted: bool
    population: List[int]
    followers: Optional[int] = None


class BrwResult(ResultModel):
    """Trial records merged by trial index."""

    n: int
    seed: int
    records: List[TrialRecord]

    @property
    def completed(self) -> List[TrialRecord]:
        return [r for r in self.records if not r.aborted]

    def max_displacements(self) -> np.ndarray:
        return np.array([r.max_displacement for r in self.completed if r.survived])

    def consistent_displacements(self) -> np.ndarray:
        return np.array(
            [r.consistent_displacement for r in self.completed if r.survived]
        )

    def survival_rate(self) -> float:
        done = self.completed
        return float(np.mean([r.survived for r in done])) if done else float("nan")


class SpineSample(ResultModel):
    """Tilted random walk trajectories with their many-to-one log weights."""

    positions: np.ndarray
    log_weights: np.ndarray
    path: np.ndarray
    inside: Optional[np.ndarray] = None


class CountEstimate(ResultModel):
    """Importance-sampling estimates of the path-following counts."""

    n: int
    trials: int
    x: float
    log_mean_a: float
    rel_se_a: float
    log_mean_b: float
    rel_se_b: float


class RwEstimate(ResultModel):
    """Normalised log-expectation of a weighted random walk kept in a band."""

    n: int
    estimate: float
    std_error: float
    batches: int
    particles: int
    batch_log_estimates: List[float]


class CheckResult(ResultModel):
    """Outcome of one acceptance check."""

    name: str
    passed: bool
    value: Optional[float] = None
    expected: Optional[float] = None
    detail: str = ""
