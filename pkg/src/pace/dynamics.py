"""Trainee-specific learning and forgetting dynamics.

Learning pace is the average marginal mastery gain per practice opportunity.
Forgetting follows a power law over wall-clock time: mastery after a gap of
``dt`` hours is ``theta * (1 + kappa * dt) ** -psi``, so decay slows as time
passes. The forgetting rate is fit per trainee from retention outcomes
observed when previously practiced skills are reassessed after a gap.

Both estimators fall back to population averages (0.08 pace, 0.30 forgetting)
until enough of a trainee's own history has accumulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .belief import BeliefState

POPULATION_LAMBDA = 0.08
POPULATION_PSI = 0.30
#: Default time normalization for the decay law, per hour. At this scale a
#: 24-hour rest costs a mid-range forgetter a few percent of mastery and an
#: unpracticed skill erodes substantially over a multi-week program, while
#: mastery remains reachable for slow learners under a realistic session
#: budget.
DEFAULT_KAPPA = 0.005
PSI_MIN, PSI_MAX = 0.01, 1.0
MIN_RETENTION_PAIRS = 3
DEFAULT_HORIZON_HOURS = 24.0


@dataclass(frozen=True)
class PracticeGain:
    """Belief-mean change attributable to practicing one node in one session."""
    node: str
    session: int
    delta: float


@dataclass(frozen=True)
class RetentionPair:
    """Mastery before a gap vs. the level implied by the first reassessment."""
    node: str
    theta_before: float
    theta_after: float
    gap_hours: float

    def __post_init__(self) -> None:
        if not 0.0 < self.theta_before <= 1.0:
            raise ValueError("theta_before must lie in (0, 1]")
        if self.gap_hours <= 0.0:
            raise ValueError("gap_hours must be positive")


@dataclass
class DynamicsEstimate:
    lambda_hat: float = POPULATION_LAMBDA
    psi_hat: float = POPULATION_PSI
    kappa: float = DEFAULT_KAPPA
    n_gain_samples: int = 0
    n_retention_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "psi_hat": self.psi_hat,
            "kappa": self.kappa,
            "n_gain_samples": self.n_gain_samples,
            "n_retention_samples": self.n_retention_samples,
        }


def estimate_lambda(history: Sequence[PracticeGain]) -> float:
    """Arithmetic mean of per-practice gains; population default when empty."""
    if not history:
        return POPULATION_LAMBDA
    return float(np.mean([g.delta for g in history]))


def apply_forgetting(theta: float | np.ndarray, gap_hours: float | np.ndarray,
                     psi: float, kappa: float) -> float | np.ndarray:
    """Power-law decay of mastery over a wall-clock gap (elementwise on arrays)."""
    gap = np.maximum(np.asarray(gap_hours, dtype=float), 0.0)
    out = np.asarray(theta, dtype=float) * (1.0 + kappa * gap) ** (-psi)
    return float(out) if out.ndim == 0 else out


def estimate_psi(pairs: Sequence[RetentionPair], kappa: float) -> float:
    """Origin-constrained log-linear least squares on the power-law model.

    With x = log(1 + kappa * gap) and y = log(theta_after / theta_before),
    the model is y = -psi * x, so psi = -sum(x*y) / sum(x^2). Apparent gains
    across a gap (after > before) are clamped to zero decay. Falls back to the
    population average below three pairs; the result is clamped to
    [0.01, 1.0].
    """
    if len(pairs) < MIN_RETENTION_PAIRS:
        return POPULATION_PSI
    x = np.array([np.log1p(kappa * p.gap_hours) for p in pairs])
    y = np.array([
        min(np.log(max(p.theta_after, 1e-9) / p.theta_before), 0.0)
        for p in pairs
    ])
    denom = float(np.dot(x, x))
    if denom == 0.0:
        return POPULATION_PSI
    psi = -float(np.dot(x, y)) / denom
    return float(np.clip(psi, PSI_MIN, PSI_MAX))


def decay_beliefs(state: BeliefState, now: float, psi_hat: float,
                  kappa: float) -> np.ndarray:
    """Non-destructive forecast of belief means after decay up to ``now``.

    Never-practiced nodes return their prior mean; clock regressions count as
    zero elapsed time. The posterior pseudo-counts are not touched.
    """
    means = state.means()
    return decay_means(means, state.last_practiced, now, psi_hat, kappa)


def decay_means(means: np.ndarray, last_practiced: np.ndarray, now: float,
                psi_hat: float, kappa: float) -> np.ndarray:
    gaps = now - last_practiced
    gaps = np.where(np.isnan(gaps), 0.0, np.maximum(gaps, 0.0))
    return means * (1.0 + kappa * gaps) ** (-psi_hat)


def decay_risk_count(
    state: BeliefState,
    now: float,
    psi_hat: float,
    kappa: float,
    mastery_threshold: float = 0.85,
    horizon_hours: float = DEFAULT_HORIZON_HOURS,
) -> int:
    """Skills currently at mastery whose forecast falls below it within the
    horizon."""
    current = decay_beliefs(state, now, psi_hat, kappa)
    later = decay_beliefs(state, now + horizon_hours, psi_hat, kappa)
    return int(np.sum((current >= mastery_threshold) & (later < mastery_threshold)))


def decay_risk_from_means(
    means: np.ndarray,
    last_practiced: np.ndarray,
    now: float,
    psi_hat: float,
    kappa: float,
    mastery_threshold: float = 0.85,
    horizon_hours: float = DEFAULT_HORIZON_HOURS,
) -> int:
    current = decay_means(means, last_practiced, now, psi_hat, kappa)
    later = decay_means(means, last_practiced, now + horizon_hours, psi_hat, kappa)
    return int(np.sum((current >= mastery_threshold) & (later < mastery_threshold)))


class DynamicsTracker:
    """Streaming view of the two estimators for per-session refresh.

    Practice gains keep a running mean (same math as
    :func:`estimate_lambda`). Retention samples are pooled into gap buckets
    before the power-law fit: single reassessments are nearly Bernoulli, so
    per-bucket mean-ratio estimates feed the origin-constrained least squares
    instead of individual log-ratios, which would be badly biased.
    """

    def __init__(self, kappa: float = DEFAULT_KAPPA, frozen: bool = False,
                 lambda_hat: float = POPULATION_LAMBDA,
                 psi_hat: float = POPULATION_PSI):
        self.kappa = kappa
        self.frozen = frozen  # population-average mode: ignore incoming samples
        self._gain_sum = 0.0
        self._gain_n = 0
        # gap bucket -> [n, sum_x, sum_before, sum_after]
        self._buckets: dict[float, list[float]] = {}
        self._pair_n = 0
        self._lambda0 = lambda_hat
        self._psi0 = psi_hat

    def record_gain(self, delta: float) -> None:
        if self.frozen:
            return
        self._gain_sum += delta
        self._gain_n += 1

    def record_gains(self, deltas: np.ndarray) -> None:
        if self.frozen or deltas.size == 0:
            return
        self._gain_sum += float(deltas.sum())
        self._gain_n += int(deltas.size)

    def record_retention(self, theta_before: float, theta_after: float,
                         gap_hours: float) -> None:
        """One reassessment of a previously practiced skill.

        ``theta_after`` may be a noisy single-observation estimate; it only
        needs to be unbiased in aggregate (values outside [0, 1] are fine).
        """
        if self.frozen:
            return
        x = float(np.log1p(self.kappa * gap_hours))
        key = round(x, 1)
        bucket = self._buckets.setdefault(key, [0.0, 0.0, 0.0, 0.0])
        bucket[0] += 1.0
        bucket[1] += x
        bucket[2] += theta_before
        bucket[3] += theta_after
        self._pair_n += 1

    @property
    def lambda_hat(self) -> float:
        if self.frozen or self._gain_n == 0:
            return self._lambda0
        return self._gain_sum / self._gain_n

    #: Pseudo-weight of the population prior in the bucket blend, in units of
    #: n * x^2. Short-gap buckets carry little decay signal per pair, so the
    #: prior holds until informative long-gap reassessments accumulate.
    PRIOR_STRENGTH = 2.0

    @property
    def psi_hat(self) -> float:
        if self.frozen or self._pair_n < MIN_RETENTION_PAIRS:
            return self._psi0
        weight_sum = self.PRIOR_STRENGTH
        psi_sum = self.PRIOR_STRENGTH * self._psi0
        for n, sum_x, sum_before, sum_after in self._buckets.values():
            if sum_before <= 0.1:
                continue
            ratio = min(max(sum_after / sum_before, 1e-3), 1.0)
            x_mean = sum_x / n
            if x_mean <= 0.0:
                continue
            psi_b = -np.log(ratio) / x_mean
            w = n * x_mean * x_mean
            psi_sum += w * psi_b
            weight_sum += w
        return float(np.clip(psi_sum / weight_sum, PSI_MIN, PSI_MAX))

    def estimate(self) -> DynamicsEstimate:
        return DynamicsEstimate(
            lambda_hat=self.lambda_hat,
            psi_hat=self.psi_hat,
            kappa=self.kappa,
            n_gain_samples=self._gain_n,
            n_retention_samples=self._pair_n,
        )
