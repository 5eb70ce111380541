"""Regenerative estimates, Wald-identity residuals, bound checks and hypothesis tests.

Busy cycles are i.i.d., so every estimate is a plain sample mean over cycles
with a normal-approximation confidence interval.  Population moments
(a, b, E X_1, E Y_1) always come from the model's distributions.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .dists import AgingClass, ConfigurationError, classify_aging, cdf, is_nontrivial
from .engine import CycleTable, QueueModel

SLACK_SE = 3.0

# report name -> CycleTable column
FIELDS = {
    "N_A": "n_arrivals",
    "N_S": "n_services",
    "M_A": "mass_arrived",
    "M_S": "mass_served",
    "M_L": "mass_lost",
    "I": "idle_length",
    "busy_length": "busy_length",
}

CSV_COLUMNS = ("n", "policy", "cycles", "seed", "ml_mean", "ml_lo", "ml_hi", "ex1",
               "verdict", "r1", "r1_se", "r2", "r2_se", "idle_mean", "a")


class EstimationError(ValueError):
    pass


def _column(records: CycleTable, name: str) -> np.ndarray:
    col = FIELDS.get(name, name)
    try:
        return np.asarray(records.columns[col], dtype=float)
    except KeyError:
        raise KeyError(f"unknown field {name!r}") from None


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    k = len(values)
    if k < 2:
        raise EstimationError("need at least 2 cycles")
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(k))


def regenerative_estimate(records: CycleTable, field: str, level: float = 0.95) -> tuple[float, float, float]:
    """Sample mean of ``field`` over cycles with a two-sided CI at ``level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    mean, se = _mean_se(_column(records, field))
    half = float(norm.ppf((1 + level) / 2)) * se
    return mean, mean - half, mean + half


@dataclass
class Residual:
    value: float
    se: float

    def within(self, k: float = SLACK_SE) -> bool:
        return abs(self.value) <= k * self.se


def wald_residuals(records: CycleTable, model: QueueModel) -> tuple[Residual, Residual]:
    """r1 = mean(M_A) - E X_1 mean(N_A) and r2 = a mean(N_A) - b mean(N_S) - mean(I).

    Both are means of per-cycle linear combinations, so their standard errors
    are the sample standard errors of those combinations.
    """
    n_a = _column(records, "N_A")
    r1 = _column(records, "M_A") - model.mean_x * n_a
    r2 = model.a * n_a - model.b * _column(records, "N_S") - _column(records, "I")
    return Residual(*_mean_se(r1)), Residual(*_mean_se(r2))


@dataclass
class BoundChecks:
    # a mean(N_A) - a - b mean(N_S): nonnegative under NWUE arrivals
    eq3_gap: float
    eq3_se: float
    eq3_ok: bool
    # mean(N_S) E Y_1 - mean(M_S): nonnegative always
    eq4_gap: float
    eq4_se: float
    eq4_ok: bool
    eq4_strict: bool
    # mean(I) - a
    idle_gap: float
    idle_se: float
    idle_ok: Optional[bool]  # None when the arrivals are not NWUE


def bound_checks(records: CycleTable, model: QueueModel, slack: float = SLACK_SE) -> BoundChecks:
    n_a = _column(records, "N_A")
    n_s = _column(records, "N_S")
    a, b = model.a, model.b
    eq3, eq3_se = _mean_se(a * n_a - a - b * n_s)
    eq4, eq4_se = _mean_se(model.mean_y * n_s - _column(records, "M_S"))
    idle, idle_se = _mean_se(_column(records, "I") - a)
    nwue = classify_aging(model.interarrival) in (AgingClass.NWUE, AgingClass.BOTH)
    return BoundChecks(
        eq3_gap=eq3, eq3_se=eq3_se, eq3_ok=eq3 >= -slack * eq3_se,
        eq4_gap=eq4, eq4_se=eq4_se, eq4_ok=eq4 >= -slack * eq4_se,
        eq4_strict=eq4 > slack * eq4_se and is_nontrivial(model.service_batch),
        idle_gap=idle, idle_se=idle_se,
        idle_ok=(idle >= -slack * idle_se) if nwue else None,
    )


def test_theorem_equality(records: CycleTable, expected: float, level: float = 0.95) -> str:
    """'consistent' when the CI of E M_L covers ``expected``, else 'violated-high'/'violated-low'."""
    _, lo, hi = regenerative_estimate(records, "M_L", level)
    if lo <= expected <= hi:
        return "consistent"
    return "violated-high" if lo > expected else "violated-low"


test_theorem_equality.__test__ = False


def lemma_preconditions(model: QueueModel) -> list[str]:
    """Names of the inequality hypotheses that ``model`` violates (empty when all hold)."""
    failed = []
    if classify_aging(model.interarrival) not in (AgingClass.NWUE, AgingClass.BOTH):
        failed.append("interarrival distribution must be NWUE")
    if model.mean_x / model.a < model.mean_y / model.b:
        failed.append("E X_1 / a must be >= E Y_1 / b")
    if cdf(model.arrival_batch, model.capacity) <= 0:
        failed.append("P{X_1 <= n} must be positive")
    if not is_nontrivial(model.service_batch):
        failed.append("Y_1 must be nontrivial")
    return failed


def test_lemma_inequality(records: CycleTable, model: QueueModel, alpha: float = 0.01,
                          expected: Optional[float] = None) -> str:
    """One-sided test of E M_L > E X_1: 'strictly-greater' or 'inconclusive'.

    Raises ConfigurationError naming every violated hypothesis of the
    inequality.  ``expected`` defaults to the model's E X_1.
    """
    failed = lemma_preconditions(model)
    if failed:
        raise ConfigurationError("; ".join(failed))
    if expected is None:
        expected = model.mean_x
    mean, se = _mean_se(_column(records, "M_L"))
    return "strictly-greater" if mean - expected > norm.ppf(1 - alpha) * se else "inconclusive"


test_lemma_inequality.__test__ = False


@dataclass
class Estimate:
    point: float
    lo: float
    hi: float


@dataclass
class EstimateReport:
    num_cycles: int
    seed: int
    level: float
    capacity: float
    policy: str
    estimates: dict[str, Estimate]
    r1: Residual
    r2: Residual
    bounds: BoundChecks
    a: float
    mean_x: float
    verdict: str = ""
    extra: dict = field(default_factory=dict)

    def csv_row(self) -> dict:
        ml = self.estimates["M_L"]
        return {
            "n": self.capacity, "policy": self.policy, "cycles": self.num_cycles, "seed": self.seed,
            "ml_mean": ml.point, "ml_lo": ml.lo, "ml_hi": ml.hi, "ex1": self.mean_x,
            "verdict": self.verdict, "r1": self.r1.value, "r1_se": self.r1.se,
            "r2": self.r2.value, "r2_se": self.r2.se,
            "idle_mean": self.estimates["I"].point, "a": self.a,
        }

    def to_text(self) -> str:
        lines = [
            f"n={self.capacity:g} policy={self.policy} cycles={self.num_cycles} seed={self.seed} level={self.level}",
        ]
        for name, est in self.estimates.items():
            lines.append(f"  E {name:<12} {est.point:.6g}  [{est.lo:.6g}, {est.hi:.6g}]")
        lines.append(f"  r1 (mass Wald)   {self.r1.value:.4g} +- {self.r1.se:.3g}")
        lines.append(f"  r2 (time Wald)   {self.r2.value:.4g} +- {self.r2.se:.3g}")
        bc = self.bounds
        lines.append(f"  a E N_A - a - b E N_S = {bc.eq3_gap:.4g} (se {bc.eq3_se:.3g}) ok={bc.eq3_ok}")
        lines.append(f"  E N_S E Y_1 - E M_S  = {bc.eq4_gap:.4g} (se {bc.eq4_se:.3g}) ok={bc.eq4_ok} strict={bc.eq4_strict}")
        idle = "n/a" if bc.idle_ok is None else bc.idle_ok
        lines.append(f"  E I - a              = {bc.idle_gap:.4g} (se {bc.idle_se:.3g}) ok={idle}")
        if self.verdict:
            lines.append(f"  verdict: {self.verdict}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_report(records: CycleTable, model: QueueModel, seed: int, level: float = 0.95) -> EstimateReport:
    estimates = {name: Estimate(*regenerative_estimate(records, name, level)) for name in FIELDS}
    r1, r2 = wald_residuals(records, model)
    return EstimateReport(
        num_cycles=len(records), seed=seed, level=level, capacity=model.capacity,
        policy=model.policy.value, estimates=estimates, r1=r1, r2=r2,
        bounds=bound_checks(records, model), a=model.a, mean_x=model.mean_x,
    )
