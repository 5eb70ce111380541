"""Exact expected loss per busy cycle for Poisson arrivals, deterministic service
and lattice batches.

All masses live on a grid ``k * span``.  Content is tracked in grid units
``0..levels`` at service epochs, which gives a finite absorbing chain (level
0 absorbs: the busy period is over).  The expected loss of one service
interval and the law of the level at its end follow from conditioning on the
Poisson number of arrivals during the service and admitting them one by one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.stats import poisson

from .dists import ConfigurationError, Deterministic, Exponential, LatticeDiscrete
from .engine import Policy, QueueModel

POISSON_EPS = 1e-12
_GRID_TOL = 1e-12


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatticeModel:
    """M^X/D/1 loss system on the grid ``span`` with ``levels`` units of capacity.

    ``batch_pmf[j - 1]`` is P{X_1 = j * span}.  Each service removes
    ``min(service_units, level)`` grid units; the classical case has
    ``service_units = 1`` and ``span = d``.
    """

    arrival_rate: float
    service_time: float
    span: float
    levels: int
    batch_pmf: tuple[float, ...]
    policy: Policy = Policy.FULL
    service_units: int = 1
    poisson_truncation: float = POISSON_EPS
    capacity: float | None = None

    def __post_init__(self):
        for name in ("arrival_rate", "service_time", "span"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if int(self.levels) != self.levels or self.levels < 0:
            raise ConfigurationError("levels must be a non-negative integer")
        if int(self.service_units) != self.service_units or self.service_units < 1:
            raise ConfigurationError("service_units must be a positive integer")
        pmf = tuple(float(p) for p in self.batch_pmf)
        if not pmf or any(p < 0 for p in pmf) or abs(math.fsum(pmf) - 1) > 1e-12:
            raise ConfigurationError("batch_pmf must be a probability vector")
        object.__setattr__(self, "batch_pmf", pmf)
        object.__setattr__(self, "levels", int(self.levels))
        object.__setattr__(self, "service_units", int(self.service_units))
        object.__setattr__(self, "policy", Policy(self.policy))

    @property
    def d(self) -> float:
        return self.service_units * self.span

    @property
    def mean_x(self) -> float:
        return self.span * math.fsum((j + 1) * p for j, p in enumerate(self.batch_pmf))

    @property
    def a(self) -> float:
        return 1.0 / self.arrival_rate


def _as_fraction(x: float) -> Fraction:
    f = Fraction(x).limit_denominator(10**6)
    if abs(float(f) - x) > _GRID_TOL * max(abs(x), 1.0):
        raise ConfigurationError(f"{x!r} is not a rational multiple usable as a lattice point")
    return f


def _fraction_gcd(p: Fraction, q: Fraction) -> Fraction:
    den = p.denominator * q.denominator // math.gcd(p.denominator, q.denominator)
    return Fraction(math.gcd(int(p * den), int(q * den)), den)


def from_queue_model(model: QueueModel, poisson_truncation: float = POISSON_EPS) -> LatticeModel:
    """Express ``model`` as a :class:`LatticeModel`, or raise ConfigurationError naming the obstacle."""
    if not isinstance(model.interarrival, Exponential):
        raise ConfigurationError("oracle requires Poisson arrivals (exponential interarrival times)")
    if not isinstance(model.service_time, Deterministic):
        raise ConfigurationError("oracle requires a deterministic service time")
    if not isinstance(model.service_batch, Deterministic):
        raise ConfigurationError("oracle requires a deterministic service batch Y_1 = d")
    xb = model.arrival_batch
    if isinstance(xb, Deterministic):
        x_span, mults, probs = xb.value, (1,), (1.0,)
    elif isinstance(xb, LatticeDiscrete):
        x_span, mults, probs = xb.span, xb.multipliers, xb.probs
    else:
        raise ConfigurationError("oracle requires a lattice arrival batch X_1")

    d = _as_fraction(model.service_batch.value)
    unit = _fraction_gcd(d, _as_fraction(x_span))
    n = model.capacity
    if model.policy is Policy.PARTIAL:
        # clipped batches stay on the grid only if n itself is a grid point
        unit = _fraction_gcd(unit, _as_fraction(n))
        levels = round(n / unit)
    else:
        levels = math.floor(n / float(unit) * (1 + 1e-12))
    x_step = round(_as_fraction(x_span) / unit)
    pmf = [0.0] * (x_step * max(mults))
    for k, p in zip(mults, probs):
        pmf[k * x_step - 1] = p
    return LatticeModel(
        arrival_rate=model.interarrival.rate,
        service_time=model.service_time.value,
        span=float(unit),
        levels=levels,
        batch_pmf=tuple(pmf),
        policy=model.policy,
        service_units=round(d / unit),
        poisson_truncation=poisson_truncation,
        capacity=n,
    )


def _poisson_weights(mu: float, eps: float) -> tuple[np.ndarray, float]:
    """Poisson(mu) pmf truncated where the tail drops below ``eps``, renormalized."""
    n_max = int(poisson.isf(eps, mu)) + 1
    while poisson.sf(n_max, mu) >= eps:
        n_max += 1
    w = poisson.pmf(np.arange(n_max + 1), mu)
    dropped = max(0.0, 1.0 - float(w.sum()))
    return w / w.sum(), dropped


def _arrival_kernel(model: LatticeModel) -> tuple[np.ndarray, np.ndarray]:
    """One-arrival transition matrix over levels and the expected mass lost from each level."""
    K = model.levels
    T = np.zeros((K + 1, K + 1))
    loss = np.zeros(K + 1)
    partial = model.policy is Policy.PARTIAL
    for level in range(K + 1):
        for j, p in enumerate(model.batch_pmf, start=1):
            if p == 0:
                continue
            if level + j <= K:
                accepted = j
            else:
                accepted = K - level if partial else 0
            T[level, level + accepted] += p
            loss[level] += p * (j - accepted) * model.span
    return T, loss


@lru_cache(maxsize=64)
def _service_table(model: LatticeModel):
    K = model.levels
    weights, dropped = _poisson_weights(model.arrival_rate * model.service_time, model.poisson_truncation)
    tail = weights[::-1].cumsum()[::-1]  # tail[k] = P{N >= k}
    T, loss_vec = _arrival_kernel(model)
    losses = np.zeros(K + 1)
    ends = np.zeros((K + 1, K + 1))
    for start in range(1, K + 1):
        dist = np.zeros(K + 1)
        dist[start] = 1.0
        lost = 0.0
        after = weights[0] * dist
        for k in range(1, len(weights)):
            lost += tail[k] * float(dist @ loss_vec)
            dist = dist @ T
            after += weights[k] * dist
        shift = min(model.service_units, start)
        end = np.zeros(K + 1)
        end[: K + 1 - shift] = after[shift:]
        losses[start] = lost
        ends[start] = end
    return losses, ends, dropped


def service_dp(start_level: int, model: LatticeModel) -> tuple[float, np.ndarray]:
    """Expected mass lost during one service started at ``start_level`` and the end-level pmf."""
    if not 1 <= start_level <= model.levels:
        raise ValueError(f"start_level must lie in 1..{model.levels}")
    losses, ends, _ = _service_table(model)
    return float(losses[start_level]), ends[start_level].copy()


def busy_period_losses(model: LatticeModel) -> np.ndarray:
    """v[m]: expected mass lost until the system empties, from a service start at level m."""
    K = model.levels
    v = np.zeros(K + 1)
    if K == 0:
        return v
    losses, ends, _ = _service_table(model)
    A = np.eye(K) - ends[1:, 1:]
    try:
        v[1:] = np.linalg.solve(A, losses[1:])
    except np.linalg.LinAlgError as exc:
        raise OracleError("absorbing-chain system is singular") from exc
    return v


def exact_expected_loss_per_cycle(model: LatticeModel) -> float:
    """E M_L per busy cycle, including the mass of a rejected initiating batch."""
    v = busy_period_losses(model)
    K = model.levels
    partial = model.policy is Policy.PARTIAL
    total = 0.0
    for j, p in enumerate(model.batch_pmf, start=1):
        if p == 0:
            continue
        if j <= K:
            total += p * v[j]
        elif partial:
            total += p * ((j - K) * model.span + v[K])
        else:
            total += p * j * model.span
    return float(total)


@dataclass
class OracleResult:
    arrival_rate: float
    service_time: float
    d: float
    span: float
    levels: int
    capacity: float | None
    policy: str
    mean_x: float
    ad_over_b: float
    expected_loss: float
    truncation_mass: float

    def row(self) -> dict:
        return {
            "lambda": self.arrival_rate, "b": self.service_time, "d": self.d, "K": self.levels,
            "n": self.capacity, "policy": self.policy, "ex1": self.mean_x, "ad_over_b": self.ad_over_b,
            "oracle_ml": self.expected_loss, "truncation_mass": self.truncation_mass,
        }


def solve(model: LatticeModel) -> OracleResult:
    value = exact_expected_loss_per_cycle(model)
    _, _, dropped = _service_table(model) if model.levels else (None, None, 0.0)
    return OracleResult(
        arrival_rate=model.arrival_rate, service_time=model.service_time, d=model.d, span=model.span,
        levels=model.levels, capacity=model.capacity, policy=model.policy.value, mean_x=model.mean_x,
        ad_over_b=model.a * model.d / model.service_time, expected_loss=value, truncation_mass=dropped,
    )
