"""Positive-valued distributions for interarrival times, service times and batch masses.

Every family is a small frozen dataclass that knows its analytic mean, its
survival function, how to draw vectors of samples from a ``numpy`` generator,
and its mean residual life ``E{xi - x | xi > x}``.  NBUE/NWUE membership is
decided analytically per family by :func:`classify_aging`.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Any, Mapping, Sequence, Union

import numpy as np
from scipy import integrate, special

PROB_TOL = 1e-12
MRL_ABS_TOL = 1e-9
TAIL_CUTOFF = 1e-14


class ConfigurationError(ValueError):
    """Raised for invalid distribution or model parameters."""


class DomainError(ValueError):
    """Raised when a quantity is requested outside the support."""


class AgingClass(str, enum.Enum):
    NBUE = "NBUE"
    NWUE = "NWUE"
    BOTH = "Both"
    UNKNOWN = "Unknown"


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
    return value


def _prob_vector(name: str, probs: Sequence[float], size: int) -> tuple[float, ...]:
    probs = tuple(float(p) for p in probs)
    if len(probs) != size or size == 0:
        raise ConfigurationError(f"{name} must have {size} entries (got {len(probs)})")
    if any(not math.isfinite(p) or p <= 0 for p in probs):
        raise ConfigurationError(f"{name} entries must be positive")
    if abs(math.fsum(probs) - 1.0) > PROB_TOL:
        raise ConfigurationError(f"{name} must sum to 1 (sum={math.fsum(probs)!r})")
    return probs


@dataclass(frozen=True)
class Exponential:
    rate: float

    family = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def mean(self) -> float:
        return 1.0 / self.rate

    def survival(self, x: float) -> float:
        return math.exp(-self.rate * x) if x > 0 else 1.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size)

    def mrl(self, x: float) -> float:
        return 1.0 / self.rate

    def aging(self) -> AgingClass:
        return AgingClass.BOTH

    def to_dict(self) -> dict:
        return {"family": self.family, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic:
    value: float

    family = "deterministic"

    def __post_init__(self):
        object.__setattr__(self, "value", _positive("value", self.value))

    def mean(self) -> float:
        return self.value

    def survival(self, x: float) -> float:
        return 1.0 if x < self.value else 0.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)

    def mrl(self, x: float) -> float:
        if x >= self.value:
            raise DomainError(f"x={x} is beyond the support of Deterministic({self.value})")
        return self.value - max(x, 0.0)

    def aging(self) -> AgingClass:
        return AgingClass.NBUE

    def to_dict(self) -> dict:
        return {"family": self.family, "value": self.value}


@dataclass(frozen=True)
class Erlang:
    shape: int
    rate: float

    family = "erlang"

    def __post_init__(self):
        if isinstance(self.shape, bool) or int(self.shape) != self.shape or self.shape < 1:
            raise ConfigurationError(f"shape must be a positive integer, got {self.shape!r}")
        object.__setattr__(self, "shape", int(self.shape))
        object.__setattr__(self, "rate", _positive("rate", self.rate))

    def mean(self) -> float:
        return self.shape / self.rate

    def survival(self, x: float) -> float:
        if x <= 0:
            return 1.0
        return float(special.gammaincc(self.shape, self.rate * x))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def mrl(self, x: float) -> float:
        # no closed form requested here; quadrature over the survival function
        return _numeric_mrl(self, x)

    def aging(self) -> AgingClass:
        return AgingClass.BOTH if self.shape == 1 else AgingClass.NBUE

    def to_dict(self) -> dict:
        return {"family": self.family, "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class HyperExponential:
    weights: tuple[float, ...]
    rates: tuple[float, ...]

    family = "hyperexp"

    def __post_init__(self):
        rates = tuple(_positive("rates", r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "weights", _prob_vector("weights", self.weights, len(rates)))

    def mean(self) -> float:
        return math.fsum(w / r for w, r in zip(self.weights, self.rates))

    def survival(self, x: float) -> float:
        x = max(x, 0.0)
        return math.fsum(w * math.exp(-r * x) for w, r in zip(self.weights, self.rates))

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        branch = rng.choice(len(self.rates), size=size, p=self.weights)
        scale = 1.0 / np.asarray(self.rates)
        return rng.exponential(1.0, size) * scale[branch]

    def mrl(self, x: float) -> float:
        # ratio of sums of w_i e^{-r_i x} / r_i and w_i e^{-r_i x}, computed in log space
        x = max(x, 0.0)
        w = np.asarray(self.weights)
        r = np.asarray(self.rates)
        log_num = special.logsumexp(-r * x, b=w / r)
        log_den = special.logsumexp(-r * x, b=w)
        return float(np.exp(log_num - log_den))

    def aging(self) -> AgingClass:
        return AgingClass.NWUE if len(set(self.rates)) >= 2 else AgingClass.BOTH

    def to_dict(self) -> dict:
        return {"family": self.family, "weights": list(self.weights), "rates": list(self.rates)}


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    family = "uniform"

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi <= lo:
            raise ConfigurationError(f"uniform needs 0 <= lo < hi, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def survival(self, x: float) -> float:
        if x <= self.lo:
            return 1.0
        if x >= self.hi:
            return 0.0
        return (self.hi - x) / (self.hi - self.lo)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # hi - U[0, hi - lo) lies in (lo, hi], so a zero lower bound never yields 0
        return self.hi - rng.uniform(0.0, self.hi - self.lo, size)

    def mrl(self, x: float) -> float:
        if x >= self.hi:
            raise DomainError(f"x={x} is beyond the support of Uniform({self.lo}, {self.hi})")
        if x <= self.lo:
            return self.mean() - max(x, 0.0)
        return 0.5 * (self.hi - x)

    def aging(self) -> AgingClass:
        return AgingClass.NBUE

    def to_dict(self) -> dict:
        return {"family": self.family, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class LatticeDiscrete:
    """Masses ``k * span`` for ``k`` in ``multipliers`` with probabilities ``probs``.

    Construct through :meth:`normalized` to fold a common divisor of the
    multipliers into the span; the constructor itself insists on gcd 1.
    """

    span: float
    multipliers: tuple[int, ...]
    probs: tuple[float, ...]

    family = "lattice"

    def __post_init__(self):
        object.__setattr__(self, "span", _positive("span", self.span))
        mults = tuple(self.multipliers)
        if not mults or any(isinstance(k, bool) or int(k) != k or k < 1 for k in mults):
            raise ConfigurationError("multipliers must be positive integers")
        mults = tuple(int(k) for k in mults)
        if len(set(mults)) != len(mults):
            raise ConfigurationError("multipliers must be distinct")
        if reduce(math.gcd, mults) != 1:
            raise ConfigurationError(
                f"multipliers {list(mults)} share a common divisor; use LatticeDiscrete.normalized"
            )
        object.__setattr__(self, "multipliers", mults)
        object.__setattr__(self, "probs", _prob_vector("probs", self.probs, len(mults)))

    @classmethod
    def normalized(cls, span: float, multipliers: Sequence[int], probs: Sequence[float]):
        """Return ``(dist, divisor)``, with the gcd of the multipliers moved into the span."""
        try:
            g = reduce(math.gcd, (int(k) for k in multipliers))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError("multipliers must be positive integers") from exc
        if g <= 1:
            return cls(span, tuple(multipliers), tuple(probs)), 1
        return cls(float(span) * g, tuple(int(k) // g for k in multipliers), tuple(probs)), g

    @property
    def support(self) -> np.ndarray:
        return self.span * np.asarray(self.multipliers, dtype=float)

    def mean(self) -> float:
        return self.span * math.fsum(k * p for k, p in zip(self.multipliers, self.probs))

    def survival(self, x: float) -> float:
        return math.fsum(p for k, p in zip(self.multipliers, self.probs) if k * self.span > x)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.support[rng.choice(len(self.probs), size=size, p=self.probs)]

    def mrl(self, x: float) -> float:
        above = [(k * self.span, p) for k, p in zip(self.multipliers, self.probs) if k * self.span > x]
        if not above:
            raise DomainError(f"x={x} is beyond the support of the lattice distribution")
        mass = math.fsum(p for _, p in above)
        return math.fsum(p * (v - max(x, 0.0)) for v, p in above) / mass

    def aging(self) -> AgingClass:
        return AgingClass.NBUE if len(self.multipliers) == 1 else AgingClass.UNKNOWN

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "span": self.span,
            "multipliers": list(self.multipliers),
            "probs": list(self.probs),
        }


DistributionSpec = Union[Exponential, Deterministic, Erlang, HyperExponential, Uniform, LatticeDiscrete]

FAMILIES: dict[str, type] = {
    cls.family: cls
    for cls in (Exponential, Deterministic, Erlang, HyperExponential, Uniform, LatticeDiscrete)
}
_FIELDS = {
    "exponential": {"rate"},
    "deterministic": {"value"},
    "erlang": {"shape", "rate"},
    "hyperexp": {"weights", "rates"},
    "uniform": {"lo", "hi"},
    "lattice": {"span", "multipliers", "probs"},
}


def _numeric_mrl(spec, x: float) -> float:
    x = max(float(x), 0.0)
    s_x = spec.survival(x)
    if s_x <= 0:
        raise DomainError(f"survival probability at x={x} is zero")
    # walk out to a tail cutoff where S(u) < 1e-14, then integrate piecewise
    step = spec.mean()
    upper = x + step
    while spec.survival(upper) >= TAIL_CUTOFF:
        upper += step
        step *= 2
    tail, _ = integrate.quad(spec.survival, x, upper, epsabs=MRL_ABS_TOL * s_x, epsrel=1e-12, limit=200)
    return tail / s_x


def sample(spec: DistributionSpec, rng: np.random.Generator) -> float:
    """Draw one value from ``spec``."""
    return float(spec.draw(rng, 1)[0])


def sample_array(spec: DistributionSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    return spec.draw(rng, size)


def mean(spec: DistributionSpec) -> float:
    return spec.mean()


def mean_residual_life(spec: DistributionSpec, x: float) -> float:
    """E{xi - x | xi > x}.

    Raises DomainError when P{xi > x} = 0.
    """
    if x < 0:
        raise DomainError("x must be non-negative")
    if spec.survival(x) <= 0:
        raise DomainError(f"x={x} is beyond the support of {spec}")
    return spec.mrl(x)


def classify_aging(spec: DistributionSpec) -> AgingClass:
    return spec.aging()


def is_nontrivial(spec: DistributionSpec) -> bool:
    """True when the variable takes at least two distinct values."""
    if isinstance(spec, Deterministic):
        return False
    if isinstance(spec, LatticeDiscrete):
        return len(spec.multipliers) > 1
    return True


def support_min(spec: DistributionSpec) -> float:
    if isinstance(spec, Deterministic):
        return spec.value
    if isinstance(spec, LatticeDiscrete):
        return spec.span * min(spec.multipliers)
    if isinstance(spec, Uniform):
        return spec.lo
    return 0.0


def cdf(spec: DistributionSpec, x: float) -> float:
    """P{xi <= x}."""
    return 1.0 - spec.survival(x)


def from_dict(data: Mapping[str, Any], where: str = "distribution") -> DistributionSpec:
    """Build a spec from ``{"family": ..., **params}``; unknown keys are rejected.

    Lattice multipliers with a common divisor are folded into the span.
    """
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{where}: expected an object, got {type(data).__name__}")
    family = data.get("family")
    if family not in FAMILIES:
        raise ConfigurationError(f"{where}.family: unknown family {family!r}; choose from {sorted(FAMILIES)}")
    params = {k: v for k, v in data.items() if k != "family"}
    expected = _FIELDS[family]
    unknown = set(params) - expected
    if unknown:
        raise ConfigurationError(f"{where}: unknown key(s) {sorted(unknown)} for family {family!r}")
    missing = expected - set(params)
    if missing:
        raise ConfigurationError(f"{where}: missing key(s) {sorted(missing)} for family {family!r}")
    try:
        if family == "lattice":
            spec, g = LatticeDiscrete.normalized(params["span"], params["multipliers"], params["probs"])
            if g > 1:
                warnings.warn(
                    f"{where}: multipliers {list(params['multipliers'])} share divisor {g}; "
                    f"normalized to span {spec.span:g}, multipliers {list(spec.multipliers)}",
                    stacklevel=2,
                )
            return spec
        if family == "hyperexp":
            return HyperExponential(tuple(params["weights"]), tuple(params["rates"]))
        return FAMILIES[family](**params)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{where}: {exc}") from None


def to_dict(spec: DistributionSpec) -> dict:
    return spec.to_dict()


@dataclass
class MrlPoint:
    x: float
    mrl: float | None
    stderr: float | None
    count: int
    conclusive: bool
    nbue_ok: bool | None
    nwue_ok: bool | None


@dataclass
class MrlReport:
    sample_mean: float
    sample_stderr: float
    points: list[MrlPoint]

    @property
    def nbue_consistent(self) -> bool:
        return all(p.nbue_ok for p in self.points if p.conclusive)

    @property
    def nwue_consistent(self) -> bool:
        return all(p.nwue_ok for p in self.points if p.conclusive)


def empirical_mrl_check(samples, grid, min_exceed: int = 100, slack: float = 2.0) -> MrlReport:
    """Empirical mean residual life on ``grid`` with NBUE/NWUE consistency flags.

    A grid point exceeded by fewer than ``min_exceed`` samples is marked
    inconclusive.  Flags compare mrl(x) with the sample mean, allowing
    ``slack`` combined standard errors.
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim != 1 or s.size < 10_000:
        raise ValueError("need at least 10^4 samples")
    if np.any(s <= 0):
        raise ValueError("samples must be strictly positive")
    mu = float(s.mean())
    mu_se = float(s.std(ddof=1) / math.sqrt(s.size))
    points = []
    for x in grid:
        x = float(x)
        tail = s[s > x] - x
        if tail.size < min_exceed:
            points.append(MrlPoint(x, None, None, int(tail.size), False, None, None))
            continue
        m = float(tail.mean())
        se = float(tail.std(ddof=1) / math.sqrt(tail.size))
        band = slack * math.hypot(se, mu_se)
        points.append(MrlPoint(x, m, se, int(tail.size), True, m <= mu + band, m >= mu - band))
    return MrlReport(mu, mu_se, points)
