"""Busy-cycle simulation of the single-server GI^X/GI^Y/1/n loss queue.

The system holds a real-valued mass of at most ``capacity``.  The mass of the
service in progress is committed at service start (``min(Y, workload)``),
keeps counting toward capacity while it is served, and leaves at completion.
A cycle starts with an arrival to an empty system and ends just before the
next arrival that finds the system empty.
"""

from __future__ import annotations

import enum
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Callable, Iterator, Optional

import numpy as np

from .dists import ConfigurationError, DistributionSpec, Deterministic

MAX_EVENTS = 10**8
BLOCK_SIZE = 4096
CHUNK = 2048


class Policy(str, enum.Enum):
    FULL = "full"
    PARTIAL = "partial"


class RunawayCycleError(RuntimeError):
    """A single cycle exceeded the event guard."""

    def __init__(self, message: str, stream_index: Optional[int] = None):
        super().__init__(message)
        self.stream_index = stream_index


@dataclass(frozen=True)
class QueueModel:
    interarrival: DistributionSpec
    service_time: DistributionSpec
    arrival_batch: DistributionSpec
    service_batch: DistributionSpec
    capacity: float
    policy: Policy = Policy.FULL

    def __post_init__(self):
        cap = float(self.capacity)
        if not math.isfinite(cap) or cap <= 0:
            raise ConfigurationError(f"capacity must be a positive real number, got {self.capacity!r}")
        object.__setattr__(self, "capacity", cap)
        try:
            object.__setattr__(self, "policy", Policy(self.policy))
        except ValueError:
            raise ConfigurationError(f"policy must be 'full' or 'partial', got {self.policy!r}") from None

    @property
    def a(self) -> float:
        return self.interarrival.mean()

    @property
    def b(self) -> float:
        return self.service_time.mean()

    @property
    def mean_x(self) -> float:
        return self.arrival_batch.mean()

    @property
    def mean_y(self) -> float:
        return self.service_batch.mean()

    def with_capacity(self, capacity: float) -> "QueueModel":
        return QueueModel(self.interarrival, self.service_time, self.arrival_batch,
                          self.service_batch, capacity, self.policy)

    def with_policy(self, policy) -> "QueueModel":
        return QueueModel(self.interarrival, self.service_time, self.arrival_batch,
                          self.service_batch, self.capacity, policy)


@dataclass(frozen=True)
class CycleRecord:
    n_arrivals: int
    n_services: int
    mass_arrived: float
    mass_served: float
    mass_lost: float
    busy_length: float
    idle_length: float
    cycle_length: float
    sum_interarrival: float
    sum_service: float
    degenerate: bool


RECORD_FIELDS = tuple(f.name for f in fields(CycleRecord))
_DTYPES = {"n_arrivals": np.int64, "n_services": np.int64, "degenerate": bool}


class CycleTable:
    """Column store of cycle records, in cycle order."""

    def __init__(self, columns: dict[str, np.ndarray]):
        lengths = {len(v) for v in columns.values()}
        if set(columns) != set(RECORD_FIELDS) or len(lengths) != 1:
            raise ValueError("CycleTable needs equally long columns for every record field")
        self.columns = {k: np.asarray(columns[k], dtype=_DTYPES.get(k, float)) for k in RECORD_FIELDS}

    @classmethod
    def from_rows(cls, rows) -> "CycleTable":
        rows = [astuple(r) if isinstance(r, CycleRecord) else tuple(r) for r in rows]
        cols = list(zip(*rows)) if rows else [()] * len(RECORD_FIELDS)
        return cls({name: np.array(col, dtype=_DTYPES.get(name, float)) for name, col in zip(RECORD_FIELDS, cols)})

    @classmethod
    def concat(cls, tables) -> "CycleTable":
        tables = list(tables)
        return cls({k: np.concatenate([t.columns[k] for t in tables]) for k in RECORD_FIELDS})

    def __len__(self) -> int:
        return len(self.columns["mass_lost"])

    def __getitem__(self, i) -> CycleRecord:
        return CycleRecord(*(self.columns[k][i].item() for k in RECORD_FIELDS))

    def __iter__(self) -> Iterator[CycleRecord]:
        return (self[i] for i in range(len(self)))

    def __getattr__(self, name):
        try:
            return self.__dict__["columns"][name]
        except KeyError:
            raise AttributeError(name) from None

    def equals(self, other: "CycleTable") -> bool:
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in RECORD_FIELDS)


def admit(total_mass: float, batch: float, capacity: float, policy) -> tuple[float, float]:
    """Split an arriving batch into (accepted, lost) mass."""
    if Policy(policy) is Policy.FULL:
        if total_mass + batch <= capacity:
            return batch, 0.0
        return 0.0, batch
    accepted = min(batch, capacity - total_mass)
    return accepted, batch - accepted


def _stream(spec: DistributionSpec, rng: np.random.Generator) -> Callable[[], float]:
    if isinstance(spec, Deterministic):
        return itertools.repeat(spec.value).__next__
    chunks = iter(lambda: spec.draw(rng, CHUNK).tolist(), None)
    return itertools.chain.from_iterable(chunks).__next__


class ControlStreams:
    """The four i.i.d. control sequences (tau, X, chi, Y) drawn from one generator."""

    def __init__(self, model: QueueModel, rng: np.random.Generator):
        self.next_tau = _stream(model.interarrival, rng)
        self.next_x = _stream(model.arrival_batch, rng)
        self.next_chi = _stream(model.service_time, rng)
        self.next_y = _stream(model.service_batch, rng)


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Independent generator for cycle block ``block`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _cycle(model: QueueModel, streams: ControlStreams, max_events: int, trace, debug: bool) -> tuple:
    n = model.capacity
    partial = model.policy is Policy.PARTIAL
    next_tau, next_x = streams.next_tau, streams.next_x
    next_chi, next_y = streams.next_chi, streams.next_y
    eps = 1e-12 * n

    x = next_x()
    tau = next_tau()
    next_arr = sum_inter = tau
    if x <= n:
        mass = x
    else:
        mass = n if partial else 0.0
    m_lost = x - mass
    if trace is not None:
        trace(0.0, "arrival", 0.0, mass, m_lost)
    if mass == 0.0:
        if trace is not None:
            trace(0.0, "degenerate", 0.0, 0.0, 0.0)
        return (1, 0, x, 0.0, x, 0.0, tau, tau, sum_inter, 0.0, True)

    n_arr = 1
    m_arr = x
    n_serv = 0
    m_served = 0.0
    y = next_y()
    committed = y if y < mass else mass
    done = sum_service = next_chi()
    if trace is not None:
        trace(0.0, "service_start", mass, mass, committed)
    events = 2
    while True:
        events += 1
        if events > max_events:
            raise RunawayCycleError(f"cycle exceeded {max_events} events")
        # completions win ties with arrivals
        if done <= next_arr:
            before = mass
            rest = mass - committed
            if rest <= eps:
                committed = mass
                rest = 0.0
            mass = rest
            n_serv += 1
            m_served += committed
            if trace is not None:
                trace(done, "completion", before, mass, 0.0)
            if mass > 0.0:
                y = next_y()
                committed = y if y < mass else mass
                chi = next_chi()
                if trace is not None:
                    trace(done, "service_start", mass, mass, committed)
                done += chi
                sum_service += chi
            else:
                idle = next_arr - done
                if trace is not None:
                    trace(next_arr, "cycle_end", 0.0, 0.0, 0.0)
                return (n_arr, n_serv, m_arr, m_served, m_lost, done, idle,
                        done + idle, sum_inter, sum_service, False)
        else:
            x = next_x()
            n_arr += 1
            m_arr += x
            before = mass
            free = n - mass
            if x <= free:
                mass += x
                lost = 0.0
            elif partial:
                mass = n
                lost = x - free
            else:
                lost = x
            m_lost += lost
            if debug and not (0.0 <= mass <= n):
                raise AssertionError(f"total mass {mass} outside [0, {n}]")
            if trace is not None:
                trace(next_arr, "arrival", before, mass, lost)
            tau = next_tau()
            next_arr += tau
            sum_inter += tau


def simulate_cycle(model: QueueModel, rng, *, max_events: int = MAX_EVENTS,
                   trace: Optional[Callable] = None, debug: bool = False) -> CycleRecord:
    """Simulate one busy cycle starting at an arrival to an empty system.

    ``rng`` is a ``numpy.random.Generator`` or a :class:`ControlStreams`
    already bound to ``model``; reuse the same ``ControlStreams`` to simulate
    consecutive cycles from one stream.  ``trace`` receives
    ``(time, kind, mass_before, mass_after, lost)`` for every event.
    """
    streams = rng if isinstance(rng, ControlStreams) else ControlStreams(model, rng)
    return CycleRecord(*_cycle(model, streams, max_events, trace, debug))


def tsv_tracer(out) -> Callable:
    """Trace callback writing tab-separated event lines to ``out``."""
    def write(t, kind, before, after, lost):
        out.write(f"{t!r}\t{kind}\t{before!r}\t{after!r}\t{lost!r}\n")
    return write


def _run_block(args) -> CycleTable:
    model, seed, block, count, max_events = args
    streams = ControlStreams(model, block_generator(seed, block))
    rows = []
    try:
        for _ in range(count):
            rows.append(_cycle(model, streams, max_events, None, False))
    except RunawayCycleError as exc:
        raise RunawayCycleError(f"{exc} (stream index {block})", stream_index=block) from None
    return CycleTable.from_rows(rows)


def run_cycles(model: QueueModel, num_cycles: int, seed: int = 0, workers: int = 1, *,
               block_size: int = BLOCK_SIZE, max_events: int = MAX_EVENTS) -> CycleTable:
    """Simulate ``num_cycles`` i.i.d. busy cycles.

    Cycles are generated in fixed blocks of ``block_size``; block ``k`` uses
    stream index ``k`` of ``seed``.  The result therefore does not depend on
    ``workers``.
    """
    if num_cycles < 1:
        raise ValueError("num_cycles must be >= 1")
    nblocks = -(-num_cycles // block_size)
    jobs = [(model, seed, k, min(block_size, num_cycles - k * block_size), max_events)
            for k in range(nblocks)]
    if workers <= 1 or nblocks == 1:
        tables = [_run_block(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(_run_block, jobs))
    return CycleTable.concat(tables)


def check_record_identities(table: CycleTable, rtol: float = 1e-9) -> dict[str, int]:
    """Count cycles violating each exact per-cycle identity (all zeros when sound)."""
    c = table.columns

    def bad(lhs, rhs):
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1.0)
        return int(np.count_nonzero(np.abs(lhs - rhs) > rtol * scale))

    deg = c["degenerate"]
    return {
        "mass_balance": bad(c["mass_arrived"], c["mass_served"] + c["mass_lost"]),
        "cycle_split": bad(c["cycle_length"], c["busy_length"] + c["idle_length"]),
        "cycle_interarrival": bad(c["cycle_length"], c["sum_interarrival"]),
        "busy_service": bad(c["busy_length"], c["sum_service"]),
        "degenerate": int(np.count_nonzero(
            deg & ((c["n_services"] != 0) | (c["mass_served"] != 0) | (c["busy_length"] != 0)
                   | (c["mass_lost"] != c["mass_arrived"])))),
    }
