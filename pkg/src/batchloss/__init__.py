"""Busy-period losses in single-server queues with real-valued batch arrivals and services."""

from .dists import (
    AgingClass,
    ConfigurationError,
    Deterministic,
    DomainError,
    Erlang,
    Exponential,
    HyperExponential,
    LatticeDiscrete,
    Uniform,
    classify_aging,
    empirical_mrl_check,
    mean,
    mean_residual_life,
    sample,
)
from .engine import (
    CycleRecord,
    CycleTable,
    Policy,
    QueueModel,
    RunawayCycleError,
    admit,
    run_cycles,
    simulate_cycle,
)
from .oracle import LatticeModel, exact_expected_loss_per_cycle, service_dp
from .stats import (
    EstimateReport,
    bound_checks,
    regenerative_estimate,
    test_lemma_inequality,
    test_theorem_equality,
    wald_residuals,
)

__version__ = "0.1.0"
