import numpy as np
import pytest

from batchloss.dists import ConfigurationError, Deterministic as Det, Exponential, HyperExponential, LatticeDiscrete, Uniform
from batchloss.engine import CycleRecord, CycleTable, QueueModel, run_cycles
from batchloss.stats import (
    CSV_COLUMNS,
    EstimationError,
    bound_checks,
    estimate_report,
    lemma_preconditions,
    regenerative_estimate,
    test_lemma_inequality as lemma_test,
    test_theorem_equality as theorem_test,
    wald_residuals,
)

DET = QueueModel(Det(2.0), Det(1.0), Det(1.0), Det(1.0), 1.0)
MD1_5 = QueueModel(Exponential(1.0), Det(1.0), Det(1.0), Det(1.0), 5.0)
LEMMA = QueueModel(HyperExponential((0.9, 0.1), (2.0, 0.25)), Det(1.0), Det(1.0),
                   LatticeDiscrete(0.5, (1, 3), (0.5, 0.5)), 2.0)


@pytest.fixture(scope="module")
def det_records():
    return run_cycles(DET, 100, seed=0)


@pytest.fixture(scope="module")
def md1_records():
    return run_cycles(MD1_5, 100_000, seed=17)


@pytest.fixture(scope="module")
def lemma_records():
    return run_cycles(LEMMA, 100_000, seed=18)


def test_zero_variance_estimate():
    rows = [CycleRecord(1, 1, 1.0, 1.0, 0.0, 1.0, 1.0, 2.0, 2.0, 1.0, False)] * 100
    assert regenerative_estimate(CycleTable.from_rows(rows), "M_L") == (0.0, 0.0, 0.0)


def test_deterministic_no_loss(det_records):
    assert regenerative_estimate(det_records, "mass_lost", 0.95) == (0.0, 0.0, 0.0)


def test_estimate_needs_two_records():
    one = CycleTable.from_rows([CycleRecord(1, 1, 1.0, 1.0, 0.0, 1.0, 1.0, 2.0, 2.0, 1.0, False)])
    with pytest.raises(EstimationError):
        regenerative_estimate(one, "M_L")
    with pytest.raises(ValueError):
        regenerative_estimate(one, "M_L", level=1.0)


def test_ci_covers_one_for_md1(md1_records):
    point, lo, hi = regenerative_estimate(md1_records, "M_L")
    assert lo < point < hi
    assert lo <= 1.0 <= hi


def test_wald_residuals_deterministic(det_records):
    r1, r2 = wald_residuals(det_records, DET)
    assert (r1.value, r2.value) == (0.0, 0.0)
    assert (r1.se, r2.se) == (0.0, 0.0)


def test_wald_residuals_poisson(md1_records):
    r1, r2 = wald_residuals(md1_records, MD1_5)
    assert r1.within(3) and r2.within(3)


def test_wald_and_eq3_for_nwue_arrivals(lemma_records):
    r1, r2 = wald_residuals(lemma_records, LEMMA)
    assert r1.within(3)
    # the time identity holds for any renewal arrivals
    assert r2.within(3)
    bc = bound_checks(lemma_records, LEMMA)
    assert bc.eq3_ok and bc.idle_ok


def test_bound_checks_equality_case(md1_records):
    bc = bound_checks(md1_records, MD1_5)
    assert bc.idle_ok
    assert abs(bc.idle_gap) <= 3 * bc.idle_se
    # Y = d and every service finds at least d: no gap at all
    assert bc.eq4_gap == 0.0 and bc.eq4_ok and not bc.eq4_strict


def test_bound_checks_strict_eq4(lemma_records):
    bc = bound_checks(lemma_records, LEMMA)
    assert bc.eq4_ok and bc.eq4_strict


def test_idle_flag_not_applicable_for_nbue_arrivals():
    m = QueueModel(Uniform(0.5, 1.5), Det(1.0), Det(1.0), Det(1.0), 2.0)
    assert bound_checks(run_cycles(m, 1000, seed=1), m).idle_ok is None


def test_theorem_verdicts(det_records, md1_records):
    assert theorem_test(det_records, 1.0) == "violated-low"
    assert theorem_test(det_records, -1.0) == "violated-high"
    assert theorem_test(md1_records, 1.0, 0.95) == "consistent"


def test_lemma_preconditions_named():
    with pytest.raises(ConfigurationError, match="Y_1 must be nontrivial"):
        lemma_test(run_cycles(MD1_5, 100, seed=0), MD1_5)
    sub = QueueModel(Exponential(0.5), Det(1.0), Det(1.0), LatticeDiscrete(0.5, (1, 3), (0.5, 0.5)), 2.0)
    assert lemma_preconditions(sub) == ["E X_1 / a must be >= E Y_1 / b"]
    big = QueueModel(Exponential(2.0), Det(1.0), Det(3.0), LatticeDiscrete(0.5, (1, 3), (0.5, 0.5)), 2.0)
    assert lemma_preconditions(big) == ["P{X_1 <= n} must be positive"]
    nbue = QueueModel(Uniform(0.1, 0.5), Det(1.0), Det(1.0), LatticeDiscrete(0.5, (1, 3), (0.5, 0.5)), 2.0)
    assert lemma_preconditions(nbue) == ["interarrival distribution must be NWUE"]


def test_lemma_power(lemma_records):
    assert lemma_test(lemma_records, LEMMA, alpha=0.01) == "strictly-greater"
    assert lemma_test(run_cycles(LEMMA, 100, seed=4), LEMMA, alpha=0.01, expected=5.0) == "inconclusive"


def test_ci_halfwidth_shrinks_by_sqrt2():
    m = QueueModel(Exponential(0.5), Det(1.0), LatticeDiscrete(1.0, (1, 3), (0.5, 0.5)), Det(1.0), 4.0)
    small = run_cycles(m, 50_000, seed=21)
    large = run_cycles(m, 100_000, seed=22)
    for field in ("N_A", "N_S", "M_A", "M_S", "M_L", "I", "busy_length"):
        p1, lo1, hi1 = regenerative_estimate(small, field)
        p2, lo2, hi2 = regenerative_estimate(large, field)
        ratio = (hi1 - lo1) / (hi2 - lo2)
        assert ratio == pytest.approx(np.sqrt(2), rel=0.2), field


def test_mass_identity_on_means(lemma_records):
    ma = regenerative_estimate(lemma_records, "M_A")[0]
    ms = regenerative_estimate(lemma_records, "M_S")[0]
    ml = regenerative_estimate(lemma_records, "M_L")[0]
    assert ma - ms - ml == pytest.approx(0.0, abs=1e-9 * ma)


def test_report_csv_row_columns(md1_records):
    rep = estimate_report(md1_records, MD1_5, seed=17)
    row = rep.csv_row()
    assert tuple(row) == CSV_COLUMNS
    assert row["cycles"] == 100_000 and row["a"] == 1.0 and row["ex1"] == 1.0
    text = rep.to_text()
    assert "E M_L" in text and "r1" in text
