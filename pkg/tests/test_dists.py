import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batchloss import dists
from batchloss.dists import (
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
    sample_array,
)

ALL_SPECS = [
    Exponential(2.0),
    Deterministic(2.0),
    Erlang(2, 4.0),
    Erlang(1, 3.0),
    HyperExponential((0.5, 0.5), (0.5, 2.0)),
    HyperExponential((0.9, 0.1), (2.0, 0.25)),
    Uniform(0.0, 3.0),
    Uniform(1.0, 2.0),
    LatticeDiscrete(1.0, (1, 3), (0.5, 0.5)),
    LatticeDiscrete(0.5, (1,), (1.0,)),
]


def rng(seed=0):
    return np.random.default_rng(seed)


def test_deterministic_sample_is_constant():
    g = rng()
    assert all(sample(Deterministic(2.0), g) == 2.0 for _ in range(10))


def test_lattice_sample_frequencies():
    spec = LatticeDiscrete(1.0, (1, 3), (0.5, 0.5))
    s = sample_array(spec, rng(1), 100_000)
    assert set(np.unique(s)) == {1.0, 3.0}
    freq = np.mean(s == 1.0)
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / s.size)


def test_exponential_sample_mean():
    s = sample_array(Exponential(2.0), rng(2), 1_000_000)
    assert abs(s.mean() - 0.5) <= 3 * s.std() / math.sqrt(s.size)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
def test_sample_mean_within_four_se(spec):
    s = sample_array(spec, rng(3), 1_000_000)
    se = s.std() / math.sqrt(s.size)
    assert abs(s.mean() - mean(spec)) <= 4 * se + 1e-12


@pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
def test_samples_positive_and_reproducible(spec):
    a = sample_array(spec, rng(7), 5000)
    b = sample_array(spec, rng(7), 5000)
    assert np.all(a > 0)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize(
    "spec, expected",
    [
        (Erlang(2, 4.0), 0.5),
        (HyperExponential((0.5, 0.5), (0.5, 2.0)), 1.25),
        (LatticeDiscrete(1.0, (1, 3), (0.5, 0.5)), 2.0),
        (Uniform(1.0, 3.0), 2.0),
        (Exponential(4.0), 0.25),
    ],
)
def test_mean(spec, expected):
    assert mean(spec) == pytest.approx(expected, abs=1e-15)


def test_mrl_examples():
    assert mean_residual_life(Exponential(1.0), 7.3) == pytest.approx(1.0)
    assert mean_residual_life(Deterministic(5.0), 2.0) == pytest.approx(3.0)


# reference values from mpmath quadrature of the survival function at 30 digits
@pytest.mark.parametrize(
    "x, expected",
    [(0.0, 1.25), (2.0, 1.92886119023364982868), (6.0, 1.99981490813602065240), (10.0, 1.99999954114665961156)],
)
def test_hyperexp_mrl_against_quadrature(x, expected):
    spec = HyperExponential((0.5, 0.5), (0.5, 2.0))
    assert mean_residual_life(spec, x) == pytest.approx(expected, abs=1e-12)


def test_hyperexp_mrl_increases_towards_slowest_rate():
    spec = HyperExponential((0.5, 0.5), (0.5, 2.0))
    xs = np.linspace(0, 40, 81)
    vals = [mean_residual_life(spec, x) for x in xs]
    assert np.all(np.diff(vals) >= -1e-12)
    assert 1.25 < mean_residual_life(spec, 10.0) <= 2.0
    assert vals[-1] == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("x, expected", [(0.0, 0.5), (0.5, 1 / 3), (1.0, 0.3), (2.0, 0.277777777777777778)])
def test_erlang_numeric_mrl(x, expected):
    assert mean_residual_life(Erlang(2, 4.0), x) == pytest.approx(expected, abs=1e-9)


def test_uniform_and_lattice_mrl():
    assert mean_residual_life(Uniform(1.0, 3.0), 0.5) == pytest.approx(1.5)
    assert mean_residual_life(Uniform(1.0, 3.0), 2.0) == pytest.approx(0.5)
    lat = LatticeDiscrete(1.0, (1, 3), (0.5, 0.5))
    assert mean_residual_life(lat, 0.5) == pytest.approx(1.5)
    assert mean_residual_life(lat, 2.0) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "spec, x",
    [(Deterministic(5.0), 5.0), (Uniform(0.0, 1.0), 1.5), (LatticeDiscrete(1.0, (1, 3), (0.5, 0.5)), 3.0)],
)
def test_mrl_beyond_support(spec, x):
    with pytest.raises(DomainError):
        mean_residual_life(spec, x)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
def test_mrl_at_zero_is_mean(spec):
    assert mean_residual_life(spec, 0.0) == pytest.approx(mean(spec), abs=1e-9)


@pytest.mark.parametrize(
    "spec, expected",
    [
        (Exponential(3.0), AgingClass.BOTH),
        (Deterministic(1.0), AgingClass.NBUE),
        (Uniform(0.0, 2.0), AgingClass.NBUE),
        (Erlang(3, 1.0), AgingClass.NBUE),
        (Erlang(1, 1.0), AgingClass.BOTH),
        (HyperExponential((0.9, 0.1), (2.0, 0.25)), AgingClass.NWUE),
        (HyperExponential((0.5, 0.5), (1.0, 1.0)), AgingClass.BOTH),
        (LatticeDiscrete(1.0, (1, 3), (0.5, 0.5)), AgingClass.UNKNOWN),
        (LatticeDiscrete(2.0, (1,), (1.0,)), AgingClass.NBUE),
    ],
)
def test_classify_aging(spec, expected):
    assert classify_aging(spec) is expected


def _grid_consistent(spec):
    mu = mean(spec)
    cls = classify_aging(spec)
    for q in np.arange(0, 5.25, 0.25):
        x = q * mu
        if spec.survival(x) <= 0:
            continue
        m = mean_residual_life(spec, x)
        if cls is AgingClass.NBUE:
            assert m <= mu + 1e-9, (spec, x, m)
        elif cls is AgingClass.NWUE:
            assert m >= mu - 1e-9, (spec, x, m)
        elif cls is AgingClass.BOTH:
            assert m == pytest.approx(mu, abs=1e-9)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=repr)
def test_classification_agrees_with_mrl_grid(spec):
    _grid_consistent(spec)


def test_nwue_example_on_fine_grid():
    spec = HyperExponential((0.9, 0.1), (2.0, 0.25))
    for x in np.arange(0, 20.05, 0.1):
        assert mean_residual_life(spec, x) >= mean(spec) - 1e-12


@given(
    w=st.floats(0.01, 0.99),
    r1=st.floats(0.1, 10.0),
    r2=st.floats(0.1, 10.0),
)
@settings(max_examples=50, deadline=None)
def test_hyperexp_classification_property(w, r1, r2):
    spec = HyperExponential((w, 1 - w), (r1, r2))
    _grid_consistent(spec)


@given(shape=st.integers(1, 6), rate=st.floats(0.2, 5.0))
@settings(max_examples=25, deadline=None)
def test_erlang_classification_property(shape, rate):
    _grid_consistent(Erlang(shape, rate))


@pytest.mark.parametrize(
    "build",
    [
        lambda: Exponential(-1.0),
        lambda: Exponential(0.0),
        lambda: Deterministic(float("nan")),
        lambda: Erlang(1.5, 1.0),
        lambda: Erlang(0, 1.0),
        lambda: HyperExponential((0.5, 0.4), (1.0, 2.0)),
        lambda: HyperExponential((0.5, 0.5), (1.0,)),
        lambda: Uniform(2.0, 1.0),
        lambda: Uniform(-1.0, 1.0),
        lambda: LatticeDiscrete(1.0, (2, 4), (0.5, 0.5)),
        lambda: LatticeDiscrete(0.0, (1,), (1.0,)),
        lambda: LatticeDiscrete(1.0, (0, 1), (0.5, 0.5)),
    ],
)
def test_invalid_specs_rejected(build):
    with pytest.raises(ConfigurationError):
        build()


def test_lattice_normalization():
    spec, g = LatticeDiscrete.normalized(1.0, [2, 4], [0.5, 0.5])
    assert g == 2
    assert spec.span == 2.0 and spec.multipliers == (1, 2)


def test_dict_round_trip():
    for spec in ALL_SPECS:
        assert dists.from_dict(spec.to_dict()) == spec


def test_from_dict_errors_name_the_field():
    with pytest.raises(ConfigurationError, match="rate"):
        dists.from_dict({"family": "exponential", "rate": -2})
    with pytest.raises(ConfigurationError, match="unknown key"):
        dists.from_dict({"family": "exponential", "rate": 2, "shape": 1})
    with pytest.raises(ConfigurationError, match="family"):
        dists.from_dict({"family": "pareto", "alpha": 2})


def test_from_dict_lattice_gcd_warns():
    with pytest.warns(UserWarning, match="normalized"):
        spec = dists.from_dict({"family": "lattice", "span": 1, "multipliers": [2, 4], "probs": [0.5, 0.5]})
    assert spec.span == 2.0 and spec.multipliers == (1, 2)


class TestEmpiricalMrl:
    def test_exponential(self):
        s = sample_array(Exponential(1.0), rng(11), 1_000_000)
        rep = empirical_mrl_check(s, [0, 1, 2])
        for p in rep.points:
            assert abs(p.mrl - 1.0) <= 2 * p.stderr
            assert p.nbue_ok and p.nwue_ok

    def test_deterministic_exact(self):
        s = sample_array(Deterministic(5.0), rng(), 1_000_000)
        rep = empirical_mrl_check(s, [0, 2])
        assert [p.mrl for p in rep.points] == [5.0, 3.0]
        assert rep.nbue_consistent

    def test_hyperexp_pattern_is_nwue(self):
        spec = HyperExponential((0.5, 0.5), (0.5, 2.0))
        s = sample_array(spec, rng(12), 1_000_000)
        rep = empirical_mrl_check(s, [0, 2, 6])
        vals = [p.mrl for p in rep.points]
        assert vals[0] < vals[1] < vals[2] + 3 * rep.points[2].stderr
        assert rep.nwue_consistent
        assert not rep.points[2].nbue_ok

    def test_sparse_tail_is_inconclusive(self):
        s = sample_array(Exponential(1.0), rng(), 10_000)
        rep = empirical_mrl_check(s, [0, 20])
        assert rep.points[0].conclusive
        assert not rep.points[1].conclusive and rep.points[1].mrl is None

    def test_needs_enough_samples(self):
        with pytest.raises(ValueError):
            empirical_mrl_check(np.ones(100), [0])
