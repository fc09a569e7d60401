import math, time, numpy, pytest
from gsim.stats import ecdf, ks_statistic, ks_pvalue, ks_test, permutation_pvalue, compare_waveforms, tie_fraction
from gsim.drive import step_profile, gain_switch_profile
from gsim.solver import simulate, steady_state
from gsim.errors import ConfigError, EmptySample
from conftest import KICK_AT

FIVE_OF_201_D = 0.024875621890547265
FIVE_OF_201_P = 0.999664050220288

def shifted_pair():
    x = numpy.arange(1, 202, dtype=float)
    y = numpy.r_[numpy.arange(1, 197), numpy.arange(202, 207)].astype(float)
    return x, y

def test_ecdf_single_sample():
    F = ecdf([0.0])
    assert F(-1e-9) == 0.0
    assert F(0.0) == 1.0
    assert F(5.0) == 1.0

def test_ecdf_ties_collapse():
    F = ecdf([2.0] * 7)
    assert list(F.values) == [2.0]
    assert list(F.fractions) == [1.0]

def test_ecdf_counting():
    assert ecdf([1, 2, 3, 4])(2.5) == 0.5

def test_empty_sample():
    with pytest.raises(EmptySample):
        ecdf([])
    with pytest.raises(EmptySample):
        ks_statistic([], [1.0])

def test_statistic_examples():
    rng = numpy.random.default_rng(1)
    x = rng.normal(size=50)
    assert ks_statistic(x, rng.permutation(x)) == 0.0
    assert ks_statistic(x, x.max() + 1 + rng.random(30)) == 1.0
    assert ks_statistic(*shifted_pair()) == pytest.approx(5 / 201, abs=1e-15)

def test_exact_pvalue_reproduced():
    start = time.perf_counter()
    p = ks_pvalue(FIVE_OF_201_D, 201, 201, "exact")
    assert time.perf_counter() - start < 1.0
    assert p == pytest.approx(FIVE_OF_201_P, abs=1e-6)

@pytest.mark.parametrize("n, m", [(10, 10), (100, 100), (100, 80)])
def test_complete_separation(n, m):
    #only the two fully separated orderings reach D = 1
    assert ks_pvalue(1.0, n, m, "exact") == pytest.approx(2 / math.comb(n + m, n), rel=1e-9)

def test_exact_tail_keeps_precision():
    tail = [ks_pvalue(d, 100, 100, "exact") for d in (0.7, 0.8, 0.9, 1.0)]
    assert all(0 < p < 1e-20 for p in tail)
    assert all(b < a for a, b in zip(tail, tail[1:]))

def test_zero_statistic():
    assert ks_pvalue(0.0, 30, 40, "exact") == 1.0
    assert ks_pvalue(0.0, 30, 40, "asymptotic") == 1.0

def test_asymptotic_clamps_near_one():
    p = ks_pvalue(FIVE_OF_201_D, 201, 201, "asymptotic")
    assert p == pytest.approx(1.0, abs=1e-6)
    assert p <= 1.0

def test_auto_method():
    x, y = shifted_pair()
    assert ks_test(x, y).method == "exact"
    assert ks_test(x, y, exact_limit=100).method == "asymptotic"

@pytest.mark.parametrize("d, n, m", [(-0.1, 5, 5), (1.5, 5, 5), (0.5, 0, 5), (0.5, 5, 2.5)])
def test_pvalue_domain(d, n, m):
    with pytest.raises(ConfigError):
        ks_pvalue(d, n, m)

def test_unknown_method():
    with pytest.raises(ConfigError):
        ks_pvalue(0.5, 5, 5, "bootstrap")

def test_symmetry():
    rng = numpy.random.default_rng(2)
    for _ in range(20):
        x, y = rng.normal(size=rng.integers(5, 40)), rng.normal(0.3, 1.2, size=rng.integers(5, 40))
        assert ks_statistic(x, y) == ks_statistic(y, x)
        assert ks_test(x, y).p_value == pytest.approx(ks_test(y, x).p_value, abs=1e-12)

def test_monotone_transform_invariance():
    rng = numpy.random.default_rng(3)
    x, y = rng.normal(size=40), rng.normal(0.5, size=35)
    assert ks_statistic(numpy.exp(x), numpy.exp(y)) == ks_statistic(x, y)
    assert ks_statistic(x ** 3, y ** 3) == ks_statistic(x, y)

@pytest.mark.parametrize("method", ["exact", "asymptotic"])
def test_pvalue_non_increasing(method):
    p = [ks_pvalue(k / 30, 30, 25, method) for k in range(31)]
    assert all(b <= a + 1e-12 for a, b in zip(p, p[1:]))

def test_exact_agrees_with_permutation():
    rng = numpy.random.default_rng(4)
    for n, m in ((12, 15), (20, 20), (30, 22)):
        x, y = rng.normal(size=n), rng.normal(0.4, size=m)
        exact = ks_test(x, y, "exact").p_value
        p, se = permutation_pvalue(x, y, shuffles=100_000, seed=n)
        assert abs(p - exact) <= 3 * se + 1e-3

def test_tie_warning(caplog):
    result = ks_test([1.0, 1.0, 1.0, 2.0], [1.0, 2.0, 2.0, 3.0])
    assert result.tie_warning
    assert "ties" in caplog.text
    assert tie_fraction([1.0, 2.0], [3.0, 4.0]) == 0.0

def test_verdict():
    x, y = shifted_pair()
    result = ks_test(x, y)
    assert result.verdict(0.05) == "indistinguishable"
    assert result.to_dict()["verdict"] == "indistinguishable"
    assert ks_test(numpy.arange(10.0), numpy.arange(10.0) + 100).verdict() == "distinguishable"

def test_waveform_against_itself(gaussian):
    comparison = compare_waveforms(gaussian(), gaussian())
    assert comparison.result.d_statistic == 0.0
    assert comparison.result.p_value == 1.0
    assert comparison.result.n == comparison.result.m == 201
    table = comparison.ecdf_table()
    assert numpy.array_equal(table["F_a"], table["F_b"])

def test_tuned_pair_indistinguishable(kick_run):
    start = time.perf_counter()
    signal = kick_run().photon_waveform(KICK_AT - 0.1e-9)
    decoy = kick_run(fraction=0.001).photon_waveform(KICK_AT - 0.1e-9)
    result = compare_waveforms(signal, decoy).result
    assert result.p_value > 0.05
    assert time.perf_counter() - start < 30

def test_untuned_pair_distinguishable(params):
    ringing = simulate(params, step_profile(0.0, 100e-3, 0.0, 1.5e-9, 3e-9), 20e-15, 3e-9, stride=50)
    bias = 13e-3
    single = simulate(params, gain_switch_profile(bias, 10.0, 0.5e-9, 2e-12, 3e-9), 20e-15, 3e-9,
                      steady_state(params, bias), stride=50)
    result = compare_waveforms(ringing.photon_waveform(), single.photon_waveform()).result
    assert result.p_value < 0.05
    assert result.verdict() == "distinguishable"
