from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from kernelcur import metrics as M


def test_speedup_examples():
    assert M.speedup(2.0, 1.0, True) == 2.0
    assert M.speedup(2.0, 1.0, False) == 0.0
    assert M.speedup(1.5, 3.0, True) == 0.5


def test_speedup_rejects_nonpositive_times():
    with pytest.raises(ValueError):
        M.speedup(0.0, 1.0, True)
    with pytest.raises(ValueError):
        M.speedup(1.0, -2.0, False)


def test_fast_p_examples():
    assert M.fast_p([2.0, 0.5, 0.0, 1.2], 1.0) == 0.5
    assert M.fast_p([1.0, 1.0], 1.0) == 0.0  # strict inequality at the boundary
    speedups = [1.5] * 17 + [1.0] * 83
    assert M.fast_p(speedups, 1.0) == pytest.approx(0.17)


def test_fast_p_empty_rejected():
    with pytest.raises(ValueError):
        M.fast_p([], 1.0)


def test_exec_rate_examples():
    assert M.exec_rate(["correct", "incorrect", "correct", "compile_error"]) == 0.5
    assert M.exec_rate(["correct"] * 4) == 1.0
    statuses = ["correct"] * 24136 + ["incorrect"] * (90810 - 24136)
    assert M.exec_rate(statuses) == pytest.approx(24136 / 90810, abs=1e-12)
    with pytest.raises(ValueError):
        M.exec_rate([])


def test_pass_at_k_exec_examples():
    statuses = ["incorrect"] * 7 + ["correct"] + ["incorrect"] * 2
    assert M.pass_at_k_exec(statuses, 10) is True
    assert M.pass_at_k_exec(["incorrect"] * 10, 10) is False
    assert M.pass_at_k_exec(["correct", "incorrect"], 1) is True
    with pytest.raises(ValueError):
        M.pass_at_k_exec(["correct"], 2)


def test_pass_at_k_fast1_examples():
    assert M.pass_at_k_fast1([0.0, 0.9, 1.3], 3) is True
    assert M.pass_at_k_fast1([1.0, 1.0], 2) is False
    assert M.pass_at_k_fast1([2.0], 1) is True


def test_arl_examples():
    assert M.arl([[1000, 2000], [3000, 4000]]) == 2500.0
    assert M.arl([[500] * 4] * 3) == 500.0
    with pytest.raises(ValueError):
        M.arl([])
    with pytest.raises(ValueError):
        M.arl([[1, 2], [3]])


def test_geomean_examples():
    assert M.geomean_speedup([2.0, 8.0]) == pytest.approx(4.0, abs=1e-12)
    assert M.geomean_speedup([4.0, 4.0, 4.0]) == pytest.approx(4.0, abs=1e-12)
    # zeros excluded by default: hand-filtered sqrt(2 * 8) = 4
    assert M.geomean_speedup([2.0, 8.0, 0.0], include_zeros=False) == pytest.approx(4.0, abs=1e-12)
    assert M.geomean_speedup([2.0, 8.0, 0.0], include_zeros=True) == 0.0


def test_geomean_errors():
    with pytest.raises(ValueError):
        M.geomean_speedup([])
    with pytest.raises(ValueError):
        M.geomean_speedup([0.0, 0.0], include_zeros=False)
    with pytest.raises(ValueError):
        M.geomean_speedup([-1.0])


def test_metric_config_validation():
    M.MetricConfig()
    with pytest.raises(ValueError):
        M.MetricConfig(p_thresholds=[2.0, 1.0])
    with pytest.raises(ValueError):
        M.MetricConfig(p_thresholds=[0.0])
    with pytest.raises(ValueError):
        M.MetricConfig(k=0)


speedup_lists = st.lists(
    st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=100.0)), min_size=1, max_size=30
)


@given(speedup_lists, st.floats(min_value=1e-3, max_value=50.0), st.floats(min_value=1e-3, max_value=50.0))
def test_fast_p_non_increasing_in_p(speedups, p1, p2):
    lo, hi = min(p1, p2), max(p1, p2)
    assert M.fast_p(speedups, lo) >= M.fast_p(speedups, hi)


@given(speedup_lists)
def test_fast_p_limit_equals_positive_fraction(speedups):
    tiny = 1e-9
    positive_fraction = sum(1 for s in speedups if s > 0) / len(speedups)
    assert M.fast_p(speedups, tiny) == positive_fraction


@given(st.lists(st.sampled_from(["correct", "incorrect", "timeout"]), min_size=1, max_size=12), st.data())
def test_pass_at_k_monotone(statuses, data):
    k1 = data.draw(st.integers(min_value=1, max_value=len(statuses)))
    k2 = data.draw(st.integers(min_value=k1, max_value=len(statuses)))
    assert M.pass_at_k_exec(statuses, k2) >= M.pass_at_k_exec(statuses, k1)


@given(
    st.lists(st.lists(st.integers(min_value=0, max_value=30000), min_size=3, max_size=3), min_size=1, max_size=8),
    st.randoms(use_true_random=False),
)
def test_arl_permutation_invariant(matrix, rng):
    base = M.arl(matrix)
    rows = [row[:] for row in matrix]
    rng.shuffle(rows)
    for row in rows:
        rng.shuffle(row)
    assert M.arl(rows) == pytest.approx(base, abs=1e-9)


@given(st.floats(min_value=1e-6, max_value=1e6))
def test_speedup_identity(t):
    assert M.speedup(t, t, True) == 1.0


@given(
    st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=20),
    st.floats(min_value=1e-3, max_value=1e3),
)
def test_geomean_scale_equivariant(speedups, c):
    base = M.geomean_speedup(speedups)
    scaled = M.geomean_speedup([c * s for s in speedups])
    assert scaled == pytest.approx(c * base, rel=1e-9)


def test_geomean_matches_log_space_for_large_values():
    # values whose plain product would overflow a double
    values = [1e200, 1e250, 1e150]
    expected = math.exp(sum(math.log(v) for v in values) / 3)
    assert M.geomean_speedup(values) == pytest.approx(expected, rel=1e-12)
