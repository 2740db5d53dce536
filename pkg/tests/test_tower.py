import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given, settings, strategies as st

from rieszlab import tower


def test_pure_doubling(doubling_tower):
    _, levels = doubling_tower
    assert tower.heights(levels).tolist() == [1.0, 2.0, 4.0]


def test_height_recursion_random(random_tower):
    _, levels = random_tower
    for lv in levels:
        expected = lv.p * lv.h + lv.spacers.sum()
        assert abs(lv.h_next - expected) <= 1e-12 * expected


def test_explicit_row_length_mismatch():
    spec = tower.CuttingSpec(p=(3,), family=tower.Explicit(((0.0, 0.0),)))
    with pytest.raises(tower.TowerError, match="3"):
        tower.build_tower(spec, 1)


def test_negative_spacer_reports_position():
    spec = tower.CuttingSpec(p=(3,), family=tower.Explicit(((0.0, -0.5, 0.0),)))
    with pytest.raises(tower.TowerError, match=r"stage 0, column 2"):
        tower.build_tower(spec, 1)


def test_ornstein_heights_seed_independent():
    for key in [("a",), ("b",), (17,)]:
        spec = tower.CuttingSpec(p=(3, 4), family=tower.Ornstein(t=(1.0, 2.5), key=key))
        levels = tower.build_tower(spec, 2)
        # h_{k+1} = p_k (h_k + t_k) + t_k for the default last offset
        assert levels[0].h == 1.0
        assert levels[0].h_next == 3 * (1.0 + 1.0) + 1.0
        assert levels[1].h_next == 4 * (7.0 + 2.5) + 2.5


def test_ornstein_spacer_range():
    spec = tower.CuttingSpec(p=(64,), family=tower.Ornstein(t=(3.0,), key=("r",)))
    lv = tower.build_tower(spec, 1)[0]
    assert np.all(lv.spacers >= 0)
    assert np.all(lv.spacers <= 2 * 3.0)


def test_exp_staircase_spacers_match_omega():
    # direct evaluation of the increment formula, independent of build_tower
    m, eps, q = 4.0, Fraction(1, 64), 1000
    spec = tower.CuttingSpec(p=(q,), family=tower.ExponentialStaircase(m=(m,), eps=(eps,)))
    lv = tower.build_tower(spec, 1)[0]
    e = float(eps)
    for p in range(6):
        omega_hi = (m / e ** 2) * q * (np.exp(e * (p + 1) / q) - 1.0)
        omega_lo = (m / e ** 2) * q * (np.exp(e * p / q) - 1.0)
        expected = omega_hi - omega_lo - lv.h
        assert abs(lv.spacers[p] - expected) < 1e-9 * max(1.0, abs(expected))


def test_exp_staircase_omega_normalizations_agree_on_spacers():
    m, eps, q = 4.0, Fraction(1, 64), 500
    w_minus = tower.omega_exp(m, eps, q, np.arange(q + 1), minus_one=True)
    w_plain = tower.omega_exp(m, eps, q, np.arange(q + 1), minus_one=False)
    assert w_minus[0] == 0.0
    assert np.allclose(np.diff(w_minus), np.diff(w_plain), rtol=1e-12)


def test_finiteness_zero_spacers(doubling_tower):
    spec, _ = doubling_tower
    partial, flag = tower.finite_measure_partial_sums(spec, 2)
    assert partial.tolist() == [0.0, 0.0]
    assert flag == "bounded"


def test_finiteness_linear_staircase_direct_sum_oracle():
    # p_n = n+2, alpha = 1: terms computed by explicit loops
    p = tuple(n + 2 for n in range(8))
    spec = tower.CuttingSpec(p=p, family=tower.LinearStaircase(alpha=1.0))
    partial, _ = tower.finite_measure_partial_sums(spec, 8)
    h = 1.0
    acc = 0.0
    expected = []
    for k in range(8):
        total_sp = sum(j * 1.0 for j in range(1, p[k] + 1))
        acc += total_sp / (p[k] * h)
        expected.append(acc)
        h = p[k] * h + total_sp
    assert np.allclose(partial, expected, rtol=1e-12)


def test_finiteness_ornstein_infinite_flag():
    # t_k = h_k makes every term >= 1
    t = [1.0]
    p = (4,) * 6
    for k in range(5):
        t.append(p[k] * (t[-1] + t[-1]) + t[-1])
    spec = tower.CuttingSpec(p=p, family=tower.Ornstein(t=tuple(t), key=("inf",)))
    partial, flag = tower.finite_measure_partial_sums(spec, 6)
    assert np.all(np.diff(partial) >= 1.0 - 1e-12)
    assert flag == "diverging"


def test_frequencies_trivial():
    spec = tower.CuttingSpec(p=(3, 3), family=tower.Explicit(((0.0,) * 3, (0.0,) * 3)))
    levels = tower.build_tower(spec, 2)
    # h_1 = 3 here; a zero-spacer stage with p=3, h=4 needs a spacer stage first
    assert tower.frequencies(levels[0]).tolist() == [0.0, 1.0, 2.0]
    assert tower.frequencies(levels[1]).tolist() == [0.0, 3.0, 6.0]


def test_subcolumn_convention_matches(random_tower):
    _, levels = random_tower
    for lv in levels:
        assert np.allclose(tower.subcolumn_frequencies(lv), lv.freq, rtol=1e-14)


def test_staircase_frequency_closed_form():
    alpha = 0.75
    spec = tower.CuttingSpec(p=(6, 6), family=tower.LinearStaircase(alpha=alpha))
    levels = tower.build_tower(spec, 2)
    for lv in levels:
        j = np.arange(lv.p)
        assert np.allclose(lv.freq, j * lv.h + j * (j + 1) * alpha / 2, rtol=1e-13)


def test_frequency_gaps_at_least_height(random_tower):
    _, levels = random_tower
    for lv in levels:
        f = lv.freq
        assert f[0] == 0.0
        assert np.all(np.diff(f) >= lv.h - 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 6), min_size=1, max_size=4), st.integers(0, 10 ** 6))
def test_height_recursion_property(ps, seed):
    rng = np.random.default_rng(seed)
    rows = tuple(tuple(rng.uniform(0, 3, size=p)) for p in ps)
    spec = tower.CuttingSpec(p=tuple(ps), family=tower.Explicit(rows))
    levels = tower.build_tower(spec, len(ps))
    h = 1.0
    for lv, p, row in zip(levels, ps, rows):
        assert abs(lv.h - h) <= 1e-12 * max(1.0, h)
        h = p * h + sum(row)
    assert abs(levels[-1].h_next - h) <= 1e-12 * max(1.0, h)


def test_exp_staircase_flags_report():
    spec = tower.CuttingSpec(p=(4096,), family=tower.ExponentialStaircase(
        m=(256.0,), eps=(Fraction(1, 2),)))
    flags = tower.exp_staircase_stage_flags(spec, 1)[0]
    assert flags["m_ge_eps_h"]
    assert flags["regime"] == "p>=m/eps"
    assert flags["log_p_over_m"] == pytest.approx(np.log(4096) / 256.0)


def test_tower_csv_round_trip(doubling_tower):
    _, levels = doubling_tower
    text = tower.tower_to_csv(levels)
    lines = text.strip().splitlines()
    assert lines[0] == "k,h,j,sbar,freq"
    assert len(lines) == 1 + 2 + 2
