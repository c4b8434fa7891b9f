import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salgaze.errors import ConfigError, DataError, DegenerateMapError, NoFixationError
from salgaze.gaze_data import DensityMap, FixationMap
from salgaze.metrics import (
    METRIC_ORDER,
    EvalVector,
    MetricConfig,
    ShuffleSet,
    auc_borji,
    auc_judd,
    cc,
    default_baseline,
    evaluate_all,
    info_gain,
    kl_div,
    nss,
    sauc,
    sim,
)


def fmap(hits, w, h):
    return FixationMap(width=w, height=h, hits=frozenset(hits), dropped_count=0)


# ---------------------------------------------------------------------------
# independent oracles


def brute_force_auc(pos, neg):
    """All-pairs Mann-Whitney count, ties as half."""
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def direct_nss(s, hits):
    mu = s.mean()
    sd = math.sqrt(((s - mu) ** 2).mean())
    return float(np.mean([(s[y, x] - mu) / sd for (x, y) in hits]))


def direct_cc(s, d):
    a = s.ravel() - s.mean()
    b = d.ravel() - d.mean()
    return float((a * b).sum() / math.sqrt((a**2).sum() * (b**2).sum()))


def direct_sim(s, d):
    sn = s / s.sum()
    return float(sum(min(sv, dv) for sv, dv in zip(sn.ravel(), d.ravel())))


def direct_kl(s, d):
    sn = s / s.sum()
    total = 0.0
    for dv, sv in zip(d.ravel(), sn.ravel()):
        if dv > 0:
            total += dv * math.log(dv / (sv + 1e-12))
    return total


# ---------------------------------------------------------------------------
# analytic cases


def test_nss_analytic_sqrt3():
    s = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert nss(s, fmap({(1, 1)}, 2, 2)) == pytest.approx(math.sqrt(3), abs=1e-9)


def test_nss_analytic_negative():
    s = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert nss(s, fmap({(0, 0)}, 2, 2)) == pytest.approx(-1 / math.sqrt(3), abs=1e-9)


def test_nss_constant_map_errors():
    with pytest.raises(DegenerateMapError):
        nss(np.full((2, 2), 0.5), fmap({(0, 0)}, 2, 2))


def test_nss_no_fixations_errors():
    with pytest.raises(NoFixationError):
        nss(np.array([[0.0, 1.0]]), fmap(set(), 2, 1))


def test_cc_self_correlation():
    rng = np.random.default_rng(0)
    s = rng.random((6, 6))
    d = DensityMap(s / s.sum())
    assert cc(s, d) == pytest.approx(1.0, abs=1e-12)


def test_cc_anti_correlation():
    rng = np.random.default_rng(1)
    s = rng.random((5, 5))
    inv = s.max() + s.min() - s
    d = DensityMap(inv / inv.sum())
    assert cc(s, d) == pytest.approx(-1.0, abs=1e-12)


def test_cc_symmetric():
    rng = np.random.default_rng(2)
    a = rng.random((4, 4))
    b = rng.random((4, 4))
    da = DensityMap(a / a.sum())
    db = DensityMap(b / b.sum())
    assert cc(a, db) == pytest.approx(cc(b, da), abs=1e-12)


def test_sim_identical_is_one():
    rng = np.random.default_rng(3)
    s = rng.random((4, 4))
    assert sim(s, DensityMap(s / s.sum())) == pytest.approx(1.0, abs=1e-12)


def test_sim_disjoint_is_zero():
    s = np.array([[1.0, 0.0]])
    d = DensityMap(np.array([[0.0, 1.0]]))
    assert sim(s, d) == 0.0


def test_sim_half():
    s = np.array([[1.0, 0.0]])
    d = DensityMap(np.array([[0.5, 0.5]]))
    assert sim(s, d) == pytest.approx(0.5, abs=1e-9)


def test_sim_all_zero_errors():
    with pytest.raises(DegenerateMapError):
        sim(np.zeros((2, 2)), DensityMap(np.full((2, 2), 0.25)))


def test_kl_zero_for_identical():
    rng = np.random.default_rng(4)
    s = rng.random((4, 4))
    assert kl_div(s, DensityMap(s / s.sum())) == pytest.approx(0.0, abs=1e-9)


def test_kl_analytic_nats():
    s = np.array([[0.5, 0.5]])
    d = DensityMap(np.array([[0.75, 0.25]]))
    expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert kl_div(s, d) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.130812, abs=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    s = rng.random((3, 3)) + 1e-6
    d = rng.random((3, 3)) + 1e-6
    assert kl_div(s, DensityMap(d / d.sum())) >= -1e-12


def test_auc_judd_perfect_ranking():
    s = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert auc_judd(s, fmap({(0, 1), (1, 1)}, 2, 2)) == 1.0


def test_auc_judd_three_quarters():
    s = np.array([[0.1, 0.2], [0.3, 0.4]])
    # hits at values {0.2, 0.4}: 3 of 4 pairs win
    assert auc_judd(s, fmap({(1, 0), (1, 1)}, 2, 2)) == pytest.approx(0.75, abs=1e-12)


def test_auc_judd_constant_is_half():
    s = np.full((3, 3), 0.4)
    assert auc_judd(s, fmap({(0, 0), (2, 2)}, 3, 3)) == pytest.approx(0.5, abs=1e-12)


def test_auc_judd_all_fixated_errors():
    s = np.array([[0.1, 0.2]])
    with pytest.raises(DataError):
        auc_judd(s, fmap({(0, 0), (1, 0)}, 2, 1))


@given(st.integers(0, 100_000))
@settings(max_examples=60)
def test_auc_judd_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    s = rng.choice(np.linspace(0, 1, 7), size=(8, 8))  # coarse values force ties
    n_hits = int(rng.integers(1, 20))
    hits = {(int(rng.integers(8)), int(rng.integers(8))) for _ in range(n_hits)}
    fm = fmap(hits, 8, 8)
    mask = fm.to_array()
    if mask.all():
        return
    expected = brute_force_auc(s[mask].tolist(), s[~mask].tolist())
    assert auc_judd(s, fm) == pytest.approx(expected, abs=1e-9)


def test_auc_borji_perfect_separation_any_seed():
    s = np.full((8, 8), 0.2)
    hits = {(1, 1), (5, 3), (6, 7)}
    for (x, y) in hits:
        s[y, x] = 1.0
    for seed in (0, 1, 99):
        v = auc_borji(s, fmap(hits, 8, 8), 20, np.random.default_rng(seed))
        assert v == 1.0


def test_auc_borji_constant_is_half():
    s = np.full((8, 8), 0.7)
    v = auc_borji(s, fmap({(0, 0)}, 8, 8), 10, np.random.default_rng(0))
    assert v == pytest.approx(0.5, abs=1e-12)


def test_auc_borji_random_map_near_half():
    # Monte Carlo with fixed seed: random map + random hits has no signal
    rng = np.random.default_rng(1234)
    s = rng.random((64, 64))
    hits = {(int(rng.integers(64)), int(rng.integers(64))) for _ in range(40)}
    v = auc_borji(s, fmap(hits, 64, 64), 100, np.random.default_rng(77))
    assert abs(v - 0.5) <= 0.05


def test_sauc_high_on_hits_shuffle_elsewhere():
    s = np.zeros((8, 8))
    hits = {(1, 1), (2, 5)}
    for (x, y) in hits:
        s[y, x] = 1.0
    shuffle = ShuffleSet(frozenset({(6, 6), (7, 0), (0, 7)}))
    v = sauc(s, fmap(hits, 8, 8), shuffle, 10, np.random.default_rng(3))
    assert v == 1.0


def test_sauc_shuffle_equals_hits_errors():
    s = np.random.default_rng(0).random((4, 4))
    hits = {(0, 0), (1, 1)}
    with pytest.raises(DataError):
        sauc(s, fmap(hits, 4, 4), ShuffleSet(frozenset(hits)), 10, np.random.default_rng(0))


def test_sauc_cancels_center_bias():
    # center-prior map scored on center-biased fixations with a center-biased
    # shuffle pool has no edge: the defining property
    from salgaze.models import center_gaussian

    w = h = 48
    s = center_gaussian(w, h).values
    density = s / s.sum()
    rng = np.random.default_rng(5)
    flat = density.ravel()

    def draw(n):
        idx = rng.choice(w * h, size=n, p=flat)
        return {(int(i % w), int(i // w)) for i in idx}

    values = []
    pool = [draw(10) for _ in range(21)]
    for i in range(20):
        hits = pool[i]
        others = set().union(*(pool[j] for j in range(21) if j != i)) - hits
        v = sauc(s, fmap(hits, w, h), ShuffleSet(frozenset(others)), 100, np.random.default_rng(i))
        values.append(v)
    assert abs(np.mean(values) - 0.5) <= 0.05


def test_info_gain_one_bit():
    s = np.array([[1.0, 1.0]])  # renormalizes to [0.5, 0.5]
    baseline = DensityMap(np.array([[0.25, 0.75]]))
    assert info_gain(s, fmap({(0, 0)}, 2, 1), baseline) == pytest.approx(1.0, abs=1e-6)


def test_info_gain_minus_one_bit():
    s = np.array([[1.0, 3.0]])  # renormalizes to [0.25, 0.75]
    baseline = DensityMap(np.array([[0.5, 0.5]]))
    assert info_gain(s, fmap({(0, 0)}, 2, 1), baseline) == pytest.approx(-1.0, abs=1e-6)


def test_info_gain_zero_against_itself():
    rng = np.random.default_rng(6)
    s = rng.random((4, 4)) + 0.1
    baseline = DensityMap(s / s.sum())
    v = info_gain(s, fmap({(1, 2), (3, 3)}, 4, 4), baseline)
    assert v == pytest.approx(0.0, abs=1e-9)


def test_info_gain_no_hits_errors():
    with pytest.raises(NoFixationError):
        info_gain(np.ones((2, 2)), fmap(set(), 2, 2), default_baseline(2, 2))


# ---------------------------------------------------------------------------
# metric invariances


@given(st.integers(0, 10_000), st.floats(0.1, 50), st.floats(-5, 5))
@settings(max_examples=40)
def test_nss_cc_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    s = rng.random((5, 5))
    d = rng.random((5, 5)) + 0.01
    density = DensityMap(d / d.sum())
    fm = fmap({(1, 1), (3, 2)}, 5, 5)
    s2 = np.clip(a * s + b, None, None)
    assert nss(s2, fm) == pytest.approx(nss(s, fm), abs=1e-9)
    assert cc(s2, density) == pytest.approx(cc(s, density), abs=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=40)
def test_auc_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.random((6, 6))
    fm = fmap({(0, 0), (2, 4), (5, 5)}, 6, 6)
    transformed = np.exp(2.0 * s) - 0.5  # strictly monotone
    assert auc_judd(transformed, fm) == pytest.approx(auc_judd(s, fm), abs=1e-12)
    # borji uses fixed [0,1] thresholds, so rescale into range first
    t01 = (transformed - transformed.min()) / (transformed.max() - transformed.min())
    s01 = (s - s.min()) / (s.max() - s.min())
    a = auc_borji(t01, fm, 30, np.random.default_rng(seed))
    b = auc_borji(s01, fm, 30, np.random.default_rng(seed))
    assert a == pytest.approx(b, abs=0.08)


# ---------------------------------------------------------------------------
# evaluate_all


def _density_for(fm, sigma=1.0):
    from salgaze.gaze_data import blur_to_density

    return blur_to_density(fm, sigma)


def test_evaluate_all_full_vector():
    rng = np.random.default_rng(9)
    s = rng.random((8, 8))
    s = (s - s.min()) / (s.max() - s.min())
    fm = fmap({(1, 1), (6, 2)}, 8, 8)
    shuffle = ShuffleSet(frozenset({(0, 7), (7, 7), (3, 3)}))
    ev = evaluate_all(s, fm, _density_for(fm), shuffle, None, MetricConfig(seed=1))
    assert ev.metric_ids == METRIC_ORDER
    assert len(ev.values) == 8
    assert not ev.degenerate


def test_evaluate_all_subset_preserves_order():
    rng = np.random.default_rng(10)
    s = rng.random((8, 8))
    fm = fmap({(2, 2)}, 8, 8)
    cfg = MetricConfig(enabled=("info_gain", "auc_judd", "nss", "cc", "sim", "kl_div"), seed=0)
    ev = evaluate_all(s, fm, _density_for(fm), None, None, cfg)
    assert ev.metric_ids == ("auc_judd", "nss", "cc", "sim", "kl_div", "info_gain")
    assert len(ev.values) == 6


def test_evaluate_all_degenerate_fallback():
    s = np.full((8, 8), 0.3)
    fm = fmap({(1, 1), (5, 5)}, 8, 8)
    shuffle = ShuffleSet(frozenset({(0, 0), (7, 7)}))
    ev = evaluate_all(s, fm, _density_for(fm), shuffle, None, MetricConfig(seed=0))
    got = dict(zip(ev.metric_ids, ev.values))
    assert ev.degenerate
    assert got["nss"] == 0.0 and got["cc"] == 0.0
    assert got["auc_judd"] == 0.5 and got["auc_borji"] == 0.5 and got["sauc"] == 0.5
    assert all(np.isfinite(v) for v in ev.values)
    # sim/kl/ig computed against the uniform distribution
    uniform = np.full((8, 8), 1.0 / 64)
    assert got["sim"] == pytest.approx(sim(uniform, _density_for(fm)), abs=1e-12)


def test_evaluate_all_resizes_saliency():
    from salgaze.models import center_gaussian

    fm = fmap({(3, 3)}, 16, 12)
    ev = evaluate_all(
        center_gaussian(32, 24), fm, _density_for(fm), None, None,
        MetricConfig(enabled=("auc_judd", "nss"), seed=0),
    )
    assert len(ev.values) == 2


def test_evaluate_all_requires_shuffle_for_sauc():
    s = np.random.default_rng(0).random((4, 4))
    fm = fmap({(1, 1)}, 4, 4)
    with pytest.raises(ConfigError):
        evaluate_all(s, fm, _density_for(fm), None, None, MetricConfig(seed=0))


def test_evaluate_all_no_fixations():
    s = np.random.default_rng(0).random((4, 4))
    with pytest.raises(NoFixationError):
        evaluate_all(s, fmap(set(), 4, 4), _density_for(fmap({(0, 0)}, 4, 4)), None, None,
                     MetricConfig(enabled=("nss",), seed=0))


def test_evaluate_all_deterministic_given_seed():
    rng = np.random.default_rng(12)
    s = rng.random((8, 8))
    fm = fmap({(1, 1), (4, 6)}, 8, 8)
    shuffle = ShuffleSet(frozenset({(0, 0), (7, 1), (2, 7)}))
    cfg = MetricConfig(seed=42)
    a = evaluate_all(s, fm, _density_for(fm), shuffle, None, cfg)
    b = evaluate_all(s, fm, _density_for(fm), shuffle, None, cfg)
    assert a.values == b.values


def test_direct_formula_oracles_agree():
    rng = np.random.default_rng(13)
    s = rng.random((8, 8)) + 0.05
    fm = fmap({(1, 1), (2, 6), (7, 0)}, 8, 8)
    d = _density_for(fm)
    assert nss(s, fm) == pytest.approx(direct_nss(s, sorted(fm.hits)), abs=1e-9)
    assert cc(s, d) == pytest.approx(direct_cc(s, d.values), abs=1e-9)
    assert sim(s, d) == pytest.approx(direct_sim(s, d.values), abs=1e-9)
    assert kl_div(s, d) == pytest.approx(direct_kl(s, d.values), abs=1e-9)


def test_eval_vector_rejects_nan():
    with pytest.raises(DataError):
        EvalVector(values=(float("nan"),), metric_ids=("nss",))
