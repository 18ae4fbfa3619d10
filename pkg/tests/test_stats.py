import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_label_lists, bootstrap_oracle, competition_ranks, kappa_oracle, spearman_oracle
from valuescape.errors import (
    ConstantInputError,
    DegenerateMarginalsError,
    EmptyInputError,
    InsufficientDataError,
    KeyMismatchError,
    LengthMismatchError,
    NonPositiveValueError,
    SingletonStratumError,
    ZeroMeanError,
)
from valuescape.stats import (
    Annotation,
    agreement,
    agreement_accuracy,
    coefficient_of_variation,
    improvement_ranks,
    likert_summary,
    load_annotations,
    normalized_range,
    paired_bootstrap_ci,
    pairwise_agreement,
    resample_indices,
    spearman,
    stratum_disparity,
    weighted_kappa,
)


def test_normalized_range_examples():
    assert normalized_range([0.8, 0.6]) == 0.25
    assert normalized_range([0.7, 0.7, 0.7]) == 0.0
    assert normalized_range([0.5, 0.4, 0.3]) == pytest.approx(0.4, abs=1e-15)
    assert normalized_range([0.0, 0.0]) == 0.0
    assert normalized_range([0.5, 0.0]) == 1.0


def test_normalized_range_errors():
    with pytest.raises(EmptyInputError):
        normalized_range([])
    with pytest.raises(NonPositiveValueError):
        normalized_range([0.5, -0.1])


def test_cv_examples():
    assert coefficient_of_variation([4, 6]) == pytest.approx(0.2, abs=1e-15)
    assert coefficient_of_variation([3, 3, 3]) == 0.0
    assert coefficient_of_variation([0.9]) == 0.0
    assert coefficient_of_variation([4, 6], ddof=1) == pytest.approx(math.sqrt(2) / 5)
    with pytest.raises(ZeroMeanError):
        coefficient_of_variation([-1, 1])
    with pytest.raises(EmptyInputError):
        coefficient_of_variation([])


positive = st.lists(st.floats(0.01, 1.0, allow_nan=False), min_size=1, max_size=20)


@settings(max_examples=300, deadline=None)
@given(positive, st.floats(0.1, 1000.0))
def test_disparity_scale_invariance(values, c):
    scaled = [v * c for v in values]
    assert normalized_range(scaled) == pytest.approx(normalized_range(values), abs=1e-12)
    assert coefficient_of_variation(scaled) == pytest.approx(coefficient_of_variation(values), abs=1e-12)
    assert 0.0 <= normalized_range(values) <= 1.0
    assert coefficient_of_variation(values) >= 0.0


def test_stratum_disparity_examples():
    rep = stratum_disparity({"sex": [0.5, 0.4], "religion": [1.0, 0.6, 0.8]}, "accuracy")
    assert [s.normalized_range for s in rep.strata] == [pytest.approx(0.2), pytest.approx(0.4)]
    assert rep.normalized_range == pytest.approx(0.3, abs=1e-15)
    assert rep.cv == pytest.approx((coefficient_of_variation([0.5, 0.4]) + coefficient_of_variation([1.0, 0.6, 0.8])) / 2)
    flat = stratum_disparity({"sex": [0.5, 0.5], "age_group": [0.5] * 6}, "accuracy")
    assert (flat.normalized_range, flat.cv) == (0.0, 0.0)
    with pytest.raises(SingletonStratumError):
        stratum_disparity({"sex": [0.5]}, "accuracy")


def test_stratum_disparity_reads_attributes_and_skips_none():
    class M:
        def __init__(self, nmae):
            self.nmae = nmae

    rep = stratum_disparity({"sex": [M(0.2), M(0.1), M(None)]}, "nmae")
    assert rep.strata[0].n_subgroups == 2 and rep.normalized_range == 0.5


def test_bootstrap_degenerate():
    ci = paired_bootstrap_ci([0.0, 1.0, 0.5], [0.25, 1.25, 0.75])
    assert (ci.lo, ci.point_delta, ci.hi) == (0.25, 0.25, 0.25)
    assert (ci.resamples, ci.level, ci.seed, ci.n) == (2000, 0.95, 42, 3)


def test_bootstrap_matches_oracle():
    rng = np.random.default_rng(7)
    base = rng.integers(0, 2, 50).astype(float).tolist()
    treat = rng.integers(0, 2, 50).astype(float).tolist()
    ci = paired_bootstrap_ci(base, treat, resamples=500, seed=3)
    lo, hi = bootstrap_oracle(base, treat, 500, 0.95, lambda n, i: resample_indices(n, 3, i))
    assert ci.lo == pytest.approx(lo, abs=1e-12) and ci.hi == pytest.approx(hi, abs=1e-12)
    assert ci.point_delta == pytest.approx(sum(treat) / 50 - sum(base) / 50, abs=1e-12)
    assert paired_bootstrap_ci(base, treat, resamples=500, seed=3) == ci


def test_bootstrap_width_shrinks_with_level():
    rng = np.random.default_rng(1)
    base, treat = rng.random(80), rng.random(80)
    widths = [(lambda c: c.hi - c.lo)(paired_bootstrap_ci(base, treat, 400, level, 5)) for level in (0.99, 0.95, 0.8, 0.5)]
    assert widths == sorted(widths, reverse=True)


def test_bootstrap_errors():
    with pytest.raises(LengthMismatchError):
        paired_bootstrap_ci([1.0], [1.0, 2.0])
    with pytest.raises(EmptyInputError):
        paired_bootstrap_ci([], [])
    with pytest.raises(ValueError):
        paired_bootstrap_ci([1.0, 0.0], [0.0, 1.0], level=1.0)


def test_spearman_examples():
    assert spearman([1, 2, 3], [3, 2, 1]).rho == pytest.approx(-1.0)
    assert spearman([4, 1, 9, 2], [4, 1, 9, 2]).rho == pytest.approx(1.0)
    assert spearman([1, 2, 2, 3], [1, 3, 2, 4]).rho == pytest.approx(spearman_oracle([1, 2, 2, 3], [1, 3, 2, 4]), abs=1e-12)
    with pytest.raises(LengthMismatchError):
        spearman([1, 2, 3], [1, 2])
    with pytest.raises(ConstantInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(InsufficientDataError):
        spearman([1, 2], [2, 1])


def test_spearman_p_value_normal_approximation():
    res = spearman(list(range(30)), [((i * 7) % 30) for i in range(30)])
    z = res.rho * math.sqrt(29)
    assert res.p_value == pytest.approx(math.erfc(abs(z) / math.sqrt(2)))
    assert res.method == "normal-approximation"


pairs_st = st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=40).filter(
    lambda p: len({a for a, _ in p}) > 1 and len({b for _, b in p}) > 1)


@settings(max_examples=200, deadline=None)
@given(pairs_st)
def test_spearman_oracle_and_monotone_invariance(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    rho = spearman(x, y).rho
    assert rho == pytest.approx(spearman_oracle(x, y), abs=1e-12)
    assert spearman([math.exp(v) for v in x], [v ** 3 for v in y]).rho == pytest.approx(rho, abs=1e-12)


def test_kappa_examples():
    assert weighted_kappa(["A", "B", "Tie"], ["A", "B", "Tie"]) == 1.0
    k = weighted_kappa(["A", "B"], ["Tie", "Tie"])
    assert k == pytest.approx(kappa_oracle(["A", "B"], ["Tie", "Tie"]), abs=1e-12)
    # A against B earns nothing: p_o = 0 here
    assert weighted_kappa(["A", "B"], ["B", "A"]) == pytest.approx(kappa_oracle(["A", "B"], ["B", "A"]))
    with pytest.raises(DegenerateMarginalsError):
        weighted_kappa(["A", "A"], ["A", "A"])
    with pytest.raises(LengthMismatchError):
        weighted_kappa(["A"], ["A", "B"])
    with pytest.raises(ValueError):
        weighted_kappa(["A", "C"], ["A", "B"])


def test_kappa_exhaustive_small():
    lists = list(all_label_lists(4))
    checked = 0
    for a in lists:
        for b in lists:
            if len(a) != len(b):
                continue
            expected = kappa_oracle(a, b)
            if expected is None:
                with pytest.raises(DegenerateMarginalsError):
                    weighted_kappa(a, b)
                continue
            k = weighted_kappa(a, b)
            assert k == pytest.approx(expected, abs=1e-12)
            assert k == pytest.approx(weighted_kappa(b, a), abs=1e-12)
            assert (abs(k - 1) < 1e-12) == (a == b)
            assert k <= 1 + 1e-12
            checked += 1
    assert checked > 6000


def test_agreement_accuracy():
    assert agreement_accuracy(["A", "B"], ["A", "B"]) == 1.0
    assert agreement_accuracy(["A", "B"], ["B", "A"]) == 0.0
    assert agreement_accuracy(["A", "B", "Tie", "A"], ["A", "A", "Tie", "B"]) == 0.5
    res = agreement(["A", "B", "Tie", "A"], ["A", "A", "Tie", "B"])
    assert res.n_items == 4 and res.accuracy == 0.5


def test_improvement_ranks_examples():
    pre = {"25-34_Malay": 0.5, "45-54_Chinese": 0.4, "16-24_Indian": 0.3}
    post = {"25-34_Malay": 0.707, "45-54_Chinese": 0.607, "16-24_Indian": 0.5}
    ranks = improvement_ranks(pre, post)
    assert {k: r.rank for k, r in ranks.items()} == {"25-34_Malay": 1, "45-54_Chinese": 1, "16-24_Indian": 3}
    assert improvement_ranks({"x": 0.3}, {"x": 0.1})["x"].rank == 1
    flat = improvement_ranks({k: 0.1 for k in "abc"}, {k: 0.2 for k in "abc"})
    assert {r.rank for r in flat.values()} == {1}
    lower = improvement_ranks({"a": 0.3, "b": 0.3}, {"a": 0.2, "b": 0.25}, higher_is_better=False)
    assert lower["a"].rank == 1 and lower["a"].improvement == pytest.approx(0.1)
    with pytest.raises(KeyMismatchError):
        improvement_ranks({"a": 1}, {"b": 1})


@given(st.dictionaries(st.sampled_from("abcdefgh"), st.sampled_from([0.0, 0.1, 0.25, 0.5]), min_size=1),
       st.randoms(use_true_random=False))
def test_improvement_ranks_oracle_and_order_free(deltas, rnd):
    pre = {k: 0.0 for k in deltas}
    ranks = improvement_ranks(pre, deltas)
    assert {k: r.rank for k, r in ranks.items()} == competition_ranks(deltas)
    keys = list(deltas)
    rnd.shuffle(keys)
    again = improvement_ranks({k: pre[k] for k in keys}, {k: deltas[k] for k in keys})
    assert again == ranks


def test_annotations(tmp_path):
    path = tmp_path / "ann.csv"
    rows = ["item_id,annotator_id,criterion,label"]
    h1 = ["A", "B", "Tie", "A"]
    h2 = ["A", "B", "A", "B"]
    for i, (a, b) in enumerate(zip(h1, h2)):
        rows += [f"i{i},h1,overall,{a}", f"i{i},h2,overall,{b.lower()}", f"i{i},h1,fluency,{i + 1}"]
    path.write_text("\n".join(rows) + "\n")
    anns = load_annotations(path)
    assert anns[0] == Annotation("i0", "h1", "overall", "A")
    hh = pairwise_agreement(anns, "overall")
    assert hh.accuracy == 0.5 and hh.weighted_kappa == pytest.approx(kappa_oracle(h1, h2))
    ai = pairwise_agreement(anns, "overall", reference={f"i{i}": x for i, x in enumerate(h1)})
    assert ai.accuracy == pytest.approx((1.0 + 0.5) / 2)
    assert likert_summary(anns) == {"fluency": 2.5}
    with pytest.raises(InsufficientDataError):
        pairwise_agreement(anns, "persona")
    bad = tmp_path / "bad.csv"
    bad.write_text("item,label\n1,A\n")
    with pytest.raises(ValueError):
        load_annotations(bad)
