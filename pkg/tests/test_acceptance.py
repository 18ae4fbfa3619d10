"""Exit criteria for the toolkit, one test per criterion.

Run with ``pytest -m acceptance -s tests/test_acceptance.py`` to see the
PASS/FAIL summary lines.
"""

import itertools
import json
import math
import random
import string
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from oracles import (
    all_label_lists,
    bootstrap_oracle,
    diversity_oracle,
    kappa_oracle,
    spearman_oracle,
    tally_oracle,
    wasserstein_oracle,
)
from valuescape import cli
from valuescape.config import load_config
from valuescape.dataset import EVAL_OOD, NUMERICAL, OPEN_ENDED, TRAIN, PromptSet, SampleRecord, build_splits
from valuescape.errors import DegenerateMarginalsError
from valuescape.judge import A, B, CRITERIA, LETTERS, TIE, Verdict, aggregate_win_rates, score_case, score_pair
from valuescape.landscape import DISTINCT_MODES, MIN_S_C, modal_diversity, ordinal_wasserstein
from valuescape.numeric_eval import OVERALL, aggregate, parse_numeric, score_records
from valuescape.stats import (
    coefficient_of_variation,
    improvement_ranks,
    normalized_range,
    paired_bootstrap_ci,
    resample_indices,
    spearman,
    stratum_disparity,
    weighted_kappa,
)
from valuescape.stratify import Stratum, Subgroup, enumerate_strata, opinion_matrix

pytestmark = pytest.mark.acceptance

CORPUS = json.loads((Path(__file__).parent / "data" / "parse_corpus.json").read_text(encoding="utf-8"))


def verdict(n, ok, detail=""):
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"criterion {n} failed: {detail}"


def test_criterion_01_mds_oracle():
    rng = random.Random(1)
    worst = 0.0
    bounded = unanimous_zero = True
    start = time.perf_counter()
    for _ in range(1000):
        n_choices = rng.randint(2, 11)
        modes = [rng.randint(1, n_choices) for _ in range(rng.randint(1, 40))]
        if rng.random() < 0.1:
            modes = [modes[0]] * len(modes)
        for d in (MIN_S_C, DISTINCT_MODES):
            s = modal_diversity(modes, n_choices, d).score
            worst = max(worst, abs(s - diversity_oracle(modes, n_choices, d)))
            bounded &= 0.0 <= s <= 1.0
            if len(set(modes)) == 1:
                unanimous_zero &= s == 0.0
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-12 and bounded and unanimous_zero and elapsed < 5,
            f"max|d|={worst:.1e} bounded={bounded} unanimous0={unanimous_zero} {elapsed:.2f}s")


def test_criterion_02_mds_worked_value():
    modes = [7] * 6 + [5] * 2 + [8] * 2 + [10] * 2
    a = modal_diversity(modes, 10, MIN_S_C).score
    b = modal_diversity(modes, 10, DISTINCT_MODES).score
    ok = (abs(a - 0.53959) <= 1e-5 and abs(b - 0.89624) <= 1e-5
          and abs(a - diversity_oracle(modes, 10)) <= 1e-12
          and abs(b - diversity_oracle(modes, 10, DISTINCT_MODES)) <= 1e-12)
    verdict(2, ok, f"min-s-c={a:.5f} distinct-modes={b:.5f}")


def random_hist(rng, lo, hi):
    hist = {k: rng.randint(0, 9) for k in range(lo, hi + 1) if rng.random() < 0.6}
    if not any(hist.values()):
        hist[rng.randint(lo, hi)] = 1
    return {k: v for k, v in hist.items() if v}


def test_criterion_03_wasserstein():
    rng = random.Random(3)
    ok = True
    worst = 0.0
    for _ in range(1000):
        lo = rng.randint(0, 2)
        hi = lo + rng.randint(1, 9)
        p, q, r = (random_hist(rng, lo, hi) for _ in range(3))
        d = lambda x, y: ordinal_wasserstein(x, y, lo, hi)  # noqa: E731
        ok &= d(p, p) == 0.0
        ok &= abs(d(p, q) - d(q, p)) <= 1e-12
        ok &= d(p, r) <= d(p, q) + d(q, r) + 1e-12
        worst = max(worst, abs(d(p, q) - wasserstein_oracle(p, q, lo, hi)))
    extremes = ordinal_wasserstein({1: 4}, {10: 1}, 1, 10) == 1.0 and ordinal_wasserstein({5: 1}, {1: 3}, 1, 5) == 1.0
    two_thirds = abs(ordinal_wasserstein({1: 1, 2: 1}, {3: 1, 4: 1}, 1, 4) - 2 / 3) <= 1e-12
    verdict(3, ok and extremes and two_thirds and worst <= 1e-12,
            f"metric={ok} extremes={extremes} uniform={two_thirds} max|d-oracle|={worst:.1e}")


def sample(sid, gold, lo, hi):
    sg = Subgroup(Stratum(("sex",)), ("Female",))
    return SampleRecord(sid, "Q1", sg, "p", EVAL_OOD, PromptSet("s", "u", NUMERICAL), PromptSet("s", "o", OPEN_ENDED),
                        gold, str(gold), lo, hi)


def test_criterion_04_tally_oracle():
    rng = random.Random(4)
    ok = True
    worst = 0.0
    for trial in range(200):
        lo = rng.randint(0, 1)
        hi = lo + rng.randint(1, 9)
        n = rng.randint(1, 500)
        golds = [rng.randint(lo, hi) for _ in range(n)]
        preds = [None if rng.random() < 0.2 else rng.randint(lo - 2, hi + 2) for _ in range(n)]
        samples = [sample(f"t{trial}_{i}", g, lo, hi) for i, g in enumerate(golds)]
        replies = {s.sample_id: "I cannot answer that." if p is None else f"Answer: {p}" for s, p in zip(samples, preds)}
        (m,) = aggregate(score_records(samples, replies), OVERALL)
        acc, nmae, refusal = tally_oracle(golds, preds, (lo, hi))
        worst = max(worst, abs(m.accuracy - acc), abs(m.refusal_rate - refusal))
        if nmae is None:
            ok &= m.nmae is None
        else:
            worst = max(worst, abs(m.nmae - nmae))
            ok &= 0.0 <= m.nmae <= 1.0
        ok &= abs(m.accuracy + m.wrong_parsable_rate + m.refusal_rate - 1.0) <= 1e-12
    verdict(4, ok and worst <= 1e-12, f"200 fixtures max|d|={worst:.1e} invariants={ok}")


def test_criterion_05_parsing():
    corpus_ok = all(
        (lambda p: (p.code, p.reason) == (c.get("code"), c.get("reason")))(
            parse_numeric(c["text"], SimpleNamespace(scale_min=c["min"], scale_max=c["max"])))
        for c in CORPUS)
    rng = random.Random(5)
    alphabet = string.printable + "é中 Answer: 0123456789-"
    scale = SimpleNamespace(scale_min=1, scale_max=10)
    total = True
    for _ in range(100_000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        try:
            p = parse_numeric(text, scale)
        except Exception:
            total = False
            break
        total &= p.is_refusal or 1 <= p.code <= 10
    verdict(5, len(CORPUS) >= 30 and corpus_ok and total,
            f"corpus={len(CORPUS)} entries ok={corpus_ok} fuzz100k_total={total}")


def test_criterion_06_win_rate_protocol():
    allowed = {0.0, 0.25, 0.5, 0.75, 1.0}
    flip = {A: B, B: A, TIE: TIE}
    ok = True
    for l1, l2 in itertools.product(LETTERS, LETTERS):
        v1, v2 = Verdict(l1, l1, l1), Verdict(l2, l2, l2)
        # side assignment 1: the evaluatee's view; side assignment 2: the baseline's view of the same verdicts
        wr_e = score_pair(v1, v2, "overall")[2]
        wr_b = score_pair(Verdict(*[flip[l1]] * 3), Verdict(*[flip[l2]] * 3), "overall")[2]
        ok &= wr_e in allowed and wr_b in allowed and wr_e + wr_b == 1.0
    # a judge that always picks the same underlying response scores it 1 whichever slot it sits in
    consistent = score_pair(Verdict(A, A, A), Verdict(B, B, B), "overall")[2] == 1.0
    # a judge that always picks slot A cancels out across the swap
    positional = score_pair(Verdict(A, A, A), Verdict(A, A, A), "overall")[2] == 0.5
    self_rows = [score_case(str(i), Verdict(a, a, a), Verdict(a, a, a)) for i, a in enumerate(LETTERS)]
    self_wr = aggregate_win_rates(self_rows).wr
    self_flag = aggregate_win_rates([], self_comparison=True).wr
    self_ok = all(self_wr[c] == 0.5 and self_flag[c] == 0.5 for c in CRITERIA)
    verdict(6, ok and consistent and positional and self_ok,
            f"9 pairs x 2 sides zero-sum={ok} swap={consistent and positional} self={self_wr['overall']:.3f}")


def test_criterion_07_dataset_construction(full_survey):
    table, _ = full_survey
    start = time.perf_counter()
    matrix = opinion_matrix(table, enumerate_strata(), 30)
    manifest = build_splits(matrix, table.active_questions, exclusions=["Q7-Q26"])
    elapsed = time.perf_counter() - start
    train, ood = manifest.split(TRAIN), manifest.split(EVAL_OOD)
    n_train_groups = len(train.subgroup_counts())
    per_group = set(train.subgroup_counts().values())
    ood_max = max(ood.subgroup_counts().values())
    disjoint = not (set(train.counts) & set(ood.counts))
    ids_disjoint = not ({r.sample_id for r in train.records} & {r.sample_id for r in ood.records})
    ok = (train.total == 10_700 and n_train_groups == 50 and per_group == {214} and train.counts["sex"] == 428
          and ood_max <= 214 and disjoint and ids_disjoint and elapsed < 10)
    verdict(7, ok, f"train={train.total} groups={n_train_groups} sex={train.counts['sex']} "
                   f"ood={ood.total} ood_max={ood_max} disjoint={disjoint and ids_disjoint} {elapsed:.2f}s")


def test_criterion_08_bootstrap():
    # dyadic values keep every delta exactly 0.25
    degenerate = paired_bootstrap_ci([0.0, 0.5, 0.125, 1.0], [0.25, 0.75, 0.375, 1.25])
    deg_ok = degenerate.lo == degenerate.hi == degenerate.point_delta == 0.25
    rng = np.random.default_rng(8)
    base = rng.integers(0, 2, 50).astype(float).tolist()
    treat = rng.random(50).tolist()
    ci = paired_bootstrap_ci(base, treat)
    lo, hi = bootstrap_oracle(base, treat, 2000, 0.95, lambda n, i: resample_indices(n, 42, i))
    diff = max(abs(ci.lo - lo), abs(ci.hi - hi))
    defaults = (ci.resamples, ci.level) == (2000, 0.95)
    verdict(8, deg_ok and diff <= 1e-12 and defaults,
            f"degenerate=[{degenerate.lo:.2f},{degenerate.hi:.2f}] oracle|d|={diff:.1e} defaults={defaults}")


def test_criterion_09_statistics_oracles():
    rng = random.Random(9)
    worst = 0.0
    done = 0
    while done < 500:
        n = rng.randint(3, 40)
        x = [rng.randint(0, 5) for _ in range(n)]
        y = [rng.randint(0, 5) for _ in range(n)]
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        worst = max(worst, abs(spearman(x, y).rho - spearman_oracle(x, y)))
        done += 1

    kappa_ok = True
    checked = 0
    by_len = {}
    for labels in all_label_lists(5):
        by_len.setdefault(len(labels), []).append(labels)
    for group in by_len.values():
        for a in group:
            for b in group:
                expected = kappa_oracle(a, b)
                if expected is None:
                    try:
                        weighted_kappa(a, b)
                        kappa_ok = False
                    except DegenerateMarginalsError:
                        pass
                    continue
                kappa_ok &= abs(weighted_kappa(a, b) - expected) <= 1e-12
                checked += 1

    pre = {"25-34_Malay": 0.500, "45-54_Chinese": 0.400, "16-24_Indian": 0.300}
    post = {"25-34_Malay": 0.707, "45-54_Chinese": 0.607, "16-24_Indian": 0.500}
    ranks = {k: r.rank for k, r in improvement_ranks(pre, post).items()}
    ranks_ok = sorted(ranks.values()) == [1, 1, 3]
    verdict(9, worst <= 1e-12 and kappa_ok and ranks_ok,
            f"spearman500 max|d|={worst:.1e} kappa pairs={checked} ok={kappa_ok} ranks={sorted(ranks.values())}")


def test_criterion_10_fairness_metrics():
    exact = normalized_range([0.8, 0.6]) == 0.25
    rng = random.Random(10)
    values = [rng.uniform(0.05, 1.0) for _ in range(7)]
    cv0 = coefficient_of_variation(values)
    worst = 0.0
    for _ in range(1000):
        k = math.exp(rng.uniform(-8, 8))
        worst = max(worst, abs(coefficient_of_variation([v * k for v in values]) - cv0))
    strata = {"sex": [0.52, 0.48], "religion": [0.61, 0.44, 0.50, 0.55], "age_group": [0.4, 0.5, 0.45, 0.6, 0.55, 0.5]}
    rep = stratum_disparity(strata, "accuracy")
    hand_range = sum((max(v) - min(v)) / max(v) for v in strata.values()) / 3

    def pop_cv(v):
        m = sum(v) / len(v)
        return math.sqrt(sum((x - m) ** 2 for x in v) / len(v)) / m

    hand_cv = sum(pop_cv(v) for v in strata.values()) / 3
    agg_ok = abs(rep.normalized_range - hand_range) <= 1e-12 and abs(rep.cv - hand_cv) <= 1e-12
    verdict(10, exact and worst <= 1e-12 and agg_ok,
            f"range(0.8,0.6)={normalized_range([0.8, 0.6])!r} cv-scaling max|d|={worst:.1e} 3-stratum={agg_ok}")


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and not p.name.endswith(".jsonl")}


def test_criterion_11_end_to_end(synthetic_config, tmp_path):
    cfg = load_config(synthetic_config(resamples=2000))
    out = tmp_path / "out"
    start = time.perf_counter()
    cli.cmd_landscape(cfg)
    cli.cmd_build_dataset(cfg)
    cli.cmd_eval_numeric(cfg, "E")
    cli.cmd_eval_numeric(cfg, "B", provider="baseline")
    cli.cmd_compare(cfg, "B", "E")
    elapsed = time.perf_counter() - start

    summary = json.loads((out / "runs" / "E" / "summary.json").read_text(encoding="utf-8"))
    metrics_ok = (summary["accuracy"], summary["nmae"], summary["refusal_rate"]) == (1.0, 0.0, 0.0)
    disp_ok = bool(summary["disparity"]) and all(v == {"normalized_range": 0.0, "cv": 0.0}
                                                 for v in summary["disparity"].values())

    before = {**snapshot(out / "runs"), **{f"compare/{k}": v for k, v in snapshot(out / "compare").items()}}
    cli.cmd_eval_numeric(cfg, "E", replay=True)
    cli.cmd_eval_numeric(cfg, "B", provider="baseline", replay=True)
    cli.cmd_compare(cfg, "B", "E")
    after = {**snapshot(out / "runs"), **{f"compare/{k}": v for k, v in snapshot(out / "compare").items()}}
    identical = before == after and len(before) > 0
    verdict(11, metrics_ok and disp_ok and identical and elapsed < 60,
            f"acc={summary['accuracy']:.3f} nmae={summary['nmae']:.3f} refusal={summary['refusal_rate']:.3f} "
            f"disparities0={disp_ok} replay_identical={identical} ({len(before)} files) {elapsed:.1f}s")
