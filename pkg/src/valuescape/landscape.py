"""Value-conflict scores per question and stratum, and their category roll-ups."""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateScaleError,
    EmptyHistogramError,
    EmptyModesError,
    InsufficientDataError,
    InsufficientSubgroupsError,
    InvalidModesError,
    UnknownCategoryError,
    UnknownQuestionError,
)
from .stats import spearman
from .stratify import OpinionMatrix, SubgroupOpinion
from .survey import QuestionSpec, question_sort_key

MIN_S_C = "min-s-c"
DISTINCT_MODES = "distinct-modes"
DENOMINATORS = (MIN_S_C, DISTINCT_MODES)


@dataclass(frozen=True)
class DiversityScore:
    score: float
    n_valid_subgroups: int
    n_distinct_modes: int
    denominator_mode: str = MIN_S_C
    degenerate: bool = False
    question_id: str | None = None
    stratum: str | None = None


@dataclass(frozen=True)
class DivergenceScore:
    score: float
    pair_count: int
    question_id: str | None = None
    stratum: str | None = None


@dataclass(frozen=True)
class CategoryReport:
    category: str
    total_questions: int
    unanimous_questions: int
    avg_diversity: float


@dataclass(frozen=True)
class LabelStability:
    rho: float
    p_value: float
    n_pairs: int
    method: str = "normal-approximation"


def modal_diversity(modes: Sequence[int], n_choices: int, denominator: str = MIN_S_C, *,
                    question_id: str | None = None, stratum: str | None = None) -> DiversityScore:
    """Normalised Shannon entropy (bits) of the modal answers across subgroups.

    ``min-s-c`` divides by log2(min(#subgroups, #choices)); ``distinct-modes``
    divides by log2(#distinct modes).  A zero entropy or a zero denominator
    gives a score of 0 (the latter flagged as ``degenerate``).
    """
    if not modes:
        raise EmptyModesError("no modal answers supplied")
    if n_choices < 1:
        raise ValueError("n_choices must be positive")
    if denominator not in DENOMINATORS:
        raise ValueError(f"unknown denominator {denominator!r}")
    counts = Counter(modes)
    n_sub, n_modes = len(modes), len(counts)
    if n_modes > n_choices:
        raise InvalidModesError(f"{n_modes} distinct modes exceed {n_choices} answer choices")

    entropy = 0.0
    for c in counts.values():
        p = c / n_sub
        entropy -= p * math.log2(p)
    base = min(n_sub, n_choices) if denominator == MIN_S_C else n_modes
    norm = math.log2(base)
    if n_modes == 1 or norm == 0.0:
        return DiversityScore(0.0, n_sub, n_modes, denominator, norm == 0.0, question_id, stratum)
    return DiversityScore(min(1.0, entropy / norm), n_sub, n_modes, denominator, False, question_id, stratum)


def ordinal_wasserstein(p: Mapping[int, float], q: Mapping[int, float], scale_min: int, scale_max: int) -> float:
    """W1 distance between two answer histograms on a unit-spaced integer scale, over the scale range."""
    if scale_max <= scale_min:
        raise DegenerateScaleError(f"scale [{scale_min}, {scale_max}] has zero range")
    totals = []
    for h in (p, q):
        for code in h:
            if not scale_min <= code <= scale_max:
                raise ValueError(f"code {code} outside scale [{scale_min}, {scale_max}]")
        total = sum(h.values())
        if total <= 0:
            raise EmptyHistogramError("histogram has no mass")
        totals.append(total)

    dist = 0.0
    cdf_p = cdf_q = 0.0
    for k in range(scale_min, scale_max):
        cdf_p += p.get(k, 0) / totals[0]
        cdf_q += q.get(k, 0) / totals[1]
        dist += abs(cdf_p - cdf_q)
    return dist / (scale_max - scale_min)


def mean_pairwise_divergence(opinions: Sequence[SubgroupOpinion], question: QuestionSpec) -> DivergenceScore:
    valid = [o for o in opinions if o.valid]
    if len(valid) < 2:
        raise InsufficientSubgroupsError(f"{question.question_id}: {len(valid)} valid subgroup(s), need 2")
    dists = [ordinal_wasserstein(a.histogram, b.histogram, question.scale_min, question.scale_max)
             for a, b in itertools.combinations(valid, 2)]
    return DivergenceScore(sum(dists) / len(dists), len(dists), question.question_id,
                           valid[0].subgroup.stratum.name)


@dataclass(frozen=True)
class LandscapeRow:
    question_id: str
    stratum: str
    n_valid: int
    n_distinct_modes: int
    diversity: Mapping[str, float]
    wasserstein: float | None
    pair_count: int


def landscape_scores(matrix: OpinionMatrix, questions: Iterable[QuestionSpec],
                     denominators: Sequence[str] = (MIN_S_C,)) -> list[LandscapeRow]:
    """Diversity and divergence for every (question, stratum) with at least one valid subgroup.

    Only questions both in ``questions`` and in the matrix are scored.
    """
    rows = []
    by_id = {q.question_id: q for q in questions}
    strata = [s.name for s in matrix.strata]
    for qid in matrix.question_ids:
        q = by_id.get(qid)
        if q is None:
            continue
        for stratum in strata:
            ops = matrix.opinions(qid, stratum)
            if not ops:
                continue
            modes = [o.modal_code for o in ops]
            scores = {d: modal_diversity(modes, q.n_choices, d) for d in denominators}
            div = mean_pairwise_divergence(ops, q) if len(ops) >= 2 else None
            first = next(iter(scores.values()))
            rows.append(LandscapeRow(qid, stratum, len(ops), first.n_distinct_modes,
                                     {d: s.score for d, s in scores.items()},
                                     None if div is None else div.score,
                                     0 if div is None else div.pair_count))
    return rows


def question_means(scores: Iterable) -> dict[str, float]:
    """Average each question's score over the strata it was scored in.

    ``scores`` holds anything with ``question_id`` and ``score`` attributes, or
    ``(question_id, score)`` pairs.
    """
    acc = defaultdict(list)
    for s in scores:
        qid, value = (s.question_id, s.score) if hasattr(s, "score") else s
        acc[qid].append(value)
    return {qid: sum(v) / len(v) for qid, v in sorted(acc.items(), key=lambda kv: question_sort_key(kv[0]))}


def category_report(scores: Iterable, codebook: Iterable[QuestionSpec],
                    categories: Sequence[str] | None = None) -> list[CategoryReport]:
    """Per-category question count, unanimous-question count and mean diversity.

    A question is unanimous when its stratum-averaged score is exactly 0.
    Rows are sorted by mean diversity, highest first (ties by name).
    """
    means = question_means(scores)
    if not means:
        raise InsufficientDataError("no scored questions")
    by_id = {q.question_id: q for q in codebook}
    grouped = defaultdict(list)
    for qid, m in means.items():
        if qid not in by_id:
            raise UnknownQuestionError(qid)
        cat = by_id[qid].category
        if categories is not None and cat not in categories:
            raise UnknownCategoryError(cat)
        grouped[cat].append(m)
    reports = [CategoryReport(cat, len(v), sum(x == 0.0 for x in v), sum(v) / len(v))
               for cat, v in grouped.items()]
    return sorted(reports, key=lambda r: (-r.avg_diversity, r.category))


def overall_summary(scores: Iterable, label: str = "Overall Summary") -> CategoryReport:
    means = list(question_means(scores).values())
    if not means:
        raise InsufficientDataError("no scored questions")
    return CategoryReport(label, len(means), sum(x == 0.0 for x in means), sum(means) / len(means))


def label_stability(opinions: Iterable[SubgroupOpinion]) -> LabelStability:
    """Rank correlation between a cell's respondent count and its mode margin (valid cells only)."""
    cells = [o for o in opinions if o.valid]
    if len(cells) < 3:
        raise InsufficientDataError(f"{len(cells)} valid cells, need at least 3")
    res = spearman([o.n for o in cells], [o.mode_margin for o in cells])
    return LabelStability(res.rho, res.p_value, len(cells), res.method)


@dataclass(frozen=True)
class ConflictExemplar:
    question: QuestionSpec
    mean_score: float
    stratum: str
    modal_groups: Mapping[int, tuple[str, ...]]  # modal code -> subgroup labels


def conflict_exemplars(matrix: OpinionMatrix, questions: Iterable[QuestionSpec], scores: Iterable,
                       stratum: str, top: int = 3) -> tuple[list[ConflictExemplar], list[ConflictExemplar]]:
    """Highest-scoring questions and zero-score questions, with their modal answers in ``stratum``."""
    by_id = {q.question_id: q for q in questions}
    means = question_means(scores)

    def exemplar(qid):
        groups = defaultdict(list)
        for o in matrix.opinions(qid, stratum):
            groups[o.modal_code].append(o.subgroup.label)
        return ConflictExemplar(by_id[qid], means[qid], stratum,
                                {c: tuple(v) for c, v in sorted(groups.items())})

    ranked = sorted(means, key=lambda qid: (-means[qid], question_sort_key(qid)))
    high = [exemplar(qid) for qid in ranked[:top] if means[qid] > 0]
    zero = [exemplar(qid) for qid in ranked if means[qid] == 0.0][:top]
    return high, zero
