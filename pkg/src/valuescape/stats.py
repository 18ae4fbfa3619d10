"""Disparity metrics, paired bootstrap intervals, rank correlation and rater agreement."""

from __future__ import annotations

import csv
import decimal
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
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

VERDICT_LABELS = ("A", "B", "Tie")
DEFAULT_RESAMPLES = 2000
DEFAULT_LEVEL = 0.95
DEFAULT_SEED = 42


# --- disparity -------------------------------------------------------------


def _as_floats(values) -> list[float]:
    vals = [float(v) for v in values]
    if not vals:
        raise EmptyInputError("no values")
    return vals


def normalized_range(values: Iterable[float]) -> float:
    """Relative gap between the best and worst value: ``(max - min) / max``.

    All-equal inputs (including all zeros) have no disparity and return 0.
    The ratio is formed in decimal arithmetic on each value's shortest
    decimal form, so ``{0.8, 0.6}`` gives exactly 0.25 rather than the
    binary-rounded 0.25000000000000006.
    """
    vals = _as_floats(values)
    if min(vals) < 0:
        raise NonPositiveValueError(f"negative value in {vals}")
    hi, lo = max(vals), min(vals)
    if hi == lo:
        return 0.0
    with decimal.localcontext() as ctx:
        ctx.prec = 40
        dhi, dlo = decimal.Decimal(repr(hi)), decimal.Decimal(repr(lo))
        return float((dhi - dlo) / dhi)


def coefficient_of_variation(values: Iterable[float], ddof: int = 0) -> float:
    """Standard deviation over mean; population deviation unless ``ddof`` says otherwise."""
    vals = _as_floats(values)
    if all(v == vals[0] for v in vals):
        return 0.0
    mean = math.fsum(vals) / len(vals)
    if mean == 0:
        raise ZeroMeanError("mean is zero")
    if len(vals) - ddof <= 0:
        raise InsufficientDataError(f"ddof={ddof} needs more than {len(vals)} values")
    var = math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - ddof)
    return math.sqrt(var) / mean


@dataclass(frozen=True)
class StratumDisparity:
    stratum: str
    normalized_range: float
    cv: float
    n_subgroups: int


@dataclass(frozen=True)
class DisparityReport:
    metric_name: str
    strata: tuple[StratumDisparity, ...]
    normalized_range: float
    cv: float


def _metric_value(item, metric_name):
    if isinstance(item, (int, float)):
        return item
    return getattr(item, metric_name)


def stratum_disparity(metrics: Mapping[str, Sequence], metric_name: str, ddof: int = 0) -> DisparityReport:
    """Normalised range and CV within each stratum, then their unweighted mean across strata.

    ``metrics`` maps a stratum name to its subgroups' metric values, given
    either as numbers or as objects carrying a ``metric_name`` attribute.
    Undefined values (``None``) are skipped.
    """
    rows = []
    for stratum, items in metrics.items():
        vals = [v for v in (_metric_value(i, metric_name) for i in items) if v is not None]
        if len(vals) < 2:
            raise SingletonStratumError(f"{stratum}: {len(vals)} subgroup value(s), need 2")
        rows.append(StratumDisparity(stratum, normalized_range(vals),
                                     coefficient_of_variation(vals, ddof), len(vals)))
    if not rows:
        raise EmptyInputError("no strata")
    return DisparityReport(metric_name, tuple(rows),
                           sum(r.normalized_range for r in rows) / len(rows),
                           sum(r.cv for r in rows) / len(rows))


# --- paired bootstrap ------------------------------------------------------


@dataclass(frozen=True)
class BootstrapCI:
    point_delta: float
    lo: float
    hi: float
    resamples: int
    level: float
    seed: int
    n: int


def resample_indices(n: int, seed: int, resample: int) -> np.ndarray:
    """Index draw for one bootstrap resample.

    Each resample has its own PCG64 stream seeded from ``(seed, resample)``, so
    resamples can be computed in any order or in parallel.
    """
    return np.random.default_rng([seed, resample]).integers(0, n, size=n)


def paired_bootstrap_ci(per_sample_base: Sequence[float], per_sample_treat: Sequence[float],
                        resamples: int = DEFAULT_RESAMPLES, level: float = DEFAULT_LEVEL,
                        seed: int = DEFAULT_SEED) -> BootstrapCI:
    """Percentile CI for ``mean(treat) - mean(base)`` over samples paired by identity."""
    base = np.asarray(per_sample_base, dtype=float)
    treat = np.asarray(per_sample_treat, dtype=float)
    if base.shape != treat.shape:
        raise LengthMismatchError(f"{base.shape[0]} base vs {treat.shape[0]} treatment samples")
    n = base.shape[0]
    if n == 0:
        raise EmptyInputError("no samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if resamples < 1:
        raise ValueError("need at least one resample")
    deltas = treat - base
    if np.all(deltas == deltas[0]):
        d = float(deltas[0])
        return BootstrapCI(d, d, d, resamples, level, seed, n)

    boot = np.empty(resamples)
    for i in range(resamples):
        boot[i] = deltas[resample_indices(n, seed, i)].mean()
    alpha = (1 - level) / 2
    lo, hi = np.percentile(boot, [100 * alpha, 100 * (1 - alpha)])
    return BootstrapCI(float(deltas.mean()), float(lo), float(hi), resamples, level, seed, n)


# --- rank correlation ------------------------------------------------------


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int
    method: str = "normal-approximation"


def spearman(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    """Spearman's rho with average ranks for ties.

    The two-sided p-value uses the large-sample normal approximation
    ``z = rho * sqrt(n - 1)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatchError(f"{x.shape[0]} vs {y.shape[0]} observations")
    n = x.shape[0]
    if n < 3:
        raise InsufficientDataError(f"{n} observations, need at least 3")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("rank correlation undefined for constant input")
    rx = rankdata(x) - (n + 1) / 2
    ry = rankdata(y) - (n + 1) / 2
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    rho = max(-1.0, min(1.0, rho))
    z = rho * math.sqrt(n - 1)
    return SpearmanResult(rho, math.erfc(abs(z) / math.sqrt(2)), n)


# --- agreement -------------------------------------------------------------


def verdict_weight(a: str, b: str) -> float:
    """1 for agreement, 0.5 when exactly one side says Tie, 0 for A against B."""
    if a == b:
        return 1.0
    if "Tie" in (a, b):
        return 0.5
    return 0.0


def weighted_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable],
                   weight: Callable[[Hashable, Hashable], float] = verdict_weight,
                   categories: Sequence[Hashable] = VERDICT_LABELS) -> float:
    """Cohen's kappa with agreement weights: ``(p_o - p_e) / (1 - p_e)``."""
    if len(labels_a) != len(labels_b):
        raise LengthMismatchError(f"{len(labels_a)} vs {len(labels_b)} labels")
    if not labels_a:
        raise EmptyInputError("no labels")
    stray = (set(labels_a) | set(labels_b)) - set(categories)
    if stray:
        raise ValueError(f"labels outside {tuple(categories)}: {sorted(map(str, stray))}")
    n = len(labels_a)
    p_o = sum(weight(a, b) for a, b in zip(labels_a, labels_b)) / n
    pa = {c: sum(1 for a in labels_a if a == c) / n for c in categories}
    pb = {c: sum(1 for b in labels_b if b == c) / n for c in categories}
    p_e = sum(pa[i] * pb[j] * weight(i, j) for i in categories for j in categories)
    if math.isclose(p_e, 1.0, rel_tol=0, abs_tol=1e-12):
        raise DegenerateMarginalsError("expected agreement is 1; kappa undefined")
    return (p_o - p_e) / (1 - p_e)


def agreement_accuracy(labels_a: Sequence, labels_b: Sequence) -> float:
    if len(labels_a) != len(labels_b):
        raise LengthMismatchError(f"{len(labels_a)} vs {len(labels_b)} labels")
    if not labels_a:
        raise EmptyInputError("no labels")
    return sum(a == b for a, b in zip(labels_a, labels_b)) / len(labels_a)


@dataclass(frozen=True)
class AgreementResult:
    accuracy: float
    weighted_kappa: float
    n_items: int


def agreement(labels_a: Sequence, labels_b: Sequence) -> AgreementResult:
    return AgreementResult(agreement_accuracy(labels_a, labels_b),
                           weighted_kappa(labels_a, labels_b), len(labels_a))


# --- improvement ranks -----------------------------------------------------


@dataclass(frozen=True)
class ImprovementRank:
    delta: float
    improvement: float
    rank: int


def improvement_ranks(pre: Mapping[Hashable, float], post: Mapping[Hashable, float],
                      higher_is_better: bool = True, decimals: int | None = 12) -> dict[Hashable, ImprovementRank]:
    """Rank subgroups by improvement, competition style (1, 1, 3).

    ``delta`` is ``post - pre``; ``improvement`` flips its sign for metrics
    where lower is better.  Improvements are rounded to ``decimals`` before
    ranking so float noise does not split genuine ties.
    """
    if set(pre) != set(post):
        raise KeyMismatchError(f"key sets differ: {sorted(map(str, set(pre) ^ set(post)))}")
    sign = 1.0 if higher_is_better else -1.0
    deltas = {k: post[k] - pre[k] for k in pre}
    improvement = {k: sign * d for k, d in deltas.items()}
    keyed = {k: round(v, decimals) if decimals is not None else v for k, v in improvement.items()}
    values = list(keyed.values())
    return {k: ImprovementRank(deltas[k], improvement[k], 1 + sum(v > keyed[k] for v in values))
            for k in pre}


# --- human annotation import -----------------------------------------------


@dataclass(frozen=True)
class Annotation:
    item_id: str
    annotator_id: str
    criterion: str
    label: str


def load_annotations(path, delimiter: str = ",") -> list[Annotation]:
    """Read rater labels: columns ``item_id, annotator_id, criterion, label``.

    ``label`` is a verdict (A/B/Tie) or a numeric Likert rating.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = {"item_id", "annotator_id", "criterion", "label"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"annotation file lacks columns {sorted(missing)}")
        return [Annotation(r["item_id"].strip(), r["annotator_id"].strip(),
                           r["criterion"].strip(), r["label"].strip()) for r in reader]


def _labels_by_annotator(annotations: Iterable[Annotation], criterion: str) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = defaultdict(dict)
    for a in annotations:
        if a.criterion == criterion:
            out[a.annotator_id][a.item_id] = _normalise_verdict(a.label)
    return dict(sorted(out.items()))


def _normalise_verdict(label: str) -> str:
    low = label.strip().lower()
    return {"a": "A", "b": "B", "tie": "Tie"}.get(low, label)


def pairwise_agreement(annotations: Iterable[Annotation], criterion: str,
                       reference: Mapping[str, str] | None = None) -> AgreementResult:
    """Average pairwise agreement on ``criterion``.

    Without ``reference`` this averages over all annotator pairs (human-human);
    with it, over each annotator against the reference labels (human-judge).
    Only items labeled by both sides of a pair are compared.
    """
    by_rater = _labels_by_annotator(annotations, criterion)
    if reference is not None:
        ref = {k: _normalise_verdict(v) for k, v in reference.items()}
        pairs = [(labels, ref) for labels in by_rater.values()]
    else:
        pairs = list(itertools.combinations(by_rater.values(), 2))
    accs, kappas, n_items = [], [], 0
    for left, right in pairs:
        shared = sorted(set(left) & set(right))
        if not shared:
            continue
        a = [left[i] for i in shared]
        b = [right[i] for i in shared]
        accs.append(agreement_accuracy(a, b))
        kappas.append(weighted_kappa(a, b))
        n_items += len(shared)
    if not accs:
        raise InsufficientDataError(f"no overlapping items for criterion {criterion!r}")
    return AgreementResult(sum(accs) / len(accs), sum(kappas) / len(kappas), n_items)


def likert_summary(annotations: Iterable[Annotation]) -> dict[str, float]:
    """Mean numeric rating per criterion; non-numeric labels are ignored."""
    acc = defaultdict(list)
    for a in annotations:
        try:
            rating = float(a.label)
        except ValueError:
            continue
        acc[a.criterion].append(rating)
    return {c: sum(v) / len(v) for c, v in sorted(acc.items())}
