"""Demographic strata, subgroups and per-(question, subgroup) modal opinions."""

from __future__ import annotations

import csv
import itertools
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DuplicateAxisError,
    UnknownAxisError,
    UnknownAxisValueError,
    UnknownQuestionError,
    UnknownStratumError,
)
from .survey import AXES, MISSING_CODE, UNKNOWN, SurveyTable, question_sort_key

DEFAULT_MIN_N = 30

# Pairwise stratum names use the short form of an axis ("sex_x_age").
_SHORT_NAMES = {"age_group": "age"}


@dataclass(frozen=True)
class Stratum:
    axes: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 2:
            raise ValueError(f"a stratum spans one or two axes, got {self.axes}")
        if len(set(self.axes)) != len(self.axes):
            raise DuplicateAxisError(f"repeated axis in {self.axes}")

    @property
    def name(self) -> str:
        if len(self.axes) == 1:
            return self.axes[0]
        return "_x_".join(_SHORT_NAMES.get(a, a) for a in self.axes)

    @classmethod
    def from_name(cls, name: str, axes: Sequence[str] = AXES) -> "Stratum":
        lookup = {a: a for a in axes}
        lookup.update({_SHORT_NAMES[a]: a for a in axes if a in _SHORT_NAMES})
        parts = name.split("_x_")
        if len(parts) == 1:
            if name not in axes:
                raise UnknownStratumError(name)
            return cls((name,))
        try:
            return cls(tuple(lookup[p] for p in parts))
        except KeyError:
            raise UnknownStratumError(name) from None

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Subgroup:
    stratum: Stratum
    values: tuple[str, ...]
    population_n: int = 0

    def __post_init__(self):
        if len(self.values) != len(self.stratum.axes):
            raise ValueError(f"{self.stratum.name} needs {len(self.stratum.axes)} values, got {self.values}")

    @property
    def label(self) -> str:
        return "_".join(self.values)

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.stratum.name, self.values)

    def matches(self, demographics: Mapping[str, str]) -> bool:
        return all(demographics.get(a) == v for a, v in zip(self.stratum.axes, self.values))


@dataclass(frozen=True)
class SubgroupOpinion:
    question_id: str
    subgroup: Subgroup
    histogram: Mapping[int, int]
    n: int
    modal_code: int | None
    mode_margin: float
    valid: bool


def enumerate_strata(axes: Sequence[str] = AXES) -> list[Stratum]:
    """All single-axis strata followed by every unordered pair, in input axis order."""
    if not axes:
        raise ValueError("need at least one axis")
    if len(set(axes)) != len(axes):
        raise DuplicateAxisError(f"repeated axis in {list(axes)}")
    singles = [Stratum((a,)) for a in axes]
    pairs = [Stratum((a, b)) for a, b in itertools.combinations(axes, 2)]
    return singles + pairs


def opinion_from_histogram(question_id: str, subgroup: Subgroup, histogram: Mapping[int, int],
                           min_n: int = DEFAULT_MIN_N) -> SubgroupOpinion:
    hist = {int(k): int(v) for k, v in sorted(histogram.items()) if v > 0}
    n = sum(hist.values())
    if n == 0:
        return SubgroupOpinion(question_id, subgroup, {}, 0, None, 0.0, False)
    # sorted by (-count, code): ties go to the lowest code
    ranked = sorted(hist.items(), key=lambda kv: (-kv[1], kv[0]))
    top = ranked[0][1]
    second = ranked[1][1] if len(ranked) > 1 else 0
    return SubgroupOpinion(question_id, subgroup, hist, n, ranked[0][0], (top - second) / n, n >= min_n)


def _check_axes(table: SurveyTable, stratum: Stratum) -> None:
    for a in stratum.axes:
        if a not in table.axes:
            raise UnknownAxisError(a)


def _active_question(table: SurveyTable, question_id: str):
    q = table.question(question_id)
    if q.excluded:
        raise UnknownQuestionError(f"{question_id} is excluded")
    return q


def compute_opinion(table: SurveyTable, question_id: str, subgroup: Subgroup,
                    min_n: int = DEFAULT_MIN_N) -> SubgroupOpinion:
    if min_n < 1:
        raise ValueError("min_n must be at least 1")
    _active_question(table, question_id)
    _check_axes(table, subgroup.stratum)
    if table.respondents:
        for axis, value in zip(subgroup.stratum.axes, subgroup.values):
            if not any(r.demographics.get(axis) == value for r in table.respondents):
                raise UnknownAxisValueError(f"{axis}={value!r}")
    hist = Counter(r.answers[question_id] for r in table.respondents
                   if subgroup.matches(r.demographics) and question_id in r.answers)
    return opinion_from_histogram(question_id, subgroup, hist, min_n)


def _group_rows(table: SurveyTable, stratum: Stratum) -> dict[tuple[str, ...], list[int]]:
    _check_axes(table, stratum)
    groups: dict[tuple[str, ...], list[int]] = {}
    for i, r in enumerate(table.respondents):
        values = tuple(r.demographics.get(a, UNKNOWN) for a in stratum.axes)
        if UNKNOWN in values:
            continue
        groups.setdefault(values, []).append(i)
    return dict(sorted(groups.items()))


def all_subgroups(table: SurveyTable, stratum: Stratum) -> list[Subgroup]:
    """Every observed value combination of ``stratum`` (respondents with unknown values skipped)."""
    return [Subgroup(stratum, values, len(rows)) for values, rows in _group_rows(table, stratum).items()]


def valid_subgroups(table: SurveyTable, stratum: Stratum, min_n: int = DEFAULT_MIN_N,
                    question_id: str | None = None) -> list[Subgroup]:
    """Subgroups meeting ``min_n``.

    With ``question_id`` unset the whole-subgroup respondent count is used;
    otherwise the number of respondents who answered that question.
    """
    groups = all_subgroups(table, stratum)
    if question_id is None:
        return [g for g in groups if g.population_n >= min_n]
    _active_question(table, question_id)
    return [g for g in groups if compute_opinion(table, question_id, g, min_n).n >= min_n]


class OpinionMatrix(Mapping):
    """Opinions keyed by ``(question_id, stratum_name, values)`` in canonical order."""

    def __init__(self, opinions: Iterable[SubgroupOpinion], min_n: int = DEFAULT_MIN_N):
        self.min_n = min_n
        cells = {(o.question_id, o.subgroup.stratum.name, o.subgroup.values): o for o in opinions}
        order = sorted(cells, key=lambda k: (question_sort_key(k[0]), k[1], k[2]))
        self._cells = {k: cells[k] for k in order}
        self._by_question_stratum: dict[tuple[str, str], list[SubgroupOpinion]] = {}
        for (q, st, _), o in self._cells.items():
            self._by_question_stratum.setdefault((q, st), []).append(o)

    def __getitem__(self, key):
        return self._cells[key]

    def __iter__(self) -> Iterator:
        return iter(self._cells)

    def __len__(self):
        return len(self._cells)

    @property
    def question_ids(self) -> list[str]:
        return sorted({k[0] for k in self._cells}, key=question_sort_key)

    @property
    def strata(self) -> list[Stratum]:
        found = {o.subgroup.stratum.name: o.subgroup.stratum for o in self._cells.values()}
        return [found[name] for name in sorted(found)]

    def subgroups(self, stratum_name: str) -> list[Subgroup]:
        found = {o.subgroup.values: o.subgroup for o in self._cells.values()
                 if o.subgroup.stratum.name == stratum_name}
        return [found[v] for v in sorted(found)]

    def opinions(self, question_id: str, stratum_name: str, valid_only: bool = True) -> list[SubgroupOpinion]:
        return [o for o in self._by_question_stratum.get((question_id, stratum_name), [])
                if o.valid or not valid_only]

    def valid_cells(self) -> list[SubgroupOpinion]:
        return [o for o in self._cells.values() if o.valid]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["question_id", "stratum", "subgroup", "population_n", "n",
                        "modal_code", "mode_margin", "valid", "histogram"])
            for o in self._cells.values():
                w.writerow([o.question_id, o.subgroup.stratum.name, o.subgroup.label,
                            o.subgroup.population_n, o.n,
                            "" if o.modal_code is None else o.modal_code,
                            f"{o.mode_margin:.6f}", int(o.valid),
                            ";".join(f"{c}:{k}" for c, k in o.histogram.items())])


def opinion_matrix(table: SurveyTable, strata: Sequence[Stratum],
                   min_n: int = DEFAULT_MIN_N) -> OpinionMatrix:
    """Opinions for every active question and every observed subgroup of ``strata``.

    Invalid cells (``n < min_n``, including ``n == 0``) are kept and flagged.
    """
    active = table.active_questions
    cols = np.array([table.column_index(q.question_id) for q in active], dtype=int)
    mat = table.answer_matrix[:, cols] if len(cols) else np.empty((len(table.respondents), 0), np.int32)
    opinions = []
    for stratum in strata:
        for values, rows in _group_rows(table, stratum).items():
            sub = Subgroup(stratum, values, len(rows))
            block = mat[rows]
            codes = np.unique(block[block != MISSING_CODE])
            counts = np.stack([(block == c).sum(axis=0) for c in codes]) if len(codes) else None
            for j, q in enumerate(active):
                hist = {} if counts is None else {int(c): int(counts[i, j]) for i, c in enumerate(codes)}
                opinions.append(opinion_from_histogram(q.question_id, sub, hist, min_n))
    return OpinionMatrix(opinions, min_n)
