"""Survey codebook and respondent microdata loading, plus response filtering.

Codebook format (JSON): either a top-level array of question entries or an
object ``{"questions": [...]}``.  Each entry carries::

    {
      "question_id": "Q241",
      "text": "On a scale of 1 to 10 ...",
      "category": "Political Culture & Regimes",
      "scale_min": 1,
      "scale_max": 10,
      "choice_labels": {"1": "Not an essential characteristic", "10": "An essential characteristic"},
      "excluded": false            # optional
    }

Responses format (delimited text with a header row): one id column, one
column per demographic axis, one column per question id.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateQuestionIdError,
    MalformedRowError,
    MissingFieldError,
    NonOrdinalScaleError,
    UnknownQuestionColumnError,
    UnknownQuestionError,
)

AXES = ("sex", "age_group", "ethnicity", "religion")
UNKNOWN = "unknown"
MISSING_CODE = np.iinfo(np.int32).min

CATEGORIES = (
    "Religious Values",
    "Perceptions about Science/Tech",
    "Political Culture & Regimes",
    "Social Values, Norms, Stereotypes",
    "Perceptions of Migration",
    "Economic Values",
    "Perceptions of Corruption",
    "Perceptions of Security",
    "Political Interest & Participation",
    "Happiness and Wellbeing",
    "Ethical Values",
    "Social Capital, Trust, Membership",
)

AGE_BUCKETS = ((16, 24, "16-24"), (25, 34, "25-34"), (35, 44, "35-44"),
               (45, 54, "45-54"), (55, 64, "55-64"), (65, None, "65+"))

_REQUIRED_FIELDS = ("question_id", "text", "category", "scale_min", "scale_max", "choice_labels")


@dataclass(frozen=True)
class QuestionSpec:
    question_id: str
    text: str
    category: str
    scale_min: int
    scale_max: int
    choice_labels: Mapping[int, str] = field(default_factory=dict)
    excluded: bool = False

    @property
    def n_choices(self) -> int:
        return self.scale_max - self.scale_min + 1

    @property
    def scale_range(self) -> int:
        return self.scale_max - self.scale_min

    def label_for(self, code: int) -> str:
        """Choice label for ``code``; bare number when the codebook leaves it unlabeled."""
        return self.choice_labels.get(code, str(code))

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "text": self.text,
            "category": self.category,
            "scale_min": self.scale_min,
            "scale_max": self.scale_max,
            "choice_labels": {str(k): v for k, v in sorted(self.choice_labels.items())},
            "excluded": self.excluded,
        }


@dataclass(frozen=True)
class RespondentRecord:
    respondent_id: str
    demographics: Mapping[str, str]
    answers: Mapping[str, int]


@dataclass(frozen=True)
class SurveyTable:
    questions: tuple[QuestionSpec, ...]
    respondents: tuple[RespondentRecord, ...]
    axes: tuple[str, ...] = AXES
    provenance: dict = field(default_factory=dict, compare=False)

    @cached_property
    def _by_id(self) -> dict[str, QuestionSpec]:
        return {q.question_id: q for q in self.questions}

    def question(self, question_id: str) -> QuestionSpec:
        try:
            return self._by_id[question_id]
        except KeyError:
            raise UnknownQuestionError(question_id) from None

    @property
    def active_questions(self) -> list[QuestionSpec]:
        return sorted((q for q in self.questions if not q.excluded),
                      key=lambda q: question_sort_key(q.question_id))

    @cached_property
    def answer_matrix(self) -> np.ndarray:
        """Dense ``respondents x questions`` code matrix (``MISSING_CODE`` where unanswered).

        Columns follow ``self.questions`` order.
        """
        col = {q.question_id: j for j, q in enumerate(self.questions)}
        mat = np.full((len(self.respondents), len(self.questions)), MISSING_CODE, dtype=np.int32)
        for i, r in enumerate(self.respondents):
            for qid, code in r.answers.items():
                mat[i, col[qid]] = code
        return mat

    def column_index(self, question_id: str) -> int:
        for j, q in enumerate(self.questions):
            if q.question_id == question_id:
                return j
        raise UnknownQuestionError(question_id)


def question_sort_key(question_id: str):
    """Natural ordering so that Q2 sorts before Q10."""
    m = re.fullmatch(r"([^\d]*)(\d+)(.*)", question_id)
    if m is None:
        return (question_id, -1, "")
    return (m.group(1), int(m.group(2)), m.group(3))


def age_bucket(age: int) -> str:
    """Map a raw age in years onto the survey age groups (under 16 -> unknown)."""
    for lo, hi, label in AGE_BUCKETS:
        if age >= lo and (hi is None or age <= hi):
            return label
    return UNKNOWN


def _question_from_entry(entry: Mapping, index: int) -> QuestionSpec:
    name = entry.get("question_id", f"#{index}")
    for f in _REQUIRED_FIELDS:
        if f not in entry:
            raise MissingFieldError(f, name)
    lo, hi = int(entry["scale_min"]), int(entry["scale_max"])
    if lo >= hi:
        raise NonOrdinalScaleError(f"{name}: scale_min {lo} must be below scale_max {hi}")
    labels = {int(k): str(v) for k, v in entry["choice_labels"].items()}
    stray = [k for k in labels if not lo <= k <= hi]
    if stray:
        raise NonOrdinalScaleError(f"{name}: choice labels {stray} fall outside [{lo}, {hi}]")
    return QuestionSpec(
        question_id=str(entry["question_id"]),
        text=str(entry["text"]),
        category=str(entry["category"]),
        scale_min=lo,
        scale_max=hi,
        choice_labels=labels,
        excluded=bool(entry.get("excluded", False)),
    )


def parse_codebook(entries: Sequence[Mapping]) -> list[QuestionSpec]:
    questions = []
    seen = set()
    for i, entry in enumerate(entries):
        q = _question_from_entry(entry, i)
        if q.question_id in seen:
            raise DuplicateQuestionIdError(q.question_id)
        seen.add(q.question_id)
        questions.append(q)
    return questions


def load_codebook(path) -> list[QuestionSpec]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["questions"]
    return parse_codebook(data)


def write_codebook(questions: Iterable[QuestionSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([q.to_json() for q in questions], fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def _parse_code(cell: str | None) -> int | None:
    if cell is None:
        return None
    cell = cell.strip()
    if not cell:
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        value = float(cell)
    except ValueError:
        return None
    return int(value) if value.is_integer() else None


def load_responses(path, codebook: Sequence[QuestionSpec], *, delimiter: str = ",",
                   id_column: str = "respondent_id", axes: Sequence[str] = AXES,
                   age_column: str | None = None, ignore_columns: Iterable[str] = ()) -> SurveyTable:
    """Read respondent microdata into a :class:`SurveyTable`.

    Cells that do not parse as integers are treated as missing answers and
    counted in the provenance log.  Negative codes are kept verbatim; they are
    removed later by :func:`apply_filters`.  When ``age_column`` is given, that
    column holds raw ages which are bucketed into the ``age_group`` axis.
    """
    known = {q.question_id for q in codebook}
    ignored = set(ignore_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        demo_columns = {a: a for a in axes}
        if age_column is not None:
            demo_columns["age_group"] = age_column
        for required in [id_column, *demo_columns.values()]:
            if required not in header:
                raise MalformedRowError(1, f"header lacks column {required!r}")
        structural = {id_column, *demo_columns.values()}
        question_cols = [c for c in header if c not in structural and c not in ignored]
        unknown = [c for c in question_cols if c not in known]
        if unknown:
            raise UnknownQuestionColumnError(f"columns not in codebook: {unknown}")

        respondents = []
        unparsable = 0
        for line, row in enumerate(reader, start=2):
            if None in row:
                raise MalformedRowError(line, "more cells than header columns")
            demographics = {}
            for axis, col in demo_columns.items():
                value = row.get(col)
                if value is None:
                    raise MalformedRowError(line, f"missing value for column {col!r}")
                value = value.strip()
                if axis == "age_group" and age_column is not None and value:
                    code = _parse_code(value)
                    value = age_bucket(code) if code is not None else UNKNOWN
                demographics[axis] = value or UNKNOWN
            answers = {}
            for qid in question_cols:
                raw = row.get(qid)
                if raw is None:
                    raise MalformedRowError(line, f"missing cell for question {qid!r}")
                code = _parse_code(raw)
                if code is None:
                    unparsable += raw.strip() != ""
                    continue
                answers[qid] = code
            rid = (row.get(id_column) or "").strip() or f"row{line}"
            respondents.append(RespondentRecord(rid, demographics, answers))

    provenance = {
        "sources": [str(path)],
        "log": [{"step": "load_responses", "respondents": len(respondents),
                 "question_columns": len(question_cols), "unparsable_cells": unparsable}],
    }
    return SurveyTable(tuple(codebook), tuple(respondents), tuple(axes), provenance)


def parse_exclusions(specs: Iterable[str]) -> list[str]:
    """Expand exclusion specs such as ``"Q7-Q26"`` or ``"Q7..Q26"`` into question ids."""
    out = []
    for spec in specs:
        m = re.fullmatch(r"\s*([A-Za-z_]*)(\d+)\s*(?:-|\.\.)\s*\1(\d+)\s*", spec)
        if m:
            prefix, lo, hi = m.group(1), int(m.group(2)), int(m.group(3))
            out.extend(f"{prefix}{i}" for i in range(lo, hi + 1))
        else:
            out.append(spec.strip())
    return out


def apply_filters(table: SurveyTable, exclusion_ids: Iterable[str] = (),
                  drop_negative: bool = True) -> SurveyTable:
    """Flag excluded questions and drop out-of-range answer codes.

    Codes below ``scale_min`` (negative "don't know"/"no answer" codes and
    similar) are removed when ``drop_negative`` is set; codes above
    ``scale_max`` are always removed.  Respondents are never dropped.
    """
    exclusion_ids = list(exclusion_ids)
    by_id = {q.question_id: q for q in table.questions}
    for qid in exclusion_ids:
        if qid not in by_id:
            raise UnknownQuestionError(qid)
    to_exclude = set(exclusion_ids)
    questions = tuple(replace(q, excluded=True) if q.question_id in to_exclude and not q.excluded else q
                      for q in table.questions)
    by_id = {q.question_id: q for q in questions}

    removed = {"excluded": 0, "below_range": 0, "above_range": 0}
    respondents = []
    for r in table.respondents:
        kept = {}
        for qid, code in r.answers.items():
            q = by_id[qid]
            if q.excluded:
                removed["excluded"] += 1
            elif code < q.scale_min and drop_negative:
                removed["below_range"] += 1
            elif code > q.scale_max:
                removed["above_range"] += 1
            else:
                kept[qid] = code
        respondents.append(r if len(kept) == len(r.answers) else replace(r, answers=kept))

    provenance = dict(table.provenance)
    provenance["log"] = [*table.provenance.get("log", []), {
        "step": "apply_filters",
        "excluded_questions": sorted((q.question_id for q in questions if q.excluded), key=question_sort_key),
        "active_questions": sum(not q.excluded for q in questions),
        "answers_removed": removed,
    }]
    return SurveyTable(questions, tuple(respondents), table.axes, provenance)


def write_filter_log(table: SurveyTable, path) -> None:
    Path(path).write_text(json.dumps(table.provenance, indent=2) + "\n", encoding="utf-8")
