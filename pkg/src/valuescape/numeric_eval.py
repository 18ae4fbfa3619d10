"""Parse numerical answers, classify refusals, and score accuracy / normalised absolute error."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateResultError, EmptyGroupError, SampleSetMismatchError
from .gateway import OK, CompletionResult
from .survey import question_sort_key

NO_NUMBER = "no_number"
OUT_OF_RANGE = "out_of_range"
SAFETY_TEXT = "safety_text"

SUBGROUP = "subgroup"
STRATUM = "stratum"
OVERALL = "overall"
QUESTION = "question"
GROUPINGS = (SUBGROUP, STRATUM, OVERALL, QUESTION)

# "Answer: 7", "answer - 7", "**Answer:** 7", "The answer is 7"; a trailing
# decimal part disqualifies the match.
_ANSWER_RE = re.compile(r"\banswer(?:\s+is)?\W{0,6}?([-+]?[0-9]+)(\.[0-9]+)?", re.IGNORECASE)
# Standalone numbers; digits glued to letters ("Q241") are not numbers.
_NUMBER_RE = re.compile(r"(?<![\w.])(-?)([0-9]+)(\.[0-9]+)?(?![\w])")
_REFUSAL_RE = re.compile(
    r"\b(?:i\s+(?:cannot|can't|can\s*not|won't|will\s+not|am\s+unable\s+to|am\s+not\s+able\s+to)"
    r"|as\s+an\s+ai|i'm\s+(?:unable|not\s+able)|i\s+do\s+not\s+have\s+personal|i\s+don't\s+have\s+personal"
    r"|unable\s+to\s+(?:answer|provide|choose))",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class ParsedAnswer:
    code: int | None = None
    reason: str | None = None

    def __post_init__(self):
        if (self.code is None) == (self.reason is None):
            raise ValueError("exactly one of code / reason must be set")

    @classmethod
    def value(cls, code: int) -> "ParsedAnswer":
        return cls(code=code)

    @classmethod
    def refusal(cls, reason: str) -> "ParsedAnswer":
        return cls(reason=reason)

    @property
    def is_refusal(self) -> bool:
        return self.code is None


def _to_int(sign: str, digits: str) -> int | None:
    try:
        return int(sign + digits)
    except ValueError:
        return None  # beyond the interpreter's integer-string limit


def _in_scale(code: int | None, scale) -> ParsedAnswer:
    if code is None or not scale.scale_min <= code <= scale.scale_max:
        return ParsedAnswer.refusal(OUT_OF_RANGE)
    return ParsedAnswer.value(code)


def parse_numeric(raw_text: str | None, question, strict: bool = False) -> ParsedAnswer:
    """Extract the chosen code from a model reply.  Never raises.

    The last ``Answer: <integer>`` match wins.  Without one (and unless
    ``strict``), a reply containing exactly one standalone integer is read as
    that integer.  Replies with no usable integer are refusals: ``safety_text``
    when they carry refusal wording next to stray numbers, ``no_number``
    otherwise.  ``question`` only needs ``scale_min`` and ``scale_max``.
    """
    if not raw_text:
        return ParsedAnswer.refusal(NO_NUMBER)
    matches = [m for m in _ANSWER_RE.finditer(raw_text) if m.group(2) is None]
    if matches:
        m = matches[-1]
        digits = m.group(1)
        sign = digits[0] if digits[0] in "+-" else ""
        return _in_scale(_to_int(sign, digits.lstrip("+-")), question)
    if strict:
        return ParsedAnswer.refusal(NO_NUMBER)

    numbers = list(_NUMBER_RE.finditer(raw_text))
    integers = [n for n in numbers if n.group(3) is None]
    if len(integers) == 1:
        n = integers[0]
        return _in_scale(_to_int(n.group(1), n.group(2)), question)
    if integers and _REFUSAL_RE.search(raw_text):
        return ParsedAnswer.refusal(SAFETY_TEXT)
    return ParsedAnswer.refusal(NO_NUMBER)


@dataclass(frozen=True)
class EvalRecord:
    sample: object  # SampleRecord
    parsed: ParsedAnswer
    correct: bool
    abs_err_norm: float | None
    raw_text: str = ""

    @property
    def refused(self) -> bool:
        return self.parsed.is_refusal


def score_record(sample, raw_text: str | None, strict: bool = False) -> EvalRecord:
    parsed = parse_numeric(raw_text, sample, strict)
    if parsed.is_refusal:
        return EvalRecord(sample, parsed, False, None, raw_text or "")
    err = abs(parsed.code - sample.gold_modal_code) / (sample.scale_max - sample.scale_min)
    return EvalRecord(sample, parsed, parsed.code == sample.gold_modal_code, err, raw_text)


def score_records(samples: Sequence, results: Iterable[CompletionResult] | Mapping[str, str],
                  strict: bool = False) -> list[EvalRecord]:
    """Score each sample against the reply whose request id equals its ``sample_id``.

    Samples without a reply, or whose request failed in transport, are
    scored as ``no_number`` refusals.
    """
    texts: dict[str, str | None] = {}
    if isinstance(results, Mapping):
        texts = dict(results)
    else:
        for r in results:
            if r.request_id in texts:
                raise DuplicateResultError(r.request_id)
            texts[r.request_id] = r.raw_text if r.status == OK else None
    known = {s.sample_id for s in samples}
    stray = [k for k in texts if k not in known]
    if stray:
        raise SampleSetMismatchError(f"{len(stray)} result(s) for unknown samples, e.g. {stray[0]!r}")
    return [score_record(s, texts.get(s.sample_id), strict) for s in samples]


@dataclass(frozen=True)
class SubgroupMetrics:
    group: str
    stratum: str | None
    n_samples: int
    n_correct: int
    n_refusals: int
    accuracy: float | None
    nmae: float | None
    refusal_rate: float

    @property
    def wrong_parsable_rate(self) -> float:
        return (self.n_samples - self.n_correct - self.n_refusals) / self.n_samples


def _group_key(rec: EvalRecord, group_by: str):
    s = rec.sample
    if group_by == SUBGROUP:
        return (s.subgroup.stratum.name, s.subgroup.values)
    if group_by == STRATUM:
        return (s.subgroup.stratum.name, ())
    if group_by == QUESTION:
        return (None, question_sort_key(s.question_id), s.question_id)
    return (None, ())


def metrics_for(records: Sequence[EvalRecord], group: str, stratum: str | None = None,
                refusals_count_as_incorrect: bool = True) -> SubgroupMetrics:
    if not records:
        raise EmptyGroupError(group)
    n = len(records)
    correct = sum(r.correct for r in records)
    refusals = sum(r.refused for r in records)
    errs = [r.abs_err_norm for r in records if r.abs_err_norm is not None]
    if refusals_count_as_incorrect:
        acc = correct / n
    else:
        acc = correct / (n - refusals) if n > refusals else None
    nmae = math.fsum(errs) / len(errs) if errs else None
    return SubgroupMetrics(group, stratum, n, correct, refusals, acc, nmae, refusals / n)


def aggregate(records: Sequence[EvalRecord], group_by: str = SUBGROUP,
              refusals_count_as_incorrect: bool = True) -> list[SubgroupMetrics]:
    """Metrics per group.  Every level averages over samples, not over subgroups.

    ``nmae`` is ``None`` for a group made only of refusals.  With
    ``refusals_count_as_incorrect`` off, accuracy is over parsable replies only.
    """
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    if not records:
        raise EmptyGroupError("no records to aggregate")
    groups: dict = {}
    for r in records:
        groups.setdefault(_group_key(r, group_by), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: (k[0] or "", *k[1:])):
        recs = groups[key]
        s = recs[0].sample
        if group_by == SUBGROUP:
            name, stratum = s.subgroup.label, s.subgroup.stratum.name
        elif group_by == STRATUM:
            name, stratum = s.subgroup.stratum.name, s.subgroup.stratum.name
        elif group_by == QUESTION:
            name, stratum = s.question_id, None
        else:
            name, stratum = OVERALL, None
        out.append(metrics_for(recs, name, stratum, refusals_count_as_incorrect))
    return out


def metrics_by_stratum(metrics: Iterable[SubgroupMetrics]) -> dict[str, list[SubgroupMetrics]]:
    """Group per-subgroup metrics by stratum for disparity analysis."""
    out: dict[str, list[SubgroupMetrics]] = {}
    for m in metrics:
        out.setdefault(m.stratum, []).append(m)
    return out
