"""Persona and prompt rendering, train/OOD split assignment, and JSONL export."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    ExcludedQuestionError,
    ExportError,
    MissingDisplayFormError,
    OverlappingStrataError,
    UnknownStratumError,
)
from .stratify import OpinionMatrix, Stratum, Subgroup
from .survey import AXES, QuestionSpec, question_sort_key

TEMPLATE_VERSION = "v1"
NUMERICAL = "numerical"
OPEN_ENDED = "open_ended"
TRAIN = "train"
EVAL_OOD = "eval_ood"
SPLITS = (TRAIN, EVAL_OOD)

DEFAULT_TRAIN_STRATA = ("sex_x_religion", "sex_x_age", "religion", "age_group",
                        "sex_x_ethnicity", "ethnicity", "sex")
DEFAULT_OOD_STRATA = ("age_x_religion", "age_x_ethnicity", "ethnicity_x_religion")

SYSTEM_TEMPLATE = (
    "You are a helpful assistant. Your task is to respond from the perspective of a typical "
    "{nationality} who is a {subgroup_persona}. Fully embody this persona in your response, "
    "considering their likely values, priorities, and way of speaking. Answer the user's question directly."
)

NUMERICAL_TEMPLATE = (
    "{question}\n\n"
    "Please choose one of the following options:\n"
    "{choices}\n\n"
    'Respond with only the number of your choice in the format: "Answer: {{number}}"'
)
ANSWER_FORMAT_LINE = 'Respond with only the number of your choice in the format: "Answer: {number}"'

OPEN_ENDED_TEMPLATE = (
    "{question}\n\n"
    "For context, here are the response options that were provided in the original survey:\n"
    "{choices}\n\n"
    "Based on your persona, consider the options above and explain your reasoning, what you think "
    "about this topic, and which option you would lean towards. Provide your answer in a natural, "
    "open-ended conversational style."
)

_AGES = ("16-24", "25-34", "35-44", "45-54", "55-64", "65+")

DEFAULT_DISPLAY_FORMS: dict[str, dict[str, str]] = {
    "sex": {"Female": "female", "Male": "male"},
    "age_group": {
        **{a: f"{a} years old" for a in _AGES},
        **{f"{a} years": f"{a} years old" for a in _AGES},
    },
    "ethnicity": {e: e for e in ("Chinese", "Malay", "Indian", "Others", "Eurasian", "Caucasian")},
    "religion": {r: r for r in ("Buddhist", "No Religion", "Protestant", "Muslim", "Other",
                                "Roman Catholic", "Hindu", "Jewish", "Taoist")},
}


@dataclass(frozen=True)
class PromptSet:
    system_prompt: str
    user_prompt: str
    mode: str


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    question_id: str
    subgroup: Subgroup
    persona_text: str
    split: str
    prompts: PromptSet
    open_prompts: PromptSet
    gold_modal_code: int
    gold_stance_label: str
    scale_min: int
    scale_max: int

    @property
    def stratum(self) -> str:
        return self.subgroup.stratum.name

    @property
    def target(self) -> str:
        return f"Answer: {self.gold_modal_code}"


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...]
    counts: Mapping[str, int]
    config: Mapping = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.records)

    def split(self, name: str) -> "DatasetManifest":
        recs = tuple(r for r in self.records if r.split == name)
        return DatasetManifest(recs, stratum_counts(recs), dict(self.config))

    def subgroup_counts(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for r in self.records:
            key = (r.stratum, r.subgroup.label)
            out[key] = out.get(key, 0) + 1
        return out


def stratum_counts(records: Iterable[SampleRecord]) -> dict[str, int]:
    out: dict[str, int] = {}
    for r in records:
        out[r.stratum] = out.get(r.stratum, 0) + 1
    return out


def render_persona(subgroup: Subgroup, display_forms: Mapping[str, Mapping[str, str]] = DEFAULT_DISPLAY_FORMS) -> str:
    """Comma-joined descriptors in the stratum's axis order, e.g. ``"female, Buddhist"``."""
    parts = []
    for axis, value in zip(subgroup.stratum.axes, subgroup.values):
        try:
            parts.append(display_forms[axis][value])
        except KeyError:
            raise MissingDisplayFormError(f"no display form for {axis}={value!r}") from None
    return ", ".join(parts)


def render_choices(question: QuestionSpec) -> str:
    """``code: label`` lines in ascending code order.

    Only labeled codes are listed when the codebook labels some of them; with
    no labels at all every code on the scale is listed bare.
    """
    if question.choice_labels:
        return "\n".join(f"{c}: {question.choice_labels[c]}" for c in sorted(question.choice_labels))
    return "\n".join(str(c) for c in range(question.scale_min, question.scale_max + 1))


def render_prompts(question: QuestionSpec, subgroup: Subgroup, mode: str = NUMERICAL, *,
                   nationality: str = "Singaporean",
                   display_forms: Mapping[str, Mapping[str, str]] = DEFAULT_DISPLAY_FORMS) -> PromptSet:
    if question.excluded:
        raise ExcludedQuestionError(question.question_id)
    if mode == NUMERICAL:
        template = NUMERICAL_TEMPLATE
    elif mode == OPEN_ENDED:
        template = OPEN_ENDED_TEMPLATE
    else:
        raise ValueError(f"unknown prompt mode {mode!r}")
    persona = render_persona(subgroup, display_forms)
    system = SYSTEM_TEMPLATE.format(nationality=nationality, subgroup_persona=persona)
    user = template.format(question=question.text, choices=render_choices(question))
    return PromptSet(system, user, mode)


def resolve_strata(names: Sequence[str], axes: Sequence[str] = AXES) -> list[Stratum]:
    return [Stratum.from_name(n, axes) for n in names]


def check_split_strata(train_strata: Sequence[str], ood_strata: Sequence[str],
                       axes: Sequence[str] = AXES) -> tuple[list[Stratum], list[Stratum]]:
    """Resolve both lists and reject any stratum that appears in both."""
    train = resolve_strata(train_strata, axes)
    ood = resolve_strata(ood_strata, axes)
    overlap = {s.name for s in train} & {s.name for s in ood}
    if overlap:
        raise OverlappingStrataError(f"strata in both splits: {sorted(overlap)}")
    return train, ood


def compositional_gaps(train_strata: Sequence[str], ood_strata: Sequence[str],
                       axes: Sequence[str] = AXES) -> dict[str, list[str]]:
    """Axes of each OOD stratum that no training stratum covers (empty when all are covered)."""
    train, ood = check_split_strata(train_strata, ood_strata, axes)
    seen = {a for s in train for a in s.axes}
    return {s.name: [a for a in s.axes if a not in seen] for s in ood if any(a not in seen for a in s.axes)}


def build_splits(matrix: OpinionMatrix, questions: Iterable[QuestionSpec],
                 train_strata: Sequence[str] = DEFAULT_TRAIN_STRATA,
                 ood_strata: Sequence[str] = DEFAULT_OOD_STRATA, *,
                 min_n: int | None = None, exclusions: Sequence[str] = (),
                 nationality: str = "Singaporean",
                 display_forms: Mapping[str, Mapping[str, str]] = DEFAULT_DISPLAY_FORMS,
                 axes: Sequence[str] = AXES) -> DatasetManifest:
    """One sample per valid (question, subgroup) cell of each listed stratum.

    A cell qualifies when its subgroup has at least ``min_n`` members and at
    least ``min_n`` of them answered the question.  ``min_n`` defaults to the
    matrix's own threshold.
    """
    train, ood = check_split_strata(train_strata, ood_strata, axes)
    min_n = matrix.min_n if min_n is None else min_n
    by_id = {q.question_id: q for q in questions}
    available = {s.name for s in matrix.strata}
    for s in (*train, *ood):
        if s.name not in available:
            raise UnknownStratumError(f"{s.name} not present in the opinion matrix")

    split_of = {s.name: TRAIN for s in train} | {s.name: EVAL_OOD for s in ood}
    records = []
    for (qid, stratum, _), op in matrix.items():
        split = split_of.get(stratum)
        if split is None or not op.valid or op.n < min_n or op.subgroup.population_n < min_n:
            continue
        q = by_id[qid]
        if q.excluded:
            continue
        sg = op.subgroup
        records.append(SampleRecord(
            sample_id=f"{qid}_{stratum}_{sg.label}",
            question_id=qid,
            subgroup=sg,
            persona_text=render_persona(sg, display_forms),
            split=split,
            prompts=render_prompts(q, sg, NUMERICAL, nationality=nationality, display_forms=display_forms),
            open_prompts=render_prompts(q, sg, OPEN_ENDED, nationality=nationality, display_forms=display_forms),
            gold_modal_code=op.modal_code,
            gold_stance_label=q.label_for(op.modal_code),
            scale_min=q.scale_min,
            scale_max=q.scale_max,
        ))
    records.sort(key=_record_order)
    config = {
        "min_n": min_n,
        "exclusions": list(exclusions),
        "template_version": TEMPLATE_VERSION,
        "train_strata": [s.name for s in train],
        "ood_strata": [s.name for s in ood],
        "nationality": nationality,
    }
    return DatasetManifest(tuple(records), stratum_counts(records), config)


def _record_order(r: SampleRecord):
    return (SPLITS.index(r.split), r.stratum, r.subgroup.values, question_sort_key(r.question_id))


# --- export / import -------------------------------------------------------


def _record_to_json(r: SampleRecord) -> dict:
    return {
        "system": r.prompts.system_prompt,
        "user": r.prompts.user_prompt,
        "assistant": r.target,
        "metadata": {
            "sample_id": r.sample_id,
            "question_id": r.question_id,
            "stratum_axes": list(r.subgroup.stratum.axes),
            "subgroup_values": list(r.subgroup.values),
            "population_n": r.subgroup.population_n,
            "persona_text": r.persona_text,
            "split": r.split,
            "open_ended_user": r.open_prompts.user_prompt,
            "gold_modal_code": r.gold_modal_code,
            "gold_stance_label": r.gold_stance_label,
            "scale_min": r.scale_min,
            "scale_max": r.scale_max,
        },
    }


def _record_from_json(d: Mapping) -> SampleRecord:
    m = d["metadata"]
    sg = Subgroup(Stratum(tuple(m["stratum_axes"])), tuple(m["subgroup_values"]), int(m["population_n"]))
    gold = int(m["gold_modal_code"])
    if d["assistant"] != f"Answer: {gold}":
        raise ValueError(f"{m['sample_id']}: completion {d['assistant']!r} disagrees with gold {gold}")
    return SampleRecord(
        sample_id=m["sample_id"],
        question_id=m["question_id"],
        subgroup=sg,
        persona_text=m["persona_text"],
        split=m["split"],
        prompts=PromptSet(d["system"], d["user"], NUMERICAL),
        open_prompts=PromptSet(d["system"], m["open_ended_user"], OPEN_ENDED),
        gold_modal_code=gold,
        gold_stance_label=m["gold_stance_label"],
        scale_min=int(m["scale_min"]),
        scale_max=int(m["scale_max"]),
    )


def _meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def export_training_records(manifest: DatasetManifest, path) -> Path:
    """Write one ``{system, user, assistant, metadata}`` object per line.

    The manifest config and per-stratum counts go to a ``<path>.meta.json``
    sidecar so :func:`import_training_records` can rebuild the manifest.
    """
    if not manifest.records:
        raise ExportError("manifest has no records to export")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for r in manifest.records:
                fh.write(json.dumps(_record_to_json(r), ensure_ascii=False, sort_keys=True) + "\n")
        meta = {"config": dict(manifest.config), "counts": dict(manifest.counts), "total": manifest.total}
        _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def import_training_records(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        records = tuple(_record_from_json(json.loads(line)) for line in fh if line.strip())
    meta_file = _meta_path(path)
    config = {}
    if meta_file.exists():
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
        config = meta["config"]
        if meta["counts"] != stratum_counts(records):
            raise ValueError(f"{path}: record counts disagree with {meta_file.name}")
    return DatasetManifest(records, stratum_counts(records), config)
