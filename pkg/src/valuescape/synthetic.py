"""Deterministic synthetic survey with the subgroup structure of a real national sample.

The population has 2,012 respondents spread over (sex, age group, ethnicity,
religion) so that, at a 30-respondent threshold, each stratum has the
following number of valid subgroups::

    sex 2, age_group 6, ethnicity 3, religion 7,
    sex_x_age 12, sex_x_ethnicity 6, sex_x_religion 14,
    age_x_religion 27, age_x_ethnicity 13, ethnicity_x_religion 8

The codebook has 234 questions (Q1..Q234) of which Q7..Q26 are meant to be
excluded, leaving 214.  A handful of small cross-cutting subgroups are given
question-specific gaps (members leaving a question unanswered) so that their
per-question respondent count falls below the threshold on a fixed number of
questions; every other valid subgroup keeps full coverage.

Run ``python -m valuescape.synthetic OUTDIR`` to write ``codebook.json`` and
``responses.csv``.
"""

from __future__ import annotations

import argparse
import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .survey import AXES, CATEGORIES, QuestionSpec, RespondentRecord, SurveyTable, parse_exclusions, write_codebook

AGES = ("16-24", "25-34", "35-44", "45-54", "55-64", "65+")
ETHNICITIES = ("Chinese", "Malay", "Indian", "Others", "Eurasian", "Caucasian")

# respondents per (religion, age group)
AGE_BY_RELIGION = {
    "Buddhist": (20, 77, 91, 115, 93, 129),
    "No Religion": (43, 106, 91, 85, 84, 63),
    "Protestant": (33, 50, 49, 69, 79, 67),
    "Muslim": (35, 64, 49, 40, 51, 36),
    "Other": (12, 18, 31, 22, 32, 39),
    "Roman Catholic": (10, 20, 25, 27, 24, 20),
    "Hindu": (7, 20, 37, 22, 17, 8),
    "Jewish": (0, 0, 1, 0, 1, 0),
}
# ethnic composition per religion, in ETHNICITIES order
ETHNIC_SHARE = {
    "Buddhist": (1, 0, 0, 0, 0, 0),
    "No Religion": (.955, 0, .02, .015, .005, .005),
    "Protestant": (.945, 0, .043, .005, .004, .003),
    "Muslim": (.03, .825, .13, .015, 0, 0),
    "Other": (.97, 0, 0, .03, 0, 0),
    "Roman Catholic": (.75, 0, .11, .04, .07, .03),
    "Hindu": (0, 0, 1, 0, 0, 0),
    "Jewish": (0, 0, 0, 0, 0, 1),
}
YOUNG_OLD_MUSLIM_SHARE = (.03, .79, .18, 0, 0, 0)
# women per age group; the rest of each age group is men
FEMALE_BY_AGE = dict(zip(AGES, (76, 174, 230, 208, 207, 193)))

EXCLUDED_RANGE = "Q7-Q26"
N_QUESTIONS = 234
# active questions per category, in CATEGORIES order (sums to 214)
CATEGORY_SIZES = (12, 6, 23, 24, 10, 6, 8, 20, 35, 11, 23, 36)
# questions per category on which every valid subgroup shares one modal answer (49 in all)
CONSENSUS_SIZES = (0, 0, 2, 2, 2, 0, 2, 10, 4, 6, 6, 15)
SCALES = ((1, 10), (1, 4), (1, 2), (0, 2), (1, 7), (1, 5), (1, 3))
SCALE_WEIGHTS = (.3, .3, .1, .05, .05, .1, .1)

# (questions affected, subgroup pushed below threshold, pool the missing members
# come from, other subgroups allowed to fall below threshold on the same questions)
_M4554 = {"age_group": "45-54", "ethnicity": "Malay"}
DESIGNED_GAPS = (
    (1, {"age_group": "45-54", "religion": "Muslim"}, {"ethnicity": "Malay"}, (_M4554,)),
    (1, _M4554, {}, ()),
    (6, {"age_group": "45-54", "ethnicity": "Indian"}, {"religion": "Hindu"}, ()),
    (8, {"age_group": "35-44", "religion": "Hindu"}, {}, ()),
    (1, {"age_group": "65+", "religion": "Muslim"}, {"ethnicity": "Malay"}, ()),
    (11, {"age_group": "16-24", "religion": "Muslim"}, {"ethnicity": "Malay"}, ()),
    (11, {"age_group": "16-24", "religion": "Protestant"}, {}, ()),
    (35, {"age_group": "55-64", "religion": "Other"}, {}, ()),
    (18, {"age_group": "35-44", "religion": "Other"}, {}, ()),
    (2, {"ethnicity": "Indian", "religion": "Muslim"}, {}, ()),
)

MIN_N = 30
NOISE_RATE = 0.01
NEGATIVE_CODES = (-1, -2, -4, -5)


def _split_sex(by_cell: dict, women: int) -> dict:
    """Share ``women`` across cells in proportion to size, largest remainder first."""
    total = sum(by_cell.values())
    exact = {key: k * women / total for key, k in by_cell.items()}
    female = {key: int(x) for key, x in exact.items()}
    spare = women - sum(female.values())
    for key in sorted(exact, key=lambda c: (female[c] - exact[c], c))[:spare]:
        female[key] += 1
    return female


def population_cells() -> list[tuple[tuple[str, str, str, str], int]]:
    """Respondent counts per (sex, age group, ethnicity, religion) cell, zero cells omitted."""
    by_age = {age: {} for age in AGES}
    for religion, counts in AGE_BY_RELIGION.items():
        for age, count in zip(AGES, counts):
            share = ETHNIC_SHARE[religion]
            if religion == "Muslim" and age in ("16-24", "65+"):
                share = YOUNG_OLD_MUSLIM_SHARE
            alloc = [int(count * f) for f in share]
            alloc[max(range(len(share)), key=lambda i: share[i])] += count - sum(alloc)
            for eth, k in zip(ETHNICITIES, alloc):
                if k:
                    by_age[age][(eth, religion)] = k
    cells = {}
    for age, group in by_age.items():
        female = _split_sex(group, FEMALE_BY_AGE[age])
        for (eth, religion), k in group.items():
            for sex, m in (("Female", female[(eth, religion)]), ("Male", k - female[(eth, religion)])):
                if m:
                    cells[(sex, age, eth, religion)] = m
    return sorted(cells.items())


def _demographics() -> list[dict[str, str]]:
    people = []
    for key, k in population_cells():
        people.extend(dict(zip(AXES, key)) for _ in range(k))
    return people


def make_codebook(rng: np.random.Generator) -> list[QuestionSpec]:
    excluded = set(parse_exclusions([EXCLUDED_RANGE]))
    active_ids = [f"Q{i}" for i in range(1, N_QUESTIONS + 1) if f"Q{i}" not in excluded]
    cats = [c for c, n in zip(CATEGORIES, CATEGORY_SIZES) for _ in range(n)]
    rng.shuffle(cats)
    category_of = dict(zip(active_ids, cats))
    questions = []
    for i in range(1, N_QUESTIONS + 1):
        qid = f"Q{i}"
        lo, hi = SCALES[rng.choice(len(SCALES), p=SCALE_WEIGHTS)]
        if hi - lo >= 6:
            labels = {lo: "Strongly disagree", hi: "Strongly agree"}
        else:
            labels = {c: f"Option {c}" for c in range(lo, hi + 1)}
        category = category_of.get(qid, "Social Values, Norms, Stereotypes")
        questions.append(QuestionSpec(qid, f"Synthetic item {i} on {category.lower()}.", category, lo, hi, labels))
    return questions


def consensus_questions(questions: Sequence[QuestionSpec], rng: np.random.Generator) -> set[str]:
    excluded = set(parse_exclusions([EXCLUDED_RANGE]))
    chosen = set()
    for cat, k in zip(CATEGORIES, CONSENSUS_SIZES):
        ids = [q.question_id for q in questions if q.category == cat and q.question_id not in excluded]
        chosen.update(ids[i] for i in rng.permutation(len(ids))[:k])
    return chosen


def _mode(col: np.ndarray) -> int:
    codes, counts = np.unique(col, return_counts=True)
    return int(codes[np.argmax(counts)])


def _answers(rng, questions, people, consensus) -> np.ndarray:
    n = len(people)
    male = np.array([p["sex"] == "Male" for p in people])
    out = np.empty((n, len(questions)), dtype=np.int64)
    for j, q in enumerate(questions):
        lo, hi = q.scale_min, q.scale_max
        span = hi - lo
        if q.question_id in consensus:
            # tight noise around one code: every subgroup of 30+ shares it
            out[:, j] = np.clip(np.rint(rng.integers(lo, hi + 1) + rng.normal(0, 0.25, n)), lo, hi)
            continue
        while True:
            spread = 0.0 if rng.random() < 0.45 else rng.uniform(0.05, 0.35) * span
            base = rng.uniform(lo, hi)
            latent = np.full(n, base)
            for axis in AXES:
                values = sorted({p[axis] for p in people})
                effect = dict(zip(values, rng.normal(0, spread, len(values)) if spread else np.zeros(len(values))))
                latent += np.array([effect[p[axis]] for p in people])
            latent[male] += max(1, round(0.2 * span)) * (1 if base < (lo + hi) / 2 else -1)
            latent += rng.normal(0, 0.12 * span + 0.3, n)
            col = np.clip(np.rint(latent), lo, hi)
            # contested items must split the sexes, so no such item is unanimous
            if _mode(col[male]) != _mode(col[~male]):
                break
        out[:, j] = col
    return out


def _cell_members(people, strata_axes):
    """Map (axes, values) -> member row indices, for every cell of every stratum."""
    cells = {}
    for i, p in enumerate(people):
        for axes in strata_axes:
            cells.setdefault((axes, tuple(p[a] for a in axes)), []).append(i)
    return cells


def _matches(person, spec):
    return all(person[a] == v for a, v in spec.items())


def _strata_axes():
    singles = [(a,) for a in AXES]
    pairs = [(AXES[i], AXES[j]) for i in range(len(AXES)) for j in range(i + 1, len(AXES))]
    return singles + pairs


def _cell_key(spec):
    axes = tuple(a for a in AXES if a in spec)
    return (axes, tuple(spec[a] for a in axes))


def _pick_gap_members(people, target, pool, cells, min_n, co_broken=()):
    """Members of ``target`` (drawn from ``pool``) to leave a question blank.

    Takes ``|target| - (min_n - 1)`` people, greedily choosing those whose
    other valid cells keep the most headroom above ``min_n``.
    """
    tkey = _cell_key(target)
    exempt = {tkey, *(_cell_key(c) for c in co_broken)}
    members = [i for i in cells[tkey] if _matches(people[i], pool)]
    k = len(cells[tkey]) - (min_n - 1)
    counts = {key: len(rows) for key, rows in cells.items()}
    member_sets = {key: set(rows) for key, rows in cells.items() if key not in exempt}
    membership = {i: [key for key, rows in member_sets.items() if i in rows] for i in members}
    chosen = []
    for _ in range(k):
        def headroom(i):
            return min((counts[c] - min_n for c in membership[i] if len(cells[c]) >= min_n), default=10 ** 6)
        best = max((i for i in members if i not in chosen), key=lambda i: (headroom(i), -i))
        if headroom(best) <= 0:
            raise RuntimeError(f"cannot open a gap in {target} without breaking another subgroup")
        chosen.append(best)
        for c in membership[best]:
            counts[c] -= 1
    return chosen


def make_survey(seed: int = 42, min_n: int = MIN_N) -> SurveyTable:
    """Raw (unfiltered) synthetic survey; apply ``Q7-Q26`` exclusions and negative-code filtering downstream."""
    rng = np.random.default_rng(seed)
    people = _demographics()
    questions = make_codebook(rng)
    answers = _answers(rng, questions, people, consensus_questions(questions, rng))
    missing = np.zeros(answers.shape, dtype=bool)

    excluded = set(parse_exclusions([EXCLUDED_RANGE]))
    active_cols = [j for j, q in enumerate(questions) if q.question_id not in excluded]
    gap_cols = iter(rng.permutation(active_cols).tolist())
    cells = _cell_members(people, _strata_axes())
    for n_questions, target, pool, co_broken in DESIGNED_GAPS:
        rows = _pick_gap_members(people, target, pool, cells, min_n, co_broken)
        for _ in range(n_questions):
            missing[rows, next(gap_cols)] = True

    # scattered non-substantive codes, only for people whose valid cells are all large
    roomy = _roomy(people, cells, min_n)
    noise = (rng.random(answers.shape) < NOISE_RATE) & roomy[:, None]
    answers[noise] = rng.choice(NEGATIVE_CODES, size=int(noise.sum()))

    respondents = []
    for i, p in enumerate(people):
        ans = {q.question_id: int(answers[i, j]) for j, q in enumerate(questions) if not missing[i, j]}
        respondents.append(RespondentRecord(f"R{i + 1:04d}", p, ans))
    provenance = {"sources": [f"synthetic(seed={seed})"], "log": []}
    return SurveyTable(tuple(questions), tuple(respondents), AXES, provenance)


def _roomy(people, cells, min_n) -> np.ndarray:
    ok = np.ones(len(people), dtype=bool)
    for rows in cells.values():
        if min_n <= len(rows) < 2 * min_n:
            ok[rows] = False
    return ok


def write_survey(table: SurveyTable, outdir) -> tuple[Path, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    codebook_path = outdir / "codebook.json"
    responses_path = outdir / "responses.csv"
    write_codebook(table.questions, codebook_path)
    qids = [q.question_id for q in table.questions]
    with open(responses_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["respondent_id", *AXES, *qids])
        for r in table.respondents:
            w.writerow([r.respondent_id, *(r.demographics[a] for a in AXES),
                        *(r.answers.get(q, "") for q in qids)])
    return codebook_path, responses_path


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args(argv)
    paths = write_survey(make_survey(args.seed), args.outdir)
    print(json.dumps({"codebook": str(paths[0]), "responses": str(paths[1])}))


if __name__ == "__main__":
    main()
