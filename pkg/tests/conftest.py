import json

import pytest

from valuescape import synthetic
from valuescape.stratify import enumerate_strata, opinion_matrix
from valuescape.survey import QuestionSpec, RespondentRecord, SurveyTable, apply_filters, parse_exclusions


def make_table(people, questions):
    """``people`` is a list of (demographics dict, answers dict)."""
    respondents = tuple(RespondentRecord(f"R{i}", d, a) for i, (d, a) in enumerate(people))
    return SurveyTable(tuple(questions), respondents)


@pytest.fixture
def tiny_questions():
    return [
        QuestionSpec("Q1", "How important is family?", "Happiness and Wellbeing", 1, 4,
                     {1: "Very important", 2: "Rather important", 3: "Not very important", 4: "Not at all important"}),
        QuestionSpec("Q2", "Rate democracy.", "Political Culture & Regimes", 1, 10,
                     {1: "Not essential", 10: "Essential"}),
        QuestionSpec("Q3", "Excluded item.", "Ethical Values", 1, 2, {1: "Yes", 2: "No"}),
    ]


@pytest.fixture
def tiny_table(tiny_questions):
    people = []
    for i in range(40):
        demo = {"sex": "Female" if i % 2 else "Male", "age_group": "25-34" if i < 20 else "55-64",
                "ethnicity": "Chinese", "religion": "Buddhist" if i % 4 < 2 else "Muslim"}
        people.append((demo, {"Q1": 1 + (i % 3 == 0), "Q2": 3 + i % 5, "Q3": 1}))
    return make_table(people, tiny_questions)


@pytest.fixture(scope="session")
def full_survey():
    table = apply_filters(synthetic.make_survey(), parse_exclusions([synthetic.EXCLUDED_RANGE]))
    return table, opinion_matrix(table, enumerate_strata(), 30)


@pytest.fixture
def synthetic_config(tmp_path):
    """Write the synthetic survey plus a mock-provider run config; return the config path."""
    data = tmp_path / "data"
    synthetic.write_survey(synthetic.make_survey(), data)

    def write(**overrides):
        cfg = {
            "codebook": "data/codebook.json",
            "responses": "data/responses.csv",
            "exclusions": ["Q7-Q26"],
            "output_dir": "out",
            "open_ended_limit": 24,
            "resamples": 200,
            "providers": {
                "evaluatee": {"kind": "mock", "model": "gold", "mock_mode": "gold"},
                "baseline": {"kind": "mock", "model": "refuser", "mock_mode": "refuse"},
                "judge": {"kind": "mock", "model": "judge", "mock_mode": "tie"},
            },
        }
        cfg.update(overrides)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg), encoding="utf-8")
        return path

    return write
