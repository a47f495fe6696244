import datetime as dt
import json

import pytest
from hypothesis import given, strategies as st

from qaplan.asp import parse_facts
from qaplan.catalog import data_path
from qaplan.evaluation import (
    DatasetSchemaError, aggregate, load_dataset, normalize_amount, normalize_date,
    run_eval, score, score_error, CaseResult,
)
from qaplan.pddl import generate_task
from qaplan.planner import Plan, ground, solve
from qaplan.reasoner import materialize

DATAFLOW_ROW = {
    "id": "d", "query": "q", "category": "2_apis_with_dataflow", "complete": True,
    "gt_calls": [
        {"api": "profit_loss", "entities": {"startperiod": "07/01/2024", "endperiod": "09/30/2024"}},
        {"api": "contact_us_api", "entities": {"contact_topic": {"ref": 0}, "contact_channel": "phone"}},
    ],
}
DATAFLOW_FACTS = """_goal(x, goal_1). _report_period(x, ("07/01/2024", "09/30/2024")).
    _goal(y, goal_6). _contact_topic(y, x). _contact_channel(y, "phone")."""


@pytest.fixture
def write_rows(tmp_path):
    def write(*rows):
        path = tmp_path / "ds.jsonl"
        path.write_text("".join((r if isinstance(r, str) else json.dumps(r)) + "\n" for r in rows))
        return path
    return write


@pytest.fixture(scope="module")
def planned(rules, catalog, domain):
    def run(text):
        task, bindings = generate_task(materialize(parse_facts(text), rules), catalog)
        return solve(ground(domain, task)), bindings
    return run


def one_case(write_rows, catalog, row):
    [case] = load_dataset(write_rows(row), catalog)
    return case


def test_bundled_dataset_loads(catalog):
    cases = load_dataset(data_path("dataset.jsonl"), catalog)
    assert len(cases) == 60
    assert len({c.id for c in cases}) == 60


def test_missing_entity_and_normalization(write_rows, catalog):
    case = one_case(write_rows, catalog, {
        "id": "c", "query": "Why was I charged $75?", "category": "charge_lookup", "complete": False,
        "gt_calls": [{"api": "charge_lookup", "entities": {"dateofcharge": [], "amountofcharge": "75"}}],
    })
    [call] = case.gt_calls
    assert call.api == "charge_lookup_api"
    ents = {e.name: e for e in call.entities}
    assert ents["charge_date"].missing
    assert ents["charge_amount"].value == "75.00"


def test_short_dates_normalize(write_rows, catalog):
    case = one_case(write_rows, catalog, {
        "id": "c", "query": "q", "category": "profit_loss_report", "complete": True,
        "gt_calls": [{"api": "profit_loss", "entities": {"startperiod": "1/1/23", "endperiod": "3/31/23"}}],
    })
    assert {e.name: e.value for e in case.gt_calls[0].entities} == {
        "start_date": "01/01/2023", "end_date": "03/31/2023",
    }


def test_empty_file(write_rows, catalog, tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("\n\n")
    assert load_dataset(path, catalog) == []


@pytest.mark.parametrize("mutate, needle", [
    (lambda r: r.pop("query"), "query"),
    (lambda r: r["gt_calls"][0].update(api="teleport"), "unknown api"),
    (lambda r: r["gt_calls"][0]["entities"].pop("endperiod"), "do not cover"),
    (lambda r: r["gt_calls"][0]["entities"].update(endperiod=None), "MISSING in a complete case"),
    (lambda r: r["gt_calls"][1]["entities"].update(contact_topic={"ref": 5}), "out of range"),
    (lambda r: r["gt_calls"][0]["entities"].update(startperiod="soon"), "not a date"),
    (lambda r: r.update(complete=False), "without a MISSING"),
])
def test_schema_errors_carry_line(write_rows, catalog, mutate, needle):
    row = json.loads(json.dumps(DATAFLOW_ROW))
    mutate(row)
    with pytest.raises(DatasetSchemaError, match=needle) as info:
        load_dataset(write_rows("", DATAFLOW_ROW | {"id": "ok"}, row), catalog)
    assert info.value.line == 3


def test_invalid_json_line(write_rows, catalog):
    with pytest.raises(DatasetSchemaError) as info:
        load_dataset(write_rows(DATAFLOW_ROW, "{oops"), catalog)
    assert info.value.line == 2


def test_duplicate_ids(write_rows, catalog):
    with pytest.raises(DatasetSchemaError, match="duplicate"):
        load_dataset(write_rows(DATAFLOW_ROW, DATAFLOW_ROW), catalog)


def test_dataflow_case_scores(write_rows, catalog, planned):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    plan, bindings = planned(DATAFLOW_FACTS)
    result = score(case, plan, bindings, catalog)
    assert result.success, result.diagnostics


def test_lost_dataflow_is_an_orchestration_error(write_rows, catalog, planned):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    plan, bindings = planned(DATAFLOW_FACTS.replace("_contact_topic(y, x).", '_contact_topic(y, "Billing").'))
    result = score(case, plan, bindings, catalog)
    assert not result.orchestration_correct
    assert "not fed by" in result.diagnostics


def test_hallucinated_date_is_an_entity_error(write_rows, catalog, planned):
    case = one_case(write_rows, catalog, {
        "id": "c", "query": "Profit and loss report", "category": "profit_loss_report", "complete": False,
        "gt_calls": [{"api": "profit_loss", "entities": {"startperiod": None, "endperiod": None}}],
    })
    plan, bindings = planned("_goal(x, goal_1).")
    assert score(case, plan, bindings, catalog).success
    plan, bindings = planned('_goal(x, goal_1). _report_period(x, ("01/01/2024", "03/31/2024")).')
    result = score(case, plan, bindings, catalog)
    assert result.orchestration_correct and not result.entities_correct


def test_wrong_value(write_rows, catalog, planned):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    plan, bindings = planned(DATAFLOW_FACTS.replace('"phone"', '"chat"'))
    result = score(case, plan, bindings, catalog)
    assert result.orchestration_correct and not result.entities_correct


def test_wrong_api(write_rows, catalog, planned):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    plan, bindings = planned(DATAFLOW_FACTS.replace("goal_1", "goal_2"))
    assert not score(case, plan, bindings, catalog).orchestration_correct


def test_no_plan_and_errors(write_rows, catalog):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    assert not score(case, None, {}, catalog).success
    assert not score_error(case, ["end date must be after start date"]).success
    assert not score(case, Plan(), {}, catalog).success


def test_expected_constraint_violation(catalog):
    [case] = [c for c in load_dataset(data_path("dataset.jsonl"), catalog) if c.expect_error]
    assert score_error(case, ["end date must be after start date"]).success
    assert not score_error(case, ["something else"]).success


def test_run_eval_is_deterministic(catalog, pipeline):
    cases = load_dataset(data_path("dataset.jsonl"), catalog)[:12]
    a = run_eval(cases, pipeline, runs=2)
    b = run_eval(cases, pipeline, runs=1, workers=4)
    assert a.overall.success == b.overall.success
    assert a.overall.success_variance == 0.0
    assert [r.success for r in a.results[0]] == [r.success for r in b.results[0]]


def test_aggregate_variance_in_percentage_points(write_rows, catalog):
    case = one_case(write_rows, catalog, DATAFLOW_ROW)
    runs = [[CaseResult("d", True, True)], [CaseResult("d", False, True)]]
    report = aggregate([case], runs)
    assert report.overall.success == 0.5
    assert report.overall.success_variance == 2500.0
    assert report.overall.entity == 1.0
    assert "overall" in report.to_text()
    assert json.loads(json.dumps(report.to_json()))["runs"] == 2


def test_run_eval_rejects_empty(pipeline):
    with pytest.raises(ValueError):
        run_eval([], pipeline)


@given(st.dates(dt.date(2000, 1, 1), dt.date(2099, 12, 31)))
def test_normalize_date_accepts_short_forms(day):
    expected = day.strftime("%m/%d/%Y")
    assert normalize_date(f"{day.month}/{day.day}/{day.year % 100:02d}") == expected
    assert normalize_date(expected) == expected


@pytest.mark.parametrize("raw, expected", [("75", "75.00"), ("$4,500", "4500.00"), ("30.5", "30.50")])
def test_normalize_amount(raw, expected):
    assert normalize_amount(raw) == expected
