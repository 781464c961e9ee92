import json

import pytest

from clothskill.errors import ConfigError, MalformedPlan, SchemaInapplicable, UnknownSchema
from clothskill.grammar import PICK, PLACE, BasicInstruction
from clothskill.llm import ChatClient, MockTransport, PromptConfig
from clothskill.planner import TaskPlan, TaskSpec, plan_llm, plan_rule, split_clauses, validate_plan
from clothskill.tasks import Task, find_task, load_suite

TASK3 = "Fold both sleeves inward, then fold the T-shirt top to bottom, then left to right"


def test_trousers_left_to_right():
    plan = plan_rule(TaskSpec("fold the trousers from left to right", "trousers"))
    assert plan.texts() == [
        "Pick up the waist left corner of the trousers", "Fold it to the waist right corner",
        "Pick up the left leg hem of the trousers", "Fold it to the right leg hem",
    ]


def test_task3_has_twelve_steps():
    plan = plan_rule(TaskSpec(TASK3, "tshirt"))
    assert len(plan) == 12
    assert validate_plan(plan).ok
    assert [s.part for s in plan.steps[:4]] == ["left sleeve", "left collar", "right sleeve", "right collar"]


def test_unknown_and_inapplicable_schema():
    with pytest.raises(UnknownSchema):
        plan_rule(TaskSpec("iron the shirt", "tshirt"))
    with pytest.raises(SchemaInapplicable):
        plan_rule(TaskSpec("fold the sleeves", "square"))
    with pytest.raises(UnknownSchema):
        plan_rule(TaskSpec("fold from left to top", "square"))


def test_direction_conventions():
    v = plan_rule(TaskSpec("fold in half vertically", "square"))
    assert [s.part for s in v.steps] == ["top left corner", "bottom left corner", "top right corner", "bottom right corner"]
    h = plan_rule(TaskSpec("half folding (horizontal)", "rectangular"))
    assert [s.part for s in h.steps][:2] == ["top left corner", "top right corner"]
    flipped = plan_rule(TaskSpec("half folding (vertical)", "square", {"vertical": ("bottom", "top")}))
    assert flipped.steps[0].part == "bottom left corner"


def test_corner_schemas():
    assert len(plan_rule(TaskSpec("fold all four corners to the center", "square"))) == 8
    one = plan_rule(TaskSpec("fold the bottom right corner to the top left corner", "square"))
    assert [s.part for s in one.steps] == ["bottom right corner", "top left corner"]


def test_split_clauses():
    assert split_clauses("Fold A, then B; and C") == ["fold a", "b", "c"]


def test_validate_plan_collects_errors():
    p = TaskPlan([BasicInstruction(PICK, "center", "square"), BasicInstruction(PICK, "center", "square"),
                  BasicInstruction(PLACE, "center", "square"), BasicInstruction(PLACE, "left sleeve", "square")],
                 "square")
    check = validate_plan(p)
    assert not check.ok
    assert sum("alternate" in e for e in check.errors) == 2
    assert any("left sleeve" in e for e in check.errors)
    empty = validate_plan(TaskPlan([], "square"))
    assert empty.ok and empty.warnings


def test_empty_task_rejected():
    with pytest.raises(ValueError):
        TaskSpec("   ", "square")


def _client(*responses):
    return ChatClient(MockTransport(script=list(responses)))


def test_llm_plan_matches_rule():
    spec = TaskSpec("fold the trousers from left to right", "trousers")
    rule = plan_rule(spec)
    text = "The left side moves right.\nANSWER:\n" + "\n".join(f"{i + 1}. {t}" for i, t in enumerate(rule.texts()))
    assert plan_llm(spec, _client(text), PromptConfig.default()) == rule


def test_llm_plan_rejects_odd_and_unknown_parts():
    prompt = PromptConfig.default()
    prompt.retries = 0
    spec = TaskSpec("fold the square in half", "square")
    with pytest.raises(MalformedPlan, match="odd"):
        plan_llm(spec, _client("ANSWER:\nPick up the center of the square cloth"), prompt)
    with pytest.raises(MalformedPlan, match="left sleeve") as info:
        plan_llm(spec, _client("ANSWER:\nPick up the left sleeve of the square cloth\nFold it to the center"), prompt)
    assert "left sleeve" in info.value.raw


def test_llm_plan_retries_then_succeeds():
    transport = MockTransport(script=["no idea", "ANSWER:\nPick up the center of the skirt\nFold it to the waist center"])
    prompt = PromptConfig.default()
    plan = plan_llm(TaskSpec("fold it", "skirt"), ChatClient(transport), prompt)
    assert len(plan) == 2
    second = transport.calls[1]["messages"]
    assert second[-2]["role"] == "assistant" and "invalid" in second[-1]["content"]


# ---------------------------------------------------------------- suite

def test_suite_shape():
    suite = load_suite()
    assert len(suite) == 10
    assert sum(t.seen for t in suite) == 5
    assert {t.cloth_type for t in suite} == {"square", "rectangular", "tshirt", "skirt", "trousers"}
    for t in suite:
        assert validate_plan(t.plan()).ok


def test_find_task_lists_suite():
    with pytest.raises(ConfigError, match="square_one_corner"):
        find_task(load_suite(), "nope")


def test_oracle_plan_overrides(tmp_path):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps([{"name": "x", "cloth_type": "Square Cloth", "long_instruction": "anything",
                                 "seen": True, "oracle_plan": ["Pick up the center of the square cloth",
                                                               "Fold it to the top edge"]}]))
    (task,) = load_suite(path)
    assert task.cloth_type == "square"
    assert task.plan().texts()[1] == "Fold it to the top edge"
    bad = Task("y", "square", "x", True, ("Fold it to the center",))
    with pytest.raises(ConfigError):
        bad.plan()


def test_suite_errors(tmp_path):
    dup = tmp_path / "dup.json"
    entry = {"name": "a", "cloth_type": "square", "long_instruction": "x", "seen": True}
    dup.write_text(json.dumps([entry, entry]))
    with pytest.raises(ConfigError):
        load_suite(dup)
    with pytest.raises(ConfigError):
        load_suite(tmp_path / "missing.json")
