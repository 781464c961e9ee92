import dataclasses

import numpy as np
import pytest

from clothskill.discovery import (
    Action,
    Demonstration,
    build_dataset,
    decompose_llm,
    decompose_rule,
    generate_demo,
    load_demo,
    read_dataset,
    save_demo,
    validate_decomposition,
    write_dataset,
)
from clothskill.errors import DecompositionError, MalformedResponse, UnlabelableAction
from clothskill.executor import Pose2D
from clothskill.llm import ChatClient, MockTransport, PromptConfig
from clothskill.sim import ClothState
from clothskill.tasks import Task

TROUSERS = Task("trousers_lr", "trousers", "fold the trousers from left to right", True)
TSHIRT3 = Task("tshirt_three", "tshirt",
               "Fold both sleeves inward, then fold the T-shirt top to bottom, then left to right", False)


@pytest.fixture(scope="module")
def trousers_demo(camera):
    return generate_demo(TROUSERS, Pose2D(0.01, -0.005, 0.08), camera, demo_id="tr0")


@pytest.fixture(scope="module")
def camera():
    from clothskill.camera import top_down_camera

    return top_down_camera()


def _answer(lines):
    return "Answer:\n" + "\n".join(lines)


def test_trousers_demo_gives_four_triples(trousers_demo):
    assert trousers_demo.m == 3
    triples = decompose_rule(trousers_demo)
    assert len(triples) == 4
    assert [t.instruction.kind for t in triples] == ["pick", "place", "pick", "place"]
    assert validate_decomposition(triples, trousers_demo).ok
    # each image owns one pick/place pair
    assert triples[0].image is trousers_demo.images[0] and triples[3].image is trousers_demo.images[1]


def test_tshirt_three_stage_gives_twelve(camera):
    demo = generate_demo(TSHIRT3, Pose2D(0, 0, 0), camera, demo_id="ts")
    assert demo.m == 7
    triples = decompose_rule(demo)
    assert len(triples) == 12
    assert validate_decomposition(triples, demo).ok


def test_demo_shape_is_checked(trousers_demo):
    with pytest.raises(ValueError):
        dataclasses.replace(trousers_demo, actions=trousers_demo.actions[:3])


def test_unlabelable_action(trousers_demo):
    acts = list(trousers_demo.actions)
    a = acts[2]
    acts[2] = Action(a.kind, a.pixel, (a.world[0], a.world[1] + 0.2, a.world[2]))
    with pytest.raises(UnlabelableAction):
        decompose_rule(dataclasses.replace(trousers_demo, actions=acts))
    with pytest.raises(DecompositionError):
        decompose_rule(dataclasses.replace(trousers_demo, sim_states=None))


def test_rule_is_translation_invariant(trousers_demo):
    shift = np.array([0.3, -0.2, 0.0])
    moved = dataclasses.replace(
        trousers_demo,
        actions=[Action(a.kind, a.pixel, tuple(np.add(a.world, shift))) for a in trousers_demo.actions],
        sim_states=[ClothState(s.positions + shift, s.velocities.copy()) for s in trousers_demo.sim_states],
    )
    a = [t.instruction.text for t in decompose_rule(trousers_demo)]
    b = [t.instruction.text for t in decompose_rule(moved)]
    assert a == b


def test_llm_mock_matches_rule(trousers_demo):
    rule = decompose_rule(trousers_demo)
    client = ChatClient(MockTransport(script=[_answer([t.instruction.text for t in rule])]))
    llm = decompose_llm(trousers_demo, client, PromptConfig.default())
    assert [t.instruction for t in llm] == [t.instruction for t in rule]
    assert [t.action for t in llm] == [t.action for t in rule]


@pytest.mark.parametrize("reply", [
    "I would fold the trousers neatly.",
    _answer(["Pick up the left waist of the trousers."] * 3),
])
def test_llm_malformed(trousers_demo, reply):
    prompt = dataclasses.replace(PromptConfig.default(), retries=1)
    transport = MockTransport(script=[reply, reply])
    with pytest.raises(MalformedResponse) as exc:
        decompose_llm(trousers_demo, ChatClient(transport), prompt)
    assert exc.value.raw == reply
    assert len(transport.calls) == 2  # one retry with a correction message
    assert transport.calls[1]["messages"][-1]["role"] == "user"


def test_validation_failures(trousers_demo):
    triples = decompose_rule(trousers_demo)
    swapped = list(triples)
    swapped[0], swapped[1] = (dataclasses.replace(triples[0], instruction=triples[1].instruction,
                                                  action=triples[1].action),
                              dataclasses.replace(triples[1], instruction=triples[0].instruction,
                                                  action=triples[0].action))
    rep = validate_decomposition(swapped, trousers_demo)
    assert not rep.ok and any("expected" in r for r in rep.reasons)

    a = triples[0].action
    moved = dataclasses.replace(triples[0], action=Action(a.kind, a.pixel, (a.world[0] + 0.2, a.world[1], a.world[2])))
    rep = validate_decomposition([moved] + triples[1:], trousers_demo)
    assert not rep.ok and "from the action point" in rep.reasons[0]


def test_dataset_files(tmp_path, trousers_demo):
    empty = write_dataset(build_dataset([], decompose_rule), tmp_path / "empty" / "d.jsonl")
    assert len(read_dataset(empty)) == 0

    demos = [trousers_demo] * 10
    ds = build_dataset(demos, decompose_rule)
    assert len(ds) == 40
    p1 = write_dataset(ds, tmp_path / "a" / "d.jsonl")
    again = read_dataset(p1)
    p2 = write_dataset(again, tmp_path / "b" / "d.jsonl")
    assert p1.read_bytes() == p2.read_bytes()
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_build_dataset_skips_failures(trousers_demo):
    bare = dataclasses.replace(trousers_demo, sim_states=None, demo_id="bare")
    ds = build_dataset([trousers_demo, bare], decompose_rule)
    assert len(ds) == 4 and ds.skipped == 1


def test_demo_round_trip(tmp_path, trousers_demo):
    save_demo(trousers_demo, tmp_path / "d")
    back = load_demo(tmp_path / "d")
    assert back.actions == trousers_demo.actions
    assert all(np.array_equal(a, b) for a, b in zip(back.images, trousers_demo.images))
    assert [t.instruction for t in decompose_rule(back)] == [t.instruction for t in decompose_rule(trousers_demo)]


def test_demo_needs_consistent_actions():
    img = np.ones((4, 4), np.float32)
    with pytest.raises(ValueError):
        Demonstration("square", [img, img], "x", [Action("place", (0, 0), (0, 0, 0)), Action("pick", (0, 0), (0, 0, 0))])
