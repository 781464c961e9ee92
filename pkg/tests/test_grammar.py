import pytest
from hypothesis import given, strategies as st

from clothskill.errors import ClothTypeMismatch, GrammarError, NoTemplateMatch, UnknownClothType, UnknownPart
from clothskill.grammar import (
    CLOTH_TYPES,
    PICK,
    PLACE,
    BasicInstruction,
    all_instructions,
    canonical_cloth_type,
    parse_instruction,
    render_instruction,
    vocabulary,
)


def test_pick_sleeve_of_tshirt():
    assert parse_instruction("pick up the left sleeve of the T-shirt", "tshirt") == BasicInstruction(
        PICK, "left sleeve", "tshirt")


def test_fold_to_left_hem():
    assert parse_instruction("Fold it to the left hem", "tshirt") == BasicInstruction(PLACE, "left hem", "tshirt")


def test_free_text_has_no_template():
    with pytest.raises(NoTemplateMatch):
        parse_instruction("wave the flag", "square")


def test_unknown_part_and_cloth_mismatch():
    with pytest.raises(UnknownPart):
        parse_instruction("Fold it to the left sleeve", "square")
    with pytest.raises(ClothTypeMismatch):
        parse_instruction("Pick up the center of the skirt", "square")
    with pytest.raises(UnknownClothType):
        parse_instruction("Fold it to the center", "sock")


def test_render_examples():
    # rendering does not consult the vocabulary, so any part label fills the template
    assert render_instruction(BasicInstruction(PICK, "right collar", "skirt")) == "Pick up the right collar of the skirt"
    assert render_instruction(BasicInstruction(PLACE, "top edge", "square")) == "Fold it to the top edge"


def test_square_vocabulary():
    parts = vocabulary("square").parts
    assert len(parts) == 9
    assert {"top left corner", "top right corner", "bottom left corner", "bottom right corner",
            "top edge", "bottom edge", "left edge", "right edge", "center"} == set(parts)


def test_tshirt_vocabulary_has_sleeves_and_collars():
    parts = set(vocabulary("tshirt"))
    assert {"left sleeve", "right sleeve", "left collar", "right collar"} <= parts


def test_vocabulary_sizes_and_uniqueness():
    for c in CLOTH_TYPES:
        parts = vocabulary(c).parts
        assert 9 <= len(parts) <= 12
        assert len(set(parts)) == len(parts)
    with pytest.raises(UnknownClothType):
        vocabulary("sock")


def test_roundtrip_exhaustive():
    n = 0
    for inst in all_instructions():
        assert parse_instruction(render_instruction(inst), inst.cloth_type) == inst
        n += 1
    assert n == 2 * sum(len(vocabulary(c)) for c in CLOTH_TYPES)


def test_aliases():
    assert canonical_cloth_type("T Shirt") == "tshirt"
    assert canonical_cloth_type("  Rectangle ") == "rectangular"
    assert parse_instruction("pick up the crotch of the pants.", "trousers").part == "crotch"


@given(st.text(max_size=60))
def test_parser_is_total(text):
    try:
        inst = parse_instruction(text, "tshirt")
    except GrammarError:
        return
    assert inst.check() is inst
