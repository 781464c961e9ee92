"""The basic-skill instruction language.

Two templates make up the whole language::

    Pick up the {part} of the {cloth}
    Fold it to the {part}

``parse_instruction`` and ``render_instruction`` are inverse on the finite
set of (cloth type, part, kind) triples.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Iterator

from .errors import ClothTypeMismatch, NoTemplateMatch, UnknownClothType, UnknownPart

PICK = "pick"
PLACE = "place"
KINDS = (PICK, PLACE)

CLOTH_TYPES = ("square", "rectangular", "tshirt", "skirt", "trousers")

_FLAT_PARTS = (
    "top left corner",
    "top right corner",
    "bottom left corner",
    "bottom right corner",
    "top edge",
    "bottom edge",
    "left edge",
    "right edge",
    "center",
)

_VOCAB: dict[str, tuple[str, ...]] = {
    "square": _FLAT_PARTS,
    "rectangular": _FLAT_PARTS,
    "tshirt": (
        "left sleeve",
        "right sleeve",
        "left collar",
        "right collar",
        "left shoulder",
        "right shoulder",
        "left hem",
        "right hem",
        "center",
    ),
    "skirt": (
        "waist left corner",
        "waist right corner",
        "waist center",
        "bottom left corner",
        "bottom right corner",
        "bottom edge",
        "left edge",
        "right edge",
        "center",
    ),
    "trousers": (
        "waist left corner",
        "waist right corner",
        "waist center",
        "left leg hem",
        "right leg hem",
        "left leg inner hem",
        "right leg inner hem",
        "crotch",
        "center",
    ),
}

DISPLAY_NAMES = {
    "square": "square cloth",
    "rectangular": "rectangular cloth",
    "tshirt": "T-shirt",
    "skirt": "skirt",
    "trousers": "trousers",
}

# surface forms accepted for the cloth slot, after lowercasing and whitespace collapse
CLOTH_ALIASES = {
    "square": "square",
    "square cloth": "square",
    "square towel": "square",
    "rectangle": "rectangular",
    "rectangular": "rectangular",
    "rectangle cloth": "rectangular",
    "rectangular cloth": "rectangular",
    "rectangular towel": "rectangular",
    "t-shirt": "tshirt",
    "tshirt": "tshirt",
    "t shirt": "tshirt",
    "tee shirt": "tshirt",
    "tee": "tshirt",
    "skirt": "skirt",
    "trousers": "trousers",
    "trouser": "trousers",
    "pants": "trousers",
}

_PICK_RE = re.compile(r"^pick up the (?P<part>.+?) of the (?P<cloth>.+)$")
_PLACE_RE = re.compile(r"^fold it to the (?P<part>.+)$")


@dataclass(frozen=True)
class ClothPartVocab:
    cloth_type: str
    parts: tuple[str, ...]

    def __contains__(self, part: object) -> bool:
        return part in self.parts

    def __iter__(self) -> Iterator[str]:
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)


@dataclass(frozen=True)
class BasicInstruction:
    """One pick or place step. Construction does not check the vocabulary; see ``check``."""

    kind: str
    part: str
    cloth_type: str

    def check(self) -> "BasicInstruction":
        if self.kind not in KINDS:
            raise ValueError(f"instruction kind must be 'pick' or 'place', got {self.kind!r}")
        if self.part not in vocabulary(self.cloth_type):
            raise UnknownPart(self.part, self.cloth_type)
        return self

    @property
    def text(self) -> str:
        return render_instruction(self)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "part": self.part, "cloth_type": self.cloth_type}


def canonical_cloth_type(name: str) -> str:
    key = _normalize(name)
    if key in _VOCAB:
        return key
    try:
        return CLOTH_ALIASES[key]
    except KeyError:
        raise UnknownClothType(name) from None


def vocabulary(cloth_type: str) -> ClothPartVocab:
    try:
        return ClothPartVocab(cloth_type, _VOCAB[cloth_type])
    except (KeyError, TypeError):
        raise UnknownClothType(cloth_type) from None


def vocab_fingerprint() -> str:
    h = hashlib.sha256()
    for cloth_type in CLOTH_TYPES:
        h.update(cloth_type.encode())
        for part in _VOCAB[cloth_type]:
            h.update(b"\0" + part.encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def _normalize(text: str) -> str:
    return " ".join(text.strip().lower().split())


def parse_instruction(text: str, cloth_type: str) -> BasicInstruction:
    """Parse one templated instruction; raises a ``GrammarError`` subclass on any failure."""
    if cloth_type not in _VOCAB:
        raise UnknownClothType(cloth_type)
    norm = _normalize(str(text)).rstrip(".").rstrip()
    m = _PICK_RE.match(norm)
    if m:
        found = CLOTH_ALIASES.get(m.group("cloth"), m.group("cloth"))
        if found != cloth_type:
            raise ClothTypeMismatch(found, cloth_type)
        kind, part = PICK, m.group("part")
    else:
        m = _PLACE_RE.match(norm)
        if not m:
            raise NoTemplateMatch(text)
        kind, part = PLACE, m.group("part")
    if part not in _VOCAB[cloth_type]:
        raise UnknownPart(part, cloth_type)
    return BasicInstruction(kind, part, cloth_type)


def render_instruction(inst: BasicInstruction) -> str:
    if inst.kind == PICK:
        cloth = DISPLAY_NAMES.get(inst.cloth_type, inst.cloth_type)
        return f"Pick up the {inst.part} of the {cloth}"
    if inst.kind == PLACE:
        return f"Fold it to the {inst.part}"
    raise ValueError(f"instruction kind must be 'pick' or 'place', got {inst.kind!r}")


def all_instructions() -> Iterator[BasicInstruction]:
    """Every valid instruction of the language, in a fixed order."""
    for cloth_type in CLOTH_TYPES:
        for part in _VOCAB[cloth_type]:
            for kind in KINDS:
                yield BasicInstruction(kind, part, cloth_type)


def instruction_words() -> list[str]:
    """Closed word list of the language, used by the tokenizer."""
    texts = [render_instruction(inst) for inst in all_instructions()]
    texts += list(CLOTH_ALIASES)
    words: set[str] = set()
    for t in texts:
        words.update(split_words(t))
    return sorted(words)


def split_words(text: str) -> list[str]:
    return re.sub(r"[^0-9a-z]+", " ", text.lower()).split()
