"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ClothSkillError(Exception):
    """Base class for every error raised by clothskill."""


class ConfigError(ClothSkillError):
    pass


# grammar

class GrammarError(ClothSkillError, ValueError):
    pass


class UnknownClothType(GrammarError):
    def __init__(self, cloth_type: str):
        super().__init__(f"unknown cloth type: {cloth_type!r}")
        self.cloth_type = cloth_type


class NoTemplateMatch(GrammarError):
    def __init__(self, text: str):
        super().__init__(f"text matches no instruction template: {text!r}")
        self.text = text


class UnknownPart(GrammarError):
    def __init__(self, part: str, cloth_type: str):
        super().__init__(f"unknown part {part!r} for cloth type {cloth_type!r}")
        self.part = part
        self.cloth_type = cloth_type


class ClothTypeMismatch(GrammarError):
    def __init__(self, found: str, expected: str):
        super().__init__(f"instruction names cloth {found!r} but {expected!r} was expected")
        self.found = found
        self.expected = expected


# simulation

class SimulationError(ClothSkillError):
    pass


class SimulationDiverged(SimulationError):
    def __init__(self, particle: int, message: str = ""):
        super().__init__(message or f"simulation diverged at particle {particle}")
        self.particle = particle


class GraspMiss(SimulationError):
    def __init__(self, point, distance: float, radius: float):
        super().__init__(
            f"no particle within grasp radius {radius:.4f} m of {tuple(round(float(c), 4) for c in point)} "
            f"(nearest at {distance:.4f} m)"
        )
        self.point = point
        self.distance = distance


class SettleError(SimulationError):
    pass


class RenderError(SimulationError):
    pass


# skill discovery / planning

class DecompositionError(ClothSkillError):
    pass


class UnlabelableAction(DecompositionError):
    def __init__(self, step: int, distance: float, limit: float):
        super().__init__(
            f"action {step} is {distance:.4f} m from the nearest keypoint (limit {limit:.4f} m)"
        )
        self.step = step
        self.distance = distance


class MalformedResponse(DecompositionError):
    """LLM output that does not satisfy the decomposition contract; keeps the raw text."""

    def __init__(self, reason: str, raw: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.raw = raw


class PlanError(ClothSkillError):
    pass


class UnknownSchema(PlanError):
    def __init__(self, clause: str):
        super().__init__(f"no fold schema matches clause: {clause!r}")
        self.clause = clause


class SchemaInapplicable(PlanError):
    def __init__(self, schema: str, cloth_type: str):
        super().__init__(f"schema {schema!r} does not apply to cloth type {cloth_type!r}")
        self.schema = schema
        self.cloth_type = cloth_type


class MalformedPlan(PlanError):
    def __init__(self, reason: str, raw: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.raw = raw


# llm transport

class LLMError(ClothSkillError):
    pass


class LLMConfigError(LLMError, ConfigError):
    pass


class LLMTransportError(LLMError):
    pass


class LLMTimeout(LLMTransportError):
    pass


class LLMHTTPError(LLMTransportError):
    def __init__(self, status: int, body: str):
        super().__init__(f"chat endpoint returned HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


# model

class ModelError(ClothSkillError):
    pass


class ShapeMismatch(ModelError, ValueError):
    pass


class TrainingDiverged(ModelError):
    pass


class EmptyDataset(ModelError, ValueError):
    pass
