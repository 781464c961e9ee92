from .dynamics import (
    ClothState,
    SimConfig,
    execute_pick_place,
    grasp,
    nearest_particle,
    top_down_particle,
    settle,
    spring_energy,
    step,
)
from .render import render_depth, render_mask
from .template import DEFAULT_SIZES, SPRING_KINDS, ClothTemplate, make_template, spring_components

__all__ = [
    "ClothState",
    "ClothTemplate",
    "DEFAULT_SIZES",
    "SPRING_KINDS",
    "SimConfig",
    "execute_pick_place",
    "grasp",
    "make_template",
    "nearest_particle",
    "render_depth",
    "render_mask",
    "settle",
    "spring_components",
    "spring_energy",
    "step",
    "top_down_particle",
]
