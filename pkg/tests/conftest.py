"""Shared scene builders for the test suite.

The tiny tank (1000 fluid particles) keeps per-test solver runs under a
second after the first numba compile; suite-wide scenes that need real
dynamics use the presets directly.
"""

import dataclasses

import pytest

from rts_sph import parse_scene_text

TINY_TANK_TEXT = """
domain = 0 0 0  0.4 0.4 0.4
spacing = 0.02
fluid_box = 0.02 0.02 0.02  0.22 0.22 0.22
sound_speed = 30
"""


def tiny_tank(**overrides):
    scene = parse_scene_text(TINY_TANK_TEXT, name="tiny_tank")
    if overrides:
        scene = dataclasses.replace(scene, **overrides)
    return scene


@pytest.fixture
def tank_scene():
    return tiny_tank()


def single_particle_scene(**overrides):
    """One fluid particle centered in a tall box, far from every wall."""
    text = """
    domain = 0 0 0  1 1 2
    spacing = 0.02
    fluid_box = 0.49 0.49 0.99  0.51 0.51 1.01
    sound_speed = 30
    """
    scene = parse_scene_text(text, name="single")
    if overrides:
        scene = dataclasses.replace(scene, **overrides)
    return scene
