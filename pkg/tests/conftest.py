from __future__ import annotations

import numpy as np
import pytest

from sceneprune.scene import (
    Appearance,
    SceneElement,
    SceneSpec,
    SemanticLevel,
    rect_mask,
)


def make_element(
    eid: str,
    level: SemanticLevel,
    rect: tuple[int, int, int, int],
    color: tuple[float, float, float],
    z: int = 0,
    height: int = 64,
    width: int = 64,
) -> SceneElement:
    return SceneElement(
        id=eid,
        level=level,
        z=z,
        mask=rect_mask(height, width, rect),
        appearance=Appearance(color=color),
        description=f"{eid} block",
    )


@pytest.fixture
def three_level_scene() -> SceneSpec:
    """64x64 white scene with one disjoint element per generated level."""
    return SceneSpec(
        width=64,
        height=64,
        background=Appearance(color=(1.0, 1.0, 1.0)),
        elements=[
            make_element("dot", SemanticLevel.DISTRACTOR, (4, 4, 6, 6), (0.9, 0.1, 0.1)),
            make_element("prop", SemanticLevel.SECONDARY, (20, 8, 10, 10), (0.1, 0.7, 0.2)),
            make_element("hero", SemanticLevel.PRIMARY, (40, 28, 12, 12), (0.15, 0.2, 0.85)),
        ],
    )


@pytest.fixture
def overlapping_scene() -> SceneSpec:
    """Two squares where the z=2 square covers half of the z=1 square."""
    return SceneSpec(
        width=64,
        height=64,
        background=Appearance(color=(0.5, 0.5, 0.5)),
        elements=[
            make_element("under", SemanticLevel.SECONDARY, (10, 10, 16, 8), (0.8, 0.3, 0.1), z=1),
            make_element("over", SemanticLevel.PRIMARY, (18, 10, 16, 8), (0.1, 0.3, 0.8), z=2),
        ],
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
