"""Randomized scene and video generators for oracle-backed tests.

Generated scenes keep every element pairwise separated and well contrasted
against the background, so ground-truth footprints, removal renders, and
removal frames are exact.  The separation margin is chosen so that local
color matching and change detection around one element never see another.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import numpy as np

from .scene import (
    LEVEL_NAMES,
    Appearance,
    SceneElement,
    SceneSpec,
    SemanticLevel,
    render,
)

# Levels assigned to generated elements; backgrounds stay implicit.
GENERATED_LEVELS: tuple[SemanticLevel, ...] = (
    SemanticLevel.DISTRACTOR,
    SemanticLevel.SECONDARY,
    SemanticLevel.PRIMARY,
)

# Gap that keeps one element's dilated surroundings clear of its neighbors.
DEFAULT_SEPARATION = 7
MIN_ELEMENT_DIM = 10
MIN_CONTRAST = 0.3


def _cell_grid(height: int, width: int, n: int, cell_min: int) -> tuple[int, list[tuple[int, int]]]:
    """Largest square cell size whose grid fits n cells, with their origins."""
    for size in range(min(height, width), cell_min - 1, -1):
        rows, cols = height // size, width // size
        if rows * cols >= n:
            cells = [(r * size, c * size) for r in range(rows) for c in range(cols)]
            return size, cells
    raise ValueError(f"cannot place {n} elements of size >= {cell_min} in {height}x{width}")


def _contrasting_color(rng: np.random.Generator, against: Sequence[float], lo: float, hi: float) -> tuple[float, float, float]:
    for _ in range(1000):
        c = rng.uniform(lo, hi, size=3)
        if np.max(np.abs(c - np.asarray(against))) >= MIN_CONTRAST:
            return tuple(float(v) for v in c)
    raise RuntimeError("could not sample a contrasting color")


def _ellipse_mask(height: int, width: int, y0: int, x0: int, h: int, w: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ry, rx = h / 2.0, w / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    mask[y0 : y0 + h, x0 : x0 + w] = inside
    return mask


def random_scene(
    rng: np.random.Generator,
    n_elements: int,
    height: int = 144,
    width: int = 192,
    min_levels: int = 3,
    separation: int = DEFAULT_SEPARATION,
    max_area_frac: float = 0.08,
    color_range: tuple[float, float] = (0.05, 0.9),
) -> SceneSpec:
    """Scene with disjoint, well separated, high-contrast elements.

    Elements are dropped into distinct grid cells with an inner margin of
    ceil(separation/2), so any two are at least `separation` px apart.
    """
    if n_elements < 1:
        raise ValueError("need at least one element")
    if not 1 <= min_levels <= len(GENERATED_LEVELS):
        raise ValueError(f"min_levels must be in [1, {len(GENERATED_LEVELS)}]")
    if n_elements < min_levels:
        raise ValueError("n_elements must cover min_levels")
    margin = math.ceil(separation / 2)
    cell_min = MIN_ELEMENT_DIM + 2 * margin
    size, cells = _cell_grid(height, width, n_elements, cell_min)
    inner = size - 2 * margin
    dim_cap = min(inner, int(math.sqrt(max_area_frac * height * width)))
    lo, hi = color_range

    bg = tuple(float(v) for v in rng.uniform(lo, hi, size=3))
    levels = list(GENERATED_LEVELS[:min_levels])
    levels += [GENERATED_LEVELS[int(rng.integers(len(GENERATED_LEVELS)))] for _ in range(n_elements - min_levels)]
    rng.shuffle(levels)

    picks = rng.choice(len(cells), size=n_elements, replace=False)
    elements = []
    for i, (level, pick) in enumerate(zip(levels, picks)):
        cy, cx = cells[pick]
        h = int(rng.integers(MIN_ELEMENT_DIM, dim_cap + 1))
        w = int(rng.integers(MIN_ELEMENT_DIM, dim_cap + 1))
        y0 = cy + margin + int(rng.integers(inner - h + 1))
        x0 = cx + margin + int(rng.integers(inner - w + 1))
        shape = "block" if rng.random() < 0.5 else "blob"
        if shape == "block":
            mask = np.zeros((height, width), dtype=bool)
            mask[y0 : y0 + h, x0 : x0 + w] = True
        else:
            mask = _ellipse_mask(height, width, y0, x0, h, w)
        elements.append(
            SceneElement(
                id=f"{shape}-{i}",
                level=level,
                z=i,
                mask=mask,
                appearance=Appearance(color=_contrasting_color(rng, bg, lo, hi)),
                description=f"a solid colored {shape}, {LEVEL_NAMES[level]} to the scene",
            )
        )
    return SceneSpec(width=width, height=height, background=Appearance(color=bg), elements=elements)


def removal_order_by_level(spec: SceneSpec, rng: Optional[np.random.Generator] = None) -> list[str]:
    """Element ids sorted by removal priority; ties shuffled if rng given."""
    ids = list(spec.element_ids())
    if rng is not None:
        rng.shuffle(ids)
    return sorted(ids, key=lambda eid: spec.element(eid).level)


def build_removal_video(
    spec: SceneSpec,
    order: Sequence[str],
    hold: int = 5,
    never: Iterable[str] = (),
    noise_sigma: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[list[np.ndarray], dict[str, Optional[int]]]:
    """Video of progressive removals plus ground-truth removal frames.

    Each state is held for `hold` frames; the k-th removal (1-based) first
    shows at frame number k*hold + 1, counting frames from 1 as the removal
    detector does.  Ids in `never` stay in every frame and map to None in
    the returned truth table.
    """
    if hold < 1:
        raise ValueError("hold must be >= 1")
    never_set = set(never)
    if never_set & set(order):
        raise ValueError("an element cannot be both removed and kept forever")
    frames: list[np.ndarray] = []
    truth: dict[str, Optional[int]] = {eid: None for eid in spec.element_ids()}
    gone: set[str] = set()
    states = [set(gone)]
    for k, eid in enumerate(order, start=1):
        gone.add(eid)
        truth[eid] = k * hold + 1
        states.append(set(gone))
    for state in states:
        clean = render(spec, state)
        for _ in range(hold):
            frame = clean
            if noise_sigma > 0.0:
                if rng is None:
                    raise ValueError("noise requires an rng")
                frame = np.clip(clean + rng.normal(0.0, noise_sigma, clean.shape), 0.0, 1.0)
            frames.append(frame)
    return frames, truth
