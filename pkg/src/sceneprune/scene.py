"""Synthetic scene model: semantic levels, elements, and oracle renders.

A scene is a background plus masked elements composited in z-order.
Rendering is pure array assignment, so two renders of the same spec are
bit-identical; that makes the compositor usable as ground truth for edit
localization, ordering, and detection tests.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import raster


class SemanticLevel(enum.IntEnum):
    """Importance taxonomy; lower values are removed earlier."""

    DISTRACTOR = 0
    SECONDARY = 1
    PRIMARY = 2
    BACKGROUND = 3


# Full taxonomy in removal-priority order; engines walk this ladder.
TAXONOMY_ORDER: tuple[SemanticLevel, ...] = (
    SemanticLevel.DISTRACTOR,
    SemanticLevel.SECONDARY,
    SemanticLevel.PRIMARY,
    SemanticLevel.BACKGROUND,
)

LEVEL_NAMES = {
    SemanticLevel.DISTRACTOR: "distractor",
    SemanticLevel.SECONDARY: "secondary",
    SemanticLevel.PRIMARY: "primary",
    SemanticLevel.BACKGROUND: "background",
}

_LEVELS_BY_NAME = {name: level for level, name in LEVEL_NAMES.items()}


def level_from_name(name: str) -> SemanticLevel:
    try:
        return _LEVELS_BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown semantic level {name!r}") from None


@dataclass(slots=True, frozen=True)
class Appearance:
    """Fill for an element or background: solid color or a texture image.

    Textures are stored full-frame and sampled through the element mask, so
    one texture array can serve any footprint.
    """

    color: Optional[tuple[float, float, float]] = None
    texture: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if (self.color is None) == (self.texture is None):
            raise ValueError("appearance needs exactly one of color or texture")
        if self.color is not None:
            c = tuple(float(v) for v in self.color)
            if len(c) != 3 or min(c) < 0.0 or max(c) > 1.0:
                raise ValueError("color must be 3 channels in [0, 1]")
            object.__setattr__(self, "color", c)
        if self.texture is not None:
            object.__setattr__(self, "texture", raster.ensure_image(self.texture))

    def paint(self, img: np.ndarray, mask: np.ndarray) -> None:
        if self.color is not None:
            img[mask] = self.color
        else:
            assert self.texture is not None
            if self.texture.shape[:2] != img.shape[:2]:
                raise ValueError("texture does not match scene size")
            img[mask] = self.texture[mask]


@dataclass(slots=True)
class SceneElement:
    """One masked surface; higher z paints later and occludes lower z."""

    id: str
    level: SemanticLevel
    z: int
    mask: np.ndarray
    appearance: Appearance
    description: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("element id must be a non-empty string")
        self.level = SemanticLevel(self.level)
        self.z = int(self.z)
        self.mask = raster.ensure_mask(self.mask)
        if not self.mask.any():
            raise ValueError(f"element {self.id!r} has an empty mask")


@dataclass(slots=True)
class SceneSpec:
    """Background plus elements; validates ids, shapes, and sizes."""

    width: int
    height: int
    background: Appearance = field(default_factory=lambda: Appearance(color=(0.5, 0.5, 0.5)))
    elements: list[SceneElement] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ValueError("scene dimensions must be >= 1")
        if self.background.texture is not None and self.background.texture.shape[:2] != (self.height, self.width):
            raise ValueError("background texture does not match scene size")
        seen: set[str] = set()
        for el in self.elements:
            if el.id in seen:
                raise ValueError(f"duplicate element id {el.id!r}")
            seen.add(el.id)
            if el.mask.shape != (self.height, self.width):
                raise ValueError(f"element {el.id!r} mask does not match scene size")
            if el.appearance.texture is not None and el.appearance.texture.shape[:2] != (self.height, self.width):
                raise ValueError(f"element {el.id!r} texture does not match scene size")

    def element(self, element_id: str) -> SceneElement:
        for el in self.elements:
            if el.id == element_id:
                return el
        raise KeyError(f"no element with id {element_id!r}")

    def element_ids(self) -> list[str]:
        return [el.id for el in self.elements]

    def paint_order(self) -> list[SceneElement]:
        """Elements sorted by ascending z; list position breaks ties."""
        return [el for _, _, el in sorted((el.z, i, el) for i, el in enumerate(self.elements))]

    def levels_present(self) -> set[SemanticLevel]:
        return {el.level for el in self.elements}


def composite_scene(spec: SceneSpec) -> np.ndarray:
    """Deterministic render: background fill, then elements by ascending z."""
    return render(spec)


def render(spec: SceneSpec, removed: Iterable[str] = ()) -> np.ndarray:
    """Composite with the given element ids left out."""
    gone = set(removed)
    unknown = gone - set(spec.element_ids())
    if unknown:
        raise KeyError(f"unknown element ids {sorted(unknown)}")
    img = np.empty((spec.height, spec.width, 3), dtype=np.float64)
    everything = np.ones((spec.height, spec.width), dtype=bool)
    spec.background.paint(img, everything)
    for el in spec.paint_order():
        if el.id not in gone:
            el.appearance.paint(img, el.mask)
    return img


def remove_element_oracle(spec: SceneSpec, element_id: str) -> SceneSpec:
    """Spec without the element; compositing it is the perfect removal."""
    spec.element(element_id)
    return SceneSpec(
        width=spec.width,
        height=spec.height,
        background=spec.background,
        elements=[el for el in spec.elements if el.id != element_id],
    )


def visible_footprint(spec: SceneSpec, element_id: str) -> np.ndarray:
    """Element mask minus pixels occluded by anything painted after it.

    Removing the element changes the render exactly on this set (unless a
    revealed surface happens to share its appearance).  Empty output means
    the element is fully occluded (degenerate for evaluation purposes).
    """
    target = spec.element(element_id)
    vis = target.mask.copy()
    seen_target = False
    for el in spec.paint_order():
        if el.id == element_id:
            seen_target = True
        elif seen_target:
            vis &= ~el.mask
    return vis


def _appearance_to_json(app: Appearance, base: str, key: str) -> dict:
    if app.color is not None:
        return {"color": list(app.color)}
    assert app.texture is not None
    rel = f"{key}.png"
    raster.save_image(os.path.join(base, rel), app.texture)
    return {"texture": rel}


def _appearance_from_json(doc: dict, base: Optional[str]) -> Appearance:
    if "color" in doc:
        return Appearance(color=tuple(doc["color"]))
    if "texture" in doc:
        if base is None:
            raise ValueError("inline scene documents may not reference texture files")
        return Appearance(texture=raster.load_image(os.path.join(base, doc["texture"])))
    raise ValueError("appearance needs a color or texture entry")


def rect_mask(height: int, width: int, rect: Sequence[int]) -> np.ndarray:
    """Mask from [x, y, w, h] shorthand."""
    x0, y0, w, h = (int(v) for v in rect)
    if h < 1 or w < 1 or y0 < 0 or x0 < 0 or y0 + h > height or x0 + w > width:
        raise ValueError(f"rect {list(rect)} out of bounds for {width}x{height}")
    mask = np.zeros((height, width), dtype=bool)
    mask[y0 : y0 + h, x0 : x0 + w] = True
    return mask


def _mask_to_json(mask: np.ndarray, base: str, key: str):
    ys, xs = np.nonzero(mask)
    y0, y1 = int(ys.min()), int(ys.max())
    x0, x1 = int(xs.min()), int(xs.max())
    h, w = y1 - y0 + 1, x1 - x0 + 1
    if raster.mask_area(mask) == h * w:
        return [x0, y0, w, h]
    rel = f"{key}.png"
    raster.save_mask(os.path.join(base, rel), mask)
    return rel


def scene_to_json(spec: SceneSpec, path: raster.PathLike) -> None:
    """Serialize a scene; rectangular masks inline as [x, y, w, h], other
    masks and any textures as sibling PNG files referenced by relative path.
    """
    path = os.fspath(path)
    base = os.path.dirname(os.path.abspath(path))
    os.makedirs(base, exist_ok=True)
    doc: dict = {
        "dimensions": [spec.width, spec.height],
        "background": _appearance_to_json(spec.background, base, "background"),
        "elements": [],
    }
    for el in spec.elements:
        doc["elements"].append(
            {
                "id": el.id,
                "level": LEVEL_NAMES[el.level],
                "z": el.z,
                "mask": _mask_to_json(el.mask, base, f"mask_{_safe_name(el.id)}"),
                "appearance": _appearance_to_json(el.appearance, base, f"texture_{_safe_name(el.id)}"),
                "description": el.description,
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _safe_name(element_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in element_id)


def scene_from_doc(doc: dict, base_dir: Optional[raster.PathLike] = None) -> SceneSpec:
    """Scene from a parsed JSON document.

    File references (mask or texture PNGs) resolve against base_dir; inline
    documents (no base_dir, e.g. HTTP bodies) must use rect masks and colors.
    """
    base = os.fspath(base_dir) if base_dir is not None else None
    width, height = (int(v) for v in doc["dimensions"])
    elements = []
    for entry in doc.get("elements", []):
        raw_mask = entry["mask"]
        if isinstance(raw_mask, str):
            if base is None:
                raise ValueError("inline scene documents may not reference mask files")
            mask = raster.load_mask(os.path.join(base, raw_mask))
        else:
            mask = rect_mask(height, width, raw_mask)
        elements.append(
            SceneElement(
                id=str(entry["id"]),
                level=level_from_name(entry["level"]),
                z=int(entry.get("z", 0)),
                mask=mask,
                appearance=_appearance_from_json(entry["appearance"], base),
                description=str(entry.get("description", "")),
            )
        )
    return SceneSpec(
        width=width,
        height=height,
        background=_appearance_from_json(doc["background"], base),
        elements=elements,
    )


def scene_from_json(path: raster.PathLike) -> SceneSpec:
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return scene_from_doc(doc, base_dir=os.path.dirname(os.path.abspath(path)))
