"""Trajectory tree: nodes of image states, edges of verified removals.

Each node stores a full image snapshot quantized onto the 8-bit grid, so a
tree saved to a session directory and reloaded compares bit-identical.
Persistence is a manifest plus plain PNGs; no database, every artifact is
inspectable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from . import raster
from .scene import LEVEL_NAMES, SemanticLevel, level_from_name

STATUS_ACCEPTED = "accepted"
STATUS_SKIPPED = "skipped"

MANIFEST_NAME = "manifest.json"


@dataclass(slots=True, frozen=True)
class EditStep:
    """One removal attempt: an edge when accepted, a node annotation when skipped."""

    element_key: str
    description: str
    level: SemanticLevel
    status: str
    candidate_attempts: int
    change_mask: Optional[np.ndarray] = None
    mask_source: str = "backend"

    def __post_init__(self) -> None:
        if self.status not in (STATUS_ACCEPTED, STATUS_SKIPPED):
            raise ValueError(f"bad step status {self.status!r}")
        if not 0 <= self.candidate_attempts <= 5:
            raise ValueError("candidate_attempts must be in [0, 5]")
        if self.status == STATUS_ACCEPTED:
            if self.candidate_attempts < 1:
                raise ValueError("accepted step needs at least one attempt")
            if self.change_mask is None or not self.change_mask.any():
                raise ValueError("accepted step needs a non-empty change mask")
        if self.change_mask is not None:
            object.__setattr__(self, "change_mask", raster.ensure_mask(self.change_mask))


@dataclass(slots=True)
class TrajectoryNode:
    """One image state; bookkeeping sets drive resumption and branching."""

    node_id: int
    image: np.ndarray
    parent: Optional[int]
    active_level: SemanticLevel
    step: Optional[EditStep] = None
    directive: Optional[dict] = None
    children: list[int] = field(default_factory=list)
    removed: frozenset[str] = frozenset()
    excluded: frozenset[str] = frozenset()
    skipped: frozenset[str] = frozenset()
    skipped_steps: list[EditStep] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.image = raster.quantize(raster.ensure_image(self.image))


class TrajectoryTree:
    """Append-only tree; existing nodes never change image content."""

    def __init__(self, root_image: np.ndarray, active_level: SemanticLevel):
        root = TrajectoryNode(node_id=0, image=root_image, parent=None, active_level=active_level)
        self.nodes: dict[int, TrajectoryNode] = {0: root}
        self.root_id = 0
        self.main_path: list[int] = [0]
        self._next_id = 1

    @classmethod
    def _empty(cls) -> "TrajectoryTree":
        tree = cls.__new__(cls)
        tree.nodes = {}
        tree.root_id = 0
        tree.main_path = []
        tree._next_id = 0
        return tree

    def node(self, node_id: int) -> TrajectoryNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"no node {node_id} in tree") from None

    def add_node(
        self,
        parent_id: int,
        image: np.ndarray,
        active_level: SemanticLevel,
        step: Optional[EditStep] = None,
        directive: Optional[dict] = None,
        removed: Optional[frozenset[str]] = None,
        excluded: Optional[frozenset[str]] = None,
        skipped: Optional[frozenset[str]] = None,
    ) -> TrajectoryNode:
        parent = self.node(parent_id)
        node = TrajectoryNode(
            node_id=self._next_id,
            image=image,
            parent=parent_id,
            active_level=active_level,
            step=step,
            directive=directive,
            removed=parent.removed if removed is None else removed,
            excluded=parent.excluded if excluded is None else excluded,
            skipped=parent.skipped if skipped is None else skipped,
        )
        self.nodes[node.node_id] = node
        parent.children.append(node.node_id)
        self._next_id += 1
        return node

    def path_to(self, node_id: int) -> list[int]:
        """Node ids from the root down to node_id."""
        path = []
        cur: Optional[int] = node_id
        while cur is not None:
            path.append(cur)
            cur = self.node(cur).parent
        return path[::-1]

    def path_images(self, node_id: int) -> list[np.ndarray]:
        return [self.node(nid).image for nid in self.path_to(node_id)]

    def leaves(self) -> list[int]:
        return [nid for nid, node in self.nodes.items() if not node.children]

    def deepest_leaf(self) -> int:
        return max(self.leaves(), key=lambda nid: (len(self.path_to(nid)), -nid))

    def iter_nodes(self) -> Iterator[TrajectoryNode]:
        for nid in sorted(self.nodes):
            yield self.nodes[nid]

    def accepted_steps(self, node_id: Optional[int] = None) -> list[EditStep]:
        """Accepted steps along the path to node_id (default: main path end)."""
        target = node_id if node_id is not None else self.main_path[-1]
        steps = []
        for nid in self.path_to(target):
            step = self.node(nid).step
            if step is not None and step.status == STATUS_ACCEPTED:
                steps.append(step)
        return steps

    def content_hash(self) -> str:
        """Digest over structure and pixel content; stable across reloads."""
        h = hashlib.sha256()
        for node in self.iter_nodes():
            h.update(str((node.node_id, node.parent, sorted(node.children), int(node.active_level))).encode())
            h.update(str((sorted(node.removed), sorted(node.excluded), sorted(node.skipped))).encode())
            h.update(raster.to_uint8(node.image).tobytes())
            for step in ([node.step] if node.step else []) + node.skipped_steps:
                h.update(str((step.element_key, int(step.level), step.status, step.candidate_attempts)).encode())
                if step.change_mask is not None:
                    h.update(np.packbits(step.change_mask).tobytes())
        h.update(str(self.main_path).encode())
        return h.hexdigest()


def _step_to_json(step: EditStep, session_dir: str, key: str) -> dict:
    doc = {
        "element": step.element_key,
        "description": step.description,
        "level": LEVEL_NAMES[step.level],
        "status": step.status,
        "attempts": step.candidate_attempts,
        "mask_source": step.mask_source,
        "mask": None,
    }
    if step.change_mask is not None:
        rel = f"{key}.png"
        raster.save_mask(os.path.join(session_dir, rel), step.change_mask)
        doc["mask"] = rel
    return doc


def _step_from_json(doc: dict, session_dir: str) -> EditStep:
    mask = None
    if doc.get("mask"):
        mask = raster.load_mask(os.path.join(session_dir, doc["mask"]))
    return EditStep(
        element_key=doc["element"],
        description=doc.get("description", ""),
        level=level_from_name(doc["level"]),
        status=doc["status"],
        candidate_attempts=int(doc["attempts"]),
        change_mask=mask,
        mask_source=doc.get("mask_source", "backend"),
    )


def tree_manifest(tree: TrajectoryTree) -> dict:
    """JSON-ready structural view (no pixel data), used by the HTTP API."""
    nodes = []
    for node in tree.iter_nodes():
        step = node.step
        nodes.append(
            {
                "id": node.node_id,
                "parent": node.parent,
                "children": list(node.children),
                "active_level": LEVEL_NAMES[node.active_level],
                "removed": sorted(node.removed),
                "excluded": sorted(node.excluded),
                "skipped": sorted(node.skipped),
                "directive": node.directive,
                "step": None
                if step is None
                else {
                    "element": step.element_key,
                    "description": step.description,
                    "level": LEVEL_NAMES[step.level],
                    "status": step.status,
                    "attempts": step.candidate_attempts,
                    "has_mask": step.change_mask is not None,
                },
                "skipped_steps": [
                    {
                        "element": s.element_key,
                        "description": s.description,
                        "level": LEVEL_NAMES[s.level],
                        "status": s.status,
                        "attempts": s.candidate_attempts,
                    }
                    for s in node.skipped_steps
                ],
            }
        )
    return {"root": tree.root_id, "main_path": list(tree.main_path), "nodes": nodes}


def save_tree(tree: TrajectoryTree, session_dir: raster.PathLike) -> None:
    """Write manifest.json plus node/mask PNGs; overwrites prior state."""
    session_dir = os.fspath(session_dir)
    os.makedirs(session_dir, exist_ok=True)
    doc: dict = {"root": tree.root_id, "main_path": list(tree.main_path), "nodes": []}
    for node in tree.iter_nodes():
        image_rel = f"node_{node.node_id}.png"
        raster.save_image(os.path.join(session_dir, image_rel), node.image)
        entry = {
            "id": node.node_id,
            "parent": node.parent,
            "children": list(node.children),
            "active_level": LEVEL_NAMES[node.active_level],
            "image": image_rel,
            "removed": sorted(node.removed),
            "excluded": sorted(node.excluded),
            "skipped": sorted(node.skipped),
            "directive": node.directive,
            "step": None if node.step is None else _step_to_json(node.step, session_dir, f"mask_{node.node_id}"),
            "skipped_steps": [
                _step_to_json(s, session_dir, f"skipmask_{node.node_id}_{i}") for i, s in enumerate(node.skipped_steps)
            ],
        }
        doc["nodes"].append(entry)
    tmp = os.path.join(session_dir, MANIFEST_NAME + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, os.path.join(session_dir, MANIFEST_NAME))


def load_tree(session_dir: raster.PathLike) -> TrajectoryTree:
    session_dir = os.fspath(session_dir)
    with open(os.path.join(session_dir, MANIFEST_NAME), "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    tree = TrajectoryTree._empty()
    tree.root_id = int(doc["root"])
    tree.main_path = [int(v) for v in doc["main_path"]]
    max_id = -1
    for entry in doc["nodes"]:
        node = TrajectoryNode(
            node_id=int(entry["id"]),
            image=raster.load_image(os.path.join(session_dir, entry["image"])),
            parent=entry["parent"],
            active_level=level_from_name(entry["active_level"]),
            step=_step_from_json(entry["step"], session_dir) if entry.get("step") else None,
            directive=entry.get("directive"),
            removed=frozenset(entry.get("removed", [])),
            excluded=frozenset(entry.get("excluded", [])),
            skipped=frozenset(entry.get("skipped", [])),
        )
        node.children = [int(v) for v in entry.get("children", [])]
        node.skipped_steps = [_step_from_json(s, session_dir) for s in entry.get("skipped_steps", [])]
        tree.nodes[node.node_id] = node
        max_id = max(max_id, node.node_id)
    tree._next_id = max_id + 1
    return tree
