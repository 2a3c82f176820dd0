"""Select-Remove-Verify loop, tree branching, and stop-motion export.

The engine walks the taxonomy ladder, asks a planner for the least important
remaining element, requests up to five candidate edits, constrains each one
through localize_edit, and gates them with a verifier; the first passing
candidate becomes a tree edge.  Branching forks the tree at any node with a
user override and regenerates the subtree, leaving existing nodes untouched.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from . import raster
from .localization import LocalizationParams, localize_edit
from .planners import PlannerUnavailable
from .scene import (
    TAXONOMY_ORDER,
    SceneSpec,
    SemanticLevel,
    composite_scene,
    remove_element_oracle,
    render,
    visible_footprint,
)
from .trajectory import (
    STATUS_ACCEPTED,
    STATUS_SKIPPED,
    EditStep,
    TrajectoryNode,
    TrajectoryTree,
    save_tree,
)
from .verification import VerifyResult, heuristic_verify

BRANCH_ACTIONS = ("force_remove", "forbid", "accept_proposed", "skip_proposed")


@dataclass(slots=True, frozen=True)
class PlannedRemoval:
    """A planner's pick: a stable key, prompt-ready description, and level."""

    key: str
    description: str
    level: SemanticLevel


class Planner(Protocol):
    def enumerate_candidates(self, image: np.ndarray, level: SemanticLevel, removed: frozenset[str]) -> list[PlannedRemoval]: ...

    def select(self, image: np.ndarray, level: SemanticLevel, candidates: Sequence[PlannedRemoval]) -> PlannedRemoval: ...

    def target_mask(self, planned: PlannedRemoval, removed: frozenset[str]) -> Optional[np.ndarray]: ...

    def resolve(self, element_key: str, level_hint: SemanticLevel, removed: frozenset[str]) -> PlannedRemoval: ...


class Editor(Protocol):
    def candidate(self, image: np.ndarray, planned: PlannedRemoval, attempt: int, removed: frozenset[str]) -> np.ndarray: ...


Verifier = Callable[[np.ndarray, np.ndarray, np.ndarray], VerifyResult]


@dataclass(slots=True)
class EngineConfig:
    max_candidates_per_step: int = 5
    max_steps: int = 100
    level_order: tuple[SemanticLevel, ...] = TAXONOMY_ORDER
    edit_variation: str = "direct"
    localization: LocalizationParams = field(default_factory=LocalizationParams)
    verifier_threshold: float = 0.5
    retry_skipped_once: bool = False
    t_train: int = 10
    frame_repeat: int = 5
    video_length: int = 49

    def __post_init__(self) -> None:
        if not 1 <= self.max_candidates_per_step <= 5:
            raise ValueError("max_candidates_per_step must be in [1, 5]")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        order = tuple(SemanticLevel(lv) for lv in self.level_order)
        if not order or len(set(order)) != len(order) or list(order) != sorted(order):
            raise ValueError("level_order must be a non-empty ascending subsequence of the taxonomy")
        self.level_order = order
        if self.edit_variation not in ("direct", "abstractive", "alternate"):
            raise ValueError("edit_variation must be direct, abstractive, or alternate")
        if self.t_train < 1 or self.frame_repeat < 1 or self.video_length < 1:
            raise ValueError("t_train, frame_repeat, and video_length must be >= 1")


@dataclass(slots=True, frozen=True)
class BranchDirective:
    node_id: int
    action: str
    element: Optional[str] = None

    def __post_init__(self) -> None:
        if self.action not in BRANCH_ACTIONS:
            raise ValueError(f"action must be one of {BRANCH_ACTIONS}")
        if self.action in ("force_remove", "forbid") and not self.element:
            raise ValueError(f"{self.action} needs an element reference")


class EngineAborted(RuntimeError):
    """A back-end became unavailable; the partial trajectory is attached."""

    def __init__(self, message: str, tree: TrajectoryTree):
        super().__init__(message)
        self.tree = tree


PROPOSAL_READY = "ready"
PROPOSAL_FAILED = "all_candidates_failed"
PROPOSAL_DONE = "done"


@dataclass(slots=True)
class Proposal:
    """A computed but uncommitted step; the interactive unit of work."""

    node_id: int
    status: str
    level: Optional[SemanticLevel] = None
    planned: Optional[PlannedRemoval] = None
    image: Optional[np.ndarray] = None
    change_mask: Optional[np.ndarray] = None
    attempts: int = 0
    verify: Optional[VerifyResult] = None
    mask_source: str = "backend"


def default_verifier(cfg: EngineConfig) -> Verifier:
    def verify(before: np.ndarray, after: np.ndarray, mask: np.ndarray) -> VerifyResult:
        return heuristic_verify(before, after, mask, threshold=cfg.verifier_threshold)

    return verify


# Scalar fields exposed through config files and the HTTP API.
CONFIG_JSON_FIELDS = (
    "max_candidates_per_step",
    "max_steps",
    "edit_variation",
    "verifier_threshold",
    "retry_skipped_once",
    "t_train",
    "frame_repeat",
    "video_length",
)


def config_to_json(cfg: EngineConfig) -> dict:
    return {name: getattr(cfg, name) for name in CONFIG_JSON_FIELDS}


def config_from_json(doc: Optional[dict]) -> EngineConfig:
    doc = doc or {}
    unknown = set(doc) - set(CONFIG_JSON_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    try:
        return EngineConfig(**doc)
    except TypeError as exc:
        raise ValueError(f"bad config: {exc}") from exc


def advance_level(current: Optional[SemanticLevel], level_order: Sequence[SemanticLevel] = TAXONOMY_ORDER) -> Optional[SemanticLevel]:
    """Next level in the ladder, or None when the ladder is done."""
    if current is None:
        return level_order[0] if level_order else None
    idx = list(level_order).index(current)
    return level_order[idx + 1] if idx + 1 < len(level_order) else None


def _attempt_removal(
    node: TrajectoryNode,
    planned: PlannedRemoval,
    planner: Planner,
    editor: Editor,
    verifier: Verifier,
    cfg: EngineConfig,
) -> Proposal:
    """Generate, localize, and gate up to max_candidates edits for one pick."""
    for attempt in range(1, cfg.max_candidates_per_step + 1):
        raw = editor.candidate(node.image, planned, attempt, node.removed)
        localized, change_mask, _ = localize_edit(node.image, raw, cfg.localization)
        if not change_mask.any():
            continue
        target = planner.target_mask(planned, node.removed)
        mask_source = "backend"
        if target is None or not target.any():
            target, mask_source = change_mask, "change_mask"
        result = verifier(node.image, localized, target)
        if result.passed:
            return Proposal(
                node_id=node.node_id,
                status=PROPOSAL_READY,
                level=planned.level,
                planned=planned,
                image=localized,
                change_mask=change_mask,
                attempts=attempt,
                verify=result,
                mask_source=mask_source,
            )
    return Proposal(
        node_id=node.node_id,
        status=PROPOSAL_FAILED,
        level=planned.level,
        planned=planned,
        attempts=cfg.max_candidates_per_step,
    )


def _propose_at_level(
    tree: TrajectoryTree,
    node: TrajectoryNode,
    level: SemanticLevel,
    planner: Planner,
    editor: Editor,
    verifier: Verifier,
    cfg: EngineConfig,
    allow_skipped: frozenset[str] = frozenset(),
) -> Optional[Proposal]:
    """One Select+Remove+gate pass at a fixed level; None when exhausted."""
    blocked = node.removed | node.excluded | (node.skipped - allow_skipped)
    candidates = [c for c in planner.enumerate_candidates(node.image, level, node.removed) if c.key not in blocked]
    if not candidates:
        return None
    planned = planner.select(node.image, level, candidates)
    return _attempt_removal(node, planned, planner, editor, verifier, cfg)


def propose_step(
    tree: TrajectoryTree,
    node_id: int,
    planner: Planner,
    editor: Editor,
    cfg: Optional[EngineConfig] = None,
    verifier: Optional[Verifier] = None,
) -> Proposal:
    """Compute the engine's next step at a node without committing it.

    Scans levels upward from the node's active level; returns a done
    proposal when every remaining level is exhausted.
    """
    cfg = cfg or EngineConfig()
    verifier = verifier or default_verifier(cfg)
    node = tree.node(node_id)
    level: Optional[SemanticLevel] = node.active_level
    while level is not None:
        proposal = _propose_at_level(tree, node, level, planner, editor, verifier, cfg)
        if proposal is not None:
            return proposal
        level = advance_level(level, cfg.level_order)
    return Proposal(node_id=node_id, status=PROPOSAL_DONE)


def commit_proposal(tree: TrajectoryTree, proposal: Proposal) -> TrajectoryNode:
    """Materialize a ready proposal as a new child node."""
    if proposal.status != PROPOSAL_READY:
        raise ValueError(f"cannot commit a {proposal.status} proposal")
    assert proposal.planned is not None and proposal.image is not None and proposal.level is not None
    parent = tree.node(proposal.node_id)
    step = EditStep(
        element_key=proposal.planned.key,
        description=proposal.planned.description,
        level=proposal.planned.level,
        status=STATUS_ACCEPTED,
        candidate_attempts=proposal.attempts,
        change_mask=proposal.change_mask,
        mask_source=proposal.mask_source,
    )
    return tree.add_node(
        parent_id=parent.node_id,
        image=proposal.image,
        active_level=proposal.level,
        step=step,
        removed=parent.removed | {proposal.planned.key},
    )


def record_skip(tree: TrajectoryTree, proposal: Proposal, attempts: Optional[int] = None) -> TrajectoryNode:
    """Mark a proposal's element as skipped on its node (no new node)."""
    if proposal.planned is None:
        raise ValueError("proposal carries no element to skip")
    node = tree.node(proposal.node_id)
    node.skipped = node.skipped | {proposal.planned.key}
    node.skipped_steps.append(
        EditStep(
            element_key=proposal.planned.key,
            description=proposal.planned.description,
            level=proposal.planned.level,
            status=STATUS_SKIPPED,
            candidate_attempts=proposal.attempts if attempts is None else attempts,
        )
    )
    return node


def _run_from(
    tree: TrajectoryTree,
    node_id: int,
    planner: Planner,
    editor: Editor,
    verifier: Verifier,
    cfg: EngineConfig,
    persist: Optional[Callable[[], None]] = None,
) -> int:
    """Drive the loop from a node to exhaustion; returns the final leaf id."""
    current = tree.node(node_id)
    level: Optional[SemanticLevel] = current.active_level
    accepted = 0
    retried_levels: set[SemanticLevel] = set()
    retry_pool: frozenset[str] = frozenset()
    iterations = 0
    iteration_cap = cfg.max_steps * (cfg.max_candidates_per_step + 1) + 64
    while accepted < cfg.max_steps and level is not None and iterations < iteration_cap:
        iterations += 1
        proposal = _propose_at_level(tree, current, level, planner, editor, verifier, cfg, allow_skipped=retry_pool)
        if proposal is None:
            if cfg.retry_skipped_once and level not in retried_levels and current.skipped:
                retried_levels.add(level)
                retry_pool = current.skipped
                continue
            level = advance_level(level, cfg.level_order)
            retry_pool = frozenset()
            continue
        if proposal.status == PROPOSAL_READY:
            current = commit_proposal(tree, proposal)
            current.active_level = level
            accepted += 1
        else:
            record_skip(tree, proposal)
            if proposal.planned is not None:
                retry_pool = retry_pool - {proposal.planned.key}
        if persist is not None:
            persist()
    return current.node_id


def run_simplification(
    start: "np.ndarray | SceneSpec",
    planner: Planner,
    editor: Editor,
    verifier: Optional[Verifier] = None,
    cfg: Optional[EngineConfig] = None,
    session_dir: Optional[raster.PathLike] = None,
) -> TrajectoryTree:
    """Full automatic run from a source image or scene spec.

    The main path is set to the resulting chain.  If a back-end becomes
    unavailable mid-run, the partial tree is persisted (when a session
    directory is given) and re-raised inside EngineAborted.
    """
    cfg = cfg or EngineConfig()
    verifier = verifier or default_verifier(cfg)
    root_image = composite_scene(start) if isinstance(start, SceneSpec) else raster.ensure_image(start)
    tree = TrajectoryTree(root_image, active_level=cfg.level_order[0])

    def persist() -> None:
        if session_dir is not None:
            tree.main_path = tree.path_to(tree.deepest_leaf())
            save_tree(tree, session_dir)

    try:
        leaf = _run_from(tree, tree.root_id, planner, editor, verifier, cfg, persist)
    except PlannerUnavailable as exc:
        tree.main_path = tree.path_to(tree.deepest_leaf())
        persist()
        raise EngineAborted(str(exc), tree) from exc
    tree.main_path = tree.path_to(leaf)
    persist()
    return tree


def branch(
    tree: TrajectoryTree,
    directive: BranchDirective,
    planner: Planner,
    editor: Editor,
    verifier: Optional[Verifier] = None,
    cfg: Optional[EngineConfig] = None,
    session_dir: Optional[raster.PathLike] = None,
    auto_continue: bool = True,
) -> TrajectoryTree:
    """Fork at a node, apply the directive, and regenerate the subtree.

    Every directive materializes one branch-point child; with auto_continue
    the loop then runs that child to exhaustion.  Pre-existing nodes keep
    their images untouched; the original main path is not rewritten.
    """
    cfg = cfg or EngineConfig()
    verifier = verifier or default_verifier(cfg)
    node = tree.node(directive.node_id)
    meta = {"action": directive.action, "element": directive.element}

    if directive.action == "force_remove":
        assert directive.element is not None
        if directive.element in node.excluded:
            raise ValueError(f"element {directive.element!r} is forbidden on this branch")
        if directive.element in node.removed:
            raise ValueError(f"element {directive.element!r} is already removed on this path")
        planned = planner.resolve(directive.element, node.active_level, node.removed)
        proposal = _attempt_removal(node, planned, planner, editor, verifier, cfg)
        if proposal.status != PROPOSAL_READY:
            raise RuntimeError(f"forced removal of {directive.element!r} failed verification")
        child = commit_proposal(tree, proposal)
        # Resume at the pre-branch level: forcing ahead must not skip levels.
        child.active_level = node.active_level
        child.directive = meta
    elif directive.action == "forbid":
        assert directive.element is not None
        if directive.element in node.removed:
            raise ValueError(f"element {directive.element!r} is already removed on this path")
        child = tree.add_node(
            parent_id=node.node_id,
            image=node.image,
            active_level=node.active_level,
            directive=meta,
            excluded=node.excluded | {directive.element},
        )
    elif directive.action == "skip_proposed":
        child = tree.add_node(parent_id=node.node_id, image=node.image, active_level=node.active_level, directive=meta)
        proposal = propose_step(tree, child.node_id, planner, editor, cfg, verifier)
        if proposal.planned is not None:
            record_skip(tree, proposal)
            child.directive = {"action": "skip_proposed", "element": proposal.planned.key}
    else:  # accept_proposed: take whatever the engine does next
        child = tree.add_node(parent_id=node.node_id, image=node.image, active_level=node.active_level, directive=meta)

    def persist() -> None:
        if session_dir is not None:
            save_tree(tree, session_dir)

    if auto_continue:
        _run_from(tree, child.node_id, planner, editor, verifier, cfg, persist)
    persist()
    return tree


class OraclePlanner:
    """Exact planner over a known scene: smallest visible footprint first."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        self._cache: dict[frozenset[str], SceneSpec] = {}

    def reduced(self, removed: frozenset[str]) -> SceneSpec:
        key = frozenset(removed)
        if key not in self._cache:
            cur = self.spec
            for eid in sorted(key):
                cur = remove_element_oracle(cur, eid)
            self._cache[key] = cur
        return self._cache[key]

    def enumerate_candidates(self, image: np.ndarray, level: SemanticLevel, removed: frozenset[str]) -> list[PlannedRemoval]:
        spec = self.reduced(removed)
        ranked = sorted(
            (raster.mask_area(visible_footprint(spec, el.id)), el.id, el)
            for el in spec.elements
            if el.level == level
        )
        return [PlannedRemoval(key=el.id, description=el.description or el.id, level=el.level) for _, _, el in ranked]

    def select(self, image: np.ndarray, level: SemanticLevel, candidates: Sequence[PlannedRemoval]) -> PlannedRemoval:
        return candidates[0]

    def target_mask(self, planned: PlannedRemoval, removed: frozenset[str]) -> Optional[np.ndarray]:
        return visible_footprint(self.reduced(removed), planned.key)

    def resolve(self, element_key: str, level_hint: SemanticLevel, removed: frozenset[str]) -> PlannedRemoval:
        el = self.reduced(removed).element(element_key)
        return PlannedRemoval(key=el.id, description=el.description or el.id, level=el.level)


class OracleEditor:
    """Perfect inpainting: re-render the scene without the element."""

    def __init__(self, spec: SceneSpec):
        self.spec = spec

    def candidate(self, image: np.ndarray, planned: PlannedRemoval, attempt: int, removed: frozenset[str]) -> np.ndarray:
        return render(self.spec, set(removed) | {planned.key})


class RemotePlanner:
    """Planner over the HTTP protocol; selections are taken verbatim."""

    def __init__(self, endpoint, client=None):
        self.endpoint = endpoint
        self.client = client

    def enumerate_candidates(self, image: np.ndarray, level: SemanticLevel, removed: frozenset[str]) -> list[PlannedRemoval]:
        from .planners import remote_plan

        out: list[PlannedRemoval] = []
        seen: set[str] = set()
        for cand in remote_plan(image, level, self.endpoint, self.client):
            if cand.name in seen:
                continue
            seen.add(cand.name)
            out.append(PlannedRemoval(key=cand.name, description=cand.description or cand.name, level=level))
        return out

    def select(self, image: np.ndarray, level: SemanticLevel, candidates: Sequence[PlannedRemoval]) -> PlannedRemoval:
        from .planners import ElementCandidate, remote_select

        offered = [ElementCandidate(i, c.key, c.description) for i, c in enumerate(candidates)]
        picked = remote_select(image, level, offered, self.endpoint, self.client)
        return candidates[picked.index]

    def target_mask(self, planned: PlannedRemoval, removed: frozenset[str]) -> Optional[np.ndarray]:
        return None

    def resolve(self, element_key: str, level_hint: SemanticLevel, removed: frozenset[str]) -> PlannedRemoval:
        return PlannedRemoval(key=element_key, description=element_key, level=level_hint)


class RemoteEditor:
    """Editor over the HTTP protocol with a direct/abstractive/alternate policy."""

    def __init__(self, endpoint, variation: str = "direct", client=None):
        if variation not in ("direct", "abstractive", "alternate"):
            raise ValueError("variation must be direct, abstractive, or alternate")
        self.endpoint = endpoint
        self.variation = variation
        self.client = client

    def _variation_for(self, attempt: int) -> str:
        if self.variation == "alternate":
            return "direct" if attempt % 2 == 1 else "abstractive"
        return self.variation

    def candidate(self, image: np.ndarray, planned: PlannedRemoval, attempt: int, removed: frozenset[str]) -> np.ndarray:
        from .planners import remote_edit

        return remote_edit(image, planned.description, self._variation_for(attempt), self.endpoint, self.client)


def subsample_trajectory(images: Sequence[np.ndarray], t: int) -> list[np.ndarray]:
    """Uniformly pick T+1 images: index round(i*n/T), half rounding up.

    Always includes the first and last image; indices are non-decreasing and
    repeat when the path is shorter than T+1.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if not images:
        raise ValueError("need at least one image")
    n = len(images) - 1
    return [images[math.floor(i * n / t + 0.5)] for i in range(t + 1)]


def expand_to_frames(steps: Sequence[np.ndarray], repeat: int, total: int) -> list[np.ndarray]:
    """Repeat each image `repeat` times, truncating the last to hit `total`."""
    count = len(steps)
    if count < 1 or repeat < 1:
        raise ValueError("need at least one image and repeat >= 1")
    if not repeat * count >= total >= repeat * (count - 1):
        raise ValueError(
            f"total {total} infeasible for {count} images at repeat {repeat}: "
            f"needs {repeat * (count - 1)} <= total <= {repeat * count}"
        )
    frames: list[np.ndarray] = []
    for img in steps[:-1]:
        frames.extend([img] * repeat)
    frames.extend([steps[-1]] * (total - repeat * (count - 1)))
    return frames


def frames_for_preset(images: Sequence[np.ndarray], repeat: int, total: int) -> list[np.ndarray]:
    """Sub-sample a path to the preset's image count, then expand.

    Paths shorter than the preset needs are infeasible (no stretching); the
    canonical preset (repeat 5, total 49) consumes a 10-image path.
    """
    count = max(1, math.ceil(total / repeat))
    if len(images) < count:
        raise ValueError(f"path of {len(images)} images cannot fill preset ({repeat}, {total}); needs {count}")
    if len(images) > count:
        images = [images[0]] if count == 1 else subsample_trajectory(images, count - 1)
    return expand_to_frames(images, repeat, total)


def default_total_frames(image_count: int, repeat: int) -> int:
    """Canonical stop-motion length: one frame short of a full last block."""
    return max(1, repeat * image_count - 1)


def write_frames(frames: Sequence[np.ndarray], out_dir: raster.PathLike) -> list[str]:
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = os.path.join(out_dir, f"frame_{i:04d}.png")
        raster.save_image(path, frame)
        paths.append(path)
    return paths


def oracle_run(spec: SceneSpec, cfg: Optional[EngineConfig] = None, session_dir: Optional[raster.PathLike] = None) -> TrajectoryTree:
    """Convenience: full automatic run with the exact back-ends."""
    return run_simplification(spec, OraclePlanner(spec), OracleEditor(spec), cfg=cfg, session_dir=session_dir)


__all__ = [
    "BranchDirective",
    "CONFIG_JSON_FIELDS",
    "EngineAborted",
    "EngineConfig",
    "OracleEditor",
    "OraclePlanner",
    "PlannedRemoval",
    "Proposal",
    "RemoteEditor",
    "RemotePlanner",
    "advance_level",
    "branch",
    "commit_proposal",
    "config_from_json",
    "config_to_json",
    "default_total_frames",
    "expand_to_frames",
    "frames_for_preset",
    "oracle_run",
    "propose_step",
    "record_skip",
    "run_simplification",
    "subsample_trajectory",
    "write_frames",
]
