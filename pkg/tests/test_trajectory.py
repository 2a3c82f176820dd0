from __future__ import annotations

import numpy as np
import pytest

from sceneprune.scene import SemanticLevel
from sceneprune.trajectory import (
    STATUS_ACCEPTED,
    STATUS_SKIPPED,
    EditStep,
    TrajectoryTree,
    load_tree,
    save_tree,
    tree_manifest,
)


def _img(v: float) -> np.ndarray:
    return np.full((8, 8, 3), v)


def _mask() -> np.ndarray:
    m = np.zeros((8, 8), dtype=bool)
    m[2:5, 2:5] = True
    return m


def _step(key: str, status: str = STATUS_ACCEPTED, attempts: int = 1) -> EditStep:
    return EditStep(
        element_key=key,
        description=f"remove {key}",
        level=SemanticLevel.DISTRACTOR,
        status=status,
        candidate_attempts=attempts,
        change_mask=_mask() if status == STATUS_ACCEPTED else None,
    )


class TestEditStep:
    def test_accepted_needs_mask_and_attempt(self):
        with pytest.raises(ValueError, match="change mask"):
            EditStep("x", "", SemanticLevel.DISTRACTOR, STATUS_ACCEPTED, 1, change_mask=None)
        with pytest.raises(ValueError, match="attempt"):
            EditStep("x", "", SemanticLevel.DISTRACTOR, STATUS_ACCEPTED, 0, change_mask=_mask())

    def test_attempts_capped_at_five(self):
        with pytest.raises(ValueError):
            EditStep("x", "", SemanticLevel.DISTRACTOR, STATUS_SKIPPED, 6)

    def test_bad_status_rejected(self):
        with pytest.raises(ValueError, match="status"):
            EditStep("x", "", SemanticLevel.DISTRACTOR, "maybe", 1)


class TestTreeStructure:
    def test_every_non_root_node_has_one_parent(self):
        tree = TrajectoryTree(_img(0.0), SemanticLevel.DISTRACTOR)
        a = tree.add_node(0, _img(0.1), SemanticLevel.DISTRACTOR, step=_step("a"))
        b = tree.add_node(a.node_id, _img(0.2), SemanticLevel.SECONDARY, step=_step("b"))
        side = tree.add_node(0, _img(0.3), SemanticLevel.DISTRACTOR)
        assert tree.node(0).parent is None
        assert {n.node_id: n.parent for n in tree.iter_nodes()} == {0: None, 1: 0, 2: 1, 3: 0}
        assert tree.path_to(b.node_id) == [0, 1, 2]
        assert sorted(tree.leaves()) == [2, 3]
        assert tree.deepest_leaf() == 2
        assert side.node_id == 3

    def test_bookkeeping_sets_inherit_from_parent(self):
        tree = TrajectoryTree(_img(0.0), SemanticLevel.DISTRACTOR)
        a = tree.add_node(0, _img(0.1), SemanticLevel.DISTRACTOR, removed=frozenset({"a"}))
        b = tree.add_node(a.node_id, _img(0.2), SemanticLevel.DISTRACTOR)
        assert b.removed == {"a"}
        assert b.excluded == frozenset()

    def test_accepted_steps_follow_main_path(self):
        tree = TrajectoryTree(_img(0.0), SemanticLevel.DISTRACTOR)
        a = tree.add_node(0, _img(0.1), SemanticLevel.DISTRACTOR, step=_step("a"))
        tree.add_node(0, _img(0.2), SemanticLevel.DISTRACTOR, step=_step("other"))
        tree.main_path = tree.path_to(a.node_id)
        assert [s.element_key for s in tree.accepted_steps()] == ["a"]
        assert [s.element_key for s in tree.accepted_steps(2)] == ["other"]

    def test_images_are_quantized_on_ingest(self):
        img = np.full((4, 4, 3), 1.0 / 3.0)
        tree = TrajectoryTree(img, SemanticLevel.DISTRACTOR)
        stored = tree.node(0).image
        assert np.array_equal(stored, np.round(img * 255) / 255)

    def test_unknown_node_raises(self):
        tree = TrajectoryTree(_img(0.0), SemanticLevel.DISTRACTOR)
        with pytest.raises(KeyError):
            tree.node(99)


class TestPersistence:
    def _populated_tree(self) -> TrajectoryTree:
        tree = TrajectoryTree(_img(0.4), SemanticLevel.DISTRACTOR)
        a = tree.add_node(0, _img(0.5), SemanticLevel.DISTRACTOR, step=_step("a"), removed=frozenset({"a"}))
        tree.node(a.node_id).skipped_steps.append(_step("sk", STATUS_SKIPPED, 5))
        b = tree.add_node(
            a.node_id,
            _img(0.6),
            SemanticLevel.SECONDARY,
            step=_step("b"),
            removed=frozenset({"a", "b"}),
            excluded=frozenset({"keepme"}),
        )
        tree.add_node(0, _img(0.7), SemanticLevel.DISTRACTOR, directive={"action": "forbid", "element": "x"})
        tree.main_path = tree.path_to(b.node_id)
        return tree

    def test_roundtrip_preserves_content_hash(self, tmp_path):
        tree = self._populated_tree()
        save_tree(tree, tmp_path)
        reloaded = load_tree(tmp_path)
        assert reloaded.content_hash() == tree.content_hash()
        assert reloaded.main_path == tree.main_path
        assert reloaded.node(2).excluded == {"keepme"}
        assert reloaded.node(3).directive == {"action": "forbid", "element": "x"}
        assert [s.element_key for s in reloaded.node(1).skipped_steps] == ["sk"]

    def test_roundtrip_images_bit_identical(self, tmp_path):
        tree = self._populated_tree()
        save_tree(tree, tmp_path)
        reloaded = load_tree(tmp_path)
        for node in tree.iter_nodes():
            assert np.array_equal(reloaded.node(node.node_id).image, node.image)

    def test_save_is_atomic_enough_to_resave(self, tmp_path):
        tree = self._populated_tree()
        save_tree(tree, tmp_path)
        save_tree(tree, tmp_path)  # overwrite in place
        assert load_tree(tmp_path).content_hash() == tree.content_hash()

    def test_hash_changes_when_content_changes(self, tmp_path):
        tree = self._populated_tree()
        before = tree.content_hash()
        tree.add_node(0, _img(0.9), SemanticLevel.DISTRACTOR)
        assert tree.content_hash() != before

    def test_manifest_mirrors_structure_without_pixels(self):
        tree = self._populated_tree()
        doc = tree_manifest(tree)
        assert doc["root"] == 0
        assert doc["main_path"] == tree.main_path
        by_id = {n["id"]: n for n in doc["nodes"]}
        assert by_id[1]["step"]["element"] == "a"
        assert by_id[1]["step"]["has_mask"] is True
        assert by_id[1]["skipped_steps"][0]["element"] == "sk"
        assert by_id[2]["excluded"] == ["keepme"]
        assert "image" not in by_id[0]
