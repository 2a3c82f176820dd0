from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import subsample_indices_exact

from sceneprune.engine import (
    BranchDirective,
    EngineAborted,
    EngineConfig,
    OracleEditor,
    OraclePlanner,
    PROPOSAL_DONE,
    PROPOSAL_FAILED,
    PROPOSAL_READY,
    advance_level,
    branch,
    commit_proposal,
    config_from_json,
    config_to_json,
    default_total_frames,
    expand_to_frames,
    frames_for_preset,
    oracle_run,
    propose_step,
    record_skip,
    run_simplification,
    subsample_trajectory,
    write_frames,
)
from sceneprune.planners import PlannerUnavailable, oracle_plan
from sceneprune.scene import (
    SceneSpec,
    SemanticLevel,
    composite_scene,
    remove_element_oracle,
)
from sceneprune.synth import random_scene
from sceneprune.trajectory import STATUS_ACCEPTED, TrajectoryTree, load_tree


def greedy_oracle_order(spec: SceneSpec) -> list[str]:
    """Reference removal permutation: walk levels, repeatedly take the pick."""
    order = []
    for level in SemanticLevel:
        while True:
            pick = oracle_plan(spec, level)
            if pick is None:
                break
            order.append(pick)
            spec = remove_element_oracle(spec, pick)
    return order


class _NoOpEditor:
    """Editor that never changes anything; every candidate no-ops."""

    def candidate(self, image, planned, attempt, removed):
        return image


class _FlakyOracleEditor(OracleEditor):
    """Fails each element's first proposal round, succeeds afterwards."""

    def __init__(self, spec):
        super().__init__(spec)
        self.failed_once: set[str] = set()

    def candidate(self, image, planned, attempt, removed):
        if planned.key not in self.failed_once:
            if attempt == 5:
                self.failed_once.add(planned.key)
            return image
        return super().candidate(image, planned, attempt, removed)


class _AbortingPlanner(OraclePlanner):
    def __init__(self, spec, allowed_calls: int):
        super().__init__(spec)
        self.allowed_calls = allowed_calls

    def enumerate_candidates(self, image, level, removed):
        if self.allowed_calls <= 0:
            raise PlannerUnavailable("remote planner went away")
        self.allowed_calls -= 1
        return super().enumerate_candidates(image, level, removed)


class TestAdvanceLevel:
    def test_distractor_advances_to_secondary(self):
        assert advance_level(SemanticLevel.DISTRACTOR) is SemanticLevel.SECONDARY

    def test_background_is_terminal(self):
        assert advance_level(SemanticLevel.BACKGROUND) is None

    def test_truncated_ladder(self):
        assert advance_level(SemanticLevel.DISTRACTOR, [SemanticLevel.DISTRACTOR]) is None

    def test_none_starts_the_ladder(self):
        assert advance_level(None) is SemanticLevel.DISTRACTOR


class TestEngineConfig:
    def test_defaults_match_contract(self):
        cfg = EngineConfig()
        assert cfg.max_candidates_per_step == 5
        assert cfg.level_order == tuple(SemanticLevel)
        assert (cfg.t_train, cfg.frame_repeat, cfg.video_length) == (10, 5, 49)

    def test_candidate_bounds(self):
        with pytest.raises(ValueError):
            EngineConfig(max_candidates_per_step=0)
        with pytest.raises(ValueError):
            EngineConfig(max_candidates_per_step=6)

    def test_level_order_must_ascend(self):
        with pytest.raises(ValueError):
            EngineConfig(level_order=(SemanticLevel.PRIMARY, SemanticLevel.DISTRACTOR))

    def test_json_roundtrip(self):
        cfg = EngineConfig(max_steps=7, edit_variation="alternate", retry_skipped_once=True)
        assert config_from_json(config_to_json(cfg)) == cfg

    def test_unknown_json_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            config_from_json({"max_stepz": 3})

    def test_none_doc_gives_defaults(self):
        assert config_from_json(None) == EngineConfig()


class TestRunSimplification:
    def test_two_element_scene_removes_in_level_order(self, three_level_scene):
        spec = SceneSpec(
            width=64,
            height=64,
            background=three_level_scene.background,
            elements=[three_level_scene.element("dot"), three_level_scene.element("hero")],
        )
        tree = oracle_run(spec)
        steps = tree.accepted_steps()
        assert [s.element_key for s in steps] == ["dot", "hero"]
        assert [s.level for s in steps] == [SemanticLevel.DISTRACTOR, SemanticLevel.PRIMARY]

    def test_zero_element_scene_is_root_only(self):
        tree = oracle_run(SceneSpec(width=32, height=32))
        assert len(tree.nodes) == 1
        assert tree.main_path == [0]
        assert tree.accepted_steps() == []

    def test_noop_editor_skips_everything(self, three_level_scene):
        tree = run_simplification(three_level_scene, OraclePlanner(three_level_scene), _NoOpEditor())
        assert len(tree.nodes) == 1
        root = tree.node(0)
        assert root.skipped == set(three_level_scene.element_ids())
        assert all(s.candidate_attempts == 5 for s in root.skipped_steps)

    def test_matches_greedy_oracle_order_exactly(self):
        spec = random_scene(np.random.default_rng(21), n_elements=7)
        tree = oracle_run(spec)
        assert [s.element_key for s in tree.accepted_steps()] == greedy_oracle_order(spec)

    def test_deterministic_end_to_end(self):
        spec = random_scene(np.random.default_rng(22), n_elements=5)
        assert oracle_run(spec).content_hash() == oracle_run(spec).content_hash()

    def test_levels_non_decreasing_and_no_repeat_removals(self):
        spec = random_scene(np.random.default_rng(23), n_elements=8)
        tree = oracle_run(spec)
        steps = tree.accepted_steps()
        levels = [s.level for s in steps]
        assert levels == sorted(levels)
        keys = [s.element_key for s in steps]
        assert len(keys) == len(set(keys))

    def test_accepted_nodes_store_image_and_mask(self):
        spec = random_scene(np.random.default_rng(24), n_elements=4)
        tree = oracle_run(spec)
        for nid in tree.main_path[1:]:
            node = tree.node(nid)
            assert node.step is not None and node.step.status == STATUS_ACCEPTED
            assert node.step.change_mask is not None and node.step.change_mask.any()
            assert node.image.shape == tree.node(0).image.shape

    def test_max_steps_caps_the_run(self):
        spec = random_scene(np.random.default_rng(25), n_elements=6)
        tree = oracle_run(spec, EngineConfig(max_steps=2))
        assert len(tree.accepted_steps()) == 2

    def test_planner_outage_aborts_with_partial_tree(self, tmp_path):
        spec = random_scene(np.random.default_rng(26), n_elements=4)
        planner = _AbortingPlanner(spec, allowed_calls=2)
        with pytest.raises(EngineAborted) as excinfo:
            run_simplification(spec, planner, OracleEditor(spec), session_dir=tmp_path)
        partial = excinfo.value.tree
        assert len(partial.accepted_steps()) >= 1
        reloaded = load_tree(tmp_path)
        assert reloaded.content_hash() == partial.content_hash()

    def test_retry_skipped_once_rescues_flaky_elements(self, three_level_scene):
        flaky = _FlakyOracleEditor(three_level_scene)
        tree = run_simplification(
            three_level_scene,
            OraclePlanner(three_level_scene),
            flaky,
            cfg=EngineConfig(retry_skipped_once=True),
        )
        assert {s.element_key for s in tree.accepted_steps()} == set(three_level_scene.element_ids())

    def test_without_retry_flag_flaky_elements_stay_skipped(self, three_level_scene):
        flaky = _FlakyOracleEditor(three_level_scene)
        tree = run_simplification(three_level_scene, OraclePlanner(three_level_scene), flaky)
        assert tree.accepted_steps() == []


class TestProposalCycle:
    def test_propose_matches_oracle_pick(self, three_level_scene):
        tree = TrajectoryTree(composite_scene(three_level_scene), SemanticLevel.DISTRACTOR)
        planner, editor = OraclePlanner(three_level_scene), OracleEditor(three_level_scene)
        proposal = propose_step(tree, 0, planner, editor)
        assert proposal.status == PROPOSAL_READY
        assert proposal.planned.key == "dot"
        assert proposal.verify.passed and proposal.image is not None

    def test_commit_then_propose_walks_forward(self, three_level_scene):
        tree = TrajectoryTree(composite_scene(three_level_scene), SemanticLevel.DISTRACTOR)
        planner, editor = OraclePlanner(three_level_scene), OracleEditor(three_level_scene)
        child = commit_proposal(tree, propose_step(tree, 0, planner, editor))
        assert child.removed == {"dot"}
        assert child.active_level is SemanticLevel.DISTRACTOR
        nxt = propose_step(tree, child.node_id, planner, editor)
        assert nxt.planned.key == "prop"
        assert nxt.level is SemanticLevel.SECONDARY

    def test_commit_rejects_non_ready(self, three_level_scene):
        tree = TrajectoryTree(composite_scene(three_level_scene), SemanticLevel.DISTRACTOR)
        proposal = propose_step(tree, 0, OraclePlanner(three_level_scene), _NoOpEditor())
        assert proposal.status == PROPOSAL_FAILED
        with pytest.raises(ValueError):
            commit_proposal(tree, proposal)

    def test_skip_blocks_the_element_for_that_node(self, three_level_scene):
        tree = TrajectoryTree(composite_scene(three_level_scene), SemanticLevel.DISTRACTOR)
        planner, editor = OraclePlanner(three_level_scene), OracleEditor(three_level_scene)
        first = propose_step(tree, 0, planner, editor)
        record_skip(tree, first)
        again = propose_step(tree, 0, planner, editor)
        assert again.planned.key != first.planned.key
        assert tree.node(0).skipped == {first.planned.key}

    def test_exhausted_node_reports_done(self):
        spec = SceneSpec(width=24, height=24)
        tree = TrajectoryTree(composite_scene(spec), SemanticLevel.DISTRACTOR)
        proposal = propose_step(tree, 0, OraclePlanner(spec), OracleEditor(spec))
        assert proposal.status == PROPOSAL_DONE


class TestBranching:
    def _run(self, seed: int = 30, n: int = 5):
        spec = random_scene(np.random.default_rng(seed), n_elements=n)
        tree = oracle_run(spec)
        return spec, tree

    def test_forbid_keeps_element_everywhere_on_branch(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec)
        pre_existing = {nid: tree.node(nid).image.tobytes() for nid in tree.nodes}
        pre_main = list(tree.main_path)
        branch(tree, BranchDirective(node_id=0, action="forbid", element="hero"), OraclePlanner(spec), OracleEditor(spec))
        new_ids = set(tree.nodes) - set(pre_existing)
        assert new_ids
        hero_mask = spec.element("hero").mask
        hero_pixels = tree.node(0).image[hero_mask]
        for nid in new_ids:
            node = tree.node(nid)
            assert "hero" not in node.removed
            assert "hero" in node.excluded
            assert np.array_equal(node.image[hero_mask], hero_pixels)
        # pre-existing nodes keep their exact pixels and the main path stays
        for nid, blob in pre_existing.items():
            assert tree.node(nid).image.tobytes() == blob
        assert tree.main_path == pre_main

    def test_force_remove_overrides_planner_choice(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec, EngineConfig(max_steps=0))  # root only
        planner, editor = OraclePlanner(spec), OracleEditor(spec)
        branch(tree, BranchDirective(node_id=0, action="force_remove", element="hero"), planner, editor, auto_continue=False)
        forced = tree.node(tree.node(0).children[-1])
        assert forced.step.element_key == "hero"
        assert forced.step.level is SemanticLevel.PRIMARY  # true level recorded
        assert forced.active_level is SemanticLevel.DISTRACTOR  # resumes pre-branch ladder

    def test_force_remove_resumes_lower_levels(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec, EngineConfig(max_steps=0))
        planner, editor = OraclePlanner(spec), OracleEditor(spec)
        branch(tree, BranchDirective(node_id=0, action="force_remove", element="hero"), planner, editor)
        leaf_steps = tree.accepted_steps(tree.deepest_leaf())
        assert [s.element_key for s in leaf_steps] == ["hero", "dot", "prop"]
        # the forced step may break level monotonicity; automatic steps resume it
        auto = [s.level for s in leaf_steps[1:]]
        assert auto == sorted(auto)

    def test_force_remove_conflicts_rejected(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec)
        planner, editor = OraclePlanner(spec), OracleEditor(spec)
        leaf = tree.main_path[-1]
        with pytest.raises(ValueError, match="already removed"):
            branch(tree, BranchDirective(node_id=leaf, action="force_remove", element="dot"), planner, editor)
        branch(tree, BranchDirective(node_id=0, action="forbid", element="hero"), planner, editor, auto_continue=False)
        forbade = tree.node(0).children[-1]
        with pytest.raises(ValueError, match="forbidden"):
            branch(tree, BranchDirective(node_id=forbade, action="force_remove", element="hero"), planner, editor)

    def test_force_remove_failing_verification_raises(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec, EngineConfig(max_steps=0))
        with pytest.raises(RuntimeError, match="failed verification"):
            branch(
                tree,
                BranchDirective(node_id=0, action="force_remove", element="hero"),
                OraclePlanner(spec),
                _NoOpEditor(),
            )

    def test_unknown_node_raises_keyerror(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec, EngineConfig(max_steps=0))
        with pytest.raises(KeyError):
            branch(tree, BranchDirective(node_id=42, action="forbid", element="dot"), OraclePlanner(spec), OracleEditor(spec))

    def test_accept_proposed_at_exhausted_leaf_copies_it(self):
        spec, tree = self._run(seed=31, n=3)
        leaf = tree.main_path[-1]
        n_before = len(tree.nodes)
        branch(tree, BranchDirective(node_id=leaf, action="accept_proposed"), OraclePlanner(spec), OracleEditor(spec))
        assert len(tree.nodes) == n_before + 1
        child = tree.node(tree.node(leaf).children[-1])
        assert child.step is None
        assert np.array_equal(child.image, tree.node(leaf).image)

    def test_skip_proposed_branch_never_removes_that_element(self, three_level_scene):
        spec = three_level_scene
        tree = oracle_run(spec, EngineConfig(max_steps=0))
        planner, editor = OraclePlanner(spec), OracleEditor(spec)
        branch(tree, BranchDirective(node_id=0, action="skip_proposed"), planner, editor)
        child_id = tree.node(0).children[-1]
        child = tree.node(child_id)
        skipped_key = child.directive["element"]
        assert skipped_key == "dot"  # the engine's next pick at the root
        for step in tree.accepted_steps(tree.deepest_leaf()):
            assert step.element_key != skipped_key

    def test_directive_validation(self):
        with pytest.raises(ValueError):
            BranchDirective(node_id=0, action="explode")
        with pytest.raises(ValueError):
            BranchDirective(node_id=0, action="forbid")


class TestExportMath:
    def _imgs(self, n):
        return [np.full((4, 4, 3), i / max(n, 2)) for i in range(n)]

    @staticmethod
    def _indices(imgs, out):
        ids = [id(img) for img in imgs]
        return [ids.index(id(o)) for o in out]

    def test_subsample_identity_when_t_matches(self):
        imgs = self._imgs(11)
        out = subsample_trajectory(imgs, 10)
        assert [id(o) for o in out] == [id(i) for i in imgs]

    def test_subsample_even_stride(self):
        imgs = self._imgs(21)
        picked = self._indices(imgs, subsample_trajectory(imgs, 10))
        assert picked == [0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20]

    def test_subsample_short_path_repeats_non_decreasing(self):
        imgs = self._imgs(4)
        picked = self._indices(imgs, subsample_trajectory(imgs, 10))
        assert len(picked) == 11
        assert picked == sorted(picked)
        assert set(picked) == {0, 1, 2, 3}

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 60))
    def test_subsample_matches_exact_rounding_oracle(self, n_images, t):
        imgs = self._imgs(n_images)
        picked = self._indices(imgs, subsample_trajectory(imgs, t))
        assert picked == subsample_indices_exact(n_images - 1, t)

    def test_expand_ten_images_to_49(self):
        imgs = self._imgs(10)
        frames = expand_to_frames(imgs, repeat=5, total=49)
        assert len(frames) == 49
        assert sum(1 for f in frames if f is imgs[-1]) == 4
        assert all(sum(1 for f in frames if f is img) == 5 for img in imgs[:-1])

    def test_expand_single_image(self):
        imgs = self._imgs(1)
        frames = expand_to_frames(imgs, repeat=5, total=5)
        assert len(frames) == 5 and all(f is imgs[0] for f in frames)

    def test_expand_truncates_only_the_last(self):
        imgs = self._imgs(3)
        frames = expand_to_frames(imgs, repeat=5, total=14)
        assert [sum(1 for f in frames if f is i) for i in imgs] == [5, 5, 4]

    def test_expand_infeasible_total(self):
        with pytest.raises(ValueError, match="infeasible"):
            expand_to_frames(self._imgs(3), repeat=5, total=16)
        with pytest.raises(ValueError, match="infeasible"):
            expand_to_frames(self._imgs(3), repeat=5, total=9)

    def test_preset_subsamples_long_paths(self):
        frames = frames_for_preset(self._imgs(20), repeat=5, total=49)
        assert len(frames) == 49

    def test_preset_refuses_short_paths(self):
        with pytest.raises(ValueError, match="cannot fill"):
            frames_for_preset(self._imgs(3), repeat=5, total=49)

    def test_preset_single_image_count(self):
        imgs = self._imgs(3)
        frames = frames_for_preset(imgs, repeat=5, total=5)
        assert len(frames) == 5 and all(f is imgs[0] for f in frames)

    def test_default_total_is_one_short_of_full(self):
        assert default_total_frames(10, 5) == 49
        assert default_total_frames(1, 5) == 4

    def test_write_frames_names(self, tmp_path):
        paths = write_frames(self._imgs(3), tmp_path)
        assert [p.split("/")[-1] for p in paths] == ["frame_0000.png", "frame_0001.png", "frame_0002.png"]
