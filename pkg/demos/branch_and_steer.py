"""Steer a finished run: protect one element, force another out early.

Automatic simplification follows the level ordering strictly. Reviewers
rarely do. This walkthrough forks a trajectory twice, once to forbid a
removal and once to force one, and shows what each fork preserves.
"""

import numpy as np

from sceneprune.engine import BranchDirective, OracleEditor, OraclePlanner, branch, oracle_run
from sceneprune.scene import LEVEL_NAMES, SemanticLevel
from sceneprune.synth import random_scene

rng = np.random.default_rng(11)
spec = random_scene(rng, n_elements=5, min_levels=3)
planner, editor = OraclePlanner(spec), OracleEditor(spec)

tree = oracle_run(spec)
print(f"automatic run: main path {tree.main_path}")
for step in tree.accepted_steps():
    print(f"  removed {step.element_key} ({LEVEL_NAMES[step.level]})")

# Fork 1: forbid the first removal at the root, rerun the subtree. The
# forbidden element must survive on every node of the new branch.
victim = tree.accepted_steps()[0].element_key
before = len(tree.nodes)
branch(tree, BranchDirective(node_id=0, action="forbid", element=victim), planner, editor)
new_nodes = [nid for nid in sorted(tree.nodes) if nid >= before]
print(f"\nforbade '{victim}' at the root -> nodes {new_nodes}")
for nid in new_nodes:
    node = tree.node(nid)
    assert victim in node.excluded and victim not in node.removed
leaf = tree.node(new_nodes[-1])
print(f"  branch leaf keeps '{victim}', removed {sorted(leaf.removed)}")

# Fork 2: force the primary element out while the run is still working on
# distractors. The step records the element's true level; the branch then
# resumes at the pre-branch level instead of skipping ahead.
primary = next(eid for eid in spec.element_ids() if spec.element(eid).level == SemanticLevel.PRIMARY)
before = len(tree.nodes)
branch(tree, BranchDirective(node_id=0, action="force_remove", element=primary), planner, editor)
forced = tree.node(before)
print(f"\nforced '{primary}' out at the root -> node {forced.node_id}")
print(f"  step level {LEVEL_NAMES[forced.step.level]}, branch resumes at "
      f"{LEVEL_NAMES[forced.active_level]}")

# The original main path is never rewritten by branching.
print(f"\nmain path after both forks: {tree.main_path}")
print(f"total nodes: {len(tree.nodes)}, leaves: {sorted(tree.leaves())}")
