"""Walk a scene through progressive simplification with the oracle back-ends.

Builds a random three-level scene, removes elements least-important-first,
then exports the accepted trajectory as a fixed-length frame sequence.
Artifacts land in demos/out/simplify/.
"""

from pathlib import Path

import numpy as np

from sceneprune.engine import default_total_frames, frames_for_preset, oracle_run, write_frames
from sceneprune.scene import LEVEL_NAMES
from sceneprune.synth import random_scene
from sceneprune.trajectory import save_tree

out_dir = Path(__file__).parent / "out" / "simplify"
out_dir.mkdir(parents=True, exist_ok=True)

# A scene is a stack of colored blocks and blobs, each tagged with how much
# the composition needs it: distractor < secondary < primary.
rng = np.random.default_rng(7)
spec = random_scene(rng, n_elements=7, min_levels=3)
print(f"scene: {spec.width}x{spec.height}, {len(spec.elements)} elements")
for eid in spec.element_ids():
    print(f"  {eid:10s} {LEVEL_NAMES[spec.element(eid).level]}")

# One call runs the full select -> remove -> verify loop. The oracle planner
# and editor know the scene exactly, so every proposal passes the gate.
tree = oracle_run(spec, session_dir=out_dir / "session")
print(f"\ntrajectory: {len(tree.nodes)} nodes, main path {tree.main_path}")
for step in tree.accepted_steps():
    print(f"  removed {step.element_key:10s} ({LEVEL_NAMES[step.level]}, {step.candidate_attempts} attempt(s))")

# Removal order must never promote: levels along the path are non-decreasing.
levels = [step.level for step in tree.accepted_steps()]
assert levels == sorted(levels)

# Export the path as a slideshow-style frame sequence: each trajectory state
# is held for `repeat` frames, trimmed to the preset total.
images = tree.path_images(tree.main_path[-1])
total = default_total_frames(len(images), repeat=5)
frames = frames_for_preset(images, repeat=5, total=total)
paths = write_frames(frames, out_dir / "frames")
print(f"\nwrote {len(paths)} frames to {out_dir / 'frames'}")
print(f"content hash: {tree.content_hash()[:16]}... (stable across reruns)")

save_tree(tree, out_dir / "session")
print(f"session saved under {out_dir / 'session'}")
