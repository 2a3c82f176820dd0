"""Constrain a sloppy edit to its intended region, then gate it.

A generative editor asked to remove one object usually returns more than
that: global color drift, resampling shimmer, sometimes a slight shift.
This walkthrough takes such a candidate, keeps only the change that matters,
and runs the acceptance gate on the result. PNGs land in demos/out/localize/.
"""

from pathlib import Path

import numpy as np

from sceneprune import raster
from sceneprune.localization import localize_edit
from sceneprune.scene import render, visible_footprint
from sceneprune.synth import random_scene
from sceneprune.verification import heuristic_verify

out_dir = Path(__file__).parent / "out" / "localize"
out_dir.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(3)
spec = random_scene(rng, n_elements=5, min_levels=3)
target = list(spec.element_ids())[2]
reference = render(spec)

# The candidate genuinely removes the target, but also brightens every pixel
# by 0.05: exactly the kind of drift that poisons frame-difference metrics.
candidate = np.clip(render(spec, {target}) + 0.05, 0.0, 1.0)
drift = np.abs(candidate - reference).max(axis=-1)
print(f"raw candidate differs on {np.count_nonzero(drift > 0):,} of {drift.size:,} pixels")

# localize_edit aligns, masks the significant change, matches local color
# statistics, and feather-blends the edit back onto the reference.
constrained, mask, alignment = localize_edit(reference, candidate)
how = "identity fallback" if alignment.fallback_identity else f"{alignment.inlier_count} inliers"
print(f"alignment: {how}, change mask covers {np.count_nonzero(mask):,} px")

footprint = visible_footprint(spec, target)
changed = (constrained != reference).any(axis=-1)
print(f"constrained edit touches {np.count_nonzero(changed):,} px "
      f"(footprint is {np.count_nonzero(footprint):,} px)")

# Everything outside the feathered removal region must be byte-identical.
allowed = raster.dilate_mask(footprint, 11)
assert not np.count_nonzero(changed & ~allowed)
print("pixels outside the dilated footprint: bit-identical")

# The gate compares patch statistics inside vs outside the target mask.
result = heuristic_verify(reference, constrained, footprint)
print(f"\nverification: score {result.score:.3f} vs threshold {result.threshold:.2f} "
      f"-> {'pass' if result.passed else 'fail'}")
for key, value in sorted(result.diagnostics.items()):
    print(f"  {key:18s} {value:.4f}")

# A do-nothing candidate must fail the same gate.
lazy = heuristic_verify(reference, reference.copy(), footprint)
print(f"identity candidate: score {lazy.score:.3f} -> {'pass' if lazy.passed else 'fail'}")

raster.save_image(out_dir / "reference.png", reference)
raster.save_image(out_dir / "candidate_raw.png", candidate)
raster.save_image(out_dir / "candidate_localized.png", constrained)
raster.save_mask(out_dir / "change_mask.png", mask)
print(f"\nwrote reference / raw / localized / mask PNGs to {out_dir}")
