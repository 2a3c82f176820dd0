"""Edit gating: did the candidate actually remove the target, and only it?

The learned classifier this stands in for consumed patch-token grids of the
before/after pair plus their difference volume; the grid construction is kept
faithfully, while the decision itself comes from a pluggable scorer.  The
default scorer penalizes leftover target pixels and collateral background
change, passing at the 0.5 operating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import raster

MAX_CANDIDATES = 5
DEFAULT_THRESHOLD = 0.5


@dataclass(slots=True)
class PatchGridConfig:
    """Cell geometry for feature grids; grid overrides patch when given."""

    patch: int = 8
    grid: Optional[tuple[int, int]] = None

    def cells_for(self, height: int, width: int) -> tuple[int, int]:
        if self.grid is not None:
            gh, gw = self.grid
        else:
            gh, gw = height // self.patch, width // self.patch
        if gh < 1 or gw < 1:
            raise ValueError(f"image {height}x{width} smaller than one cell")
        if gh > height or gw > width:
            raise ValueError(f"grid {gh}x{gw} exceeds image {height}x{width}")
        return gh, gw


@dataclass(slots=True)
class FeatureGrid:
    grid_h: int
    grid_w: int
    dim: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid_h, self.grid_w, self.dim):
            raise ValueError(f"values shape {self.values.shape} does not match grid")


@dataclass(slots=True)
class VerifyResult:
    """Gate decision; `passed` is score >= threshold by construction."""

    score: float
    passed: bool
    threshold: float
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0 or not 0.0 <= self.threshold <= 1.0:
            raise ValueError("score and threshold must lie in [0, 1]")
        if self.passed != (self.score >= self.threshold):
            raise ValueError("passed must equal score >= threshold")

    def to_json(self) -> dict:
        return {
            "score": self.score,
            "pass": self.passed,
            "threshold": self.threshold,
            "diagnostics": dict(self.diagnostics),
        }


Verifier = Callable[[np.ndarray, np.ndarray, np.ndarray], VerifyResult]


def extract_patch_grid(image: np.ndarray, cfg: PatchGridConfig | None = None) -> FeatureGrid:
    """Per-cell descriptor: channel means, channel stds, mean gradient (D=7)."""
    cfg = cfg or PatchGridConfig()
    image = raster.ensure_image(image)
    height, width = image.shape[:2]
    gh, gw = cfg.cells_for(height, width)
    grad = raster.gradient_magnitude(image)
    values = np.empty((gh, gw, 7), dtype=np.float64)
    row_edges = [height * i // gh for i in range(gh + 1)]
    col_edges = [width * j // gw for j in range(gw + 1)]
    for i in range(gh):
        for j in range(gw):
            cell = image[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            gcell = grad[row_edges[i] : row_edges[i + 1], col_edges[j] : col_edges[j + 1]]
            flat = cell.reshape(-1, 3)
            values[i, j, 0:3] = flat.mean(axis=0)
            values[i, j, 3:6] = flat.std(axis=0)
            values[i, j, 6] = gcell.mean()
    return FeatureGrid(gh, gw, 7, values)


def difference_volume(g_in: FeatureGrid, g_out: FeatureGrid) -> FeatureGrid:
    """Stack [g_in; g_out; |g_in - g_out|] along the feature axis."""
    if (g_in.grid_h, g_in.grid_w, g_in.dim) != (g_out.grid_h, g_out.grid_w, g_out.dim):
        raise ValueError("feature grids have mismatched shapes")
    delta = np.abs(g_in.values - g_out.values)
    values = np.concatenate([g_in.values, g_out.values, delta], axis=2)
    return FeatureGrid(g_in.grid_h, g_in.grid_w, 3 * g_in.dim, values)


def heuristic_verify(
    before: np.ndarray,
    after: np.ndarray,
    target_mask: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    change_threshold: float = 0.10,
    dilation_radius: int = 5,
    background_limit: float = 0.10,
) -> VerifyResult:
    """Score a removal attempt.

    target_residual: fraction of target pixels that did not change (object
    still there).  background_change: fraction of pixels outside the dilated
    target that did change (collateral damage), scaled against
    background_limit.  Score is 1 minus the worse of the two penalties.
    """
    before = raster.ensure_image(before)
    after = raster.ensure_image(after)
    target_mask = raster.ensure_mask(target_mask)
    raster.check_same_shape(before, after)
    raster.check_same_shape(before, target_mask)
    if not target_mask.any():
        raise ValueError("target mask is empty")

    changed = raster.channel_abs_diff(before, after) >= change_threshold
    residual = 1.0 - float(np.count_nonzero(changed & target_mask)) / raster.mask_area(target_mask)
    outside = ~raster.dilate_mask(target_mask, dilation_radius)
    n_outside = int(np.count_nonzero(outside))
    bg_change = float(np.count_nonzero(changed & outside)) / n_outside if n_outside else 0.0
    bg_penalty = min(1.0, bg_change / background_limit) if background_limit > 0 else float(bg_change > 0)
    score = float(np.clip(1.0 - max(residual, bg_penalty), 0.0, 1.0))
    return VerifyResult(
        score=score,
        passed=score >= threshold,
        threshold=threshold,
        diagnostics={
            "target_residual": residual,
            "background_change": bg_change,
            "background_penalty": bg_penalty,
        },
    )


def gate_candidates(
    before: np.ndarray,
    candidates: Sequence[np.ndarray],
    target_mask: np.ndarray,
    verifier: Verifier = heuristic_verify,
) -> Optional[int]:
    """Accept the first candidate the verifier passes; None means skip.

    Evaluation short-circuits: candidates after the accepted one are never
    scored.
    """
    if not 1 <= len(candidates) <= MAX_CANDIDATES:
        raise ValueError(f"need 1..{MAX_CANDIDATES} candidates, got {len(candidates)}")
    for idx, candidate in enumerate(candidates):
        if verifier(before, candidate, target_mask).passed:
            return idx
    return None
