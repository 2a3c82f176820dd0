"""Progressive scene simplification: plan, edit, verify, branch, evaluate.

The package removes scene elements one importance level at a time, keeps
every accepted edit as a node in a branchable trajectory tree, expands any
root-to-leaf path into a stop-motion frame sequence, and scores removal
order against ground truth.
"""

from .engine import (
    BranchDirective,
    EngineAborted,
    EngineConfig,
    OracleEditor,
    OraclePlanner,
    PlannedRemoval,
    Proposal,
    RemoteEditor,
    RemotePlanner,
    advance_level,
    branch,
    expand_to_frames,
    frames_for_preset,
    oracle_run,
    propose_step,
    run_simplification,
    subsample_trajectory,
)
from .evaluation import (
    DetectionParams,
    OrderAccuracy,
    PairJudgment,
    RaterAnnotation,
    RemovalDetection,
    aggregate_confusion,
    detect_removal_frame,
    evaluate_sequence,
    kendall_tau_b,
    order_accuracy,
    preference_table,
)
from .localization import AlignmentResult, LocalizationParams, align_candidate, localize_edit
from .planners import (
    EndpointConfig,
    PlannerParseError,
    PlannerUnavailable,
    PromptError,
    oracle_edit,
    oracle_plan,
    parse_planner_response,
    parse_selection,
    render_prompt,
)
from .scene import (
    TAXONOMY_ORDER,
    Appearance,
    SceneElement,
    SceneSpec,
    SemanticLevel,
    composite_scene,
    remove_element_oracle,
    render,
    scene_from_json,
    scene_to_json,
    visible_footprint,
)
from .synth import build_removal_video, random_scene, removal_order_by_level
from .trajectory import EditStep, TrajectoryNode, TrajectoryTree, load_tree, save_tree
from .verification import VerifyResult, extract_patch_grid, gate_candidates, heuristic_verify

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult",
    "Appearance",
    "BranchDirective",
    "DetectionParams",
    "EditStep",
    "EndpointConfig",
    "EngineAborted",
    "EngineConfig",
    "LocalizationParams",
    "OracleEditor",
    "OraclePlanner",
    "OrderAccuracy",
    "PairJudgment",
    "PlannedRemoval",
    "PlannerParseError",
    "PlannerUnavailable",
    "PromptError",
    "Proposal",
    "RaterAnnotation",
    "RemoteEditor",
    "RemotePlanner",
    "RemovalDetection",
    "SceneElement",
    "SceneSpec",
    "SemanticLevel",
    "TAXONOMY_ORDER",
    "TrajectoryNode",
    "TrajectoryTree",
    "VerifyResult",
    "advance_level",
    "aggregate_confusion",
    "align_candidate",
    "branch",
    "build_removal_video",
    "composite_scene",
    "detect_removal_frame",
    "evaluate_sequence",
    "expand_to_frames",
    "extract_patch_grid",
    "frames_for_preset",
    "gate_candidates",
    "heuristic_verify",
    "kendall_tau_b",
    "load_tree",
    "localize_edit",
    "oracle_edit",
    "oracle_plan",
    "oracle_run",
    "order_accuracy",
    "parse_planner_response",
    "parse_selection",
    "preference_table",
    "propose_step",
    "random_scene",
    "removal_order_by_level",
    "remove_element_oracle",
    "render",
    "render_prompt",
    "run_simplification",
    "save_tree",
    "scene_from_json",
    "scene_to_json",
    "subsample_trajectory",
    "visible_footprint",
]
