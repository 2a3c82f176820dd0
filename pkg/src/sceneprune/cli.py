"""Command-line front end.

Subcommands: localize, verify, simplify, export-frames, branch,
eval detect, eval order, agreement, preference, serve.  All commands print
JSON to stdout; verify signals a failed gate with exit code 3.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import fields
from typing import Optional

from . import raster
from .engine import (
    BranchDirective,
    Editor,
    EngineAborted,
    EngineConfig,
    OracleEditor,
    OraclePlanner,
    Planner,
    RemoteEditor,
    RemotePlanner,
    branch,
    config_from_json,
    config_to_json,
    frames_for_preset,
    run_simplification,
    write_frames,
)
from .evaluation import (
    DetectionParams,
    RemovalDetection,
    aggregate_confusion,
    detect_removals,
    load_annotations_csv,
    load_judgments_csv,
    order_accuracy,
    parse_level,
    preference_table,
    rater_tau_matrix,
)
from .localization import LocalizationParams, localize_edit
from .scene import SceneSpec, rect_mask, scene_from_json, scene_to_json
from .trajectory import load_tree
from .verification import heuristic_verify


def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _dataclass_from_json(cls, path: Optional[str]):
    if path is None:
        return cls()
    doc = _load_json(path)
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise SystemExit(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**doc)


def cmd_localize(args: argparse.Namespace) -> int:
    reference = raster.load_image(args.reference)
    candidate = raster.load_image(args.candidate)
    params = _dataclass_from_json(LocalizationParams, args.params)
    result, change_mask, alignment = localize_edit(reference, candidate, params)
    raster.save_image(args.out, result)
    if args.mask_out:
        raster.save_mask(args.mask_out, change_mask)
    _emit(
        {
            "out": args.out,
            "mask_out": args.mask_out,
            "changed_pixels": int(change_mask.sum()),
            "alignment": {
                "inlier_count": alignment.inlier_count,
                "inlier_ratio": alignment.inlier_ratio,
                "fallback_identity": alignment.fallback_identity,
            },
        }
    )
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    before = raster.load_image(args.before)
    after = raster.load_image(args.after)
    mask = raster.load_mask(args.mask)
    result = heuristic_verify(before, after, mask, threshold=args.threshold)
    _emit(result.to_json())
    return 0 if result.passed else 3


def _backends_for(
    source: "SceneSpec | None", backend: str, variation: str
) -> tuple[Planner, Editor]:
    if backend == "oracle":
        if source is None:
            raise SystemExit("oracle backend needs a scene JSON input")
        return OraclePlanner(source), OracleEditor(source)
    from .planners import endpoint_from_env

    endpoint = endpoint_from_env()
    if endpoint is None:
        raise SystemExit("remote backend needs SCENEPRUNE_REMOTE_URL (and optionally _MODEL, _TOKEN)")
    return RemotePlanner(endpoint), RemoteEditor(endpoint, variation=variation)


def _write_session_metadata(session_dir: str, spec: Optional[SceneSpec], root, cfg: EngineConfig) -> None:
    os.makedirs(session_dir, exist_ok=True)
    with open(os.path.join(session_dir, "source.json"), "w", encoding="utf-8") as fh:
        json.dump({"kind": "scene" if spec is not None else "image"}, fh)
    if spec is not None:
        scene_to_json(spec, os.path.join(session_dir, "scene.json"))
    else:
        raster.save_image(os.path.join(session_dir, "source.png"), root)
    with open(os.path.join(session_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config_to_json(cfg), fh)


def cmd_simplify(args: argparse.Namespace) -> int:
    cfg = config_from_json(_load_json(args.config)) if args.config else EngineConfig()
    cfg.edit_variation = args.variation or cfg.edit_variation
    spec: Optional[SceneSpec] = None
    if args.input.endswith(".json"):
        spec = scene_from_json(args.input)
        from .scene import composite_scene

        start = composite_scene(spec)
    else:
        start = raster.load_image(args.input)
    planner, editor = _backends_for(spec, args.backend, cfg.edit_variation)
    _write_session_metadata(args.out, spec, start, cfg)
    try:
        tree = run_simplification(spec if spec is not None else start, planner, editor, cfg=cfg, session_dir=args.out)
    except EngineAborted as exc:
        sys.stderr.write(f"aborted: {exc}; partial trajectory saved to {args.out}\n")
        return 1
    _emit(
        {
            "session_dir": args.out,
            "nodes": len(tree.nodes),
            "accepted_steps": len(tree.accepted_steps()),
            "main_path": tree.main_path,
            "content_hash": tree.content_hash(),
        }
    )
    return 0


def cmd_export_frames(args: argparse.Namespace) -> int:
    tree = load_tree(args.session)
    leaf = args.node if args.node is not None else tree.main_path[-1]
    images = tree.path_images(leaf)
    try:
        frames = frames_for_preset(images, args.repeat, args.total)
    except ValueError as exc:
        raise SystemExit(str(exc)) from exc
    paths = write_frames(frames, args.out)
    _emit({"out": args.out, "frame_count": len(paths), "path_images": len(images), "leaf": leaf})
    return 0


def _session_backends(session_dir: str, cfg: EngineConfig) -> tuple[Planner, Editor]:
    scene_path = os.path.join(session_dir, "scene.json")
    if os.path.isfile(scene_path):
        spec = scene_from_json(scene_path)
        return OraclePlanner(spec), OracleEditor(spec)
    return _backends_for(None, "remote", cfg.edit_variation)


def cmd_branch(args: argparse.Namespace) -> int:
    tree = load_tree(args.session)
    config_path = os.path.join(args.session, "config.json")
    cfg = config_from_json(_load_json(config_path)) if os.path.isfile(config_path) else EngineConfig()
    planner, editor = _session_backends(args.session, cfg)
    if args.force_remove:
        directive = BranchDirective(node_id=args.node, action="force_remove", element=args.force_remove)
    else:
        directive = BranchDirective(node_id=args.node, action="forbid", element=args.forbid)
    before_ids = set(tree.nodes)
    try:
        branch(tree, directive, planner, editor, cfg=cfg, session_dir=args.session)
    except (KeyError, ValueError, RuntimeError) as exc:
        raise SystemExit(str(exc)) from exc
    new_ids = sorted(set(tree.nodes) - before_ids)
    _emit({"session_dir": args.session, "branch_root": new_ids[0], "new_nodes": new_ids})
    return 0


def _load_frames_dir(path: str) -> list:
    names = sorted(glob.glob(os.path.join(path, "*.png")))
    if not names:
        raise SystemExit(f"no PNG frames found in {path!r}")
    return [raster.load_image(name) for name in names]


def cmd_eval_detect(args: argparse.Namespace) -> int:
    frames = _load_frames_dir(args.frames)
    params = _dataclass_from_json(DetectionParams, args.params)
    gt_doc = _load_json(args.gt)
    base = os.path.dirname(os.path.abspath(args.gt))
    height, width = frames[0].shape[:2]
    ground_truth = []
    ids = []
    for entry in gt_doc["objects"]:
        raw = entry["mask"]
        mask = raster.load_mask(os.path.join(base, raw)) if isinstance(raw, str) else rect_mask(height, width, raw)
        ground_truth.append((mask, parse_level(str(entry["level"]))))
        ids.append(str(entry.get("id", f"object_{len(ids)}")))
    detections = detect_removals(frames, ground_truth, params, ids)
    _emit({"detections": [d.to_json() for d in detections]})
    return 0


def cmd_eval_order(args: argparse.Namespace) -> int:
    doc = _load_json(args.detections)
    detections = [
        RemovalDetection(
            object_id=str(d.get("object_id", i)),
            t_star=None if d.get("t_star") is None else int(d["t_star"]),
            level=parse_level(str(d["level"])),
        )
        for i, d in enumerate(doc["detections"])
    ]
    _emit(order_accuracy(detections).to_json())
    return 0


def cmd_agreement(args: argparse.Namespace) -> int:
    annotations = load_annotations_csv(args.annotations)
    taus = rater_tau_matrix(annotations)
    confusion = aggregate_confusion(annotations)
    _emit(
        {
            "tau_b": [
                {"raters": [a, b], "tau_b": value} for (a, b), value in sorted(taus.items())
            ],
            "confusion": confusion.to_json(),
        }
    )
    return 0


def cmd_preference(args: argparse.Namespace) -> int:
    _emit(preference_table(load_judgments_csv(args.judgments)).to_json())
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .planners import endpoint_from_env
    from .service import create_app

    app = create_app(
        args.data_dir,
        backend=args.backend,
        endpoint=endpoint_from_env(),
        static_dir=args.static_dir,
        propose_wait=args.propose_wait,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sceneprune", description="Progressive scene simplification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="constrain a candidate edit against its reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", default=None)
    p.add_argument("--params", default=None, help="LocalizationParams JSON")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("verify", help="gate one edit; exit 0 pass, 3 fail")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simplify", help="run the full loop into a session directory")
    p.add_argument("--input", required=True, help="scene .json or image .png")
    p.add_argument("--backend", choices=("oracle", "remote"), default="oracle")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="EngineConfig JSON")
    p.add_argument("--variation", choices=("direct", "abstractive", "alternate"), default=None)
    p.set_defaults(func=cmd_simplify)

    p = sub.add_parser("export-frames", help="expand a trajectory into stop-motion frames")
    p.add_argument("--session", required=True)
    p.add_argument("--total", type=int, default=49)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--node", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_frames)

    p = sub.add_parser("branch", help="fork a saved session with an override")
    p.add_argument("--session", required=True)
    p.add_argument("--node", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--force-remove", metavar="ID")
    group.add_argument("--forbid", metavar="ID")
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("eval", help="removal detection and ordering metrics")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    pd = eval_sub.add_parser("detect", help="per-object removal frames from a frame directory")
    pd.add_argument("--frames", required=True)
    pd.add_argument("--gt", required=True, help='JSON: {"objects": [{"id", "level", "mask"}]}')
    pd.add_argument("--params", default=None, help="DetectionParams JSON")
    pd.set_defaults(func=cmd_eval_detect)
    po = eval_sub.add_parser("order", help="order accuracy from a detections JSON")
    po.add_argument("--detections", required=True)
    po.set_defaults(func=cmd_eval_order)

    p = sub.add_parser("agreement", help="inter-rater tau-b and confusion matrices")
    p.add_argument("--annotations", required=True, help="CSV: rater_id, element_id, level")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("preference", help="pairwise removal-preference table")
    p.add_argument("--judgments", required=True, help="CSV: pair_id, level_a, level_b, choice")
    p.set_defaults(func=cmd_preference)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--backend", choices=("oracle", "remote"), default="oracle")
    p.add_argument("--static-dir", default=None, help="built UI assets to serve at /")
    p.add_argument("--propose-wait", type=float, default=15.0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
