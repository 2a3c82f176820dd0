"""Session-scoped HTTP API over the engine, with on-disk persistence.

Each session owns a directory under the data dir (tree manifest, node PNGs,
exports) and a writer lock; mutations persist before the response leaves.
Proposals run off the request path and park behind a poll handle when they
outlast the wait window.
"""

from __future__ import annotations

import base64
import io
import json
import os
import threading
import uuid
import zipfile
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import FileResponse, JSONResponse

from . import raster
from .engine import (
    PROPOSAL_DONE,
    PROPOSAL_READY,
    BranchDirective,
    Editor,
    EngineConfig,
    OracleEditor,
    OraclePlanner,
    Planner,
    Proposal,
    RemoteEditor,
    RemotePlanner,
    branch,
    commit_proposal,
    config_to_json,
    default_verifier,
    frames_for_preset,
    propose_step,
    record_skip,
)
from .engine import config_from_json as _engine_config_from_json
from .planners import (
    EndpointConfig,
    PlannerUnavailable,
    decode_image_bytes,
    endpoint_from_env,
    image_png_bytes,
)
from .scene import LEVEL_NAMES, SceneSpec, composite_scene, scene_from_doc, scene_from_json, scene_to_json
from .trajectory import TrajectoryTree, load_tree, save_tree, tree_manifest

STATUS_IDLE = "idle"
STATUS_RUNNING = "running"
STATUS_AWAITING = "awaiting_decision"
STATUS_DONE = "done"
STATUS_ERROR = "error"


class ApiError(Exception):
    def __init__(self, status_code: int, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.detail = detail


def config_from_json(doc: Optional[dict]) -> EngineConfig:
    try:
        return _engine_config_from_json(doc)
    except ValueError as exc:
        raise ApiError(400, str(exc)) from exc


def _png_b64(image: np.ndarray) -> str:
    return base64.b64encode(image_png_bytes(image)).decode("ascii")


def _mask_png_bytes(mask: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class Session:
    session_id: str
    directory: str
    tree: TrajectoryTree
    config: EngineConfig
    planner: Planner
    editor: Editor
    source_kind: str
    status: str = STATUS_IDLE
    proposals: dict[int, Proposal] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def persist(self) -> None:
        save_tree(self.tree, self.directory)


def proposal_to_json(p: Proposal) -> dict:
    doc: dict[str, Any] = {
        "node_id": p.node_id,
        "status": p.status,
        "level": LEVEL_NAMES[p.level] if p.level is not None else None,
        "element": p.planned.key if p.planned else None,
        "description": p.planned.description if p.planned else None,
        "attempts": p.attempts,
        "mask_source": p.mask_source,
        "verify": p.verify.to_json() if p.verify is not None else None,
    }
    if p.image is not None:
        doc["preview_png"] = _png_b64(p.image)
    if p.change_mask is not None:
        doc["change_mask_png"] = base64.b64encode(_mask_png_bytes(p.change_mask)).decode("ascii")
    return doc


class SessionStore:
    """Sessions by id, lazily reloaded from the data directory."""

    def __init__(self, data_dir: str, backend: str = "oracle", endpoint: Optional[EndpointConfig] = None):
        if backend not in ("oracle", "remote"):
            raise ValueError("backend must be oracle or remote")
        self.data_dir = os.path.abspath(data_dir)
        os.makedirs(self.data_dir, exist_ok=True)
        self.backend = backend
        self.endpoint = endpoint
        self.sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        self.executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix="propose")
        self.jobs: dict[str, Future] = {}
        self.propose_wait = 15.0

    # -- construction -----------------------------------------------------

    def _build_backends(self, source_kind: str, spec: Optional[SceneSpec]) -> tuple[Planner, Editor]:
        if source_kind == "scene" and self.backend == "oracle":
            assert spec is not None
            return OraclePlanner(spec), OracleEditor(spec)
        if self.backend == "remote":
            if self.endpoint is None:
                raise ApiError(400, "remote backend requested but no endpoint configured")
            return RemotePlanner(self.endpoint), RemoteEditor(self.endpoint, variation="direct")
        raise ApiError(400, "image sources need the remote backend; oracle mode needs a scene spec")

    def create(self, body: dict) -> Session:
        config = config_from_json(body.get("config"))
        spec: Optional[SceneSpec] = None
        if "scene" in body:
            try:
                spec = scene_from_doc(body["scene"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ApiError(400, f"bad scene spec: {exc}") from exc
            root = composite_scene(spec)
            source_kind = "scene"
        elif "image" in body:
            try:
                raw = base64.b64decode(body["image"], validate=True)
                root = decode_image_bytes(raw)
            except Exception as exc:
                raise ApiError(400, f"undecodable image: {exc}") from exc
            source_kind = "image"
        else:
            raise ApiError(400, "body needs a 'scene' spec or base64 'image'")

        planner, editor = self._build_backends(source_kind, spec)
        session_id = uuid.uuid4().hex[:12]
        directory = os.path.join(self.data_dir, session_id)
        os.makedirs(directory, exist_ok=True)
        tree = TrajectoryTree(root, active_level=config.level_order[0])
        session = Session(
            session_id=session_id,
            directory=directory,
            tree=tree,
            config=config,
            planner=planner,
            editor=editor,
            source_kind=source_kind,
        )
        with open(os.path.join(directory, "source.json"), "w", encoding="utf-8") as fh:
            json.dump({"kind": source_kind}, fh)
        if spec is not None:
            scene_to_json(spec, os.path.join(directory, "scene.json"))
        else:
            raster.save_image(os.path.join(directory, "source.png"), root)
        with open(os.path.join(directory, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(config_to_json(config), fh)
        session.persist()
        with self._registry_lock:
            self.sessions[session_id] = session
        return session

    def _load_from_disk(self, session_id: str) -> Session:
        directory = os.path.join(self.data_dir, session_id)
        source_path = os.path.join(directory, "source.json")
        if not os.path.isfile(source_path):
            raise ApiError(404, f"unknown session {session_id!r}")
        with open(source_path, "r", encoding="utf-8") as fh:
            source = json.load(fh)
        config_path = os.path.join(directory, "config.json")
        config = EngineConfig()
        if os.path.isfile(config_path):
            with open(config_path, "r", encoding="utf-8") as fh:
                config = config_from_json(json.load(fh))
        scene_path = os.path.join(directory, "scene.json")
        spec = scene_from_json(scene_path) if os.path.isfile(scene_path) else None
        planner, editor = self._build_backends(source["kind"], spec)
        tree = load_tree(directory)
        return Session(
            session_id=session_id,
            directory=directory,
            tree=tree,
            config=config,
            planner=planner,
            editor=editor,
            source_kind=source["kind"],
        )

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            if session_id in self.sessions:
                return self.sessions[session_id]
        session = self._load_from_disk(session_id)
        with self._registry_lock:
            return self.sessions.setdefault(session_id, session)

    def list_ids(self) -> list[str]:
        on_disk = set()
        if os.path.isdir(self.data_dir):
            for name in os.listdir(self.data_dir):
                if os.path.isfile(os.path.join(self.data_dir, name, "source.json")):
                    on_disk.add(name)
        with self._registry_lock:
            return sorted(on_disk | set(self.sessions))


def create_app(
    data_dir: raster.PathLike,
    backend: str = "oracle",
    endpoint: Optional[EndpointConfig] = None,
    static_dir: Optional[raster.PathLike] = None,
    propose_wait: Optional[float] = None,
) -> FastAPI:
    """Build the HTTP app; see README for the endpoint listing."""
    store = SessionStore(os.fspath(data_dir), backend=backend, endpoint=endpoint)
    if propose_wait is not None:
        store.propose_wait = propose_wait
    app = FastAPI(title="sceneprune service")
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})

    @app.exception_handler(PlannerUnavailable)
    async def _planner_down(_req: Request, exc: PlannerUnavailable) -> JSONResponse:
        return JSONResponse(status_code=502, content={"detail": str(exc)})

    def _node_or_404(session: Session, node_id: int):
        try:
            return session.tree.node(node_id)
        except KeyError as exc:
            raise ApiError(404, f"unknown node {node_id}") from exc

    def _session_summary(sid: str) -> dict:
        session = store.get(sid)
        return {
            "session_id": sid,
            "status": session.status,
            "nodes": len(session.tree.nodes),
            "source_kind": session.source_kind,
        }

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception as exc:
            raise ApiError(400, f"body must be JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise ApiError(400, "body must be a JSON object")
        session = store.create(body)
        return {"session_id": session.session_id, "status": session.status}

    @app.get("/sessions")
    def list_sessions() -> list[dict]:
        return [_session_summary(sid) for sid in store.list_ids()]

    @app.get("/sessions/{sid}/tree")
    def get_tree(sid: str) -> dict:
        session = store.get(sid)
        doc = tree_manifest(session.tree)
        doc["session_id"] = sid
        doc["status"] = session.status
        doc["source_kind"] = session.source_kind
        doc["content_hash"] = session.tree.content_hash()
        doc["pending_proposals"] = sorted(session.proposals)
        return doc

    def _run_propose(session: Session, node_id: int) -> dict:
        session.status = STATUS_RUNNING
        try:
            proposal = propose_step(
                session.tree, node_id, session.planner, session.editor, session.config,
                default_verifier(session.config),
            )
        except PlannerUnavailable:
            session.status = STATUS_ERROR
            raise
        with session.lock:
            if proposal.status == PROPOSAL_DONE:
                session.status = STATUS_DONE
            else:
                session.proposals[node_id] = proposal
                session.status = STATUS_AWAITING
        return proposal_to_json(proposal)

    @app.post("/sessions/{sid}/nodes/{node_id}/propose")
    def propose(sid: str, node_id: int, response: Response) -> dict:
        session = store.get(sid)
        _node_or_404(session, node_id)
        future = store.executor.submit(_run_propose, session, node_id)
        try:
            return future.result(timeout=store.propose_wait)
        except FutureTimeout:
            job_id = uuid.uuid4().hex[:12]
            store.jobs[job_id] = future
            response.status_code = 202
            return {"job_id": job_id, "state": "running", "poll": f"/sessions/{sid}/jobs/{job_id}"}

    @app.get("/sessions/{sid}/jobs/{job_id}")
    def poll_job(sid: str, job_id: str) -> dict:
        store.get(sid)
        future = store.jobs.get(job_id)
        if future is None:
            raise ApiError(404, f"unknown job {job_id!r}")
        if not future.done():
            return {"job_id": job_id, "state": "running"}
        del store.jobs[job_id]
        exc = future.exception()
        if exc is not None:
            if isinstance(exc, PlannerUnavailable):
                raise ApiError(502, str(exc))
            raise ApiError(500, str(exc))
        return {"job_id": job_id, "state": "done", "proposal": future.result()}

    @app.post("/sessions/{sid}/nodes/{node_id}/decision")
    async def decide(sid: str, node_id: int, request: Request) -> dict:
        session = store.get(sid)
        _node_or_404(session, node_id)
        try:
            body = await request.json()
        except Exception as exc:
            raise ApiError(400, f"body must be JSON: {exc}") from exc
        action = body.get("action")
        element = body.get("element")
        if action not in ("accept", "skip", "force_remove", "forbid"):
            raise ApiError(400, "action must be accept, skip, force_remove, or forbid")
        with session.lock:
            if action in ("accept", "skip"):
                proposal = session.proposals.get(node_id)
                if proposal is None:
                    raise ApiError(409, f"no cached proposal for node {node_id}; call propose first")
                if action == "accept":
                    if proposal.status != PROPOSAL_READY:
                        raise ApiError(409, f"cached proposal is {proposal.status}, not acceptable")
                    child = commit_proposal(session.tree, proposal)
                    # The accepted chain becomes the working path exports default to.
                    session.tree.main_path = session.tree.path_to(child.node_id)
                    del session.proposals[node_id]
                    result = {"node_id": child.node_id, "action": action}
                else:
                    if proposal.planned is None:
                        raise ApiError(409, "cached proposal has no element to skip")
                    record_skip(session.tree, proposal)
                    del session.proposals[node_id]
                    result = {"node_id": node_id, "action": action}
            else:
                if not element:
                    raise ApiError(400, f"{action} needs an 'element'")
                directive = BranchDirective(node_id=node_id, action=action, element=str(element))
                try:
                    branch(
                        session.tree, directive, session.planner, session.editor,
                        default_verifier(session.config), session.config, auto_continue=False,
                    )
                except KeyError as exc:
                    raise ApiError(404, str(exc)) from exc
                except ValueError as exc:
                    raise ApiError(409, str(exc)) from exc
                except RuntimeError as exc:
                    raise ApiError(422, str(exc)) from exc
                child_id = max(session.tree.nodes)
                result = {"node_id": child_id, "action": action}
            session.status = STATUS_IDLE
            session.persist()
        return result

    @app.post("/sessions/{sid}/export")
    async def export(sid: str, request: Request) -> dict:
        session = store.get(sid)
        body = {}
        if (await request.body()):
            try:
                body = await request.json()
            except Exception as exc:
                raise ApiError(400, f"body must be JSON: {exc}") from exc
        repeat = int(body.get("repeat", session.config.frame_repeat))
        total = int(body.get("total", session.config.video_length))
        node_id = body.get("node_id")
        with session.lock:
            tree = session.tree
            leaf = int(node_id) if node_id is not None else tree.main_path[-1]
            _node_or_404(session, leaf)
            images = tree.path_images(leaf)
            try:
                frames = frames_for_preset(images, repeat, total)
            except ValueError as exc:
                raise ApiError(400, str(exc)) from exc
            export_id = f"export_{uuid.uuid4().hex[:8]}"
            export_dir = os.path.join(session.directory, "exports", export_id)
            os.makedirs(export_dir, exist_ok=True)
            manifest = {
                "export_id": export_id,
                "session_id": sid,
                "node_id": leaf,
                "repeat": repeat,
                "total": total,
                "frame_count": len(frames),
                "path": tree.path_to(leaf),
            }
            archive_path = os.path.join(session.directory, "exports", f"{export_id}.zip")
            with zipfile.ZipFile(archive_path, "w", zipfile.ZIP_DEFLATED) as zf:
                for i, frame in enumerate(frames):
                    name = f"frame_{i:04d}.png"
                    frame_path = os.path.join(export_dir, name)
                    raster.save_image(frame_path, frame)
                    zf.write(frame_path, arcname=f"{export_id}/{name}")
                manifest_bytes = json.dumps(manifest, indent=2).encode("utf-8")
                with open(os.path.join(export_dir, "manifest.json"), "wb") as fh:
                    fh.write(manifest_bytes)
                zf.writestr(f"{export_id}/manifest.json", manifest_bytes)
        manifest["archive"] = f"/sessions/{sid}/exports/{export_id}.zip"
        return manifest

    @app.get("/sessions/{sid}/exports/{name}")
    def download_export(sid: str, name: str) -> FileResponse:
        session = store.get(sid)
        if "/" in name or ".." in name:
            raise ApiError(400, "bad export name")
        path = os.path.join(session.directory, "exports", name)
        if not os.path.isfile(path):
            raise ApiError(404, f"no export {name!r}")
        return FileResponse(path, media_type="application/zip")

    @app.get("/sessions/{sid}/nodes/{node_id}/image")
    def node_image(sid: str, node_id: int) -> Response:
        session = store.get(sid)
        node = _node_or_404(session, node_id)
        return Response(content=image_png_bytes(node.image), media_type="image/png")

    @app.get("/sessions/{sid}/nodes/{node_id}/mask")
    def node_mask(sid: str, node_id: int) -> Response:
        session = store.get(sid)
        node = _node_or_404(session, node_id)
        if node.step is None or node.step.change_mask is None:
            raise ApiError(404, f"node {node_id} has no change mask")
        return Response(content=_mask_png_bytes(node.step.change_mask), media_type="image/png")

    if static_dir is not None and os.path.isdir(os.fspath(static_dir)):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=os.fspath(static_dir), html=True), name="ui")

    return app


__all__ = [
    "ApiError",
    "Session",
    "SessionStore",
    "config_from_json",
    "config_to_json",
    "create_app",
    "endpoint_from_env",
    "proposal_to_json",
]
