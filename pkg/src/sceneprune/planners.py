"""Select/Remove back-ends: prompt protocol, oracle planner/editor, remote clients.

The prompt protocol ships as verbatim text assets with {name} placeholders.
Remote planners and editors speak a single multipart HTTP POST (image +
prompt) so no vendor SDK is assumed; the oracle pair operates on SceneSpecs
and is exact, which is what every ordering test leans on.
"""

from __future__ import annotations

import io
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Optional, Sequence

import httpx
import numpy as np
from PIL import Image as PILImage

from . import raster
from .scene import SceneSpec, SemanticLevel, remove_element_oracle, render, visible_footprint

PROMPT_IDS = (
    "enumerate_distractor",
    "enumerate_structural",
    "enumerate_general",
    "select_distractor",
    "select_general",
    "inpaint_direct",
    "inpaint_abstractive",
    "baseline_video",
)

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_TUPLE_RE = re.compile(r"\(([^()]*)\)")

EDIT_VARIATIONS = ("direct", "abstractive")


class PromptError(ValueError):
    """Unknown template or incomplete placeholder bindings."""


class PlannerParseError(ValueError):
    """The reply text does not follow the response contract."""


class PlannerUnavailable(RuntimeError):
    """Transport failure or retries exhausted against a remote back-end."""


@dataclass(slots=True, frozen=True)
class ElementCandidate:
    index: int
    name: str
    description: str


@dataclass(slots=True, frozen=True)
class PlannerResponse:
    primary_subject: str
    list_objects: tuple[tuple[str, str], ...]

    def candidates(self) -> list[ElementCandidate]:
        return [ElementCandidate(i, name, desc) for i, (name, desc) in enumerate(self.list_objects)]


def template_body(template_id: str, prompt_dir: Optional[str] = None) -> str:
    """Raw template text; prompt_dir overrides the packaged assets."""
    if template_id not in PROMPT_IDS:
        raise PromptError(f"unknown prompt template {template_id!r}")
    if prompt_dir is not None:
        with open(f"{prompt_dir}/{template_id}.txt", "r", encoding="utf-8") as fh:
            return fh.read()
    return resources.files("sceneprune.prompts").joinpath(f"{template_id}.txt").read_text(encoding="utf-8")


def template_placeholders(body: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(body))


def render_prompt(template_id: str, bindings: Optional[Mapping[str, str]] = None, prompt_dir: Optional[str] = None) -> str:
    """Fill every placeholder; missing names raise a PromptError naming them."""
    body = template_body(template_id, prompt_dir)
    bindings = dict(bindings or {})
    missing = template_placeholders(body) - set(bindings)
    if missing:
        raise PromptError(f"missing binding for placeholder(s): {', '.join(sorted(missing))}")
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], body)


def enumerate_prompt_for(level: SemanticLevel, prompt_dir: Optional[str] = None) -> str:
    """Enumeration prompt for the active taxonomy level.

    Structural surfaces sit at the Background level of the taxonomy; the
    middle levels go through the general template with p_level filled in.
    """
    if level == SemanticLevel.DISTRACTOR:
        return render_prompt("enumerate_distractor", prompt_dir=prompt_dir)
    if level == SemanticLevel.BACKGROUND:
        return render_prompt("enumerate_structural", prompt_dir=prompt_dir)
    p_level = "secondary" if level == SemanticLevel.SECONDARY else "primary"
    return render_prompt("enumerate_general", {"p_level": p_level}, prompt_dir=prompt_dir)


def select_prompt_for(level: SemanticLevel, candidates: Sequence[ElementCandidate], prompt_dir: Optional[str] = None) -> str:
    template = "select_distractor" if level == SemanticLevel.DISTRACTOR else "select_general"
    return render_prompt(template, {"list_of_objects": format_object_list(candidates)}, prompt_dir=prompt_dir)


def format_object_list(candidates: Sequence[ElementCandidate]) -> str:
    return ", ".join(f"({c.index}, {c.name}, {c.description})" for c in candidates)


def parse_planner_response(text: str) -> PlannerResponse:
    """Parse the enumeration reply, tolerating fences and surrounding prose."""
    payload = _extract_json(text)
    if not isinstance(payload, dict):
        raise PlannerParseError("reply is not a JSON object")
    if "primary_subject" not in payload:
        raise PlannerParseError("missing key primary_subject")
    if "list_objects" not in payload:
        raise PlannerParseError("missing key list_objects")
    subject = payload["primary_subject"]
    if not isinstance(subject, str):
        raise PlannerParseError("primary_subject must be a string")
    raw_list = payload["list_objects"]
    if not isinstance(raw_list, list):
        raise PlannerParseError("list_objects must be a list")
    pairs = []
    for i, entry in enumerate(raw_list):
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise PlannerParseError(f"list_objects[{i}] is not a [name, description] pair")
        name, desc = entry
        if not isinstance(name, str) or not isinstance(desc, str):
            raise PlannerParseError(f"list_objects[{i}] entries must be strings")
        pairs.append((name, desc))
    return PlannerResponse(primary_subject=subject, list_objects=tuple(pairs))


def _extract_json(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    start, end = text.find("{"), text.rfind("}")
    if start == -1 or end <= start:
        raise PlannerParseError("no JSON object found in reply")
    try:
        return json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise PlannerParseError(f"malformed JSON in reply: {exc}") from None


def parse_selection(text: str) -> ElementCandidate:
    """Parse the single (ID, name, description) selection tuple."""
    groups = _TUPLE_RE.findall(text)
    if len(groups) != 1:
        raise PlannerParseError(f"expected exactly one tuple in reply, found {len(groups)}")
    parts = groups[0].split(",")
    if len(parts) < 3:
        raise PlannerParseError("selection tuple needs (ID, name, description)")
    raw_id = parts[0].strip()
    try:
        index = int(raw_id)
    except ValueError:
        raise PlannerParseError(f"selection ID {raw_id!r} is not an integer") from None
    name = _strip_quotes(parts[1])
    description = _strip_quotes(",".join(parts[2:]))
    if not name:
        raise PlannerParseError("selection name is empty")
    return ElementCandidate(index=index, name=name, description=description)


def _strip_quotes(text: str) -> str:
    s = text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        s = s[1:-1].strip()
    return s


LEVEL_EXHAUSTED = None


def oracle_plan(spec: SceneSpec, active_level: SemanticLevel) -> Optional[str]:
    """Pick the least-important remaining element at the active level.

    Smallest visible footprint wins; ties break lexicographically by id.
    Returns None when the level has no elements left in the spec.
    """
    best: Optional[tuple[int, str]] = None
    for el in spec.elements:
        if el.level != active_level:
            continue
        area = raster.mask_area(visible_footprint(spec, el.id))
        key = (area, el.id)
        if best is None or key < best:
            best = key
    return best[1] if best else LEVEL_EXHAUSTED


def oracle_edit(spec: SceneSpec, element_id: str) -> np.ndarray:
    """Perfect removal: re-render the spec without the element."""
    return render(remove_element_oracle(spec, element_id))


@dataclass(slots=True)
class EndpointConfig:
    """Where and how to reach a remote planner/editor service."""

    base_url: str
    model: str = ""
    auth_token: str = ""
    timeout: float = 120.0
    prompt_dir: Optional[str] = None
    max_parse_retries: int = 2

    def headers(self) -> dict[str, str]:
        return {"Authorization": f"Bearer {self.auth_token}"} if self.auth_token else {}


def endpoint_from_env() -> Optional["EndpointConfig"]:
    """Endpoint from SCENEPRUNE_REMOTE_URL / _MODEL / _TOKEN, or None."""
    url = os.environ.get("SCENEPRUNE_REMOTE_URL")
    if not url:
        return None
    return EndpointConfig(
        base_url=url,
        model=os.environ.get("SCENEPRUNE_REMOTE_MODEL", ""),
        auth_token=os.environ.get("SCENEPRUNE_REMOTE_TOKEN", ""),
    )


def image_png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(raster.to_uint8(raster.ensure_image(image)), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            return raster.from_uint8(np.asarray(im.convert("RGB")))
    except Exception as exc:
        raise PlannerParseError(f"payload is not a decodable image: {exc}") from None


def _post(cfg: EndpointConfig, path: str, image: np.ndarray, prompt: str, client: Optional[httpx.Client]) -> httpx.Response:
    files = {"image": ("image.png", image_png_bytes(image), "image/png")}
    data = {"prompt": prompt, "model": cfg.model}
    url = cfg.base_url.rstrip("/") + path
    try:
        if client is not None:
            resp = client.post(url, data=data, files=files, headers=cfg.headers(), timeout=cfg.timeout)
        else:
            with httpx.Client(timeout=cfg.timeout) as own:
                resp = own.post(url, data=data, files=files, headers=cfg.headers())
        resp.raise_for_status()
        return resp
    except httpx.HTTPError as exc:
        raise PlannerUnavailable(f"remote call {path} failed: {exc}") from exc


def remote_plan(
    image: np.ndarray,
    active_level: SemanticLevel,
    cfg: EndpointConfig,
    client: Optional[httpx.Client] = None,
) -> list[ElementCandidate]:
    """Enumerate removal candidates via the remote planner.

    Malformed replies are retried up to cfg.max_parse_retries extra times;
    transport errors and exhausted retries surface as PlannerUnavailable.
    """
    prompt = enumerate_prompt_for(active_level, cfg.prompt_dir)
    last_error: Optional[PlannerParseError] = None
    for _ in range(cfg.max_parse_retries + 1):
        resp = _post(cfg, "/plan", image, prompt, client)
        try:
            return parse_planner_response(_reply_text(resp)).candidates()
        except PlannerParseError as exc:
            last_error = exc
    raise PlannerUnavailable(f"planner replies stayed malformed after retries: {last_error}")


def remote_select(
    image: np.ndarray,
    active_level: SemanticLevel,
    candidates: Sequence[ElementCandidate],
    cfg: EndpointConfig,
    client: Optional[httpx.Client] = None,
) -> ElementCandidate:
    """Ask the remote planner to pick one candidate; taken verbatim."""
    prompt = select_prompt_for(active_level, candidates, cfg.prompt_dir)
    last_error: Optional[PlannerParseError] = None
    for _ in range(cfg.max_parse_retries + 1):
        resp = _post(cfg, "/plan", image, prompt, client)
        try:
            picked = parse_selection(_reply_text(resp))
        except PlannerParseError as exc:
            last_error = exc
            continue
        if not any(c.index == picked.index for c in candidates):
            last_error = PlannerParseError(f"selected index {picked.index} not offered")
            continue
        return picked
    raise PlannerUnavailable(f"selection replies stayed malformed after retries: {last_error}")


def _reply_text(resp: httpx.Response) -> str:
    try:
        payload = resp.json()
    except json.JSONDecodeError:
        return resp.text
    if isinstance(payload, dict) and isinstance(payload.get("text"), str):
        return payload["text"]
    return resp.text


def remote_edit(
    image: np.ndarray,
    object_description: str,
    variation: str,
    cfg: EndpointConfig,
    client: Optional[httpx.Client] = None,
) -> np.ndarray:
    """Request a removal edit; output is resampled back to input dimensions."""
    if variation not in EDIT_VARIATIONS:
        raise ValueError(f"variation must be one of {EDIT_VARIATIONS}")
    template = "inpaint_direct" if variation == "direct" else "inpaint_abstractive"
    prompt = render_prompt(template, {"OBJECT": object_description}, prompt_dir=cfg.prompt_dir)
    resp = _post(cfg, "/edit", image, prompt, client)
    out = decode_image_bytes(resp.content)
    if out.shape[:2] != image.shape[:2]:
        out = raster.resample_image(out, image.shape[0], image.shape[1])
    return out
