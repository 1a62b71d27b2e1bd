"""Clients for the multimodal, text, and embedding services, plus the
reference-image database.

Every operation has two modes selected by ClientConfig.offline:
  - live: HTTP JSON calls against a chat/vision/embedding endpoint, with
    bounded retries and exponential backoff;
  - offline: deterministic computational fakes, pure functions of their
    inputs, so the whole pipeline runs reproducibly with no network.

Prompts are data: template files shipped under scenegraph3d/prompts/.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import ATTRIBUTE_FIELDS, AttributeSet
from .errors import FileAccessError, ParseError, ResponseParseError, ServiceError
from .render import RasterImage

logger = logging.getLogger(__name__)

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.25
RETRYABLE_KINDS = frozenset({"timeout", "http"})
OFFLINE_EMBED_DIM = 256
THUMB_SIZE = 32

_TASK_TAG_RE = re.compile(r"\[task:([a-z_]+)\]")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def load_prompt(name: str) -> str:
    """Read a prompt template shipped with the package."""
    return resources.files("scenegraph3d").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def fill_prompt(template: str, **values) -> str:
    """Substitute {name} placeholders. Plain replacement, so JSON braces in
    templates need no escaping."""
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out


def tokenize(text: str) -> set:
    return set(_TOKEN_RE.findall(text.lower()))


@dataclass
class ClientConfig:
    """Connection and policy settings shared by all clients."""

    endpoint_url: str = ""
    api_key: str = ""
    model: str = "gpt-4o"
    timeout_s: float = 60.0
    max_retries: int = 2
    max_concurrent: int = 4
    offline: bool = False

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass
class FrontViewJudgment:
    """Per-view front-likeness confidences. best_index is the argmax with
    ties going to the lowest index."""

    per_view_confidence: list
    best_index: int

    def __post_init__(self):
        if not self.per_view_confidence:
            raise ValueError("judgment needs at least one view")
        for c in self.per_view_confidence:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} outside [0, 1]")
        expected = _argmax_lowest(self.per_view_confidence)
        if self.best_index != expected:
            raise ValueError(f"best_index {self.best_index} is not the argmax ({expected})")

    @classmethod
    def from_confidences(cls, confidences) -> "FrontViewJudgment":
        confs = [float(c) for c in confidences]
        return cls(per_view_confidence=confs, best_index=_argmax_lowest(confs))


def _argmax_lowest(values) -> int:
    best, best_v = 0, -float("inf")
    for i, v in enumerate(values):
        if v > best_v:
            best, best_v = i, v
    return best


@dataclass
class ViewAttributeRecord:
    """Raw attribute extraction result for a single view."""

    fields: dict                      # the canonical keys, always present
    extra: dict = field(default_factory=dict)
    missing: tuple = ()

    def __post_init__(self):
        for key in ATTRIBUTE_FIELDS:
            self.fields.setdefault(key, "")


class ReferenceDatabase:
    """Directory of canonical front-view images, one per class label,
    described by a manifest.json mapping label to filename."""

    def __init__(self, directory, manifest: dict):
        self.directory = Path(directory)
        self.manifest = dict(manifest)

    @classmethod
    def load(cls, directory) -> "ReferenceDatabase":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.is_file():
            raise FileAccessError("reference manifest not found", str(manifest_path))
        try:
            raw = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid reference manifest: {exc.msg}", path=str(manifest_path), line=exc.lineno)
        if not isinstance(raw, dict) or not all(isinstance(k, str) and isinstance(v, str) for k, v in raw.items()):
            raise ParseError("reference manifest must map class labels to filenames", path=str(manifest_path))
        return cls(directory, raw)

    def lookup(self, class_label: str):
        """The class reference image, or None when the class is unknown."""
        filename = self.manifest.get(class_label)
        if filename is None:
            return None
        path = self.directory / filename
        try:
            return RasterImage.load_png(path)
        except (OSError, ValueError) as exc:
            raise FileAccessError(f"reference image unreadable ({exc})", str(path))


class HttpTransport:
    """Default live transport: POST JSON, return the decoded JSON body.

    Raises ServiceError(kind="timeout"/"http") for transport failures and
    ResponseParseError for bodies that are not JSON.
    """

    def __init__(self, config: ClientConfig):
        self.config = config

    def __call__(self, path: str, payload: dict, timeout: float) -> dict:
        import requests

        if not self.config.endpoint_url:
            raise ServiceError(
                "no endpoint configured: set VIZOR_API_URL or the client url", kind="config"
            )
        url = self.config.endpoint_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.Timeout:
            raise ServiceError(f"request to {url} timed out after {timeout}s", kind="timeout")
        except requests.RequestException as exc:
            raise ServiceError(f"request to {url} failed: {exc}", kind="http")
        if resp.status_code != 200:
            raise ServiceError(f"{url} returned HTTP {resp.status_code}", kind="http")
        try:
            return resp.json()
        except ValueError:
            raise ResponseParseError(f"{url} returned a non-JSON body", raw=resp.text[:500])


class PerceptionClients:
    """Facade over the vision, text, and embedding services plus the
    reference database. Thread safe up to config.max_concurrent in-flight
    live requests; offline fakes are pure and need no limiting."""

    def __init__(self, config: ClientConfig, reference_db: ReferenceDatabase = None,
                 transport=None, sleep=time.sleep, rng: random.Random = None):
        self.config = config
        self.reference_db = reference_db
        self._transport = transport if transport is not None else HttpTransport(config)
        self._sleep = sleep
        self._rng = rng if rng is not None else random.Random()
        self._gate = threading.BoundedSemaphore(config.max_concurrent)
        self._fake_handlers = {
            "ground": self._fake_ground,
            "enrich": self._fake_enrich,
            "aggregate": self._fake_aggregate,
        }

    def cache_key(self) -> tuple:
        """Identity of the embedding space, for caching embeddings."""
        if self.config.offline:
            return ("offline", OFFLINE_EMBED_DIM)
        return ("live", self.config.endpoint_url, self.config.model)

    # ---- reference database ----

    def lookup_reference(self, class_label: str):
        if self.reference_db is None:
            return None
        return self.reference_db.lookup(class_label)

    # ---- front-view identification ----

    def identify_front_view(self, reference, views: list, class_label: str) -> FrontViewJudgment:
        if not views:
            raise ValueError("views must be nonempty")
        if self.config.offline:
            return self._fake_identify(reference, views)

        prompt = fill_prompt(load_prompt("front_view"), class_label=class_label, num_views=len(views))
        images = ([reference] if reference is not None else []) + list(views)

        def attempt():
            content = self._chat(prompt, images)
            doc = _extract_json(content)
            if not isinstance(doc, dict) or "confidences" not in doc:
                raise ResponseParseError("missing 'confidences' key", raw=content[:500])
            confs = doc["confidences"]
            if not isinstance(confs, list) or len(confs) != len(views):
                raise ResponseParseError(f"expected {len(views)} confidences", raw=content[:500])
            try:
                clamped = [min(max(float(c), 0.0), 1.0) for c in confs]
            except (TypeError, ValueError):
                raise ResponseParseError("confidences are not numbers", raw=content[:500])
            return FrontViewJudgment.from_confidences(clamped)

        return self._with_retry(attempt)

    def _fake_identify(self, reference, views: list) -> FrontViewJudgment:
        if reference is None:
            return FrontViewJudgment.from_confidences([1.0 / len(views)] * len(views))
        ref_vec = reference.downsample_gray(THUMB_SIZE)
        confs = [_cosine01(ref_vec, view.downsample_gray(THUMB_SIZE)) for view in views]
        return FrontViewJudgment.from_confidences(confs)

    # ---- attribute extraction ----

    def extract_view_attributes(self, view: RasterImage, class_label: str) -> ViewAttributeRecord:
        if self.config.offline:
            return self._fake_view_attributes(view, class_label)

        prompt = fill_prompt(load_prompt("view_attributes"), class_label=class_label)

        def attempt():
            content = self._chat(prompt, [view])
            doc = _extract_json(content)
            if not isinstance(doc, dict):
                raise ResponseParseError("expected a JSON object of attributes", raw=content[:500])
            fields, extra, missing = {}, {}, []
            for key in ATTRIBUTE_FIELDS:
                if key in doc and doc[key] is not None:
                    fields[key] = str(doc[key])
                else:
                    fields[key] = ""
                    missing.append(key)
            for key, value in doc.items():
                if key not in ATTRIBUTE_FIELDS and value is not None:
                    extra[str(key)] = str(value)
            return ViewAttributeRecord(fields=fields, extra=extra, missing=tuple(missing))

        return self._with_retry(attempt)

    def _fake_view_attributes(self, view: RasterImage, class_label: str) -> ViewAttributeRecord:
        color, shape = _describe_pixels(view)
        fields = {
            "color": color,
            "geometry": shape,
            "functionality": f"serves as a {class_label}",
            "structural_details": f"{shape} {color} body",
            "caption": f"a {color} {class_label}",
        }
        return ViewAttributeRecord(fields=fields)

    def aggregate_attributes(self, records: list) -> AttributeSet:
        """Merge per-view records into one AttributeSet."""
        if not records:
            raise ValueError("no records to aggregate")
        if self.config.offline:
            return _aggregate_majority(records)

        context = json.dumps(
            {"records": [{**r.fields, **r.extra} for r in records]}, ensure_ascii=False
        )

        def attempt():
            content = self._chat(load_prompt("aggregate") + "\n\n" + context, [])
            doc = _extract_json(content)
            if not isinstance(doc, dict):
                raise ResponseParseError("expected a JSON object", raw=content[:500])
            kwargs = {key: str(doc.get(key, "") or "") for key in ATTRIBUTE_FIELDS}
            extra = {str(k): str(v) for k, v in doc.items() if k not in ATTRIBUTE_FIELDS and v is not None}
            return AttributeSet(extra=extra, **kwargs)

        return self._with_retry(attempt)

    # ---- text embedding ----

    def embed_text(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        if self.config.offline:
            return _hash_embed(text, OFFLINE_EMBED_DIM)

        payload = {"model": self.config.model, "input": text}

        def attempt():
            doc = self._post("/embeddings", payload)
            try:
                vec = np.asarray(doc["data"][0]["embedding"], dtype=np.float64)
            except (KeyError, IndexError, TypeError, ValueError):
                raise ResponseParseError("embedding missing from response", raw=json.dumps(doc)[:500])
            norm = float(np.linalg.norm(vec))
            if vec.ndim != 1 or vec.size == 0 or norm == 0.0:
                raise ResponseParseError("embedding is empty or zero", raw=json.dumps(doc)[:500])
            return vec / norm

        return self._with_retry(attempt)

    # ---- text completion ----

    def complete_text(self, prompt: str, context: str = "") -> str:
        if self.config.offline:
            return self._fake_complete(prompt, context)
        text = prompt if not context else prompt + "\n\n" + context
        return self._with_retry(lambda: self._chat(text, []))

    def _fake_complete(self, prompt: str, context: str) -> str:
        match = _TASK_TAG_RE.search(prompt)
        tag = match.group(1) if match else None
        handler = self._fake_handlers.get(tag)
        if handler is None:
            raise ServiceError(f"no fake handler for task tag {tag!r}", kind="config")
        return handler(prompt, context)

    # ---- offline fake handlers ----

    def _fake_ground(self, prompt: str, context: str) -> str:
        """Pick the node whose label/color/caption tokens overlap the query
        most; ties go to the lowest id."""
        qmatch = re.search(r"(?im)^query:\s*(.+)$", prompt)
        if qmatch is None:
            raise ServiceError("grounding prompt has no Query line", kind="config")
        query_tokens = tokenize(qmatch.group(1))
        best_id, best_score = None, -1
        for line in context.splitlines():
            if not line.startswith("- id "):
                continue
            parts = [p.strip() for p in line[2:].split(" | ")]
            node_id = int(parts[0].split()[1])
            fields = {}
            for part in parts[1:]:
                key, _, value = part.partition(": ")
                fields[key] = value
            node_tokens = tokenize(
                " ".join(fields.get(k, "") for k in ("label", "color", "caption"))
            )
            score = len(query_tokens & node_tokens)
            if score > best_score:
                best_id, best_score = node_id, score
        if best_id is None:
            raise ServiceError("grounding context contains no node lines", kind="config")
        return f"object {best_id}: shares {best_score} token(s) with the query"

    def _fake_enrich(self, prompt: str, context: str) -> str:
        doc = json.loads(context)
        return json.dumps([edge["relation"] for edge in doc["edges"]])

    def _fake_aggregate(self, prompt: str, context: str) -> str:
        doc = json.loads(context)
        records = [ViewAttributeRecord(fields=dict(r)) for r in doc["records"]]
        merged = _aggregate_majority(records)
        return json.dumps(merged.to_dict(), ensure_ascii=False)

    # ---- live plumbing ----

    def _post(self, path: str, payload: dict) -> dict:
        with self._gate:
            return self._transport(path, payload, self.config.timeout_s)

    def _chat(self, text: str, images: list) -> str:
        content = [{"type": "text", "text": text}]
        for img in images:
            encoded = base64.b64encode(img.png_bytes()).decode("ascii")
            content.append({
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{encoded}"},
            })
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        }
        doc = self._post("/chat/completions", payload)
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ResponseParseError("chat response has no message content", raw=json.dumps(doc)[:500])

    def _with_retry(self, attempt):
        """Run attempt with up to max_retries retries on retryable service
        failures. Parse errors surface immediately."""
        attempts = self.config.max_retries + 1
        for i in range(attempts):
            try:
                return attempt()
            except ResponseParseError:
                raise
            except ServiceError as exc:
                if exc.kind not in RETRYABLE_KINDS or i == attempts - 1:
                    raise
                delay = BACKOFF_BASE_S * (BACKOFF_FACTOR ** i)
                delay *= 1.0 + BACKOFF_JITTER * self._rng.random()
                logger.warning("retryable %s failure (attempt %d/%d), sleeping %.2fs: %s",
                               exc.kind, i + 1, attempts, delay, exc)
                self._sleep(delay)


def _cosine01(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(max(float(np.dot(a, b)) / (na * nb), 0.0), 1.0)


def _hash_embed(text: str, dim: int) -> np.ndarray:
    """Feature-hash tokens into dim buckets with hash-derived signs, then
    normalize. Deterministic, case-insensitive, whitespace-tokenized."""
    vec = np.zeros(dim, dtype=np.float64)
    for token in text.lower().split():
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        # opposite-sign collisions cancelled out; fall back to a whole-string bucket
        digest = hashlib.sha256(text.lower().encode("utf-8")).digest()
        vec[int.from_bytes(digest[:4], "big") % dim] = 1.0
        norm = 1.0
    return vec / norm


_COLOR_NAMES = ("red", "orange", "yellow", "green", "cyan", "blue", "purple", "magenta",
                "white", "gray", "black")
_HUE_BOUNDS = ((15, "red"), (45, "orange"), (75, "yellow"), (165, "green"), (195, "cyan"),
               (255, "blue"), (285, "purple"), (330, "magenta"), (360, "red"))


def _describe_pixels(view: RasterImage) -> tuple:
    """Dominant color name and a coarse shape word for the non-background
    pixels of a rendered view."""
    arr = view.to_array().astype(np.float64)
    fg = ~np.all(arr >= 250.0, axis=2)
    if not fg.any():
        return "white", "empty"
    r, g, b = arr[fg, 0], arr[fg, 1], arr[fg, 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    value = mx / 255.0
    sat = np.where(mx > 0, delta / np.maximum(mx, 1e-9), 0.0)

    names = np.array(_COLOR_NAMES)
    idx = np.empty(r.shape, dtype=np.int64)
    achromatic = sat < 0.15
    idx[achromatic & (value > 0.85)] = _COLOR_NAMES.index("white")
    idx[achromatic & (value <= 0.85) & (value >= 0.2)] = _COLOR_NAMES.index("gray")
    idx[achromatic & (value < 0.2)] = _COLOR_NAMES.index("black")

    chroma = ~achromatic
    if chroma.any():
        dc = np.maximum(delta[chroma], 1e-9)
        rc, gc, bc = r[chroma], g[chroma], b[chroma]
        mxc = mx[chroma]
        hue = np.where(
            mxc == rc, np.mod((gc - bc) / dc, 6.0),
            np.where(mxc == gc, (bc - rc) / dc + 2.0, (rc - gc) / dc + 4.0),
        ) * 60.0
        hue_idx = np.empty(hue.shape, dtype=np.int64)
        prev = 0
        for bound, name in _HUE_BOUNDS:
            mask = (hue >= prev) & (hue < bound)
            hue_idx[mask] = _COLOR_NAMES.index(name)
            prev = bound
        idx[chroma] = hue_idx

    counts = np.bincount(idx, minlength=len(_COLOR_NAMES))
    color = str(names[int(np.argmax(counts))])

    rows = np.nonzero(fg.any(axis=1))[0]
    cols = np.nonzero(fg.any(axis=0))[0]
    h = rows[-1] - rows[0] + 1
    w = cols[-1] - cols[0] + 1
    if h >= 1.3 * w:
        shape = "tall"
    elif w >= 1.3 * h:
        shape = "wide"
    else:
        shape = "boxy"
    return color, shape


def _aggregate_majority(records: list) -> AttributeSet:
    """Per-field majority vote with ties resolved by the lowest view index;
    the caption is the longest one (same tie rule)."""
    kwargs = {}
    for key in ATTRIBUTE_FIELDS:
        values = [r.fields.get(key, "") for r in records]
        if key == "caption":
            best, best_len = "", -1
            for v in values:
                if len(v) > best_len:
                    best, best_len = v, len(v)
            kwargs[key] = best
        else:
            kwargs[key] = _majority(values)
    extra_keys = []
    for r in records:
        for k in getattr(r, "extra", {}):
            if k not in extra_keys:
                extra_keys.append(k)
    extra = {}
    for k in extra_keys:
        values = [r.extra[k] for r in records if k in getattr(r, "extra", {})]
        extra[k] = _majority(values)
    return AttributeSet(extra=extra, **kwargs)


def _majority(values: list) -> str:
    counts, first_seen = {}, {}
    for i, v in enumerate(values):
        counts[v] = counts.get(v, 0) + 1
        first_seen.setdefault(v, i)
    return max(counts, key=lambda v: (counts[v], -first_seen[v]))


def _extract_json(text: str):
    """Parse JSON from model output, tolerating fenced code blocks and
    surrounding prose."""
    candidates = [text.strip()]
    fence = re.search(r"```(?:json)?\s*(.*?)```", text, re.DOTALL)
    if fence:
        candidates.insert(0, fence.group(1).strip())
    start = min((i for i in (text.find("{"), text.find("[")) if i >= 0), default=-1)
    if start >= 0:
        end = max(text.rfind("}"), text.rfind("]"))
        if end > start:
            candidates.append(text[start:end + 1])
    for cand in candidates:
        try:
            return json.loads(cand)
        except json.JSONDecodeError:
            continue
    raise ResponseParseError("model output is not valid JSON", raw=text[:500])
