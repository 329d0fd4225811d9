"""Boundary to external vision-language models.

Requests travel over one of two interchangeable transports: a synchronous
JSON-over-HTTP wire, or a file-batch drop box (write ``*.req.jsonl``, poll
for ``*.resp.jsonl`` plus a ``.done`` marker) that keeps GPU-side runners
fully external. Batches never abort on individual failures; every request
gets exactly one response, in request order.

Two mock models support offline pipelines: an oracle that answers from
ground truth in canonical phrasing, and a seeded uniform-random baseline.
The sampling configuration is transmitted with every request but never
applied locally; generation happens inside the external model.
"""

import json
import random as random_module
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .builders import ConversationSample
from .coords import BBox, ImageDims, PointLoc, ReprScheme, encode_bbox, encode_point
from .prompts import CAPTION_REQUEST, LOCPRED, NEGPRED, REVLOC
from .seeding import derive_seed


@dataclass(frozen=True)
class ModelRequest:
    request_id: str
    media_ref: str
    prompt: str


@dataclass(frozen=True)
class ModelResponse:
    request_id: str
    text: str
    status: str = "ok"  # "ok" | "error"
    error_detail: str | None = None

    def __post_init__(self):
        if self.status == "error" and not self.error_detail:
            raise ValueError("error responses need error_detail")


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.2
    max_new_tokens: int = 128

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_new_tokens": self.max_new_tokens}


class TransientTransportError(RuntimeError):
    """Failure worth retrying: connection refused, timeout, 5xx."""


def _error(request: ModelRequest, detail: str) -> ModelResponse:
    return ModelResponse(request.request_id, "", status="error", error_detail=detail)


class HttpTransport:
    """POST each request as JSON to a single endpoint; one reply per request."""

    def __init__(self, endpoint: str, timeout: float = 30.0, session=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def send(self, request: ModelRequest, cfg: SamplingConfig) -> ModelResponse:
        payload = {
            "request_id": request.request_id,
            "media_ref": request.media_ref,
            "prompt": request.prompt,
            "sampling": cfg.to_dict(),
        }
        try:
            reply = self.session.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransientTransportError(str(exc)) from exc
        if reply.status_code >= 500:
            raise TransientTransportError(f"server error {reply.status_code}")
        if reply.status_code != 200:
            raise ValueError(f"request rejected with status {reply.status_code}")
        try:
            body = reply.json()
        except ValueError as exc:
            raise ValueError(f"malformed server reply: {exc}") from exc
        if body.get("request_id") != request.request_id:
            raise ValueError(f"reply id {body.get('request_id')!r} does not match request")
        if "error" in body:
            return _error(request, str(body["error"]))
        if "text" not in body:
            raise ValueError("reply carries neither text nor error")
        return ModelResponse(request.request_id, body["text"])


class FileBatchTransport:
    """Write a request file into a shared directory and poll for the response file.

    The external runner consumes ``<stem>.req.jsonl`` and must write
    ``<stem>.resp.jsonl`` followed by ``<stem>.done``.
    """

    def __init__(self, directory, poll_interval: float = 0.05, timeout: float = 60.0):
        self.directory = Path(directory)
        self.poll_interval = poll_interval
        self.timeout = timeout

    def send_batch(self, requests_: list[ModelRequest], cfg: SamplingConfig) -> list[ModelResponse]:
        self.directory.mkdir(parents=True, exist_ok=True)
        stem = "batch-" + format(derive_seed(*(r.request_id for r in requests_)), "016x")
        req_path = self.directory / f"{stem}.req.jsonl"
        resp_path = self.directory / f"{stem}.resp.jsonl"
        done_path = self.directory / f"{stem}.done"
        with open(req_path, "w", encoding="utf-8") as fh:
            for r in requests_:
                fh.write(
                    json.dumps(
                        {
                            "request_id": r.request_id,
                            "media_ref": r.media_ref,
                            "prompt": r.prompt,
                            "sampling": cfg.to_dict(),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        deadline = time.monotonic() + self.timeout
        while not done_path.exists():
            if time.monotonic() > deadline:
                return [_error(r, f"no response file within {self.timeout}s") for r in requests_]
            time.sleep(self.poll_interval)
        by_id = {}
        with open(resp_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                by_id[row.get("request_id")] = row
        out = []
        for r in requests_:
            row = by_id.get(r.request_id)
            if row is None:
                out.append(_error(r, "missing from response file"))
            elif "error" in row:
                out.append(_error(r, str(row["error"])))
            else:
                out.append(ModelResponse(r.request_id, row.get("text", "")))
        return out


class CallableTransport:
    """Adapter for in-process models and tests: fn(request, cfg) -> ModelResponse."""

    def __init__(self, fn):
        self.fn = fn

    def send(self, request: ModelRequest, cfg: SamplingConfig) -> ModelResponse:
        return self.fn(request, cfg)


def query_batch(
    requests_: list[ModelRequest],
    transport,
    cfg: SamplingConfig = SamplingConfig(),
    max_inflight: int = 4,
    attempts: int = 3,
    backoff: float = 0.1,
    sleep=time.sleep,
) -> list[ModelResponse]:
    """One response per request, order-aligned, retrying transient failures.

    Each request is attempted up to ``attempts`` times with exponential
    backoff; failures become per-request error responses, never exceptions,
    so a batch always completes.
    """
    if not requests_:
        raise ValueError("empty batch")
    ids = [r.request_id for r in requests_]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate request ids in batch: {dupes}")

    if hasattr(transport, "send_batch"):
        responses = transport.send_batch(requests_, cfg)
        if [r.request_id for r in responses] != ids:
            raise ValueError("batch transport broke response alignment")
        return responses

    def send_one(request: ModelRequest) -> ModelResponse:
        delay = backoff
        last = "unknown failure"
        for attempt in range(attempts):
            try:
                return transport.send(request, cfg)
            except TransientTransportError as exc:
                last = str(exc)
                if attempt + 1 < attempts:
                    sleep(delay)
                    delay *= 2
            except Exception as exc:  # permanent: malformed reply, rejection
                return _error(request, str(exc))
        return _error(request, f"gave up after {attempts} attempts: {last}")

    with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
        return list(pool.map(send_one, requests_))


# ---------------- mock models ---------------- #

_SPATIAL_QUESTION_RE = re.compile(r"Which side of (.+) is (.+) located\?$")


def spatial_answer(query_name: str, keyword: str, ref_name: str) -> str:
    return f"The {query_name} is located to the {keyword} of {ref_name}."


def oracle_answer(record: dict) -> str:
    """Canonical correct answer for one dataset record."""
    objective = record["objective"]
    if objective == LOCPRED:
        return f"It is located at {record['location_text']}."
    if objective == NEGPRED:
        return "There is no such object in the image"
    if objective in (REVLOC, "region_description"):
        return record["descriptor"]
    if objective in ("spatial_direct", "spatial_icl"):
        final_question = record["prompt"].rsplit("Q: ", 1)[-1].strip()
        match = _SPATIAL_QUESTION_RE.fullmatch(final_question)
        ref = match.group(1) if match else "it"
        return spatial_answer(record["descriptor"], record["gt_keyword"], ref)
    if objective == "hallucination":
        return "Yes" if record["gt"] == "yes" else "No"
    if objective == "vqa":
        return f"The answer is {record['target']}."
    if objective == CAPTION_REQUEST:
        return f"a {record['descriptor']} placed near the other objects in the image"
    raise ValueError(f"no oracle answer for objective {objective!r}")


def oracle_mock(request: ModelRequest, gt) -> ModelResponse:
    """Ground-truth-perfect model: answers from the matching dataset item."""
    if isinstance(gt, ConversationSample):
        record = {
            "sample_id": gt.sample_id,
            "objective": gt.objective,
            "location_text": gt.location.text if gt.location else None,
            "descriptor": gt.descriptor,
        }
    elif hasattr(gt, "to_record"):
        record = gt.to_record()
    else:
        record = gt
    expected_id = record.get("sample_id")
    if expected_id is not None and expected_id != request.request_id:
        return _error(request, f"ground truth {expected_id!r} does not match request {request.request_id!r}")
    try:
        return ModelResponse(request.request_id, oracle_answer(record))
    except (KeyError, ValueError) as exc:
        return _error(request, f"mismatched ground truth: {exc}")


RANDOM_SPACES = {
    "lr": ("left", "right"),
    "ab": ("above", "below"),
    "yes_no": ("Yes", "No"),
}


def random_mock(
    request: ModelRequest,
    seed: int,
    space: str,
    scheme: ReprScheme | None = None,
    form: str | None = None,
    dims: ImageDims | None = None,
) -> ModelResponse:
    """Chance-level baseline: seeded uniform draw over the answer space.

    ``space`` is one of lr / ab / yes_no / location; the location space
    emits a uniform random box or point encoded under ``scheme``.
    """
    rng = random_module.Random(derive_seed(seed, request.request_id))
    if space in RANDOM_SPACES:
        choice = rng.choice(RANDOM_SPACES[space])
        if space == "yes_no":
            return ModelResponse(request.request_id, choice)
        return ModelResponse(request.request_id, f"It is to the {choice}.")
    if space == "location":
        if scheme is None or form is None or dims is None:
            raise ValueError("location space needs scheme, form, and dims")
        if form == "point":
            loc = encode_point(PointLoc(rng.uniform(0, dims.width), rng.uniform(0, dims.height)), dims, scheme)
        else:
            x1, x2 = sorted(rng.uniform(0, dims.width) for _ in range(2))
            y1, y2 = sorted(rng.uniform(0, dims.height) for _ in range(2))
            loc = encode_bbox(BBox(x1, y1, x2, y2), dims, scheme)
        return ModelResponse(request.request_id, f"It is located at {loc.text}.")
    raise ValueError(f"unknown answer space {space!r}")


def answer_space_for_record(record: dict) -> str:
    objective = record.get("objective")
    if objective in ("spatial_direct", "spatial_icl"):
        return record.get("axis", "lr")
    if objective == "hallucination":
        return "yes_no"
    return "lr"


# ---------------- video token pooling ---------------- #


@dataclass(frozen=True)
class TokenGrid:
    """Per-frame visual tokens: shape (n_frames, spatial_positions, feature_dim)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"token grid must be (frames, positions, dim) with positive sizes, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("token grid holds non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_spatial(self) -> int:
        return self.values.shape[1]


def _balanced_mean(a: np.ndarray) -> np.ndarray:
    """Mean over axis 0 via a balanced pairwise sum in float64, divided once.

    The balanced tree keeps sums of identical addends exact for power-of-two
    counts, so constant grids pool to the constant.
    """
    n = a.shape[0]
    acc = a.astype(np.float64, copy=True)
    while acc.shape[0] > 1:
        m = acc.shape[0]
        even = (m // 2) * 2
        paired = acc[0:even:2] + acc[1:even:2]
        if m % 2:
            paired = np.concatenate([paired, acc[-1:]], axis=0)
        acc = paired
    return acc[0] / n


def spatiotemporal_pool(grid: TokenGrid | np.ndarray) -> np.ndarray:
    """Reduce (frames, positions, dim) tokens to (positions + frames, dim).

    Row s < positions is the temporal mean of spatial token s; the remaining
    rows are per-frame spatial means, in frame order.
    """
    if not isinstance(grid, TokenGrid):
        grid = TokenGrid(grid)
    v = grid.values
    spatial = _balanced_mean(v)  # (S, d): mean over frames
    temporal = _balanced_mean(np.swapaxes(v, 0, 1))  # (n_f, d): mean over positions
    return np.concatenate([spatial, temporal], axis=0)
