"""HTTP facade over one frozen (model, codebook, cluster) snapshot.

Endpoints are thin wrappers around pure payload builders so that responses
are byte-identical to direct library calls. Request/response bodies are JSON
with explicit numeric arrays; images travel as 8-bit P6 portable pixmap
bytes (raw for /decode, base64 inside JSON for thumbnails).
"""

from __future__ import annotations

import base64
import json
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import Response

from . import clustering, codebook as codebook_mod, ppm, recommend as recommend_mod
from . import retrieval, vae
from .errors import (
    EmptyCorpusError,
    ShapeError,
    StaleCodebookError,
    ValidationError,
)
from .retrieval import METHODS, RetrievalQuery, retrieve_top_k
from .synthdata import CATEGORIES

PPM_MEDIA_TYPE = "image/x-portable-pixmap"


class ServiceState:
    """Immutable serving snapshot; everything here is read-only after init."""

    def __init__(self, model, codebook, cluster_model, seed=None):
        if codebook.d_z != model.d_z:
            raise StaleCodebookError(
                f"codebook d_z={codebook.d_z} does not match model d_z={model.d_z}"
            )
        if codebook_mod.model_fingerprint(model) != codebook.model_checksum:
            raise StaleCodebookError(
                "codebook model checksum does not match the supplied model"
            )
        if cluster_model.centers.shape[1] != model.d_z:
            raise ShapeError(
                f"cluster centers have width {cluster_model.centers.shape[1]}, "
                f"model d_z={model.d_z}"
            )
        self.model = model
        self.codebook = codebook
        self.cluster_model = cluster_model
        # the only mutable state in the snapshot; guarded for threaded handlers
        self.rng = np.random.default_rng(seed)
        self.rng_lock = threading.Lock()

    @property
    def d_z(self):
        return self.model.d_z

    @property
    def image_dims(self):
        return self.model.image_dims


def load_state(model_path, codebook_path, centers_path, seed=None):
    model = vae.load_model(model_path)
    book = codebook_mod.load_codebook(codebook_path, model=model)
    centers = clustering.load_centers(centers_path)
    return ServiceState(model, book, centers, seed=seed)


def _json_bytes(obj):
    return json.dumps(obj, separators=(",", ":")).encode("ascii")


def _parse_z(state, payload):
    if not isinstance(payload, dict) or "z" not in payload:
        raise ValidationError("missing field 'z'")
    z = payload["z"]
    if not isinstance(z, list) or len(z) != state.d_z:
        raise ValidationError(
            f"field 'z' must be a list of {state.d_z} numbers, "
            f"got length {len(z) if isinstance(z, list) else 'non-list'}"
        )
    try:
        arr = np.asarray(z, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("field 'z' contains non-numeric entries")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("field 'z' contains non-finite values")
    return arr


def _parse_method(payload, default="fixed_epsilon"):
    method = payload.get("method", default)
    if method not in METHODS:
        raise ValidationError(
            f"unknown method {method!r}, valid methods: {list(METHODS)}"
        )
    return method


def _thumbnail_b64(state, row):
    image = state.model.decode(state.codebook.z_fixed[row])
    return base64.b64encode(ppm.ppm_bytes(ppm.to_bytes8(image))).decode("ascii")


def _row_of(state, item_id):
    rows = np.flatnonzero(state.codebook.item_ids == item_id)
    return int(rows[0])


def config_payload(state):
    h, w, c = state.image_dims
    return _json_bytes(
        {
            "d_z": state.d_z,
            "image_dims": [h, w, c],
            "k": state.cluster_model.k,
            "categories": list(CATEGORIES),
            "methods": list(METHODS),
        }
    )


def seed_encoding_payload(state, seed=None):
    """A random item's fixed-epsilon encoding as a starting point for the UI."""
    if len(state.codebook) == 0:
        raise EmptyCorpusError("codebook is empty")
    if seed is None:
        with state.rng_lock:
            row = int(state.rng.integers(len(state.codebook)))
    else:
        row = int(np.random.default_rng(seed).integers(len(state.codebook)))
    return _json_bytes(
        {
            "item_id": int(state.codebook.item_ids[row]),
            "tag": state.codebook.tag_of(row),
            "z": [float(v) for v in state.codebook.z_fixed[row]],
        }
    )


def decode_payload(state, z):
    """Raw P6 bytes of the decoded image (8-bit quantized)."""
    image = state.model.decode(np.asarray(z, dtype=float))
    return ppm.ppm_bytes(ppm.to_bytes8(image))


def similar_payload(state, z, method="fixed_epsilon", k=10, scoped=False):
    z = np.asarray(z, dtype=float)
    cluster = (
        clustering.assign_cluster(z, state.cluster_model) if scoped else None
    )
    result = retrieve_top_k(
        RetrievalQuery(z, method=method, k=k, cluster=cluster),
        state.codebook,
    )
    items = [
        {
            "item_id": item_id,
            "score": score,
            "tag": tag,
            "cluster": int(
                state.codebook.cluster_ids[_row_of(state, item_id)]
            ),
            "thumbnail_ppm_base64": _thumbnail_b64(state, _row_of(state, item_id)),
        }
        for item_id, score, tag in result.items
    ]
    return _json_bytes(
        {"method": method, "scoped": bool(scoped), "cluster": cluster, "items": items}
    )


def recommend_payload(state, z, method="fixed_epsilon", count=1):
    z = np.asarray(z, dtype=float)
    rec = recommend_mod.recommend_cross(
        z, state.codebook, state.cluster_model, method=method, count=count
    )
    entries = []
    for target in rec.targets:
        matches = [
            {
                "item_id": item_id,
                "score": score,
                "tag": tag,
                "thumbnail_ppm_base64": _thumbnail_b64(
                    state, _row_of(state, item_id)
                ),
            }
            for item_id, score, tag in target.matches
        ]
        entries.append({"cluster": target.cluster, "matches": matches})
    return _json_bytes(
        {
            "source_cluster": rec.source_cluster,
            "method": method,
            "recommendations": entries,
        }
    )


def create_app(state, ui_dir=None):
    """FastAPI application over one immutable ServiceState."""
    app = FastAPI(title="latentlab", docs_url=None, redoc_url=None)

    def json_response(body, status=200):
        return Response(content=body, status_code=status, media_type="application/json")

    def error_response(status, code, message):
        return json_response(
            _json_bytes({"error": {"code": code, "message": message}}), status
        )

    async def read_json(request):
        try:
            return await request.json()
        except Exception:
            raise ValidationError("request body is not valid JSON")

    @app.get("/config")
    def get_config():
        return json_response(config_payload(state))

    @app.get("/seed-encoding")
    def get_seed_encoding(seed: int | None = None):
        try:
            return json_response(seed_encoding_payload(state, seed=seed))
        except EmptyCorpusError as exc:
            return error_response(503, "empty_codebook", str(exc))

    @app.post("/decode")
    async def post_decode(request: Request):
        try:
            payload = await read_json(request)
            z = _parse_z(state, payload)
            return Response(content=decode_payload(state, z), media_type=PPM_MEDIA_TYPE)
        except (ValidationError, ShapeError) as exc:
            return error_response(400, "bad_request", str(exc))

    @app.post("/similar")
    async def post_similar(request: Request):
        try:
            payload = await read_json(request)
            z = _parse_z(state, payload)
            method = _parse_method(payload)
            k = payload.get("k", 10)
            if not isinstance(k, int) or k < 1:
                raise ValidationError(f"field 'k' must be a positive integer, got {k!r}")
            scoped = bool(payload.get("scoped", False))
            return json_response(similar_payload(state, z, method, k, scoped))
        except (ValidationError, ShapeError) as exc:
            return error_response(400, "bad_request", str(exc))

    @app.post("/recommend")
    async def post_recommend(request: Request):
        try:
            payload = await read_json(request)
            z = _parse_z(state, payload)
            method = _parse_method(payload)
            count = payload.get("count", 1)
            if not isinstance(count, int) or count < 1:
                raise ValidationError(
                    f"field 'count' must be a positive integer, got {count!r}"
                )
            return json_response(recommend_payload(state, z, method, count))
        except (ValidationError, ShapeError) as exc:
            return error_response(400, "bad_request", str(exc))

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
