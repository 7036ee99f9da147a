"""Local JSON-over-HTTP service backing the flow-studio UI.

All binary payloads (.flo, PPM) travel base64-inside-JSON so the API stays
single-request and curl-friendly.  Handlers call the same helpers as the
CLI, so endpoint payloads are byte-identical to the files the CLI writes.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .config import RunConfig
from .diffcore.checkpoint import DenoiserWeights, load_checkpoint
from .errors import MotionForgeError, StateError, UserInputError
from .ops import (
    conditioning_from_arrows,
    flow_payload,
    flow_products,
    frames_payload,
    run_sample_clip,
)
from .sparsectl import DensifyParams, RefineParams, parse_arrow_spec

_PARAM_KEYS = {"sigma", "threshold", "normalization", "iterations",
               "smoothing_weight", "preserve_sources"}


class ServiceState:
    """Weights cache; reloads are exclusive, reads are lock-free after load."""

    def __init__(self, weights_path: str | None, config: RunConfig):
        self.config = config
        self._lock = threading.Lock()
        self._weights: DenoiserWeights | None = None
        self._path = weights_path
        if weights_path:
            self._weights = load_checkpoint(weights_path)

    @property
    def weights(self) -> DenoiserWeights | None:
        return self._weights

    def reload(self, path: str) -> None:
        with self._lock:
            self._weights = load_checkpoint(path)
            self._path = path


def _split_params(body: dict) -> tuple[dict, dict]:
    """Pop the optional params object off a request body; rest is the arrow spec."""
    if not isinstance(body, dict):
        raise UserInputError("request body must be a JSON object")
    body = dict(body)
    params = body.pop("params", {})
    if not isinstance(params, dict):
        raise UserInputError("params must be a JSON object")
    unknown = set(params) - _PARAM_KEYS
    if unknown:
        raise UserInputError(f"unknown params keys: {sorted(unknown)}")
    return body, params


def _pipeline_params(
    cfg: RunConfig, params: dict, width: int, height: int
) -> tuple[DensifyParams, RefineParams]:
    base_d = cfg.densify_params(width, height)
    densify = DensifyParams(
        sigma=float(params.get("sigma", base_d.sigma)),
        threshold=float(params.get("threshold", base_d.threshold)),
        normalization=str(params.get("normalization", base_d.normalization)),
    )
    base_r = cfg.refine_params()
    refine = RefineParams(
        iterations=int(params.get("iterations", base_r.iterations)),
        smoothing_weight=float(params.get("smoothing_weight", base_r.smoothing_weight)),
        preserve_sources=bool(params.get("preserve_sources", base_r.preserve_sources)),
    )
    return densify, refine


def create_app(
    weights_path: str | None = None,
    config: RunConfig | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    cfg = config or RunConfig()
    state = ServiceState(weights_path, cfg)
    app = FastAPI(title="motionforge", docs_url=None, redoc_url=None)

    @app.exception_handler(MotionForgeError)
    async def _error_handler(request: Request, exc: MotionForgeError):
        status = 409 if isinstance(exc, StateError) else 400
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    async def _read_spec(request: Request) -> dict:
        try:
            return await request.json()
        except Exception as exc:
            raise UserInputError(f"body is not valid JSON: {exc}") from exc

    @app.post("/flow/dense")
    async def flow_dense(request: Request):
        body, params = _split_params(await _read_spec(request))
        spec = parse_arrow_spec(body)
        densify_p, refine_p = _pipeline_params(cfg, params, spec.width, spec.height)
        fields = flow_products(spec, densify_p, refine_p)
        return flow_payload(fields["dense"])

    @app.post("/flow/refine")
    async def flow_refine(request: Request):
        body, params = _split_params(await _read_spec(request))
        spec = parse_arrow_spec(body)
        densify_p, refine_p = _pipeline_params(cfg, params, spec.width, spec.height)
        fields = flow_products(spec, densify_p, refine_p)
        return flow_payload(fields["refined"])

    @app.post("/sample")
    async def sample(request: Request):
        body = await _read_spec(request)
        if not isinstance(body, dict) or "spec" not in body:
            raise UserInputError('sample body needs a "spec" arrow document')
        unknown = set(body) - {"spec", "seed", "frames", "params"}
        if unknown:
            raise UserInputError(f"unknown sample keys: {sorted(unknown)}")
        if state.weights is None:
            raise StateError("no weights loaded; train a model and restart the service")
        spec = parse_arrow_spec(body["spec"])
        params = body.get("params", {})
        if not isinstance(params, dict):
            raise UserInputError("params must be a JSON object")
        unknown_params = set(params) - _PARAM_KEYS
        if unknown_params:
            raise UserInputError(f"unknown params keys: {sorted(unknown_params)}")
        densify_p, refine_p = _pipeline_params(cfg, params, spec.width, spec.height)
        cond = conditioning_from_arrows(spec, densify_p, refine_p)
        seed = int(body.get("seed", cfg.seed))
        frames = int(body.get("frames", cfg.sample_frames))
        video, report = run_sample_clip(state.weights, cond, frames, seed)
        return {"frames": frames_payload(video), "report": report}

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
