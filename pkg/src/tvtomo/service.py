"""HTTP front end: one endpoint per pipeline step.

Domain errors map to structured JSON bodies: rejected inputs give 422,
capacity limits 413, numerical failures 500.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import __version__, pipeline
from .config import RunConfig, load_config, override_seeds, parse_config
from .errors import TvTomoError, ValidationError
from .schemas import (
    HealthResponse,
    ReconstructRequest,
    SignificanceRequest,
    StepRequest,
    StepResponse,
)

__all__ = ["create_app"]

_STATUS = {"validation": 422, "format": 422, "capacity": 413, "numerical": 500}


def _request_config(req: StepRequest) -> RunConfig:
    if (req.config is None) == (req.config_path is None):
        raise ValidationError("give exactly one of config or config_path")
    cfg = parse_config(req.config) if req.config is not None else load_config(req.config_path)
    if req.seed is not None:
        cfg = override_seeds(cfg, req.seed)
    return cfg


def create_app() -> FastAPI:
    app = FastAPI(title="tvtomo", version=__version__)

    @app.exception_handler(TvTomoError)
    async def domain_error(request, exc: TvTomoError):
        return JSONResponse(
            status_code=_STATUS.get(exc.category, 500),
            content={"error": {"category": exc.category, "message": str(exc)}},
        )

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/phantom", response_model=StepResponse)
    def phantom(req: StepRequest):
        return StepResponse(summary=pipeline.run_phantom(_request_config(req), req.workspace))

    @app.post("/simulate", response_model=StepResponse)
    def simulate(req: StepRequest):
        return StepResponse(summary=pipeline.run_simulate(_request_config(req), req.workspace))

    @app.post("/choose", response_model=StepResponse)
    def choose(req: StepRequest):
        return StepResponse(summary=pipeline.run_choose(_request_config(req), req.workspace))

    @app.post("/reconstruct", response_model=StepResponse)
    def reconstruct(req: ReconstructRequest):
        summary = pipeline.run_reconstruct(
            _request_config(req), req.workspace, lambdas=req.lambdas, jobs=req.jobs
        )
        return StepResponse(summary=summary)

    @app.post("/analyze", response_model=StepResponse)
    def analyze(req: StepRequest):
        return StepResponse(summary=pipeline.run_analyze(_request_config(req), req.workspace))

    @app.post("/significance", response_model=StepResponse)
    def significance(req: SignificanceRequest):
        summary = pipeline.run_significance(
            _request_config(req), req.workspace, feature=req.feature, lam=req.lam
        )
        return StepResponse(summary=summary)

    return app
