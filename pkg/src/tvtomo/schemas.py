"""Request and response bodies of the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StepRequest(StrictModel):
    """One pipeline step on a workspace directory.

    Give the run configuration either inline (``config``, same layout as
    the TOML file) or as a server-side path (``config_path``).
    """

    workspace: str
    config: dict | None = None
    config_path: str | None = None
    seed: int | None = Field(
        default=None, description="override phantom/noise/rule seeds"
    )


class ReconstructRequest(StepRequest):
    lambdas: list[float] | None = None
    jobs: int = Field(default=1, ge=1)


class SignificanceRequest(StepRequest):
    feature: str
    lam: float | None = None


class StepResponse(StrictModel):
    ok: bool = True
    summary: dict


class HealthResponse(StrictModel):
    status: str
    version: str
