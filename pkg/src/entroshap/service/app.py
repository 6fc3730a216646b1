"""FastAPI application exposing the attribution engine.

The service is stateless: every request carries its instances and declarative
model/donor specs, and identical requests produce identical responses.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import CapacityError, ConfigError, EntroshapError
from . import schemas


def create_app() -> FastAPI:
    application = FastAPI(title="entroshap", version=__version__)

    @application.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @application.post("/attribute", response_model=schemas.AttributeResponse)
    def attribute(req: schemas.AttributeRequest) -> schemas.AttributeResponse:
        from .. import runner

        try:
            return runner.run_attribute(req)
        except (ConfigError, CapacityError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except EntroshapError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    @application.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        from .. import runner

        try:
            return runner.run_evaluate(req)
        except (ConfigError, CapacityError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except EntroshapError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    @application.post("/interact", response_model=schemas.InteractResponse)
    def interact(req: schemas.InteractRequest) -> schemas.InteractResponse:
        from .. import runner

        try:
            return runner.run_interact(req)
        except (ConfigError, CapacityError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except EntroshapError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    return application


app = create_app()
