"""FastAPI service wrapping the experiment runners.

One POST endpoint per experiment; the CLI is a thin client of these routes
(in-process by default, remote with --server).  Validation errors surface
as 422 with the offending key; numerical failures as 409 payloads.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..experiments import (
    run_certify,
    run_norms,
    run_psdo_check,
    run_smooth,
    run_solve,
    run_trace,
)
from ..solver import BlowupError
from .models import (
    CertifyConfig,
    NormsConfig,
    PsdoCheckConfig,
    RunResult,
    SmoothConfig,
    SolveConfig,
    TraceConfig,
)


def create_app() -> FastAPI:
    app = FastAPI(
        title="whistlerlab",
        version=__version__,
        description="Numerical laboratory for whistler-wave dispersion in resistivity-free electron MHD.",
    )

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/v1/defaults")
    def defaults() -> dict:
        return {
            "trace": TraceConfig().model_dump(mode="json"),
            "certify": CertifyConfig().model_dump(mode="json"),
            "solve": SolveConfig().model_dump(mode="json"),
            "norms": NormsConfig().model_dump(mode="json"),
            "smooth": SmoothConfig().model_dump(mode="json"),
            "psdo-check": PsdoCheckConfig().model_dump(mode="json"),
        }

    def _guard(fn, cfg) -> RunResult | JSONResponse:
        try:
            return fn(cfg)
        except BlowupError as exc:
            return JSONResponse(status_code=409, content={"error": str(exc), "kind": "numerical"})
        except (FloatingPointError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            return JSONResponse(status_code=409, content={"error": str(exc), "kind": "numerical"})

    @app.post("/v1/trace", response_model=RunResult)
    def trace(cfg: TraceConfig):
        return _guard(run_trace, cfg)

    @app.post("/v1/certify", response_model=RunResult)
    def certify_ep(cfg: CertifyConfig):
        return _guard(run_certify, cfg)

    @app.post("/v1/solve", response_model=RunResult)
    def solve_ep(cfg: SolveConfig):
        return _guard(run_solve, cfg)

    @app.post("/v1/norms", response_model=RunResult)
    def norms_ep(cfg: NormsConfig):
        return _guard(run_norms, cfg)

    @app.post("/v1/smooth", response_model=RunResult)
    def smooth_ep(cfg: SmoothConfig):
        return _guard(run_smooth, cfg)

    @app.post("/v1/psdo-check", response_model=RunResult)
    def psdo_ep(cfg: PsdoCheckConfig):
        return _guard(run_psdo_check, cfg)

    return app


app = create_app()
