"""HTTP front end for the rating service.

Endpoints:
  POST /raters                  register a rater
  POST /sessions                open a session for a registered rater
  GET  /sessions/{id}/next      next case payload, break, or done signal
  POST /sessions/{id}/ratings   submit the currently served case's scores
  GET  /export                  score rows as CSV text
"""

from __future__ import annotations

import csv
import io

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .rating_service import EarlySubmissionError, RatingService, ServiceError
from .subjective import SCORE_ROW_FIELDS


class RaterIn(BaseModel):
    rater_id: str


class SessionIn(BaseModel):
    rater_id: str
    seed: int | None = None


class RatingIn(BaseModel):
    case_id: str
    scores: dict[str, int]
    dwell_ms: int = 0


def create_app(service: RatingService) -> FastAPI:
    app = FastAPI(title="edit-rating-service")

    @app.exception_handler(ServiceError)
    async def handle_service_error(_request, exc: ServiceError):
        headers = {}
        if isinstance(exc, EarlySubmissionError):
            headers["Retry-After-Ms"] = str(exc.retry_after_ms)
        return JSONResponse(
            status_code=exc.status,
            content={"error": str(exc)},
            headers=headers,
        )

    @app.post("/raters")
    def register(body: RaterIn):
        service.register_rater(body.rater_id)
        return {"ok": True}

    @app.post("/sessions")
    def create_session(body: SessionIn):
        session = service.create_session(body.rater_id, seed=body.seed)
        return {
            "session_id": session.session_id,
            "rater_id": session.rater_id,
            "n_cases": len(session.order),
        }

    @app.get("/sessions/{session_id}/next")
    def next_sample(session_id: str):
        return service.next_sample(session_id)

    @app.post("/sessions/{session_id}/ratings")
    def submit(session_id: str, body: RatingIn):
        return service.submit_rating(
            session_id, body.case_id, body.scores, dwell_ms=body.dwell_ms
        )

    @app.get("/export")
    def export() -> Response:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(SCORE_ROW_FIELDS))
        writer.writeheader()
        writer.writerows(service.export_rows())
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    return app
