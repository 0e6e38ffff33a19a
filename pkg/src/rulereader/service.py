"""HTTP JSON API for live dialog sessions.

POST /session                  {question, scenario} -> turn response
POST /session/{id}/answer      {answer: yes|no}     -> turn response
GET  /session/{id}             -> full transcript

Turn responses carry the decision, the pending follow-up (if any), the
ranked retrieved rules, and per-EDU entailment states with attention
weights, so clients can show the evidence behind every turn.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, field_validator

from rulereader.pipeline import (
    DialogEngine,
    InputValidationError,
    SessionNotFound,
    SessionStateError,
)


class StartSessionRequest(BaseModel):
    question: str = Field(min_length=1)
    scenario: str = ""


class AnswerRequest(BaseModel):
    answer: str

    @field_validator("answer")
    @classmethod
    def _normalize(cls, value: str) -> str:
        value = value.strip().lower()
        if value not in ("yes", "no"):
            raise ValueError("answer must be 'yes' or 'no'")
        return value


class RetrievedRule(BaseModel):
    rule_id: str
    score: float


class EntailmentState(BaseModel):
    rule_id: str
    edu_index: int
    text: str
    state: str
    attention: float


class TurnResponseModel(BaseModel):
    session_id: str
    status: str
    decision: str
    followup: str | None = None
    retrieved: list[RetrievedRule]
    entailment_states: list[EntailmentState]
    warning: str | None = None


def create_app(engine: DialogEngine) -> FastAPI:
    app = FastAPI(title="rulereader", version="0.1.0")
    app.state.engine = engine

    @app.post("/session", response_model=TurnResponseModel)
    def start_session(request: StartSessionRequest):
        try:
            response = engine.start_session(request.question, request.scenario)
        except InputValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return response.to_dict()

    @app.post("/session/{session_id}/answer", response_model=TurnResponseModel)
    def answer(session_id: str, request: AnswerRequest):
        try:
            response = engine.answer_followup(session_id, request.answer)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from exc
        except SessionStateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except InputValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return response.to_dict()

    @app.get("/session/{session_id}")
    def transcript(session_id: str):
        try:
            return engine.transcript(session_id)
        except SessionNotFound as exc:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from exc

    return app
