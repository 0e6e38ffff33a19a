"""Turn-by-turn dialog engine wiring retriever, reasoner, and generator.

A session freezes its retrieval at creation (the query is the initial
question plus scenario; later answers do not re-query), then loops:
predict, and if the decision is "inquire" ask the generated follow-up and
wait for a yes/no answer.  Sessions close on a yes/no decision, or are
force-closed as exhausted once the follow-up guard trips.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field, asdict
from pathlib import Path

from rulereader.corpus import (
    Decision,
    DialogSample,
    HistoryTurn,
    KnowledgeBase,
    SeenTag,
)
from rulereader.evaluator import EvalReport, TurnRecord, full_report, write_predictions
from rulereader.reasoner import (
    Reasoner,
    TurnPrediction,
    predict_decision,
)
from rulereader.retriever import RetrievalResult, TermIndex, retrieve
from rulereader.rewriter import RewriteInput, rewrite
from rulereader.spanmodel import ExtractionImpossible, SpanExtractor
from rulereader.weaklabel import Entailment

MAX_FOLLOWUP_TURNS = 8

STATUS_ACTIVE = "active"
STATUS_ANSWERED = "answered"
STATUS_EXHAUSTED = "exhausted"


class SessionNotFound(KeyError):
    pass


class SessionStateError(RuntimeError):
    pass


class InputValidationError(ValueError):
    pass


@dataclass
class EvidenceEdu:
    rule_id: str
    edu_index: int
    text: str
    state: str
    attention: float


@dataclass
class TurnResponse:
    session_id: str
    status: str
    decision: str
    followup: str | None
    retrieved: list[dict]
    entailment_states: list[dict]
    warning: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DialogSession:
    session_id: str
    question: str
    scenario: str
    retrieval: RetrievalResult
    history: list[HistoryTurn] = field(default_factory=list)
    status: str = STATUS_ACTIVE
    last_followup: str | None = None
    last_prediction: TurnPrediction | None = None
    responses: list[TurnResponse] = field(default_factory=list)


class DialogEngine:
    def __init__(
        self,
        kb: KnowledgeBase,
        index: TermIndex,
        reasoner: Reasoner,
        span_extractor: SpanExtractor | None = None,
        rewriter="template",
        top_k: int = 20,
        max_turns: int = MAX_FOLLOWUP_TURNS,
        session_dir: str | Path | None = None,
    ):
        self.kb = kb
        self.index = index
        self.reasoner = reasoner
        self.span_extractor = span_extractor
        self.rewriter = rewriter
        self.top_k = top_k
        self.max_turns = max_turns
        self.sessions: dict[str, DialogSession] = {}
        self.session_dir = Path(session_dir) if session_dir else None
        if self.session_dir:
            self.session_dir.mkdir(parents=True, exist_ok=True)

    # -- session lifecycle ---------------------------------------------

    def start_session(self, question: str, scenario: str = "") -> TurnResponse:
        question = (question or "").strip()
        if not question:
            raise InputValidationError("question must be non-empty")
        scenario = (scenario or "").strip()
        retrieval = retrieve(self.index, question, scenario, self.top_k)
        session = DialogSession(
            session_id=uuid.uuid4().hex[:12],
            question=question,
            scenario=scenario,
            retrieval=retrieval,
        )
        self.sessions[session.session_id] = session
        return self._run_turn(session)

    def answer_followup(self, session_id: str, answer: str) -> TurnResponse:
        session = self._get(session_id)
        if session.status != STATUS_ACTIVE:
            raise SessionStateError(f"session {session_id} is {session.status}")
        if session.last_followup is None:
            raise SessionStateError(f"session {session_id} has no pending follow-up")
        answer = (answer or "").strip().lower()
        if answer not in ("yes", "no"):
            raise InputValidationError("answer must be 'yes' or 'no'")
        session.history.append(HistoryTurn(session.last_followup, answer))
        return self._run_turn(session)

    def get_session(self, session_id: str) -> DialogSession:
        return self._get(session_id)

    def transcript(self, session_id: str) -> dict:
        session = self._get(session_id)
        return {
            "session_id": session.session_id,
            "status": session.status,
            "question": session.question,
            "scenario": session.scenario,
            "history": [
                {"question": t.question, "answer": t.answer} for t in session.history
            ],
            "responses": [r.to_dict() for r in session.responses],
        }

    def _get(self, session_id: str) -> DialogSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise SessionNotFound(session_id) from None

    # -- one prediction turn ---------------------------------------------

    def _run_turn(self, session: DialogSession) -> TurnResponse:
        # Placeholder gold fields: eval-phase prediction never reads them.
        sample = DialogSample(
            sample_id=f"session-{session.session_id}-{len(session.history)}",
            question=session.question,
            scenario=session.scenario,
            history=list(session.history),
            gold_rule_id="",
            gold_decision=Decision.YES,
            gold_followup=None,
            split="test",
        )
        warning = None
        if not session.retrieval.ranked:
            warning = (
                "no rule text matched the query; deciding from the question, "
                "scenario, and history alone"
            )
        prediction, inp = self._predict(sample, session.retrieval)
        assert not inp.gold_inserted
        session.last_prediction = prediction
        decision = predict_decision(prediction)

        followup = None
        if decision is Decision.INQUIRE:
            if len(session.history) >= self.max_turns:
                session.status = STATUS_EXHAUSTED
                session.last_followup = None
                warning = f"follow-up limit of {self.max_turns} reached"
            else:
                followup = self._generate_followup(sample, session.retrieval)
                if followup is None:
                    session.status = STATUS_EXHAUSTED
                    warning = "no rule text available to ask about"
                else:
                    session.last_followup = followup
        else:
            session.status = STATUS_ANSWERED
            session.last_followup = None

        response = TurnResponse(
            session_id=session.session_id,
            status=session.status,
            decision=decision.value,
            followup=followup,
            retrieved=[
                {"rule_id": rid, "score": score}
                for rid, score in session.retrieval.ranked
            ],
            entailment_states=self._evidence(prediction, inp),
            warning=warning,
        )
        session.responses.append(response)
        self._persist(session)
        return response

    def _predict(self, sample: DialogSample, retrieval: RetrievalResult):
        return self.reasoner.predict(sample, retrieval, self.kb, phase="eval")

    def _evidence(self, prediction: TurnPrediction, inp) -> list[dict]:
        states = []
        edu_i = 0
        for cell, weight in zip(inp.cells, prediction.attention_weights):
            if cell.kind != "edu":
                continue
            scores = prediction.entailment_scores[edu_i]
            edu_i += 1
            state = (
                Entailment.ENTAILMENT,
                Entailment.CONTRADICTION,
                Entailment.NEUTRAL,
            )[int(scores.argmax())]
            states.append(
                asdict(
                    EvidenceEdu(
                        rule_id=cell.rule_id,
                        edu_index=cell.edu_index,
                        text=cell.text,
                        state=state.value,
                        attention=float(weight),
                    )
                )
            )
        return states

    def _generate_followup(
        self, sample: DialogSample, retrieval: RetrievalResult
    ) -> str | None:
        if self.span_extractor is None or not retrieval.ranked:
            return None
        try:
            span, _inp = self.span_extractor.extract(sample, retrieval, self.kb)
        except ExtractionImpossible:
            return None
        host_rule = self.kb.rules[span.rule_id]
        return rewrite(
            RewriteInput(span.span_text, host_rule.text), self.rewriter
        )

    def _persist(self, session: DialogSession) -> None:
        if self.session_dir is None:
            return
        path = self.session_dir / f"{session.session_id}.json"
        path.write_text(
            json.dumps(self.transcript(session.session_id), indent=2),
            encoding="utf-8",
        )


# ---------------------------------------------------------------------------
# batch evaluation (single-turn protocol: each dataset sample is one turn
# with its history taken from the annotation; the gold rule is never
# inserted)

def run_batch_eval(
    samples: list[DialogSample],
    kb: KnowledgeBase,
    index: TermIndex,
    reasoner: Reasoner,
    span_extractor: SpanExtractor | None = None,
    rewriter="template",
    out_dir: str | Path | None = None,
    recall_ks: tuple[int, ...] = (1, 5, 10, 20),
) -> tuple[EvalReport, list[TurnRecord]]:
    from rulereader.retriever import recall_at_k

    records: list[TurnRecord] = []
    for sample in samples:
        retrieval = retrieve(index, sample.question, sample.scenario, reasoner.config.top_k)
        prediction, inp = reasoner.predict(sample, retrieval, kb, phase="eval")
        assert not inp.gold_inserted, "gold insertion is a train-only behavior"
        decision = predict_decision(prediction)
        question = None
        if decision is Decision.INQUIRE:
            question = "Can you clarify?"
            if span_extractor is not None and retrieval.ranked:
                try:
                    span, _ = span_extractor.extract(sample, retrieval, kb)
                    question = rewrite(
                        RewriteInput(span.span_text, kb.rules[span.rule_id].text),
                        rewriter,
                    )
                except ExtractionImpossible:
                    pass
        records.append(
            TurnRecord(
                sample_id=sample.sample_id,
                predicted_decision=decision,
                gold_decision=sample.gold_decision,
                predicted_question=question,
                gold_question=sample.gold_followup,
                seen_tag=sample.seen_tag if sample.seen_tag else SeenTag.NA,
            )
        )
    retrieval_stats = recall_at_k(index, samples, list(recall_ks)) if samples else None
    report = full_report(records, retrieval_stats)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_predictions(records, out_dir / "predictions.jsonl")
        report.to_json(out_dir / "report.json")
        (out_dir / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    return report, records
