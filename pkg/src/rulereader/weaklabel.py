"""Noisy supervision from dialog structure.

There is no condition-level annotation in the dataset, so training signals
are manufactured two ways:

* entailment states: each history follow-up QA pair is matched to the one
  clause (EDU) it asks about -- the EDU minimizing token-level edit
  distance over *all* EDUs offered to the reader -- and that EDU inherits
  Entailment (answer yes) or Contradiction (answer no); everything else is
  Neutral.
* span targets: for inquire turns, the single-sentence span (up to
  ``SPAN_TOKEN_CAP`` tokens) closest in edit distance to the gold follow-up
  question becomes the extraction target.

Distances are Levenshtein over lowercased alphanumeric tokens, divided by
max(len) so short clauses do not win by length alone.  Both matchers use an
early-abandoning distance bound; the test suite holds them to exact
agreement with a naive full search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from enum import Enum
from pathlib import Path

from rulereader.corpus import Decision, DialogSample, RuleText
from rulereader.textutil import word_tokens, word_tokens_with_offsets

SPAN_TOKEN_CAP = 30


class Entailment(str, Enum):
    ENTAILMENT = "entailment"
    CONTRADICTION = "contradiction"
    NEUTRAL = "neutral"


class ContractViolation(ValueError):
    """An operation was called outside its stated precondition."""


@dataclass
class EntailmentLabel:
    rule_id: str
    edu_index: int
    label: Entailment
    matched_history_turn: int | None = None


@dataclass
class SpanLabel:
    rule_id: str
    sentence_index: int
    token_start: int  # inclusive token offsets within the sentence
    token_end: int


def token_edit_distance(a: list[str], b: list[str]) -> int:
    """Plain Levenshtein over token sequences."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, 1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ta != tb),
            )
        prev = cur
    return prev[-1]


def normalized_distance(a: list[str], b: list[str]) -> float:
    return token_edit_distance(a, b) / max(len(a), len(b), 1)


def _bounded_distance(a: list[str], b: list[str], cap: float) -> float:
    """Levenshtein with early abandon: returns inf once the best achievable
    distance already exceeds ``cap`` (an absolute, un-normalized bound)."""
    if abs(len(a) - len(b)) > cap:
        return float("inf")
    if not a or not b:
        return float(len(a) or len(b))
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, tb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ta != tb))
        if min(cur) > cap:
            return float("inf")
        prev = cur
    return float(prev[-1])


def label_entailment(
    sample: DialogSample, rules: list[RuleText]
) -> list[EntailmentLabel]:
    """Per-EDU entailment labels for one sample.

    History turns are processed in dialog order; each claims the unclaimed
    EDU with minimum normalized distance (ties go to the earlier EDU in
    rule order), so two turns never label the same EDU.  Turns whose answer
    was not recognized as yes/no carry no usable polarity and are skipped.
    """
    edus: list[tuple[str, int, list[str]]] = []
    for rule in rules:
        for _si, k, s, e in rule.iter_edus():
            edus.append((rule.rule_id, k, word_tokens(rule.text[s:e])))
    labels = {
        (rid, k): EntailmentLabel(rid, k, Entailment.NEUTRAL)
        for rid, k, _toks in edus
    }
    claimed: set[int] = set()
    for turn_idx, turn in enumerate(sample.history):
        if not turn.recognized or turn.answer not in ("yes", "no"):
            continue
        q_tokens = word_tokens(turn.question)
        best_pos, best_dist = None, float("inf")
        for pos, (_rid, _k, e_tokens) in enumerate(edus):
            if pos in claimed:
                continue
            denom = max(len(q_tokens), len(e_tokens), 1)
            cap = best_dist * denom
            dist = _bounded_distance(q_tokens, e_tokens, cap) / denom
            if dist < best_dist:
                best_pos, best_dist = pos, dist
        if best_pos is None:
            continue
        claimed.add(best_pos)
        rid, k, _toks = edus[best_pos]
        state = Entailment.ENTAILMENT if turn.answer == "yes" else Entailment.CONTRADICTION
        labels[(rid, k)] = EntailmentLabel(rid, k, state, turn_idx)
    return [labels[(rid, k)] for rid, k, _toks in edus]


def label_span(sample: DialogSample, gold_rule: RuleText) -> SpanLabel:
    """Weak extraction target: the single-sentence span closest to the gold
    follow-up question.  Ties break by earlier sentence, earlier start,
    shorter span."""
    if sample.gold_decision is not Decision.INQUIRE or sample.gold_followup is None:
        raise ContractViolation(
            f"label_span requires an inquire sample with a gold follow-up "
            f"(sample {sample.sample_id})"
        )
    if not gold_rule.sentences:
        raise ContractViolation(f"rule {gold_rule.rule_id} is not segmented")
    q_tokens = word_tokens(sample.gold_followup)
    best: SpanLabel | None = None
    best_dist = float("inf")
    for si, (ss, se) in enumerate(gold_rule.sentences):
        tokens = [t for t, _s, _e in word_tokens_with_offsets(gold_rule.text[ss:se])]
        for i in range(len(tokens)):
            for j in range(i, min(i + SPAN_TOKEN_CAP, len(tokens))):
                span = tokens[i : j + 1]
                denom = max(len(span), len(q_tokens), 1)
                # |len difference| lower-bounds the distance; skip hopeless spans.
                if abs(len(span) - len(q_tokens)) / denom >= best_dist:
                    continue
                dist = _bounded_distance(q_tokens, span, best_dist * denom) / denom
                if dist < best_dist:
                    best_dist = dist
                    best = SpanLabel(gold_rule.rule_id, si, i, j)
    if best is None:
        raise ContractViolation(f"rule {gold_rule.rule_id} has no tokens")
    return best


def span_label_text(rule: RuleText, label: SpanLabel) -> str:
    ss, se = rule.sentences[label.sentence_index]
    offsets = word_tokens_with_offsets(rule.text[ss:se])
    start = ss + offsets[label.token_start][1]
    end = ss + offsets[label.token_end][2]
    return rule.text[start:end]


# ---------------------------------------------------------------------------
# label cache: labels are deterministic, so computing them once per dataset
# and reloading per epoch is free speed.

def save_label_cache(
    path: str | Path,
    entailment: dict[str, list[EntailmentLabel]],
    spans: dict[str, SpanLabel],
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, labels in entailment.items():
            record = {
                "sample_id": sample_id,
                "entailment": [
                    {**asdict(l), "label": l.label.value} for l in labels
                ],
                "span": asdict(spans[sample_id]) if sample_id in spans else None,
            }
            fh.write(json.dumps(record) + "\n")
    return path


def load_label_cache(
    path: str | Path,
) -> tuple[dict[str, list[EntailmentLabel]], dict[str, SpanLabel]]:
    entailment: dict[str, list[EntailmentLabel]] = {}
    spans: dict[str, SpanLabel] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            record = json.loads(line)
            sid = record["sample_id"]
            entailment[sid] = [
                EntailmentLabel(
                    l["rule_id"],
                    l["edu_index"],
                    Entailment(l["label"]),
                    l["matched_history_turn"],
                )
                for l in record["entailment"]
            ]
            if record.get("span"):
                spans[sid] = SpanLabel(**record["span"])
    return entailment, spans
