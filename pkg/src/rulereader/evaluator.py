"""Decision and question-generation metrics.

Accuracy comes in micro (total correct / total), macro (unweighted mean of
per-class accuracy), and class-wise flavors, where class-wise accuracy is
recall over the samples whose *gold* label is that class.

Question quality uses sentence-level BLEU combined into a joint metric:
BLEU-precision averages over the turns the *model* decided to ask on,
BLEU-recall over the turns the *gold* annotation asks on, and their
harmonic mean is the headline number.  When one side of a pair is not a
question (the decisions disagree), that side's decision word ("yes"/"no")
is the comparison text, so wrong inquire calls earn near-zero BLEU instead
of silently dropping out of the average.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from rulereader.corpus import Decision, SeenTag

_BLEU_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


class MetricsError(ValueError):
    pass


@dataclass
class TurnRecord:
    sample_id: str
    predicted_decision: Decision
    gold_decision: Decision
    predicted_question: str | None = None
    gold_question: str | None = None
    seen_tag: SeenTag = SeenTag.NA

    def validate(self) -> None:
        if (self.predicted_question is not None) != (
            self.predicted_decision is Decision.INQUIRE
        ):
            raise MetricsError(
                f"{self.sample_id}: predicted_question present iff predicted inquire"
            )
        if (self.gold_question is not None) != (self.gold_decision is Decision.INQUIRE):
            raise MetricsError(
                f"{self.sample_id}: gold_question present iff gold inquire"
            )


def bleu_tokens(text: str) -> list[str]:
    """Lowercased; words and individual punctuation marks as tokens."""
    return _BLEU_TOKEN_RE.findall(text.lower())


def sentence_bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """Sentence-level BLEU in [0, 1].

    Geometric mean of modified n-gram precisions with a brevity penalty.
    Orders above 1 with zero matches get add-one smoothing
    (p = 1 / (total + 1)); zero unigram matches mean 0 outright.
    """
    if not 1 <= max_order <= 4:
        raise ValueError("max_order must be in 1..4")
    cand = bleu_tokens(candidate)
    ref = bleu_tokens(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        c_counts = Counter(tuple(cand[i : i + n]) for i in range(len(cand) - n + 1))
        r_counts = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
        total = max(len(cand) - n + 1, 0)
        matches = sum(min(c, r_counts[g]) for g, c in c_counts.items())
        if matches == 0:
            if n == 1:
                return 0.0
            precision = 1.0 / (total + 1)
        else:
            precision = matches / total
        log_sum += math.log(precision) / max_order
    if len(cand) >= len(ref):
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum)


def _comparison_text(decision: Decision, question: str | None) -> str:
    return question if decision is Decision.INQUIRE else decision.value


def f1_bleu(
    records: list[TurnRecord], max_order: int = 4
) -> tuple[float, float, float]:
    """(precision, recall, F1) of BLEU over inquire turns, each in [0, 1]."""
    predicted = [r for r in records if r.predicted_decision is Decision.INQUIRE]
    gold = [r for r in records if r.gold_decision is Decision.INQUIRE]
    if predicted:
        precision = sum(
            sentence_bleu(
                r.predicted_question,
                _comparison_text(r.gold_decision, r.gold_question),
                max_order,
            )
            for r in predicted
        ) / len(predicted)
    else:
        precision = 0.0
    if gold:
        recall = sum(
            sentence_bleu(
                _comparison_text(r.predicted_decision, r.predicted_question),
                r.gold_question,
                max_order,
            )
            for r in gold
        ) / len(gold)
    else:
        recall = 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def decision_accuracy(
    records: list[TurnRecord],
) -> tuple[float, float, dict[str, float], list[str]]:
    """(micro %, macro %, class-wise %, classes absent from the gold set).

    Classes with no gold examples are excluded from the macro mean and
    reported back so callers can flag the omission.
    """
    if not records:
        raise MetricsError("decision_accuracy over zero records")
    correct = sum(r.predicted_decision is r.gold_decision for r in records)
    micro = 100.0 * correct / len(records)
    class_acc: dict[str, float] = {}
    missing: list[str] = []
    for cls in Decision:
        of_class = [r for r in records if r.gold_decision is cls]
        if not of_class:
            missing.append(cls.value)
            continue
        class_acc[cls.value] = 100.0 * sum(
            r.predicted_decision is cls for r in of_class
        ) / len(of_class)
    macro = sum(class_acc.values()) / len(class_acc)
    return micro, macro, class_acc, missing


@dataclass
class MetricBlock:
    count: int
    micro_acc: float
    macro_acc: float
    class_acc: dict[str, float]
    missing_classes: list[str]
    precision_bleu1: float
    recall_bleu1: float
    f1_bleu1: float
    precision_bleu4: float
    recall_bleu4: float
    f1_bleu4: float

    @staticmethod
    def empty() -> "MetricBlock":
        return MetricBlock(0, 0.0, 0.0, {}, [d.value for d in Decision], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class EvalReport:
    breakdowns: dict[str, MetricBlock]
    retrieval: dict[int, float] | None = None
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def full(self) -> MetricBlock:
        return self.breakdowns["full"]

    def to_dict(self) -> dict:
        out = {
            "breakdowns": {
                name: {
                    "count": b.count,
                    "micro_acc": b.micro_acc,
                    "macro_acc": b.macro_acc,
                    "class_acc": b.class_acc,
                    "missing_classes": b.missing_classes,
                    "f1_bleu1": {
                        "precision": b.precision_bleu1,
                        "recall": b.recall_bleu1,
                        "f1": b.f1_bleu1,
                    },
                    "f1_bleu4": {
                        "precision": b.precision_bleu4,
                        "recall": b.recall_bleu4,
                        "f1": b.f1_bleu4,
                    },
                }
                for name, b in self.breakdowns.items()
            },
        }
        if self.retrieval is not None:
            out["retrieval_recall"] = {str(k): v for k, v in self.retrieval.items()}
        if self.extra:
            out["extra"] = dict(self.extra)
        return out

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_text(self) -> str:
        lines = []
        header = f"{'subset':<8} {'n':>5} {'micro':>7} {'macro':>7} {'f1b1':>7} {'f1b4':>7}"
        lines.append(header)
        lines.append("-" * len(header))
        for name in ("full", "seen", "unseen"):
            b = self.breakdowns.get(name)
            if b is None:
                continue
            lines.append(
                f"{name:<8} {b.count:>5} {b.micro_acc:>7.1f} {b.macro_acc:>7.1f} "
                f"{100 * b.f1_bleu1:>7.1f} {100 * b.f1_bleu4:>7.1f}"
            )
        for name, b in self.breakdowns.items():
            if name == "full" and b.class_acc:
                acc = ", ".join(f"{c}={v:.1f}" for c, v in sorted(b.class_acc.items()))
                lines.append(f"class accuracy (full): {acc}")
                break
        if self.retrieval:
            rec = ", ".join(
                f"@{k}={100 * v:.1f}" for k, v in sorted(self.retrieval.items())
            )
            lines.append(f"retrieval recall: {rec}")
        return "\n".join(lines)


def _block(records: list[TurnRecord]) -> MetricBlock:
    if not records:
        return MetricBlock.empty()
    micro, macro, class_acc, missing = decision_accuracy(records)
    p1, r1, f1 = f1_bleu(records, max_order=1)
    p4, r4, f4 = f1_bleu(records, max_order=4)
    return MetricBlock(
        len(records), micro, macro, class_acc, missing, p1, r1, f1, p4, r4, f4
    )


def full_report(
    records: list[TurnRecord], retrieval_stats: dict[int, float] | None = None
) -> EvalReport:
    """Metrics for the full record set plus seen/unseen breakdowns."""
    for r in records:
        r.validate()
    breakdowns = {
        "full": _block(records),
        "seen": _block([r for r in records if r.seen_tag is SeenTag.SEEN]),
        "unseen": _block([r for r in records if r.seen_tag is SeenTag.UNSEEN]),
    }
    return EvalReport(breakdowns, retrieval_stats)


def aggregate_reports(reports: list[EvalReport]) -> dict[str, dict[str, tuple[float, float]]]:
    """Mean and standard deviation per metric across runs (e.g. seeds)."""
    if not reports:
        raise MetricsError("aggregate_reports over zero reports")
    out: dict[str, dict[str, tuple[float, float]]] = {}
    metrics = ("micro_acc", "macro_acc", "f1_bleu1", "f1_bleu4")
    for name in reports[0].breakdowns:
        out[name] = {}
        for metric in metrics:
            values = [getattr(r.breakdowns[name], metric) for r in reports]
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            out[name][metric] = (mean, math.sqrt(var))
    return out


def write_predictions(records: list[TurnRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "sample_id": r.sample_id,
                        "predicted_decision": r.predicted_decision.value,
                        "gold_decision": r.gold_decision.value,
                        "predicted_question": r.predicted_question,
                        "gold_question": r.gold_question,
                        "seen_tag": r.seen_tag.value,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    return path


def read_predictions(path: str | Path) -> list[TurnRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            records.append(
                TurnRecord(
                    d["sample_id"],
                    Decision(d["predicted_decision"]),
                    Decision(d["gold_decision"]),
                    d.get("predicted_question"),
                    d.get("gold_question"),
                    SeenTag(d.get("seen_tag", "n/a")),
                )
            )
    return records
