"""Dataset ingestion, normalized storage, and split bookkeeping.

Two on-disk layouts are supported:

* ``or-sharc-json`` -- the released dataset layout: a directory holding one
  JSON file per split (``train.json`` / ``dev.json`` / ``test.json``) and,
  optionally, a knowledge-base file mapping rule ids to rule texts.  When no
  knowledge-base file exists, rule texts embedded in the samples are
  collected into one.  Field names follow the common conventions of this
  dataset family (``utterance_id``, ``snippet``, ``follow_up_question`` ...)
  with a few aliases accepted for robustness.
* ``normalized-jsonl`` -- this package's own format: a single UTF-8 file,
  one JSON record per line, each tagged ``"kind": "rule"`` or
  ``"kind": "sample"``.  Loading a saved file reproduces the records
  field-by-field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Iterable

from rulereader.textutil import normalize_text, word_tokens

SPLITS = ("train", "dev", "test")


class Decision(str, Enum):
    YES = "yes"
    NO = "no"
    INQUIRE = "inquire"


class SeenTag(str, Enum):
    SEEN = "seen"
    UNSEEN = "unseen"
    NA = "n/a"


class DatasetError(Exception):
    """Base class for ingestion failures."""


class RecordParseError(DatasetError):
    def __init__(self, record_id: str, message: str):
        super().__init__(f"record {record_id!r}: {message}")
        self.record_id = record_id


class ReferentialIntegrityError(DatasetError):
    def __init__(self, sample_id: str, rule_id: str):
        super().__init__(
            f"sample {sample_id!r} references unknown rule {rule_id!r}"
        )
        self.sample_id = sample_id
        self.rule_id = rule_id


class EmptyDatasetError(DatasetError):
    """Raised when a statistic is requested over zero samples."""


@dataclass
class HistoryTurn:
    """One past follow-up question together with the user's answer.

    ``answer`` is normalized to ``"yes"``/``"no"`` by case-insensitive
    prefix match; answers that match neither are kept verbatim and flagged
    via ``recognized=False``.
    """

    question: str
    answer: str
    recognized: bool = True

    @staticmethod
    def make(question: str, raw_answer: str) -> "HistoryTurn":
        question = normalize_text(question)
        raw = normalize_text(raw_answer)
        low = raw.lower()
        if low.startswith("yes"):
            return HistoryTurn(question, "yes", True)
        if low.startswith("no"):
            return HistoryTurn(question, "no", True)
        return HistoryTurn(question, raw, False)


@dataclass
class RuleText:
    """One knowledge-base document plus its segmentations.

    ``sentences`` holds (char_start, char_end) spans into ``text``;
    ``edus`` holds, per sentence, the clause-level sub-spans filled in by
    the discourse segmenter.  Both lists stay empty until segmentation runs.
    """

    rule_id: str
    source_key: str
    text: str
    sentences: list[tuple[int, int]] = field(default_factory=list)
    edus: list[list[tuple[int, int]]] = field(default_factory=list)

    def sentence_text(self, index: int) -> str:
        s, e = self.sentences[index]
        return self.text[s:e]

    def edu_texts(self) -> list[str]:
        return [self.text[s:e] for spans in self.edus for s, e in spans]

    def iter_edus(self) -> Iterable[tuple[int, int, int, int]]:
        """Yields (sentence_index, edu_index_in_rule, char_start, char_end)."""
        k = 0
        for si, spans in enumerate(self.edus):
            for s, e in spans:
                yield si, k, s, e
                k += 1

    def validate(self) -> None:
        n = len(self.text)
        prev_end = 0
        for s, e in self.sentences:
            if not (0 <= s < e <= n):
                raise RecordParseError(self.rule_id, f"sentence span ({s},{e}) out of bounds")
            if s < prev_end:
                raise RecordParseError(self.rule_id, "sentence spans overlap or are unordered")
            prev_end = e
        if self.edus and len(self.edus) != len(self.sentences):
            raise RecordParseError(self.rule_id, "edus not aligned with sentences")
        for (ss, se), spans in zip(self.sentences, self.edus):
            prev = ss
            for s, e in spans:
                if not (ss <= s < e <= se):
                    raise RecordParseError(
                        self.rule_id, f"EDU span ({s},{e}) escapes sentence ({ss},{se})"
                    )
                if s < prev:
                    raise RecordParseError(self.rule_id, "EDU spans overlap or are unordered")
                prev = e


@dataclass
class DialogSample:
    """One supervised dialog turn."""

    sample_id: str
    question: str
    scenario: str
    history: list[HistoryTurn]
    gold_rule_id: str
    gold_decision: Decision
    gold_followup: str | None
    split: str
    seen_tag: SeenTag = SeenTag.NA

    def validate(self) -> None:
        if (self.gold_followup is not None) != (self.gold_decision is Decision.INQUIRE):
            raise RecordParseError(
                self.sample_id,
                "gold_followup must be present exactly when gold_decision is inquire",
            )
        if self.split not in SPLITS:
            raise RecordParseError(self.sample_id, f"unknown split {self.split!r}")
        if not self.question:
            raise RecordParseError(self.sample_id, "empty question")


@dataclass
class KnowledgeBase:
    rules: dict[str, RuleText] = field(default_factory=dict)
    split_index: dict[str, list[str]] = field(default_factory=dict)

    def add_rule(self, rule: RuleText) -> None:
        if rule.rule_id in self.rules:
            raise RecordParseError(rule.rule_id, "duplicate rule_id")
        self.rules[rule.rule_id] = rule

    def __len__(self) -> int:
        return len(self.rules)


# ---------------------------------------------------------------------------
# loading

_RULE_ID_KEYS = ("rule_id", "snippet_id", "doc_id", "id")
_RULE_TEXT_KEYS = ("text", "snippet", "document", "rule_text")
_RULE_SOURCE_KEYS = ("source_key", "source", "source_url", "url")
_SAMPLE_ID_KEYS = ("sample_id", "utterance_id", "id")
_GOLD_RULE_KEYS = ("gold_rule_id", "snippet_id", "rule_id", "doc_id")


def _first_key(record: dict, keys: tuple[str, ...], record_id: str, what: str):
    for k in keys:
        if k in record and record[k] is not None:
            return record[k]
    raise RecordParseError(record_id, f"missing {what} (tried {', '.join(keys)})")


def load_dataset(path: str | Path, format: str = "or-sharc-json") -> tuple[KnowledgeBase, list[DialogSample]]:
    """Load and validate a dataset; returns (knowledge base, samples).

    Referential integrity (every gold_rule_id resolves) is enforced, and
    seen/unseen tags for dev/test samples are recomputed from the train
    split's gold rule ids.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset path does not exist: {path}")
    if format == "or-sharc-json":
        kb, samples = _load_or_sharc(path)
    elif format == "normalized-jsonl":
        kb, samples = _load_normalized(path)
    else:
        raise ValueError(f"unknown dataset format {format!r}")

    kb.split_index = {split: [] for split in SPLITS}
    for sample in samples:
        sample.validate()
        if sample.gold_rule_id not in kb.rules:
            raise ReferentialIntegrityError(sample.sample_id, sample.gold_rule_id)
        kb.split_index[sample.split].append(sample.sample_id)
    compute_seen_tags(samples)
    return kb, samples


def compute_seen_tags(samples: list[DialogSample]) -> None:
    """seen <=> the sample's gold rule appears among train gold rules."""
    train_rules = {s.gold_rule_id for s in samples if s.split == "train"}
    for s in samples:
        if s.split == "train":
            s.seen_tag = SeenTag.NA
        else:
            s.seen_tag = SeenTag.SEEN if s.gold_rule_id in train_rules else SeenTag.UNSEEN


def _parse_rule(record: dict | tuple[str, str]) -> RuleText:
    if isinstance(record, tuple):
        rule_id, text = record
        return RuleText(str(rule_id), str(rule_id), normalize_text(text))
    rid = str(_first_key(record, _RULE_ID_KEYS, "<rule>", "rule id"))
    text = _first_key(record, _RULE_TEXT_KEYS, rid, "rule text")
    source = next(
        (record[k] for k in _RULE_SOURCE_KEYS if record.get(k)), rid
    )
    return RuleText(rid, str(source), normalize_text(str(text)))


def _parse_or_sharc_sample(record: dict, split: str, kb: KnowledgeBase) -> DialogSample:
    if not isinstance(record, dict):
        raise RecordParseError("<unknown>", f"expected object, got {type(record).__name__}")
    sid = str(_first_key(record, _SAMPLE_ID_KEYS, "<unknown>", "sample id"))
    try:
        question = normalize_text(str(_first_key(record, ("question",), sid, "question")))
        scenario = normalize_text(str(record.get("scenario", "") or ""))
        history = [
            HistoryTurn.make(
                h.get("follow_up_question", h.get("question", "")),
                h.get("follow_up_answer", h.get("answer", "")),
            )
            for h in record.get("history", []) or []
        ]
        gold_rule_id = str(_first_key(record, _GOLD_RULE_KEYS, sid, "gold rule id"))
        # Embedded-snippet layouts carry the rule text on each sample.
        if gold_rule_id not in kb.rules:
            for k in _RULE_TEXT_KEYS:
                if record.get(k):
                    kb.add_rule(
                        RuleText(
                            gold_rule_id,
                            str(record.get("source_url", gold_rule_id)),
                            normalize_text(str(record[k])),
                        )
                    )
                    break
        if "decision" in record:
            decision = Decision(str(record["decision"]).lower())
            followup = record.get("followup") or record.get("gold_followup")
            followup = normalize_text(str(followup)) if followup else None
        else:
            answer = normalize_text(str(_first_key(record, ("answer",), sid, "answer")))
            if answer.lower() in ("yes", "no"):
                decision, followup = Decision(answer.lower()), None
            else:
                decision, followup = Decision.INQUIRE, answer
    except RecordParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordParseError(sid, str(exc)) from exc
    return DialogSample(sid, question, scenario, history, gold_rule_id, decision, followup, split)


def _load_or_sharc(path: Path) -> tuple[KnowledgeBase, list[DialogSample]]:
    if not path.is_dir():
        raise DatasetError(f"or-sharc-json expects a directory, got {path}")
    kb = KnowledgeBase()
    for name in ("documents.json", "rules.json", "snippets.json", "knowledge_base.json"):
        rule_file = path / name
        if rule_file.exists():
            raw = json.loads(rule_file.read_text(encoding="utf-8"))
            records = raw.items() if isinstance(raw, dict) else raw
            for record in records:
                kb.add_rule(_parse_rule(record))
            break

    samples: list[DialogSample] = []
    for split in SPLITS:
        split_file = path / f"{split}.json"
        if not split_file.exists():
            continue
        try:
            raw = json.loads(split_file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{split_file}: {exc}") from exc
        for record in raw:
            samples.append(_parse_or_sharc_sample(record, split, kb))
    return kb, samples


def _load_normalized(path: Path) -> tuple[KnowledgeBase, list[DialogSample]]:
    if path.is_dir():
        path = path / "dataset.jsonl"
    kb = KnowledgeBase()
    samples: list[DialogSample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(f"line {lineno}", str(exc)) from exc
            kind = record.pop("kind", None)
            if kind == "rule":
                rule = RuleText(
                    record["rule_id"],
                    record["source_key"],
                    record["text"],
                    [tuple(s) for s in record.get("sentences", [])],
                    [[tuple(s) for s in spans] for spans in record.get("edus", [])],
                )
                rule.validate()
                kb.add_rule(rule)
            elif kind == "sample":
                record["history"] = [HistoryTurn(**h) for h in record["history"]]
                record["gold_decision"] = Decision(record["gold_decision"])
                record["seen_tag"] = SeenTag(record.get("seen_tag", "n/a"))
                samples.append(DialogSample(**record))
            else:
                raise RecordParseError(f"line {lineno}", f"unknown record kind {kind!r}")
    return kb, samples


def save_normalized(kb: KnowledgeBase, samples: list[DialogSample], path: str | Path) -> Path:
    """Write one normalized-jsonl file (rules first, then samples)."""
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rule in kb.rules.values():
            record = {"kind": "rule", **asdict(rule)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        for sample in samples:
            record = {"kind": "sample", **asdict(sample)}
            record["gold_decision"] = sample.gold_decision.value
            record["seen_tag"] = sample.seen_tag.value
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


# ---------------------------------------------------------------------------
# dataset statistics

def average_dialog_turns(samples: list[DialogSample]) -> float:
    """Arithmetic mean of history lengths."""
    if not samples:
        raise EmptyDatasetError("average_dialog_turns over zero samples")
    return sum(len(s.history) for s in samples) / len(samples)


def average_rule_length(kb: KnowledgeBase) -> float:
    """Mean rule-text length in alphanumeric word tokens."""
    if not kb.rules:
        raise EmptyDatasetError("average_rule_length over empty knowledge base")
    return sum(len(word_tokens(r.text)) for r in kb.rules.values()) / len(kb.rules)


def split_samples(samples: list[DialogSample], split: str) -> list[DialogSample]:
    return [s for s in samples if s.split == split]
