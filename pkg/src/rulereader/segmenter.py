"""Sentence splitting and clause-level discourse segmentation of rule texts.

Rule texts mix running prose, inline enumerations ("must: A, B, and C")
and bullet lists, so the segmenter works in two layers: a punctuation-based
sentence splitter that also breaks on newlines, and a within-sentence
splitter that cuts clause-like elementary units at subordinating markers,
semicolons, colons, and list commas.

Both layers are deterministic.  An adapter hook (:class:`CallableSegmenter`)
lets an external pretrained segmenter replace the heuristic while keeping
the span bookkeeping and coverage guarantees here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

from rulereader.corpus import KnowledgeBase, RuleText
from rulereader.textutil import whitespace_tokens_with_offsets, word_tokens

Span = tuple[int, int]

EDU_MODE = "edu"
SENTENCE_MODE = "sentence-only"

# Words that open a new clause when they appear mid-sentence.
_CLAUSE_MARKERS = {
    "if", "unless", "when", "whenever", "while", "until", "once",
    "provided", "providing", "where", "wherever", "except",
}

# Tokens before a period that do not end a sentence.
_ABBREVIATIONS = {
    "e.g", "i.e", "etc", "mr", "mrs", "ms", "dr", "no", "nos", "st",
    "inc", "ltd", "co", "vs", "approx", "dept", "sec", "para", "u.s", "u.k",
}

_BULLET_CHARS = set("-*•·∙◦")


@dataclass
class EduSpan:
    """One elementary discourse unit, addressed into its rule text."""

    rule_id: str
    sentence_index: int
    char_start: int
    char_end: int
    edu_index_in_rule: int


class Segmenter(Protocol):
    def split_sentence(self, sentence: str) -> list[Span]:
        """Spans (relative to the sentence string) covering every
        non-whitespace character, in order, non-overlapping."""


def split_sentences(text: str) -> list[Span]:
    """Sentence spans over ``text``.

    Splits after ``.``/``!``/``?`` when followed by whitespace and an
    uppercase letter, digit, or opening quote, guarded against common
    abbreviations and single initials.  Newlines always split, so bullet
    items come out as their own sentences.
    """
    if not text.strip():
        return []
    breaks = {0, len(text)}
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            breaks.add(i)
            breaks.add(i + 1)
            i += 1
            continue
        if ch in ".!?":
            j = i + 1
            while j < len(text) and text[j] in "\"'”’)]":
                j += 1
            if j >= len(text):
                i += 1
                continue
            if not text[j].isspace():
                i += 1
                continue
            k = j
            while k < len(text) and text[k].isspace():
                k += 1
            if k >= len(text):
                i += 1
                continue
            nxt = text[k]
            if not (nxt.isupper() or nxt.isdigit() or nxt in "\"'“‘([" or nxt in _BULLET_CHARS):
                i += 1
                continue
            if ch == ".":
                w = i - 1
                while w >= 0 and (text[w].isalnum() or text[w] == "."):
                    w -= 1
                word = text[w + 1 : i].lower().rstrip(".")
                if word in _ABBREVIATIONS or (len(word) == 1 and word.isalpha()):
                    i += 1
                    continue
            breaks.add(j)
            i = j
            continue
        i += 1

    points = sorted(breaks)
    spans = []
    for a, b in zip(points, points[1:]):
        seg = text[a:b]
        lead = len(seg) - len(seg.lstrip())
        trail = len(seg) - len(seg.rstrip())
        if a + lead < b - trail:
            spans.append((a + lead, b - trail))
    return spans


def _paren_delta(token: str) -> int:
    return token.count("(") + token.count("[") - token.count(")") - token.count("]")


def _core(token: str) -> str:
    return token.strip("\"'“”‘’().,;:!?[]-—").lower()


class HeuristicSegmenter:
    """Rule-based clause splitter.

    Boundary rules, applied at paren depth zero only:

    * before a subordinating marker that does not start the segment;
    * after ``;`` and ``:`` (a colon also opens list context);
    * after ``,`` inside list context, or when the segment opened with a
      subordinating marker (closing a fronted conditional clause).

    Segments that end up with no alphanumeric token are merged into their
    neighbor so that the spans jointly cover every non-whitespace character.
    """

    def split_sentence(self, sentence: str) -> list[Span]:
        tokens = whitespace_tokens_with_offsets(sentence)
        if not tokens:
            return []
        boundaries: list[int] = []  # token index starting a new segment
        depth = 0
        list_context = False
        seg_start = 0
        seg_opened_with_marker = False

        for idx, (tok, _s, _e) in enumerate(tokens):
            core = _core(tok)
            if idx == seg_start:
                seg_opened_with_marker = core in _CLAUSE_MARKERS
            elif (
                depth == 0
                and core in _CLAUSE_MARKERS
                and not tok.rstrip("\"'”’)]").endswith((":", ";", ","))
                and _has_content(tokens, seg_start, idx)
            ):
                boundaries.append(idx)
                seg_start = idx
                seg_opened_with_marker = True
            depth = max(0, depth + _paren_delta(tok))
            if depth > 0 or idx == len(tokens) - 1:
                continue
            bare = tok.rstrip("\"'”’)]")
            close = False
            if bare.endswith(";"):
                close = True
            elif bare.endswith(":"):
                close = True
                list_context = True
            elif bare.endswith(",") and (list_context or seg_opened_with_marker):
                close = True
            if close and _has_content(tokens, seg_start, idx + 1):
                boundaries.append(idx + 1)
                seg_start = idx + 1

        starts = [0] + boundaries
        ends = boundaries + [len(tokens)]
        spans = []
        for a, b in zip(starts, ends):
            if not _has_content(tokens, a, b) and spans:
                prev = spans.pop()
                spans.append((prev[0], b))
            else:
                spans.append((a, b))
        return [(tokens[a][1], tokens[b - 1][2]) for a, b in spans]


def _has_content(tokens, a: int, b: int) -> bool:
    return any(word_tokens(tok) for tok, _s, _e in tokens[a:b])


class CallableSegmenter:
    """Adapter for an external segmenter.

    Wraps any ``sentence -> list[(start, end)]`` callable (for instance a
    pretrained pointer model behind a thin shim).  Returned spans are
    snapped to non-whitespace boundaries and checked for ordering and
    coverage; on any violation the whole sentence becomes a single unit
    rather than propagating bad offsets.
    """

    def __init__(self, fn: Callable[[str], list[Span]]):
        self._fn = fn

    def split_sentence(self, sentence: str) -> list[Span]:
        try:
            raw = list(self._fn(sentence))
        except Exception:
            raw = []
        spans = []
        prev = 0
        for s, e in raw:
            s, e = max(0, int(s)), min(len(sentence), int(e))
            while s < e and sentence[s].isspace():
                s += 1
            while e > s and sentence[e - 1].isspace():
                e -= 1
            if s >= e or s < prev:
                return _fallback_span(sentence)
            spans.append((s, e))
            prev = e
        if not spans or not _covers_non_whitespace(sentence, spans):
            return _fallback_span(sentence)
        return spans


def _fallback_span(sentence: str) -> list[Span]:
    toks = whitespace_tokens_with_offsets(sentence)
    return [(toks[0][1], toks[-1][2])] if toks else []


def _covers_non_whitespace(sentence: str, spans: list[Span]) -> bool:
    covered = [False] * len(sentence)
    for s, e in spans:
        for i in range(s, e):
            covered[i] = True
    return all(covered[i] or sentence[i].isspace() for i in range(len(sentence)))


def segment_rule(
    rule: RuleText,
    mode: str = EDU_MODE,
    segmenter: Segmenter | None = None,
) -> RuleText:
    """Fill ``rule.sentences`` and ``rule.edus`` in place and return the rule.

    ``mode="sentence-only"`` emits exactly one unit per sentence (the
    configuration used to measure the value of clause-level splitting).
    """
    if mode not in (EDU_MODE, SENTENCE_MODE):
        raise ValueError(f"unknown segmentation mode {mode!r}")
    rule.sentences = split_sentences(rule.text)
    if mode == SENTENCE_MODE:
        rule.edus = [[(s, e)] for s, e in rule.sentences]
        return rule
    segmenter = segmenter or HeuristicSegmenter()
    rule.edus = []
    for s, e in rule.sentences:
        rel = segmenter.split_sentence(rule.text[s:e])
        rule.edus.append([(s + a, s + b) for a, b in rel])
    rule.validate()
    return rule


def segment_knowledge_base(
    kb: KnowledgeBase, mode: str = EDU_MODE, segmenter: Segmenter | None = None
) -> KnowledgeBase:
    for rule in kb.rules.values():
        segment_rule(rule, mode, segmenter)
    return kb


def edu_spans(rule: RuleText) -> list[EduSpan]:
    return [
        EduSpan(rule.rule_id, si, s, e, k) for si, k, s, e in rule.iter_edus()
    ]


# ---------------------------------------------------------------------------
# golden-file format: "rule_id<TAB>sentence_index<TAB>char_start<TAB>char_end"

def write_golden(rules: Iterable[RuleText], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rule in rules:
            for si, _k, s, e in rule.iter_edus():
                fh.write(f"{rule.rule_id}\t{si}\t{s}\t{e}\n")


def read_golden(path: str | Path) -> list[EduSpan]:
    spans: list[EduSpan] = []
    counters: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rule_id, si, s, e = line.split("\t")
            k = counters.get(rule_id, 0)
            counters[rule_id] = k + 1
            spans.append(EduSpan(rule_id, int(si), int(s), int(e), k))
    return spans
