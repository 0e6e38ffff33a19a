"""TF-IDF unigram+bigram retrieval over an inverted index of rule texts.

Documents and queries are scored as the dot product of their TF-IDF
vectors: component weight = ln(1 + count) * idf with
idf = max(0, ln((N - df + 0.5) / (df + 0.5))), so idf enters squared in
the score.  The 651-document corpus scale makes an exact vocabulary (no
feature hashing) the right trade: scores are reproducible bit-for-bit and
the index stays inspectable.
"""

from __future__ import annotations

import gzip
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from rulereader.corpus import DialogSample, EmptyDatasetError, KnowledgeBase

INDEX_FORMAT_VERSION = "tfidf-index/1"

# Deliberately small: rule conditions lean on words like "for", "not",
# "must", which ordinary stopword lists would throw away.
STOPWORDS = frozenset(
    "a an the of to in on at and or is are was were that this it its as by with from".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric unigrams (stopwords removed) plus adjacent
    bigrams over the filtered sequence, bigrams joined with ``_``."""
    unigrams = [t for t in _TOKEN_RE.findall(text.lower()) if t not in STOPWORDS]
    bigrams = [f"{a}_{b}" for a, b in zip(unigrams, unigrams[1:])]
    return unigrams + bigrams


@dataclass
class TermIndex:
    vocabulary: dict[str, int] = field(default_factory=dict)
    doc_freq: dict[int, int] = field(default_factory=dict)
    postings: dict[int, list[tuple[str, int]]] = field(default_factory=dict)
    doc_count: int = 0

    def idf(self, term_id: int) -> float:
        df = self.doc_freq[term_id]
        return max(0.0, math.log((self.doc_count - df + 0.5) / (df + 0.5)))

    def validate(self) -> None:
        for term_id, df in self.doc_freq.items():
            postings = self.postings[term_id]
            if df != len({doc for doc, _ in postings}):
                raise ValueError(f"doc_freq mismatch for term {term_id}")
            if not (1 <= df <= self.doc_count):
                raise ValueError(f"doc_freq {df} outside [1, {self.doc_count}]")


@dataclass
class RetrievalResult:
    ranked: list[tuple[str, float]]
    query_terms: list[int]

    def rule_ids(self) -> list[str]:
        return [rid for rid, _ in self.ranked]


def build_index(kb: KnowledgeBase) -> TermIndex:
    """Index every rule in the knowledge base.

    Rules are visited in sorted rule_id order and postings are kept sorted,
    so rebuilding from the same corpus is deterministic.
    """
    index = TermIndex(doc_count=len(kb.rules))
    for rule_id in sorted(kb.rules):
        counts = Counter(tokenize(kb.rules[rule_id].text))
        for term, count in counts.items():
            term_id = index.vocabulary.setdefault(term, len(index.vocabulary))
            index.postings.setdefault(term_id, []).append((rule_id, count))
            index.doc_freq[term_id] = index.doc_freq.get(term_id, 0) + 1
    return index


def retrieve(index: TermIndex, question: str, scenario: str, k: int) -> RetrievalResult:
    """Top-k rules by TF-IDF dot product for the question+scenario query.

    Zero-score documents are excluded, so a query sharing no vocabulary
    term with any document yields an empty ranking (a retrieval miss, not
    an error).  Ties break lexicographically by rule_id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = question if not scenario else f"{question} {scenario}"
    query_counts = Counter(tokenize(query))
    query_terms = sorted(
        index.vocabulary[t] for t in query_counts if t in index.vocabulary
    )
    scores: dict[str, float] = {}
    for term, q_count in query_counts.items():
        term_id = index.vocabulary.get(term)
        if term_id is None:
            continue
        idf = index.idf(term_id)
        if idf == 0.0:
            continue
        q_weight = math.log1p(q_count) * idf
        for rule_id, d_count in index.postings[term_id]:
            d_weight = math.log1p(d_count) * idf
            scores[rule_id] = scores.get(rule_id, 0.0) + q_weight * d_weight
    ranked = sorted(
        ((rid, s) for rid, s in scores.items() if s > 0.0),
        key=lambda item: (-item[1], item[0]),
    )
    return RetrievalResult(ranked[:k], query_terms)


def recall_at_k(
    index: TermIndex, samples: list[DialogSample], k_list: list[int]
) -> dict[int, float]:
    """Fraction of samples whose gold rule appears in the top-k ranking."""
    if not samples:
        raise EmptyDatasetError("recall_at_k over zero samples")
    k_max = max(k_list)
    hits = {k: 0 for k in k_list}
    for sample in samples:
        ranked_ids = retrieve(index, sample.question, sample.scenario, k_max).rule_ids()
        try:
            rank = ranked_ids.index(sample.gold_rule_id)
        except ValueError:
            continue
        for k in k_list:
            if rank < k:
                hits[k] += 1
    return {k: hits[k] / len(samples) for k in k_list}


# ---------------------------------------------------------------------------
# persistence

def save_index(index: TermIndex, path: str | Path) -> Path:
    """Persist as gzipped JSON; loading reproduces retrieval bit-identically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    terms = sorted(index.vocabulary, key=index.vocabulary.get)
    payload = {
        "format": INDEX_FORMAT_VERSION,
        "doc_count": index.doc_count,
        "terms": terms,
        "doc_freq": [index.doc_freq[i] for i in range(len(terms))],
        "postings": [index.postings[i] for i in range(len(terms))],
    }
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)
    return path


def load_index(path: str | Path) -> TermIndex:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT_VERSION:
        raise ValueError(f"unsupported index format: {payload.get('format')!r}")
    index = TermIndex(doc_count=payload["doc_count"])
    for term_id, term in enumerate(payload["terms"]):
        index.vocabulary[term] = term_id
        index.doc_freq[term_id] = payload["doc_freq"][term_id]
        index.postings[term_id] = [
            (rule_id, count) for rule_id, count in payload["postings"][term_id]
        ]
    return index
