"""Shared text normalization and tokenization helpers."""

from __future__ import annotations

import re
import unicodedata

_HSPACE_RE = re.compile(r"[ \t\f\v]+")
_NEWLINE_RE = re.compile(r" ?\n ?")
_MULTI_NEWLINE_RE = re.compile(r"\n{2,}")
_WORD_RE = re.compile(r"[a-z0-9]+")
_WORD_ANYCASE_RE = re.compile(r"[A-Za-z0-9]+")


def normalize_text(text: str) -> str:
    """NFC-normalize and collapse whitespace.

    Runs of horizontal whitespace become a single space and runs of
    newlines a single ``\\n``.  Newlines are kept because rule texts use
    line breaks for bullet items, which the sentence splitter relies on.
    """
    text = unicodedata.normalize("NFC", text)
    text = _HSPACE_RE.sub(" ", text)
    text = _NEWLINE_RE.sub("\n", text)
    text = _MULTI_NEWLINE_RE.sub("\n", text)
    return text.strip()


def word_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; punctuation and whitespace dropped."""
    return _WORD_RE.findall(text.lower())


def word_tokens_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Like :func:`word_tokens` but with (token, char_start, char_end) per token."""
    return [
        (m.group(0).lower(), m.start(), m.end())
        for m in _WORD_ANYCASE_RE.finditer(text)
    ]


def whitespace_tokens_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Maximal non-whitespace runs with character offsets.

    Every non-whitespace character of ``text`` belongs to exactly one
    returned token, which is what span-coverage invariants need.
    """
    out = []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        out.append((text[i:j], i, j))
        i = j
    return out
