"""Pluggable token encoders.

The reasoning and extraction models only assume the contract
``(token_ids, attention_mask) -> contextual vectors of size hidden_size``
plus a tokenizer that reports character offsets.  Two implementations:

* :class:`TinyEncoder` -- a small randomly initialized transformer over a
  corpus-built word vocabulary.  CPU-friendly; all tests and the desk-scale
  training paths run on it.
* :class:`PretrainedEncoder` -- thin adapter over a Hugging Face
  bidirectional encoder (e.g. ``roberta-base``) for the full-scale
  reproduction path.  Imported lazily so the package works without the
  ``transformers`` extra installed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from rulereader.textutil import word_tokens, word_tokens_with_offsets

PAD, UNK, CLS, SEP = 0, 1, 2, 3
_SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]


def _symmetrize_qk(stack: nn.TransformerEncoder) -> None:
    # K initialized equal to Q: attention starts as a similarity measure
    # instead of random noise, which matching-heavy training relies on.
    with torch.no_grad():
        for layer in stack.layers:
            w = layer.self_attn.in_proj_weight
            d = w.shape[1]
            w[d : 2 * d] = w[:d]
            b = layer.self_attn.in_proj_bias
            b[d : 2 * d] = b[:d]


class WordVocab:
    """Word-level vocabulary over lowercased alphanumeric tokens."""

    def __init__(self, tokens: list[str] | None = None):
        self.itos = list(_SPECIALS) + (tokens or [])
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: list[str], min_count: int = 1) -> "WordVocab":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in word_tokens(text):
                counts[tok] = counts.get(tok, 0) + 1
        kept = sorted(t for t, c in counts.items() if c >= min_count)
        return cls(kept)

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(t, UNK) for t in word_tokens(text)]

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        ids, offsets = [], []
        for tok, s, e in word_tokens_with_offsets(text):
            ids.append(self.stoi.get(tok, UNK))
            offsets.append((s, e))
        return ids, offsets

    def to_dict(self) -> dict:
        return {"tokens": self.itos[len(_SPECIALS):]}

    @classmethod
    def from_dict(cls, payload: dict) -> "WordVocab":
        return cls(payload["tokens"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WordVocab":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TinyEncoderConfig:
    vocab_size: int
    hidden_size: int = 64
    layers: int = 2
    heads: int = 4
    feedforward: int = 128
    max_len: int = 512
    dropout: float = 0.0
    # "block": tokens attend within their cell only; "relay": markers are
    # additionally visible everywhere; "full": ignore cell structure.
    cell_attention: str = "block"


class TinyEncoder(nn.Module):
    """Small bidirectional transformer, randomly initialized.

    Its native input scheme is cell-structured: when ``cell_ids`` are
    given, self-attention is restricted to tokens of the same cell plus the
    cell-marker tokens, which are globally visible in both directions and
    so relay information across cells; positions restart at every marker.
    A randomly initialized model at this scale cannot recover that
    structure from flat sequences, so the inductive bias stands in for
    pretraining.  Without ``cell_ids`` it is a plain full-attention
    encoder.
    """

    uses_cell_structure = True

    def __init__(self, config: TinyEncoderConfig):
        super().__init__()
        self.config = config
        self.hidden_size = config.hidden_size
        self.max_len = config.max_len
        self.tok_emb = nn.Embedding(config.vocab_size, config.hidden_size, padding_idx=PAD)
        self.pos_emb = nn.Embedding(config.max_len, config.hidden_size)
        layer = nn.TransformerEncoderLayer(
            d_model=config.hidden_size,
            nhead=config.heads,
            dim_feedforward=config.feedforward,
            dropout=config.dropout,
            batch_first=True,
            activation="gelu",
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, config.layers, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(config.hidden_size)
        if config.cell_attention != "block":
            # Cross-cell matching happens inside this encoder, so start
            # attention as a similarity measure rather than random noise.
            _symmetrize_qk(self.blocks)

    def forward(
        self,
        token_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        cell_ids: torch.Tensor | None = None,
        positions: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if positions is None:
            positions = torch.arange(token_ids.shape[1], device=token_ids.device)
            positions = positions[None, :].expand(token_ids.shape[0], -1)
        x = self.tok_emb(token_ids) + self.pos_emb(positions.clamp(min=0))
        if cell_ids is None or self.config.cell_attention == "full":
            x = self.blocks(x, src_key_padding_mask=~attention_mask.bool())
        else:
            x = self.blocks(x, mask=self._cell_mask(token_ids, attention_mask, cell_ids))
        return self.norm(x)

    def _cell_mask(
        self,
        token_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        cell_ids: torch.Tensor,
    ) -> torch.Tensor:
        valid = attention_mask.bool()
        allow = cell_ids[:, :, None] == cell_ids[:, None, :]
        if self.config.cell_attention == "relay":
            marker = (token_ids == CLS) & valid
            allow = allow | marker[:, :, None] | marker[:, None, :]
        allow = allow & valid[:, None, :]
        # Padding query rows attend to themselves so softmax stays finite.
        eye = torch.eye(token_ids.shape[1], dtype=torch.bool, device=token_ids.device)
        allow = allow | (~valid)[:, :, None] & eye[None]
        blocked = ~allow
        heads = self.config.heads
        return blocked.repeat_interleave(heads, dim=0)


class PretrainedEncoder(nn.Module):
    """Adapter over a Hugging Face encoder; GPU reproduction path.

    The tokenizer is exposed through the same interface as
    :class:`WordVocab` (fast-tokenizer offsets map subwords back to
    characters), so model code stays encoder-agnostic.  Attention is the
    encoder's native full attention; cell structure is ignored.
    """

    uses_cell_structure = False

    def __init__(self, name: str = "roberta-base"):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - exercised only with the extra
            raise RuntimeError(
                "the pretrained encoder path needs the 'full' extra: "
                "pip install rulereader[full]"
            ) from exc
        self.name = name
        self.tokenizer = AutoTokenizer.from_pretrained(name, use_fast=True)
        self.model = AutoModel.from_pretrained(name)
        self.hidden_size = self.model.config.hidden_size
        self.max_len = self.model.config.max_position_embeddings - 2

    def encode_with_offsets(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        enc = self.tokenizer(text, add_special_tokens=False, return_offsets_mapping=True)
        return enc["input_ids"], [tuple(o) for o in enc["offset_mapping"]]

    def encode(self, text: str) -> list[int]:
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def forward(self, token_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self.model(input_ids=token_ids, attention_mask=attention_mask).last_hidden_state


def build_tiny_encoder(
    vocab: WordVocab,
    hidden_size: int = 64,
    layers: int = 2,
    heads: int = 4,
    max_len: int = 512,
    dropout: float = 0.0,
    seed: int | None = None,
    cell_attention: str = "block",
) -> TinyEncoder:
    if seed is not None:
        torch.manual_seed(seed)
    return TinyEncoder(
        TinyEncoderConfig(
            vocab_size=len(vocab),
            hidden_size=hidden_size,
            layers=layers,
            heads=heads,
            feedforward=2 * hidden_size,
            max_len=max_len,
            dropout=dropout,
            cell_attention=cell_attention,
        )
    )
