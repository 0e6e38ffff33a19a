"""Rewriting an extracted rule span into a well-formed follow-up question.

Two rewriters share one interface:

* ``template`` -- wraps the span in an auxiliary-fronted frame ("Do you
  ...?", "Are you ...?").  No training, fully deterministic, never loses a
  content word; the fallback when no sequence model is available.
* ``seq2seq`` -- an encoder-decoder transformer fine-tuned on
  (span + host rule text -> gold follow-up question) pairs, decoded
  greedily with a 40-token cap.  The desk-scale instance is a small
  randomly initialized model over a whitespace vocabulary built from the
  training pairs; :class:`BartRewriter` adapts a pretrained seq2seq model
  for the full-scale path.

Either way the output is a single non-empty interrogative ending in "?".
"""

from __future__ import annotations

import json
import random
import re
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from rulereader.textutil import normalize_text, word_tokens
from rulereader.weaklabel import ContractViolation

MAX_DECODE_TOKENS = 40

_LEADING_NOISE = {
    "and", "or", "but", "if", "unless", "when", "whenever", "while",
    "until", "once", "where", "that", "to", "then", "also", "either",
    "must", "should", "shall", "only", "provided", "providing", "except",
}
_AUXILIARIES = {
    "is", "are", "was", "were", "has", "have", "had", "can", "could",
    "may", "might", "must", "should", "will", "would", "do", "does", "did",
}
_COMMON_RULE_VERBS = {
    "meet", "hold", "live", "own", "pay", "show", "provide", "operate",
    "lack", "apply", "control", "grow", "work", "earn", "run", "keep",
    "use", "demonstrate", "repay", "obtain", "get", "make", "take",
    "claim", "register", "belong", "serve", "need", "qualify", "occupy",
    "submit", "attend", "complete", "sign", "carry", "wear", "rent",
}
_FUNCTION_WORDS = _LEADING_NOISE | _AUXILIARIES | {
    "a", "an", "the", "be", "being", "been", "you", "your", "of",
    "in", "on", "at", "it", "its",
}


@dataclass
class RewriteInput:
    span_text: str
    host_rule_text: str

    def __post_init__(self):
        if not self.span_text.strip():
            raise ContractViolation("empty span")
        if self.span_text not in self.host_rule_text:
            raise ContractViolation("span_text must be a substring of host_rule_text")


def span_content_words(span_text: str) -> list[str]:
    return [t for t in word_tokens(span_text) if t not in _FUNCTION_WORDS]


def _core_word(token: str) -> str:
    toks = word_tokens(token)
    return toks[0] if toks else ""


def template_question(span_text: str) -> str:
    """Auxiliary-fronted question frame around the span.

    Copulas and auxiliaries are moved to the front when present
    ("the home is your residence" -> "Is the home your residence?");
    verb-initial spans get a "Do you" frame; anything else falls back to a
    frame that keeps the span intact.
    """
    words = span_text.split()
    while len(words) > 1 and _core_word(words[0]) in _LEADING_NOISE | {""}:
        words = words[1:]
    body = " ".join(words).strip().rstrip(".,;:!?")
    first = _core_word(words[0])
    rest = " ".join(words[1:]).rstrip(".,;:!?")
    aux_pos = next(
        (i for i, w in enumerate(words) if i >= 1 and _core_word(w) in _AUXILIARIES),
        None,
    )
    if first in ("be", "being", "is", "are", "was", "were"):
        question = f"Are you {rest}" if rest else f"Are you {body}"
    elif first in _COMMON_RULE_VERBS or first in ("have", "has", "do", "does"):
        question = f"Do you {body}"
    elif aux_pos is not None:
        aux = _core_word(words[aux_pos])
        subject = " ".join(words[:aux_pos])
        tail = " ".join(words[aux_pos + 1 :]).rstrip(".,;:!?")
        after = _core_word(words[aux_pos + 1]) if aux_pos + 1 < len(words) else ""
        participle = after.endswith("ed") or after in (
            "done", "been", "made", "taken", "given", "held", "paid", "signed", "kept",
        )
        if aux in ("has", "have") and tail and not participle:
            do_form = "Does" if aux == "has" else "Do"
            question = f"{do_form} {subject} have {tail}"
        else:
            question = f"{aux.capitalize()} {subject} {tail}"
    else:
        question = f"Is it true that {body}"
    question = re.sub(r"\s+", " ", question).strip()
    return question[0].upper() + question[1:] + "?"


def _finish(text: str) -> str:
    text = normalize_text(text).rstrip(".,;:!? ")
    if not text:
        return "Can you clarify?"
    return text + "?"


# ---------------------------------------------------------------------------
# tiny seq2seq

_S_PAD, _S_UNK, _S_BOS, _S_EOS, _S_SEP, _S_CLS = 0, 1, 2, 3, 4, 5
_S_SPECIALS = ["<pad>", "<unk>", "<bos>", "<eos>", "<sep>", "<cls>"]


class RawVocab:
    """Whitespace-token vocabulary that preserves case and punctuation, so
    greedy decoding can reproduce training questions verbatim."""

    def __init__(self, tokens: list[str] | None = None):
        self.itos = list(_S_SPECIALS) + (tokens or [])
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: list[str]) -> "RawVocab":
        seen: dict[str, None] = {}
        for text in texts:
            for tok in normalize_text(text).split(" "):
                if tok:
                    seen.setdefault(tok)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.itos)

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(t, _S_UNK) for t in normalize_text(text).split(" ") if t]

    def decode(self, ids: list[int]) -> str:
        return " ".join(self.itos[i] for i in ids if i >= len(_S_SPECIALS))

    def to_dict(self) -> dict:
        return {"tokens": self.itos[len(_S_SPECIALS):]}

    @classmethod
    def from_dict(cls, payload: dict) -> "RawVocab":
        return cls(payload["tokens"])


@dataclass
class RewriterConfig:
    hidden_size: int = 128
    layers: int = 2
    heads: int = 4
    feedforward: int = 256
    dropout: float = 0.0
    max_source_length: int = 192
    max_target_length: int = MAX_DECODE_TOKENS
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 300
    seed: int = 13
    device: str = "cpu"

    @staticmethod
    def full() -> "RewriterConfig":
        """Paper-scale settings for fine-tuning a pretrained seq2seq model."""
        return RewriterConfig(learning_rate=1e-4, batch_size=32, epochs=30, device="cuda")


class TinySeq2Seq(nn.Module):
    def __init__(self, vocab_size: int, config: RewriterConfig):
        super().__init__()
        d = config.hidden_size
        self.emb = nn.Embedding(vocab_size, d, padding_idx=_S_PAD)
        self.src_pos = nn.Embedding(config.max_source_length, d)
        self.tgt_pos = nn.Embedding(config.max_target_length + 2, d)
        self.transformer = nn.Transformer(
            d_model=d,
            nhead=config.heads,
            num_encoder_layers=config.layers,
            num_decoder_layers=config.layers,
            dim_feedforward=config.feedforward,
            dropout=config.dropout,
            batch_first=True,
        )
        self.out = nn.Linear(d, vocab_size)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        sp = torch.arange(src.shape[1], device=src.device)
        tp = torch.arange(tgt_in.shape[1], device=tgt_in.device)
        causal = nn.Transformer.generate_square_subsequent_mask(
            tgt_in.shape[1], device=tgt_in.device
        )
        hidden = self.transformer(
            self.emb(src) + self.src_pos(sp)[None],
            self.emb(tgt_in) + self.tgt_pos(tp)[None],
            tgt_mask=causal,
            src_key_padding_mask=src == _S_PAD,
            memory_key_padding_mask=src == _S_PAD,
        )
        return self.out(hidden)


@dataclass
class Seq2SeqRewriter:
    model: TinySeq2Seq
    vocab: RawVocab
    config: RewriterConfig

    def _source_ids(self, span_text: str, rule_text: str) -> list[int]:
        ids = (
            [_S_CLS]
            + self.vocab.encode(span_text)
            + [_S_SEP]
            + self.vocab.encode(rule_text)
            + [_S_SEP]
        )
        return ids[: self.config.max_source_length]

    def rewrite(self, span_text: str, rule_text: str) -> str:
        self.model.eval()
        src = torch.tensor([self._source_ids(span_text, rule_text)], device=self.config.device)
        out = [_S_BOS]
        with torch.no_grad():
            for _ in range(self.config.max_target_length):
                tgt = torch.tensor([out], device=self.config.device)
                logits = self.model(src, tgt)
                nxt = int(logits[0, -1].argmax())
                if nxt == _S_EOS:
                    break
                out.append(nxt)
        return _finish(self.vocab.decode(out))


class BartRewriter:
    """Pretrained seq2seq adapter (full-scale path; needs the 'full' extra)."""

    def __init__(self, name: str = "facebook/bart-base", device: str = "cuda"):
        try:
            from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        except ImportError as exc:  # pragma: no cover
            raise RuntimeError(
                "the pretrained rewriter path needs the 'full' extra"
            ) from exc
        self.tokenizer = AutoTokenizer.from_pretrained(name)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(name).to(device)
        self.device = device

    def rewrite(self, span_text: str, rule_text: str) -> str:  # pragma: no cover
        source = f"{span_text} {self.tokenizer.sep_token} {rule_text}"
        ids = self.tokenizer(source, return_tensors="pt", truncation=True).to(self.device)
        out = self.model.generate(
            **ids, max_new_tokens=MAX_DECODE_TOKENS, num_beams=1, do_sample=False
        )
        return _finish(self.tokenizer.decode(out[0], skip_special_tokens=True))


def rewrite(input: RewriteInput, rewriter="template") -> str:
    """Produce the follow-up question for an extracted span.

    ``rewriter`` is the string ``"template"`` or any object with a
    ``rewrite(span_text, rule_text) -> str`` method.
    """
    if rewriter == "template":
        return template_question(input.span_text)
    return rewriter.rewrite(input.span_text, input.host_rule_text)


# ---------------------------------------------------------------------------
# training

@dataclass
class RewriterTrainResult:
    rewriter: Seq2SeqRewriter
    log: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None


def train_rewriter(
    pairs: list[tuple[str, str, str]],
    config: RewriterConfig,
    out_dir: str | Path | None = None,
) -> RewriterTrainResult:
    """Fit the tiny seq2seq on (span_text, rule_text, target_question)
    triples with teacher forcing."""
    if not pairs:
        raise ValueError("no rewriter training pairs")
    torch.manual_seed(config.seed)
    vocab = RawVocab.build([t for pair in pairs for t in pair])
    model = TinySeq2Seq(len(vocab), config).to(config.device)
    rewriter = Seq2SeqRewriter(model, vocab, config)

    encoded = []
    for span_text, rule_text, target in pairs:
        src = rewriter._source_ids(span_text, rule_text)
        tgt = [_S_BOS] + vocab.encode(target)[: config.max_target_length] + [_S_EOS]
        encoded.append((src, tgt))

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    rng = random.Random(config.seed)
    order = list(range(len(encoded)))
    log: list[dict] = []
    for epoch in range(config.epochs):
        model.train()
        rng.shuffle(order)
        t0 = time.monotonic()
        loss_sum, steps = 0.0, 0
        for b0 in range(0, len(order), config.batch_size):
            chunk = [encoded[i] for i in order[b0 : b0 + config.batch_size]]
            src_len = max(len(s) for s, _ in chunk)
            tgt_len = max(len(t) for _, t in chunk)
            src = torch.full((len(chunk), src_len), _S_PAD, dtype=torch.long)
            tgt = torch.full((len(chunk), tgt_len), _S_PAD, dtype=torch.long)
            for b, (s, t) in enumerate(chunk):
                src[b, : len(s)] = torch.tensor(s)
                tgt[b, : len(t)] = torch.tensor(t)
            src, tgt = src.to(config.device), tgt.to(config.device)
            logits = model(src, tgt[:, :-1])
            batch_loss = F.cross_entropy(
                logits.reshape(-1, logits.shape[-1]),
                tgt[:, 1:].reshape(-1),
                ignore_index=_S_PAD,
            )
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            loss_sum += batch_loss.item()
            steps += 1
        log.append(
            {"epoch": epoch, "loss": loss_sum / steps, "seconds": round(time.monotonic() - t0, 3)}
        )
        # Overfitting regimes converge well before the epoch cap.
        if loss_sum / steps < 1e-3:
            break

    result = RewriterTrainResult(rewriter, log)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = save_rewriter(rewriter, out_dir / "rewriter.pt")
        with open(out_dir / "rewriter_train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return result


def save_rewriter(rewriter: Seq2SeqRewriter, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": "rewriter",
            "config": asdict(rewriter.config),
            "vocab": rewriter.vocab.to_dict(),
            "state_dict": rewriter.model.state_dict(),
        },
        path,
    )
    return path


def load_rewriter(path: str | Path) -> Seq2SeqRewriter:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "rewriter":
        raise ValueError(f"{path} is not a rewriter checkpoint")
    config = RewriterConfig(**payload["config"])
    vocab = RawVocab.from_dict(payload["vocab"])
    model = TinySeq2Seq(len(vocab), config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return Seq2SeqRewriter(model, vocab, config)
