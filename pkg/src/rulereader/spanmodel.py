"""Extractive localization of the underspecified condition.

When the decision is "inquire", the system points at the rule-text span the
follow-up question should ask about.  The input mirrors the decision
reader's, except rule texts contribute one cell per *sentence* (follow-up
questions often straddle clause boundaries, so no clause segmentation
here).  Two learned vectors score every rule-sentence token as a span
start / end; the predicted span is the argmax of start+end score over
pairs that fall inside a single sentence, capped at
``SPAN_TOKEN_CAP`` tokens, with ties resolved toward the earliest
sentence, earliest start, then shortest span.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from rulereader.corpus import Decision, DialogSample, KnowledgeBase
from rulereader.encoder import CLS, PAD, SEP, WordVocab
from rulereader.reasoner import (
    EDU,
    HISTORY_QA,
    QUESTION,
    SCENARIO,
    AssemblyError,
    TrainingDivergedError,
    build_vocab,
    make_tokenizer_and_encoder,
    seed_everything,
)
from rulereader.retriever import RetrievalResult, TermIndex, retrieve
from rulereader.weaklabel import SPAN_TOKEN_CAP, label_span

SENTENCE = "sentence"


class ExtractionImpossible(RuntimeError):
    """No rule sentence is present in the input."""


@dataclass
class SpanConfig:
    max_sequence_length: int = 512
    encoder: str = "tiny"
    hidden_size: int = 64
    encoder_layers: int = 2
    encoder_heads: int = 4
    dropout: float = 0.1
    learning_rate: float = 5e-5
    head_learning_rate: float | None = None
    batch_size: int = 32
    epochs: int = 10
    seed: int = 13
    top_k: int = 20
    span_cap: int = SPAN_TOKEN_CAP
    cell_attention: str = "relay"    # rule tokens reach dialog state via markers
    device: str = "cpu"

    @staticmethod
    def desk() -> "SpanConfig":
        return SpanConfig(
            dropout=0.0,
            learning_rate=1e-3,
            head_learning_rate=5e-2,
            batch_size=4,
            epochs=250,
            max_sequence_length=384,
            top_k=3,
        )


@dataclass
class SentenceCell:
    kind: str
    text: str
    token_ids: list[int]                  # [CLS] body [SEP]
    token_offsets: list[tuple[int, int]]  # char offsets of body tokens in text
    rule_id: str | None = None
    sentence_index: int | None = None

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class SpanInput:
    cells: list[SentenceCell]
    rules_included: list[str]
    gold_inserted: bool = False
    truncated: bool = False

    def total_tokens(self) -> int:
        return sum(len(c) for c in self.cells)

    def sentence_cells(self) -> list[tuple[int, SentenceCell]]:
        """(flat offset of the cell's first token, cell) for rule sentences."""
        out = []
        offset = 0
        for cell in self.cells:
            if cell.kind == SENTENCE:
                out.append((offset, cell))
            offset += len(cell)
        return out


@dataclass
class SpanPrediction:
    rule_id: str
    sentence_index: int
    token_start: int
    token_end: int
    score: float
    span_text: str


def _sentence_cell(kind, text, tokenizer, rule_id=None, sentence_index=None, token_cap=None):
    ids, offsets = tokenizer.encode_with_offsets(text)
    if token_cap is not None:
        ids, offsets = ids[: max(token_cap, 0)], offsets[: max(token_cap, 0)]
    return SentenceCell(kind, text, [CLS] + ids + [SEP], offsets, rule_id, sentence_index)


def assemble_span_input(
    sample: DialogSample,
    retrieval: RetrievalResult,
    kb: KnowledgeBase,
    config: SpanConfig,
    phase: str,
    tokenizer,
) -> SpanInput:
    """Same budget and gold-insertion policy as the decision reader, with
    whole-sentence rule cells."""
    budget = config.max_sequence_length
    cells = [_sentence_cell(QUESTION, sample.question, tokenizer, token_cap=budget - 2)]
    if sample.scenario:
        cells.append(_sentence_cell(SCENARIO, sample.scenario, tokenizer))
    for turn in sample.history:
        cells.append(_sentence_cell(HISTORY_QA, f"{turn.question} {turn.answer}", tokenizer))
    truncated = False
    base = sum(len(c) for c in cells)
    if base > budget:
        truncated = True
        for cell in cells:
            if cell.kind == SCENARIO and base > budget:
                keep = max(len(cell.token_ids) - 1 - (base - budget), 1)
                cell.token_ids = cell.token_ids[:keep] + [SEP]
                cell.token_offsets = cell.token_offsets[: keep - 1]
                base = sum(len(c) for c in cells)
        while base > budget and cells[-1].kind == HISTORY_QA:
            base -= len(cells.pop())
    if base > budget:
        raise AssemblyError(f"sample {sample.sample_id}: user cells exceed the budget")

    def rule_sentence_cells(rule_id: str) -> list[SentenceCell]:
        rule = kb.rules[rule_id]
        if not rule.sentences:
            raise AssemblyError(f"rule {rule_id} is not segmented")
        return [
            _sentence_cell(SENTENCE, rule.text[s:e], tokenizer, rule_id, si)
            for si, (s, e) in enumerate(rule.sentences)
        ]

    used = base
    included: list[tuple[str, list[SentenceCell]]] = []
    for rule_id in retrieval.rule_ids():
        candidate = rule_sentence_cells(rule_id)
        cost = sum(len(c) for c in candidate)
        if used + cost > budget:
            break
        included.append((rule_id, candidate))
        used += cost

    gold_inserted = False
    if phase == "train" and sample.gold_rule_id not in [rid for rid, _ in included]:
        gold = rule_sentence_cells(sample.gold_rule_id)
        gold_cost = sum(len(c) for c in gold)
        while included and used + gold_cost > budget:
            _rid, dropped = included.pop()
            used -= sum(len(c) for c in dropped)
        if used + gold_cost > budget:
            kept = []
            for cell in gold:
                if used + len(cell) > budget:
                    break
                kept.append(cell)
                used += len(cell)
            gold = kept
            truncated = True
        if not gold:
            raise AssemblyError(f"sample {sample.sample_id}: no room for the gold rule")
        included.insert(0, (sample.gold_rule_id, gold))
        gold_inserted = True

    for _rid, rcells in included:
        cells.extend(rcells)
    return SpanInput(cells, [rid for rid, _ in included], gold_inserted, truncated)


class SpanModel(nn.Module):
    def __init__(self, encoder: nn.Module):
        super().__init__()
        self.encoder = encoder
        self.start_vec = nn.Linear(encoder.hidden_size, 1, bias=False)
        self.end_vec = nn.Linear(encoder.hidden_size, 1, bias=False)
        nn.init.zeros_(self.start_vec.weight)
        nn.init.zeros_(self.end_vec.weight)

    def forward(
        self,
        tokens: torch.Tensor,
        token_mask: torch.Tensor,
        cell_ids: torch.Tensor | None = None,
        positions: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if getattr(self.encoder, "uses_cell_structure", False):
            enc = self.encoder(tokens, token_mask, cell_ids, positions)
        else:
            enc = self.encoder(tokens, token_mask)
        return self.start_vec(enc).squeeze(-1), self.end_vec(enc).squeeze(-1)


def collate_span(inputs: list[SpanInput], device: str = "cpu") -> dict[str, torch.Tensor]:
    max_t = max(inp.total_tokens() for inp in inputs)
    tokens = torch.full((len(inputs), max_t), PAD, dtype=torch.long)
    token_mask = torch.zeros((len(inputs), max_t), dtype=torch.bool)
    cell_ids = torch.full((len(inputs), max_t), -1, dtype=torch.long)
    positions = torch.zeros((len(inputs), max_t), dtype=torch.long)
    for b, inp in enumerate(inputs):
        offset = 0
        for c, cell in enumerate(inp.cells):
            ids = torch.tensor(cell.token_ids, dtype=torch.long)
            tokens[b, offset : offset + len(ids)] = ids
            token_mask[b, offset : offset + len(ids)] = True
            cell_ids[b, offset : offset + len(ids)] = c
            positions[b, offset : offset + len(ids)] = torch.arange(len(ids))
            offset += len(ids)
    return {
        "tokens": tokens.to(device),
        "token_mask": token_mask.to(device),
        "cell_ids": cell_ids.to(device),
        "positions": positions.to(device),
    }


def constrained_argmax(
    start_scores: np.ndarray,
    end_scores: np.ndarray,
    inp: SpanInput,
    span_cap: int = SPAN_TOKEN_CAP,
) -> SpanPrediction:
    """Best same-sentence span by start+end score.

    Sentences are visited in input order and candidates in (start, end)
    order with strictly-better updates only, which realizes the
    earliest-sentence / earliest-start / shortest-span tie break.
    """
    best: SpanPrediction | None = None
    for offset, cell in inp.sentence_cells():
        n = len(cell.token_offsets)
        if n == 0:
            continue
        s = start_scores[offset + 1 : offset + 1 + n]
        e = end_scores[offset + 1 : offset + 1 + n]
        for i in range(n):
            hi = min(i + span_cap, n)
            j_rel = int(np.argmax(e[i:hi]))
            score = float(s[i] + e[i + j_rel])
            if best is None or score > best.score:
                j = i + j_rel
                text = cell.text[cell.token_offsets[i][0] : cell.token_offsets[j][1]]
                best = SpanPrediction(
                    cell.rule_id, cell.sentence_index, i, j, score, text
                )
    if best is None:
        raise ExtractionImpossible("input contains no rule sentence tokens")
    return best


@dataclass
class SpanExtractor:
    model: SpanModel
    tokenizer: object
    vocab: WordVocab | None
    config: SpanConfig

    def extract(
        self,
        sample: DialogSample,
        retrieval: RetrievalResult,
        kb: KnowledgeBase,
        phase: str = "eval",
    ) -> tuple[SpanPrediction, SpanInput]:
        inp = assemble_span_input(sample, retrieval, kb, self.config, phase, self.tokenizer)
        self.model.eval()
        with torch.no_grad():
            batch = collate_span([inp], self.config.device)
            start, end = self.model(
                batch["tokens"], batch["token_mask"],
                batch["cell_ids"], batch["positions"],
            )
        return (
            constrained_argmax(
                start[0].cpu().numpy(), end[0].cpu().numpy(), inp, self.config.span_cap
            ),
            inp,
        )


def _gold_positions(inp: SpanInput, gold) -> tuple[int, int] | None:
    for offset, cell in inp.sentence_cells():
        if cell.rule_id == gold.rule_id and cell.sentence_index == gold.sentence_index:
            if gold.token_end < len(cell.token_offsets):
                return offset + 1 + gold.token_start, offset + 1 + gold.token_end
    return None


def _candidate_mask(inp: SpanInput, total: int) -> torch.Tensor:
    mask = torch.zeros(total, dtype=torch.bool)
    for offset, cell in inp.sentence_cells():
        mask[offset + 1 : offset + 1 + len(cell.token_offsets)] = True
    return mask


@dataclass
class SpanTrainResult:
    extractor: SpanExtractor
    log: list[dict] = field(default_factory=list)
    skipped: int = 0
    checkpoint_path: Path | None = None


def train_span(
    train_samples: list[DialogSample],
    kb: KnowledgeBase,
    index: TermIndex,
    config: SpanConfig,
    out_dir: str | Path | None = None,
) -> SpanTrainResult:
    """Fit the extractor on weak span labels from the inquire subset.

    The objective is the log-likelihood of the gold start and end
    positions, each normalized over all rule-sentence token positions in
    the input.  Non-inquire samples are excluded and counted.
    """
    seed_everything(config.seed)
    inquire = [s for s in train_samples if s.gold_decision is Decision.INQUIRE]
    skipped = len(train_samples) - len(inquire)
    vocab = build_vocab(kb, train_samples) if config.encoder == "tiny" else None
    tokenizer, encoder = make_tokenizer_and_encoder(_encoder_view(config), vocab)
    model = SpanModel(encoder).to(config.device)

    prepared = []
    for sample in inquire:
        retrieval = retrieve(index, sample.question, sample.scenario, config.top_k)
        inp = assemble_span_input(sample, retrieval, kb, config, "train", tokenizer)
        gold = label_span(sample, kb.rules[sample.gold_rule_id])
        positions = _gold_positions(inp, gold)
        if positions is None:
            skipped += 1
            continue
        prepared.append((inp, positions))
    if not prepared:
        raise ValueError("no trainable inquire samples")

    from rulereader.reasoner import _make_optimizer

    optimizer = _make_optimizer(model, config)
    rng = random.Random(config.seed)
    order = list(range(len(prepared)))
    log: list[dict] = []
    for epoch in range(config.epochs):
        model.train()
        rng.shuffle(order)
        t0 = time.monotonic()
        loss_sum, steps = 0.0, 0
        for b0 in range(0, len(order), config.batch_size):
            chunk = [prepared[i] for i in order[b0 : b0 + config.batch_size]]
            inputs = [c[0] for c in chunk]
            batch = collate_span(inputs, config.device)
            start, end = model(
                batch["tokens"], batch["token_mask"],
                batch["cell_ids"], batch["positions"],
            )
            losses = []
            for b, (inp, (gs, ge)) in enumerate(chunk):
                cand = _candidate_mask(inp, start.shape[1]).to(config.device)
                s_scores = start[b].masked_fill(~cand, float("-inf"))
                e_scores = end[b].masked_fill(~cand, float("-inf"))
                losses.append(
                    F.cross_entropy(s_scores[None, :], torch.tensor([gs], device=config.device))
                    + F.cross_entropy(e_scores[None, :], torch.tensor([ge], device=config.device))
                )
            batch_loss = torch.stack(losses).mean()
            if not torch.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite span loss at epoch {epoch}")
            optimizer.zero_grad()
            batch_loss.backward()
            optimizer.step()
            loss_sum += batch_loss.item()
            steps += 1
        log.append(
            {
                "epoch": epoch,
                "loss": loss_sum / steps,
                "seconds": round(time.monotonic() - t0, 3),
            }
        )
        # Overfitting regimes converge long before the epoch cap.
        if loss_sum / steps < 1e-2:
            break

    extractor = SpanExtractor(model, tokenizer, vocab, config)
    result = SpanTrainResult(extractor, log, skipped)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = save_span(extractor, out_dir / "span.pt")
        with open(out_dir / "span_train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return result


def _encoder_view(config: SpanConfig):
    """ReasonerConfig-shaped view for the shared encoder factory."""
    from rulereader.reasoner import ReasonerConfig

    return ReasonerConfig(
        encoder=config.encoder,
        hidden_size=config.hidden_size,
        encoder_layers=config.encoder_layers,
        encoder_heads=config.encoder_heads,
        dropout=config.dropout,
        max_sequence_length=config.max_sequence_length,
        cell_attention=config.cell_attention,
    )


def save_span(extractor: SpanExtractor, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": "span",
            "config": asdict(extractor.config),
            "vocab": extractor.vocab.to_dict() if extractor.vocab else None,
            "state_dict": extractor.model.state_dict(),
        },
        path,
    )
    return path


def load_span(path: str | Path) -> SpanExtractor:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "span":
        raise ValueError(f"{path} is not a span checkpoint")
    config = SpanConfig(**payload["config"])
    vocab = WordVocab.from_dict(payload["vocab"]) if payload["vocab"] else None
    tokenizer, encoder = make_tokenizer_and_encoder(_encoder_view(config), vocab)
    model = SpanModel(encoder)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return SpanExtractor(model, tokenizer, vocab, config)
