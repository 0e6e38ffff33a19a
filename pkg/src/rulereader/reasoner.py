"""Entailment-driven decision making over retrieved rule texts.

The reader input is a sequence of sentence-cells: the user question, the
scenario, one cell per history QA pair, then the clause-level units (EDUs)
of as many complete retrieved rule texts as fit the token budget.  Every
cell is framed by a leading marker token and a trailing separator; the
token encoder runs over the flat sequence and the marker vectors become
cell representations.

Those cell vectors pass through ``inter_layers`` additional self-attention
blocks, after which an affine head scores each EDU cell's entailment state
(entailment / contradiction / neutral), and a learned self-attention pools
all cells into a summary vector that an affine head maps to the three
decision scores (yes / no / inquire).  Training minimizes
``decision_loss + entailment_weight * entailment_loss``, the latter
averaged over every EDU cell in the batch.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from rulereader.corpus import Decision, DialogSample, KnowledgeBase
from rulereader.encoder import (
    CLS,
    PAD,
    SEP,
    PretrainedEncoder,
    WordVocab,
    build_tiny_encoder,
)
from rulereader.retriever import RetrievalResult, TermIndex, retrieve
from rulereader.weaklabel import Entailment, label_entailment

DECISIONS = (Decision.YES, Decision.NO, Decision.INQUIRE)
ENTAILMENT_STATES = (Entailment.ENTAILMENT, Entailment.CONTRADICTION, Entailment.NEUTRAL)

QUESTION, SCENARIO, HISTORY_QA, EDU = "question", "scenario", "history_qa", "edu"


class AssemblyError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class ReasonerConfig:
    inter_layers: int = 4            # L
    entailment_weight: float = 8.0   # loss weight on the entailment head
    max_sequence_length: int = 512
    encoder: str = "tiny"            # "tiny" or "pretrained:<model-name>"
    hidden_size: int = 64
    encoder_layers: int = 2
    encoder_heads: int = 4
    inter_heads: int = 8
    dropout: float = 0.1
    learning_rate: float = 3e-5
    head_learning_rate: float | None = None   # linear heads; defaults to learning_rate
    inter_learning_rate: float | None = None  # inter-sentence stack; defaults to learning_rate
    batch_size: int = 32
    epochs: int = 10
    seed: int = 13
    segmentation_mode: str = "edu"   # "edu" or "sentence-only"
    cell_attention: str = "block"    # tiny-encoder attention scheme
    top_k: int = 20
    device: str = "cpu"

    def __post_init__(self):
        if self.inter_layers < 0:
            raise ValueError("inter_layers must be >= 0")
        if self.entailment_weight < 0:
            raise ValueError("entailment_weight must be >= 0")

    @staticmethod
    def desk() -> "ReasonerConfig":
        """CPU-friendly configuration used by the test suite and demos."""
        return ReasonerConfig(
            inter_layers=4,
            hidden_size=64,
            encoder_layers=2,
            dropout=0.0,
            learning_rate=1e-3,
            head_learning_rate=5e-2,
            batch_size=2,
            epochs=30,
            max_sequence_length=384,
            top_k=3,
        )

    @staticmethod
    def full() -> "ReasonerConfig":
        """Full-scale configuration (GPU): pretrained encoder, paper-scale
        optimizer settings."""
        return ReasonerConfig(
            encoder="pretrained:roberta-base",
            learning_rate=3e-5,
            batch_size=32,
            epochs=10,
            device="cuda",
        )


@dataclass
class Cell:
    kind: str
    text: str
    token_ids: list[int]
    rule_id: str | None = None
    edu_index: int | None = None

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class ReaderInput:
    cells: list[Cell]
    rules_included: list[str]
    gold_inserted: bool = False
    truncated: bool = False

    def edu_cells(self) -> list[Cell]:
        return [c for c in self.cells if c.kind == EDU]

    def total_tokens(self) -> int:
        return sum(len(c) for c in self.cells)


@dataclass
class TurnPrediction:
    decision_scores: np.ndarray          # (3,) over yes / no / inquire
    entailment_scores: np.ndarray        # (#EDU cells, 3)
    attention_weights: np.ndarray        # (#cells,), sums to 1


def predict_decision(prediction: TurnPrediction) -> Decision:
    """Argmax decision; exact ties resolve in the fixed order
    yes > no > inquire (argmax returns the first maximum)."""
    return DECISIONS[int(np.argmax(prediction.decision_scores))]


def _cell(kind: str, text: str, tokenizer, rule_id=None, edu_index=None, token_cap=None) -> Cell:
    body = tokenizer.encode(text)
    if token_cap is not None:
        body = body[: max(token_cap, 0)]
    return Cell(kind, text, [CLS] + body + [SEP], rule_id, edu_index)


def assemble_input(
    sample: DialogSample,
    retrieval: RetrievalResult,
    kb: KnowledgeBase,
    config: ReasonerConfig,
    phase: str,
    tokenizer,
) -> ReaderInput:
    """Build the cell sequence for one sample under the token budget.

    Retrieved rules are taken whole, in rank order, until the next one no
    longer fits.  In the train phase a missing gold rule is inserted right
    after the history cells, evicting the lowest-ranked included rules as
    needed (and, in the extreme case of a gold rule larger than the
    remaining budget, dropping its trailing EDU cells and flagging the
    input as truncated).  Eval-phase inputs never see the gold rule unless
    retrieval earned it.
    """
    if phase not in ("train", "eval"):
        raise ValueError(f"unknown phase {phase!r}")
    budget = config.max_sequence_length

    cells = [_cell(QUESTION, sample.question, tokenizer, token_cap=budget - 2)]
    if sample.scenario:
        cells.append(_cell(SCENARIO, sample.scenario, tokenizer))
    for turn in sample.history:
        cells.append(_cell(HISTORY_QA, f"{turn.question} {turn.answer}", tokenizer))

    truncated = False
    base = sum(len(c) for c in cells)
    if base > budget:
        truncated = True
        # Trim the scenario first, then drop trailing history turns.
        for cell in cells:
            if cell.kind == SCENARIO and base > budget:
                give_back = min(base - budget, len(cell.token_ids) - 2)
                cell.token_ids = cell.token_ids[: len(cell.token_ids) - 1 - give_back] + [SEP]
                base -= give_back
        while base > budget and cells[-1].kind == HISTORY_QA:
            base -= len(cells.pop())
        if base > budget:
            raise AssemblyError(
                f"sample {sample.sample_id}: question alone exceeds the budget"
            )

    def rule_cells(rule_id: str) -> list[Cell]:
        rule = kb.rules[rule_id]
        if not rule.edus:
            raise AssemblyError(f"rule {rule_id} is not segmented")
        return [
            _cell(EDU, rule.text[s:e], tokenizer, rule_id=rule_id, edu_index=k)
            for _si, k, s, e in rule.iter_edus()
        ]

    used = base
    included: list[tuple[str, list[Cell]]] = []
    for rule_id in retrieval.rule_ids():
        candidate = rule_cells(rule_id)
        cost = sum(len(c) for c in candidate)
        if used + cost > budget:
            break
        included.append((rule_id, candidate))
        used += cost

    gold_inserted = False
    if phase == "train" and sample.gold_rule_id not in [rid for rid, _ in included]:
        gold = rule_cells(sample.gold_rule_id)
        gold_cost = sum(len(c) for c in gold)
        while included and used + gold_cost > budget:
            _rid, dropped = included.pop()
            used -= sum(len(c) for c in dropped)
        if used + gold_cost > budget:
            kept: list[Cell] = []
            for cell in gold:
                if used + len(cell) > budget:
                    break
                kept.append(cell)
                used += len(cell)
            gold = kept
            truncated = True
        else:
            used += gold_cost
        if not gold:
            raise AssemblyError(
                f"sample {sample.sample_id}: no room for any gold rule cell"
            )
        included.insert(0, (sample.gold_rule_id, gold))
        gold_inserted = True

    for _rid, rcells in included:
        cells.extend(rcells)
    return ReaderInput(
        cells=cells,
        rules_included=[rid for rid, _ in included],
        gold_inserted=gold_inserted,
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# model

def symmetrize_attention(stack: nn.TransformerEncoder) -> None:
    """Initialize K projections equal to Q in every self-attention layer.

    At initialization attention logits then become a positive-semidefinite
    similarity between token representations, so cells that share words
    attend to each other from the first step.  Randomly initialized Q/K
    pairs start with near-uniform attention and give matching tasks almost
    no gradient to climb; this removes that cold start.
    """
    with torch.no_grad():
        for layer in stack.layers:
            w = layer.self_attn.in_proj_weight
            d = w.shape[1]
            w[d : 2 * d] = w[:d]
            b = layer.self_attn.in_proj_bias
            b[d : 2 * d] = b[:d]


class ReasonerModel(nn.Module):
    def __init__(self, encoder: nn.Module, config: ReasonerConfig):
        super().__init__()
        d = encoder.hidden_size
        self.encoder = encoder
        self.config = config
        if config.inter_layers > 0:
            layer = nn.TransformerEncoderLayer(
                d_model=d,
                nhead=config.inter_heads,
                dim_feedforward=2 * d,
                dropout=config.dropout,
                batch_first=True,
                activation="gelu",
            )
            self.inter = nn.TransformerEncoder(
                layer, config.inter_layers, enable_nested_tensor=False,
                norm=nn.LayerNorm(d),
            )
            symmetrize_attention(self.inter)
        else:
            self.inter = None
        self.entail_head = nn.Linear(d, 3)
        self.attn = nn.Linear(d, 1)
        self.decision_head = nn.Linear(d, 3)
        # Heads start at exactly zero: first predictions are uniform and
        # head directions are built from task gradients, not init noise.
        for head in (self.entail_head, self.attn, self.decision_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(
        self,
        tokens: torch.Tensor,        # (B, T) long
        token_mask: torch.Tensor,    # (B, T) bool
        marker_pos: torch.Tensor,    # (B, C) long, -1 padding
        cell_mask: torch.Tensor,     # (B, C) bool
        cell_ids: torch.Tensor | None = None,
        positions: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if getattr(self.encoder, "uses_cell_structure", False):
            enc = self.encoder(tokens, token_mask, cell_ids, positions)
        else:
            enc = self.encoder(tokens, token_mask)
        gather = marker_pos.clamp(min=0).unsqueeze(-1).expand(-1, -1, enc.shape[-1])
        cells = enc.gather(1, gather)
        if self.inter is not None:
            cells = self.inter(cells, src_key_padding_mask=~cell_mask)
        entail_logits = self.entail_head(cells)
        scores = self.attn(cells).squeeze(-1)
        scores = scores.masked_fill(~cell_mask, float("-inf"))
        attention = torch.softmax(scores, dim=-1)
        summary = torch.bmm(attention.unsqueeze(1), cells).squeeze(1)
        decision_logits = self.decision_head(summary)
        return decision_logits, entail_logits, attention


def collate(inputs: list[ReaderInput], device: str = "cpu") -> dict[str, torch.Tensor]:
    max_t = max(inp.total_tokens() for inp in inputs)
    max_c = max(len(inp.cells) for inp in inputs)
    batch = len(inputs)
    tokens = torch.full((batch, max_t), PAD, dtype=torch.long)
    token_mask = torch.zeros((batch, max_t), dtype=torch.bool)
    cell_ids = torch.full((batch, max_t), -1, dtype=torch.long)
    positions = torch.zeros((batch, max_t), dtype=torch.long)
    marker_pos = torch.full((batch, max_c), -1, dtype=torch.long)
    cell_mask = torch.zeros((batch, max_c), dtype=torch.bool)
    edu_mask = torch.zeros((batch, max_c), dtype=torch.bool)
    for b, inp in enumerate(inputs):
        offset = 0
        for c, cell in enumerate(inp.cells):
            ids = torch.tensor(cell.token_ids, dtype=torch.long)
            tokens[b, offset : offset + len(ids)] = ids
            token_mask[b, offset : offset + len(ids)] = True
            cell_ids[b, offset : offset + len(ids)] = c
            positions[b, offset : offset + len(ids)] = torch.arange(len(ids))
            marker_pos[b, c] = offset
            cell_mask[b, c] = True
            edu_mask[b, c] = cell.kind == EDU
            offset += len(ids)
    return {
        "tokens": tokens.to(device),
        "token_mask": token_mask.to(device),
        "cell_ids": cell_ids.to(device),
        "positions": positions.to(device),
        "marker_pos": marker_pos.to(device),
        "cell_mask": cell_mask.to(device),
        "edu_mask": edu_mask.to(device),
    }


def forward_inputs(
    model: ReasonerModel, inputs: list[ReaderInput], device: str = "cpu"
) -> list[TurnPrediction]:
    batch = collate(inputs, device)
    decision_logits, entail_logits, attention = model(
        batch["tokens"], batch["token_mask"], batch["marker_pos"], batch["cell_mask"],
        batch["cell_ids"], batch["positions"],
    )
    out = []
    for b, inp in enumerate(inputs):
        n = len(inp.cells)
        edu_rows = [c for c, cell in enumerate(inp.cells) if cell.kind == EDU]
        out.append(
            TurnPrediction(
                decision_scores=decision_logits[b].detach().cpu().numpy(),
                entailment_scores=entail_logits[b, edu_rows].detach().cpu().numpy()
                if edu_rows
                else np.zeros((0, 3)),
                attention_weights=attention[b, :n].detach().cpu().numpy(),
            )
        )
    return out


# ---------------------------------------------------------------------------
# loss

_ENTAIL_INDEX = {state: i for i, state in enumerate(ENTAILMENT_STATES)}
_DECISION_INDEX = {d: i for i, d in enumerate(DECISIONS)}


def entailment_targets(
    inp: ReaderInput, kb: KnowledgeBase, sample: DialogSample
) -> list[int]:
    """Per-EDU-cell class indices, from the weak labeler run over exactly
    the rules present in this input."""
    rules = [kb.rules[rid] for rid in inp.rules_included]
    labels = {
        (l.rule_id, l.edu_index): _ENTAIL_INDEX[l.label]
        for l in label_entailment(sample, rules)
    }
    return [
        labels[(cell.rule_id, cell.edu_index)] for cell in inp.edu_cells()
    ]


def joint_loss(
    decision_logits: torch.Tensor,   # (B, 3)
    entail_logits: torch.Tensor,     # (B, C, 3)
    edu_mask: torch.Tensor,          # (B, C) bool
    decision_gold: torch.Tensor,     # (B,) long
    entail_gold: torch.Tensor,       # (B, C) long, ignored where not EDU
    entailment_weight: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, decision_part, entailment_part); total is exactly
    decision_part + weight * entailment_part.  The entailment part is
    cross-entropy averaged over all EDU cells in the batch, 0 if none."""
    decision_part = F.cross_entropy(decision_logits, decision_gold)
    if edu_mask.any():
        entailment_part = F.cross_entropy(
            entail_logits[edu_mask], entail_gold[edu_mask]
        )
    else:
        entailment_part = torch.zeros((), dtype=decision_logits.dtype, device=decision_logits.device)
    total = decision_part + entailment_weight * entailment_part
    return total, decision_part, entailment_part


def loss(
    prediction_logits: tuple[torch.Tensor, torch.Tensor],
    entailment_labels: list[int],
    gold_decision: Decision,
    entailment_weight: float,
) -> tuple[float, float, float]:
    """Single-sample convenience wrapper around :func:`joint_loss`."""
    decision_logits, entail_logits = prediction_logits
    edu_mask = torch.ones((1, entail_logits.shape[0]), dtype=torch.bool)
    if entail_logits.shape[0] == 0:
        edu_mask = torch.zeros((1, 0), dtype=torch.bool)
    total, dec, ent = joint_loss(
        decision_logits.reshape(1, 3),
        entail_logits.reshape(1, -1, 3),
        edu_mask,
        torch.tensor([_DECISION_INDEX[gold_decision]]),
        torch.tensor([entailment_labels], dtype=torch.long).reshape(1, -1),
        entailment_weight,
    )
    return float(total), float(dec), float(ent)


# ---------------------------------------------------------------------------
# training

def make_tokenizer_and_encoder(config: ReasonerConfig, vocab: WordVocab | None):
    if config.encoder == "tiny":
        if vocab is None:
            raise ValueError("tiny encoder needs a word vocabulary")
        encoder = build_tiny_encoder(
            vocab,
            hidden_size=config.hidden_size,
            layers=config.encoder_layers,
            heads=config.encoder_heads,
            max_len=config.max_sequence_length,
            dropout=config.dropout,
            cell_attention=getattr(config, "cell_attention", "block"),
        )
        return vocab, encoder
    if config.encoder.startswith("pretrained:"):
        encoder = PretrainedEncoder(config.encoder.split(":", 1)[1])
        return encoder, encoder
    raise ValueError(f"unknown encoder spec {config.encoder!r}")


def build_vocab(kb: KnowledgeBase, samples: list[DialogSample]) -> WordVocab:
    texts = [r.text for r in kb.rules.values()]
    for s in samples:
        texts.append(s.question)
        texts.append(s.scenario)
        for t in s.history:
            texts.append(t.question)
            texts.append(t.answer)
        if s.gold_followup:
            texts.append(s.gold_followup)
    texts.extend(d.value for d in DECISIONS)
    return WordVocab.build(texts)


@dataclass
class Reasoner:
    """A trained decision model plus everything needed to run it."""

    model: ReasonerModel
    tokenizer: object
    vocab: WordVocab | None
    config: ReasonerConfig

    def predict(
        self,
        sample: DialogSample,
        retrieval: RetrievalResult,
        kb: KnowledgeBase,
        phase: str = "eval",
    ) -> tuple[TurnPrediction, ReaderInput]:
        inp = assemble_input(sample, retrieval, kb, self.config, phase, self.tokenizer)
        self.model.eval()
        with torch.no_grad():
            pred = forward_inputs(self.model, [inp], self.config.device)[0]
        return pred, inp


@dataclass
class TrainResult:
    reasoner: Reasoner
    log: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None
    log_path: Path | None = None


def _make_optimizer(model: nn.Module, config) -> torch.optim.Optimizer:
    """Adam with up to three parameter groups: token encoder, the
    inter-sentence stack, and the lightweight linear heads.  The heads are
    probes over slow-moving features and tolerate much larger steps than
    the encoder; the inter stack sits in between."""
    head_lr = getattr(config, "head_learning_rate", None) or config.learning_rate
    inter_lr = getattr(config, "inter_learning_rate", None) or config.learning_rate
    head_names = ("entail_head", "attn", "decision_head", "start_vec", "end_vec")
    groups = {"body": ([], config.learning_rate), "inter": ([], inter_lr), "heads": ([], head_lr)}
    for name, param in model.named_parameters():
        top = name.split(".")[0]
        key = "heads" if top in head_names else "inter" if top == "inter" else "body"
        groups[key][0].append(param)
    return torch.optim.Adam(
        [{"params": params, "lr": lr} for params, lr in groups.values() if params]
    )


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def train_reasoner(
    train_samples: list[DialogSample],
    kb: KnowledgeBase,
    index: TermIndex,
    config: ReasonerConfig,
    out_dir: str | Path | None = None,
    log_hook=None,
) -> TrainResult:
    """Fit the decision model on weakly labeled inputs.

    Deterministic for a fixed seed, encoder, and sample order.  Raises
    :class:`TrainingDivergedError` if any loss goes non-finite.
    """
    seed_everything(config.seed)
    vocab = build_vocab(kb, train_samples) if config.encoder == "tiny" else None
    tokenizer, encoder = make_tokenizer_and_encoder(config, vocab)
    model = ReasonerModel(encoder, config).to(config.device)

    prepared: list[tuple[ReaderInput, int, list[int]]] = []
    for sample in train_samples:
        retrieval = retrieve(index, sample.question, sample.scenario, config.top_k)
        inp = assemble_input(sample, retrieval, kb, config, "train", tokenizer)
        targets = entailment_targets(inp, kb, sample)
        prepared.append((inp, _DECISION_INDEX[sample.gold_decision], targets))

    optimizer = _make_optimizer(model, config)
    rng = random.Random(config.seed)
    order = list(range(len(prepared)))
    log: list[dict] = []

    for epoch in range(config.epochs):
        model.train()
        rng.shuffle(order)
        t0 = time.monotonic()
        sums = {"total": 0.0, "decision": 0.0, "entailment": 0.0}
        correct = 0
        steps = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [prepared[i] for i in order[start : start + config.batch_size]]
            inputs = [c[0] for c in chunk]
            batch = collate(inputs, config.device)
            decision_gold = torch.tensor([c[1] for c in chunk], device=config.device)
            entail_gold = torch.zeros_like(batch["edu_mask"], dtype=torch.long)
            for b, (inp, _dg, targets) in enumerate(chunk):
                rows = batch["edu_mask"][b].nonzero(as_tuple=True)[0]
                entail_gold[b, rows] = torch.tensor(targets, device=config.device)
            decision_logits, entail_logits, _ = model(
                batch["tokens"], batch["token_mask"], batch["marker_pos"],
                batch["cell_mask"], batch["cell_ids"], batch["positions"],
            )
            total, dec, ent = joint_loss(
                decision_logits,
                entail_logits,
                batch["edu_mask"],
                decision_gold,
                entail_gold,
                config.entailment_weight,
            )
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} step {steps}: "
                    f"total={float(total)!r} decision={float(dec)!r} entailment={float(ent)!r}"
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            sums["total"] += total.item()
            sums["decision"] += dec.item()
            sums["entailment"] += ent.item()
            correct += int((decision_logits.argmax(-1) == decision_gold).sum())
            steps += 1
        entry = {
            "epoch": epoch,
            "loss_total": sums["total"] / steps,
            "loss_decision": sums["decision"] / steps,
            "loss_entailment": sums["entailment"] / steps,
            "train_micro_acc": 100.0 * correct / len(prepared),
            "seconds": round(time.monotonic() - t0, 3),
        }
        log.append(entry)
        if log_hook is not None:
            log_hook(entry)

    reasoner = Reasoner(model, tokenizer, vocab, config)
    result = TrainResult(reasoner, log)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = save_reasoner(reasoner, out_dir / "reasoner.pt")
        result.log_path = out_dir / "reasoner_train_log.jsonl"
        with open(result.log_path, "w", encoding="utf-8") as fh:
            for entry in log:
                fh.write(json.dumps(entry) + "\n")
    return result


def training_micro_accuracy(
    reasoner: Reasoner,
    samples: list[DialogSample],
    kb: KnowledgeBase,
    index: TermIndex,
    phase: str = "train",
) -> float:
    correct = 0
    for sample in samples:
        retrieval = retrieve(index, sample.question, sample.scenario, reasoner.config.top_k)
        pred, _ = reasoner.predict(sample, retrieval, kb, phase=phase)
        correct += predict_decision(pred) is sample.gold_decision
    return 100.0 * correct / len(samples)


def save_reasoner(reasoner: Reasoner, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": "reasoner",
            "config": asdict(reasoner.config),
            "vocab": reasoner.vocab.to_dict() if reasoner.vocab else None,
            "state_dict": reasoner.model.state_dict(),
        },
        path,
    )
    return path


def load_reasoner(path: str | Path) -> Reasoner:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "reasoner":
        raise ValueError(f"{path} is not a reasoner checkpoint")
    config = ReasonerConfig(**payload["config"])
    vocab = WordVocab.from_dict(payload["vocab"]) if payload["vocab"] else None
    tokenizer, encoder = make_tokenizer_and_encoder(config, vocab)
    model = ReasonerModel(encoder, config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return Reasoner(model, tokenizer, vocab, config)
