#!/usr/bin/env python3
"""Regenerate the frozen forward-pass regression fixture.

Run after any deliberate architecture change:
    python3 scripts/freeze_golden.py
"""

import json
from pathlib import Path

import torch

from rulereader.corpus import split_samples
from rulereader.reasoner import (
    ReasonerConfig,
    ReasonerModel,
    assemble_input,
    forward_inputs,
    build_vocab,
    make_tokenizer_and_encoder,
)
from rulereader.retriever import build_index, retrieve
from rulereader.sampledata import build_sample_corpus
from rulereader.segmenter import segment_knowledge_base

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden_logits.json"


def main():
    kb, samples = build_sample_corpus()
    segment_knowledge_base(kb)
    index = build_index(kb)
    train = split_samples(samples, "train")
    config = ReasonerConfig(
        inter_layers=1, entailment_weight=2.0, max_sequence_length=256,
        hidden_size=16, encoder_layers=1, encoder_heads=2, inter_heads=2,
        dropout=0.0, learning_rate=1e-3, batch_size=4, epochs=2, seed=5,
    )
    vocab = build_vocab(kb, train)
    torch.manual_seed(config.seed)
    tokenizer, encoder = make_tokenizer_and_encoder(config, vocab)
    model = ReasonerModel(encoder, config)
    model.eval()
    sample = next(s for s in train if s.history)
    retrieval = retrieve(index, sample.question, sample.scenario, 20)
    inp = assemble_input(sample, retrieval, kb, config, "train", tokenizer)
    with torch.no_grad():
        pred = forward_inputs(model, [inp])[0]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(
        json.dumps(
            {
                "sample_id": sample.sample_id,
                "config": config.__dict__,
                "decision_scores": [float(x) for x in pred.decision_scores],
                "attention_head": [float(x) for x in pred.attention_weights[:8]],
            },
            indent=2,
        )
    )
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
