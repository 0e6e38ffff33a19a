"""Command-line entry points.

Everything the package does is reachable from here: index building,
training of the three models, batch evaluation, a JSON API server, a
terminal chat client, and the one-command full-scale reproduction recipe.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from rulereader import corpus
from rulereader.config import AppConfig, load_config
from rulereader.evaluator import aggregate_reports
from rulereader.pipeline import DialogEngine, run_batch_eval
from rulereader.reasoner import ReasonerConfig, load_reasoner, train_reasoner
from rulereader.retriever import build_index, load_index, retrieve, save_index
from rulereader.rewriter import (
    RewriterConfig,
    RewriteInput,
    load_rewriter,
    rewrite,
    train_rewriter,
)
from rulereader.segmenter import segment_knowledge_base
from rulereader.spanmodel import SpanConfig, load_span, train_span
from rulereader.weaklabel import label_span, span_label_text


@click.group()
def main():
    """Open-retrieval conversational machine reading toolkit."""


def _load(data_path, data_format):
    if data_path is None:
        raise click.UsageError("--data is required (or set RULEREADER_DATA)")
    return corpus.load_dataset(data_path, data_format)


def _rewriter_pairs(samples, kb):
    pairs = []
    for sample in samples:
        if sample.gold_decision is not corpus.Decision.INQUIRE:
            continue
        rule = kb.rules[sample.gold_rule_id]
        label = label_span(sample, rule)
        pairs.append((span_label_text(rule, label), rule.text, sample.gold_followup))
    return pairs


@main.command("sample-data")
@click.option("--out", "out_dir", default="data", show_default=True)
def sample_data(out_dir):
    """Write the bundled miniature corpus (normalized-jsonl)."""
    from rulereader.sampledata import write_sample_dataset

    path = write_sample_dataset(out_dir)
    click.echo(f"wrote {path}")


@main.command("build-index")
@click.option("--data", "data_path", envvar="RULEREADER_DATA", required=False)
@click.option("--format", "data_format", default="normalized-jsonl", show_default=True)
@click.option("--out", "out_path", default="models/index.json.gz", show_default=True)
def build_index_cmd(data_path, data_format, out_path):
    """Build and persist the TF-IDF index over the knowledge base."""
    kb, _samples = _load(data_path, data_format)
    index = build_index(kb)
    save_index(index, out_path)
    click.echo(f"indexed {index.doc_count} rules, {len(index.vocabulary)} terms -> {out_path}")


@main.command("retrieve")
@click.argument("question")
@click.option("--scenario", default="")
@click.option("--index", "index_path", default="models/index.json.gz", show_default=True)
@click.option("--k", default=20, show_default=True)
def retrieve_cmd(question, scenario, index_path, k):
    """Rank knowledge-base rules against a question (+ scenario)."""
    index = load_index(index_path)
    result = retrieve(index, question, scenario, k)
    for rank, (rule_id, score) in enumerate(result.ranked, 1):
        click.echo(f"{rank:>3}  {score:10.4f}  {rule_id}")
    if not result.ranked:
        click.echo("(no rule shares a term with the query)")


def _prep(config: AppConfig, mode: str):
    kb, samples = _load(config.data_path, config.data_format)
    segment_knowledge_base(kb, mode)
    index_path = config.resolved_index_path()
    if index_path.exists():
        index = load_index(index_path)
    else:
        index = build_index(kb)
        save_index(index, index_path)
    return kb, samples, index


@main.command("train")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--out-dir", default=None)
@click.option("--full", "full_scale", is_flag=True, help="Use the pretrained-encoder configuration (GPU).")
def train_cmd(config_path, data_path, out_dir, full_scale):
    """Train the decision model on the train split."""
    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if out_dir:
        config.model_dir = out_dir
    if full_scale:
        config.reasoner = ReasonerConfig.full()
    kb, samples, index = _prep(config, config.reasoner.segmentation_mode)
    train = corpus.split_samples(samples, "train")
    result = train_reasoner(
        train, kb, index, config.reasoner, config.model_dir,
        log_hook=lambda e: click.echo(json.dumps(e)),
    )
    click.echo(f"checkpoint: {result.checkpoint_path}")


@main.command("train-span")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--out-dir", default=None)
@click.option("--full", "full_scale", is_flag=True)
def train_span_cmd(config_path, data_path, out_dir, full_scale):
    """Train the follow-up span extractor on inquire samples."""
    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if out_dir:
        config.model_dir = out_dir
    if full_scale:
        config.span = SpanConfig(encoder="pretrained:roberta-base", device="cuda")
    kb, samples, index = _prep(config, "edu")
    train = corpus.split_samples(samples, "train")
    result = train_span(train, kb, index, config.span, config.model_dir)
    click.echo(
        f"checkpoint: {result.checkpoint_path} "
        f"(skipped {result.skipped} non-inquire samples)"
    )


@main.command("train-rewriter")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--out-dir", default=None)
def train_rewriter_cmd(config_path, data_path, out_dir):
    """Train the seq2seq question rewriter on weak span/question pairs."""
    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if out_dir:
        config.model_dir = out_dir
    kb, samples, _index = _prep(config, "edu")
    pairs = _rewriter_pairs(corpus.split_samples(samples, "train"), kb)
    result = train_rewriter(pairs, config.rewriter, config.model_dir)
    click.echo(f"checkpoint: {result.checkpoint_path} ({len(pairs)} pairs)")


def _build_engine(config: AppConfig) -> tuple[DialogEngine, list]:
    model_dir = Path(config.model_dir)
    reasoner = load_reasoner(model_dir / "reasoner.pt")
    kb, samples = _load(config.data_path, config.data_format)
    segment_knowledge_base(kb, reasoner.config.segmentation_mode)
    index_path = config.resolved_index_path()
    index = load_index(index_path) if index_path.exists() else build_index(kb)
    span_path = model_dir / "span.pt"
    span = load_span(span_path) if span_path.exists() else None
    rewriter_obj = "template"
    if config.rewriter_mode == "seq2seq":
        rewriter_obj = load_rewriter(model_dir / "rewriter.pt")
    engine = DialogEngine(
        kb, index, reasoner, span, rewriter_obj,
        top_k=config.top_k, max_turns=config.max_turns,
    )
    return engine, samples


@main.command("evaluate")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--model-dir", default=None)
@click.option("--split", default="dev", show_default=True)
@click.option("--out-dir", default=None)
@click.option(
    "--checkpoint", "checkpoints", multiple=True,
    help="Evaluate specific reasoner checkpoints; repeat for mean/std across seeds.",
)
@click.option("--pred-file", default=None, help="Score an existing prediction file instead of running models.")
@click.option("--gold-file", default=None, help="Normalized-jsonl dataset for --pred-file scoring.")
def evaluate_cmd(config_path, data_path, model_dir, split, out_dir, checkpoints, pred_file, gold_file):
    """Run batch evaluation and print the metric report."""
    from rulereader.evaluator import full_report, read_predictions

    if pred_file:
        records = read_predictions(pred_file)
        if gold_file:
            _kb, gold_samples = corpus.load_dataset(gold_file, "normalized-jsonl")
            gold = {s.sample_id: s for s in gold_samples}
            for r in records:
                if r.sample_id in gold:
                    s = gold[r.sample_id]
                    r.gold_decision = s.gold_decision
                    r.gold_question = s.gold_followup
                    r.seen_tag = s.seen_tag
        report = full_report(records)
        click.echo(report.to_text())
        return

    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if model_dir:
        config.model_dir = model_dir
    engine, samples = _build_engine(config)
    subset = corpus.split_samples(samples, split)
    if not checkpoints:
        report, _records = run_batch_eval(
            subset, engine.kb, engine.index, engine.reasoner,
            engine.span_extractor, engine.rewriter, out_dir,
        )
        click.echo(report.to_text())
        return
    reports = []
    for ckpt in checkpoints:
        reasoner = load_reasoner(ckpt)
        report, _ = run_batch_eval(
            subset, engine.kb, engine.index, reasoner,
            engine.span_extractor, engine.rewriter,
        )
        reports.append(report)
        click.echo(f"== {ckpt}\n{report.to_text()}")
    click.echo("== mean ± std across checkpoints")
    for subset_name, metrics in aggregate_reports(reports).items():
        for metric, (mean, std) in metrics.items():
            click.echo(f"{subset_name:<8} {metric:<10} {mean:8.2f} ± {std:.2f}")


@main.command("generate")
@click.option("--span", "span_text", required=True)
@click.option("--rule-id", default=None, help="Host rule for seq2seq context.")
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--template/--seq2seq", "use_template", default=True)
@click.option("--model-dir", default="models")
def generate_cmd(span_text, rule_id, data_path, use_template, model_dir):
    """Rewrite an extracted span into a follow-up question."""
    if use_template:
        click.echo(rewrite(RewriteInput(span_text, span_text), "template"))
        return
    rewriter = load_rewriter(Path(model_dir) / "rewriter.pt")
    host = span_text
    if rule_id and data_path:
        kb, _ = _load(data_path, "normalized-jsonl")
        host = kb.rules[rule_id].text
    click.echo(rewrite(RewriteInput(span_text, host), rewriter))


@main.command("serve")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--model-dir", default=None)
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
def serve_cmd(config_path, data_path, model_dir, host, port):
    """Serve the dialog session API over HTTP."""
    import uvicorn

    from rulereader.service import create_app

    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if model_dir:
        config.model_dir = model_dir
    engine, _samples = _build_engine(config)
    uvicorn.run(create_app(engine), host=host or config.host, port=port or config.port)


@main.command("chat")
@click.option("--config", "config_path", default=None)
@click.option("--data", "data_path", envvar="RULEREADER_DATA", default=None)
@click.option("--model-dir", default=None)
def chat_cmd(config_path, data_path, model_dir):
    """Terminal chat client (the no-browser fallback)."""
    config = load_config(config_path)
    if data_path:
        config.data_path = data_path
    if model_dir:
        config.model_dir = model_dir
    engine, _samples = _build_engine(config)
    question = click.prompt("question")
    scenario = click.prompt("scenario", default="", show_default=False)
    response = engine.start_session(question, scenario)
    while response.status == "active" and response.followup:
        click.echo(f"[system] {response.followup}")
        answer = click.prompt("answer (yes/no)", type=click.Choice(["yes", "no"]))
        response = engine.answer_followup(response.session_id, answer)
    click.echo(f"[decision] {response.decision}")
    if response.warning:
        click.echo(f"[warning] {response.warning}")


@main.command("reproduce")
@click.option("--data", "data_path", envvar="RULEREADER_DATA", required=True)
@click.option("--format", "data_format", default="or-sharc-json", show_default=True)
@click.option("--out-dir", default="reproduction", show_default=True)
@click.option("--seeds", default="13,17,29,43,71", show_default=True)
@click.option("--dry-run", is_flag=True, help="Print the plan without training.")
def reproduce_cmd(data_path, data_format, out_dir, seeds, dry_run):
    """Full-scale reproduction: pretrained encoders, 5 seeds, all splits.

    Needs a GPU and the 'full' extra; expect several hours end to end.
    """
    seed_list = [int(s) for s in seeds.split(",")]
    plan = [
        f"load dataset from {data_path} ({data_format})",
        "build + persist TF-IDF index; report recall@{1,2,5,10,20} on all splits",
        f"train decision model (roberta-base, L=4, lambda=8, lr 3e-5, batch 32, "
        f"10 epochs) for seeds {seed_list}",
        "train span extractor (roberta-base, lr 5e-5, batch 32, 10 epochs)",
        "train question rewriter (bart-base, lr 1e-4, batch 32, 30 epochs)",
        "evaluate dev and test, full/seen/unseen, mean ± std across seeds",
        f"write reports under {out_dir}/",
    ]
    click.echo("reproduction plan:")
    for step in plan:
        click.echo(f"  - {step}")
    if dry_run:
        return

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kb, samples = corpus.load_dataset(data_path, data_format)
    segment_knowledge_base(kb, "edu")
    index = build_index(kb)
    save_index(index, out / "index.json.gz")
    from rulereader.retriever import recall_at_k

    for split in ("train", "dev", "test"):
        subset = corpus.split_samples(samples, split)
        if subset:
            rec = recall_at_k(index, subset, [1, 2, 5, 10, 20])
            click.echo(
                f"recall {split}: "
                + ", ".join(f"@{k}={100 * v:.1f}" for k, v in sorted(rec.items()))
            )

    train = corpus.split_samples(samples, "train")
    span_cfg = SpanConfig(encoder="pretrained:roberta-base", device="cuda")
    rew_cfg = RewriterConfig.full()
    span_result = train_span(train, kb, index, span_cfg, out / "span")
    pairs = _rewriter_pairs(train, kb)
    rew_result = train_rewriter(pairs, rew_cfg, out / "rewriter")

    reports = {"dev": [], "test": []}
    for seed in seed_list:
        reasoner_cfg = ReasonerConfig.full()
        reasoner_cfg.seed = seed
        result = train_reasoner(train, kb, index, reasoner_cfg, out / f"seed-{seed}")
        for split in ("dev", "test"):
            subset = corpus.split_samples(samples, split)
            report, _ = run_batch_eval(
                subset, kb, index, result.reasoner,
                span_result.extractor, rew_result.rewriter,
                out / f"seed-{seed}" / split,
            )
            reports[split].append(report)
    for split, rs in reports.items():
        click.echo(f"== {split} mean ± std")
        for subset_name, metrics in aggregate_reports(rs).items():
            for metric, (mean, std) in metrics.items():
                click.echo(f"{subset_name:<8} {metric:<10} {mean:8.2f} ± {std:.2f}")


if __name__ == "__main__":
    sys.exit(main())
