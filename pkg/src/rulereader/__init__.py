"""Open-retrieval conversational machine reading over natural-language rule texts.

The package wires together a sparse retriever over a rule-text knowledge
base, a discourse-aware entailment reasoner that decides yes / no / inquire
at each dialog turn, and an extract-and-rewrite follow-up question
generator, together with the evaluation metrics used to score all three.
"""

__version__ = "0.1.0"

from rulereader.corpus import (  # noqa: F401
    Decision,
    DialogSample,
    HistoryTurn,
    KnowledgeBase,
    RuleText,
    load_dataset,
    save_normalized,
)
