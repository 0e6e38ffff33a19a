import json

import pytest

from rulereader.corpus import (
    DatasetError,
    Decision,
    DialogSample,
    EmptyDatasetError,
    HistoryTurn,
    ReferentialIntegrityError,
    RecordParseError,
    SeenTag,
    average_dialog_turns,
    load_dataset,
    save_normalized,
    split_samples,
)
from rulereader.sampledata import build_sample_corpus, write_sample_dataset


def _write_or_sharc(tmp_path, samples_by_split, rules=None):
    if rules is not None:
        (tmp_path / "documents.json").write_text(json.dumps(rules))
    for split, records in samples_by_split.items():
        (tmp_path / f"{split}.json").write_text(json.dumps(records))
    return tmp_path


BASE_RULES = [
    {"rule_id": "r1", "text": "You must hold a permit.", "source": "a"},
    {"rule_id": "r2", "text": "Applicants must be residents.", "source": "b"},
]


def _sample(idx, split, rule="r1", answer="Yes", history=()):
    return {
        "utterance_id": f"s{idx}",
        "question": "Can I apply?",
        "scenario": "I live nearby.",
        "history": [
            {"follow_up_question": q, "follow_up_answer": a} for q, a in history
        ],
        "snippet_id": rule,
        "answer": answer,
    }


class TestOrSharcLoading:
    def test_loads_rules_and_samples(self, tmp_path):
        path = _write_or_sharc(
            tmp_path,
            {
                "train": [_sample(1, "train"), _sample(2, "train", rule="r2")],
                "dev": [_sample(3, "dev", answer="Do you hold a permit?")],
            },
            rules=BASE_RULES,
        )
        kb, samples = load_dataset(path, "or-sharc-json")
        assert len(kb.rules) == 2
        assert len(samples) == 3
        assert kb.split_index["train"] == ["s1", "s2"]
        dev = samples[-1]
        assert dev.gold_decision is Decision.INQUIRE
        assert dev.gold_followup == "Do you hold a permit?"

    def test_yes_no_answers_become_decisions(self, tmp_path):
        path = _write_or_sharc(
            tmp_path,
            {"train": [_sample(1, "train", answer="No")]},
            rules=BASE_RULES,
        )
        _, samples = load_dataset(path, "or-sharc-json")
        assert samples[0].gold_decision is Decision.NO
        assert samples[0].gold_followup is None

    def test_embedded_snippet_layout_builds_kb(self, tmp_path):
        record = _sample(1, "train")
        record["snippet"] = "You must hold a permit."
        path = _write_or_sharc(tmp_path, {"train": [record]})
        kb, samples = load_dataset(path, "or-sharc-json")
        assert kb.rules["r1"].text == "You must hold a permit."

    def test_dangling_rule_reference(self, tmp_path):
        path = _write_or_sharc(
            tmp_path,
            {"train": [_sample(1, "train", rule="missing")]},
            rules=BASE_RULES,
        )
        with pytest.raises(ReferentialIntegrityError) as err:
            load_dataset(path, "or-sharc-json")
        assert "missing" in str(err.value)
        assert "s1" in str(err.value)

    def test_malformed_record_names_sample(self, tmp_path):
        bad = {"utterance_id": "s9", "scenario": ""}  # no question
        path = _write_or_sharc(tmp_path, {"train": [bad]}, rules=BASE_RULES)
        with pytest.raises(RecordParseError) as err:
            load_dataset(path, "or-sharc-json")
        assert "s9" in str(err.value)

    def test_empty_dataset_is_fine(self, tmp_path):
        path = _write_or_sharc(tmp_path, {"train": []}, rules=[])
        kb, samples = load_dataset(path, "or-sharc-json")
        assert len(kb.rules) == 0
        assert samples == []

    def test_missing_path(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "nope", "or-sharc-json")

    def test_history_answers_normalized(self, tmp_path):
        history = [("Q1?", "Yes."), ("Q2?", "no, not yet"), ("Q3?", "maybe")]
        path = _write_or_sharc(
            tmp_path,
            {"train": [_sample(1, "train", history=history)]},
            rules=BASE_RULES,
        )
        _, samples = load_dataset(path, "or-sharc-json")
        turns = samples[0].history
        assert [(t.answer, t.recognized) for t in turns] == [
            ("yes", True),
            ("no", True),
            ("maybe", False),
        ]


class TestSeenTags:
    def test_partition_is_exhaustive_and_disjoint(self, tmp_path):
        path = _write_or_sharc(
            tmp_path,
            {
                "train": [_sample(1, "train", rule="r1")],
                "dev": [_sample(2, "dev", rule="r1"), _sample(3, "dev", rule="r2")],
                "test": [_sample(4, "test", rule="r2")],
            },
            rules=BASE_RULES,
        )
        _, samples = load_dataset(path, "or-sharc-json")
        tags = {s.sample_id: s.seen_tag for s in samples}
        assert tags == {
            "s1": SeenTag.NA,
            "s2": SeenTag.SEEN,
            "s3": SeenTag.UNSEEN,
            "s4": SeenTag.UNSEEN,
        }

    def test_sample_corpus_partition(self):
        _, samples = build_sample_corpus()
        for s in samples:
            if s.split == "train":
                assert s.seen_tag is SeenTag.NA
            else:
                assert s.seen_tag in (SeenTag.SEEN, SeenTag.UNSEEN)
        assert any(s.seen_tag is SeenTag.SEEN for s in samples)
        assert any(s.seen_tag is SeenTag.UNSEEN for s in samples)


class TestNormalizedRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        kb, samples = build_sample_corpus()
        path = save_normalized(kb, samples, tmp_path / "data.jsonl")
        kb2, samples2 = load_dataset(path, "normalized-jsonl")
        assert list(kb.rules) == list(kb2.rules)
        for rid in kb.rules:
            assert kb.rules[rid] == kb2.rules[rid]
        assert samples == samples2

    def test_round_trip_preserves_segmentation(self, tmp_path, kb, samples):
        path = save_normalized(kb, samples, tmp_path / "data.jsonl")
        kb2, _ = load_dataset(path, "normalized-jsonl")
        for rid, rule in kb.rules.items():
            assert kb2.rules[rid].sentences == rule.sentences
            assert kb2.rules[rid].edus == rule.edus

    def test_write_sample_dataset(self, tmp_path):
        path = write_sample_dataset(tmp_path)
        kb, samples = load_dataset(path, "normalized-jsonl")
        assert len(kb.rules) == 14
        assert split_samples(samples, "train")


class TestStatistics:
    def test_average_dialog_turns_arithmetic(self):
        def sample(n_turns, i):
            return DialogSample(
                f"x{i}", "Q?", "", [HistoryTurn("f?", "yes")] * n_turns,
                "r", Decision.YES, None, "train",
            )

        assert average_dialog_turns([sample(1, 0), sample(3, 1)]) == 2.0
        assert average_dialog_turns([sample(0, 0), sample(0, 1)]) == 0.0

    def test_empty_is_an_error(self):
        with pytest.raises(EmptyDatasetError):
            average_dialog_turns([])

    def test_invariant_followup_iff_inquire(self):
        with pytest.raises(RecordParseError):
            DialogSample(
                "bad", "Q?", "", [], "r", Decision.YES, "follow?", "train"
            ).validate()
        with pytest.raises(RecordParseError):
            DialogSample(
                "bad", "Q?", "", [], "r", Decision.INQUIRE, None, "train"
            ).validate()
