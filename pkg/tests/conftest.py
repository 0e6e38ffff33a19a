import pytest

from rulereader.corpus import split_samples
from rulereader.retriever import build_index
from rulereader.sampledata import build_sample_corpus
from rulereader.segmenter import segment_knowledge_base


@pytest.fixture(scope="session")
def corpus_and_samples():
    kb, samples = build_sample_corpus()
    segment_knowledge_base(kb)
    return kb, samples


@pytest.fixture(scope="session")
def kb(corpus_and_samples):
    return corpus_and_samples[0]


@pytest.fixture(scope="session")
def samples(corpus_and_samples):
    return corpus_and_samples[1]


@pytest.fixture(scope="session")
def train_samples(samples):
    return split_samples(samples, "train")


@pytest.fixture(scope="session")
def index(kb):
    return build_index(kb)
