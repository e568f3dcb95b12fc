import numpy as np
import pytest

from mkdm.data import (
    SyntheticSpec,
    encode_dataset,
    generate_synthetic,
    split_dataset,
)
from mkdm.encoder import EncoderConfig
from mkdm.text import Vocabulary


@pytest.fixture
def tiny_config():
    return EncoderConfig(layers=1, hidden=16, heads=2, ffn=32, dropout=0.0, max_len=16)


@pytest.fixture
def sample_batch():
    """Two encoded pairs with differing amounts of padding."""
    ids = np.array([[2, 5, 6, 3, 7, 8, 0, 0],
                    [2, 9, 3, 10, 11, 12, 13, 0]], dtype=np.int32)
    segs = np.array([[0, 0, 0, 0, 1, 1, 0, 0],
                     [0, 0, 0, 1, 1, 1, 1, 0]], dtype=np.int32)
    mask = np.array([[1, 1, 1, 1, 1, 1, 0, 0],
                     [1, 1, 1, 1, 1, 1, 1, 0]], dtype=np.float32)
    return ids, segs, mask


@pytest.fixture(scope="session")
def small_corpus():
    """A few hundred synthetic pairs plus a vocabulary built from them."""
    spec = SyntheticSpec(size=300, vocab_size=300, topics=6,
                         question_len=(4, 6), passage_len=(8, 14),
                         noise=0.0, seed=42)
    examples = generate_synthetic(spec)
    corpus = [e.question for e in examples] + [e.passage for e in examples]
    vocab = Vocabulary.build(corpus, target_size=400)
    return examples, vocab


@pytest.fixture(scope="session")
def small_splits(small_corpus):
    examples, vocab = small_corpus
    train, val, test = split_dataset(examples, seed=0)
    return train, val, test, vocab


@pytest.fixture(scope="session")
def encoded_splits(small_splits):
    """Train/val splits of the small corpus, tokenized and stacked."""
    train, val, _, vocab = small_splits
    return (encode_dataset(train, vocab, max_len=32),
            encode_dataset(val, vocab, max_len=32))
