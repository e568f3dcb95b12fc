"""Synthetic QA-relevance data, TSV persistence, batching, and splits.

The synthetic task: each topic owns a disjoint set of keyword tokens. A
question mentions a few keywords from its topic; a relevant passage repeats
at least ``k`` of them, an irrelevant passage comes from another topic and
repeats fewer than ``k`` (the planted "distractors"). Question filler words
never occur in passages, so raw token overlap between question and passage
counts exactly the shared keywords. Labels can be flipped with probability
``noise`` to give teachers something to disagree about.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError, DataError
from .text import assemble_pair, tokenize

LABELED_HEADER = "id\tquestion\tpassage\tlabel"
UNLABELED_HEADER = "id\tquestion\tpassage"


@dataclass
class Example:
    id: str
    question: str
    passage: str
    gold: int | None = None
    soft: np.ndarray | None = None


@dataclass(frozen=True)
class SyntheticSpec:
    vocab_size: int = 2000
    topics: int = 20
    question_len: tuple = (4, 8)
    passage_len: tuple = (20, 40)
    keywords_per_topic: int = 8
    overlap_k: int = 2
    distractor_overlap: int = 1
    noise: float = 0.05
    size: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError(f"size must be >= 1, got {self.size}")
        if self.topics < 2:
            raise ConfigError("need at least 2 topics to build negatives")
        if not 0.0 <= self.noise < 0.5:
            raise ConfigError(f"noise must be in [0, 0.5), got {self.noise}")
        if self.overlap_k < 1:
            raise ConfigError(f"overlap_k must be >= 1, got {self.overlap_k}")
        if self.overlap_k > self.question_len[0]:
            raise ConfigError(
                f"overlap_k ({self.overlap_k}) cannot exceed the minimum "
                f"question length ({self.question_len[0]})"
            )
        if self.distractor_overlap >= self.overlap_k:
            raise ConfigError(
                f"distractor_overlap ({self.distractor_overlap}) must stay below "
                f"overlap_k ({self.overlap_k}) or negatives become positives"
            )
        if self.keywords_per_topic < self.overlap_k + 2:
            raise ConfigError(
                f"keywords_per_topic ({self.keywords_per_topic}) too small for "
                f"overlap_k ({self.overlap_k})"
            )
        for name, (lo, hi) in (("question_len", self.question_len),
                               ("passage_len", self.passage_len)):
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} range ({lo}, {hi}) is invalid")
        n_keywords = self.topics * self.keywords_per_topic
        if self.vocab_size < n_keywords + 20:
            raise ConfigError(
                f"vocab_size {self.vocab_size} cannot hold {n_keywords} keywords "
                f"plus filler pools"
            )


def generate_synthetic(spec):
    """Deterministic balanced dataset (positives = ceil(size/2) before noise)."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5D47A]))
    keywords = [
        [f"kw{t}x{j}" for j in range(spec.keywords_per_topic)]
        for t in range(spec.topics)
    ]
    n_filler = spec.vocab_size - spec.topics * spec.keywords_per_topic
    n_qfill = max(n_filler // 3, 5)
    q_pool = [f"fq{i}" for i in range(n_qfill)]
    p_pool = [f"fp{i}" for i in range(n_filler - n_qfill)]

    def pick(pool, n, replace=True):
        if n <= 0:
            return []
        idx = rng.choice(len(pool), size=n, replace=replace)
        return [pool[i] for i in idx]

    examples = []
    for i in range(spec.size):
        positive = i % 2 == 0
        topic = int(rng.integers(spec.topics))
        q_len = int(rng.integers(spec.question_len[0], spec.question_len[1] + 1))
        n_qkw = min(q_len, spec.overlap_k + int(rng.integers(0, 3)))
        q_kws = pick(keywords[topic], n_qkw, replace=False)
        q_words = q_kws + pick(q_pool, q_len - n_qkw)
        q_words = [q_words[j] for j in rng.permutation(len(q_words))]

        p_len = int(rng.integers(spec.passage_len[0], spec.passage_len[1] + 1))
        if positive:
            n_shared = int(rng.integers(spec.overlap_k, n_qkw + 1))
            shared = pick(q_kws, n_shared, replace=False)
            rest = [w for w in keywords[topic] if w not in q_kws]
            extra = pick(rest, int(rng.integers(0, 3)), replace=False)
        else:
            other = int((topic + 1 + rng.integers(spec.topics - 1)) % spec.topics)
            shared = pick(q_kws, min(spec.distractor_overlap, n_qkw), replace=False)
            extra = pick(keywords[other], int(rng.integers(spec.overlap_k, spec.overlap_k + 3)),
                         replace=False)
        body = shared + extra
        p_words = body + pick(p_pool, max(p_len - len(body), 0))
        p_words = [p_words[j] for j in rng.permutation(len(p_words))]

        gold = 1 if positive else 0
        if spec.noise > 0.0 and rng.random() < spec.noise:
            gold = 1 - gold
        examples.append(Example(
            id=f"ex{i:06d}",
            question=" ".join(q_words),
            passage=" ".join(p_words),
            gold=gold,
        ))
    return examples


def overlap_count(example):
    """Distinct tokens shared by question and passage (the label oracle at
    noise 0: overlap >= k iff gold == 1)."""
    return len(set(example.question.split()) & set(example.passage.split()))


def save_tsv(examples, path):
    labeled = examples[0].gold is not None if examples else True
    with open(path, "w", encoding="utf-8") as f:
        f.write((LABELED_HEADER if labeled else UNLABELED_HEADER) + "\n")
        for ex in examples:
            for field_name, value in (("id", ex.id), ("question", ex.question),
                                      ("passage", ex.passage)):
                if "\t" in value or "\n" in value:
                    raise DataError(f"{field_name} of {ex.id!r} contains a tab or newline")
            if labeled:
                if ex.gold is None:
                    raise DataError(f"example {ex.id} lacks a label in a labeled dataset")
                f.write(f"{ex.id}\t{ex.question}\t{ex.passage}\t{ex.gold}\n")
            else:
                if ex.gold is not None:
                    raise DataError(f"example {ex.id} has a label in an unlabeled dataset")
                f.write(f"{ex.id}\t{ex.question}\t{ex.passage}\n")


def load_tsv(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header == LABELED_HEADER:
            labeled = True
        elif header == UNLABELED_HEADER:
            labeled = False
        else:
            raise DataError(f"{path}: unrecognized header {header!r}")
        n_cols = 4 if labeled else 3
        examples = []
        seen = set()
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != n_cols:
                raise DataError(
                    f"{path}:{lineno}: expected {n_cols} columns, got {len(cols)}"
                )
            ex_id = cols[0]
            if ex_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate example id {ex_id!r}")
            seen.add(ex_id)
            gold = None
            if labeled:
                if cols[3] not in ("0", "1"):
                    raise DataError(
                        f"{path}:{lineno}: label must be 0 or 1, got {cols[3]!r}"
                    )
                gold = int(cols[3])
            examples.append(Example(id=ex_id, question=cols[1], passage=cols[2], gold=gold))
    return examples


def strip_labels(examples):
    return [replace(ex, gold=None, soft=None) for ex in examples]


def attach_soft_labels(examples, cache):
    """Join teacher scores onto examples by id; order-independent."""
    missing = [ex.id for ex in examples if ex.id not in cache.rows]
    if missing:
        raise DataError(f"soft-label cache is missing ids: {missing[:5]}"
                        + ("..." if len(missing) > 5 else ""))
    extra = set(cache.rows) - {ex.id for ex in examples}
    if extra:
        raise DataError(f"soft-label cache has unknown ids: {sorted(extra)[:5]}"
                        + ("..." if len(extra) > 5 else ""))
    return [replace(ex, soft=np.asarray(cache.rows[ex.id], dtype=np.float32))
            for ex in examples]


def split_dataset(examples, fractions=(0.8, 0.1, 0.1), seed=0):
    """Disjoint, exhaustive split by shuffled position."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {fractions}")
    n = len(examples)
    order = np.random.default_rng(np.random.SeedSequence([seed, 0x59117])).permutation(n)
    cuts = []
    start = 0
    for frac in fractions[:-1]:
        count = int(round(n * frac))
        cuts.append(order[start:start + count])
        start += count
    cuts.append(order[start:])
    return tuple([examples[i] for i in part] for part in cuts)


def batch_iter(n_examples, batch_size, seed=0, shuffle=True, epoch=0):
    """Index batches covering every example once; the permutation is a pure
    function of (seed, epoch)."""
    if n_examples < 1:
        raise DataError("cannot batch an empty dataset")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        order = np.random.default_rng(
            np.random.SeedSequence([seed, epoch])
        ).permutation(n_examples)
    else:
        order = np.arange(n_examples)
    for start in range(0, n_examples, batch_size):
        yield order[start:start + batch_size]


def encode_dataset(examples, vocab, max_len=64, trailing_sep=False):
    """Tokenize and assemble every example into stacked arrays.

    Returns a dict with token/segment id arrays [N,L], float mask [N,L],
    gold labels [N] (-1 where unlabeled), soft score matrix [N,n] or None,
    and the example ids in order.
    """
    toks, segs, masks, golds = [], [], [], []
    for ex in examples:
        pair = assemble_pair(tokenize(ex.question, vocab), tokenize(ex.passage, vocab),
                             vocab, max_len=max_len, trailing_sep=trailing_sep)
        toks.append(pair.token_ids)
        segs.append(pair.segment_ids)
        masks.append(pair.attention_mask)
        golds.append(-1 if ex.gold is None else ex.gold)
    soft = None
    if examples and examples[0].soft is not None:
        soft = np.stack([ex.soft for ex in examples]).astype(np.float32)
    return {
        "token_ids": np.stack(toks),
        "segment_ids": np.stack(segs),
        "mask": np.stack(masks),
        "gold": np.asarray(golds, dtype=np.int64),
        "soft": soft,
        "ids": [ex.id for ex in examples],
        "vocab_size": vocab.size,
    }
