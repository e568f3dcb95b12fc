"""Teacher zoo: train deeper models on gold labels, cache their scores.

Teachers are plain relevance models (trunk + sigmoid head) trained with
binary cross-entropy. Every teacher scores the whole dataset once and the
scores land in a TSV cache keyed by example id; students train against the
cache, never against live teachers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import batch_iter
from .encoder import EncoderConfig
from .errors import ConfigError, DataError, VocabMismatchError
from .metrics import accuracy, auc
from .models import TeacherModel, predict_scores
from .optim import Adam
from .tensor import Tape, Tensor, backward


@dataclass(frozen=True)
class TeacherConfig:
    id: str
    encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(layers=6))
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 3

    def __post_init__(self):
        if not self.id:
            raise ConfigError("teacher id must be a non-empty string")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


def default_zoo(layers=6, hidden=128, heads=4, ffn=512, max_len=64, epochs=3):
    """Three teachers differing in seed, dropout, and learning rate."""
    settings = [(101, 0.0, 1.0e-3), (202, 0.1, 7.0e-4), (303, 0.2, 1.3e-3)]
    return [
        TeacherConfig(
            id=f"t{i}",
            encoder=EncoderConfig(layers=layers, hidden=hidden, heads=heads,
                                  ffn=ffn, dropout=dropout, max_len=max_len),
            seed=seed, lr=lr, epochs=epochs,
        )
        for i, (seed, dropout, lr) in enumerate(settings)
    ]


def validate_zoo(configs, student_layers=None):
    ids = [c.id for c in configs]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigError(f"duplicate teacher ids in zoo: {dupes}")
    if student_layers is not None:
        shallow = [c.id for c in configs if c.encoder.layers < student_layers]
        if shallow:
            raise ConfigError(
                f"teachers {shallow} have fewer layers than the student ({student_layers})"
            )
    return list(configs)


def binary_cross_entropy(scores, labels):
    """Mean BCE of sigmoid scores against {0,1} labels, clamped at 1e-12."""
    y = np.asarray(labels, dtype=scores.dtype)
    pos = T.mul(Tensor(y, dtype=scores.dtype), T.log(T.clamp_min(scores, 1e-12)))
    anti = T.sub(Tensor(np.ones_like(y), dtype=scores.dtype), scores)
    neg = T.mul(Tensor(1.0 - y, dtype=scores.dtype), T.log(T.clamp_min(anti, 1e-12)))
    return T.scale(T.mean_all(T.add(pos, neg)), -1.0)


def _check_scored(encoded, model):
    if encoded.get("vocab_size") not in (None, model.trunk.vocab_size):
        raise VocabMismatchError(
            f"model was built for a {model.trunk.vocab_size}-piece vocabulary, "
            f"data was encoded with {encoded['vocab_size']} pieces"
        )


def train_teacher(train_data, val_data, config):
    """Fit one teacher; returns (model, per-epoch history).

    Deterministic given the config seed: init, dropout, and shuffle order
    all derive from it.
    """
    n = len(train_data["gold"])
    if n == 0:
        raise DataError("cannot train a teacher on an empty dataset")
    if (train_data["gold"] < 0).any():
        raise DataError("teacher training requires gold labels on every example")
    model = TeacherModel(config.encoder, int(train_data["vocab_size"]), config.seed)
    opt = Adam(model.parameters(), lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xD120]))
    tok, seg, mask = train_data["token_ids"], train_data["segment_ids"], train_data["mask"]
    gold = train_data["gold"]
    history = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        losses = []
        for idx in batch_iter(n, config.batch_size, seed=config.seed,
                              shuffle=True, epoch=epoch):
            with Tape() as tape:
                scores = model.score(tok[idx], seg[idx], mask[idx], train=True, rng=rng)
                loss = binary_cross_entropy(scores, gold[idx])
            opt.zero_grad()
            backward(tape, loss, opt.params)
            opt.step()
            losses.append(loss.item())
        record = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                  "wall_seconds": time.perf_counter() - started}
        if val_data is not None:
            val_scores = predict_soft_labels(model, val_data)
            record["val_acc"] = accuracy(val_scores, val_data["gold"])
            record["val_auc"] = auc(val_scores, val_data["gold"])
        history.append(record)
    return model, history


def predict_soft_labels(model, encoded, batch_size=64):
    """Eval-mode scores aligned with the dataset order."""
    _check_scored(encoded, model)
    return predict_scores(model, encoded["token_ids"], encoded["segment_ids"],
                          encoded["mask"], batch_size=batch_size)


@dataclass
class SoftLabelCache:
    """Ordered teacher ids plus one score vector per example id."""

    teacher_ids: list
    rows: dict

    def validate(self, example_ids=None):
        n = len(self.teacher_ids)
        if len(set(self.teacher_ids)) != n:
            raise DataError(f"cache has duplicate teacher ids: {self.teacher_ids}")
        for ex_id, scores in self.rows.items():
            if len(scores) != n:
                raise DataError(
                    f"cache row {ex_id!r} has {len(scores)} scores for {n} teachers"
                )
            if np.min(scores) < 0.0 or np.max(scores) > 1.0:
                raise DataError(f"cache row {ex_id!r} has scores outside [0,1]")
        if example_ids is not None:
            wanted = set(example_ids)
            have = set(self.rows)
            if wanted != have:
                missing = sorted(wanted - have)[:5]
                extra = sorted(have - wanted)[:5]
                raise DataError(
                    f"cache/dataset id mismatch (missing {missing}, extra {extra})"
                )
        return self

    def column(self, teacher_id):
        """A single-teacher view of this cache."""
        if teacher_id not in self.teacher_ids:
            raise ConfigError(
                f"teacher {teacher_id!r} not in cache (has {self.teacher_ids})"
            )
        j = self.teacher_ids.index(teacher_id)
        return SoftLabelCache(
            teacher_ids=[teacher_id],
            rows={ex_id: scores[j:j + 1] for ex_id, scores in self.rows.items()},
        )


def build_cache(teachers, encoded):
    """Score the dataset with every (id, model) pair, column order preserved."""
    if not teachers:
        raise ConfigError("build_cache needs at least one teacher")
    ids = [tid for tid, _ in teachers]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate teacher ids: {ids}")
    columns = [predict_soft_labels(model, encoded) for _, model in teachers]
    matrix = np.stack(columns, axis=1).astype(np.float32)
    np.clip(matrix, 0.0, 1.0, out=matrix)
    rows = {ex_id: matrix[i] for i, ex_id in enumerate(encoded["ids"])}
    return SoftLabelCache(teacher_ids=ids, rows=rows).validate(encoded["ids"])


def save_cache(cache, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("example_id\t" + "\t".join(cache.teacher_ids) + "\n")
        for ex_id in sorted(cache.rows):
            scores = "\t".join(f"{s:.9g}" for s in cache.rows[ex_id])
            f.write(f"{ex_id}\t{scores}\n")


def load_cache(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("\t")
        if len(header) < 2 or header[0] != "example_id":
            raise DataError(f"{path}: malformed cache header {header!r}")
        teacher_ids = header[1:]
        rows = {}
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(cols)}"
                )
            if cols[0] in rows:
                raise DataError(f"{path}:{lineno}: duplicate example id {cols[0]!r}")
            try:
                scores = np.asarray([float(c) for c in cols[1:]], dtype=np.float32)
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: bad score value: {e}") from e
            rows[cols[0]] = scores
    return SoftLabelCache(teacher_ids=teacher_ids, rows=rows).validate()
