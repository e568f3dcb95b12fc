"""Student training: joint gold + soft-label distillation, baselines, and
the two-stage regime.

Modes:
  mkdm               (1-alpha) * CE  +  alpha * mean per-teacher MSE
  single_student     mkdm with a one-column cache (one teacher)
  gold_only          CE only, no soft heads on the model
  soft_only_pretrain mean MSE only; gold labels may be absent and the
                     golden head receives no gradient

Training is deterministic given the seed: initialization, dropout draws,
and shuffle order all derive from it, so equal configs give bit-identical
checkpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from .checkpoint import load_checkpoint
from .data import batch_iter
from .encoder import EncoderConfig, LayerWeights
from .errors import CheckpointError, ConfigError, DataError
from .heads import combined_loss, golden_loss, soft_forward, soft_loss
from .metrics import EvalReport, accuracy, auc
from .models import StudentModel, named_parameters, predict_scores
from .optim import Adam, Sgd
from .tensor import Tape, backward

MODES = ("mkdm", "single_student", "gold_only", "soft_only_pretrain")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.9
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 5
    seed: int = 0
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mode: str = "mkdm"
    teacher_id: str | None = None
    optimizer: str = "adam"
    init_checkpoint: str | None = None
    layer_map: tuple | None = None
    init_embeddings: bool = True
    freeze_embeddings: bool = False
    no_bias: bool = False
    include_golden: bool | None = None
    include_soft: bool | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0,1], got {self.alpha}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be adam or sgd, got {self.optimizer!r}")

    def resolve_include_golden(self):
        """Aggregation default: drop the golden head only in the pure
        soft-label regimes (alpha=1 or soft-only pretraining)."""
        if self.include_golden is not None:
            return self.include_golden
        if self.mode == "soft_only_pretrain":
            return False
        return not (self.mode in ("mkdm", "single_student") and self.alpha == 1.0)

    def resolve_include_soft(self):
        """Dual of resolve_include_golden: alpha=0 leaves the soft heads
        untrained, so they are dropped from aggregation and the run scores
        exactly like gold-only training."""
        if self.include_soft is not None:
            return self.include_soft
        if self.mode == "gold_only":
            return False
        return not (self.mode in ("mkdm", "single_student") and self.alpha == 0.0)


def paper_profile(**overrides):
    """The published training constants (batch 256, lr 3e-5); hours-scale."""
    base = dict(lr=3e-5, batch_size=256, epochs=5)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class InitReport:
    mapped: list
    unmapped: list
    skipped_source: list

    def to_dict(self):
        return {"mapped": self.mapped, "unmapped": self.unmapped,
                "skipped_source": self.skipped_source}


def init_from_checkpoint(model, path, layer_map=None, include_embeddings=True):
    """Copy shape-matching trunk tensors from a saved model into ``model``.

    layer_map pairs (source_layer, student_layer); default maps the bottom
    student-count layers identically. Head parameters are never mapped and
    keep their fresh initialization.
    """
    tensors, _ = load_checkpoint(path)
    if layer_map is None:
        layer_map = [(i, i) for i in range(model.config.layers)]
    params = named_parameters(model)
    plan = []
    if include_embeddings:
        plan.extend((n, n) for n in ("trunk.tok", "trunk.seg", "trunk.pos"))
    suffixes = [f.name for f in dc_fields(LayerWeights)]
    for src, dst in layer_map:
        if not 0 <= dst < model.config.layers:
            raise ConfigError(f"layer_map target {dst} outside student stack")
        for suffix in suffixes:
            plan.append((f"trunk.layer{src}.{suffix}", f"trunk.layer{dst}.{suffix}"))
    mapped = []
    for src_name, dst_name in plan:
        if src_name not in tensors:
            if src_name.startswith("trunk.layer"):
                raise CheckpointError(
                    f"{path}: layer_map references missing tensor {src_name}"
                )
            continue
        src = tensors[src_name]
        dst = params[dst_name]
        if src.shape != dst.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {dst_name}: "
                f"checkpoint {src.shape} vs model {dst.data.shape}"
            )
        dst.data = src.copy()
        mapped.append(dst_name)
    mapped_set = set(mapped)
    used_sources = {s for s, d in plan if d in mapped_set}
    return InitReport(
        mapped=sorted(mapped),
        unmapped=sorted(set(params) - mapped_set),
        skipped_source=sorted(set(tensors) - used_sources),
    )


def _soft_matrix(train_data, config):
    soft = train_data.get("soft")
    if config.mode == "gold_only":
        return None
    if soft is None:
        raise ConfigError(f"{config.mode} mode requires a soft-label cache")
    if soft.ndim != 2 or soft.shape[1] < 1:
        raise DataError(f"soft-label matrix has bad shape {soft.shape}")
    if config.mode == "single_student" and soft.shape[1] != 1:
        raise ConfigError(
            f"single_student mode needs exactly 1 teacher column, got {soft.shape[1]}"
        )
    if soft.shape[0] != len(train_data["gold"]):
        raise DataError(
            f"soft labels cover {soft.shape[0]} rows, dataset has {len(train_data['gold'])}"
        )
    return soft


def _needs_gold(config):
    return config.mode != "soft_only_pretrain"


def evaluate_student(model, encoded, include_golden=True, include_soft=True,
                     batch_size=64, threshold=0.5):
    scores = predict_scores(model, encoded["token_ids"], encoded["segment_ids"],
                            encoded["mask"], batch_size=batch_size,
                            include_golden=include_golden,
                            include_soft=include_soft)
    gold = encoded["gold"]
    return EvalReport(acc=accuracy(scores, gold, threshold=threshold),
                      auc=auc(scores, gold), n_examples=len(gold),
                      threshold=threshold)


def _epoch_eval(model, val_data, config, record):
    if val_data is None or (val_data["gold"] < 0).any():
        return
    report = evaluate_student(model, val_data,
                              include_golden=config.resolve_include_golden(),
                              include_soft=config.resolve_include_soft())
    record["val_acc"] = report.acc
    record["val_auc"] = report.auc


def _run_loop(model, train_data, val_data, config):
    n = len(train_data["gold"])
    tok, seg, mask = train_data["token_ids"], train_data["segment_ids"], train_data["mask"]
    gold = train_data["gold"]
    soft = train_data.get("soft") if model.n_teachers else None
    params = model.parameters()
    if config.freeze_embeddings:
        frozen = {"trunk.tok", "trunk.seg", "trunk.pos"}
        params = [p for p in params if p.name not in frozen]
    opt_cls = Adam if config.optimizer == "adam" else Sgd
    opt = opt_cls(params, lr=config.lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))
    soft_only = config.mode == "soft_only_pretrain"
    history = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        sums = {"loss": 0.0, "gold": 0.0, "soft": 0.0}
        batches = 0
        for idx in batch_iter(n, config.batch_size, seed=config.seed,
                              shuffle=True, epoch=epoch):
            with Tape() as tape:
                if soft_only:
                    h1 = model.trunk.forward_cls(tok[idx], seg[idx], mask[idx],
                                                 train=True, rng=rng)
                    scores = [soft_forward(model.heads, h1, i)
                              for i in range(model.n_teachers)]
                    l_gold = None
                else:
                    probs, scores = model.forward_heads(tok[idx], seg[idx], mask[idx],
                                                        train=True, rng=rng)
                    l_gold = golden_loss(probs, gold[idx])
                l_soft = [soft_loss(soft[idx, i], scores[i])
                          for i in range(model.n_teachers)] if soft is not None else []
                if soft_only:
                    loss = combined_loss(None, l_soft, 1.0)
                elif config.mode == "gold_only":
                    loss = combined_loss(l_gold, [], 0.0)
                else:
                    loss = combined_loss(l_gold, l_soft, config.alpha)
            opt.zero_grad()
            backward(tape, loss, opt.params)
            opt.step()
            sums["loss"] += loss.item()
            if l_gold is not None:
                sums["gold"] += l_gold.item()
            if l_soft:
                sums["soft"] += float(np.mean([l.item() for l in l_soft]))
            batches += 1
        record = {"epoch": epoch, "train_loss": sums["loss"] / batches}
        if not soft_only:
            record["train_gold_loss"] = sums["gold"] / batches
        if soft is not None:
            record["train_soft_loss"] = sums["soft"] / batches
        _epoch_eval(model, val_data, config, record)
        record["wall_seconds"] = time.perf_counter() - started
        history.append(record)
    return history


def train_student(train_data, val_data, config):
    """Build, optionally warm-start, and train a student.

    Returns (model, history, extras); extras carries the pre-training
    validation metrics and the checkpoint-init report when one was used.
    """
    n = len(train_data["gold"])
    if n == 0:
        raise DataError("cannot train on an empty dataset")
    if _needs_gold(config) and (train_data["gold"] < 0).any():
        raise DataError(f"{config.mode} mode requires gold labels on every example")
    soft = _soft_matrix(train_data, config)
    n_teachers = 0 if soft is None else soft.shape[1]
    model = StudentModel(config.encoder, int(train_data["vocab_size"]),
                         n_teachers, config.seed, no_bias=config.no_bias)
    extras = {}
    if config.init_checkpoint is not None:
        report = init_from_checkpoint(
            model, config.init_checkpoint,
            layer_map=list(config.layer_map) if config.layer_map else None,
            include_embeddings=config.init_embeddings,
        )
        extras["init_report"] = report.to_dict()
    if val_data is not None and not (val_data["gold"] < 0).any():
        initial = evaluate_student(model, val_data,
                                   include_golden=config.resolve_include_golden(),
                                   include_soft=config.resolve_include_soft())
        extras["init_val_acc"] = initial.acc
        extras["init_val_auc"] = initial.auc
    history = _run_loop(model, train_data, val_data, config)
    return model, history, extras


def finetune_stage2(train_data, val_data, config, init_checkpoint):
    """Stage 2 of two-stage training: resume the stage-1 student wholesale
    and run the ordinary joint loop on labeled data."""
    from .checkpoint import load_model

    stage1, ckpt_config = load_model(init_checkpoint)
    if ckpt_config.get("kind") != "student":
        raise ConfigError(
            f"{init_checkpoint} holds a {ckpt_config.get('kind')!r} model, need a student"
        )
    want = {"layers": config.encoder.layers, "hidden": config.encoder.hidden,
            "heads": config.encoder.heads, "ffn": config.encoder.ffn,
            "max_len": config.encoder.max_len}
    have = {k: ckpt_config["encoder"][k] for k in want}
    differing = [f"{k}: checkpoint {have[k]} vs config {want[k]}"
                 for k in want if have[k] != want[k]]
    if differing:
        raise ConfigError("stage-1 checkpoint disagrees with student config: "
                          + "; ".join(differing))
    soft = _soft_matrix(train_data, config)
    if soft is not None and stage1.n_teachers != soft.shape[1]:
        raise ConfigError(
            f"stage-1 student has {stage1.n_teachers} soft heads, "
            f"cache has {soft.shape[1]} teachers"
        )
    if (train_data["gold"] < 0).any():
        raise DataError("stage-2 fine-tuning requires gold labels")
    extras = {}
    if val_data is not None and not (val_data["gold"] < 0).any():
        initial = evaluate_student(stage1, val_data,
                                   include_golden=config.resolve_include_golden(),
                                   include_soft=config.resolve_include_soft())
        extras["init_val_acc"] = initial.acc
        extras["init_val_auc"] = initial.auc
    history = _run_loop(stage1, train_data, val_data, config)
    return stage1, history, extras
