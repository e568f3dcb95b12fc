"""Full models: embedding + encoder trunk, student and teacher assemblies.

Parameter names are stable ("trunk.layer2.wq", "heads.soft0.w", ...) and
each draws from its own (seed, name) stream, so two models sharing a seed
share trunk initializations bit-for-bit even when their head counts differ.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, LayerWeights, encode, extract_cls
from .errors import ContractError
from .heads import PredictionBundle, StudentHeads, aggregate_prediction, golden_forward, soft_forward
from .params import normal_param, zeros_param
from .tensor import Tensor


class TransformerTrunk:
    """Token/segment/position tables plus the encoder stack."""

    def __init__(self, config, vocab_size, seed, prefix="trunk"):
        self.config = config
        self.vocab_size = vocab_size
        self.token = normal_param(f"{prefix}.tok", (vocab_size, config.hidden), seed)
        self.segment = normal_param(f"{prefix}.seg", (2, config.hidden), seed)
        self.position = normal_param(f"{prefix}.pos", (config.max_len, config.hidden), seed)
        self.layers = [
            LayerWeights.create(f"{prefix}.layer{i}", config, seed)
            for i in range(config.layers)
        ]

    def parameters(self):
        out = [self.token, self.segment, self.position]
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, token_ids, segment_ids, mask, train=False, rng=None):
        """Contextual states [B,L,h] for integer id arrays [B,L]."""
        token_ids = np.asarray(token_ids)
        if token_ids.ndim != 2:
            raise ContractError(f"expected [batch, length] ids, got shape {token_ids.shape}")
        length = token_ids.shape[1]
        if length > self.config.max_len:
            raise ContractError(
                f"sequence length {length} exceeds max_len {self.config.max_len}"
            )
        tok = T.embedding_lookup(self.token, token_ids)
        seg = T.embedding_lookup(self.segment, np.asarray(segment_ids))
        pos = T.embedding_lookup(self.position, np.arange(length))
        h_e = T.add(T.add(tok, seg), pos)
        return encode(h_e, self.layers, mask, self.config, train=train, rng=rng)

    def forward_cls(self, token_ids, segment_ids, mask, train=False, rng=None):
        return extract_cls(self.forward(token_ids, segment_ids, mask, train=train, rng=rng))


class StudentModel:
    """Shallow trunk with a golden head and one soft head per teacher."""

    def __init__(self, config, vocab_size, n_teachers, seed, no_bias=False):
        self.config = config
        self.n_teachers = n_teachers
        self.seed = seed
        self.trunk = TransformerTrunk(config, vocab_size, seed)
        self.heads = StudentHeads.create(config.hidden, n_teachers, seed, no_bias=no_bias)

    def parameters(self):
        return self.trunk.parameters() + self.heads.parameters()

    def forward_heads(self, token_ids, segment_ids, mask, train=False, rng=None):
        """Golden probabilities [B,2] and per-teacher scores, taped."""
        h1 = self.trunk.forward_cls(token_ids, segment_ids, mask, train=train, rng=rng)
        probs = golden_forward(self.heads, h1)
        scores = [soft_forward(self.heads, h1, i) for i in range(self.n_teachers)]
        return probs, scores

    def predict(self, token_ids, segment_ids, mask, include_golden=True,
                include_soft=True):
        """Eval-mode PredictionBundle over one batch (no tape, no dropout).

        include_soft=False aggregates the golden head alone; it is the dual
        of include_golden=False and covers students whose soft heads were
        never trained (alpha=0).
        """
        if not include_golden and not include_soft:
            raise ContractError("nothing to aggregate: golden and soft heads both excluded")
        probs, scores = self.forward_heads(token_ids, segment_ids, mask, train=False)
        golden = probs.data[:, 1]
        teachers = np.stack([s.data for s in scores]) if scores else np.zeros((0, len(golden)), dtype=np.float32)
        agg = aggregate_prediction(golden, list(teachers) if include_soft else [],
                                   include_golden=include_golden)
        return PredictionBundle(golden_prob=golden, teacher_scores=teachers, aggregate=np.asarray(agg))


class TeacherModel:
    """Deeper trunk with a single sigmoid relevance head."""

    def __init__(self, config, vocab_size, seed):
        self.config = config
        self.seed = seed
        self.trunk = TransformerTrunk(config, vocab_size, seed)
        self.head_w = normal_param("head.w", (config.hidden, 1), seed)
        self.head_b = zeros_param("head.b", (1,))

    def parameters(self):
        return self.trunk.parameters() + [self.head_w, self.head_b]

    def score(self, token_ids, segment_ids, mask, train=False, rng=None):
        """Relevance scores [B] in [0,1], taped."""
        h1 = self.trunk.forward_cls(token_ids, segment_ids, mask, train=train, rng=rng)
        z = T.add(T.matmul(h1, self.head_w), self.head_b)
        return T.sigmoid(T.reshape(z, (z.shape[0],)))

    def predict(self, token_ids, segment_ids, mask):
        return self.score(token_ids, segment_ids, mask, train=False).data


def named_parameters(model):
    """name -> Parameter map; duplicate names are a programming error."""
    out = {}
    for p in model.parameters():
        if p.name in out:
            raise ContractError(f"duplicate parameter name {p.name}")
        out[p.name] = p
    return out


def predict_scores(model, token_ids, segment_ids, mask, batch_size=64,
                   include_golden=True, include_soft=True):
    """Aggregate relevance scores for a whole dataset, in eval batches."""
    outs = []
    for start in range(0, len(token_ids), batch_size):
        sl = slice(start, start + batch_size)
        if isinstance(model, TeacherModel):
            outs.append(model.predict(token_ids[sl], segment_ids[sl], mask[sl]))
        else:
            bundle = model.predict(token_ids[sl], segment_ids[sl], mask[sl],
                                   include_golden=include_golden,
                                   include_soft=include_soft)
            outs.append(bundle.aggregate)
    return np.concatenate(outs)
