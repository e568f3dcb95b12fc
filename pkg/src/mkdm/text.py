"""Vocabulary, word-piece tokenization, and input assembly.

A question/passage pair becomes one sequence ``[CLS] q... [SEP] p...``
padded to a fixed length, with segment ids marking the passage region and
an attention mask marking real tokens. Embeddings are the sum of token,
segment, and position rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError

PAD, UNK, CLS, SEP = 0, 1, 2, 3
RESERVED = ("[PAD]", "[UNK]", "[CLS]", "[SEP]")


class Vocabulary:
    """Bijective piece <-> id map with fixed reserved ids 0..3.

    Continuation pieces carry a ``##`` prefix. Ids are dense: the id is the
    piece's line number in the saved file.
    """

    def __init__(self, pieces):
        pieces = list(pieces)
        if tuple(pieces[:4]) != RESERVED:
            raise DataError(
                f"vocabulary must start with {RESERVED}, got {pieces[:4]}"
            )
        self.id_to_piece = pieces
        self.piece_to_id = {p: i for i, p in enumerate(pieces)}
        if len(self.piece_to_id) != len(pieces):
            dupes = sorted({p for p in pieces if pieces.count(p) > 1})
            raise DataError(f"duplicate vocabulary pieces: {dupes}")

    @property
    def size(self):
        return len(self.id_to_piece)

    def __contains__(self, piece):
        return piece in self.piece_to_id

    def id(self, piece):
        return self.piece_to_id[piece]

    @classmethod
    def build(cls, corpus, target_size=2048):
        """Build from an iterable of text lines.

        Whole words ranked by descending frequency (ties lexicographic),
        then single-character fallback pieces (bare and ``##`` forms) so
        unseen inflections can still be segmented. Everything is capped at
        ``target_size``; an empty corpus yields just the reserved tokens.
        """
        if target_size < len(RESERVED):
            raise ContractError(
                f"target_size must be at least {len(RESERVED)}, got {target_size}"
            )
        word_freq: dict[str, int] = {}
        char_freq: dict[str, int] = {}
        for line in corpus:
            for word in line.lower().split():
                word_freq[word] = word_freq.get(word, 0) + 1
                for ch in word:
                    char_freq[ch] = char_freq.get(ch, 0) + 1
        pieces = list(RESERVED)
        seen = set(pieces)
        for word, _ in sorted(word_freq.items(), key=lambda kv: (-kv[1], kv[0])):
            if len(pieces) >= target_size:
                break
            if word not in seen:
                pieces.append(word)
                seen.add(word)
        for ch, _ in sorted(char_freq.items(), key=lambda kv: (-kv[1], kv[0])):
            for form in (ch, "##" + ch):
                if len(pieces) >= target_size:
                    break
                if form not in seen:
                    pieces.append(form)
                    seen.add(form)
        return cls(pieces)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for piece in self.id_to_piece:
                f.write(piece + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            pieces = [line.rstrip("\n") for line in f]
        while pieces and pieces[-1] == "":
            pieces.pop()
        if len(pieces) < len(RESERVED):
            raise DataError(f"vocabulary file {path} is too short to be valid")
        return cls(pieces)


def tokenize(text, vocab):
    """Greedy longest-match-first word-piece segmentation.

    Each whitespace word is lowercased and consumed left to right, always
    taking the longest vocabulary piece that matches; continuations must
    exist in their ``##`` form. A word with no valid segmentation becomes a
    single [UNK].
    """
    out = []
    for word in text.lower().split():
        pieces = []
        start = 0
        while start < len(word):
            end = len(word)
            found = None
            while end > start:
                sub = word[start:end]
                if start > 0:
                    sub = "##" + sub
                if sub in vocab:
                    found = sub
                    break
                end -= 1
            if found is None:
                pieces = ["[UNK]"]
                break
            pieces.append(found)
            start = end
        out.extend(pieces)
    return out


def decode(pieces):
    """Inverse of tokenize for in-vocabulary text: rejoin pieces into words."""
    words = []
    for piece in pieces:
        if piece.startswith("##") and words:
            words[-1] += piece[2:]
        else:
            words.append(piece)
    return " ".join(words)


@dataclass
class EncodedPair:
    """One assembled input, padded to a fixed length.

    All four arrays share length max_len; attention_mask is 1.0 over the
    real tokens and 0.0 over padding.
    """

    token_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray

    @property
    def length(self):
        return int(self.attention_mask.sum())


def assemble_pair(q_pieces, p_pieces, vocab, max_len=64, trailing_sep=False):
    """Lay out [CLS] question [SEP] passage (optionally + [SEP]) and pad.

    When the pair is too long, pieces are dropped one at a time from
    whichever side is currently longer; ties trim the passage, so the
    question survives intact.
    """
    if max_len < 4:
        raise ContractError(f"max_len must be at least 4, got {max_len}")
    if not q_pieces and not p_pieces:
        raise ContractError("question and passage cannot both be empty")
    q = list(q_pieces)
    p = list(p_pieces)
    overhead = 3 if trailing_sep else 2
    while len(q) + len(p) + overhead > max_len:
        if len(q) > len(p):
            q.pop()
        else:
            p.pop()
    ids = [CLS] + [vocab.piece_to_id.get(x, UNK) for x in q] + [SEP]
    segs = [0] * len(ids)
    ids += [vocab.piece_to_id.get(x, UNK) for x in p]
    segs += [1] * len(p)
    if trailing_sep:
        ids.append(SEP)
        segs.append(1)
    n_real = len(ids)
    pad = max_len - n_real
    ids += [PAD] * pad
    segs += [0] * pad
    mask = [1.0] * n_real + [0.0] * pad
    return EncodedPair(
        token_ids=np.asarray(ids, dtype=np.int32),
        segment_ids=np.asarray(segs, dtype=np.int32),
        position_ids=np.arange(max_len, dtype=np.int32),
        attention_mask=np.asarray(mask, dtype=np.float32),
    )


@dataclass
class EmbeddingTables:
    """Token [V,h], segment [2,h], and position [max_len,h] embedding rows."""

    token: np.ndarray
    segment: np.ndarray
    position: np.ndarray

    def validate(self, vocab_size, max_len):
        if self.token.shape[0] != vocab_size:
            raise ContractError(
                f"token table has {self.token.shape[0]} rows, vocabulary has {vocab_size}"
            )
        if self.segment.shape[0] != 2:
            raise ContractError(
                f"segment table must have 2 rows, got {self.segment.shape[0]}"
            )
        if self.position.shape[0] != max_len:
            raise ContractError(
                f"position table has {self.position.shape[0]} rows, max_len is {max_len}"
            )


def embed_input(pair, tables):
    """Sum token, segment, and position rows: H_e[t] = tok + seg + pos.

    Padded positions are embedded like any other row; attention masking
    neutralizes them downstream.
    """
    for ids, table, what in (
        (pair.token_ids, tables.token, "token"),
        (pair.segment_ids, tables.segment, "segment"),
        (pair.position_ids, tables.position, "position"),
    ):
        if ids.min() < 0 or ids.max() >= table.shape[0]:
            raise ContractError(
                f"{what} id out of range [0, {table.shape[0]})"
            )
    return (
        tables.token[pair.token_ids]
        + tables.segment[pair.segment_ids]
        + tables.position[pair.position_ids]
    )


def encode_batch(pairs):
    """Stack EncodedPairs into [B,L] id arrays and a [B,L] float mask."""
    return (
        np.stack([p.token_ids for p in pairs]),
        np.stack([p.segment_ids for p in pairs]),
        np.stack([p.attention_mask for p in pairs]),
    )
