"""Binary checkpoint container.

Layout (all integers little-endian):

    magic b"MKDM" | u32 version=1 | u32 tensor_count
    per tensor: u16 name_len | name UTF-8 | u8 rank | rank * u64 dims
                | u8 dtype (0 = float32) | raw little-endian payload
    u32 config_len | config JSON UTF-8

The config echo stores what is needed to rebuild the model shell (kind,
encoder dimensions, vocabulary size, head count) plus whatever the caller
adds. Round trips are bit-exact; malformed files fail with an error that
says which way they are malformed.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .encoder import EncoderConfig
from .errors import (
    BadMagicError,
    CheckpointError,
    ContractError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)

MAGIC = b"MKDM"
VERSION = 1
DTYPE_F32 = 0


def _read(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedCheckpointError(
            f"file ended while reading {what} (wanted {n} bytes, got {len(buf)})"
        )
    return buf


def save_checkpoint(tensors, config, path):
    """Write named float32 arrays and a JSON-serializable config echo."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name in sorted(tensors):
        # ascontiguousarray would promote rank-0 to (1,) and break the
        # round trip, so only copy when the layout actually needs it
        arr = np.asarray(tensors[name])
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.dtype != np.float32:
            raise ContractError(f"checkpoint tensors must be float32, {name} is {arr.dtype}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ContractError(f"tensor name too long: {name[:40]}...")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            buf.write(struct.pack("<Q", dim))
        buf.write(struct.pack("<B", DTYPE_F32))
        buf.write(arr.astype("<f4", copy=False).tobytes())
    echo = json.dumps(config, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(echo)))
    buf.write(echo)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Read back (tensors: dict[str, float32 array], config: dict)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if len(magic) < 4 or magic != MAGIC:
            raise BadMagicError(
                f"{path}: expected magic {MAGIC!r}, got {magic!r}"
            )
        version, count = struct.unpack("<II", _read(f, 8, "header"))
        if version != VERSION:
            raise UnsupportedVersionError(
                f"{path}: format version {version}, this reader handles {VERSION}"
            )
        tensors = {}
        for i in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2, f"tensor {i} name length"))
            name = _read(f, name_len, f"tensor {i} name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read(f, 1, f"{name} rank"))
            dims = struct.unpack(
                f"<{rank}Q", _read(f, 8 * rank, f"{name} dims")
            ) if rank else ()
            (dtype_code,) = struct.unpack("<B", _read(f, 1, f"{name} dtype"))
            if dtype_code != DTYPE_F32:
                raise CheckpointError(f"{path}: unknown dtype code {dtype_code} for {name}")
            n_elems = 1
            for d in dims:
                n_elems *= d
            payload = _read(f, 4 * n_elems, f"{name} payload")
            if name in tensors:
                raise CheckpointError(f"{path}: duplicate tensor name {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        (cfg_len,) = struct.unpack("<I", _read(f, 4, "config length"))
        try:
            config = json.loads(_read(f, cfg_len, "config echo").decode("utf-8"))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: config echo is not valid JSON: {e}") from e
        trailing = f.read(1)
        if trailing:
            raise CheckpointError(f"{path}: trailing bytes after config echo")
    return tensors, config


def model_config_echo(model, vocab_size=None, **extra):
    """Standard config echo for StudentModel / TeacherModel instances."""
    from .models import StudentModel, TeacherModel

    cfg = model.config
    echo = {
        "kind": "student" if isinstance(model, StudentModel) else "teacher",
        "encoder": {
            "layers": cfg.layers, "hidden": cfg.hidden, "heads": cfg.heads,
            "ffn": cfg.ffn, "dropout": cfg.dropout, "max_len": cfg.max_len,
        },
        "vocab_size": vocab_size if vocab_size is not None else model.trunk.vocab_size,
        "seed": model.seed,
    }
    if isinstance(model, StudentModel):
        echo["n_teachers"] = model.n_teachers
    if not isinstance(model, (StudentModel, TeacherModel)):
        raise ContractError(f"cannot build a config echo for {type(model).__name__}")
    echo.update(extra)
    return echo


def save_model(model, path, **extra):
    from .models import named_parameters

    tensors = {name: p.data for name, p in named_parameters(model).items()}
    save_checkpoint(tensors, model_config_echo(model, **extra), path)


def load_model(path):
    """Rebuild the model shell from the config echo and fill its weights."""
    from .models import StudentModel, TeacherModel, named_parameters

    tensors, config = load_checkpoint(path)
    try:
        enc = EncoderConfig(**config["encoder"])
        kind = config["kind"]
        vocab_size = config["vocab_size"]
        seed = config.get("seed", 0)
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: config echo missing fields: {e}") from e
    if kind == "student":
        model = StudentModel(enc, vocab_size, config.get("n_teachers", 0), seed)
    elif kind == "teacher":
        model = TeacherModel(enc, vocab_size, seed)
    else:
        raise CheckpointError(f"{path}: unknown model kind {kind!r}")
    params = named_parameters(model)
    missing = sorted(set(params) - set(tensors))
    extra = sorted(set(tensors) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names disagree with config echo "
            f"(missing {missing[:4]}, unexpected {extra[:4]})"
        )
    for name, p in params.items():
        if tensors[name].shape != p.data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: "
                f"file {tensors[name].shape} vs model {p.data.shape}"
            )
        p.data = tensors[name]
    return model, config
