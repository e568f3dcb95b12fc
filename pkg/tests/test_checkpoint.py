"""Checkpoint container: bit-exact round trips and precise failure modes."""

import struct

import numpy as np
import pytest

from mkdm.checkpoint import (
    MAGIC,
    load_checkpoint,
    load_model,
    save_checkpoint,
    save_model,
)
from mkdm.encoder import EncoderConfig
from mkdm.errors import (
    BadMagicError,
    CheckpointError,
    ContractError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from mkdm.models import StudentModel, TeacherModel, named_parameters


def _tensors(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "a.w": rng.standard_normal((3, 4)).astype(np.float32),
        "b": rng.standard_normal(7).astype(np.float32),
        "scalarish": np.float32(2.5) * np.ones((), dtype=np.float32),
    }


class TestRoundTrip:
    def test_bitwise(self, tmp_path):
        path = tmp_path / "m.ckpt"
        tensors = _tensors()
        config = {"kind": "test", "alpha": 0.5, "nested": {"k": [1, 2]}}
        save_checkpoint(tensors, config, path)
        loaded, echo = load_checkpoint(path)
        assert echo == config
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert loaded[name].dtype == np.float32
            assert loaded[name].shape == tensors[name].shape
            np.testing.assert_array_equal(loaded[name], tensors[name])

    def test_save_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(_tensors(), {"x": 1}, a)
        save_checkpoint(_tensors(), {"x": 1}, b)
        assert a.read_bytes() == b.read_bytes()

    def test_insertion_order_does_not_matter(self, tmp_path):
        # Names are sorted on write, so dict order can't leak into the bytes.
        tensors = _tensors()
        reversed_tensors = dict(reversed(list(tensors.items())))
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(tensors, {}, a)
        save_checkpoint(reversed_tensors, {}, b)
        assert a.read_bytes() == b.read_bytes()

    def test_non_f32_rejected(self, tmp_path):
        with pytest.raises(ContractError, match="float32"):
            save_checkpoint({"x": np.zeros(3, dtype=np.float64)}, {}, tmp_path / "x")


class TestMalformedFiles:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(BadMagicError):
            load_checkpoint(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"")
        with pytest.raises(BadMagicError):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", 99, 0) + struct.pack("<I", 2) + b"{}")
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(path)

    def test_truncation_detected_everywhere(self, tmp_path):
        # Chop a valid file at every byte boundary; each prefix must fail
        # with a checkpoint error, never succeed or crash some other way.
        full_path = tmp_path / "full.ckpt"
        save_checkpoint(_tensors(), {"k": 1}, full_path)
        blob = full_path.read_bytes()
        part = tmp_path / "part.ckpt"
        for cut in range(len(blob)):
            part.write_bytes(blob[:cut])
            with pytest.raises((TruncatedCheckpointError, BadMagicError)):
                load_checkpoint(part)

    def test_trailing_bytes_detected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint(_tensors(), {}, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)

    def test_bad_config_json(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", 1, 0)
                         + struct.pack("<I", 4) + b"nope")
        with pytest.raises(CheckpointError, match="JSON"):
            load_checkpoint(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "x.ckpt"
        name = b"w"
        body = (MAGIC + struct.pack("<II", 1, 1)
                + struct.pack("<H", len(name)) + name
                + struct.pack("<B", 1) + struct.pack("<Q", 1)
                + struct.pack("<B", 7) + b"\x00" * 4)
        path.write_bytes(body)
        with pytest.raises(CheckpointError, match="dtype"):
            load_checkpoint(path)


class TestModelRoundTrip:
    def _config(self):
        return EncoderConfig(layers=1, hidden=8, heads=2, ffn=16,
                             dropout=0.0, max_len=16)

    def test_student_round_trip_bitwise(self, tmp_path):
        model = StudentModel(self._config(), vocab_size=50, n_teachers=2, seed=9)
        path = tmp_path / "s.ckpt"
        save_model(model, path, note="hello")
        loaded, echo = load_model(path)
        assert isinstance(loaded, StudentModel)
        assert echo["kind"] == "student"
        assert echo["n_teachers"] == 2
        assert echo["note"] == "hello"
        original = named_parameters(model)
        restored = named_parameters(loaded)
        assert set(original) == set(restored)
        for name in original:
            np.testing.assert_array_equal(original[name].data, restored[name].data)

    def test_teacher_round_trip(self, tmp_path):
        model = TeacherModel(self._config(), vocab_size=50, seed=1)
        path = tmp_path / "t.ckpt"
        save_model(model, path)
        loaded, echo = load_model(path)
        assert isinstance(loaded, TeacherModel)
        assert echo["encoder"]["hidden"] == 8

    def test_name_mismatch_detected(self, tmp_path):
        model = StudentModel(self._config(), vocab_size=50, n_teachers=1, seed=0)
        tensors = {n: p.data for n, p in named_parameters(model).items()}
        tensors["rogue.extra"] = np.zeros(2, dtype=np.float32)
        from mkdm.checkpoint import model_config_echo
        path = tmp_path / "x.ckpt"
        save_checkpoint(tensors, model_config_echo(model), path)
        with pytest.raises(CheckpointError, match="rogue.extra"):
            load_model(path)

    def test_shape_mismatch_detected(self, tmp_path):
        model = StudentModel(self._config(), vocab_size=50, n_teachers=1, seed=0)
        tensors = {n: p.data for n, p in named_parameters(model).items()}
        first = next(iter(tensors))
        tensors[first] = np.zeros(tensors[first].size + 1, dtype=np.float32)
        from mkdm.checkpoint import model_config_echo
        path = tmp_path / "x.ckpt"
        save_checkpoint(tensors, model_config_echo(model), path)
        with pytest.raises(CheckpointError, match="shape"):
            load_model(path)

    def test_unknown_kind_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint({}, {"kind": "poodle",
                             "encoder": {"layers": 1, "hidden": 8, "heads": 2,
                                         "ffn": 16, "dropout": 0.0, "max_len": 16},
                             "vocab_size": 10}, path)
        with pytest.raises(CheckpointError, match="kind"):
            load_model(path)

    def test_missing_config_fields_rejected(self, tmp_path):
        path = tmp_path / "x.ckpt"
        save_checkpoint({}, {"kind": "student"}, path)
        with pytest.raises(CheckpointError, match="config echo"):
            load_model(path)
