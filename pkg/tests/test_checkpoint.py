import numpy as np
import pytest

from plstm.checkpoint import HEADER, MAGIC, atomic_output, load_checkpoint, save_checkpoint
from plstm.errors import CheckpointError
from plstm.model import GateMode, init_model


class TestCheckpoint:
    """체크포인트 저장/읽기 테스트"""

    def test_round_trip_is_bitwise(self, tmp_path):
        """저장 후 읽은 모든 파라미터가 비트 단위로 같은지 테스트"""
        # Given
        model = init_model(10, 4, 3, seed=11, sequence_length=7)
        model.embedding[2:] += 1e-13
        path = tmp_path / "model.ckpt"

        # When
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)

        # Then
        assert (loaded.vocab_size, loaded.embed_dim, loaded.hidden, loaded.sequence_length) == (10, 4, 3, 7)
        original = model.parameters()
        for name, block in loaded.parameters().items():
            assert block.tobytes() == original[name].tobytes(), name
        assert path.stat().st_size == len(MAGIC) + HEADER.size + 840 * 8

    def test_gate_mode_is_applied_on_load(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(init_model(10, 4, 3), path)
        loaded = load_checkpoint(path, gate_mode=GateMode.LITERAL_EQ9)
        for kind, branch in loaded.branches.items():
            assert branch.layer.forward_params.gate_activation is kind

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"NOTPLSTM" + bytes(64))
        with pytest.raises(CheckpointError, match="bad checkpoint"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        """마지막 8바이트를 잘라내면 모델을 만들지 않고 실패"""
        path = tmp_path / "model.ckpt"
        save_checkpoint(init_model(10, 4, 3), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="bad checkpoint: payload"):
            load_checkpoint(path)

    def test_non_finite_values_are_rejected(self, tmp_path):
        """길이가 맞아도 NaN이 들어 있으면 bad checkpoint"""
        path = tmp_path / "model.ckpt"
        save_checkpoint(init_model(10, 4, 3), path)
        raw = bytearray(path.read_bytes())
        raw[-8:] = np.array([np.nan], dtype="<f8").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="bad checkpoint: .*NaN"):
            load_checkpoint(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(MAGIC + b"\x01\x00")
        with pytest.raises(CheckpointError, match="truncated header"):
            load_checkpoint(path)

    def test_zero_dimension_header(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(MAGIC + HEADER.pack(10, 0, 3, 5))
        with pytest.raises(CheckpointError, match="invalid dimensions"):
            load_checkpoint(path)

    def test_error_names_the_file(self, tmp_path):
        path = tmp_path / "broken.ckpt"
        path.write_bytes(b"")
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(path)
        assert str(info.value).startswith(str(path))


class TestAtomicOutput:
    """임시 파일 후 교체 쓰기 테스트"""

    def test_success_replaces_target(self, tmp_path):
        target = tmp_path / "out.txt"
        target.write_text("old", encoding="utf-8")
        with atomic_output(target) as tmp:
            tmp.write_text("new", encoding="utf-8")
        assert target.read_text(encoding="utf-8") == "new"
        assert sorted(p.name for p in tmp_path.iterdir()) == ["out.txt"]

    def test_failure_keeps_old_file_and_removes_temp(self, tmp_path):
        """쓰는 도중 예외가 나면 기존 파일은 그대로, 임시 파일은 남지 않음"""
        target = tmp_path / "out.txt"
        target.write_text("old", encoding="utf-8")
        with pytest.raises(RuntimeError):
            with atomic_output(target) as tmp:
                tmp.write_text("partial", encoding="utf-8")
                raise RuntimeError("disk full")
        assert target.read_text(encoding="utf-8") == "old"
        assert sorted(p.name for p in tmp_path.iterdir()) == ["out.txt"]

    def test_failure_without_target(self, tmp_path):
        target = tmp_path / "fresh.bin"
        with pytest.raises(ValueError):
            with atomic_output(target) as tmp:
                tmp.write_bytes(np.arange(3.0).tobytes())
                raise ValueError("stop")
        assert list(tmp_path.iterdir()) == []
