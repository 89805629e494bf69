import logging
import os
import struct
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from plstm.errors import CheckpointError, NumericError
from plstm.model import BRANCH_ORDER, Aggregation, GateMode, ParallelModel, expected_parameter_count, init_model
from plstm.tensor import as_matrix

logger = logging.getLogger(__name__)

MAGIC = b"PLSTM\x01"
HEADER = struct.Struct("<4I")
DTYPE = np.dtype("<f8")


@contextmanager
def atomic_output(path: Union[str, Path]) -> Iterator[Path]:
    """임시 이름에 쓰고 성공하면 path로 이름을 바꾼다 (실패하면 임시 파일 삭제)"""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def _blocks(model: ParallelModel):
    yield model.embedding
    for kind in BRANCH_ORDER:
        yield from model.branches[kind].parameters().values()


def save_checkpoint(model: ParallelModel, path: Union[str, Path]) -> None:
    """
    모델 저장

    형식: MAGIC, (vocab, embed, hidden, L) 헤더, 임베딩과 브랜치 순서대로의
    모든 파라미터 블록 (little-endian float64, 행 우선)

    Args:
        model: 모델
        path: 저장 경로
    """
    with atomic_output(path) as tmp:
        with tmp.open("wb") as file:
            file.write(MAGIC)
            file.write(HEADER.pack(model.vocab_size, model.embed_dim, model.hidden, model.sequence_length))
            for block in _blocks(model):
                file.write(np.ascontiguousarray(block, dtype=DTYPE).tobytes())
    logger.info("saved checkpoint %s (%d params)", path, model.parameter_count())


def load_checkpoint(path: Union[str, Path], gate_mode: GateMode = GateMode.STANDARD,
                    aggregation: Aggregation = Aggregation.PRIMARY_BRANCH) -> ParallelModel:
    """
    모델 읽기 (헤더와 길이가 맞지 않으면 모델을 만들지 않고 CheckpointError)

    Args:
        path: 체크포인트 경로
        gate_mode: 게이트 모드 (헤더에 없어서 따로 받는다)
        aggregation: 최종 라벨 정책

    Returns:
        ParallelModel: 저장된 파라미터를 가진 모델
    """
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError("bad checkpoint: wrong magic or version", path=str(path))
    if len(raw) < len(MAGIC) + HEADER.size:
        raise CheckpointError("bad checkpoint: truncated header", path=str(path))
    vocab_size, embed_dim, hidden, length = HEADER.unpack_from(raw, len(MAGIC))
    if min(vocab_size, embed_dim, hidden, length) < 1:
        raise CheckpointError("bad checkpoint: invalid dimensions in header", path=str(path))
    payload = raw[len(MAGIC) + HEADER.size:]
    expected = expected_parameter_count(vocab_size, embed_dim, hidden) * DTYPE.itemsize
    if len(payload) != expected:
        raise CheckpointError(f"bad checkpoint: payload is {len(payload)} bytes, header implies {expected}",
                              path=str(path))

    try:
        values = as_matrix(np.frombuffer(payload, dtype=DTYPE)).reshape(-1)
    except NumericError as exc:
        raise CheckpointError(f"bad checkpoint: {exc}", path=str(path)) from None
    model = init_model(vocab_size, embed_dim, hidden, seed=0, sequence_length=length,
                       gate_mode=gate_mode, aggregation=aggregation)
    offset = 0
    for block in _blocks(model):
        block[...] = values[offset:offset + block.size].reshape(block.shape)
        offset += block.size
    return model
