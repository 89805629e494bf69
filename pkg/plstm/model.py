from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from plstm.corpus import DEFAULT_SEQUENCE_LENGTH, PAD_ID, EncodedSequence, Label, Vocabulary, encode_text
from plstm.errors import ShapeError
from plstm.lstm import GATES, BidirectionalCache, BidirectionalLayer, LSTMCellParams, bidirectional_encode, bptt
from plstm.tensor import ActivationKind, RngStream, activate, activate_grad, dropout_mask, matmul

# 브랜치 순서 (체크포인트, 임베딩 기울기 합산, 요약 출력 모두 이 순서를 따른다)
BRANCH_ORDER = (ActivationKind.SOFTMAX, ActivationKind.SIGMOID, ActivationKind.RELU, ActivationKind.TANH)

NUM_CLASSES = 2
INIT_SCALE = 0.05
FORGET_BIAS = 1.0

# RngStream 하위 스트림 용도
STREAM_EMBEDDING = 0
STREAM_BRANCH_INIT = 1
STREAM_DROPOUT = 2


class GateMode(Enum):
    """standard: 게이트는 sigmoid / literal_eq9: 게이트에도 브랜치 활성화 함수 적용"""
    STANDARD = "standard"
    LITERAL_EQ9 = "literal_eq9"


class Aggregation(Enum):
    PRIMARY_BRANCH = "primary_branch"
    MAJORITY_VOTE = "majority_vote"


class Branch:
    """양방향 LSTM → dense 헤드 → 브랜치 고유 활성화"""

    def __init__(self, name: ActivationKind, layer: BidirectionalLayer,
                 dropout_embed: float = 0.6, dropout_recurrent: float = 0.4):
        self.name = name
        self.layer = layer
        self.head_W = np.zeros((NUM_CLASSES, layer.hidden))
        self.head_b = np.zeros(NUM_CLASSES)
        self.dropout_embed = dropout_embed
        self.dropout_recurrent = dropout_recurrent

    @property
    def head_activation(self) -> ActivationKind:
        return self.name

    def parameters(self) -> Dict[str, np.ndarray]:
        """블록 이름 → 배열 (정방향 셀, 역방향 셀, 헤드 순서)"""
        result = {}
        for prefix, params in (("forward", self.layer.forward_params), ("backward", self.layer.backward_params)):
            for block_name, block in params.blocks().items():
                result[f"{prefix}.{block_name}"] = block
        result["head_W"] = self.head_W
        result["head_b"] = self.head_b
        return result

    def parameter_count(self) -> int:
        return sum(block.size for block in self.parameters().values())

    def __str__(self) -> str:
        return f"Branch({self.name.value}, hidden={self.layer.hidden})"

    def __repr__(self) -> str:
        return self.__str__()


class ParallelModel:
    """공유 임베딩 + 서로 독립인 네 개의 브랜치"""

    def __init__(self, embedding: np.ndarray, branches: List[Branch],
                 sequence_length: int = DEFAULT_SEQUENCE_LENGTH,
                 aggregation: Aggregation = Aggregation.PRIMARY_BRANCH,
                 gate_mode: GateMode = GateMode.STANDARD):
        names = [branch.name for branch in branches]
        if names != list(BRANCH_ORDER):
            raise ValueError(f"branches must be {[k.value for k in BRANCH_ORDER]}, got {[k.value for k in names]}")
        self.embedding = embedding
        self.branches: Dict[ActivationKind, Branch] = {branch.name: branch for branch in branches}
        self.sequence_length = sequence_length
        self.aggregation = aggregation
        self.gate_mode = gate_mode

    @property
    def vocab_size(self) -> int:
        return int(self.embedding.shape[0])

    @property
    def embed_dim(self) -> int:
        return int(self.embedding.shape[1])

    @property
    def hidden(self) -> int:
        return self.branches[ActivationKind.SOFTMAX].layer.hidden

    def parameters(self) -> Dict[str, np.ndarray]:
        """전체 파라미터 (임베딩, 그다음 브랜치 순서대로)"""
        result = {"embedding": self.embedding}
        for kind in BRANCH_ORDER:
            for name, block in self.branches[kind].parameters().items():
                result[f"{kind.value}.{name}"] = block
        return result

    def parameter_count(self) -> int:
        return sum(block.size for block in self.parameters().values())

    def __str__(self) -> str:
        return (f"ParallelModel(vocab={self.vocab_size}, embed={self.embed_dim}, hidden={self.hidden}, "
                f"L={self.sequence_length})")

    def __repr__(self) -> str:
        return self.__str__()


def expected_parameter_count(vocab_size: int, embed_dim: int, hidden: int) -> int:
    """V·E + 4·[2·4·(H·E + H·H + H) + 2H + 2]"""
    per_direction = 4 * (hidden * embed_dim + hidden * hidden + hidden)
    per_branch = 2 * per_direction + NUM_CLASSES * hidden + NUM_CLASSES
    return vocab_size * embed_dim + len(BRANCH_ORDER) * per_branch


def _init_cell(params: LSTMCellParams, rng: RngStream) -> None:
    for g in GATES:
        params.W[g][...] = rng.uniform(-INIT_SCALE, INIT_SCALE, params.W[g].shape)
        params.U[g][...] = rng.uniform(-INIT_SCALE, INIT_SCALE, params.U[g].shape)
    params.b["f"][...] = FORGET_BIAS


def init_model(vocab_size: int, embed_dim: int = 400, hidden: int = 64, seed: int = 0,
               sequence_length: int = DEFAULT_SEQUENCE_LENGTH,
               gate_mode: GateMode = GateMode.STANDARD,
               aggregation: Aggregation = Aggregation.PRIMARY_BRANCH,
               dropout_embed: float = 0.6, dropout_recurrent: float = 0.4) -> ParallelModel:
    """
    pLSTM 모델 초기화

    가중치는 브랜치별 하위 스트림에서 uniform(-0.05, 0.05)로 뽑고,
    편향은 0, 망각 게이트 편향은 1.0, 패드 임베딩 행은 0이다.

    Args:
        vocab_size: 임베딩 행 수 (pad, unk 포함)
        embed_dim: 임베딩 차원
        hidden: 방향별 은닉 유닛 수
        seed: 시드

    Returns:
        ParallelModel: 초기화된 모델
    """
    if min(vocab_size, embed_dim, hidden, sequence_length) < 1:
        raise ShapeError(f"invalid dimensions vocab={vocab_size}, embed={embed_dim}, hidden={hidden}, "
                         f"L={sequence_length}")
    root = RngStream(seed)
    embedding = root.substream(STREAM_EMBEDDING).uniform(-INIT_SCALE, INIT_SCALE, (vocab_size, embed_dim))
    embedding[PAD_ID] = 0.0

    branches = []
    for index, kind in enumerate(BRANCH_ORDER):
        rng = root.substream(STREAM_BRANCH_INIT, index)
        gate_activation = kind if gate_mode is GateMode.LITERAL_EQ9 else ActivationKind.SIGMOID
        forward_params = LSTMCellParams(hidden, embed_dim, gate_activation)
        backward_params = LSTMCellParams(hidden, embed_dim, gate_activation)
        _init_cell(forward_params, rng)
        _init_cell(backward_params, rng)
        branch = Branch(kind, BidirectionalLayer(forward_params, backward_params), dropout_embed, dropout_recurrent)
        branch.head_W[...] = rng.uniform(-INIT_SCALE, INIT_SCALE, branch.head_W.shape)
        branches.append(branch)
    return ParallelModel(embedding, branches, sequence_length, aggregation, gate_mode)


def dropout_streams(seed: int) -> Dict[ActivationKind, RngStream]:
    """브랜치별 드롭아웃 난수 스트림"""
    root = RngStream(seed)
    return {kind: root.substream(STREAM_DROPOUT, index) for index, kind in enumerate(BRANCH_ORDER)}


@dataclass
class BranchCache:
    bidirectional: BidirectionalCache
    embed_mask: Optional[np.ndarray]
    pooled_mask: Optional[np.ndarray]
    pooled: np.ndarray
    scores: np.ndarray
    batched: bool


def branch_forward(branch: Branch, embedded: np.ndarray, mask: Optional[np.ndarray],
                   rng: Optional[RngStream], training: bool) -> Tuple[np.ndarray, BranchCache]:
    """
    브랜치 순전파: dropout(0.6) → 양방향 LSTM → dropout(0.4) → dense → 활성화

    Args:
        branch: 브랜치
        embedded: (T, E) 또는 (T, B, E) 임베딩된 시퀀스
        mask: 실제 토큰 마스크
        rng: 드롭아웃 스트림 (training일 때만 사용)
        training: 학습 모드 여부

    Returns:
        Tuple[np.ndarray, BranchCache]: 클래스 점수 (2,) 또는 (B, 2), 캐시
    """
    x = embedded
    embed_mask = None
    if training and branch.dropout_embed > 0.0:
        embed_mask = dropout_mask(x.shape, branch.dropout_embed, rng)
        x = x * embed_mask

    pooled, bi_cache = bidirectional_encode(branch.layer, x, mask)
    batched = pooled.ndim == 2
    pooled = pooled if batched else pooled[None, :]
    pooled_mask = None
    if training and branch.dropout_recurrent > 0.0:
        pooled_mask = dropout_mask(pooled.shape, branch.dropout_recurrent, rng)
        pooled = pooled * pooled_mask

    logits = matmul(pooled, branch.head_W.T) + branch.head_b
    scores = activate(branch.head_activation, logits)
    cache = BranchCache(bi_cache, embed_mask, pooled_mask, pooled, scores, batched)
    return (scores if batched else scores[0]), cache


def branch_backward(branch: Branch, cache: BranchCache,
                    dscores: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    브랜치 역전파

    Returns:
        Tuple[Dict[str, np.ndarray], np.ndarray]: Branch.parameters()와 같은 이름의 기울기, 임베딩 입력 기울기
    """
    dscores = dscores if cache.batched else dscores[None, :]
    if dscores.shape != cache.scores.shape:
        raise ShapeError(f"dscores {dscores.shape} != scores {cache.scores.shape}")
    dlogits = activate_grad(branch.head_activation, cache.scores, dscores)
    grads: Dict[str, np.ndarray] = {}
    head_W_grad = matmul(dlogits.T, cache.pooled)
    head_b_grad = np.sum(dlogits, axis=0)
    dpooled = matmul(dlogits, branch.head_W)
    if cache.pooled_mask is not None:
        dpooled = dpooled * cache.pooled_mask

    layer_grads, dx = bptt(branch.layer, cache.bidirectional, dpooled if cache.batched else dpooled[0])
    for prefix in ("forward", "backward"):
        for block_name, block in layer_grads[prefix].items():
            grads[f"{prefix}.{block_name}"] = block
    grads["head_W"] = head_W_grad
    grads["head_b"] = head_b_grad
    if cache.embed_mask is not None:
        dx = dx * cache.embed_mask
    return grads, dx


@dataclass
class BranchOutput:
    scores: np.ndarray
    label: Label


@dataclass
class Prediction:
    per_branch: Dict[ActivationKind, BranchOutput] = field(default_factory=dict)
    final_label: Label = Label.NON_SARCASTIC


def argmax_label(scores: np.ndarray) -> Label:
    """두 점수의 argmax (동률이면 non_sarcastic)"""
    return Label(int(np.argmax(scores)))


def aggregate(labels: Dict[ActivationKind, Label], aggregation: Aggregation) -> Label:
    """
    브랜치 라벨을 최종 라벨로 합치기

    primary_branch: softmax 브랜치 라벨 / majority_vote: 다수결, 동률은 non_sarcastic
    """
    if aggregation is Aggregation.PRIMARY_BRANCH:
        return labels[ActivationKind.SOFTMAX]
    votes = Counter(labels.values())
    if votes[Label.SARCASTIC] > votes[Label.NON_SARCASTIC]:
        return Label.SARCASTIC
    return Label.NON_SARCASTIC


def embed(model: ParallelModel, ids: np.ndarray) -> np.ndarray:
    """(B, L) id 배열 → (L, B, E) 임베딩"""
    if np.any(ids < 0) or np.any(ids >= model.vocab_size):
        raise ShapeError(f"token id out of range [0, {model.vocab_size})")
    return np.transpose(model.embedding[ids], (1, 0, 2))


def forward_batch(model: ParallelModel, ids: np.ndarray, mask: np.ndarray,
                  rngs: Optional[Dict[ActivationKind, RngStream]] = None, training: bool = False,
                  branches: Iterable[ActivationKind] = BRANCH_ORDER) -> Dict[ActivationKind, Tuple[np.ndarray, BranchCache]]:
    """
    배치 순전파 (임베딩 조회는 한 번, 브랜치는 독립)

    Args:
        model: 모델
        ids: (B, L) 토큰 id
        mask: (B, L) 마스크
        rngs: 브랜치별 드롭아웃 스트림
        training: 학습 모드 여부
        branches: 계산할 브랜치

    Returns:
        Dict: 브랜치 → ((B, 2) 점수, 캐시)
    """
    if training and rngs is None:
        raise ValueError("training mode needs per-branch dropout streams (see dropout_streams)")
    embedded = embed(model, ids)
    step_mask = np.transpose(mask)
    results = {}
    for kind in branches:
        rng = rngs[kind] if rngs is not None else None
        results[kind] = branch_forward(model.branches[kind], embedded, step_mask, rng, training)
    return results


def model_forward(model: ParallelModel, encoded: EncodedSequence,
                  rngs: Optional[Dict[ActivationKind, RngStream]] = None, training: bool = False):
    """
    한 시퀀스에 대한 예측

    Returns:
        Prediction (training=True면 (Prediction, 브랜치별 캐시))
    """
    results = forward_batch(model, encoded.ids[None, :], encoded.mask[None, :], rngs, training)
    prediction = Prediction()
    for kind, (scores, _) in results.items():
        prediction.per_branch[kind] = BranchOutput(scores[0], argmax_label(scores[0]))
    labels = {kind: output.label for kind, output in prediction.per_branch.items()}
    prediction.final_label = aggregate(labels, model.aggregation)
    if training:
        return prediction, {kind: cache for kind, (_, cache) in results.items()}
    return prediction


def predict_batch(model: ParallelModel, sequences: List[EncodedSequence]) -> List[Prediction]:
    """평가 모드 배치 예측"""
    if not sequences:
        return []
    ids = np.stack([seq.ids for seq in sequences])
    mask = np.stack([seq.mask for seq in sequences])
    results = forward_batch(model, ids, mask)
    predictions = []
    for row in range(len(sequences)):
        prediction = Prediction()
        for kind, (scores, _) in results.items():
            prediction.per_branch[kind] = BranchOutput(scores[row], argmax_label(scores[row]))
        labels = {kind: output.label for kind, output in prediction.per_branch.items()}
        prediction.final_label = aggregate(labels, model.aggregation)
        predictions.append(prediction)
    return predictions


def predict_texts(model: ParallelModel, vocab: Vocabulary, texts: List[str]) -> List[Prediction]:
    """원문 문자열 → 예측"""
    return predict_batch(model, [encode_text(text, vocab, model.sequence_length) for text in texts])


def embedding_gradient(model: ParallelModel, ids: np.ndarray, d_embedded: np.ndarray) -> np.ndarray:
    """(L, B, E) 입력 기울기를 임베딩 테이블 기울기로 모으기 (패드 행은 0)"""
    grad = np.zeros_like(model.embedding)
    np.add.at(grad, np.transpose(ids).reshape(-1), d_embedded.reshape(-1, model.embed_dim))
    grad[PAD_ID] = 0.0
    return grad


def summary(model: ParallelModel) -> str:
    """
    model.summary() 형식의 텍스트 표

    Returns:
        str: 층 이름, 출력 모양, 파라미터 수와 총합
    """
    width = 72
    rows = [("embedding (Embedding, shared)", f"({model.sequence_length}, {model.embed_dim})",
             model.embedding.size)]
    for kind in BRANCH_ORDER:
        branch = model.branches[kind]
        gates = branch.layer.forward_params.gate_activation.value
        rows.append((f"{kind.value}/lstm_forward (LSTM, gates={gates})", f"({model.hidden},)",
                     branch.layer.forward_params.parameter_count()))
        rows.append((f"{kind.value}/lstm_backward (LSTM, gates={gates})", f"({model.hidden},)",
                     branch.layer.backward_params.parameter_count()))
        rows.append((f"{kind.value}/sum (Add)", f"({model.hidden},)", 0))
        rows.append((f"{kind.value}/head (Dense, {kind.value})", f"({NUM_CLASSES},)",
                     branch.head_W.size + branch.head_b.size))

    lines = [
        f"Model: pLSTM (vocab={model.vocab_size}, embed={model.embed_dim}, hidden={model.hidden}, "
        f"L={model.sequence_length})",
        f"gate mode: {model.gate_mode.value}, aggregation: {model.aggregation.value}",
        "_" * width,
        f"{'Layer (type)':<46}{'Output Shape':<14}{'Param #':>12}",
        "=" * width,
    ]
    for index, (name, shape, count) in enumerate(rows):
        lines.append(f"{name:<46}{shape:<14}{count:>12,}")
        # 임베딩 뒤, 브랜치(4행)마다 구분선
        if index % 4 == 0:
            lines.append(("=" if index == len(rows) - 1 else "_") * width)
    total = model.parameter_count()
    lines.append(f"Total params: {total:,}")
    lines.append(f"Trainable params: {total - model.embed_dim:,}")
    lines.append(f"Non-trainable params: {model.embed_dim:,} (pad embedding row)")
    lines.append("_" * width)
    return "\n".join(lines) + "\n"
