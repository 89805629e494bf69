import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from plstm.config import TrainConfig
from plstm.corpus import EncodedSequence, LabeledExample, Label, Vocabulary, encode_text
from plstm.errors import ShapeError
from plstm.model import (BRANCH_ORDER, ParallelModel, branch_backward, branch_forward, dropout_streams, embed,
                         embedding_gradient, forward_batch)
from plstm.tensor import ActivationKind, RngStream, categorical_cross_entropy

logger = logging.getLogger(__name__)

# 에폭별 셔플 스트림 용도 (model의 스트림 용도 번호와 겹치지 않게)
STREAM_SHUFFLE = 3
EVAL_CHUNK = 256


class AdamState:
    """
    Adam 옵티마이저 상태

    블록마다 1차/2차 모멘트를 가지고, 스텝 카운터 t는 공유한다.
    """

    def __init__(self, learning_rate: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.t = 0

    def __str__(self) -> str:
        return f"AdamState(lr={self.learning_rate}, t={self.t}, blocks={len(self.m)})"

    def __repr__(self) -> str:
        return self.__str__()


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    Adam 한 스텝 (파라미터 배열을 제자리에서 갱신)

    Args:
        state: 옵티마이저 상태
        params: 블록 이름 → 파라미터
        grads: 블록 이름 → 기울기

    Returns:
        Tuple: (갱신된 params, state)
    """
    for name, block in params.items():
        if name not in grads or grads[name].shape != block.shape:
            raise ShapeError(f"gradient for {name!r} missing or shaped differently from {block.shape}")
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, block in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(block)
            state.v[name] = np.zeros_like(block)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        block -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


@dataclass
class EncodedExample:
    sequence: EncodedSequence
    label: Label


def encode_examples(examples: Sequence[LabeledExample], vocab: Vocabulary, length: int) -> List[EncodedExample]:
    return [EncodedExample(encode_text(example.doc.text, vocab, length), example.label) for example in examples]


@dataclass
class BranchEpoch:
    loss: float
    accuracy: float


@dataclass
class EpochLog:
    """에폭 하나의 브랜치별 손실과 정확도(%)"""
    epoch: int
    per_branch: Dict[ActivationKind, BranchEpoch] = field(default_factory=dict)
    seconds: float = 0.0


def _stack(examples: Sequence[EncodedExample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ids = np.stack([example.sequence.ids for example in examples])
    mask = np.stack([example.sequence.mask for example in examples])
    labels = np.array([int(example.label) for example in examples], dtype=np.int64)
    return ids, mask, labels


def one_hot(labels: np.ndarray, classes: int = 2) -> np.ndarray:
    targets = np.zeros((labels.shape[0], classes))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    return targets


def accuracy_percent(predictions: Sequence[int], truths: Sequence[int]) -> float:
    """100·맞은 수/전체"""
    if len(predictions) != len(truths):
        raise ShapeError(f"{len(predictions)} predictions for {len(truths)} labels")
    if not truths:
        raise ValueError("cannot score an empty example set")
    correct = sum(int(p) == int(t) for p, t in zip(predictions, truths))
    return 100.0 * correct / len(truths)


def evaluate_branches(model: ParallelModel, examples: Sequence[EncodedExample]) -> Dict[ActivationKind, BranchEpoch]:
    """평가 모드에서 브랜치별 손실과 정확도(%)"""
    if not examples:
        raise ValueError("cannot evaluate an empty example set")
    ids, mask, labels = _stack(examples)
    correct = {kind: 0 for kind in BRANCH_ORDER}
    loss_sum = {kind: 0.0 for kind in BRANCH_ORDER}
    for start in range(0, len(examples), EVAL_CHUNK):
        chunk = slice(start, start + EVAL_CHUNK)
        targets = one_hot(labels[chunk])
        for kind, (scores, _) in forward_batch(model, ids[chunk], mask[chunk]).items():
            correct[kind] += int(np.sum(np.argmax(scores, axis=1) == labels[chunk]))
            loss, _ = categorical_cross_entropy(scores, targets)
            loss_sum[kind] += loss * targets.shape[0]
    total = len(examples)
    return {kind: BranchEpoch(loss_sum[kind] / total, 100.0 * correct[kind] / total) for kind in BRANCH_ORDER}


def epoch_metrics(model: ParallelModel, examples: Sequence[EncodedExample]) -> Dict[ActivationKind, float]:
    """
    브랜치별 정확도 (%, 평가 모드 argmax 기준)

    Args:
        model: 모델
        examples: 인코딩된 예제

    Returns:
        Dict[ActivationKind, float]: 100·맞은 수/전체
    """
    return {kind: result.accuracy for kind, result in evaluate_branches(model, examples).items()}


def clip_by_global_norm(grads: Dict[str, np.ndarray], d_embedded: np.ndarray,
                        max_norm: float) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """브랜치 기울기와 임베딩 입력 기울기를 함께 전역 노름으로 자르기 (max_norm=0이면 그대로)"""
    if max_norm <= 0.0:
        return grads, d_embedded
    total = sum(float(np.sum(g * g)) for g in grads.values()) + float(np.sum(d_embedded * d_embedded))
    norm = math.sqrt(total)
    if norm <= max_norm:
        return grads, d_embedded
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, d_embedded * scale


def shuffle_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """에폭 e의 예제 순서 ((seed, e)만의 함수)"""
    return RngStream(seed).substream(STREAM_SHUFFLE, epoch).permutation(n)


def _format_line(log: EpochLog, kind: ActivationKind) -> str:
    result = log.per_branch[kind]
    return f"epoch {log.epoch:>4}, {kind.value:<7}, loss {result.loss:.4f}, acc {result.accuracy:6.2f}%"


def train(model: ParallelModel, examples: Sequence[EncodedExample],
          config: TrainConfig) -> Tuple[ParallelModel, List[EpochLog]]:
    """
    브랜치별로 독립적인 Adam + 크로스 엔트로피 학습

    브랜치마다 순전파 → 손실 → BPTT → 기울기 자르기 → Adam을 따로 하고,
    공유 임베딩은 브랜치 기울기를 정해진 순서(softmax, sigmoid, relu, tanh)로
    더해서 갱신한다. 패드 임베딩 행은 갱신하지 않는다.

    Args:
        model: 모델 (제자리에서 학습됨)
        examples: 인코딩된 학습 예제
        config: 학습 설정

    Returns:
        Tuple[ParallelModel, List[EpochLog]]: 학습된 모델과 에폭 기록
    """
    config.validate()
    if not examples:
        raise ValueError("training set is empty")
    ids_all, mask_all, labels_all = _stack(examples)
    if ids_all.shape[1] != model.sequence_length:
        raise ShapeError(f"examples have length {ids_all.shape[1]}, model expects {model.sequence_length}")
    if len(set(labels_all.tolist())) < 2:
        logger.warning("training set contains a single class")

    trainable = [kind for kind in BRANCH_ORDER if kind.value in config.trainable_branches]
    states = {kind: AdamState(config.learning_rate) for kind in trainable}
    embedding_state = AdamState(config.learning_rate)
    rngs = dropout_streams(config.seed)
    executor = ThreadPoolExecutor(max_workers=len(trainable)) if config.parallel else None

    def run_branch(kind: ActivationKind, embedded, step_mask, targets):
        branch = model.branches[kind]
        scores, cache = branch_forward(branch, embedded, step_mask, rngs[kind], True)
        loss, dscores = categorical_cross_entropy(scores, targets)
        grads, d_embedded = branch_backward(branch, cache, dscores)
        grads, d_embedded = clip_by_global_norm(grads, d_embedded, config.grad_clip)
        return loss, grads, d_embedded

    logs: List[EpochLog] = []
    n = len(examples)
    try:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            loss_sum = {kind: 0.0 for kind in trainable}
            order = shuffle_order(config.seed, epoch, n)
            for start in range(0, n, config.batch_size):
                batch = order[start:start + config.batch_size]
                ids, mask = ids_all[batch], mask_all[batch]
                targets = one_hot(labels_all[batch])
                embedded = embed(model, ids)
                step_mask = np.transpose(mask)

                if executor is not None:
                    outputs = list(executor.map(lambda k: run_branch(k, embedded, step_mask, targets), trainable))
                else:
                    outputs = [run_branch(kind, embedded, step_mask, targets) for kind in trainable]

                d_total = np.zeros_like(embedded)
                for kind, (loss, grads, d_embedded) in zip(trainable, outputs):
                    loss_sum[kind] += loss * len(batch)
                    adam_step(states[kind], model.branches[kind].parameters(), grads)
                    d_total = d_total + d_embedded
                grad = embedding_gradient(model, ids, d_total)
                adam_step(embedding_state, {"embedding": model.embedding}, {"embedding": grad})

            log = EpochLog(epoch=epoch)
            for kind, result in evaluate_branches(model, examples).items():
                loss = loss_sum[kind] / n if kind in loss_sum else result.loss
                log.per_branch[kind] = BranchEpoch(loss, result.accuracy)
            log.seconds = time.perf_counter() - started
            logs.append(log)

            cadence = config.verbose >= 2 or (config.verbose == 1 and (epoch % 100 == 0 or epoch == config.epochs))
            if cadence:
                for kind in BRANCH_ORDER:
                    print(_format_line(log, kind))
            logger.debug("epoch %d done in %.3fs", epoch, log.seconds)
    finally:
        if executor is not None:
            executor.shutdown()
    return model, logs


def cadence_table(logs: List[EpochLog], every: int = 100) -> str:
    """
    100 에폭 간격 정확도 요약 표

    Args:
        logs: 에폭 기록
        every: 간격

    Returns:
        str: 브랜치별 S/NS 정확도 표
    """
    if not logs:
        return ""
    picked = [log for log in logs if log.epoch % every == 0]
    if not picked or picked[-1].epoch != logs[-1].epoch:
        picked.append(logs[-1])
    header = f"{'Modules':<18}" + "".join(f"{'S/NS ' + str(log.epoch):>10}" for log in picked)
    lines = [header]
    for kind in BRANCH_ORDER:
        row = f"{'pLSTM + ' + kind.value:<18}"
        row += "".join(f"{log.per_branch[kind].accuracy:>10.2f}" for log in picked)
        lines.append(row)
    return "\n".join(lines) + "\n"


def write_epoch_csv(logs: List[EpochLog], path: Union[str, Path], record_time: bool = False) -> None:
    """epoch,branch,loss,accuracy,seconds (seconds는 record_time일 때만 채움)"""
    with Path(path).open("w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(["epoch", "branch", "loss", "accuracy", "seconds"])
        for log in logs:
            seconds = f"{log.seconds:.3f}" if record_time else ""
            for kind in BRANCH_ORDER:
                result = log.per_branch[kind]
                writer.writerow([log.epoch, kind.value, f"{result.loss:.6f}", f"{result.accuracy:.2f}", seconds])


def final_accuracies(logs: List[EpochLog]) -> Optional[Dict[ActivationKind, float]]:
    if not logs:
        return None
    return {kind: result.accuracy for kind, result in logs[-1].per_branch.items()}
