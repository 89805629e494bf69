from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np

from plstm.errors import NumericError, ShapeError

# 크로스 엔트로피 확률 클리핑 값
CLIP_EPSILON = 1e-7


class ActivationKind(Enum):
    """병렬 브랜치의 네 가지 활성화 함수"""
    SOFTMAX = "softmax"
    SIGMOID = "sigmoid"
    RELU = "relu"
    TANH = "tanh"


class RngStream:
    """
    시드 기반 난수 스트림 (PCG64)

    같은 시드와 spawn_key는 플랫폼과 실행에 관계없이 같은 수열을 만든다.
    하나의 스트림은 한 곳에서만 사용한다 (브랜치별, 용도별로 분리).
    """

    algorithm = "PCG64"

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def substream(self, *key: int) -> "RngStream":
        """key로 구분되는 독립 하위 스트림을 만든다"""
        return RngStream(self.seed, self.spawn_key + tuple(key))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.generator.uniform(low, high, size=shape)

    def random(self, shape) -> np.ndarray:
        return self.generator.random(size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def __str__(self) -> str:
        return f"RngStream({self.algorithm}, seed={self.seed}, key={self.spawn_key})"

    def __repr__(self) -> str:
        return self.__str__()


def as_matrix(data, checked: bool = True) -> np.ndarray:
    """
    값을 float64 2차원 행렬로 변환

    Args:
        data: 중첩 리스트 또는 배열
        checked: True면 NaN/Inf를 거부

    Returns:
        np.ndarray: (rows, cols) float64 행렬
    """
    matrix = np.array(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {matrix.shape}")
    if checked and not np.all(np.isfinite(matrix)):
        raise NumericError("matrix contains NaN or Inf")
    return matrix


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    행렬 곱 (r×k)·(k×c)

    안쪽 인덱스 순서대로 외적을 누적하므로 결과는 스칼라 삼중 루프와
    비트 단위로 같고, 행마다 다른 행과 무관하게 계산된다.

    Args:
        a: r×k 행렬
        b: k×c 행렬

    Returns:
        np.ndarray: r×c 행렬
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} · {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for j in range(a.shape[1]):
        out += a[:, j:j + 1] * b[j:j + 1, :]
    return out


def activate(kind: ActivationKind, x: np.ndarray) -> np.ndarray:
    """
    활성화 함수 적용 (softmax는 마지막 축 기준, 나머지는 원소별)

    Args:
        kind: 활성화 종류
        x: 입력 값

    Returns:
        np.ndarray: 활성화 결과
    """
    if kind is ActivationKind.SIGMOID:
        return 1.0 / (1.0 + np.exp(-x))
    if kind is ActivationKind.TANH:
        return np.tanh(x)
    if kind is ActivationKind.RELU:
        return np.maximum(x, 0.0)
    if kind is ActivationKind.SOFTMAX:
        shifted = x - np.max(x, axis=-1, keepdims=True)
        exps = np.exp(shifted)
        return exps / np.sum(exps, axis=-1, keepdims=True)
    raise ValueError(f"unknown activation: {kind}")


def activate_grad(kind: ActivationKind, y: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """
    활성화 함수의 역전파 (forward 출력 y 기준)

    Args:
        kind: 활성화 종류
        y: activate(kind, x)의 결과
        upstream: 출력에 대한 기울기

    Returns:
        np.ndarray: 입력 x에 대한 기울기
    """
    if y.shape != upstream.shape:
        raise ShapeError(f"activation output {y.shape} and upstream {upstream.shape} differ")
    if kind is ActivationKind.SIGMOID:
        return upstream * y * (1.0 - y)
    if kind is ActivationKind.TANH:
        return upstream * (1.0 - y * y)
    if kind is ActivationKind.RELU:
        # x == 0 에서의 미분은 0
        return np.where(y > 0.0, upstream, 0.0)
    if kind is ActivationKind.SOFTMAX:
        inner = np.sum(upstream * y, axis=-1, keepdims=True)
        return y * (upstream - inner)
    raise ValueError(f"unknown activation: {kind}")


def categorical_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    범주형 크로스 엔트로피와 probs에 대한 기울기

    음수가 없고 합이 양수인 행은 합으로 나눠 확률로 만든 뒤 계산한다
    (sigmoid/relu 출력도 다른 칸을 낮추는 기울기를 받는다). 음수가 있는
    행(tanh)은 정답 칸 값을 그대로 쓴다. 정답 확률은 [eps, 1-eps]로 자른 뒤
    로그를 취하고, 잘린 구간의 기울기는 0이다.

    Args:
        probs: n×C 헤드 출력
        targets: n×C 원-핫 정답

    Returns:
        Tuple[float, np.ndarray]: (평균 손실, probs에 대한 기울기)
    """
    if probs.shape != targets.shape or probs.ndim != 2:
        raise ShapeError(f"probs {probs.shape} and targets {targets.shape} must be equal 2-D shapes")
    is_binary = np.all((targets == 0.0) | (targets == 1.0))
    if not is_binary or not np.all(np.sum(targets, axis=1) == 1.0):
        raise ValueError("targets must be one-hot rows")

    n = probs.shape[0]
    true_index = np.argmax(targets, axis=1)
    rows = np.arange(n)
    sums = np.sum(probs, axis=1)
    normalized = np.all(probs >= 0.0, axis=1) & (sums > 0.0)
    scale = np.where(normalized, sums, 1.0)
    p_true = probs[rows, true_index] / scale
    clipped = np.clip(p_true, CLIP_EPSILON, 1.0 - CLIP_EPSILON)
    loss = float(-np.sum(np.log(clipped)) / n)

    # 정규화한 행: dL/dy_j = dL/dp · (δ_tj - p) / s
    inside = (p_true >= CLIP_EPSILON) & (p_true <= 1.0 - CLIP_EPSILON)
    d_p = np.where(inside, -1.0 / (n * clipped), 0.0)
    grad = np.zeros_like(probs)
    grad[rows, true_index] = d_p / scale
    grad -= np.where(normalized, d_p * p_true / scale, 0.0)[:, None]
    return loss, grad


def dropout_mask(shape, rate: float, rng: RngStream) -> np.ndarray:
    """생존 원소는 1/(1-rate), 나머지는 0인 inverted dropout 마스크"""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, rng: RngStream, training: bool) -> np.ndarray:
    """
    inverted dropout

    Args:
        x: 입력
        rate: 0으로 만들 확률
        rng: 마스크용 난수 스트림
        training: False면 항등 함수

    Returns:
        np.ndarray: 드롭아웃 결과
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng)


@dataclass
class GradCheckReport:
    """블록별 최대 원소 상대 오차"""
    errors: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(error <= self.tol for error in self.errors.values())

    def worst(self) -> Tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def __str__(self) -> str:
        lines = [f"{name:<28} {error:.3e}" for name, error in self.errors.items()]
        status = "PASS" if self.passed else "FAIL"
        if not self.errors:
            return f"{status} (tol={self.tol:g}, no blocks)"
        name, error = self.worst()
        return "\n".join(lines + [f"{status} (tol={self.tol:g}, worst {name} {error:.3e})"])


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """원소별 |a-n| / max(|a|, |n|, 1e-8)"""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def grad_check(loss_fn: Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
               params: Dict[str, np.ndarray], h: float = 1e-5, tol: float = 1e-6) -> GradCheckReport:
    """
    중앙 차분으로 해석적 기울기를 검증

    loss_fn(params)는 (손실, 블록별 기울기)를 돌려줘야 하고, 같은 params에
    대해 항상 같은 값을 내야 한다 (난수는 호출마다 같은 시드로 다시 만든다).
    params의 배열은 제자리에서 잠시 바뀌었다가 원래 값으로 복원된다.

    Args:
        loss_fn: 손실 함수
        params: 블록 이름 → 파라미터 배열
        h: 차분 간격
        tol: 허용 상대 오차

    Returns:
        GradCheckReport: 블록별 원소 상대 오차의 최댓값
    """
    if h <= 0.0:
        raise ValueError("h must be positive")
    _, analytic = loss_fn(params)
    report = GradCheckReport(tol=tol)
    for name, block in params.items():
        numeric = np.zeros_like(block)
        flat = block.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + h
            plus, _ = loss_fn(params)
            flat[index] = original - h
            minus, _ = loss_fn(params)
            flat[index] = original
            numeric_flat[index] = (plus - minus) / (2.0 * h)
        errors = relative_error(analytic[name], numeric)
        report.errors[name] = float(np.max(errors)) if errors.size else 0.0
    return report
