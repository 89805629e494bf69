from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from plstm.errors import ShapeError
from plstm.tensor import ActivationKind, activate, activate_grad, matmul

# 게이트 순서: 입력, 망각, 출력, 후보 메모리
GATES = ("i", "f", "o", "n")


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class LSTMCellParams:
    """
    한 방향 LSTM 셀의 파라미터

    게이트 g ∈ {i, f, o, n}마다 입력 가중치 W_g (hidden×embed),
    순환 가중치 U_g (hidden×hidden), 편향 b_g (hidden)를 가진다.
    후보 메모리 n은 항상 tanh를 쓴다.
    """

    def __init__(self, hidden: int, embed: int,
                 gate_activation: ActivationKind = ActivationKind.SIGMOID):
        if hidden < 1 or embed < 1:
            raise ShapeError(f"hidden and embed must be >= 1, got {hidden}, {embed}")
        self.hidden = hidden
        self.embed = embed
        self.gate_activation = gate_activation
        self.W: Dict[str, np.ndarray] = {g: np.zeros((hidden, embed)) for g in GATES}
        self.U: Dict[str, np.ndarray] = {g: np.zeros((hidden, hidden)) for g in GATES}
        self.b: Dict[str, np.ndarray] = {g: np.zeros(hidden) for g in GATES}

    def blocks(self) -> Dict[str, np.ndarray]:
        """파라미터 블록 (체크포인트 순서: 게이트별 W, U, b)"""
        result = {}
        for g in GATES:
            result[f"W_{g}"] = self.W[g]
            result[f"U_{g}"] = self.U[g]
            result[f"b_{g}"] = self.b[g]
        return result

    def parameter_count(self) -> int:
        return sum(block.size for block in self.blocks().values())

    def fused(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """네 게이트를 세로로 이어 붙인 (W 4H×E, U 4H×H, b 4H)"""
        W = np.concatenate([self.W[g] for g in GATES], axis=0)
        U = np.concatenate([self.U[g] for g in GATES], axis=0)
        b = np.concatenate([self.b[g] for g in GATES])
        return W, U, b

    def copy(self) -> "LSTMCellParams":
        other = LSTMCellParams(self.hidden, self.embed, self.gate_activation)
        for g in GATES:
            other.W[g] = self.W[g].copy()
            other.U[g] = self.U[g].copy()
            other.b[g] = self.b[g].copy()
        return other

    def __str__(self) -> str:
        return f"LSTMCellParams(hidden={self.hidden}, embed={self.embed}, gates={self.gate_activation.value})"

    def __repr__(self) -> str:
        return self.__str__()


@dataclass
class LSTMState:
    """(h, c) 상태 쌍"""
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: Optional[int] = None) -> "LSTMState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


class BidirectionalLayer:
    """정방향/역방향 셀 한 쌍 (파라미터는 묶이지 않음, 결합은 원소별 합)"""

    def __init__(self, forward_params: LSTMCellParams, backward_params: LSTMCellParams):
        if forward_params.hidden != backward_params.hidden or forward_params.embed != backward_params.embed:
            raise ShapeError("forward and backward cells must share dimensions")
        self.forward_params = forward_params
        self.backward_params = backward_params

    @property
    def hidden(self) -> int:
        return self.forward_params.hidden

    def directions(self) -> Dict[Direction, LSTMCellParams]:
        return {Direction.FORWARD: self.forward_params, Direction.BACKWARD: self.backward_params}

    def parameter_count(self) -> int:
        return self.forward_params.parameter_count() + self.backward_params.parameter_count()


def _gates(params: LSTMCellParams, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    H = params.hidden
    kind = params.gate_activation
    i = activate(kind, z[:, 0:H])
    f = activate(kind, z[:, H:2 * H])
    o = activate(kind, z[:, 2 * H:3 * H])
    n = activate(ActivationKind.TANH, z[:, 3 * H:4 * H])
    return i, f, o, n


def cell_step(params: LSTMCellParams, x_t: np.ndarray, prev: LSTMState) -> LSTMState:
    """
    LSTM 셀 한 단계

    i, f, o = Φg(W x + U h_prev + b), c̃ = tanh(W_n x + U_n h_prev + b_n),
    c = f∘c_prev + i∘c̃, h = o∘tanh(c)

    Args:
        params: 셀 파라미터
        x_t: 입력 벡터 (embed,) 또는 배치 (B, embed)
        prev: 이전 상태

    Returns:
        LSTMState: 새 상태
    """
    single = x_t.ndim == 1
    x = x_t.reshape(1, -1) if single else x_t
    h_prev = prev.h.reshape(1, -1) if single else prev.h
    c_prev = prev.c.reshape(1, -1) if single else prev.c
    if x.shape[1] != params.embed or h_prev.shape[1] != params.hidden or c_prev.shape != h_prev.shape:
        raise ShapeError(f"cell_step got x {x_t.shape}, h {prev.h.shape}, c {prev.c.shape} for {params}")

    W, U, b = params.fused()
    z = matmul(x, W.T) + matmul(h_prev, U.T) + b
    i, f, o, n = _gates(params, z)
    c = f * c_prev + i * n
    h = o * np.tanh(c)
    if single:
        return LSTMState(h[0], c[0])
    return LSTMState(h, c)


@dataclass
class DirectionalCache:
    """역전파를 위해 한 방향 패스에서 보관하는 값들 (모두 처리 순서가 아닌 원래 시간 순서)"""
    direction: Direction
    x: np.ndarray
    mask: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    n: np.ndarray
    tanh_c: np.ndarray
    batched: bool


def _as_batch(sequence: np.ndarray, mask: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, bool]:
    batched = sequence.ndim == 3
    if sequence.ndim not in (2, 3):
        raise ShapeError(f"sequence must be (T, E) or (T, B, E), got {sequence.shape}")
    if sequence.shape[0] < 1:
        raise ShapeError("sequence is empty")
    x = sequence if batched else sequence[:, None, :]
    if mask is None:
        m = np.ones(x.shape[:2], dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        m = m if batched else m[:, None]
        if m.shape != x.shape[:2]:
            raise ShapeError(f"mask {np.shape(mask)} does not match sequence {sequence.shape}")
    return x, m, batched


def _order(direction: Direction, steps: int):
    return range(steps) if direction is Direction.FORWARD else range(steps - 1, -1, -1)


def directional_pass(params: LSTMCellParams, sequence: np.ndarray, mask: Optional[np.ndarray] = None,
                     direction: Direction = Direction.FORWARD):
    """
    한 방향으로 시퀀스 전체를 처리

    마스크가 False인 (패딩) 단계는 상태를 그대로 넘긴다.

    Args:
        params: 셀 파라미터
        sequence: (T, E) 또는 (T, B, E) 입력
        mask: (T,) 또는 (T, B) 실제 토큰 마스크
        direction: 진행 방향

    Returns:
        Tuple[np.ndarray, LSTMState, DirectionalCache]: 원래 순서의 h들, 최종 상태, 캐시
    """
    x, m, batched = _as_batch(sequence, mask)
    T, B, E = x.shape
    H = params.hidden
    if E != params.embed:
        raise ShapeError(f"sequence embed size {E} != {params.embed}")

    W, U, b = params.fused()
    projected = matmul(x.reshape(T * B, E), W.T).reshape(T, B, 4 * H)

    hs = np.zeros((T, B, H))
    h_prev_all = np.zeros((T, B, H))
    c_prev_all = np.zeros((T, B, H))
    gates = {name: np.zeros((T, B, H)) for name in ("i", "f", "o", "n", "tanh_c")}
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in _order(direction, T):
        h_prev_all[t] = h
        c_prev_all[t] = c
        z = projected[t] + matmul(h, U.T) + b
        i, f, o, n = _gates(params, z)
        c_cell = f * c + i * n
        tanh_c = np.tanh(c_cell)
        h_cell = o * tanh_c
        step_mask = m[t][:, None]
        h = np.where(step_mask, h_cell, h)
        c = np.where(step_mask, c_cell, c)
        hs[t] = h
        for name, value in (("i", i), ("f", f), ("o", o), ("n", n), ("tanh_c", tanh_c)):
            gates[name][t] = value

    cache = DirectionalCache(direction, x, m, h_prev_all, c_prev_all,
                             gates["i"], gates["f"], gates["o"], gates["n"], gates["tanh_c"], batched)
    if batched:
        return hs, LSTMState(h, c), cache
    return hs[:, 0, :], LSTMState(h[0], c[0]), cache


def directional_backward(params: LSTMCellParams, cache: DirectionalCache,
                         dh_final: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    한 방향의 BPTT (최종 h에 대한 기울기에서 시작)

    Returns:
        Tuple[Dict[str, np.ndarray], np.ndarray]: 파라미터 블록 기울기, (T, B, E) 입력 기울기
    """
    x, m = cache.x, cache.mask
    T, B, E = x.shape
    H = params.hidden
    if np.size(dh_final) != B * H:
        raise ShapeError(f"upstream {np.shape(dh_final)} does not match cache batch {B}×{H}")
    dh = np.array(dh_final, dtype=np.float64).reshape(B, H)
    dc = np.zeros((B, H))

    _, U, _ = params.fused()
    dz_all = np.zeros((T, B, 4 * H))
    kind = params.gate_activation
    for t in reversed(list(_order(cache.direction, T))):
        step_mask = m[t][:, None]
        dh_cell = np.where(step_mask, dh, 0.0)
        dc_cell = np.where(step_mask, dc, 0.0)
        i, f, o, n, tanh_c = cache.i[t], cache.f[t], cache.o[t], cache.n[t], cache.tanh_c[t]

        do = dh_cell * tanh_c
        dc_total = dc_cell + dh_cell * o * (1.0 - tanh_c * tanh_c)
        df = dc_total * cache.c_prev[t]
        di = dc_total * n
        dn = dc_total * i

        dz = dz_all[t]
        dz[:, 0:H] = activate_grad(kind, i, di)
        dz[:, H:2 * H] = activate_grad(kind, f, df)
        dz[:, 2 * H:3 * H] = activate_grad(kind, o, do)
        dz[:, 3 * H:4 * H] = activate_grad(ActivationKind.TANH, n, dn)

        dh = np.where(step_mask, matmul(dz, U), dh)
        dc = np.where(step_mask, dc_total * f, dc)

    W, _, _ = params.fused()
    dz_flat = dz_all.reshape(T * B, 4 * H)
    dW = matmul(dz_flat.T, x.reshape(T * B, E))
    dU = matmul(dz_flat.T, cache.h_prev.reshape(T * B, H))
    db = np.sum(dz_flat, axis=0)
    dx = matmul(dz_flat, W).reshape(T, B, E)
    dx = np.where(m[:, :, None], dx, 0.0)

    grads = {}
    for index, g in enumerate(GATES):
        rows = slice(index * H, (index + 1) * H)
        grads[f"W_{g}"] = dW[rows].copy()
        grads[f"U_{g}"] = dU[rows].copy()
        grads[f"b_{g}"] = db[rows].copy()
    return grads, dx


@dataclass
class BidirectionalCache:
    forward: DirectionalCache
    backward: DirectionalCache

    @property
    def batched(self) -> bool:
        return self.forward.batched


def bidirectional_encode(layer: BidirectionalLayer, sequence: np.ndarray,
                         mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, BidirectionalCache]:
    """
    양방향 인코딩: 마지막 실제 토큰의 정방향 h + 첫 실제 토큰의 역방향 h

    Args:
        layer: 양방향 층
        sequence: (T, E) 또는 (T, B, E) 입력
        mask: 실제 토큰 마스크

    Returns:
        Tuple[np.ndarray, BidirectionalCache]: 합쳐진 표현 (H,) 또는 (B, H), 캐시
    """
    _, forward_state, forward_cache = directional_pass(layer.forward_params, sequence, mask, Direction.FORWARD)
    _, backward_state, backward_cache = directional_pass(layer.backward_params, sequence, mask, Direction.BACKWARD)
    pooled = forward_state.h + backward_state.h
    return pooled, BidirectionalCache(forward_cache, backward_cache)


def bptt(layer: BidirectionalLayer, cache: BidirectionalCache,
         upstream: np.ndarray) -> Tuple[Dict[str, Dict[str, np.ndarray]], np.ndarray]:
    """
    양방향 층의 역전파

    Args:
        layer: 양방향 층
        cache: bidirectional_encode의 캐시
        upstream: 합쳐진 표현에 대한 기울기

    Returns:
        Tuple: ({"forward": 블록 기울기, "backward": 블록 기울기}, 입력 벡터 기울기)
    """
    forward_grads, dx_forward = directional_backward(layer.forward_params, cache.forward, upstream)
    backward_grads, dx_backward = directional_backward(layer.backward_params, cache.backward, upstream)
    dx = dx_forward + dx_backward
    if not cache.batched:
        dx = dx[:, 0, :]
    return {"forward": forward_grads, "backward": backward_grads}, dx
