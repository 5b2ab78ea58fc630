"""
nn.py - 최소 MLP 분류기 (numpy)

순전파, softmax, 샘플 가중 교차 엔트로피, 역전파, 모멘텀 SGD,
중앙 차분 기울기 검사기, 체크포인트 저장/로드를 제공한다.
모든 연산은 float64, 행렬 곱의 합산 순서는 고정.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from config import LOG_EPS
from data import Batch, LabeledDataset
from errors import ArgumentError, DataFormatError, NumericError, ShapeError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pdiff-tensors/1"
EVAL_CHUNK = 4096


# =============================================================================
# [1] 파라미터 / 상태 타입
# =============================================================================

@dataclass
class NetworkParams:
    """
    Dense 층 목록. W_l 모양은 (d_in, d_out), 층 사이에는 ReLU.

    logits = relu(... relu(x W_0 + b_0) ...) W_L + b_L
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def tensors(self) -> List[Tuple[str, np.ndarray]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"W{i}", w))
            out.append((f"b{i}", b))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float
    velocity_w: List[np.ndarray] = field(default_factory=list)
    velocity_b: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ArgumentError(f"learning_rate는 양수여야 합니다: {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ArgumentError(f"momentum은 [0, 1) 범위여야 합니다: {self.momentum}")


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]      # 각 층에 들어간 입력
    pre_activations: List[np.ndarray]  # 은닉층 ReLU 이전 값


def init_optimizer(params: NetworkParams, learning_rate: float, momentum: float) -> OptimizerState:
    return OptimizerState(
        learning_rate=learning_rate,
        momentum=momentum,
        velocity_w=[np.zeros_like(w) for w in params.weights],
        velocity_b=[np.zeros_like(b) for b in params.biases],
    )


# =============================================================================
# [2] 초기화 / 순전파 / softmax
# =============================================================================

def init_network(layer_dims: Sequence[int], seed: int) -> NetworkParams:
    """
    가중치 ~ N(0, 1) / sqrt(fan_in), 편향 0.

    Args:
        layer_dims: [D, h_1, ..., C] (2개 이상, 모두 1 이상)
        seed: 시드 (같은 시드 -> 비트 단위 동일)
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ArgumentError(f"layer_dims는 2개 이상이어야 합니다: {dims}")
    if min(dims) < 1:
        raise ArgumentError(f"모든 차원은 1 이상이어야 합니다: {dims}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases)


def _as_features(batch: Union[Batch, np.ndarray]) -> np.ndarray:
    x = batch.features if isinstance(batch, Batch) else batch
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(1, -1) if x.ndim == 1 else x


def forward(params: NetworkParams, batch: Union[Batch, np.ndarray]) -> Tuple[np.ndarray, ForwardCache]:
    x = _as_features(batch)
    if x.shape[1] != params.layer_dims[0]:
        raise ShapeError(f"입력 차원 {x.shape[1]}이 layer_dims[0]={params.layer_dims[0]}과 다릅니다.")

    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h, ForwardCache(inputs=inputs, pre_activations=pre)


def softmax(logits: np.ndarray) -> np.ndarray:
    """
    행 단위 softmax (1차원이면 벡터 하나). 최댓값을 빼서 overflow 방지.

    Raises:
        NumericError: NaN/Inf 로짓
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("로짓에 NaN 또는 Inf가 있습니다.")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(params: NetworkParams, features: np.ndarray) -> np.ndarray:
    out = []
    for start in range(0, len(features), EVAL_CHUNK):
        logits, _ = forward(params, features[start:start + EVAL_CHUNK])
        out.append(softmax(logits))
    return np.vstack(out)


# =============================================================================
# [3] 손실 / 역전파
# =============================================================================

def weighted_ce_loss(probs: np.ndarray, y: int, omega: float) -> float:
    """L = -ω · log(max(p_y, ε))"""
    probs = np.asarray(probs)
    if not 0 <= y < len(probs):
        raise ArgumentError(f"라벨 {y}가 [0, {len(probs)}) 범위를 벗어났습니다.")
    if omega == 0:
        return 0.0
    return float(-omega * np.log(max(probs[y], LOG_EPS)))


def batch_losses(probs: np.ndarray, labels: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    """샘플별 가중 손실 벡터"""
    p_y = probs[np.arange(len(labels)), labels]
    return np.where(omegas > 0, -omegas * np.log(np.maximum(p_y, LOG_EPS)), 0.0)


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    probs: np.ndarray,
    labels: np.ndarray,
    omegas: np.ndarray,
    reduction: str = "mean",
) -> Gradients:
    """
    (1/S)·Σ L_s (reduction=sum이면 Σ L_s) 의 기울기.

    ω=0 샘플은 정확히 0을 기여하고, mean에서는 분모 S에 그대로 포함된다.
    클램프 영역(p_y < ε)의 기울기는 클램프 경계 기울기 (p - q)로 둔다.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    omegas = np.asarray(omegas, dtype=np.float64)
    s = probs.shape[0]
    if probs.shape != (cache.inputs[0].shape[0], params.num_classes):
        raise ShapeError(f"probs 모양 {probs.shape}이 순전파 캐시와 맞지 않습니다.")
    if labels.shape != (s,) or omegas.shape != (s,):
        raise ShapeError("labels/omegas 길이가 배치 크기와 다릅니다.")
    if reduction not in ("mean", "sum"):
        raise ArgumentError(f"reduction은 mean 또는 sum: {reduction}")

    delta = probs.copy()
    delta[np.arange(s), labels] -= 1.0
    delta *= omegas[:, None]
    if reduction == "mean":
        delta /= s

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = cache.inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (cache.pre_activations[i - 1] > 0)
    return Gradients(grad_w, grad_b)


def sgd_momentum_step(
    params: NetworkParams, grads: Gradients, state: OptimizerState
) -> Tuple[NetworkParams, OptimizerState]:
    """v' = momentum·v + g ; w' = w - η·v'"""
    if len(grads.weights) != len(params.weights):
        raise ShapeError("기울기 층 수가 파라미터와 다릅니다.")
    new_w, new_b, vel_w, vel_b = [], [], [], []
    for w, b, gw, gb, vw, vb in zip(
        params.weights, params.biases, grads.weights, grads.biases, state.velocity_w, state.velocity_b
    ):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError(f"기울기 모양 {gw.shape}이 파라미터 {w.shape}와 다릅니다.")
        vw = state.momentum * vw + gw
        vb = state.momentum * vb + gb
        vel_w.append(vw)
        vel_b.append(vb)
        new_w.append(w - state.learning_rate * vw)
        new_b.append(b - state.learning_rate * vb)
    new_state = OptimizerState(state.learning_rate, state.momentum, vel_w, vel_b)
    return NetworkParams(new_w, new_b), new_state


def evaluate(params: NetworkParams, dataset: LabeledDataset) -> float:
    """실제 라벨 기준 정확도. argmax 동률은 작은 클래스 인덱스로."""
    probs = predict_proba(params, dataset.features)
    predictions = np.argmax(probs, axis=1)
    return float(np.mean(predictions == dataset.true_labels))


# =============================================================================
# [4] 중앙 차분 기울기 검사
# =============================================================================

def _mean_or_sum_loss(params, features, labels, omegas, reduction) -> float:
    logits, _ = forward(params, features)
    losses = batch_losses(softmax(logits), labels, omegas)
    return float(losses.sum() / (len(labels) if reduction == "mean" else 1))


def finite_difference_gradients(
    params: NetworkParams,
    features: np.ndarray,
    labels: np.ndarray,
    omegas: np.ndarray,
    step: float = 1e-5,
    reduction: str = "mean",
) -> Gradients:
    grads = []
    for tensor in params.weights + params.biases:
        g = np.zeros_like(tensor)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = tensor[idx]
            tensor[idx] = original + step
            plus = _mean_or_sum_loss(params, features, labels, omegas, reduction)
            tensor[idx] = original - step
            minus = _mean_or_sum_loss(params, features, labels, omegas, reduction)
            tensor[idx] = original
            g[idx] = (plus - minus) / (2 * step)
        grads.append(g)
    n = len(params.weights)
    return Gradients(grads[:n], grads[n:])


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def gradient_check(
    layer_dims: Sequence[int],
    batch_size: int,
    seed: int,
    reduction: str = "mean",
    step: float = 1e-5,
) -> float:
    """
    무작위 소형 네트워크/배치에서 해석적 기울기와 중앙 차분의 최대 상대 오차.

    ω는 무작위 0/1 (전부 0이 되지 않게 첫 샘플은 1).
    """
    rng = np.random.default_rng([seed, 99])
    params = init_network(layer_dims, seed)
    # 편향을 0에서 떼어 놓아 ReLU 경계 근처를 피한다
    params.biases = [rng.normal(0.0, 0.1, size=b.shape) for b in params.biases]
    features = rng.random((batch_size, layer_dims[0]))
    labels = rng.integers(0, layer_dims[-1], size=batch_size)
    omegas = (rng.random(batch_size) > 0.3).astype(np.float64)
    omegas[0] = 1.0

    logits, cache = forward(params, features)
    analytic = backward(params, cache, softmax(logits), labels, omegas, reduction)
    numeric = finite_difference_gradients(params, features, labels, omegas, step, reduction)

    errors = [
        relative_error(a, n)
        for a, n in zip(analytic.weights + analytic.biases, numeric.weights + numeric.biases)
    ]
    return max(errors)


# =============================================================================
# [5] 체크포인트 (raw float64 + JSON 매니페스트)
# =============================================================================

def save_checkpoint(params: NetworkParams, stem) -> Tuple[Path, Path]:
    """
    <stem>.bin: 텐서들을 W0, b0, W1, b1, ... 순서로 이어붙인 little-endian float64
    <stem>.json: 이름/모양/오프셋(원소 단위) 매니페스트
    """
    stem = Path(stem)
    bin_path, manifest_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
    entries, offset, chunks = [], 0, []
    for name, tensor in params.tensors():
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        offset += tensor.size
        chunks.append(np.ascontiguousarray(tensor, dtype="<f8").ravel())

    bin_path.write_bytes(np.concatenate(chunks).tobytes())
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "dtype": "<f8",
        "nonlinearity": "relu",
        "layer_dims": params.layer_dims,
        "tensors": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return bin_path, manifest_path


def load_checkpoint(stem) -> NetworkParams:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataFormatError(f"지원하지 않는 체크포인트 형식: {manifest.get('format')}")
    flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")

    tensors = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"]))
        if entry["offset"] + count > flat.size:
            raise DataFormatError(f"체크포인트 데이터가 잘렸습니다: {entry['name']}")
        tensors[entry["name"]] = flat[entry["offset"]:entry["offset"] + count].reshape(entry["shape"]).astype(np.float64)

    n_layers = len(manifest["layer_dims"]) - 1
    return NetworkParams(
        [tensors[f"W{i}"] for i in range(n_layers)],
        [tensors[f"b{i}"] for i in range(n_layers)],
    )
