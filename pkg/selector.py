"""
selector.py - 확률 차이(δ) 히스토그램 기반 샘플 선택기

δ = p_y - max_{m≠y} p_m 를 샘플마다 계산하고, 최근 미니배치들의 δ로
H-bin 히스토그램(슬라이딩 윈도우)을 유지하면서 임계값 δ̂를 정한다.
δ̂보다 큰 샘플만 가중치 1로 학습에 쓰인다.

두 가지 운영 방식:
    - τ 주어짐: PCF(x) > R(T)를 만족하는 가장 작은 bin의 하한이 δ̂
    - τ 없음: δ̂ = min(T/T_k, 1) - 1 로 워밍업, ζ가 임계값을 넘으면
      윈도우의 δ < 0 비율로 τ를 추정하고 τ 주어짐 방식으로 전환
"""

import logging
import threading
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from config import (
    DEFAULT_BINS,
    DEFAULT_RAMP_EPOCHS,
    DEFAULT_WINDOW_FRACTION,
    DEFAULT_ZETA_THRESHOLD,
)
from errors import ArgumentError, StateError

logger = logging.getLogger(__name__)

# 모든 샘플 선택 (δ > -inf 는 항상 참)
SELECT_ALL = float("-inf")


def is_select_all(delta_hat: float) -> bool:
    return delta_hat == SELECT_ALL


# =============================================================================
# [1] 설정 / 상태 타입
# =============================================================================

class Phase(str, Enum):
    WARMUP_KNOWN_TAU = "warmup_known_tau"
    WARMUP_NO_TAU = "warmup_no_tau"
    ESTIMATED = "estimated"


class Statistic(str, Enum):
    DELTA = "delta"  # p_y - p_n, 구간 [-1, 1]
    PY = "py"        # p_y, 구간 [0, 1]


@dataclass(frozen=True)
class SelectorConfig:
    """
    Attributes:
        H: bin 수 (짝수, 기본 200)
        M: 한 에포크 미니배치 중 윈도우에 담는 비율 (0이면 현재 배치만)
        T_k: 드롭 비율 램프 에포크 수
        tau: 알려진 노이즈 비율 (None이면 추정)
        zeta_threshold: τ 추정을 트리거하는 ζ 임계값
        batch_size: S_batch
        iters_per_epoch: Iter_epoch
        estimate_tau: False면 τ 없음 모드에서 추정 전환을 하지 않음
    """

    H: int = DEFAULT_BINS
    M: float = DEFAULT_WINDOW_FRACTION
    T_k: int = DEFAULT_RAMP_EPOCHS
    tau: Optional[float] = None
    zeta_threshold: float = DEFAULT_ZETA_THRESHOLD
    batch_size: int = 128
    iters_per_epoch: int = 1
    estimate_tau: bool = True

    def __post_init__(self):
        if self.H < 2 or self.H % 2:
            raise ArgumentError(f"H는 2 이상의 짝수여야 합니다: {self.H}")
        if not 0.0 <= self.M <= 1.0:
            raise ArgumentError(f"M은 [0, 1] 범위여야 합니다: {self.M}")
        if self.T_k < 1:
            raise ArgumentError(f"T_k는 1 이상이어야 합니다: {self.T_k}")
        if self.tau is not None and not 0.0 <= self.tau < 1.0:
            raise ArgumentError(f"tau는 [0, 1) 범위여야 합니다: {self.tau}")
        if not 0.0 < self.zeta_threshold <= 1.0:
            raise ArgumentError(f"zeta_threshold는 (0, 1] 범위여야 합니다: {self.zeta_threshold}")
        if self.batch_size < 1 or self.iters_per_epoch < 1:
            raise ArgumentError("batch_size, iters_per_epoch는 1 이상이어야 합니다.")

    @property
    def window_capacity(self) -> int:
        """max(1, round(M·Iter_epoch))·S_batch"""
        return max(1, int(round(self.M * self.iters_per_epoch))) * self.batch_size


@dataclass(frozen=True)
class SelectorState:
    phase: Phase
    delta_hat: float = SELECT_ALL
    current_R: float = 0.0
    zeta: float = 0.0
    tau_est: Optional[float] = None
    epoch: int = 1
    tau_est_fallback: bool = False


# =============================================================================
# [2] δ 와 bin 규칙
# =============================================================================

def prob_diff(probs: np.ndarray, y: int) -> float:
    """δ = p_y - (p_y를 제외한 최대 성분)"""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] < 2:
        raise ArgumentError("클래스가 2개 미만이면 δ를 정의할 수 없습니다.")
    if not 0 <= y < probs.shape[-1]:
        raise ArgumentError(f"라벨 {y}가 범위를 벗어났습니다.")
    others = np.delete(probs, y)
    return float(probs[y] - others.max())


def batch_prob_diff(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """배치 버전: 행마다 δ"""
    rows = np.arange(len(labels))
    p_y = probs[rows, labels]
    masked = probs.copy()
    masked[rows, labels] = -np.inf
    return p_y - masked.max(axis=1)


def batch_p_y(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return probs[np.arange(len(labels)), labels]


class BinScale:
    """
    통계량 구간 [low, high]를 H개 bin으로 나눈다.

    bin x (1..H)의 범위는 (edge_x, edge_{x+1}]. 소속 bin은 같은 하한 배열에
    대한 searchsorted로 계산하므로 "δ > edge(x*)" 와 "bin(δ) ≥ x*"가
    부동소수 수준에서도 정확히 일치한다 (구간 최솟값만 bin 1로 클램프).
    """

    def __init__(self, H: int, statistic: Statistic = Statistic.DELTA):
        self.H = int(H)
        self.statistic = Statistic(statistic)
        x = np.arange(1, self.H + 1)
        if self.statistic is Statistic.DELTA:
            self.lower_edges = 2.0 * (x - 1) / self.H - 1.0
            self.low, self.high = -1.0, 1.0
        else:
            self.lower_edges = (x - 1) / self.H
            self.low, self.high = 0.0, 1.0
        self.upper_edges = np.append(self.lower_edges[1:], self.high)

    def bin_of(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < self.low) or np.any(values > self.high) or np.any(np.isnan(values)):
            raise ArgumentError(f"값이 [{self.low}, {self.high}] 범위를 벗어났습니다.")
        bins = np.searchsorted(self.lower_edges, values, side="left")
        return np.maximum(bins, 1)


def bin_of(delta: float, H: int) -> int:
    """x = ⌈H·(δ+1)/2⌉, δ=-1이면 1"""
    return int(BinScale(H).bin_of(delta))


def bin_lower_edge(x: int, H: int) -> float:
    if not 1 <= x <= H:
        raise ArgumentError(f"bin 번호 {x}가 [1, {H}] 범위를 벗어났습니다.")
    return 2.0 * (x - 1) / H - 1.0


def histogram_counts(values: np.ndarray, scale: BinScale) -> np.ndarray:
    """버퍼 전체에서 처음부터 다시 세는 히스토그램 (검증용 기준)"""
    if len(values) == 0:
        return np.zeros(scale.H, dtype=np.int64)
    return np.bincount(scale.bin_of(values) - 1, minlength=scale.H).astype(np.int64)


# =============================================================================
# [3] 슬라이딩 윈도우 (DIST_sub)
# =============================================================================

class DiffWindow:
    """
    최근 capacity개 통계값의 링 버퍼 + 동기화된 bin 카운트.

    push는 FIFO로 가장 오래된 값부터 밀어낸다. 읽기 스냅샷(pdf, pcf, ζ)은
    lock으로 push와 원자적으로 분리된다.
    """

    def __init__(self, capacity: int, H: int = DEFAULT_BINS, statistic: Statistic = Statistic.DELTA):
        if capacity < 1:
            raise ArgumentError(f"윈도우 용량은 1 이상이어야 합니다: {capacity}")
        self.capacity = int(capacity)
        self.scale = BinScale(H, statistic)
        self.bin_counts = np.zeros(self.scale.H, dtype=np.int64)
        self._values = np.zeros(self.capacity, dtype=np.float64)
        self._ids = np.full(self.capacity, -1, dtype=np.int64)
        self._bins = np.zeros(self.capacity, dtype=np.int64)
        self._filled = np.zeros(self.capacity, dtype=bool)
        self._head = 0
        self.total = 0
        self._lock = threading.Lock()

    @property
    def H(self) -> int:
        return self.scale.H

    @property
    def is_full(self) -> bool:
        return self.total == self.capacity

    def push(self, values, ids=None) -> "DiffWindow":
        values = np.asarray(values, dtype=np.float64).ravel()
        bins = self.scale.bin_of(values)
        ids = np.full(len(values), -1, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        if len(ids) != len(values):
            raise ArgumentError("ids 길이가 값 개수와 다릅니다.")

        # 용량보다 많으면 마지막 capacity개만 살아남는다
        if len(values) > self.capacity:
            values, bins, ids = values[-self.capacity:], bins[-self.capacity:], ids[-self.capacity:]

        with self._lock:
            pos = (self._head + np.arange(len(values))) % self.capacity
            evicted = pos[self._filled[pos]]
            np.subtract.at(self.bin_counts, self._bins[evicted] - 1, 1)
            np.add.at(self.bin_counts, bins - 1, 1)

            self._values[pos] = values
            self._bins[pos] = bins
            self._ids[pos] = ids
            self._filled[pos] = True
            self._head = (self._head + len(values)) % self.capacity
            self.total = min(self.capacity, self.total + len(values))
        return self

    def contents(self) -> Tuple[np.ndarray, np.ndarray]:
        """(값, ID)를 오래된 순서로"""
        with self._lock:
            if self.total < self.capacity:
                order = np.arange(self._head - self.total, self._head) % self.capacity
            else:
                order = (self._head + np.arange(self.capacity)) % self.capacity
            return self._values[order].copy(), self._ids[order].copy()

    def counts_snapshot(self) -> Tuple[np.ndarray, int]:
        with self._lock:
            return self.bin_counts.copy(), self.total

    def rebuild_counts(self) -> np.ndarray:
        values, _ = self.contents()
        return histogram_counts(values, self.scale)


def pdf(window: DiffWindow) -> np.ndarray:
    counts, total = window.counts_snapshot()
    if total == 0:
        raise StateError("빈 윈도우의 PDF는 정의되지 않습니다.")
    return counts / total


def pcf(window: DiffWindow) -> np.ndarray:
    counts, total = window.counts_snapshot()
    if total == 0:
        raise StateError("빈 윈도우의 PCF는 정의되지 않습니다.")
    return np.cumsum(counts) / total


# =============================================================================
# [4] 임계값 / ζ / τ 추정
# =============================================================================

def drop_rate(T: int, T_k: int, tau: float) -> float:
    """R(T) = τ·min(T/T_k, 1)"""
    if T < 1:
        raise ArgumentError(f"에포크는 1부터 시작합니다: {T}")
    return tau * min(T / T_k, 1.0)


def threshold_with_tau(window: DiffWindow, R: float) -> float:
    """
    PCF(x) > R 를 만족하는 가장 작은 x의 bin 하한.

    pcf()와 같은 (정수 누적 / 전체) 나눗셈으로 비교하므로 pcf[x*-1] ≤ R < pcf[x*]가
    그대로 성립한다.

    Notes:
        x* = 1이면 bin_lower_edge(1) = -1 대신 SELECT_ALL을 돌려준다. bin 1은
        δ = -1을 포함하므로 "bin ≥ x*" 선택은 전부 선택이고, -1.0을 그대로
        δ̂로 쓰면 δ ≤ δ̂ 규칙 때문에 δ = -1 샘플이 드롭된다. 이때 지표의
        delta_hat은 null로 기록된다. 빈 윈도우도 SELECT_ALL.
    """
    if not 0.0 <= R < 1.0:
        raise ArgumentError(f"R은 [0, 1) 범위여야 합니다: {R}")
    counts, total = window.counts_snapshot()
    if total == 0:
        return SELECT_ALL
    cumulative = np.cumsum(counts) / total
    x_star = int(np.argmax(cumulative > R)) + 1
    if x_star == 1:
        return SELECT_ALL
    return float(window.scale.lower_edges[x_star - 1])


def threshold_without_tau(T: int, T_k: int) -> float:
    """δ̂ = min(T/T_k, 1) - 1"""
    if T < 1:
        raise ArgumentError(f"에포크는 1부터 시작합니다: {T}")
    return min(T / T_k, 1.0) - 1.0


def zeta(window: DiffWindow) -> float:
    """ζ = Σ |bin 하한|·PDF(x), 양자화된 E|δ|"""
    return float(np.sum(np.abs(window.scale.lower_edges) * pdf(window)))


def negative_fraction(window: DiffWindow) -> float:
    values, _ = window.contents()
    if len(values) == 0:
        raise StateError("빈 윈도우에서는 τ를 추정할 수 없습니다.")
    return float(np.mean(values < 0))


def maybe_estimate_tau(state: SelectorState, window: DiffWindow, config: SelectorConfig) -> SelectorState:
    """
    T ≥ T_k 이고 윈도우가 가득 찼을 때 ζ가 임계값을 넘으면
    δ < 0 비율을 τ 추정값으로 정하고 ESTIMATED 단계로 전환한다 (한 번만).
    """
    if state.phase is not Phase.WARMUP_NO_TAU:
        raise StateError(f"τ 추정은 {Phase.WARMUP_NO_TAU.value} 단계에서만 가능합니다: {state.phase.value}")
    if state.epoch < config.T_k or not window.is_full:
        return state

    current_zeta = zeta(window)
    if current_zeta <= config.zeta_threshold:
        return state

    tau_est = negative_fraction(window)
    logger.info("ζ=%.4f > %.2f: τ 추정 %.4f (에포크 %d)", current_zeta, config.zeta_threshold, tau_est, state.epoch)
    return replace(state, phase=Phase.ESTIMATED, zeta=current_zeta, tau_est=tau_est)


def weights(deltas, delta_hat: float) -> np.ndarray:
    """ω = 1 iff δ > δ̂ (SELECT_ALL이면 전부 1)"""
    deltas = np.asarray(deltas, dtype=np.float64)
    return (deltas > delta_hat).astype(np.float64)


# =============================================================================
# [5] 히스토그램 스냅샷 (DIST_all / DIST_clean / DIST_noise)
# =============================================================================

def histogram_snapshot(window: DiffWindow, noisy_flags: np.ndarray) -> pd.DataFrame:
    """
    윈도우 내용을 실제 노이즈 여부로 나눠 bin별 PDF를 만든다.

    Args:
        window: 현재 윈도우
        noisy_flags: window.contents() 순서와 같은 bool 배열

    Returns:
        DataFrame (bin, lower_edge, upper_edge, pdf_all, pdf_clean, pdf_noise)
        pdf_clean + pdf_noise == pdf_all (둘 다 전체 개수로 정규화)
    """
    values, _ = window.contents()
    noisy_flags = np.asarray(noisy_flags, dtype=bool)
    if len(noisy_flags) != len(values):
        raise ArgumentError("noisy_flags 길이가 윈도우 크기와 다릅니다.")
    total = max(len(values), 1)
    scale = window.scale

    clean = histogram_counts(values[~noisy_flags], scale)
    noisy = histogram_counts(values[noisy_flags], scale)
    return pd.DataFrame({
        "bin": np.arange(1, scale.H + 1),
        "lower_edge": scale.lower_edges,
        "upper_edge": scale.upper_edges,
        "pdf_all": (clean + noisy) / total,
        "pdf_clean": clean / total,
        "pdf_noise": noisy / total,
    })


# =============================================================================
# [6] 학습 루프용 선택기
# =============================================================================

class SampleSelector:
    """
    학습 루프가 미니배치마다 호출하는 상태 기계.

    순서 (배치마다):
        1. 현재 윈도우로 δ̂ 결정 (윈도우가 한 배치도 안 차 있으면 SELECT_ALL)
        2. 배치의 통계값으로 ω 계산
        3. 배치의 통계값을 전부(드롭 샘플 포함) 윈도우에 push
        4. τ 없음 모드면 ζ 확인 후 τ 추정
    """

    def __init__(self, config: SelectorConfig, statistic: Statistic = Statistic.DELTA, select_all: bool = False):
        self.config = config
        self.statistic = Statistic(statistic)
        self.select_all = select_all
        self.window = DiffWindow(config.window_capacity, config.H, self.statistic)
        phase = Phase.WARMUP_KNOWN_TAU if config.tau is not None or select_all else Phase.WARMUP_NO_TAU
        self.state = SelectorState(phase=phase)

    def begin_epoch(self, T: int) -> None:
        self.state = replace(self.state, epoch=T)

    def statistic_of(self, probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
        if self.statistic is Statistic.DELTA:
            return batch_prob_diff(probs, labels)
        return batch_p_y(probs, labels)

    def _current_threshold(self) -> Tuple[float, float]:
        cfg, state = self.config, self.state
        if self.select_all or self.window.total < cfg.batch_size:
            return SELECT_ALL, 0.0

        if state.phase is Phase.WARMUP_NO_TAU:
            return threshold_without_tau(state.epoch, cfg.T_k), 0.0

        tau = cfg.tau if state.phase is Phase.WARMUP_KNOWN_TAU else state.tau_est
        R = drop_rate(state.epoch, cfg.T_k, tau)
        # R = 0이면 아무것도 드롭하지 않는다
        if R <= 0.0:
            return SELECT_ALL, R
        return threshold_with_tau(self.window, R), R

    def step(self, probs: np.ndarray, labels: np.ndarray, ids: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Returns:
            (omegas, values): 샘플 가중치와 배치의 통계값(δ 또는 p_y)
        """
        delta_hat, R = self._current_threshold()
        values = self.statistic_of(probs, labels)
        omegas = weights(values, delta_hat)

        self.window.push(values, ids)
        self.state = replace(self.state, delta_hat=delta_hat, current_R=R)

        if self.state.phase is Phase.WARMUP_NO_TAU and self.config.estimate_tau:
            self.state = maybe_estimate_tau(self.state, self.window, self.config)

        logger.debug(
            "δ̂=%s R=%.4f 선택 %d/%d",
            "ALL" if is_select_all(delta_hat) else f"{delta_hat:.4f}", R, int(omegas.sum()), len(omegas),
        )
        return omegas, values

    def current_zeta(self) -> Optional[float]:
        if self.statistic is not Statistic.DELTA or self.window.total == 0:
            return None
        return zeta(self.window)

    def finalize(self) -> SelectorState:
        """학습 종료 시 ζ 트리거가 없었으면 마지막 윈도우로 τ를 보고용으로 추정"""
        if self.state.phase is Phase.WARMUP_NO_TAU and self.window.total > 0:
            tau_est = negative_fraction(self.window)
            logger.warning("ζ가 임계값을 넘지 못했습니다. 종료 시점 τ 추정값 %.4f (학습에는 미사용)", tau_est)
            self.state = replace(self.state, tau_est=tau_est, tau_est_fallback=True)
        return self.state

    def selected_fraction_in_window(self) -> float:
        """현재 δ̂ 기준으로 윈도우에서 선택될 비율 (1 - PCF(δ̂))"""
        if is_select_all(self.state.delta_hat) or self.window.total == 0:
            return 1.0
        values, _ = self.window.contents()
        return float(np.mean(values > self.state.delta_hat))

