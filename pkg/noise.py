"""
noise.py - 라벨 오염(Symmetry / Pair flipping)과 드롭 집합 채점

실제 라벨은 그대로 두고 관측 라벨만 뒤집으므로, 어떤 선택 마스크든
실제 노이즈 여부로 정밀도/재현율을 계산할 수 있다.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import pandas as pd

from data import LabeledDataset
from errors import ArgumentError, StateError

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    SYMMETRY = "symmetry"
    PAIR = "pair"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.SYMMETRY
    rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if not 0.0 <= self.rate < 1.0:
            raise ArgumentError(f"노이즈 비율은 [0, 1) 범위여야 합니다: {self.rate}")


@dataclass(frozen=True)
class DropSetScore:
    precision: float
    recall: float
    dropped_count: int


# =============================================================================
# [1] 전이 행렬
# =============================================================================

def build_transition_matrix(kind, tau: float, num_classes: int) -> np.ndarray:
    """
    C x C 행 확률 행렬.

    - symmetry: 대각 1-τ, 나머지 τ/(C-1)
    - pair: 대각 1-τ, (i, (i+1) mod C) = τ
    """
    kind = NoiseKind(kind)
    if num_classes < 2:
        raise ArgumentError(f"클래스 수는 2 이상이어야 합니다: {num_classes}")
    if not 0.0 <= tau < 1.0:
        raise ArgumentError(f"τ는 [0, 1) 범위여야 합니다: {tau}")

    if kind is NoiseKind.SYMMETRY:
        matrix = np.full((num_classes, num_classes), tau / (num_classes - 1))
    else:
        matrix = np.zeros((num_classes, num_classes))
        rows = np.arange(num_classes)
        matrix[rows, (rows + 1) % num_classes] = tau
    np.fill_diagonal(matrix, 1.0 - tau)
    return matrix


# =============================================================================
# [2] 오염
# =============================================================================

def flip_count(tau: float, n: int) -> int:
    # 0.29 * 100 = 28.999... 같은 부동소수 오차 보정
    return int(math.floor(tau * n + 1e-9))


def corrupt(dataset: LabeledDataset, spec: NoiseSpec, seed: int) -> LabeledDataset:
    """
    정확히 floor(τ·N)개 샘플의 관측 라벨을 뒤집는다.

    Args:
        dataset: 오염되지 않은 데이터셋 (observed == true)
        spec: 노이즈 종류와 비율
        seed: 뒤집을 샘플 선택 및 대상 클래스 추첨 시드

    Returns:
        corrupted=True인 새 데이터셋 (true_labels는 그대로)

    Notes:
        - pair: 새 라벨 = (y + 1) mod C
        - symmetry: 자기 클래스를 제외한 C-1개 클래스에서 균등 추첨
    """
    if dataset.corrupted or dataset.noisy_mask.any():
        raise StateError("이미 오염된 데이터셋은 다시 오염시킬 수 없습니다.")

    n = dataset.num_samples
    c = dataset.num_classes
    n_flip = flip_count(spec.rate, n)

    rng = np.random.default_rng(seed)
    flip_pos = rng.permutation(n)[:n_flip]
    observed = dataset.observed_labels.copy()
    original = observed[flip_pos]

    if spec.kind is NoiseKind.PAIR:
        observed[flip_pos] = (original + 1) % c
    else:
        offsets = rng.integers(1, c, size=n_flip)
        observed[flip_pos] = (original + offsets) % c

    logger.info("라벨 오염: %s %.2f -> %d/%d개 뒤집음", spec.kind.value, spec.rate, n_flip, n)
    return replace(dataset, observed_labels=observed, corrupted=True)


# =============================================================================
# [3] 채점 / 감사 파일
# =============================================================================

def score_drop_set(dataset: LabeledDataset, dropped_ids) -> DropSetScore:
    """
    드롭된 샘플 집합을 실제 노이즈 여부로 채점한다.

    Returns:
        DropSetScore
        - precision: 드롭 중 실제 노이즈 비율 (드롭이 없으면 0)
        - recall: 전체 노이즈 중 드롭된 비율 (노이즈가 없으면 1)
    """
    ids = np.unique(np.asarray(dropped_ids, dtype=np.int64))
    positions = dataset.positions_of(ids)
    if (positions < 0).any():
        unknown = ids[positions < 0][:5].tolist()
        raise ArgumentError(f"데이터셋에 없는 ID: {unknown}")

    noisy = dataset.noisy_mask
    hits = int(noisy[positions].sum())
    total_noisy = int(noisy.sum())

    precision = hits / len(ids) if len(ids) else 0.0
    recall = hits / total_noisy if total_noisy else 1.0
    return DropSetScore(precision=precision, recall=recall, dropped_count=len(ids))


def export_audit_csv(dataset: LabeledDataset, path) -> pd.DataFrame:
    """(id, true_label, observed_label) 감사용 CSV"""
    df = pd.DataFrame({
        "id": dataset.sample_ids,
        "true_label": dataset.true_labels,
        "observed_label": dataset.observed_labels,
    })
    df.to_csv(path, index=False)
    return df
