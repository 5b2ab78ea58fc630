"""
data.py - 데이터셋 로딩/분할/미니배치 모듈

IDX(MNIST), CSV, 가우시안 blob 생성기에서 LabeledDataset을 만들고
시드 기반으로 분할하고 에포크별 미니배치를 생성하는 순수 함수들.
"""

import gzip
import logging
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from errors import (
    ArgumentError,
    ConsistencyError,
    DataFormatError,
    ParseError,
    SchemaError,
    TruncatedFileError,
)

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MNIST_CLASSES = 10


# =============================================================================
# [1] 데이터 타입
# =============================================================================

@dataclass(frozen=True)
class LabeledDataset:
    """
    특징 행렬 + 관측 라벨 + 숨겨진 실제 라벨.

    Attributes:
        features: (N, D) float64, 값 범위 [0, 1]
        true_labels: (N,) 실제 클래스 (평가/노이즈 추적용)
        observed_labels: (N,) 학습에 쓰이는 관측 라벨
        sample_ids: (N,) 고유 ID. 로더는 0..N-1을 부여하고, 부분집합은 부모 ID를 유지
        num_classes: 클래스 수 C (>= 2)
        corrupted: noise.corrupt()가 적용되었는지 여부
    """

    features: np.ndarray
    true_labels: np.ndarray
    observed_labels: np.ndarray
    sample_ids: np.ndarray
    num_classes: int
    corrupted: bool = False

    def __post_init__(self):
        n = len(self.sample_ids)
        if n < 1:
            raise ArgumentError("데이터셋이 비어 있습니다.")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ConsistencyError(f"features 크기 {self.features.shape}가 샘플 수 {n}과 맞지 않습니다.")
        if len(self.true_labels) != n or len(self.observed_labels) != n:
            raise ConsistencyError("라벨 배열 길이가 샘플 수와 다릅니다.")
        if self.num_classes < 2:
            raise ArgumentError(f"클래스 수는 2 이상이어야 합니다: {self.num_classes}")
        for name, labels in (("true_labels", self.true_labels), ("observed_labels", self.observed_labels)):
            if labels.min() < 0 or labels.max() >= self.num_classes:
                raise ArgumentError(f"{name} 값이 [0, {self.num_classes}) 범위를 벗어났습니다.")
        if len(np.unique(self.sample_ids)) != n:
            raise ConsistencyError("sample_ids에 중복이 있습니다.")

    @property
    def num_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def noisy_mask(self) -> np.ndarray:
        return self.observed_labels != self.true_labels

    def positions_of(self, ids) -> np.ndarray:
        """ID -> 행 위치 (없는 ID는 -1)"""
        return pd.Index(self.sample_ids).get_indexer(np.asarray(ids))

    def subset(self, positions: np.ndarray) -> "LabeledDataset":
        positions = np.asarray(positions)
        return replace(
            self,
            features=self.features[positions],
            true_labels=self.true_labels[positions],
            observed_labels=self.observed_labels[positions],
            sample_ids=self.sample_ids[positions],
        )


@dataclass(frozen=True)
class Batch:
    sample_ids: np.ndarray
    features: np.ndarray
    observed_labels: np.ndarray
    true_labels: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.sample_ids)


@dataclass(frozen=True)
class BlobSpec:
    num_classes: int
    dim: int
    samples_per_class: int
    center_spread: float = 1.0
    cluster_std: float = 0.3

    def __post_init__(self):
        if self.num_classes < 2:
            raise ArgumentError(f"num_classes는 2 이상이어야 합니다: {self.num_classes}")
        if self.dim < 1:
            raise ArgumentError(f"dim은 1 이상이어야 합니다: {self.dim}")
        if self.samples_per_class < 1:
            raise ArgumentError(f"samples_per_class는 1 이상이어야 합니다: {self.samples_per_class}")
        if self.center_spread <= 0 or self.cluster_std <= 0:
            raise ArgumentError("center_spread, cluster_std는 양수여야 합니다.")


def _from_arrays(features: np.ndarray, labels: np.ndarray, num_classes: int) -> LabeledDataset:
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(
        features=np.ascontiguousarray(features, dtype=np.float64),
        true_labels=labels.copy(),
        observed_labels=labels.copy(),
        sample_ids=np.arange(len(labels), dtype=np.int64),
        num_classes=int(num_classes),
    )


# =============================================================================
# [2] IDX (MNIST) 로더
# =============================================================================

def _read_idx_bytes(path: str) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _unpack_header(raw: bytes, fmt: str, path: str) -> tuple:
    size = struct.calcsize(fmt)
    if len(raw) < size:
        raise TruncatedFileError(f"헤더가 잘렸습니다: {path}")
    return struct.unpack(fmt, raw[:size])


def load_idx(images_path: str, labels_path: str) -> LabeledDataset:
    """
    MNIST IDX 이미지/라벨 파일 쌍을 읽는다.

    Args:
        images_path: 이미지 파일 (magic 0x00000803, big-endian, .gz 허용)
        labels_path: 라벨 파일 (magic 0x00000801)

    Returns:
        N x (rows*cols) 특징, 픽셀/255 스케일, C = 10

    Raises:
        DataFormatError: 매직 넘버 불일치
        ConsistencyError: 이미지/라벨 개수 불일치
        TruncatedFileError: 선언된 크기보다 짧은 파일
    """
    image_raw = _read_idx_bytes(images_path)
    label_raw = _read_idx_bytes(labels_path)

    # 헤더: magic, count, rows, cols (모두 >I)
    magic = _unpack_header(image_raw, ">I", images_path)[0]
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"이미지 파일 매직 넘버 불일치 (0x{magic:08X}): {images_path}")
    _, count, rows, cols = _unpack_header(image_raw, ">IIII", images_path)

    magic = _unpack_header(label_raw, ">I", labels_path)[0]
    if magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f"라벨 파일 매직 넘버 불일치 (0x{magic:08X}): {labels_path}")
    _, label_count = _unpack_header(label_raw, ">II", labels_path)

    if count != label_count:
        raise ConsistencyError(f"이미지 {count}개, 라벨 {label_count}개로 개수가 다릅니다.")

    pixel_bytes = count * rows * cols
    if len(image_raw) < 16 + pixel_bytes:
        raise TruncatedFileError(f"이미지 데이터가 잘렸습니다: {images_path}")
    if len(label_raw) < 8 + count:
        raise TruncatedFileError(f"라벨 데이터가 잘렸습니다: {labels_path}")

    pixels = np.frombuffer(image_raw, dtype=np.uint8, count=pixel_bytes, offset=16)
    labels = np.frombuffer(label_raw, dtype=np.uint8, count=count, offset=8)
    if labels.size and labels.max() >= MNIST_CLASSES:
        raise DataFormatError(f"라벨 값 {labels.max()}이 0~9 범위를 벗어났습니다.")

    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    logger.info("IDX 로드 완료: %s (N=%d, D=%d)", images_path, count, rows * cols)
    return _from_arrays(features, labels, MNIST_CLASSES)


# =============================================================================
# [3] CSV 로더
# =============================================================================

def load_csv(path: str, label_column: str) -> LabeledDataset:
    """
    헤더가 있는 CSV를 읽어 컬럼별 min-max 정규화를 적용한다.

    Notes:
        - 상수 컬럼은 0으로 매핑
        - 숫자가 아닌 셀은 행/컬럼 위치와 함께 ParseError
    """
    df = pd.read_csv(path, dtype=str, keep_default_na=False)

    if label_column not in df.columns:
        raise SchemaError(f"라벨 컬럼 '{label_column}'이 없습니다. (컬럼: {', '.join(df.columns)})")
    if df.empty:
        raise SchemaError(f"데이터 행이 없습니다: {path}")

    numeric = df.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna()
    if bad.to_numpy().any():
        row_pos, col_pos = np.argwhere(bad.to_numpy())[0]
        column = df.columns[col_pos]
        # 헤더가 1행이므로 데이터 행 번호는 +2
        raise ParseError(
            f"숫자가 아닌 셀: 행 {row_pos + 2}, 컬럼 '{column}', 값 '{df.iat[row_pos, col_pos]}'"
        )

    labels = numeric.pop(label_column)
    if not np.all(np.equal(np.mod(labels, 1), 0)) or (labels < 0).any():
        raise ParseError(f"라벨 컬럼 '{label_column}'은 0 이상의 정수여야 합니다.")
    labels = labels.astype(np.int64).to_numpy()

    # 컬럼별 min-max
    col_min = numeric.min()
    col_range = numeric.max() - col_min
    scaled = (numeric - col_min) / col_range.where(col_range > 0, 1.0)
    scaled.loc[:, col_range <= 0] = 0.0

    num_classes = max(2, int(labels.max()) + 1)
    return _from_arrays(scaled.to_numpy(dtype=np.float64), labels, num_classes)


# =============================================================================
# [4] 가우시안 blob 생성기
# =============================================================================

def _minmax_columns(x: np.ndarray) -> np.ndarray:
    low = x.min(axis=0)
    span = x.max(axis=0) - low
    scaled = np.where(span > 0, (x - low) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(scaled, 0.0, 1.0)


def gen_blobs(spec: BlobSpec, seed: int) -> LabeledDataset:
    """
    C개의 가우시안 클러스터 (클래스 순서대로 배치).

    클래스 c의 중심은 (seed, c)로 시드한 표준정규 벡터 * center_spread.
    전체 점구름을 컬럼별 affine 변환으로 [0, 1]에 맞춘 뒤 clamp.
    """
    parts, labels = [], []
    for c in range(spec.num_classes):
        center = np.random.default_rng([seed, c]).standard_normal(spec.dim) * spec.center_spread
        noise = np.random.default_rng([seed, c, 1]).standard_normal((spec.samples_per_class, spec.dim))
        parts.append(center + spec.cluster_std * noise)
        labels.append(np.full(spec.samples_per_class, c, dtype=np.int64))

    features = _minmax_columns(np.vstack(parts))
    return _from_arrays(features, np.concatenate(labels), spec.num_classes)


# =============================================================================
# [5] 분할 / 미니배치
# =============================================================================

def split(dataset: LabeledDataset, test_fraction: float, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    시드 순열로 train/test를 나눈다. 두 부분 모두 원래 ID 순서를 유지.

    test 쪽은 항상 실제 라벨만 가진다 (observed = true, corrupted=False).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ArgumentError(f"test_fraction은 (0, 1) 범위여야 합니다: {test_fraction}")
    n = dataset.num_samples
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ArgumentError(f"N={n}, test_fraction={test_fraction}이면 한쪽이 비게 됩니다.")

    perm = np.random.default_rng(seed).permutation(n)
    test_pos = np.sort(perm[:n_test])
    train_pos = np.sort(perm[n_test:])

    test = dataset.subset(test_pos)
    test = replace(test, observed_labels=test.true_labels.copy(), corrupted=False)
    return dataset.subset(train_pos), test


def limit(dataset: LabeledDataset, max_samples: Optional[int], seed: int) -> LabeledDataset:
    """시드 순열의 앞 max_samples개만 남긴다 (MNIST 1만 개 부분집합 등)"""
    if max_samples is None or max_samples >= dataset.num_samples:
        return dataset
    if max_samples < 1:
        raise ArgumentError(f"limit은 1 이상이어야 합니다: {max_samples}")
    perm = np.random.default_rng([seed, 7]).permutation(dataset.num_samples)
    return dataset.subset(np.sort(perm[:max_samples]))


def num_batches(dataset: LabeledDataset, batch_size: int) -> int:
    return dataset.num_samples // batch_size


def batches(dataset: LabeledDataset, batch_size: int, seed: int, epoch: int) -> Iterator[Batch]:
    """
    에포크별 재셔플 미니배치. (seed, epoch)가 같으면 같은 순서.

    floor(N / batch_size)개를 내보내고 남는 꼬리 배치는 버린다.
    """
    n = dataset.num_samples
    if batch_size < 1 or batch_size > n:
        raise ArgumentError(f"batch_size는 1 이상 N({n}) 이하여야 합니다: {batch_size}")

    order = np.random.default_rng([seed, epoch]).permutation(n)
    for i in range(n // batch_size):
        pos = order[i * batch_size:(i + 1) * batch_size]
        yield Batch(
            sample_ids=dataset.sample_ids[pos],
            features=dataset.features[pos],
            observed_labels=dataset.observed_labels[pos],
            true_labels=dataset.true_labels[pos],
        )
