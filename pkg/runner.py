"""
runner.py - 실험 엔진

설정 파싱 → 데이터 준비/오염 → 모드별 학습 루프 → 에포크 지표(JSONL),
히스토그램 스냅샷(CSV), 요약(JSON) 기록. 드롭 비율 곡선과 요약 비교표도 만든다.

모드:
    pdiff             τ가 주어진 확률 차이 선택
    pdiff_no_tau      τ 없이 워밍업 후 ζ 트리거로 τ 추정
    pdiff_py_variant  δ 대신 p_y 히스토그램 사용
    normal            모든 샘플 학습 (기준선)
    clean_oracle      실제로 깨끗한 샘플만 학습 (상한)
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import dotenv_values

import config as settings
from components import export_excel_report
from data import (
    BlobSpec,
    LabeledDataset,
    batches,
    gen_blobs,
    limit,
    load_csv,
    load_idx,
    num_batches,
    split,
)
from errors import ArgumentError, ConfigError, LabError, RunError, StateError
from nn import (
    backward,
    batch_losses,
    evaluate,
    forward,
    init_network,
    init_optimizer,
    predict_proba,
    save_checkpoint,
    sgd_momentum_step,
    softmax,
)
from noise import NoiseKind, NoiseSpec, corrupt, export_audit_csv, score_drop_set
from selector import (
    DiffWindow,
    SampleSelector,
    SelectorConfig,
    Statistic,
    batch_p_y,
    batch_prob_diff,
    histogram_snapshot,
    is_select_all,
    threshold_with_tau,
)

logger = logging.getLogger(__name__)

# 드롭 비율 곡선 격자: 0.05 ~ 0.95 (19개)
DROP_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
LAST_EPOCHS = 10


# =============================================================================
# [1] 설정 타입
# =============================================================================

class Mode(str, Enum):
    PDIFF = "pdiff"
    PDIFF_NO_TAU = "pdiff_no_tau"
    PDIFF_PY_VARIANT = "pdiff_py_variant"
    NORMAL = "normal"
    CLEAN_ORACLE = "clean_oracle"


class DatasetSource(str, Enum):
    IDX = "idx"
    CSV = "csv"
    BLOBS = "blobs"


@dataclass(frozen=True)
class DatasetConfig:
    source: DatasetSource
    images: Optional[str] = None
    labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    path: Optional[str] = None
    label_column: str = "label"
    limit: Optional[int] = None
    test_fraction: float = settings.DEFAULT_TEST_FRACTION
    blobs: Optional[BlobSpec] = None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = settings.DEFAULT_EPOCHS
    batch_size: int = settings.DEFAULT_BATCH_SIZE
    lr: float = settings.DEFAULT_LEARNING_RATE
    momentum: float = settings.DEFAULT_MOMENTUM
    grad_reduction: str = "mean"


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    noise: NoiseSpec
    hidden: Tuple[int, ...]
    train: TrainConfig
    selector: SelectorConfig
    mode: Mode
    seed: int = 0
    output_dir: str = settings.OUTPUT_ROOT
    snapshot_epochs: Tuple[int, ...] = settings.DEFAULT_SNAPSHOT_EPOCHS
    flat: Dict[str, object] = field(default_factory=dict, compare=False, repr=False)


# =============================================================================
# [2] 설정 파싱
# =============================================================================

def _to_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"불리언이 아닙니다: {text}")


def _to_int_tuple(text: str) -> Tuple[int, ...]:
    text = str(text).strip()
    if not text:
        return ()
    return tuple(int(part) for part in text.split(","))


# 키 -> (변환 함수, 기본값). 기본값 None은 "없음"
CONFIG_KEYS: Dict[str, Tuple[Callable, object]] = {
    "dataset.source": (str, None),
    "dataset.images": (str, None),
    "dataset.labels": (str, None),
    "dataset.test_images": (str, None),
    "dataset.test_labels": (str, None),
    "dataset.path": (str, None),
    "dataset.label_column": (str, "label"),
    "dataset.limit": (int, None),
    "dataset.test_fraction": (float, settings.DEFAULT_TEST_FRACTION),
    "blobs.num_classes": (int, 4),
    "blobs.dim": (int, 16),
    "blobs.samples_per_class": (int, 250),
    "blobs.center_spread": (float, 1.0),
    "blobs.cluster_std": (float, 0.3),
    "noise.kind": (str, NoiseKind.SYMMETRY.value),
    "noise.rate": (float, 0.0),
    "model.hidden": (_to_int_tuple, settings.DEFAULT_HIDDEN),
    "train.epochs": (int, settings.DEFAULT_EPOCHS),
    "train.batch_size": (int, settings.DEFAULT_BATCH_SIZE),
    "train.lr": (float, settings.DEFAULT_LEARNING_RATE),
    "train.momentum": (float, settings.DEFAULT_MOMENTUM),
    "train.grad_reduction": (str, "mean"),
    "selector.H": (int, settings.DEFAULT_BINS),
    "selector.M": (float, settings.DEFAULT_WINDOW_FRACTION),
    "selector.T_k": (int, settings.DEFAULT_RAMP_EPOCHS),
    "selector.tau": (float, None),
    "selector.zeta_threshold": (float, settings.DEFAULT_ZETA_THRESHOLD),
    "selector.estimate_tau": (_to_bool, True),
    "mode": (str, None),
    "seed": (int, 0),
    "output_dir": (str, None),
    "output.snapshot_epochs": (_to_int_tuple, settings.DEFAULT_SNAPSHOT_EPOCHS),
}


def _convert(raw: Dict[str, Optional[str]]) -> Dict[str, object]:
    values = {}
    for key, (convert, default) in CONFIG_KEYS.items():
        text = raw.get(key)
        if text is None or (isinstance(text, str) and text.strip() == ""):
            values[key] = default
            continue
        if not isinstance(text, str):
            values[key] = text
            continue
        try:
            values[key] = convert(text.strip())
        except ValueError as e:
            raise ConfigError(f"설정 '{key}' 값 '{text}'을 해석할 수 없습니다: {e}") from e
    return values


def _enum_value(enum_cls, key: str, value):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(item.value for item in enum_cls)
        raise ConfigError(f"설정 '{key}' 값 '{value}'은 허용되지 않습니다. ({choices})") from None


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """
    평면 key = value 설정 파일 + CLI 오버라이드를 검증된 RunConfig로 만든다.

    Args:
        path: 설정 파일 경로 (없으면 오버라이드만 사용)
        overrides: 같은 점 표기 키의 값 (CLI 플래그)

    Returns:
        기본값이 모두 채워진 RunConfig

    Raises:
        ConfigError: 알 수 없는 키, 필수 키 누락, 형식/범위 오류
    """
    raw: Dict[str, object] = {}
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"설정 파일이 없습니다: {path}")
        raw.update(dotenv_values(path))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"알 수 없는 설정 키: {', '.join(unknown)}")

    values = _convert(raw)
    for required in ("dataset.source", "mode"):
        if values[required] is None:
            raise ConfigError(f"필수 설정 '{required}'이 없습니다.")

    source = _enum_value(DatasetSource, "dataset.source", values["dataset.source"])
    mode = _enum_value(Mode, "mode", values["mode"])
    _enum_value(NoiseKind, "noise.kind", values["noise.kind"])

    if source is DatasetSource.IDX and not (values["dataset.images"] and values["dataset.labels"]):
        raise ConfigError("dataset.source=idx에는 dataset.images, dataset.labels가 필요합니다.")
    if source is DatasetSource.CSV and not values["dataset.path"]:
        raise ConfigError("dataset.source=csv에는 dataset.path가 필요합니다.")
    if mode in (Mode.PDIFF, Mode.PDIFF_PY_VARIANT) and values["selector.tau"] is None:
        raise ConfigError(f"mode={mode.value}에는 selector.tau가 필요합니다.")
    if values["train.grad_reduction"] not in ("mean", "sum"):
        raise ConfigError(f"train.grad_reduction은 mean 또는 sum: {values['train.grad_reduction']}")
    if values["train.epochs"] < 1:
        raise ConfigError(f"train.epochs는 1 이상이어야 합니다: {values['train.epochs']}")
    if values["output_dir"] is None:
        values["output_dir"] = str(Path(settings.OUTPUT_ROOT) / f"{mode.value}_seed{values['seed']}")

    try:
        blobs = None
        if source is DatasetSource.BLOBS:
            blobs = BlobSpec(
                num_classes=values["blobs.num_classes"],
                dim=values["blobs.dim"],
                samples_per_class=values["blobs.samples_per_class"],
                center_spread=values["blobs.center_spread"],
                cluster_std=values["blobs.cluster_std"],
            )
        dataset = DatasetConfig(
            source=source,
            images=values["dataset.images"],
            labels=values["dataset.labels"],
            test_images=values["dataset.test_images"],
            test_labels=values["dataset.test_labels"],
            path=values["dataset.path"],
            label_column=values["dataset.label_column"],
            limit=values["dataset.limit"],
            test_fraction=values["dataset.test_fraction"],
            blobs=blobs,
        )
        noise = NoiseSpec(kind=values["noise.kind"], rate=values["noise.rate"])
        train = TrainConfig(
            epochs=values["train.epochs"],
            batch_size=values["train.batch_size"],
            lr=values["train.lr"],
            momentum=values["train.momentum"],
            grad_reduction=values["train.grad_reduction"],
        )
        selector = SelectorConfig(
            H=values["selector.H"],
            M=values["selector.M"],
            T_k=values["selector.T_k"],
            tau=values["selector.tau"],
            zeta_threshold=values["selector.zeta_threshold"],
            batch_size=train.batch_size,
            estimate_tau=values["selector.estimate_tau"],
        )
    except ArgumentError as e:
        raise ConfigError(f"설정 값 오류: {e}") from e

    if train.lr <= 0 or not 0.0 <= train.momentum < 1.0:
        raise ConfigError("train.lr > 0, 0 ≤ train.momentum < 1 이어야 합니다.")

    flat = {k: (list(v) if isinstance(v, tuple) else v) for k, v in values.items()}
    return RunConfig(
        dataset=dataset,
        noise=noise,
        hidden=tuple(values["model.hidden"]),
        train=train,
        selector=selector,
        mode=mode,
        seed=values["seed"],
        output_dir=values["output_dir"],
        snapshot_epochs=tuple(values["output.snapshot_epochs"]),
        flat=flat,
    )


# =============================================================================
# [3] 지표 / 요약 타입
# =============================================================================

@dataclass
class EpochMetrics:
    epoch: int
    train_loss_selected: float
    test_accuracy: float
    delta_hat: Optional[float]
    R: float
    zeta: Optional[float]
    tau_est: Optional[float]
    selected_fraction: float
    drop_precision: float
    drop_recall: float
    dropped_count: int
    phase: str
    tau_est_fallback: bool = False
    wall_time_seconds: float = 0.0

    def to_record(self) -> dict:
        """metrics.jsonl 한 줄. 벽시계 시간은 timing.jsonl로 분리 (재실행 시 바이트 동일)"""
        record = asdict(self)
        record.pop("wall_time_seconds")
        return record


@dataclass
class RunSummary:
    mode: str
    epochs: int
    avg_test_acc_last10: float
    final_test_accuracy: float
    final_tau_est: Optional[float]
    final_zeta: Optional[float]
    total_wall_time: float
    median_epoch_seconds: Optional[float] = None
    noise_rate: Optional[float] = None
    output_dir: Optional[str] = None

    @property
    def tau_est_error(self) -> Optional[float]:
        if self.final_tau_est is None or self.noise_rate is None:
            return None
        return abs(self.final_tau_est - self.noise_rate)


# =============================================================================
# [4] 학습 엔진
# =============================================================================

def prepare_datasets(cfg: RunConfig) -> Tuple[LabeledDataset, LabeledDataset]:
    """데이터 로드 → (선택) 부분집합 → 분할 → 학습셋 오염"""
    ds = cfg.dataset
    if ds.source is DatasetSource.IDX:
        full = load_idx(ds.images, ds.labels)
        if ds.test_images and ds.test_labels:
            train, test = limit(full, ds.limit, cfg.seed), load_idx(ds.test_images, ds.test_labels)
        else:
            train, test = split(limit(full, ds.limit, cfg.seed), ds.test_fraction, cfg.seed)
    elif ds.source is DatasetSource.CSV:
        full = load_csv(ds.path, ds.label_column)
        train, test = split(limit(full, ds.limit, cfg.seed), ds.test_fraction, cfg.seed)
    else:
        full = gen_blobs(ds.blobs, cfg.seed)
        train, test = split(limit(full, ds.limit, cfg.seed), ds.test_fraction, cfg.seed)

    train = corrupt(train, cfg.noise, cfg.seed + 1)
    return train, test


class Experiment:
    """한 번의 학습 실행 상태 (네트워크, 옵티마이저, 선택기)"""

    def __init__(self, cfg: RunConfig, mode: Optional[Mode] = None):
        self.cfg = cfg
        self.mode = Mode(mode or cfg.mode)
        self.train, self.test = prepare_datasets(cfg)

        dims = [self.train.dim, *cfg.hidden, self.train.num_classes]
        self.params = init_network(dims, cfg.seed + 2)
        self.optimizer = init_optimizer(self.params, cfg.train.lr, cfg.train.momentum)

        iters = num_batches(self.train, cfg.train.batch_size)
        if iters < 1:
            raise ArgumentError(
                f"batch_size {cfg.train.batch_size}가 학습 샘플 수 {self.train.num_samples}보다 큽니다."
            )
        selector_cfg = replace(cfg.selector, batch_size=cfg.train.batch_size, iters_per_epoch=iters)
        if self.mode is Mode.PDIFF_NO_TAU:
            selector_cfg = replace(selector_cfg, tau=None)
        statistic = Statistic.PY if self.mode is Mode.PDIFF_PY_VARIANT else Statistic.DELTA
        select_all = self.mode in (Mode.NORMAL, Mode.CLEAN_ORACLE)
        self.selector = SampleSelector(selector_cfg, statistic, select_all=select_all)
        logger.info(
            "실험 준비: mode=%s, 학습 %d / 테스트 %d, 네트워크 %s, 윈도우 %d",
            self.mode.value, self.train.num_samples, self.test.num_samples, dims, self.selector.window.capacity,
        )

    def run_epoch(self, T: int, final: bool = False) -> EpochMetrics:
        """
        한 에포크 학습 (배치마다 선택 후 가중 역전파).

        배치마다: 순전파 → 선택기(δ̂, ω, 윈도우 갱신) → 가중 손실 역전파 → SGD
        """
        started = time.perf_counter()
        cfg = self.cfg
        self.selector.begin_epoch(T)

        dropped, seen, loss_sum, selected = [], 0, 0.0, 0
        for batch in batches(self.train, cfg.train.batch_size, cfg.seed + 3, T):
            logits, cache = forward(self.params, batch.features)
            probs = softmax(logits)
            omegas, _ = self.selector.step(probs, batch.observed_labels, batch.sample_ids)
            if self.mode is Mode.CLEAN_ORACLE:
                omegas = (batch.observed_labels == batch.true_labels).astype(np.float64)

            grads = backward(self.params, cache, probs, batch.observed_labels, omegas, cfg.train.grad_reduction)
            self.params, self.optimizer = sgd_momentum_step(self.params, grads, self.optimizer)

            loss_sum += float(batch_losses(probs, batch.observed_labels, omegas).sum())
            selected += int(omegas.sum())
            seen += len(batch)
            dropped.append(batch.sample_ids[omegas == 0])

        state = self.selector.finalize() if final else self.selector.state
        score = score_drop_set(self.train, np.concatenate(dropped) if dropped else [])
        accuracy = evaluate(self.params, self.test)

        return EpochMetrics(
            epoch=T,
            train_loss_selected=loss_sum / selected if selected else 0.0,
            test_accuracy=accuracy,
            delta_hat=None if is_select_all(state.delta_hat) else float(state.delta_hat),
            R=float(state.current_R),
            zeta=self.selector.current_zeta(),
            tau_est=state.tau_est,
            selected_fraction=selected / seen if seen else 1.0,
            drop_precision=score.precision,
            drop_recall=score.recall,
            dropped_count=score.dropped_count,
            phase=state.phase.value,
            tau_est_fallback=state.tau_est_fallback,
            wall_time_seconds=time.perf_counter() - started,
        )

    def snapshot(self) -> pd.DataFrame:
        _, ids = self.selector.window.contents()
        noisy = self.train.noisy_mask[self.train.positions_of(ids)]
        return histogram_snapshot(self.selector.window, noisy)


def _incomplete_marker(metrics_path: Path) -> Path:
    return metrics_path.with_name(metrics_path.name + settings.INCOMPLETE_SUFFIX)


def run(cfg: RunConfig) -> RunSummary:
    """
    설정된 모드로 전체 학습을 실행한다.

    출력 (cfg.output_dir):
        metrics.jsonl, timing.jsonl, hist_epoch_<T>.csv, config.json,
        noise_audit.csv, checkpoint.bin/.json, summary.json

    실패하면 metrics.jsonl.incomplete 표식이 남는다.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / settings.METRICS_FILE
    marker = _incomplete_marker(metrics_path)
    marker.touch()

    (out / settings.RESOLVED_CONFIG_FILE).write_text(
        json.dumps(cfg.flat, indent=2, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )

    try:
        experiment = Experiment(cfg)
    except LabError as e:
        raise RunError(f"실험 준비 실패: {e}", e) from e
    export_audit_csv(experiment.train, out / "noise_audit.csv")

    epochs = cfg.train.epochs
    with open(metrics_path, "w", encoding="utf-8") as metrics_file, \
            open(out / settings.TIMING_FILE, "w", encoding="utf-8") as timing_file:
        for T in range(1, epochs + 1):
            try:
                metrics = experiment.run_epoch(T, final=(T == epochs))
            except LabError as e:
                raise RunError(f"에포크 {T} 실패: {e}", e, epoch=T) from e

            metrics_file.write(json.dumps(metrics.to_record(), sort_keys=True) + "\n")
            metrics_file.flush()
            timing_file.write(json.dumps({"epoch": T, "wall_time_seconds": metrics.wall_time_seconds}) + "\n")

            logger.info(
                "[%s] 에포크 %d/%d: acc=%.4f δ̂=%s R=%.3f ζ=%s τ_est=%s 선택=%.3f 드롭정밀도=%.3f",
                cfg.mode.value, T, epochs, metrics.test_accuracy,
                "ALL" if metrics.delta_hat is None else f"{metrics.delta_hat:.3f}",
                metrics.R,
                "-" if metrics.zeta is None else f"{metrics.zeta:.3f}",
                "-" if metrics.tau_est is None else f"{metrics.tau_est:.3f}",
                metrics.selected_fraction, metrics.drop_precision,
            )
            if T in cfg.snapshot_epochs or T == epochs:
                experiment.snapshot().to_csv(out / f"hist_epoch_{T}.csv", index=False)

    save_checkpoint(experiment.params, out / "checkpoint")
    marker.unlink()

    summary = summarize(metrics_path)
    (out / settings.SUMMARY_FILE).write_text(
        json.dumps(asdict(summary), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    return summary


# =============================================================================
# [5] 드롭 비율 곡선
# =============================================================================

def drop_curve_table(
    dataset: LabeledDataset,
    values: np.ndarray,
    H: int,
    statistic: Statistic = Statistic.DELTA,
    rates: Sequence[float] = DROP_GRID,
) -> pd.DataFrame:
    """
    샘플별 통계값 분포에서 하위 r 비율(bin 양자화)을 드롭했을 때의 채점표.

    Args:
        dataset: 채점 기준 데이터셋 (values와 같은 행 순서)
        values: 샘플별 δ 또는 p_y
        H: bin 수
        statistic: values의 종류 (bin 규칙 결정)
        rates: 드롭 비율 격자 (1 이상이면 전부 드롭)

    Returns:
        DataFrame (drop_rate, real_noise_rate, recall, dropped_count)
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) != dataset.num_samples:
        raise ArgumentError(f"통계값 {len(values)}개가 샘플 수 {dataset.num_samples}와 다릅니다.")
    window = DiffWindow(dataset.num_samples, H, statistic)
    window.push(values, dataset.sample_ids)

    rows = []
    for r in rates:
        if r >= 1.0:
            dropped = dataset.sample_ids
        else:
            threshold = threshold_with_tau(window, r)
            dropped = dataset.sample_ids[values <= threshold]
        score = score_drop_set(dataset, dropped)
        rows.append({
            "drop_rate": float(r),
            "real_noise_rate": score.precision,
            "recall": score.recall,
            "dropped_count": score.dropped_count,
        })
    return pd.DataFrame(rows)


def drop_curve(
    cfg: RunConfig,
    probe_epoch: int = 2,
    strategy: str = "delta",
    rates: Sequence[float] = DROP_GRID,
) -> pd.DataFrame:
    """
    normal 모드로 probe_epoch의 첫 반복 직전까지 학습한 뒤, 전체 학습셋의
    δ(또는 p_y) 분포로 drop_curve_table을 만들고 CSV로 저장한다.
    """
    if probe_epoch < 1:
        raise ArgumentError(f"probe_epoch는 1 이상이어야 합니다: {probe_epoch}")
    statistic = Statistic(strategy)

    experiment = Experiment(cfg, mode=Mode.NORMAL)
    for T in range(1, probe_epoch):
        experiment.run_epoch(T)

    train = experiment.train
    probs = predict_proba(experiment.params, train.features)
    if statistic is Statistic.DELTA:
        values = batch_prob_diff(probs, train.observed_labels)
    else:
        values = batch_p_y(probs, train.observed_labels)
    curve = drop_curve_table(train, values, cfg.selector.H, statistic, rates)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve.to_csv(out / f"drop_curve_{statistic.value}.csv", index=False)
    return curve


# =============================================================================
# [6] 요약 / 비교
# =============================================================================

def _read_jsonl(path: Path) -> List[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def summarize(metrics_path) -> RunSummary:
    """
    metrics.jsonl에서 마지막 min(10, T_max) 에포크 평균 정확도와 최종 상태를 뽑는다.

    같은 폴더의 config.json(모드/노이즈/에포크 수)과 timing.jsonl(벽시계)이
    있으면 함께 읽는다.
    """
    metrics_path = Path(metrics_path)
    if not metrics_path.is_file():
        raise StateError(f"metrics 파일이 없습니다: {metrics_path}")
    if _incomplete_marker(metrics_path).exists():
        raise StateError(f"불완전한 metrics 파일입니다: {metrics_path}")

    records = _read_jsonl(metrics_path)
    if not records:
        raise StateError(f"metrics 파일이 비어 있습니다: {metrics_path}")
    df = pd.DataFrame(records).sort_values("epoch")

    resolved = {}
    config_path = metrics_path.with_name(settings.RESOLVED_CONFIG_FILE)
    if config_path.is_file():
        resolved = json.loads(config_path.read_text(encoding="utf-8"))
        expected = resolved.get("train.epochs")
        if expected is not None and len(df) < expected:
            raise StateError(f"에포크 {len(df)}/{expected}개만 기록된 불완전한 파일입니다: {metrics_path}")

    wall_times = []
    timing_path = metrics_path.with_name(settings.TIMING_FILE)
    if timing_path.is_file():
        wall_times = [row["wall_time_seconds"] for row in _read_jsonl(timing_path)]

    last = df.iloc[-1]
    k = min(LAST_EPOCHS, len(df))
    return RunSummary(
        mode=resolved.get("mode", "unknown"),
        epochs=len(df),
        avg_test_acc_last10=float(df["test_accuracy"].tail(k).mean()),
        final_test_accuracy=float(last["test_accuracy"]),
        final_tau_est=None if pd.isna(last.get("tau_est")) else float(last["tau_est"]),
        final_zeta=None if pd.isna(last.get("zeta")) else float(last["zeta"]),
        total_wall_time=float(sum(wall_times)),
        median_epoch_seconds=float(np.median(wall_times)) if wall_times else None,
        noise_rate=resolved.get("noise.rate"),
        output_dir=str(metrics_path.parent),
    )


def compare(summaries: Sequence[RunSummary], path=None) -> str:
    """
    요약 목록을 표로 정렬한다 (입력 순서 유지).

    Args:
        summaries: RunSummary 목록 (1개 이상)
        path: .csv 또는 .xlsx로 끝나면 파일로도 저장

    Returns:
        텍스트 표
    """
    if not summaries:
        raise ArgumentError("비교할 요약이 없습니다.")

    table = pd.DataFrame([
        {
            "mode": s.mode,
            "avg_test_acc_last10": round(s.avg_test_acc_last10, 4),
            "tau_est": None if s.final_tau_est is None else round(s.final_tau_est, 4),
            "tau_true": s.noise_rate,
            "tau_est_error": None if s.tau_est_error is None else round(s.tau_est_error, 4),
            "wall_time_s": round(s.total_wall_time, 2),
        }
        for s in summaries
    ])

    if path is not None:
        path = Path(path)
        if path.suffix == ".xlsx":
            export_excel_report(table, path, sheet_name="compare")
        else:
            table.to_csv(path, index=False)
    return table.to_string(index=False)
