"""runner.py / pdiff_cli.py 테스트: 설정, 모드별 실행, 결정성, 요약/비교, 드롭 곡선"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import config as settings
from data import LabeledDataset
from errors import ArgumentError, ConfigError, RunError, StateError
from pdiff_cli import main
from runner import (
    DROP_GRID,
    Experiment,
    Mode,
    RunSummary,
    compare,
    drop_curve,
    drop_curve_table,
    parse_config,
    run,
    summarize,
)
from selector import Statistic, batch_p_y, batch_prob_diff


def blob_config(tmp_path, name="run", **overrides):
    values = {
        "dataset.source": "blobs",
        "blobs.num_classes": "4",
        "blobs.dim": "8",
        "blobs.samples_per_class": "100",
        "blobs.cluster_std": "0.1",
        "model.hidden": "16",
        "train.epochs": "12",
        "train.batch_size": "32",
        "train.lr": "0.1",
        "selector.T_k": "4",
        "mode": "normal",
        "seed": "0",
        "output_dir": str(tmp_path / name),
    }
    values.update({k: str(v) for k, v in overrides.items()})
    return parse_config(overrides=values)


def read_metrics(output_dir):
    lines = (Path(output_dir) / settings.METRICS_FILE).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines]


# ===== 설정 =====
def test_parse_config_fills_defaults():
    cfg = parse_config(overrides={"dataset.source": "blobs", "mode": "normal"})

    assert cfg.selector.H == 200
    assert cfg.selector.M == 0.2
    assert cfg.selector.T_k == 20
    assert cfg.selector.zeta_threshold == 0.9
    assert cfg.train.lr == 0.001
    assert cfg.train.batch_size == 128
    assert cfg.train.epochs == 200
    assert cfg.train.momentum == 0.9
    assert cfg.train.grad_reduction == "mean"
    assert cfg.mode is Mode.NORMAL


def test_parse_config_file_and_override(tmp_path):
    path = tmp_path / "exp.env"
    path.write_text(
        "# 주석\ndataset.source = blobs\nmode = pdiff\nselector.tau = 0.4\nselector.H = 100\n",
        encoding="utf-8",
    )
    cfg = parse_config(str(path), {"selector.H": "50", "model.hidden": "32,16"})

    assert cfg.selector.tau == 0.4
    assert cfg.selector.H == 50
    assert cfg.hidden == (32, 16)
    assert cfg.flat["selector.H"] == 50


def test_parse_config_pdiff_needs_tau():
    with pytest.raises(ConfigError):
        parse_config(overrides={"dataset.source": "blobs", "mode": "pdiff"})


def test_parse_config_unknown_key_named():
    with pytest.raises(ConfigError) as excinfo:
        parse_config(overrides={"dataset.source": "blobs", "mode": "normal", "pdfif.H": "10"})
    assert "pdfif.H" in str(excinfo.value)


@pytest.mark.parametrize(
    "overrides",
    [
        {"dataset.source": "blobs"},
        {"mode": "normal"},
        {"dataset.source": "blobs", "mode": "fancy"},
        {"dataset.source": "blobs", "mode": "normal", "selector.H": "abc"},
        {"dataset.source": "blobs", "mode": "normal", "selector.H": "7"},
        {"dataset.source": "idx", "mode": "normal"},
        {"dataset.source": "blobs", "mode": "normal", "train.grad_reduction": "median"},
    ],
)
def test_parse_config_errors(overrides):
    with pytest.raises(ConfigError):
        parse_config(overrides=overrides)


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "nope.env"))


# ===== 실행 =====
def test_normal_run_separates_clean_blobs(tmp_path):
    cfg = blob_config(tmp_path, **{"blobs.num_classes": 2, "train.epochs": 30})
    summary = run(cfg)

    assert summary.final_test_accuracy >= 0.95
    assert summary.epochs == 30


def test_run_writes_outputs(tmp_path):
    cfg = blob_config(tmp_path, mode="pdiff", **{"selector.tau": 0.3, "noise.rate": 0.3})
    summary = run(cfg)
    out = Path(cfg.output_dir)

    for name in ("metrics.jsonl", "timing.jsonl", "summary.json", "config.json", "noise_audit.csv",
                 "checkpoint.bin", "checkpoint.json", "hist_epoch_1.csv", "hist_epoch_2.csv",
                 "hist_epoch_10.csv", "hist_epoch_12.csv"):
        assert (out / name).is_file(), name
    assert not (out / "metrics.jsonl.incomplete").exists()

    records = read_metrics(out)
    assert [r["epoch"] for r in records] == list(range(1, 13))
    for record in records:
        assert 0.0 <= record["selected_fraction"] <= 1.0
        assert 0.0 <= record["drop_precision"] <= 1.0
        assert 0.0 <= record["drop_recall"] <= 1.0
        assert "wall_time_seconds" not in record
    assert records[-1]["R"] == pytest.approx(0.3)

    snapshot = pd.read_csv(out / "hist_epoch_12.csv")
    np.testing.assert_allclose(snapshot.pdf_clean + snapshot.pdf_noise, snapshot.pdf_all, atol=1e-12)
    assert snapshot.pdf_noise.sum() > 0

    saved = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert saved["avg_test_acc_last10"] == pytest.approx(summary.avg_test_acc_last10)


def test_pdiff_zero_tau_matches_normal(tmp_path):
    normal = blob_config(tmp_path, "normal", **{"noise.rate": 0.2})
    pdiff = blob_config(tmp_path, "pdiff", mode="pdiff", **{"noise.rate": 0.2, "selector.tau": 0.0})
    run(normal)
    run(pdiff)

    normal_lines = (Path(normal.output_dir) / "metrics.jsonl").read_bytes()
    pdiff_lines = (Path(pdiff.output_dir) / "metrics.jsonl").read_bytes()
    assert normal_lines == pdiff_lines


def test_run_is_deterministic(tmp_path):
    first = blob_config(tmp_path, "a", mode="pdiff_no_tau", **{"noise.rate": 0.3})
    second = blob_config(tmp_path, "b", mode="pdiff_no_tau", **{"noise.rate": 0.3})
    run(first)
    run(second)

    for name in ("metrics.jsonl", "checkpoint.bin", "noise_audit.csv"):
        assert (Path(first.output_dir) / name).read_bytes() == (Path(second.output_dir) / name).read_bytes()


def test_pdiff_drops_mostly_noisy_samples(tmp_path):
    cfg = blob_config(tmp_path, mode="pdiff", **{"noise.rate": 0.4, "selector.tau": 0.4})
    run(cfg)
    last = read_metrics(cfg.output_dir)[-1]

    assert last["dropped_count"] > 0
    assert last["drop_precision"] > 0.4
    assert last["selected_fraction"] < 1.0


def test_no_tau_on_clean_blobs_estimates_small_rate(tmp_path):
    cfg = blob_config(tmp_path, mode="pdiff_no_tau", **{"train.epochs": 15})
    summary = run(cfg)

    assert summary.final_tau_est is not None
    assert summary.final_tau_est <= 0.10
    assert summary.final_zeta is not None


def test_no_tau_estimates_noise_rate(tmp_path):
    cfg = blob_config(
        tmp_path, mode="pdiff_no_tau",
        **{"blobs.samples_per_class": 500, "noise.rate": 0.4, "selector.M": 0.4, "train.epochs": 20},
    )
    summary = run(cfg)
    last = read_metrics(cfg.output_dir)[-1]

    assert last["phase"] == "estimated"
    assert last["tau_est_fallback"] is False
    assert summary.final_tau_est == pytest.approx(0.4, abs=0.08)


def test_no_tau_warmup_below_every_delta_matches_normal(tmp_path):
    # T_k가 크면 δ̂ = T/T_k - 1 이 윈도우의 모든 δ보다 작다
    overrides = {"noise.rate": 0.2, "selector.T_k": 1000, "train.epochs": 3}
    normal = Experiment(blob_config(tmp_path, "normal", **overrides))
    warmup = Experiment(blob_config(tmp_path, "no_tau", mode="pdiff_no_tau", **overrides))

    for T in (1, 2, 3):
        expected = normal.run_epoch(T)
        actual = warmup.run_epoch(T)
        values, _ = warmup.selector.window.contents()

        assert actual.delta_hat == pytest.approx(T / 1000 - 1)
        assert actual.delta_hat < values.min()
        assert actual.selected_fraction == 1.0
        assert actual.test_accuracy == expected.test_accuracy
        assert actual.train_loss_selected == expected.train_loss_selected

    for a, b in zip(normal.params.weights + normal.params.biases, warmup.params.weights + warmup.params.biases):
        np.testing.assert_array_equal(a, b)


def test_pdiff_beats_normal_when_memorizing(tmp_path):
    # 작은 학습셋 + 큰 네트워크 + 긴 학습: normal은 노이즈 라벨까지 외운다
    common = {
        "blobs.dim": 8,
        "blobs.samples_per_class": 100,
        "blobs.cluster_std": 0.5,
        "dataset.test_fraction": 0.5,
        "model.hidden": "128,128",
        "train.epochs": 300,
        "train.batch_size": 10,
        "train.lr": 0.05,
        "selector.T_k": 5,
        "selector.M": 1.0,
        "noise.rate": 0.4,
    }
    normal = run(blob_config(tmp_path, "normal", **common))
    pdiff = run(blob_config(tmp_path, "pdiff", mode="pdiff", **common, **{"selector.tau": 0.4}))

    assert pdiff.avg_test_acc_last10 >= normal.avg_test_acc_last10 + 0.03


def test_py_variant_runs(tmp_path):
    cfg = blob_config(tmp_path, mode="pdiff_py_variant", **{"noise.rate": 0.3, "selector.tau": 0.3})
    summary = run(cfg)
    records = read_metrics(cfg.output_dir)

    assert summary.final_zeta is None
    assert all(r["zeta"] is None for r in records)
    assert any(r["dropped_count"] > 0 for r in records)


def test_clean_oracle_drops_exactly_the_noisy(tmp_path):
    cfg = blob_config(tmp_path, mode="clean_oracle", **{"noise.rate": 0.3})
    run(cfg)

    for record in read_metrics(cfg.output_dir):
        assert record["drop_precision"] == 1.0
        assert record["drop_recall"] == 1.0
        assert record["selected_fraction"] == pytest.approx(0.7, abs=0.01)


def test_failed_run_leaves_incomplete_marker(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("x,label\n0.1,0\noops,1\n", encoding="utf-8")
    cfg = parse_config(overrides={
        "dataset.source": "csv",
        "dataset.path": str(data),
        "mode": "normal",
        "output_dir": str(tmp_path / "failed"),
    })

    with pytest.raises(RunError) as excinfo:
        run(cfg)

    assert excinfo.value.exit_code == 3
    assert (tmp_path / "failed" / "metrics.jsonl.incomplete").exists()
    with pytest.raises(StateError):
        summarize(tmp_path / "failed" / "metrics.jsonl")


def test_pdiff_overhead_against_normal(tmp_path):
    common = {
        "blobs.samples_per_class": 400,
        "blobs.dim": 32,
        "model.hidden": 128,
        "train.batch_size": 64,
        "train.epochs": 7,
        "noise.rate": 0.3,
    }
    normal = run(blob_config(tmp_path, "normal", **common))
    pdiff = run(blob_config(tmp_path, "pdiff", mode="pdiff", **common, **{"selector.tau": 0.3}))

    assert pdiff.median_epoch_seconds <= 1.25 * normal.median_epoch_seconds


# ===== 요약 / 비교 =====
def write_metrics(directory, accuracies, epochs_in_config=None):
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "metrics.jsonl", "w", encoding="utf-8") as f:
        for epoch, acc in enumerate(accuracies, start=1):
            f.write(json.dumps({"epoch": epoch, "test_accuracy": acc, "tau_est": 0.38, "zeta": 0.93}) + "\n")
    if epochs_in_config is not None:
        (directory / "config.json").write_text(
            json.dumps({"mode": "pdiff", "noise.rate": 0.4, "train.epochs": epochs_in_config}), encoding="utf-8"
        )
    return directory / "metrics.jsonl"


def test_summarize_constant_accuracy(tmp_path):
    summary = summarize(write_metrics(tmp_path / "a", [0.75] * 200, epochs_in_config=200))
    assert summary.avg_test_acc_last10 == pytest.approx(0.75)
    assert summary.mode == "pdiff"
    assert summary.tau_est_error == pytest.approx(0.02)


def test_summarize_short_run_uses_all_epochs(tmp_path):
    summary = summarize(write_metrics(tmp_path / "a", [0.1, 0.2, 0.3, 0.4, 0.5]))
    assert summary.avg_test_acc_last10 == pytest.approx(0.3)


def test_summarize_last_ten_only(tmp_path):
    summary = summarize(write_metrics(tmp_path / "a", [0.1] * 5 + [0.8] * 10))
    assert summary.avg_test_acc_last10 == pytest.approx(0.8)


def test_summarize_rejects_incomplete(tmp_path):
    with pytest.raises(StateError):
        summarize(write_metrics(tmp_path / "a", [0.5] * 3, epochs_in_config=10))
    path = write_metrics(tmp_path / "b", [0.5] * 3)
    (tmp_path / "b" / "metrics.jsonl.incomplete").touch()
    with pytest.raises(StateError):
        summarize(path)


def make_summary(mode, acc):
    return RunSummary(mode=mode, epochs=10, avg_test_acc_last10=acc, final_test_accuracy=acc,
                      final_tau_est=None, final_zeta=None, total_wall_time=1.0, noise_rate=0.4)


def test_compare_keeps_order_and_writes_files(tmp_path):
    summaries = [make_summary("normal", 0.6), make_summary("pdiff", 0.8), make_summary("clean_oracle", 0.9)]
    table = compare(summaries, tmp_path / "compare.csv")

    rows = table.splitlines()[1:]
    assert [row.split()[0] for row in rows] == ["normal", "pdiff", "clean_oracle"]
    assert len(pd.read_csv(tmp_path / "compare.csv")) == 3

    compare(summaries[:1], tmp_path / "compare.xlsx")
    assert len(pd.read_excel(tmp_path / "compare.xlsx")) == 1


def test_compare_empty():
    with pytest.raises(ArgumentError):
        compare([])


# ===== 드롭 곡선 =====
def test_drop_curve_clean_data_has_no_noise(tmp_path):
    curve = drop_curve(blob_config(tmp_path), probe_epoch=2, strategy="delta")

    assert curve.drop_rate.tolist() == list(DROP_GRID)
    assert len(curve) == 19
    assert (curve.real_noise_rate == 0.0).all()
    assert (Path(tmp_path / "run") / "drop_curve_delta.csv").is_file()


def test_drop_curve_drop_everything_gives_noise_rate(tmp_path):
    cfg = blob_config(tmp_path, **{"noise.rate": 0.3})
    curve = drop_curve(cfg, probe_epoch=2, strategy="py", rates=[1.0])
    assert curve.real_noise_rate.iloc[0] == pytest.approx(0.3, abs=1 / 320)


def test_drop_curve_delta_not_below_py_two_classes(tmp_path):
    # C = 2 이면 δ = 2·p_y - 1 이라 두 bin 규칙이 같은 경계를 쓴다
    cfg = blob_config(tmp_path, **{"blobs.num_classes": 2, "noise.kind": "pair", "noise.rate": 0.45})
    by_delta = drop_curve(cfg, probe_epoch=2, strategy="delta")
    by_py = drop_curve(cfg, probe_epoch=2, strategy="py")

    assert (by_delta.real_noise_rate.to_numpy() >= by_py.real_noise_rate.to_numpy()).all()


def confusable_dataset():
    """
    3 클래스, 20 샘플 (깨끗 11 + 노이즈 9). 값이 모두 다른 bin에 들어간다.

    노이즈 샘플은 관측 라벨 1의 확률이 높지만 실제 클래스 0이 더 높아 δ < 0,
    깨끗한 샘플은 p_y가 낮아도 나머지가 고르게 나뉘어 δ > 0.
    """
    a = 0.402 + 0.012 * np.arange(11)
    clean = np.column_stack([a, (1 - a) / 2, (1 - a) / 2])
    b = 0.36 + 0.012 * np.arange(9)
    gap = 0.103 - 0.011 * np.arange(9)
    noisy = np.column_stack([b + gap, b, 1 - 2 * b - gap])

    probs = np.vstack([clean, noisy])
    observed = np.array([0] * 11 + [1] * 9, dtype=np.int64)
    dataset = LabeledDataset(np.zeros((20, 1)), np.zeros(20, dtype=np.int64), observed, np.arange(20), 3)
    return dataset, probs


def test_drop_curve_table_delta_beats_py_when_confusable():
    dataset, probs = confusable_dataset()
    labels = dataset.observed_labels
    by_delta = drop_curve_table(dataset, batch_prob_diff(probs, labels), 200, Statistic.DELTA)
    by_py = drop_curve_table(dataset, batch_p_y(probs, labels), 200, Statistic.PY)

    # 값마다 bin이 달라 드롭 수가 정확히 r·N
    assert by_delta.dropped_count.tolist() == list(range(1, 20))
    assert by_py.dropped_count.tolist() == list(range(1, 20))

    k = np.arange(1, 20)
    assert by_delta.real_noise_rate.tolist() == pytest.approx(np.minimum(9, k) / k)
    py_hits = [1, 2, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 9, 9, 9, 9]
    assert by_py.real_noise_rate.tolist() == pytest.approx(np.array(py_hits) / k)

    delta_rate = by_delta.real_noise_rate.to_numpy()
    py_rate = by_py.real_noise_rate.to_numpy()
    assert (delta_rate >= py_rate).all()
    assert (delta_rate > py_rate).any()
    assert by_delta.recall.iloc[8] == 1.0


def test_drop_curve_table_rejects_length_mismatch():
    dataset, probs = confusable_dataset()
    with pytest.raises(ArgumentError):
        drop_curve_table(dataset, batch_prob_diff(probs, dataset.observed_labels)[:5], 200)


def test_drop_curve_rejects_probe_epoch(tmp_path):
    with pytest.raises(ArgumentError):
        drop_curve(blob_config(tmp_path), probe_epoch=0)


# ===== CLI =====
def test_cli_run_summarize_compare(tmp_path, capsys):
    config_path = tmp_path / "exp.env"
    config_path.write_text(
        "dataset.source = blobs\nblobs.samples_per_class = 50\nmodel.hidden = 8\n"
        "train.batch_size = 16\ntrain.epochs = 3\ntrain.lr = 0.1\nmode = normal\n",
        encoding="utf-8",
    )
    out = tmp_path / "cli_run"

    assert main(["run", "--config", str(config_path), "--output_dir", str(out)]) == 0
    assert main(["summarize", str(out / "metrics.jsonl")]) == 0
    assert main(["compare", str(out / "metrics.jsonl"), "--out", str(tmp_path / "cmp.csv")]) == 0
    assert "avg_test_acc_last10" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert main(["run", "--mode", "pdiff", "--dataset.source", "blobs"]) == ConfigError.exit_code
    assert main(["summarize", str(tmp_path / "missing.jsonl")]) == StateError.exit_code


def test_cli_grad_check():
    assert main(["grad-check", "--trials", "3"]) == 0


# ===== MNIST (PDIFF_MNIST_DIR가 있을 때만) =====
def _mnist_file(stem):
    base = Path(settings.MNIST_DIR)
    for candidate in (base / stem, base / f"{stem}.gz"):
        if candidate.is_file():
            return str(candidate)
    pytest.skip(f"MNIST 파일 없음: {stem}")


def mnist_config(tmp_path, mode, **extra):
    values = {
        "dataset.source": "idx",
        "dataset.images": _mnist_file("train-images-idx3-ubyte"),
        "dataset.labels": _mnist_file("train-labels-idx1-ubyte"),
        "dataset.test_images": _mnist_file("t10k-images-idx3-ubyte"),
        "dataset.test_labels": _mnist_file("t10k-labels-idx1-ubyte"),
        "dataset.limit": "10000",
        "noise.kind": "symmetry",
        "noise.rate": "0.4",
        "model.hidden": "256",
        "train.epochs": "30",
        "selector.T_k": "10",
        "mode": mode,
        "output_dir": str(tmp_path / mode),
    }
    values.update({k: str(v) for k, v in extra.items()})
    return parse_config(overrides=values)


mnist = pytest.mark.skipif(settings.MNIST_DIR is None, reason="PDIFF_MNIST_DIR 미설정")


@mnist
def test_mnist_pdiff_beats_normal(tmp_path):
    normal = run(mnist_config(tmp_path, "normal"))
    pdiff = run(mnist_config(tmp_path, "pdiff", **{"selector.tau": 0.4}))
    oracle = run(mnist_config(tmp_path, "clean_oracle"))

    assert pdiff.avg_test_acc_last10 >= normal.avg_test_acc_last10 + 0.03
    assert oracle.avg_test_acc_last10 >= pdiff.avg_test_acc_last10


@mnist
def test_mnist_no_tau_estimates_noise_rate(tmp_path):
    summary = run(mnist_config(tmp_path, "pdiff_no_tau"))
    assert abs(summary.final_tau_est - 0.40) <= 0.08
