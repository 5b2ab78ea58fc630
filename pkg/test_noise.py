"""noise.py 테스트: 전이 행렬, 오염, 드롭 집합 채점"""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from data import BlobSpec, gen_blobs
from errors import ArgumentError, StateError
from noise import (
    NoiseKind,
    NoiseSpec,
    build_transition_matrix,
    corrupt,
    export_audit_csv,
    flip_count,
    score_drop_set,
)


def blobs(num_classes=5, per_class=200, seed=0):
    return gen_blobs(BlobSpec(num_classes=num_classes, dim=3, samples_per_class=per_class), seed)


# ===== 전이 행렬 =====
@pytest.mark.parametrize("kind", list(NoiseKind))
@pytest.mark.parametrize("tau", [0.0, 0.2, 0.45])
def test_transition_matrix_rows_sum_to_one(kind, tau):
    matrix = build_transition_matrix(kind, tau, 4)
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
    np.testing.assert_allclose(np.diag(matrix), 1.0 - tau)


def test_pair_matrix_shape():
    matrix = build_transition_matrix("pair", 0.3, 3)
    expected = np.array([[0.7, 0.3, 0.0], [0.0, 0.7, 0.3], [0.3, 0.0, 0.7]])
    np.testing.assert_allclose(matrix, expected)


# ===== 오염 =====
@pytest.mark.parametrize("kind", list(NoiseKind))
@pytest.mark.parametrize("tau", [0.0, 0.2, 0.45, 0.5])
def test_corrupt_flips_exact_count(kind, tau):
    ds = blobs()
    noisy = corrupt(ds, NoiseSpec(kind, tau), seed=11)

    assert int(noisy.noisy_mask.sum()) == flip_count(tau, ds.num_samples)
    assert noisy.corrupted
    np.testing.assert_array_equal(noisy.true_labels, ds.true_labels)


def test_pair_flip_goes_to_next_class():
    ds = blobs()
    noisy = corrupt(ds, NoiseSpec(NoiseKind.PAIR, 0.3), seed=2)
    mask = noisy.noisy_mask
    np.testing.assert_array_equal(
        noisy.observed_labels[mask], (noisy.true_labels[mask] + 1) % ds.num_classes
    )


def test_symmetric_flip_is_roughly_uniform_over_other_classes():
    ds = blobs(num_classes=5, per_class=2000)
    noisy = corrupt(ds, NoiseSpec(NoiseKind.SYMMETRY, 0.4), seed=3)
    mask = noisy.noisy_mask
    offsets = (noisy.observed_labels[mask] - noisy.true_labels[mask]) % 5
    counts = np.bincount(offsets, minlength=5)

    assert counts[0] == 0
    share = counts[1:] / counts[1:].sum()
    np.testing.assert_allclose(share, 0.25, atol=0.03)


def test_corrupt_is_deterministic():
    ds = blobs()
    a = corrupt(ds, NoiseSpec("symmetry", 0.3), seed=9)
    b = corrupt(ds, NoiseSpec("symmetry", 0.3), seed=9)
    np.testing.assert_array_equal(a.observed_labels, b.observed_labels)


def test_corrupt_twice_is_state_error():
    once = corrupt(blobs(), NoiseSpec("pair", 0.2), seed=0)
    with pytest.raises(StateError):
        corrupt(once, NoiseSpec("pair", 0.2), seed=0)


@pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
def test_noise_spec_rejects_rate_out_of_range(rate):
    with pytest.raises(ArgumentError):
        NoiseSpec("symmetry", rate)


# ===== 채점 =====
def test_score_drop_set_precision_recall():
    ds = corrupt(blobs(num_classes=2, per_class=10), NoiseSpec("pair", 0.2), seed=0)
    noisy_ids = ds.sample_ids[ds.noisy_mask]
    clean_ids = ds.sample_ids[~ds.noisy_mask]

    score = score_drop_set(ds, np.concatenate([noisy_ids[:2], clean_ids[:2]]))
    assert score.precision == pytest.approx(0.5)
    assert score.recall == pytest.approx(2 / len(noisy_ids))
    assert score.dropped_count == 4


def test_score_empty_drop_and_clean_dataset():
    ds = corrupt(blobs(num_classes=2, per_class=10), NoiseSpec("pair", 0.0), seed=0)
    score = score_drop_set(ds, [])
    assert score.precision == 0.0 and score.recall == 1.0 and score.dropped_count == 0


def test_score_unknown_id():
    ds = blobs(num_classes=2, per_class=5)
    with pytest.raises(ArgumentError):
        score_drop_set(ds, [999])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 39), max_size=40))
def test_score_is_between_zero_and_one(ids):
    ds = corrupt(blobs(num_classes=4, per_class=10), NoiseSpec("symmetry", 0.5), seed=1)
    score = score_drop_set(ds, ids)
    assert 0.0 <= score.precision <= 1.0
    assert 0.0 <= score.recall <= 1.0
    assert score.dropped_count == len(set(ids))


def test_export_audit_csv(tmp_path):
    ds = corrupt(blobs(num_classes=3, per_class=4), NoiseSpec("pair", 0.25), seed=0)
    path = tmp_path / "audit.csv"
    export_audit_csv(ds, path)

    audit = pd.read_csv(path)
    assert list(audit.columns) == ["id", "true_label", "observed_label"]
    assert int((audit.true_label != audit.observed_label).sum()) == 3
