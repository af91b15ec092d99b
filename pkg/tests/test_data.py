import json
import warnings

import numpy as np
import pytest

from itactf.data import (ZScoreStats, load_dataset, read_sample_csv, save_dataset, stratified_split, synth_dataset,
                         zscore_apply, zscore_fit, zscore_normalize)
from itactf.errors import DimensionError, DomainError, ParseError
from itactf.tensor_core import TensorDataset


def write_manifest(path, entries, I=2, J=2, P=1):
    path.write_text(json.dumps({"schema_version": 1, "I": I, "J": J, "P": P, "entries": entries}))


def test_column_per_channel(tmp_path):
    (tmp_path / "1.csv").write_text("1.0,2.0\n3.0,4.0")
    write_manifest(tmp_path / "m.json", [{"path": "1.csv", "label": 0}])
    ds = load_dataset(tmp_path / "m.json")
    np.testing.assert_array_equal(ds[0].values[0], [1.0, 3.0])


def test_empty_manifest(tmp_path):
    write_manifest(tmp_path / "m.json", [])
    with pytest.raises(DomainError):
        load_dataset(tmp_path / "m.json")


def test_parse_and_shape_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("1.0,abc\n3.0,4.0\n")
    with pytest.raises(ParseError) as info:
        read_sample_csv(tmp_path / "bad.csv")
    assert (info.value.line, info.value.column) == (1, 2)
    (tmp_path / "ok.csv").write_text("1,2\n3,4\n5,6\n")
    with pytest.raises(DimensionError):
        read_sample_csv(tmp_path / "ok.csv", 2, 2)
    write_manifest(tmp_path / "m.json", [{"path": "ok.csv", "label": 3}], J=3)
    with pytest.raises(DomainError):
        load_dataset(tmp_path / "m.json")


def test_round_trip_is_byte_stable(tmp_path, rng):
    ds = TensorDataset(rng.normal(size=(5, 3, 7)), [0, 1, 2, 1, 0], class_names=["a", "b", "c"])
    path = save_dataset(ds, tmp_path)
    back = load_dataset(path)
    assert back.values.tobytes() == ds.values.tobytes()
    assert back.labels.tolist() == ds.labels.tolist() and back.class_names == ds.class_names
    again = save_dataset(back, tmp_path / "again")
    assert again.read_bytes() == path.read_bytes()


def test_zscore_examples():
    train = TensorDataset(np.array([[[0.0, 2.0], [4.0, 4.0]], [[2.0, 0.0], [4.0, 4.0]]]), [0, 1])
    with pytest.warns(RuntimeWarning):
        out, _, stats = zscore_normalize(train)
    np.testing.assert_array_equal(out.values[:, 0], [[-1, 1], [1, -1]])
    np.testing.assert_array_equal(out.values[:, 1], 0.0)
    assert stats.mean.tolist() == [1.0, 4.0]


def test_zscore_moments_and_train_only(rng):
    train = TensorDataset(rng.normal(3, 2, size=(10, 4, 30)), np.arange(10) % 2)
    test = TensorDataset(rng.normal(-5, 9, size=(6, 4, 30)), np.arange(6) % 2)
    tn, (te,), stats = zscore_normalize(train, [test])
    assert np.abs(tn.values.mean(axis=(0, 2))).max() < 1e-10
    assert np.abs(tn.values.std(axis=(0, 2)) - 1).max() < 1e-10
    # test data only ever sees the training statistics
    np.testing.assert_allclose(te.values, (test.values - stats.mean[:, None]) / stats.std[:, None])
    assert ZScoreStats.from_dict(stats.to_dict()).mean.tolist() == stats.mean.tolist()
    with pytest.raises(DimensionError):
        zscore_apply(np.zeros((1, 3, 5)), stats)


def test_synth_generative_oracle():
    train, test, info = synth_dataset(5, 7, 4, 20, 3, noise=0.0, warp=0.0, coef_spread=0.1, seed=2, test_per_class=3)
    assert len(train) == 35 and len(test) == 15
    means = info["class_means"]
    z = info["z_train"]
    nearest = np.argmin(((z[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    assert np.array_equal(nearest, train.labels)
    X = np.einsum("ir,nr,jr->nij", info["A"], z, info["B"])
    np.testing.assert_allclose(train.values, X, atol=1e-12)
    again, _, _ = synth_dataset(5, 7, 4, 20, 3, noise=0.0, warp=0.0, coef_spread=0.1, seed=2, test_per_class=3)
    assert again.values.tobytes() == train.values.tobytes()
    with pytest.raises(DomainError):
        synth_dataset(0)


def test_stratified_split(rng):
    ds = TensorDataset(rng.normal(size=(20, 1, 3)), np.repeat([0, 1], 10))
    tr, te = stratified_split(ds, 0.3, seed=1)
    assert len(tr) + len(te) == 20 and te.class_counts().tolist() == [3, 3]
    tr2, te2 = stratified_split(ds, 0.3, seed=1)
    assert tr2.values.tobytes() == tr.values.tobytes()
    with pytest.raises(DomainError):
        stratified_split(ds, 1.5)
