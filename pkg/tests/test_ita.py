import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from itactf.data import synth_dataset
from itactf.dtw import dtw_cost
from itactf.errors import DegenerateBatchError, DomainError
from itactf.ita import ItaConfig, augment_dataset, batch_gaps, centroid_gap, pairs_to_dataset, soft_prototype
from itactf.tensor_core import SampleMatrix, TensorDataset


class FixedDraw:
    """Stand-in generator whose batch draw is scripted."""

    def __init__(self, *batches, stuck=0):
        self.batches = list(batches)
        self.stuck = stuck
        self.fallback = np.random.default_rng(0)

    def integers(self, low, high, size):
        if self.batches:
            return np.asarray(self.batches.pop(0))
        return np.full(size, self.stuck, dtype=np.int64)

    def choice(self, a, size):
        return self.fallback.choice(a, size)


def scalar_dataset(values, labels):
    return TensorDataset(np.asarray(values, dtype=float).reshape(-1, 1, 1), labels)


def test_gap_duplicate_pairs():
    a, b = SampleMatrix([[0.0, 1.0]], 0), SampleMatrix([[3.0, 3.0]], 1)
    d = dtw_cost(a, b)
    assert d > 0
    assert centroid_gap(0, [a, a, b, b]) == d


def test_gap_equidistant_others():
    s = SampleMatrix([[0.0]], 0)
    others = [SampleMatrix([[5.0]], 1), SampleMatrix([[-5.0]], 2), SampleMatrix([[5.0]], 3)]
    assert centroid_gap(0, [s, s, s] + others) == 5.0


def test_gap_matches_two_loop_oracle(rng):
    batch = [SampleMatrix(rng.normal(size=(2, 7)), label) for label in (0, 1, 0, 1, 1, 0)]
    gaps = batch_gaps(batch)
    for s in range(6):
        same = [dtw_cost(batch[s], batch[t]) for t in range(6) if t != s and batch[t].label == batch[s].label]
        diff = [dtw_cost(batch[s], batch[t]) for t in range(6) if batch[t].label != batch[s].label]
        expected = sum(diff) / len(diff) - sum(same) / len(same)
        assert centroid_gap(s, batch) == pytest.approx(expected, rel=1e-12)
        assert gaps[s] == pytest.approx(expected, rel=1e-12)


def test_gap_degenerate_batch():
    batch = [SampleMatrix([[0.0]], 0), SampleMatrix([[1.0]], 1), SampleMatrix([[2.0]], 1)]
    with pytest.raises(DegenerateBatchError):
        centroid_gap(0, batch)
    assert np.isnan(batch_gaps(batch)[0])


def test_prototype_hand_table():
    # class 0 at 0, 0.5 and 5; class 1 at 10.  Gaps: 7.25, 7.0, 0.25 -> index 0
    ds = scalar_dataset([0.0, 0.5, 5.0, 10.0], [0, 0, 0, 1])
    gaps = batch_gaps([ds[i] for i in range(4)])
    np.testing.assert_allclose(gaps[:3], [7.25, 7.0, 0.25])
    cfg = ItaConfig(batch_size=4)
    assert soft_prototype(ds[1], ds, cfg, FixedDraw([0, 1, 2, 3])) == 0
    assert soft_prototype(ds[1], ds, cfg, FixedDraw([2, 3, 1, 0])) == 0


def test_prototype_tie_goes_to_first_drawn():
    ds = scalar_dataset([1.0, 1.0, 1.0, 1.0], [0, 0, 1, 1])
    draw = [2, 0, 3, 1]
    assert soft_prototype(ds[0], ds, ItaConfig(batch_size=4), FixedDraw(draw)) == 0
    assert soft_prototype(ds[0], ds, ItaConfig(batch_size=4, same_class_prototype=False), FixedDraw(draw)) == 2


def test_unusable_batches_fall_back_to_stratified():
    ds = scalar_dataset([0.0, 1.0, 5.0, 6.0], [0, 0, 1, 1])
    # every random draw repeats one class-1 sample, so no batch is usable
    proto = soft_prototype(ds[0], ds, ItaConfig(batch_size=4), FixedDraw(stuck=3))
    assert ds.labels[proto] == 0


def test_single_class_rejected():
    ds = scalar_dataset([0.0, 1.0], [0, 0])
    with pytest.raises(DomainError):
        augment_dataset(ds, ItaConfig())


def test_repeated_samples_are_fixed_points(rng):
    base = rng.normal(size=(2, 3, 10))
    values = np.concatenate([np.repeat(base[:1], 4, axis=0), np.repeat(base[1:], 4, axis=0)])
    ds = TensorDataset(values, [0] * 4 + [1] * 4)
    for pair in augment_dataset(ds, ItaConfig(batch_size=4)):
        np.testing.assert_array_equal(pair.augmented.values, ds[pair.original_index].values)


@pytest.fixture(scope="module")
def small_synth():
    train, _, _ = synth_dataset(3, 8, 3, 24, 3, noise=0.2, warp=0.5, seed=4)
    return train


def test_contracts_and_determinism(small_synth):
    cfg = ItaConfig(batch_size=5, seed=3)
    pairs = augment_dataset(small_synth, cfg)
    assert [p.original_index for p in pairs] == list(range(len(small_synth)))
    for p in pairs:
        q = small_synth[p.original_index]
        assert p.augmented.label == q.label == small_synth.labels[p.prototype_index]
        assert p.augmented.shape == q.shape
        assert np.all(p.augmented.values >= q.values.min(axis=1, keepdims=True))
        assert np.all(p.augmented.values <= q.values.max(axis=1, keepdims=True))
    again = augment_dataset(small_synth, cfg)
    threaded = augment_dataset(small_synth, cfg, jobs=3)
    for a, b, c in zip(pairs, again, threaded):
        assert a.augmented.values.tobytes() == b.augmented.values.tobytes() == c.augmented.values.tobytes()
    stacked = pairs_to_dataset(pairs[::-1], small_synth)
    np.testing.assert_array_equal(stacked.labels, small_synth.labels)


def test_shifted_variants_interpolate(rng):
    t = np.arange(16)
    bump = lambda c: np.exp(-0.5 * ((t - c) / 1.5) ** 2)
    values = np.stack([bump(c)[None] for c in (5, 6, 7, 8)] + [-bump(c)[None] for c in (5, 6, 7, 8)])
    ds = TensorDataset(values, [0] * 4 + [1] * 4)
    for p in augment_dataset(ds, ItaConfig(batch_size=6)):
        q = ds[p.original_index].values
        assert q.min() - 1e-12 <= p.augmented.values.min() and p.augmented.values.max() <= q.max() + 1e-12
        if p.prototype_index != p.original_index:
            # the warped peak moves to the prototype's peak position
            assert np.argmax(np.abs(p.augmented.values[0])) == np.argmax(np.abs(ds[p.prototype_index].values[0]))


@settings(max_examples=25)
@given(st.integers(2, 8), st.integers(0, 10_000), st.sampled_from(["standard", "shape"]))
def test_same_class_prototype_property(S, seed, kind):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=9)
    labels[:3] = [0, 1, 2]
    ds = TensorDataset(rng.normal(size=(9, 2, 6)), labels)
    cfg = ItaConfig(batch_size=S, seed=seed, dtw_kind=kind, shape_window=3)
    for p in augment_dataset(ds, cfg):
        assert ds.labels[p.prototype_index] == ds.labels[p.original_index]
