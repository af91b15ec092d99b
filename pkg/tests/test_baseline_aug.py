import numpy as np
import pytest
from hypothesis import given, strategies as st

from itactf.baseline_aug import (KINDS, BaselineAugConfig, augment_baseline, jitter, mixup, mixup_weight,
                                 permutation, timewarp, timewarp_remap)
from itactf.errors import DimensionError, DomainError
from itactf.tensor_core import SampleMatrix, TensorDataset

CFG = BaselineAugConfig()


def test_jitter_limit_and_seed(rng):
    x = SampleMatrix(rng.normal(size=(3, 20)) + 5.0)
    tiny = BaselineAugConfig(jitter_sigma=1e-300)
    np.testing.assert_array_equal(jitter(x, tiny, rng).values, x.values)
    a = jitter(x, CFG, np.random.default_rng(7)).values
    b = jitter(x, CFG, np.random.default_rng(7)).values
    assert a.tobytes() == b.tobytes()


def test_jitter_statistics():
    x = SampleMatrix(np.zeros((10, 10_000)))
    d = (jitter(x, CFG, np.random.default_rng(1)).values - x.values).ravel()
    n = d.size
    assert abs(d.mean()) < 4 * 0.03 / np.sqrt(n)
    assert abs(d.std() - 0.03) < 0.05 * 0.03


def test_permutation_single_segment(rng):
    x = SampleMatrix(rng.normal(size=(2, 9)))
    np.testing.assert_array_equal(permutation(x, CFG, rng, n_segments=1).values, x.values)


def test_permutation_two_segment_swap():
    ramp = SampleMatrix(np.arange(10.0)[None])
    seen_swap = False
    for seed in range(20):
        out = permutation(ramp, CFG, np.random.default_rng(seed), n_segments=2).values[0]
        if out[0] != 0.0:
            cut = int(out[0])
            np.testing.assert_array_equal(out, np.concatenate([np.arange(cut, 10.0), np.arange(float(cut))]))
            seen_swap = True
        else:
            np.testing.assert_array_equal(out, np.arange(10.0))
    assert seen_swap


def test_permutation_rejects_too_many_segments(rng):
    with pytest.raises(DomainError):
        permutation(SampleMatrix(np.zeros((1, 3))), CFG, rng, n_segments=4)


@given(st.integers(1, 3), st.integers(1, 30), st.integers(0, 10_000))
def test_permutation_preserves_column_multiset(I, J, seed):
    rng = np.random.default_rng(seed)
    x = SampleMatrix(rng.normal(size=(I, J)))
    out = permutation(x, CFG, rng).values
    key = lambda m: sorted(map(tuple, m.T))
    assert key(out) == key(x.values)


def test_timewarp_limits(rng):
    x = SampleMatrix(rng.normal(size=(2, 30)))
    tiny = BaselineAugConfig(timewarp_sigma=1e-12)
    np.testing.assert_allclose(timewarp_remap(30, tiny, rng), np.arange(30.0), atol=1e-9)
    np.testing.assert_allclose(timewarp(x, tiny, rng).values, x.values, atol=1e-9)
    const = SampleMatrix(np.full((2, 30), 3.25))
    np.testing.assert_array_equal(timewarp(const, CFG, rng).values, const.values)
    with pytest.raises(DomainError):
        timewarp(SampleMatrix(np.zeros((1, 3))), CFG, rng)


@given(st.integers(4, 80), st.floats(0.01, 2.0), st.integers(0, 10_000))
def test_timewarp_monotone(J, sigma, seed):
    rng = np.random.default_rng(seed)
    cfg = BaselineAugConfig(timewarp_sigma=sigma)
    remap = timewarp_remap(J, cfg, rng)
    assert remap[0] == 0.0 and remap[-1] == pytest.approx(J - 1)
    assert np.all(np.diff(remap) > 0)
    out = timewarp(SampleMatrix(np.arange(J, dtype=float)[None] ** 1.5), cfg, rng).values[0]
    assert np.all(np.diff(out) >= 0)


def test_mixup_examples(rng):
    a, b = SampleMatrix([[2.0]], 1), SampleMatrix([[4.0]], 0)
    assert mixup(a, b, CFG, rng, lam=1.0).values.tolist() == [[2.0]]
    out = mixup(a, b, CFG, rng, lam=0.5)
    assert out.values.tolist() == [[3.0]] and out.label == 1
    with pytest.raises(DimensionError):
        mixup(a, SampleMatrix([[1.0, 2.0]]), CFG, rng)


def test_mixup_beta_moments():
    rng = np.random.default_rng(3)
    lam = np.array([mixup_weight(CFG, rng) for _ in range(100_000)])
    assert abs(lam.mean() - 0.5) < 0.01 * 0.5
    assert abs(lam.var() - 1 / 20) < 0.05 / 20


@pytest.mark.parametrize("kind", KINDS)
def test_augment_baseline_contracts(kind, rng):
    ds = TensorDataset(rng.normal(size=(12, 3, 16)), np.arange(12) % 3)
    cfg = BaselineAugConfig(kind=kind, seed=5)
    pairs = augment_baseline(ds, cfg)
    assert len(pairs) == 12
    for p in pairs:
        assert p.augmented.shape == (3, 16)
        assert p.augmented.label == ds.labels[p.original_index]
        if kind == "mixup":
            assert ds.labels[p.prototype_index] == ds.labels[p.original_index]
    again = augment_baseline(ds, cfg)
    assert all(a.augmented.values.tobytes() == b.augmented.values.tobytes() for a, b in zip(pairs, again))


def test_config_validation():
    with pytest.raises(DomainError):
        BaselineAugConfig(kind="cutout")
    with pytest.raises(DomainError):
        BaselineAugConfig(jitter_sigma=0.0)
