
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import covered
from lesionseg.errors import EnsembleMismatchError, InvalidParameterError, ValidationError
from lesionseg.inference import (
    InferenceConfig,
    argmax_mask,
    gaussian_weight_map,
    plan_tiles,
    sliding_window_predict,
    tile_positions,
)
from lesionseg.unet import ArchDescriptor, forward, init_weights, softmax_channels
from lesionseg.volume import Kind, MultiChannelVolume, Volume3D


class ConstantModel:
    """Ignores its input and emits fixed per-class logits."""

    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=np.float32)

    def __call__(self, patch):
        return np.broadcast_to(self.logits[:, None, None, None], (len(self.logits),) + patch.shape[1:]).copy()


class ReversedPool:
    """Evaluates jobs back to front but returns results in input order."""

    def map(self, fn, items):
        items = list(items)
        results = {i: fn(items[i]) for i in reversed(range(len(items)))}
        return [results[i] for i in range(len(items))]


def test_tile_positions_examples():
    assert tile_positions(192, 192, 0.5) == [0]
    assert tile_positions(192, 192, 1.0) == [0]
    assert tile_positions(384, 192, 1.0) == [0, 192]
    assert tile_positions(400, 192, 0.5) == [0, 69, 139, 208]
    assert covered(400, 192, [0, 69, 139, 208])


def test_tile_positions_errors():
    with pytest.raises(ValidationError):
        tile_positions(100, 192, 0.5)
    with pytest.raises(InvalidParameterError):
        tile_positions(400, 192, 0.0)
    with pytest.raises(InvalidParameterError):
        tile_positions(400, 192, 1.1)


@settings(max_examples=300)
@given(st.integers(1, 600), st.integers(1, 200), st.floats(0.05, 1.0))
def test_tile_coverage_property(extra, patch, frac):
    axis = patch + extra - 1
    origins = tile_positions(axis, patch, frac)
    assert origins == sorted(origins)
    assert origins[0] == 0 and origins[-1] == axis - patch
    assert covered(axis, patch, origins)


@settings(max_examples=200)
@given(st.integers(1, 600), st.integers(1, 200), st.floats(0.05, 0.95), st.floats(0.0, 0.5))
def test_tile_count_non_increasing(extra, patch, f1, df):
    axis = patch + extra - 1
    f2 = min(1.0, f1 + df)
    assert len(tile_positions(axis, patch, f2)) <= len(tile_positions(axis, patch, f1))


def test_gaussian_map_properties():
    w = gaussian_weight_map((9, 10, 11), 1 / 8)
    assert w.max() == 1.0 and w.min() > 0
    assert w[4, :, :].max() == 1.0
    for axis in range(3):
        np.testing.assert_array_equal(w, np.flip(w, axis=axis))
    assert w[4, 4:6, 5].tolist() == [1.0, 1.0]


def test_gaussian_closed_form_odd():
    n = 33
    sigma = n / 8
    w = gaussian_weight_map((n, n, n), 1 / 8)
    d = np.arange(n) - 16
    np.testing.assert_allclose(w[16, 16, :], np.exp(-(d**2) / (2 * sigma**2)), atol=1e-6)


def test_gaussian_closed_form_even():
    n = 32
    sigma = n / 8
    w = gaussian_weight_map((n, n, n), 1 / 8)
    d = np.arange(n) - 15.5
    # peak normalised at the two middle voxels, |d| = 0.5
    expected = np.exp(-(d**2 - 0.25) / (2 * sigma**2))
    np.testing.assert_allclose(w[15, 15, :], expected, atol=1e-6)


def test_plan_padding_for_small_volume():
    plan = plan_tiles((5, 16, 20), (8, 8, 8), 0.5)
    assert plan.pad == ((1, 2), (0, 0), (0, 0))
    assert len(plan) == 1 * 3 * 4


def test_single_fold_single_patch_equals_forward(rng):
    desc = ArchDescriptor(channels=(2, 4))
    store = init_weights(desc, 0)
    x = rng.normal(size=(2, 8, 8, 8)).astype(np.float32)
    prob = sliding_window_predict(store, x, InferenceConfig(patch_shape=(8, 8, 8)))
    np.testing.assert_allclose(prob, softmax_channels(forward(store, x)), atol=1e-6)


def test_identical_folds_equal_single(rng):
    desc = ArchDescriptor(channels=(2, 4))
    store = init_weights(desc, 0)
    x = rng.normal(size=(2, 12, 10, 9)).astype(np.float32)
    cfg = InferenceConfig(patch_shape=(8, 8, 8), step_fraction=0.5)
    one = sliding_window_predict([store], x, cfg)
    five = sliding_window_predict([store] * 5, x, cfg)
    np.testing.assert_allclose(five, one, atol=1e-6)


@pytest.mark.parametrize("step", [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
def test_constant_stub_gives_constant_probability(step):
    model = ConstantModel([0.3, -1.2])
    x = np.zeros((2, 23, 17, 30), dtype=np.float32)
    prob = sliding_window_predict(model, x, InferenceConfig(patch_shape=(8, 8, 8), step_fraction=step))
    expected = softmax_channels(np.array([0.3, -1.2]).reshape(2, 1, 1, 1)).ravel()
    for c in range(2):
        np.testing.assert_allclose(prob[c], expected[c], atol=1e-6)


def test_probabilities_sum_to_one(rng):
    store = init_weights(ArchDescriptor(channels=(2, 4), out_channels=3), 2)
    x = rng.normal(size=(2, 13, 11, 10)).astype(np.float32)
    prob = sliding_window_predict(store, x, InferenceConfig(patch_shape=(8, 8, 8), step_fraction=0.5))
    np.testing.assert_allclose(prob.sum(axis=0), 1.0, atol=1e-5)


def test_output_shape_for_small_volume(rng):
    store = init_weights(ArchDescriptor(channels=(2, 4)), 0)
    x = rng.normal(size=(2, 3, 5, 7)).astype(np.float32)
    prob = sliding_window_predict(store, x, InferenceConfig(patch_shape=(8, 8, 8)))
    assert prob.shape == (2, 3, 5, 7)


def test_independent_of_tile_evaluation_order(rng):
    store = init_weights(ArchDescriptor(channels=(2, 4)), 4)
    x = rng.normal(size=(2, 14, 12, 16)).astype(np.float32)
    cfg = InferenceConfig(patch_shape=(8, 8, 8), step_fraction=0.5)
    a = sliding_window_predict(store, x, cfg)
    b = sliding_window_predict(store, x, cfg, pool=ReversedPool())
    c = sliding_window_predict(store, x, InferenceConfig(patch_shape=(8, 8, 8), step_fraction=0.5, threads=3))
    assert a.tobytes() == b.tobytes() == c.tobytes()


def test_multichannel_in_and_out(rng):
    store = init_weights(ArchDescriptor(channels=(2, 4)), 0)
    chans = tuple(Volume3D(rng.normal(size=(8, 8, 8)), (1.5, 1, 1)) for _ in range(2))
    image = MultiChannelVolume(chans, ("CT", "PET"))
    prob = sliding_window_predict(store, image, InferenceConfig(patch_shape=(8, 8, 8)))
    assert isinstance(prob, MultiChannelVolume)
    assert prob.spacing == (1.5, 1.0, 1.0)
    assert all(ch.kind is Kind.PROBABILITY for ch in prob.channels)
    mask = argmax_mask(prob)
    assert mask.kind is Kind.LABEL and mask.spacing == (1.5, 1.0, 1.0)


def test_ensemble_mismatch():
    a = init_weights(ArchDescriptor(channels=(2, 4)), 0)
    b = init_weights(ArchDescriptor(channels=(4, 8)), 0)
    with pytest.raises(EnsembleMismatchError):
        sliding_window_predict([a, b], np.zeros((2, 8, 8, 8)), InferenceConfig(patch_shape=(8, 8, 8)))


def test_patch_divisibility_checked():
    store = init_weights(ArchDescriptor(channels=(2, 4, 8)), 0)
    with pytest.raises(InvalidParameterError):
        sliding_window_predict(store, np.zeros((2, 8, 8, 8)), InferenceConfig(patch_shape=(6, 8, 8)))


def test_argmax_examples():
    def one(p):
        return argmax_mask(np.array(p, dtype=np.float32).reshape(2, 1, 1, 1)).item()

    assert one([0.9, 0.1]) == 0
    assert one([0.5, 0.5]) == 0
    assert one([0.2, 0.8]) == 1


def test_argmax_brute_force(rng):
    prob = rng.dirichlet([1, 1, 1], size=(4, 5, 6)).transpose(3, 0, 1, 2).astype(np.float32)
    mask = argmax_mask(prob)
    for idx in np.ndindex(mask.shape):
        vals = [prob[(c,) + idx] for c in range(3)]
        best = 0
        for c in range(1, 3):
            if vals[c] > vals[best]:
                best = c
        assert mask[idx] == best


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        InferenceConfig(step_fraction=0)
    with pytest.raises(InvalidParameterError):
        InferenceConfig(gaussian_sigma_scale=-1)
    assert InferenceConfig().patch_shape == (192, 192, 192)
    assert InferenceConfig().step_fraction == 0.5
