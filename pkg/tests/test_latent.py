"""Discrete latent machinery: the relaxation, greedy mapping, and code
string handling."""

import numpy as np
import pytest

from latact import autodiff as ad
from latact import latent as lat
from latact.autodiff import Tensor
from latact.gradcheck import check_grads
from latact.latent import LatentSpec


def test_spec_validation():
    s = LatentSpec(M=3, K=5, tau=1.0)
    assert s.n_actions == 125
    with pytest.raises(ValueError):
        LatentSpec(M=0, K=5, tau=1.0)
    with pytest.raises(ValueError):
        LatentSpec(M=1, K=1, tau=1.0)
    with pytest.raises(ValueError):
        LatentSpec(M=1, K=2, tau=0.0)


def test_spec_frozen():
    s = LatentSpec(M=2, K=3, tau=1.0)
    with pytest.raises(Exception):
        s.M = 5


class NoiselessRNG:
    """uniform(0,1) = 1/e makes -log(-log(u)) exactly zero."""

    def uniform(self, lo, hi, size=None):
        return np.full(size, np.exp(-1.0))


def test_noise_free_sample_equals_softmax(rng):
    logits = rng.standard_normal((4, 2, 5))
    out = lat.gumbel_softmax_sample(logits, 1.0, NoiselessRNG())
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    sm = e / e.sum(axis=-1, keepdims=True)
    assert np.max(np.abs(out - sm)) < 1e-9


def test_gumbel_noise_clamped(rng):
    class EdgeRNG:
        def uniform(self, lo, hi, size=None):
            # lower bound must sit strictly above 0 so log(u) is finite
            assert lo > 0.0 and hi <= 1.0
            return np.full(size, lo)

    g = lat.gumbel_noise(EdgeRNG(), (3, 3))
    assert np.all(np.isfinite(g))


def test_sample_rows_on_simplex(rng):
    logits = rng.standard_normal((6, 3, 4))
    out = lat.gumbel_softmax_sample(logits, 1.0, rng)
    assert out.shape == logits.shape
    assert np.all(out > 0)
    assert np.allclose(out.sum(axis=-1), 1.0)


def test_temperature_sharpens(rng):
    logits = np.array([[[2.0, 1.0, 0.0]]])
    noiseless = NoiselessRNG()
    hot = lat.gumbel_softmax_sample(logits, 10.0, noiseless)
    cold = lat.gumbel_softmax_sample(logits, 0.1, noiseless)
    assert cold[0, 0, 0] > hot[0, 0, 0]
    assert cold[0, 0, 0] > 0.99


def test_hard_sample_frequencies_chi_square(rng):
    # draws must follow softmax(logits) when tau = 1
    from scipy import stats

    logits = np.log(np.array([0.5, 0.3, 0.2]))
    n = 100_000
    draws = lat.gumbel_softmax_sample(np.tile(logits, (n, 1, 1)), 1.0, rng)
    hard = np.argmax(draws, axis=-1).ravel()
    counts = np.bincount(hard, minlength=3)
    chi2, p = stats.chisquare(counts, np.array([0.5, 0.3, 0.2]) * n)
    assert p > 0.01, (counts, p)


def test_gumbel_softmax_tensor_gradient(rng):
    logits = Tensor(rng.standard_normal((3, 2, 4)), requires_grad=True)
    coef = rng.standard_normal((3, 2, 4))

    class Replay:
        def uniform(self, lo, hi, size=None):
            return np.random.default_rng(5).uniform(lo, hi, size=size)

    check_grads(
        lambda: (lat.gumbel_softmax_tensor(logits, 1.0, Replay()) * coef).sum(),
        [logits])


def test_gumbel_softmax_tensor_hard_out(rng):
    logits = Tensor(rng.standard_normal((4, 3, 5)))
    hard = []
    out = lat.gumbel_softmax_tensor(logits, 1.0, rng, hard_out=hard)
    assert hard[0].shape == (4, 3)
    assert np.array_equal(hard[0], np.argmax(out.data, axis=-1))


def test_greedy_map_ties_lowest_index():
    post = np.array([[[0.4, 0.4, 0.2], [0.1, 0.8, 0.1]]])
    codes = lat.greedy_map(post)
    assert codes.shape == (1, 2)
    assert codes[0, 0] == 0  # tie broken toward the lower index
    assert codes[0, 1] == 1


def test_flip_code():
    base = np.array([1, 0, 2])
    out = lat.flip_code(base, 1, 3, K=4)
    assert np.array_equal(out, [1, 3, 2])
    assert np.array_equal(base, [1, 0, 2])  # input untouched
    with pytest.raises(IndexError):
        lat.flip_code(base, 1, 4, K=4)
    with pytest.raises(IndexError):
        lat.flip_code(base, 7, 0, K=4)


def test_assignment_string_roundtrip():
    codes = np.array([1, 4, 2])
    s = lat.assignment_string(codes)
    assert s == "1-4-2"
    assert np.array_equal(lat.parse_assignment(s), [1, 4, 2])
    with pytest.raises(ValueError):
        lat.parse_assignment("1-x-2")


def test_parse_assignment_with_spec():
    spec = LatentSpec(M=2, K=3, tau=1.0)
    assert np.array_equal(lat.parse_assignment("2-0", spec=spec), [2, 0])
    with pytest.raises(ValueError):
        lat.parse_assignment("2-0-1", spec=spec)
    with pytest.raises(ValueError):
        lat.parse_assignment("2-3", spec=spec)


def test_one_hot():
    codes = np.array([[0, 2], [1, 1]])
    oh = lat.one_hot(codes, 3)
    assert oh.shape == (2, 2, 3)
    assert np.allclose(oh.sum(axis=-1), 1.0)
    assert oh[0, 1, 2] == 1.0 and oh[1, 0, 1] == 1.0
