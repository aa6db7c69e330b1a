import numpy as np
import pytest

from conftest import random_stiefel
from dkpca.core import ArchitectureSpec, LevelSpec, TrainConfig, two_level_linear
from dkpca.dataio import gen_synth_gaussian, gen_synth_square
from dkpca.errors import InvalidArgumentError
from dkpca.generative import (
    FittedModel,
    TraversalSpec,
    analytic_model,
    encode_many,
    encode_oos,
    fit_model,
    model_from_dict,
    model_to_dict,
    reconstruct,
    reconstruction_error,
    smoother_weights,
    traverse,
    write_traversal,
)
from dkpca.core import DeepState
from dkpca.kernels import RBF, Linear


def _rbf_model(X, sigma2, H=None, preimage_sigma2=None):
    N = X.shape[0]
    arch = ArchitectureSpec([LevelSpec(RBF(sigma2), 2, 1.0), LevelSpec(RBF(1.0), 1, 1.0)])
    rng = np.random.default_rng(0)
    H = H or [random_stiefel(rng, N, 2), random_stiefel(rng, N, 1)]
    return FittedModel(arch, DeepState(H, [np.ones(2), np.ones(1)]), X, preimage_sigma2=preimage_sigma2)


# --- encoding ---------------------------------------------------------------


def test_closed_form_roundtrip_on_training_points():
    X = gen_synth_gaussian(30, 8, 1)
    for kernel1 in (None, RBF(8.0)):
        m = analytic_model(X, 6, 3, 1.0, -2.0, kernel1=kernel1, center=True)
        for i in (0, 7, 29):
            h1, h2 = encode_oos(m, X[i], "closed_form")
            np.testing.assert_allclose(h1, m.state.H[0][i], atol=1e-6)
            np.testing.assert_allclose(h2, m.state.H[1][i], atol=1e-6)


def test_one_level_closed_form_roundtrip():
    X = gen_synth_gaussian(20, 5, 2)
    arch = ArchitectureSpec([LevelSpec(RBF(5.0), 4, 2.0)])
    m, _ = fit_model(arch, X)
    (h,) = encode_oos(m, X[3])
    np.testing.assert_allclose(h, m.state.H[0][3], atol=1e-8)


def test_smoother_equidistant_average():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [50.0, 50.0]])
    m = _rbf_model(X, 1.0)
    out = encode_oos(m, [1.0, 0.0], "smoother")
    for H, h in zip(m.state.H, out):
        np.testing.assert_allclose(h, (H[0] + H[1]) / 2, atol=1e-12)


def test_smoother_small_bandwidth_nearest():
    X = gen_synth_gaussian(10, 3, 4)
    m = _rbf_model(X, 1e-4)
    x = X[6] + 1e-3
    for H, h in zip(m.state.H, encode_oos(m, x)):
        np.testing.assert_allclose(h, H[6], atol=1e-10)


def test_smoother_weights_simplex():
    w = smoother_weights(np.array([0.2, 0.0, 1.3]), RBF(1.0))
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
    w = smoother_weights(np.array([-3.0, 2.0, 1.0]), Linear())
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)


def test_smoother_no_support():
    X = np.array([[0.0], [1.0]])
    m = _rbf_model(X, 1e-3)
    from dkpca.errors import NoSupportError

    with pytest.raises(NoSupportError):
        encode_oos(m, [1e3])


def test_singular_closed_form_falls_back():
    # rank-2 data cannot support s1 = 4 with nonzero Lambda1
    X = gen_synth_square(20, 0.0, 0)
    m = analytic_model(X, 4, 2, center=True)
    with pytest.warns(UserWarning):
        out = encode_oos(m, X[0])
    assert len(out) == 2


def test_encode_dimension_error():
    m = analytic_model(gen_synth_gaussian(10, 3, 0), 2, 1)
    with pytest.raises(InvalidArgumentError):
        encode_oos(m, [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        encode_oos(m, [1.0, 2.0, 3.0], method="magic")


# --- reconstruction -----------------------------------------------------------


def test_full_decomposition_reconstruction_exact():
    X = gen_synth_square(24, 0.05, 3)
    m = analytic_model(X, 24, 24, center=True)
    assert reconstruction_error(m, training=True) <= 1e-8
    for i in (0, 11):
        np.testing.assert_allclose(reconstruct(m, m.state.H[1][i]), X[i], atol=1e-8)


def test_rank_one_data_exact():
    rng = np.random.default_rng(0)
    X = np.outer(rng.standard_normal(12), [1.0, -2.0, 0.5])
    m, _ = fit_model(ArchitectureSpec([LevelSpec(Linear(), 1, 1.0)]), X)
    assert reconstruction_error(m, training=True) <= 1e-20


def test_one_component_matches_pca_residual():
    X = gen_synth_gaussian(40, 5, 6)
    m, _ = fit_model(ArchitectureSpec([LevelSpec(Linear(), 1, 1.0)]), X, center=True)
    Xc = X - X.mean(axis=0)
    sv = np.linalg.svd(Xc, compute_uv=False)
    expected = np.sum(sv[1:] ** 2) / X.size
    assert reconstruction_error(m, training=True) == pytest.approx(expected, rel=1e-10)


def test_smoother_preimage_limit():
    X = gen_synth_gaussian(12, 4, 1)
    m = _rbf_model(X, 3.0, preimage_sigma2=[1e-6, 1e-6])
    for i in (0, 5):
        np.testing.assert_allclose(reconstruct(m, m.state.H[1][i]), X[i], atol=1e-10)


def test_reconstruction_plateau():
    X = gen_synth_gaussian(30, 8, 3)
    for s1 in (2, 4):
        errs = [reconstruction_error(analytic_model(X, s1, min(s2, s1), center=True), training=True)
                for s2 in (1, 2, 3, 4)]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))
        assert abs(errs[-1] - errs[s1 - 1]) <= 1e-6


def test_plateau_with_fit_beyond_s1():
    X = gen_synth_gaussian(30, 8, 3)
    m2, _ = fit_model(two_level_linear(2, 2), X, center=True)
    m4, _ = fit_model(two_level_linear(2, 4), X, center=True)
    a = reconstruction_error(m2, training=True)
    b = reconstruction_error(m4, training=True)
    assert abs(a - b) <= 1e-6


def test_reconstruct_errors():
    m = analytic_model(gen_synth_gaussian(10, 3, 0), 2, 1)
    with pytest.raises(InvalidArgumentError):
        reconstruct(m, [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        reconstruct(m, [1.0], level=3)


def test_reconstruction_error_held_out():
    X = gen_synth_gaussian(40, 6, 2)
    m = analytic_model(X[:30], 6, 6, center=True)
    # full rank in 6 dimensions: held-out rows are reconstructed too
    assert reconstruction_error(m, X[30:]) <= 1e-12


# --- traversal ----------------------------------------------------------------


def test_traversal_noop_and_shape():
    X = gen_synth_square(20, 0.05, 1)
    m = analytic_model(X, 3, 2, center=True)
    base = m.state.H[1][4]
    out = traverse(m, TraversalSpec(2, 1, [base[0]], base_index=4))
    np.testing.assert_allclose(out[0], reconstruct(m, base), atol=1e-14)
    out = traverse(m, TraversalSpec(2, 2, np.linspace(-1, 1, 7)))
    assert out.shape == (7, 2) and np.all(np.isfinite(out))


def test_traversal_linear_direction():
    X = gen_synth_gaussian(20, 4, 5)
    m = analytic_model(X, 4, 4, center=True)
    deltas = np.array([-0.2, -0.1, 0.0, 0.1, 0.2])
    base = m.state.H[1][0]
    out = traverse(m, TraversalSpec(2, 2, base[1] + deltas, base=base))
    step = out[3] - out[2]
    for k, dlt in enumerate(deltas):
        np.testing.assert_allclose(out[k], out[2] + (dlt / 0.1) * step, atol=1e-8)


def test_traversal_errors(tmp_path):
    m = analytic_model(gen_synth_gaussian(10, 3, 0), 2, 1)
    with pytest.raises(InvalidArgumentError):
        traverse(m, TraversalSpec(3, 1, [0.0]))
    with pytest.raises(InvalidArgumentError):
        traverse(m, TraversalSpec(2, 2, [0.0]))
    with pytest.raises(InvalidArgumentError):
        TraversalSpec(1, 1, [])
    spec = TraversalSpec(1, 1, [0.0, 1.0])
    write_traversal(tmp_path / "t.csv", tmp_path / "t.json", traverse(m, spec), spec)
    assert (tmp_path / "t.json").read_text().count("grid") == 1


# --- persistence --------------------------------------------------------------


def test_model_roundtrip():
    X = gen_synth_gaussian(15, 3, 0)
    m, rep = fit_model(two_level_linear(3, 2, kernel1=RBF(2.0)), X, TrainConfig(max_iters=20),
                       center=True, preimage_sigma2=[0.5, 0.7])
    m2, rep2 = model_from_dict(model_to_dict(m, rep))
    np.testing.assert_array_equal(m2.mean, m.mean)
    assert m2.preimage_sigma2 == [0.5, 0.7]
    for a, b in zip(m.state.H + m.state.Lambda, m2.state.H + m2.state.Lambda):
        np.testing.assert_array_equal(a, b)
    F1, F2 = encode_many(m, X[:3]), encode_many(m2, X[:3])
    for a, b in zip(F1, F2):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
