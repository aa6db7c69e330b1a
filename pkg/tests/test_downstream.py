import numpy as np
import pytest

from dkpca.core import ArchitectureSpec, LevelSpec, TrainConfig, shallow_kpca, two_level_linear
from dkpca.dataio import SplitSpec, gen_synth_gaussian
from dkpca.errors import InvalidArgumentError
from dkpca.downstream import (
    FeatureModelSpec,
    PredictorSpec,
    Task,
    default_sigma2_grid,
    extract_features,
    fit_predict,
    grid_search,
    make_binary_task,
    metrics,
)
from dkpca.generative import fit_model
from dkpca.kernels import RBF, kernel_matrix


def test_feature_width_and_training_lookup():
    X = gen_synth_gaussian(25, 4, 0)
    m, _ = fit_model(two_level_linear(3, 2, kernel1=RBF(4.0)), X, TrainConfig(max_iters=50))
    F = extract_features(m, is_training=True)
    assert F.shape == (25, 5)
    np.testing.assert_array_equal(F, np.hstack(m.state.H))
    assert extract_features(m, X[:4]).shape == (4, 5)


def test_single_level_equals_shallow_scores():
    X = gen_synth_gaussian(20, 4, 1)
    m, _ = fit_model(ArchitectureSpec([LevelSpec(RBF(4.0), 3, 1.0)]), X)
    h, _ = shallow_kpca(kernel_matrix(RBF(4.0), X), 3)
    F = extract_features(m, is_training=True)
    np.testing.assert_allclose(np.abs(F), np.abs(h), atol=1e-10)


def test_fit_predict_examples():
    F = np.array([[-1.0], [1.0]])
    y = np.array([0, 1])
    assert metrics(fit_predict(F, y, F), y, Task.BINARY)["ACC"] == 100.0
    rng = np.random.default_rng(0)
    F = rng.standard_normal((10, 3))
    y = F[:, 0].copy()
    pred = fit_predict(F, y, F, PredictorSpec(Task.REGRESSION, 0.0))
    assert metrics(pred, y, "regression")["RMSE"] <= 1e-10
    pred = fit_predict(F, y, F, PredictorSpec(Task.REGRESSION, 1e12))
    np.testing.assert_allclose(pred, np.full(10, y.mean()), atol=1e-9)


def test_fit_predict_errors():
    F = np.ones((4, 2))
    with pytest.raises(InvalidArgumentError, match="ridge > 0"):
        fit_predict(F, np.arange(4.0), F, PredictorSpec(Task.REGRESSION, 0.0))
    with pytest.raises(InvalidArgumentError):
        fit_predict(F, np.array([0, 1, 2, 1]), F)
    with pytest.raises(InvalidArgumentError):
        fit_predict(F, np.zeros(3), F)
    with pytest.raises(InvalidArgumentError):
        PredictorSpec(ridge=-1.0)


def test_metrics_examples():
    y = np.array([0, 1, 1, 0])
    assert metrics(y, y, "binary_classification") == {"ACC": 100.0}
    assert metrics(1 - y, y, Task.BINARY) == {"ACC": 0.0}
    assert metrics(y + 0.3, y, Task.REGRESSION)["RMSE"] == pytest.approx(0.3)
    assert metrics(y.astype(float), y, Task.REGRESSION) == {"RMSE": 0.0}
    with pytest.raises(InvalidArgumentError):
        metrics([], [], Task.BINARY)


def test_binary_task_deterministic():
    X, y, z = make_binary_task(50, 3)
    X2, y2, _ = make_binary_task(50, 3)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(y, y2)
    assert set(np.unique(y)) <= {0, 1}
    np.testing.assert_array_equal(y, (np.sum(z**2, axis=1) > 0.5).astype(int))


def test_grid_search_deterministic():
    X, y, _ = make_binary_task(60, 1)
    kw = dict(sigma2_grid=default_sigma2_grid(3), eta2_grid=(-2.0, 2.0),
              config=TrainConfig(max_iters=100))
    a = grid_search(X, y, FeatureModelSpec((3, 2)), SplitSpec(seed=1), **kw)
    b = grid_search(X, y, FeatureModelSpec((3, 2)), SplitSpec(seed=1), workers=3, **kw)
    assert a.params == b.params and a.val == b.val and a.test == b.test
    assert len(a.trials) == 6
