"""Tests for the scikit-learn style estimator wrapper."""

import numpy as np
import pytest
from sklearn.base import clone

from zoomprop import (
    Box,
    FeatureImage,
    Frame,
    InsufficientDataError,
    ScoredBox,
    SynthConfig,
    ZoomProposalEstimator,
    gen_scene,
    render_features,
)


def small_dataset(n_images=2, seed=0):
    cfg = SynthConfig(
        width_range=(600, 600), height_range=(600, 600),
        clusters=2, objects_per_cluster=2, large_objects=1,
    )
    X, y = [], []
    for i in range(n_images):
        scene = gen_scene(cfg, seed=seed + i)
        X.append(render_features(scene, channels=8, stride=16.0, seed=seed + i))
        y.append(scene.gt_boxes)
    return X, y


def fast_estimator(**overrides):
    params = dict(
        hidden_dim=8,
        batch_size=32,
        iterations=40,
        conf_threshold=0.2,
        seed=1,
    )
    params.update(overrides)
    return ZoomProposalEstimator(**params)


class TestParams:
    def test_get_params_returns_constructor_arguments(self):
        est = ZoomProposalEstimator(hidden_dim=32, seed=7)
        params = est.get_params()
        assert params["hidden_dim"] == 32
        assert params["seed"] == 7
        assert params["proposer"] == "coarse_sliding"
        assert "zoom_threshold" in params and "conf_threshold" in params

    def test_set_params_round_trip(self):
        est = ZoomProposalEstimator()
        est.set_params(iterations=5, zoom_enabled=False)
        assert est.iterations == 5 and est.zoom_enabled is False
        with pytest.raises(ValueError):
            est.set_params(nonexistent=1)

    def test_clone_preserves_params_and_drops_state(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        assert hasattr(est, "head_")
        copy = clone(est)
        assert copy.get_params() == est.get_params()
        assert not hasattr(copy, "head_")


class TestFitPredict:
    def test_fit_sets_state(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        assert est.n_features_in_ == 8 * 16
        assert len(est.loss_history_) == est.iterations
        assert [i for i, _ in est.loss_history_] == list(range(1, est.iterations + 1))
        assert all(np.isfinite(v) and v > 0 for _, v in est.loss_history_)
        assert est.head_.hidden_dim == 8

    def test_fit_returns_self(self):
        X, y = small_dataset()
        est = fast_estimator()
        assert est.fit(X, y) is est

    def test_predict_shapes_and_types(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        predictions = est.predict(X)
        assert len(predictions) == len(X)
        for proposals, feat in zip(predictions, X):
            width, height = feat.extent()
            for sb in proposals:
                assert isinstance(sb, ScoredBox)
                assert 0 <= sb.box.x1 < sb.box.x2 <= width
                assert 0 <= sb.box.y1 < sb.box.y2 <= height

    def test_deterministic_given_seed(self):
        X, y = small_dataset()
        a = fast_estimator().fit(X, y).predict(X)
        b = fast_estimator().fit(X, y).predict(X)
        assert a == b

    def test_seed_changes_model(self):
        X, y = small_dataset()
        a = fast_estimator(seed=1).fit(X, y)
        b = fast_estimator(seed=2).fit(X, y)
        assert not np.array_equal(a.head_.w1, b.head_.w1)

    def test_score_in_unit_interval(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        value = est.score(X, y)
        assert 0.0 <= value <= 1.0

    def test_image_sizes_override_matches_extent_default(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        sizes = [feat.extent() for feat in X]
        assert est.predict(X, image_sizes=sizes) == est.predict(X)


class TestValidation:
    def test_predict_before_fit(self):
        X, _ = small_dataset(n_images=1)
        with pytest.raises(AttributeError):
            ZoomProposalEstimator().predict(X)

    def test_single_image_not_a_sequence(self):
        X, y = small_dataset(n_images=1)
        with pytest.raises(TypeError):
            fast_estimator().fit(X[0], y)

    def test_empty_x(self):
        with pytest.raises(InsufficientDataError):
            fast_estimator().fit([], [])

    def test_wrong_x_element_type(self):
        with pytest.raises(TypeError):
            fast_estimator().fit([np.zeros((8, 4, 4))], [[]])

    def test_y_length_mismatch(self):
        X, y = small_dataset()
        with pytest.raises(ValueError):
            fast_estimator().fit(X, y[:1])

    def test_y_element_type(self):
        X, _ = small_dataset(n_images=1)
        with pytest.raises(TypeError):
            fast_estimator().fit(X, [[(0, 0, 10, 10)]])

    def test_image_sizes_length_mismatch(self):
        X, y = small_dataset()
        with pytest.raises(ValueError):
            fast_estimator().fit(X, y, image_sizes=[(600, 600)])

    def test_unknown_proposer_rejected_at_predict(self):
        X, y = small_dataset()
        est = fast_estimator().fit(X, y)
        est.set_params(proposer="quadtree")
        with pytest.raises(ValueError):
            est.predict(X)


class TestFeatureImageChecks:
    def test_mixed_grid_sizes_accepted_when_dims_match(self):
        # pooling maps any grid to the same input_dim, so mixed extents fit
        rng = np.random.default_rng(3)
        X = [
            FeatureImage(data=rng.normal(size=(8, 6, 6)).astype(np.float32), stride=16.0),
            FeatureImage(data=rng.normal(size=(8, 9, 12)).astype(np.float32), stride=16.0),
        ]
        y = [[Box(8, 8, 60, 40)], [Box(16, 16, 120, 80)]]
        est = fast_estimator(iterations=10).fit(X, y)
        assert len(est.predict(X)) == 2
