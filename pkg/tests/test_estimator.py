import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import Pipeline
from sklearn.preprocessing import StandardScaler

from fladopt.datasets import gaussian_blobs
from fladopt.estimator import FladClassifier


def easy_data(seed=0, classes=4):
    return gaussian_blobs(n_classes=classes, dim=8, separation=6.0, samples_per_class=40, seed=seed)


def quick_clf(**kw):
    base = dict(hidden_widths=(16,), epochs=8, batch_size=16, random_state=0)
    base.update(kw)
    return FladClassifier(**base)


def test_get_params_set_params_clone_roundtrip():
    clf = quick_clf(optimizer="zeroth", rho=0.05)
    params = clf.get_params()
    assert params["rho"] == 0.05
    assert params["optimizer"] == "zeroth"
    other = clone(clf)
    assert other.get_params() == params
    other.set_params(gamma=0.25)
    assert other.gamma == 0.25


def test_fit_predict_on_separable_blobs():
    data = easy_data()
    clf = quick_clf().fit(data.train.inputs, data.train.labels)
    assert clf.score(data.test.inputs, data.test.labels) > 0.95
    probs = clf.predict_proba(data.test.inputs)
    assert probs.shape == (data.test.size, 4)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert set(clf.predict(data.test.inputs)) <= set(clf.classes_)
    assert clf.decision_function(data.test.inputs).shape == probs.shape


def test_fit_is_deterministic_given_random_state():
    data = easy_data()
    a = quick_clf().fit(data.train.inputs, data.train.labels)
    b = quick_clf().fit(data.train.inputs, data.train.labels)
    assert np.array_equal(a.params_.values, b.params_.values)


def test_refit_resets_previous_state():
    data = easy_data()
    clf = quick_clf()
    clf.fit(data.train.inputs, data.train.labels)
    first = clf.params_.values.copy()
    clf.fit(data.train.inputs, data.train.labels)
    assert np.array_equal(clf.params_.values, first)
    assert clf.phase_count_ == 1


def test_partial_fit_grows_head_and_tracks_classes():
    data = easy_data(classes=6)
    x, y = data.train.inputs, data.train.labels
    clf = quick_clf()
    clf.partial_fit(x[y < 2], y[y < 2], classes=[0, 1])
    assert list(clf.classes_) == [0, 1]
    assert clf.model_spec_.output_classes == 2
    clf.partial_fit(x[(y >= 2) & (y < 4)], y[(y >= 2) & (y < 4)], classes=[2, 3])
    assert list(clf.classes_) == [0, 1, 2, 3]
    assert clf.model_spec_.output_classes == 4
    assert clf.phase_count_ == 2
    assert len(clf.history_) == 2
    preds = clf.predict(x[y < 4])
    assert set(preds) <= {0, 1, 2, 3}


def test_partial_fit_rejects_undeclared_labels():
    data = easy_data()
    x, y = data.train.inputs, data.train.labels
    clf = quick_clf()
    with pytest.raises(ValueError, match="not declared"):
        clf.partial_fit(x, y, classes=[0, 1])


def test_first_phase_needs_two_classes():
    data = easy_data()
    x, y = data.train.inputs, data.train.labels
    clf = quick_clf()
    with pytest.raises(ValueError, match="two classes"):
        clf.partial_fit(x[y == 0], y[y == 0], classes=[0])


def test_predict_before_fit_raises():
    with pytest.raises(NotFittedError):
        quick_clf().predict(np.zeros((2, 8)))


def test_predict_rejects_wrong_feature_width():
    data = easy_data()
    clf = quick_clf().fit(data.train.inputs, data.train.labels)
    with pytest.raises(ValueError, match="features"):
        clf.predict_proba(np.zeros((2, 3)))


def test_invalid_optimizer_and_variant_combinations():
    data = easy_data()
    with pytest.raises(ValueError, match="optimizer must be one of"):
        quick_clf(optimizer="adam").fit(data.train.inputs, data.train.labels)
    with pytest.raises(ValueError, match="noise-component"):
        quick_clf(optimizer="flad", variant="random").fit(data.train.inputs, data.train.labels)


def test_anchor_pulls_second_phase_toward_previous_solution():
    data = easy_data(classes=4)
    x, y = data.train.inputs, data.train.labels

    def hidden_layer_drift(anchor):
        clf = quick_clf(anchor=anchor, epochs=12, momentum=0.0)
        clf.partial_fit(x[y < 2], y[y < 2], classes=[0, 1])
        frozen = clf.params_.view("w0").copy()
        clf.partial_fit(x[y >= 2], y[y >= 2], classes=[2, 3])
        return frozen, np.linalg.norm(clf.params_.view("w0") - frozen)

    prev_a, drift_free = hidden_layer_drift(0.0)
    prev_b, drift_anchored = hidden_layer_drift(5.0)
    assert np.array_equal(prev_a, prev_b)
    # a strong anchor keeps shared parameters closer to the previous phase
    assert drift_anchored < drift_free


def test_composes_with_sklearn_pipeline_and_cv():
    data = easy_data()
    pipe = Pipeline([("scale", StandardScaler()), ("clf", quick_clf(epochs=6))])
    pipe.fit(data.train.inputs, data.train.labels)
    assert pipe.score(data.test.inputs, data.test.labels) > 0.9
    scores = cross_val_score(quick_clf(epochs=4), data.train.inputs, data.train.labels, cv=2)
    assert scores.shape == (2,)
    assert scores.min() > 0.5


def test_feature_width_must_stay_constant_across_phases():
    data = easy_data()
    x, y = data.train.inputs, data.train.labels
    clf = quick_clf()
    clf.partial_fit(x[y < 2], y[y < 2], classes=[0, 1])
    with pytest.raises(ValueError, match="features"):
        clf.partial_fit(x[y >= 2][:, :4], y[y >= 2], classes=[2, 3])
