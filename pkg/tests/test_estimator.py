import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from accor.ctensor import dft_direct
from accor.estimator import AccorClassifier, RangeProfileTransformer

SMALL = dict(conv_channels=(8, 16, 16), kernel_size=3, embed_dim=16, attention_heads=2,
             pool_window=16, epochs=12, batch_size=8, learning_rate=1e-2, alpha=0.0)


def tones(per_class, labels=("cup", "mug"), seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(16)
    X, y = [], []
    for c, name in enumerate(labels):
        for _ in range(per_class):
            x = np.tile(np.exp(2j * np.pi * (2 + 3 * c) * t / 16), (4, 1))
            X.append(x + 0.3 * (rng.normal(size=(4, 16)) + 1j * rng.normal(size=(4, 16))))
            y.append(name)
    return np.array(X), np.array(y)


class TestTransformer:
    def test_matches_direct_dft(self):
        X, _ = tones(2)
        out = RangeProfileTransformer().fit_transform(X)
        np.testing.assert_allclose(out, dft_direct(X), atol=1e-10)

    def test_magnitude(self):
        X, _ = tones(1)
        out = RangeProfileTransformer(magnitude=True).fit(X).transform(X)
        assert out.dtype == np.float64 and np.all(out >= 0)

    def test_shape_checked_after_fit(self):
        X, _ = tones(1)
        tr = RangeProfileTransformer().fit(X)
        with pytest.raises(ValueError, match="channels"):
            tr.transform(X[:, :3])

    def test_rejects_non_finite(self):
        X, _ = tones(1)
        X[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            RangeProfileTransformer().fit(X)


@pytest.fixture(scope="module")
def fitted():
    X, y = tones(12)
    return AccorClassifier(**SMALL).fit(X, y), X, y


class TestClassifier:
    def test_learns_string_labels(self, fitted):
        clf, X, y = fitted
        assert list(clf.classes_) == ["cup", "mug"]
        assert clf.score(X, y) >= 0.9
        assert set(clf.predict(X)) <= {"cup", "mug"}

    def test_proba_rows_sum_to_one(self, fitted):
        clf, X, _ = fitted
        p = clf.predict_proba(X)
        assert p.shape == (len(X), 2)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.array_equal(clf.classes_[p.argmax(1)], clf.predict(X))

    def test_embed_width(self, fitted):
        clf, X, _ = fitted
        assert clf.embed(X[:3]).shape == (3, 16)

    def test_deterministic(self, fitted):
        clf, X, y = fitted
        again = AccorClassifier(**SMALL).fit(X, y)
        np.testing.assert_array_equal(again.decision_function(X), clf.decision_function(X))
        assert again.loss_history_ == clf.loss_history_

    def test_profile_input(self, fitted):
        clf, X, y = fitted
        prof = AccorClassifier(**{**SMALL, "input_kind": "profile"}).fit(np.fft.fft(X, axis=-1), y)
        assert prof.score(np.fft.fft(X, axis=-1), y) >= 0.9

    def test_pipeline_with_transformer(self, fitted):
        _, X, y = fitted
        pipe = make_pipeline(RangeProfileTransformer(), AccorClassifier(**{**SMALL, "input_kind": "profile"}))
        assert pipe.fit(X, y).score(X, y) >= 0.9

    def test_clone_and_params(self):
        clf = AccorClassifier(alpha=0.25, tau=0.3)
        params = clf.get_params()
        assert params["alpha"] == 0.25 and params["tau"] == 0.3
        twin = clone(clf)
        assert twin.get_params() == params and not hasattr(twin, "network_")
        clf.set_params(epochs=3)
        assert clf.epochs == 3

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            AccorClassifier().predict(np.zeros((1, 4, 16)))

    def test_wrong_shape_at_predict(self, fitted):
        clf, X, _ = fitted
        with pytest.raises(ValueError, match="samples"):
            clf.predict(X[:, :, :8])

    @pytest.mark.parametrize(
        "kw,match",
        [
            ({"alpha": 1.5}, "alpha"),
            ({"epochs": 2.5}, "epochs"),
            ({"batch_size": 1}, "batch_size"),
            ({"class_weight": "inverse"}, "class_weight"),
            ({"input_kind": "spectrum"}, "input_kind"),
        ],
    )
    def test_invalid_hyperparameters(self, kw, match):
        X, y = tones(2)
        with pytest.raises(ValueError, match=match):
            AccorClassifier(**{**SMALL, **kw}).fit(X, y)

    def test_single_class_rejected(self):
        X, _ = tones(2)
        with pytest.raises(ValueError, match="two classes"):
            AccorClassifier(**SMALL).fit(X, ["a"] * len(X))

    def test_label_length_mismatch(self):
        X, y = tones(2)
        with pytest.raises(ValueError, match="entries"):
            AccorClassifier(**SMALL).fit(X, y[:-1])

    @pytest.mark.parametrize("weight", ["balanced", {"cup": 2.0}])
    def test_class_weight_forms(self, weight):
        X, y = tones(3)
        clf = AccorClassifier(**{**SMALL, "epochs": 1, "class_weight": weight}).fit(X[:5], y[:5])
        assert len(clf.loss_history_) == 1

    def test_batch_shrinks_to_data(self):
        X, y = tones(2)
        clf = AccorClassifier(**{**SMALL, "epochs": 1, "batch_size": 32}).fit(X, y)
        assert np.isfinite(clf.loss_history_[0])
