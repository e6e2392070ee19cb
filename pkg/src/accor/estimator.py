"""scikit-learn compatible wrappers around the network and the range transform."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ctensor import fft, no_grad, softmax, Tensor
from .loss import LossConfig
from .model.network import AccorNetwork, ModelConfig, forward, predict_logits
from .trainer import TrainConfig, fit_profiles
from .validation import check_fraction, check_iq_array, check_labels, check_positive_int


class RangeProfileTransformer(TransformerMixin, BaseEstimator):
    """Per-channel DFT along the sample axis (stateless).

    With ``magnitude=True`` the output is ``|profile|``, handy for feeding
    real-valued sklearn models.
    """

    def __init__(self, magnitude: bool = False):
        self.magnitude = magnitude

    def fit(self, X, y=None):
        X = check_iq_array(X)
        self.n_channels_, self.n_samples_ = X.shape[1:]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_channels_")
        X = check_iq_array(X, self.n_channels_, self.n_samples_)
        out = fft(X, axis=-1)
        return np.abs(out) if self.magnitude else out


class AccorClassifier(ClassifierMixin, BaseEstimator):
    """Complex CNN + attention classifier trained on the hybrid loss.

    ``fit`` takes raw IQ frames shaped ``(n_frames, channels, samples)``
    (or range profiles when ``input_kind="profile"``) and arbitrary
    hashable labels.  Hyperparameters mirror :class:`ModelConfig`,
    :class:`LossConfig` and :class:`TrainConfig`.
    """

    def __init__(
        self,
        conv_channels=(32, 64, 128),
        kernel_size: int = 5,
        embed_dim: int = 256,
        attention_heads: int = 16,
        token_mode: str = "spatial_tokens",
        pool_window: int = 10,
        conv_dims: int = 1,
        alpha: float = 0.4,
        tau: float = 0.1,
        class_weight=None,
        epochs: int = 60,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        random_state: int = 0,
        input_kind: str = "iq",
    ):
        self.conv_channels = conv_channels
        self.kernel_size = kernel_size
        self.embed_dim = embed_dim
        self.attention_heads = attention_heads
        self.token_mode = token_mode
        self.pool_window = pool_window
        self.conv_dims = conv_dims
        self.alpha = alpha
        self.tau = tau
        self.class_weight = class_weight
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.random_state = random_state
        self.input_kind = input_kind

    def _profiles(self, X, n_channels=None, n_samples=None):
        if self.input_kind not in ("iq", "profile"):
            raise ValueError(f"input_kind must be 'iq' or 'profile', got {self.input_kind!r}")
        X = check_iq_array(X, n_channels, n_samples)
        return fft(X, axis=-1) if self.input_kind == "iq" else X

    def _configs(self, n_channels: int, n_samples: int, n_classes: int, y_enc: np.ndarray):
        model_cfg = ModelConfig(
            conv_channels=tuple(self.conv_channels),
            kernel_size=check_positive_int(self.kernel_size, "kernel_size"),
            input_channels=n_channels,
            n_samples=n_samples,
            embed_dim=self.embed_dim,
            attention_heads=self.attention_heads,
            n_classes=n_classes,
            token_mode=self.token_mode,
            pool_window=self.pool_window,
            conv_dims=self.conv_dims,
        )
        if self.class_weight is None:
            weights = None
        elif isinstance(self.class_weight, str):
            if self.class_weight != "balanced":
                raise ValueError(f"class_weight must be None, 'balanced' or a mapping, got {self.class_weight!r}")
            counts = np.bincount(y_enc, minlength=n_classes)
            weights = len(y_enc) / (n_classes * counts)
        else:
            weights = np.array([float(self.class_weight.get(c, 1.0)) for c in self.classes_])
        loss_cfg = LossConfig(
            alpha=check_fraction(self.alpha, "alpha"),
            tau=float(self.tau),
            class_weights=weights,
        )
        train_cfg = TrainConfig(
            epochs=check_positive_int(self.epochs, "epochs", minimum=0),
            batch_size=check_positive_int(self.batch_size, "batch_size", minimum=2),
            learning_rate=float(self.learning_rate),
            optimizer=self.optimizer,
            loss=loss_cfg,
            seed=int(self.random_state),
        )
        return model_cfg, train_cfg

    def fit(self, X, y):
        profiles = self._profiles(X)
        y = check_labels(y, len(profiles))
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("fit needs at least two classes")
        _, n_channels, n_samples = profiles.shape
        model_cfg, train_cfg = self._configs(n_channels, n_samples, len(self.classes_), y_enc)
        batch = min(train_cfg.batch_size, len(y_enc))
        if batch < 2:
            raise ValueError("fit needs at least two frames")
        train_cfg.batch_size = batch
        self.network_ = AccorNetwork.init(model_cfg, seed=train_cfg.seed)
        _, self.loss_history_ = fit_profiles(self.network_, profiles, y_enc, len(self.classes_), train_cfg)
        self.n_channels_, self.n_samples_ = n_channels, n_samples
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        return predict_logits(self.network_, self._profiles(X, self.n_channels_, self.n_samples_))

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        with no_grad():
            return softmax(Tensor(logits), axis=1).data

    def predict(self, X) -> np.ndarray:
        # argmax keeps the first maximum, i.e. ties go to the lowest class index
        check_is_fitted(self, "network_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def embed(self, X) -> np.ndarray:
        """Pre-classifier embeddings (the vectors the contrastive term sees)."""
        check_is_fitted(self, "network_")
        profiles = self._profiles(X, self.n_channels_, self.n_samples_)
        out = []
        with no_grad():
            for start in range(0, len(profiles), 64):
                _, emb = forward(self.network_, profiles[start : start + 64], training=False)
                out.append(emb.data)
        return np.concatenate(out)
