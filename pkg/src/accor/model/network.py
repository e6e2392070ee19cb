"""The ACCOR network: complex CNN backbone, realification, attention, classifier."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..ctensor import ShapeError, Tensor, matmul, no_grad
from ..frames import N_SAMPLES, N_TX, N_VIRTUAL, IQFrame
from ..signal import range_profile
from .layers import (
    complex_avg_pool,
    complex_batchnorm_forward,
    complex_conv_forward,
    crelu,
    multi_head_attention,
    realify_project,
)

TOKEN_MODES = ("spatial_tokens", "single_token")


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``pool_window`` is the average-pooling extent after the backbone in
    ``spatial_tokens`` mode (each retained position becomes a token);
    ``single_token`` mode pools globally.  ``conv_dims=2`` reshapes each frame
    to ``(Tx, Rx, samples)`` and convolves over the ``(Rx, samples)`` plane.
    """

    conv_channels: tuple[int, int, int] = (32, 64, 128)
    kernel_size: int = 5
    input_channels: int = N_VIRTUAL
    n_samples: int = N_SAMPLES
    embed_dim: int = 256
    attention_heads: int = 16
    n_classes: int = 10
    token_mode: str = "spatial_tokens"
    pool_window: int = 10
    conv_dims: int = 1
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        if len(self.conv_channels) != 3:
            raise ValueError("the backbone has exactly 3 convolution layers")
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even (real and imaginary halves)")
        if self.embed_dim % self.attention_heads:
            raise ValueError("embed_dim must be divisible by attention_heads")
        if self.token_mode not in TOKEN_MODES:
            raise ValueError(f"token_mode must be one of {TOKEN_MODES}")
        if self.conv_dims not in (1, 2):
            raise ValueError("conv_dims must be 1 or 2")
        if self.conv_dims == 2 and self.input_channels % N_TX:
            raise ValueError(f"2-D mode needs input_channels divisible by {N_TX}")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.pool_window < 1 or self.pool_window > self.n_samples:
            raise ValueError("pool_window must lie in [1, n_samples]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _complex_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # each part has variance 1/fan_in, total complex variance 2/fan_in (He)
    std = math.sqrt(1.0 / fan_in)
    return rng.normal(0.0, std, shape) + 1j * rng.normal(0.0, std, shape)


@dataclass
class AccorNetwork:
    """Parameter and buffer container; see :func:`forward`."""

    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "AccorNetwork":
        rng = np.random.default_rng(seed)
        cfg = config
        p: dict[str, np.ndarray] = {}
        b: dict[str, np.ndarray] = {}
        in_ch = cfg.input_channels // N_TX if cfg.conv_dims == 2 else cfg.input_channels
        ksize = (cfg.kernel_size,) * cfg.conv_dims
        for i, out_ch in enumerate(cfg.conv_channels):
            fan_in = in_ch * int(np.prod(ksize))
            p[f"backbone.{i}.weight"] = _complex_normal(rng, (out_ch, in_ch) + ksize, fan_in)
            p[f"backbone.{i}.bias"] = np.zeros(out_ch, dtype=np.complex128)
            p[f"backbone.{i}.bn_scale"] = np.ones((2, out_ch))
            p[f"backbone.{i}.bn_shift"] = np.zeros((2, out_ch))
            b[f"backbone.{i}.running_mean"] = np.zeros((2, out_ch))
            b[f"backbone.{i}.running_var"] = np.ones((2, out_ch))
            in_ch = out_ch
        half = cfg.embed_dim // 2
        p["project.weight"] = _complex_normal(rng, (in_ch, half), in_ch)
        p["project.bias"] = np.zeros(half, dtype=np.complex128)
        d = cfg.embed_dim
        limit = math.sqrt(6.0 / (2 * d))
        for name in ("q", "k", "v", "o"):
            p[f"attention.w{name}"] = rng.uniform(-limit, limit, (d, d))
            p[f"attention.b{name}"] = np.zeros(d)
        limit = math.sqrt(6.0 / (d + cfg.n_classes))
        p["classifier.weight"] = rng.uniform(-limit, limit, (d, cfg.n_classes))
        p["classifier.bias"] = np.zeros(cfg.n_classes)
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}
        return cls(config=cfg, params=params, buffers=b)

    def n_parameters(self) -> int:
        """Number of real scalars (complex entries count twice)."""
        return sum(t.size * (2 if t.is_complex else 1) for t in self.params.values())

    def copy(self) -> "AccorNetwork":
        return AccorNetwork(
            config=ModelConfig.from_dict(self.config.to_dict()),
            params={k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.params.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
        )

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data for k, v in self.params.items()}
        state.update(self.buffers)
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.params) | set(self.buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing {missing}, unexpected {extra}")
        for k, v in state.items():
            ref = self.params[k].data if k in self.params else self.buffers[k]
            if v.shape != ref.shape:
                raise ShapeError(f"{k}: expected shape {ref.shape}, got {v.shape}")
            arr = np.array(v, dtype=ref.dtype)
            if k in self.params:
                self.params[k] = Tensor(arr, requires_grad=True, name=k)
            else:
                self.buffers[k] = arr

    def forward(self, batch, training: bool = False):
        return forward(self, batch, training=training)

    __call__ = forward


def _as_profiles(batch, n_channels: int, n_samples: int) -> np.ndarray:
    if isinstance(batch, IQFrame):
        batch = [batch]
    if isinstance(batch, (list, tuple)):
        if not batch:
            raise ValueError("empty batch")
        if all(isinstance(f, IQFrame) for f in batch):
            return range_profile(np.stack([f.data for f in batch]))
        batch = np.stack([np.asarray(f) for f in batch])
    arr = np.asarray(batch.data if isinstance(batch, Tensor) else batch)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (n_channels, n_samples):
        raise ShapeError(f"expected profiles shaped (batch, {n_channels}, {n_samples}), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("empty batch")
    return arr.astype(np.complex128, copy=False)


def backbone(net: AccorNetwork, x: Tensor, training: bool) -> Tensor:
    cfg = net.config
    p = net.params
    for i in range(3):
        x = complex_conv_forward(x, p[f"backbone.{i}.weight"], p[f"backbone.{i}.bias"])
        x = complex_batchnorm_forward(
            x,
            p[f"backbone.{i}.bn_scale"],
            p[f"backbone.{i}.bn_shift"],
            net.buffers[f"backbone.{i}.running_mean"],
            net.buffers[f"backbone.{i}.running_var"],
            training=training,
            momentum=cfg.bn_momentum,
            eps=cfg.bn_epsilon,
        )
        x = crelu(x)
    return x


def forward(net: AccorNetwork, batch, training: bool = False) -> tuple[Tensor, Tensor]:
    """Run the network on frames or range profiles.

    ``batch`` is a list of :class:`IQFrame` (range profiles are computed
    here) or an array of precomputed profiles shaped ``(batch, channels,
    samples)``.  Returns ``(logits, embeddings)``; the embeddings are the
    pre-classifier vectors used by the contrastive loss.
    """
    cfg = net.config
    profiles = _as_profiles(batch, cfg.input_channels, cfg.n_samples)
    bsz = profiles.shape[0]
    if cfg.conv_dims == 2:
        profiles = profiles.reshape(bsz, N_TX, cfg.input_channels // N_TX, cfg.n_samples)
    x = backbone(net, Tensor(profiles), training)
    if cfg.token_mode == "single_token":
        window = x.shape[2:]
    else:
        window = (1,) * (cfg.conv_dims - 1) + (cfg.pool_window,)
    x = complex_avg_pool(x, window)
    x = x.reshape(bsz, x.shape[1], -1)
    tokens = realify_project(x, net.params["project.weight"], net.params["project.bias"])
    attn = {k.split(".", 1)[1]: v for k, v in net.params.items() if k.startswith("attention.")}
    tokens = multi_head_attention(tokens, attn, cfg.attention_heads)
    embeddings = tokens.mean(axis=1)
    logits = matmul(embeddings, net.params["classifier.weight"]) + net.params["classifier.bias"]
    return logits, embeddings


def predict_logits(net: AccorNetwork, profiles: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Inference-mode logits for a stack of profiles, evaluated in chunks."""
    out = []
    with no_grad():
        for start in range(0, len(profiles), batch_size):
            logits, _ = forward(net, profiles[start : start + batch_size], training=False)
            out.append(logits.data)
    return np.concatenate(out, axis=0)


def parameters(net: AccorNetwork) -> Sequence[Tensor]:
    return list(net.params.values())
