"""Built-in verification suite: transform oracles, gradient checks, loss identities.

Every check returns a :class:`CheckResult`; :func:`run_selfcheck` runs them
all.  The checks look up layer and loss internals through their modules at
call time, so a fault injected into those modules is caught here.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ctensor import Tensor, dft_1d, dft_direct, finite_diff_check, real
from .loss import LossConfig, cross_entropy, hybrid_loss, supervised_contrastive
from .model import layers
from .model import network as network_mod
from .model.network import AccorNetwork, ModelConfig, forward

GRAD_TOL = 1e-4
FD_STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<42s} {self.value:.3e} (limit {self.limit:.1e})"


def _crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def _away_from_axes(z: np.ndarray, margin: float) -> np.ndarray:
    z = np.where(np.abs(z.real) < margin, z + 2 * margin * np.sign(z.real + 0.5), z)
    return np.where(np.abs(z.imag) < margin, z + 2j * margin * np.sign(z.imag + 0.5), z)


# -- oracles -----------------------------------------------------------------------
def check_dft_oracle() -> float:
    rng = np.random.default_rng(100)
    worst = 0.0
    for n in (100, 1, 7, 37, 64, 101):
        x = _crandn(rng, 3, n)
        worst = max(worst, float(np.abs(dft_1d(Tensor(x)).data - dft_direct(x)).max()))
    return worst


def _real_xcorr(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Real 'same' 1-D cross-correlation, summed over input channels."""
    b, cin, n = x.shape
    cout, _, ks = k.shape
    lo = (ks - 1) // 2
    xp = np.zeros((b, cin, n + ks - 1))
    xp[:, :, lo : lo + n] = x
    out = np.zeros((b, cout, n))
    for o in range(cout):
        for t in range(n):
            out[:, o, t] = np.einsum("bck,ck->b", xp[:, :, t : t + ks], k[o])
    return out


def check_conv_oracle() -> float:
    """Complex conv against four real convolutions (re*re - im*im, re*im + im*re)."""
    rng = np.random.default_rng(101)
    x = _crandn(rng, 2, 3, 9)
    k = _crandn(rng, 4, 3, 5)
    got = layers.complex_conv_forward(Tensor(x), Tensor(k)).data
    c, d, a, b = x.real, x.imag, k.real, k.imag
    want = (_real_xcorr(c, a) - _real_xcorr(d, b)) + 1j * (_real_xcorr(c, b) + _real_xcorr(d, a))
    return float(np.abs(got - want).max())


# -- gradient checks ---------------------------------------------------------------
def grad_conv() -> float:
    rng = np.random.default_rng(200)
    x, k, b = Tensor(_crandn(rng, 2, 3, 8)), Tensor(_crandn(rng, 2, 3, 3)), Tensor(_crandn(rng, 2))
    w = Tensor(_crandn(rng, 2, 2, 8))
    worst = finite_diff_check(
        lambda x, k, b: real((layers.complex_conv_forward(x, k, b) * w).sum()), [x, k, b], FD_STEP
    )
    x2, k2 = Tensor(_crandn(rng, 2, 2, 5, 6)), Tensor(_crandn(rng, 3, 2, 3, 3))
    w2 = Tensor(_crandn(rng, 2, 3, 5, 6))
    return max(
        worst,
        finite_diff_check(lambda x, k: real((layers.complex_conv_forward(x, k) * w2).sum()), [x2, k2], FD_STEP),
    )


def grad_batchnorm() -> float:
    rng = np.random.default_rng(201)
    x = Tensor(_crandn(rng, 4, 3, 5))
    scale, shift = Tensor(rng.normal(size=(2, 3)) + 1.0), Tensor(rng.normal(size=(2, 3)))
    w = Tensor(_crandn(rng, 4, 3, 5))

    def f(x, scale, shift):
        return real((layers.complex_batchnorm_forward(x, scale, shift, eps=1e-5) * w).sum())

    worst = finite_diff_check(f, [x, scale, shift], FD_STEP)
    rm, rv = rng.normal(size=(2, 3)), rng.uniform(0.5, 2.0, size=(2, 3))

    def g(x, scale, shift):
        out = layers.complex_batchnorm_forward(x, scale, shift, rm, rv, training=False)
        return real((out * w).sum())

    return max(worst, finite_diff_check(g, [x, scale, shift], FD_STEP))


def grad_crelu() -> float:
    rng = np.random.default_rng(202)
    z = Tensor(_away_from_axes(_crandn(rng, 6, 7), 10 * FD_STEP + 1e-3))
    w = Tensor(_crandn(rng, 6, 7))
    return finite_diff_check(lambda z: real((layers.crelu(z) * w).sum()), z, FD_STEP)


def grad_avg_pool() -> float:
    rng = np.random.default_rng(203)
    x = Tensor(_crandn(rng, 2, 3, 11))
    w = Tensor(_crandn(rng, 2, 3, 3))
    return finite_diff_check(lambda x: real((layers.complex_avg_pool(x, 3) * w).sum()), x, FD_STEP)


def grad_realify_project() -> float:
    rng = np.random.default_rng(204)
    f = Tensor(_crandn(rng, 2, 5, 3))
    wt, b = Tensor(_crandn(rng, 5, 4)), Tensor(_crandn(rng, 4))
    c = Tensor(rng.normal(size=(2, 3, 8)))
    return finite_diff_check(lambda f, wt, b: (layers.realify_project(f, wt, b) * c).sum(), [f, wt, b], FD_STEP)


def grad_attention() -> float:
    rng = np.random.default_rng(205)
    dim, heads = 8, 2
    tokens = Tensor(rng.normal(size=(2, 4, dim)))
    names = ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"]
    params = [Tensor(rng.normal(size=(dim, dim) if n[0] == "w" else (dim,)) * 0.5) for n in names]
    c = Tensor(rng.normal(size=(2, 4, dim)))

    def f(tokens, *ps):
        return (layers.multi_head_attention(tokens, dict(zip(names, ps)), heads) * c).sum()

    return finite_diff_check(f, [tokens] + params, FD_STEP)


def grad_dft() -> float:
    rng = np.random.default_rng(206)
    x = Tensor(_crandn(rng, 3, 10))
    w = Tensor(_crandn(rng, 3, 10))
    return finite_diff_check(lambda x: real((dft_1d(x) * w).sum()), x, FD_STEP)


def grad_cross_entropy() -> float:
    rng = np.random.default_rng(207)
    logits = Tensor(rng.normal(size=(6, 4)))
    labels = np.array([0, 1, 2, 3, 1, 1])
    weights = np.array([1.0, 2.0, 0.5, 1.5])
    return finite_diff_check(lambda z: cross_entropy(z, labels, weights), logits, FD_STEP)


def grad_contrastive() -> float:
    rng = np.random.default_rng(208)
    emb = Tensor(rng.normal(size=(6, 5)))
    labels = np.array([0, 0, 1, 1, 2, 0])
    return finite_diff_check(lambda e: supervised_contrastive(e, labels, 0.5), emb, FD_STEP)


def tiny_config() -> ModelConfig:
    return ModelConfig(
        conv_channels=(3, 3, 4),
        kernel_size=3,
        input_channels=4,
        n_samples=16,
        embed_dim=8,
        attention_heads=2,
        n_classes=2,
        pool_window=4,
    )


def _kink_margin(net: AccorNetwork, profiles: np.ndarray) -> float:
    """Smallest distance of any pre-activation to the cReLU kinks."""
    margin = math.inf
    original = network_mod.crelu

    def probe(z):
        nonlocal margin
        margin = min(margin, float(np.abs(z.data.real).min()), float(np.abs(z.data.imag).min()))
        return original(z)

    network_mod.crelu = probe
    try:
        forward(net.copy(), profiles, training=True)
    finally:
        network_mod.crelu = original
    return margin


def grad_end_to_end(min_margin: float = 2e-3, max_tries: int = 50) -> float:
    """Hybrid loss through the whole tiny network w.r.t. every parameter.

    Finite differences are meaningless across a cReLU kink, so the first
    seed whose pre-activations all stay ``min_margin`` away from the axes
    is used.
    """
    cfg = tiny_config()
    labels = np.array([0, 1, 0, 1])
    loss_cfg = LossConfig(alpha=0.5, tau=0.5)
    for seed in range(max_tries):
        rng = np.random.default_rng([300, seed])
        profiles = _crandn(rng, 4, cfg.input_channels, cfg.n_samples)
        net = AccorNetwork.init(cfg, seed=seed)
        if _kink_margin(net, profiles) >= min_margin:
            break
    else:
        raise RuntimeError("no kink-free configuration found for the end-to-end check")
    names = sorted(net.params)

    def f(*ps):
        for n, p in zip(names, ps):
            net.params[n] = p
        logits, emb = forward(net, profiles, training=True)
        return hybrid_loss(logits, emb, labels, loss_cfg)

    return finite_diff_check(f, [net.params[n] for n in names], FD_STEP)


# -- loss identities ---------------------------------------------------------------
def identity_hybrid_endpoints() -> float:
    rng = np.random.default_rng(400)
    logits, emb = Tensor(rng.normal(size=(8, 10))), Tensor(rng.normal(size=(8, 16)))
    labels = np.array([0, 1, 2, 0, 1, 2, 3, 3])
    ce = cross_entropy(logits, labels).data
    sc = supervised_contrastive(emb, labels, 0.1).data
    d0 = abs(float(hybrid_loss(logits, emb, labels, LossConfig(alpha=0.0)).data - ce))
    d1 = abs(float(hybrid_loss(logits, emb, labels, LossConfig(alpha=1.0)).data - sc))
    return max(d0, d1)


def identity_uniform_ce() -> float:
    logits = Tensor(np.zeros((5, 10)))
    return abs(float(cross_entropy(logits, [0, 3, 5, 7, 9]).data) - math.log(10))


def identity_contrastive_hand_value() -> float:
    """Relative error against ``log(1 + e^-10)`` for the 3-sample probe."""
    z = np.zeros((3, 4))
    z[0, 0] = z[1, 0] = z[2, 1] = 1.0
    got = float(supervised_contrastive(Tensor(z), [0, 0, 1], 0.1).data)
    want = math.log1p(math.exp(-10.0))
    return abs(got - want) / want


def identity_contrastive_scale() -> float:
    rng = np.random.default_rng(401)
    emb = rng.normal(size=(8, 6))
    labels = [0, 1, 0, 1, 2, 2, 0, 1]
    base = float(supervised_contrastive(Tensor(emb), labels, 0.1).data)
    return max(abs(float(supervised_contrastive(Tensor(s * emb), labels, 0.1).data) - base) for s in (1e-3, 0.5, 7.0, 1e3))


CHECKS: list[tuple[str, Callable[[], float], float]] = [
    ("oracle: dft vs direct sum", check_dft_oracle, 1e-9),
    ("oracle: complex conv vs four real convs", check_conv_oracle, 1e-12),
    ("gradient: complex conv", grad_conv, GRAD_TOL),
    ("gradient: complex batch norm", grad_batchnorm, GRAD_TOL),
    ("gradient: cReLU", grad_crelu, GRAD_TOL),
    ("gradient: average pool", grad_avg_pool, GRAD_TOL),
    ("gradient: realify projection", grad_realify_project, GRAD_TOL),
    ("gradient: multi-head attention", grad_attention, GRAD_TOL),
    ("gradient: dft", grad_dft, GRAD_TOL),
    ("gradient: cross-entropy", grad_cross_entropy, GRAD_TOL),
    ("gradient: supervised contrastive", grad_contrastive, GRAD_TOL),
    ("gradient: end-to-end tiny network", grad_end_to_end, GRAD_TOL),
    ("loss: hybrid endpoints", identity_hybrid_endpoints, 1e-12),
    ("loss: uniform-logit CE = ln 10", identity_uniform_ce, 1e-9),
    ("loss: contrastive 3-sample hand value", identity_contrastive_hand_value, 0.01),
    ("loss: contrastive scale invariance", identity_contrastive_scale, 1e-9),
]


def run_selfcheck(names=None) -> list[CheckResult]:
    results = []
    for name, fn, limit in CHECKS:
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            value = float(fn())
        except Exception:  # a crashing check is a failing check
            value = math.inf
        passed = bool(np.isfinite(value) and value <= limit)
        results.append(CheckResult(name, passed, value, limit, time.perf_counter() - t0))
    return results
