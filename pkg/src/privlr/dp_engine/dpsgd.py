"""DP-SGD for linear regression with per-example clipping and Gaussian noise."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..regression import Coefficients
from .accountant import DEFAULT_ORDERS, DpParams, calibrate_sigma

RANDOM_INIT_STD = 0.01


class DivergenceError(RuntimeError):
    """Training produced non-finite parameters."""


@dataclass(frozen=True)
class DpSgdConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    epochs: int = 10
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    seed: int = 0
    sampling: str = "poisson"  # or "fixed"
    init: str = "zeros"  # or "random"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not self.clip_norm > 0:
            raise ValueError("clip_norm must be > 0")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")
        if self.sampling not in ("poisson", "fixed"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.init not in ("zeros", "random"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self):
        return asdict(self)


def sampling_rate(n, batch_size):
    return min(1.0, batch_size / n)


def steps_per_epoch(n, batch_size):
    return math.ceil(n / batch_size)


def total_steps(n, batch_size, epochs):
    return epochs * steps_per_epoch(n, batch_size)


def config_for_budget(budget, n, learning_rate=0.01, batch_size=16, epochs=10,
                      clip_norm=1.0, seed=0, sampling="poisson", init="zeros",
                      orders=DEFAULT_ORDERS):
    """Build a config whose noise multiplier meets ``budget`` on ``n`` records."""
    batch_size = min(batch_size, n)
    sigma = calibrate_sigma(
        DpParams(budget.epsilon, budget.delta),
        sampling_rate(n, batch_size),
        total_steps(n, batch_size, epochs),
        tuple(orders),
    )
    return DpSgdConfig(learning_rate, batch_size, epochs, clip_norm, sigma, seed, sampling, init)


def config_from_dict(obj, n):
    """Parse the JSON training config; ``epsilon``/``delta`` calibrate sigma."""
    keys = ("learning_rate", "batch_size", "epochs", "clip_norm", "seed", "sampling", "init")
    kwargs = {k: obj[k] for k in keys if k in obj}
    if "noise_multiplier" in obj:
        return DpSgdConfig(noise_multiplier=obj["noise_multiplier"], **kwargs)
    return config_for_budget(DpParams(obj["epsilon"], obj["delta"]), n, **kwargs)


def clip_gradient(g, clip_norm):
    """Scale ``g`` (a vector or a stack of row vectors) to L2 norm at most ``clip_norm``."""
    if not clip_norm > 0:
        raise ValueError("clip_norm must be > 0")
    g = np.asarray(g, dtype=float)
    # rescale before squaring so huge-but-finite gradients do not overflow the norm
    peak = np.max(np.abs(g), axis=-1, keepdims=True)
    safe = np.where(peak > 0, peak, 1.0)
    norms = peak * np.linalg.norm(g / safe, axis=-1, keepdims=True)
    return g / np.maximum(1.0, norms / clip_norm)


def per_example_gradients(params, X, y):
    """Gradients of 0.5 * (w'x + b - y)^2 w.r.t. (w, b), one row per example."""
    resid = X @ params[:-1] + params[-1] - y
    return np.column_stack([X * resid[:, None], resid])


def _batches(rng, n, batch_size, sampling):
    if sampling == "poisson":
        q = sampling_rate(n, batch_size)
        return np.flatnonzero(rng.random(n) < q)
    return rng.choice(n, size=batch_size, replace=False)


def dpsgd_train(data, config, rng_seed=None, hook=None):
    """Train (weights, intercept) with DP-SGD.

    Each step draws a batch, clips per-example gradients to ``clip_norm``,
    sums them, adds N(0, (sigma * C)^2) per coordinate, divides by the
    (expected) batch size and takes a gradient step. ``hook(step, batch,
    clipped)`` is called before each update when given.
    """
    seed = config.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    X, y = data.features, data.labels
    n, d = X.shape
    b = min(config.batch_size, n)
    if config.init == "zeros":
        params = np.zeros(d + 1)
    else:
        params = rng.normal(0.0, RANDOM_INIT_STD, d + 1)
    noise_std = config.noise_multiplier * config.clip_norm
    step = 0
    for _ in range(config.epochs):
        for _ in range(steps_per_epoch(n, b)):
            batch = _batches(rng, n, b, config.sampling)
            with np.errstate(over="ignore", invalid="ignore"):
                grads = per_example_gradients(params, X[batch], y[batch])
            if not np.all(np.isfinite(grads)):
                raise DivergenceError(f"non-finite gradients at step {step}")
            clipped = clip_gradient(grads, config.clip_norm)
            if hook is not None:
                hook(step, batch, clipped)
            total = clipped.sum(axis=0)
            if noise_std > 0:
                total = total + rng.normal(0.0, noise_std, d + 1)
            params = params - config.learning_rate * total / b
            if not np.all(np.isfinite(params)):
                raise DivergenceError(f"non-finite parameters at step {step}")
            step += 1
    return Coefficients.from_vector(params)
