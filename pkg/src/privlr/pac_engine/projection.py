"""SVD basis for anisotropic noise, learned from resampled mechanism outputs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ProjectionBasis:
    v_t: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        v_t = np.asarray(self.v_t, dtype=float)
        if v_t.ndim != 2 or v_t.shape[0] != v_t.shape[1]:
            raise ValueError("v_t must be square")
        object.__setattr__(self, "v_t", v_t)
        object.__setattr__(self, "singular_values", np.asarray(self.singular_values, dtype=float))

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def dim(self):
        return self.v_t.shape[0]

    def project(self, x):
        return self.v_t @ x

    def unproject(self, y):
        return self.v_t.T @ y


def compute_projection(samples):
    """Right singular vectors of the column-centered k x p sample matrix.

    Rows of the returned ``v_t`` are ordered by decreasing singular value;
    directions beyond the sample rank complete an orthonormal basis.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need a k x p sample matrix with k >= 2")
    k, p = samples.shape
    centered = samples - samples.mean(axis=0)
    if not np.any(centered):
        warnings.warn("identical mechanism outputs; using the identity basis", stacklevel=2)
        return ProjectionBasis.identity(p)
    _, s, v_t = np.linalg.svd(centered, full_matrices=True)
    sv = np.zeros(p)
    sv[: s.shape[0]] = s
    return ProjectionBasis(v_t, sv)


def poisson_subsample(rng, n, rate):
    """Indices kept by independent Bernoulli(rate) draws; empty draws are redrawn."""
    while True:
        idx = np.flatnonzero(rng.random(n) < rate)
        if idx.size:
            return idx


def estimate_projection(data, mechanism, k=100, rate=0.5, seed=0):
    """Fit the mechanism on ``k`` Poisson(rate) resamples and SVD the outputs."""
    rng = np.random.default_rng(seed)
    outputs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(k):
            idx = poisson_subsample(rng, data.n, rate)
            outputs.append(mechanism(data.subset(idx)).as_vector())
    return compute_projection(np.vstack(outputs))
