"""Non-private linear regression: OLS, Ridge, Lasso, plus RMSE and R^2.

All fitters include an intercept that is never penalized. The Lasso follows
the literal objective ``||y - X b - c||^2 + lam * ||b||_1`` (no 1/(2n) factor).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

LASSO_MAX_SWEEPS = 10_000
LASSO_TOL = 1e-8


class RankDeficientWarning(UserWarning):
    pass


class LassoConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class Coefficients:
    weights: np.ndarray
    intercept: float
    rank_deficient: bool = False

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercept", float(self.intercept))
        if not (np.all(np.isfinite(w)) and np.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")

    @property
    def dimension(self):
        return self.weights.shape[0]

    def as_vector(self):
        """Weights followed by the intercept: the d+1 vector privacy mechanisms perturb."""
        return np.append(self.weights, self.intercept)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1], vec[-1])

    def to_dict(self):
        return {"weights": self.weights.tolist(), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["weights"], dtype=float), obj["intercept"])


@dataclass(frozen=True)
class FitSpec:
    kind: str = "ols"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ols", "ridge", "lasso"):
            raise ValueError(f"unknown fit kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("regularization strength must be >= 0")
        if self.kind == "ols" and self.lam != 0:
            raise ValueError("ols takes lam = 0")

    def __call__(self, data):
        return fit(self, data.features, data.labels)

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam}


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    return X, y


def fit_ols(X, y):
    """Least squares with intercept.

    Rank-deficient designs are solved by the SVD pseudoinverse (minimum-norm
    solution) and flagged with a warning and ``rank_deficient=True``.
    """
    X, y = _check_xy(X, y)
    A = np.column_stack([X, np.ones(X.shape[0])])
    sol, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    deficient = rank < A.shape[1]
    if deficient:
        warnings.warn(
            f"design matrix rank {rank} < {A.shape[1]}; using pseudoinverse solution",
            RankDeficientWarning,
            stacklevel=2,
        )
    return Coefficients(sol[:-1], sol[-1], rank_deficient=bool(deficient))


def fit_ridge(X, y, lam, fit_intercept=True):
    """Closed-form ridge; the penalty applies to the weights only."""
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("ridge lambda must be >= 0")
    if not fit_intercept:
        gram = X.T @ X
        gram[np.diag_indices_from(gram)] += lam
        return Coefficients(np.linalg.solve(gram, X.T @ y), 0.0)
    if lam == 0:
        return fit_ols(X, y)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    gram = Xc.T @ Xc
    gram[np.diag_indices_from(gram)] += lam
    w = np.linalg.solve(gram, Xc.T @ (y - y_mean))
    return Coefficients(w, y_mean - x_mean @ w)


def soft_threshold(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def fit_lasso(X, y, lam, max_sweeps=LASSO_MAX_SWEEPS, tol=LASSO_TOL, init=None):
    """Cyclic coordinate descent on the centered problem.

    Each coordinate update is ``soft_threshold(x_j' r_j, lam / 2) / x_j' x_j``
    where ``r_j`` is the partial residual. Stops when no weight moves more
    than ``tol`` in a sweep.
    """
    X, y = _check_xy(X, y)
    if lam < 0:
        raise ValueError("lasso lambda must be >= 0")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    gram = Xc.T @ Xc
    corr = Xc.T @ (y - y_mean)
    diag = np.diag(gram).copy()
    d = X.shape[1]
    w = np.zeros(d) if init is None else np.array(init, dtype=float)
    half = lam / 2.0
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(d):
            if diag[j] == 0.0:
                new = 0.0
            else:
                rho = corr[j] - gram[j] @ w + diag[j] * w[j]
                new = soft_threshold(rho, half) / diag[j]
            delta = abs(new - w[j])
            if delta > max_delta:
                max_delta = delta
            w[j] = new
        if max_delta < tol:
            return Coefficients(w, y_mean - x_mean @ w)
    raise LassoConvergenceError(
        f"lasso did not converge in {max_sweeps} sweeps (last change {max_delta:.3g})",
        Coefficients(w, y_mean - x_mean @ w),
    )


def fit(spec, X, y):
    if spec.kind == "ols":
        return fit_ols(X, y)
    if spec.kind == "ridge":
        return fit_ridge(X, y, spec.lam)
    return fit_lasso(X, y, spec.lam)


def predict(model, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dimension:
        raise ValueError(f"expected {model.dimension} columns, got shape {X.shape}")
    return X @ model.weights + model.intercept


def _check_pair(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ValueError("empty vectors")
    return y, y_hat


def rmse(y, y_hat):
    y, y_hat = _check_pair(y, y_hat)
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def r_squared(y, y_hat):
    y, y_hat = _check_pair(y, y_hat)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("R^2 undefined for constant targets")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)
