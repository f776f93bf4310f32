"""Anisotropic Gaussian noise estimation and addition for membership privacy.

For each left-out record x the estimator repeatedly draws a Poisson(q)
subsample A of the remaining records, compares the projected mechanism
outputs on A and on A + {x}, and tracks the per-direction mean squared
difference v. Once those running means settle, the per-record noise
variances are

    e[i] = sqrt(v[i]) * sum_j sqrt(v[j]) / (4 * mi)

which makes sum_i v[i] / e[i] = 4 * mi, i.e. q(1-q) * E||dF||^2_{Sigma^-1} = mi
at q = 1/2. The released variances are the per-direction maxima over records.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ..regression import Coefficients
from .projection import ProjectionBasis, estimate_projection, poisson_subsample

MODES = ("covariance_correct", "paper_literal")
MAX_INSTANCES = 250


class PacEstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PacEstimationConfig:
    """Knobs for the noise estimator.

    ``projection`` is ``"identity"``, ``"svd"`` (learned from ``svd_samples``
    resampled fits) or a ready :class:`ProjectionBasis`. ``pair`` selects the
    second dataset of each round: ``"subsample"`` is A + {x}, ``"full"`` is
    the whole dataset.
    """

    mi_budget: float = 0.130812
    sampling_rate: float = 0.5
    convergence_threshold: float = 1e-4
    min_rounds: int = 30
    max_rounds: int = 1000
    projection: object = "svd"
    mode: str = "covariance_correct"
    pair: str = "subsample"
    svd_samples: int = 100
    max_instances: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.sampling_rate < 1.0:
            raise ValueError("sampling_rate must be in (0, 1)")
        if not self.convergence_threshold > 0:
            raise ValueError("convergence_threshold must be > 0")
        if self.min_rounds < 2 or self.max_rounds < self.min_rounds:
            raise ValueError("need 2 <= min_rounds <= max_rounds")
        if not self.mi_budget > 0:
            raise ValueError("mi_budget must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.pair not in ("subsample", "full"):
            raise ValueError(f"unknown pair {self.pair!r}")
        if not (isinstance(self.projection, ProjectionBasis) or self.projection in ("identity", "svd")):
            raise ValueError(f"unknown projection {self.projection!r}")


@dataclass(frozen=True)
class Instability:
    """Mechanism output instability measured per left-out record (MI-free)."""

    basis: ProjectionBasis
    mean_sq_dev: np.ndarray  # (records, d+1), projected coordinates
    rounds: np.ndarray
    converged: np.ndarray
    instances: np.ndarray


@dataclass(frozen=True)
class NoiseProfile:
    variances: np.ndarray
    basis: ProjectionBasis
    mi_budget: float
    per_dim_mean_sq_dev: np.ndarray
    mode: str = "covariance_correct"
    converged: bool = True
    rounds_per_instance: list = field(default_factory=list)
    instance_variances: np.ndarray | None = None
    instance_mean_sq_dev: np.ndarray | None = None

    @property
    def dim(self):
        return self.variances.shape[0]

    def to_dict(self):
        return {
            "variances": self.variances.tolist(),
            "v_t": self.basis.v_t.tolist(),
            "singular_values": self.basis.singular_values.tolist(),
            "mi_budget": self.mi_budget,
            "mode": self.mode,
            "converged": bool(self.converged),
            "rounds_per_instance": [int(r) for r in self.rounds_per_instance],
            "per_dim_mean_sq_dev": self.per_dim_mean_sq_dev.tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        v_t = np.asarray(obj["v_t"], dtype=float)
        sv = obj.get("singular_values", [0.0] * v_t.shape[0])
        variances = np.asarray(obj["variances"], dtype=float)
        return cls(
            variances=variances,
            basis=ProjectionBasis(v_t, sv),
            mi_budget=float(obj["mi_budget"]),
            per_dim_mean_sq_dev=np.asarray(obj.get("per_dim_mean_sq_dev", np.zeros_like(variances))),
            mode=obj.get("mode", "covariance_correct"),
            converged=bool(obj.get("converged", True)),
            rounds_per_instance=list(obj.get("rounds_per_instance", [])),
        )

    @classmethod
    def zeros(cls, dim, mi_budget=1.0, mode="covariance_correct"):
        return cls(np.zeros(dim), ProjectionBasis.identity(dim), mi_budget, np.zeros(dim), mode)


def noise_variances(mean_sq_dev, mi):
    """Per-direction variances that spend exactly the ``mi`` budget."""
    root = np.sqrt(np.asarray(mean_sq_dev, dtype=float))
    return root * root.sum(axis=-1, keepdims=True) / (4.0 * mi)


def _instance_rounds(data, mechanism, x_index, config, basis, full_output, seed):
    rng = np.random.default_rng(seed)
    others = np.delete(np.arange(data.n), x_index)
    p = basis.dim
    total = np.zeros(p)
    prev_mean = None
    for r in range(1, config.max_rounds + 1):
        a_idx = others[poisson_subsample(rng, others.size, config.sampling_rate)]
        out_a = basis.project(mechanism(data.subset(a_idx)).as_vector())
        if full_output is not None:
            out_b = full_output
        else:
            b_idx = np.append(a_idx, x_index)
            out_b = basis.project(mechanism(data.subset(b_idx)).as_vector())
        total += (out_a - out_b) ** 2
        mean = total / r
        if prev_mean is not None and r >= config.min_rounds:
            if np.all(np.abs(mean - prev_mean) < config.convergence_threshold):
                return mean, r, True
        prev_mean = mean
    return mean, config.max_rounds, False


def _select_instances(n, config, seed):
    limit = config.max_instances
    if limit is None:
        limit = n if n <= MAX_INSTANCES else MAX_INSTANCES
    if limit >= n:
        return np.arange(n)
    rng = np.random.default_rng([seed, 3])
    return np.sort(rng.choice(n, size=limit, replace=False))


def resolve_basis(data, mechanism, config, seed=0):
    if isinstance(config.projection, ProjectionBasis):
        return config.projection
    if config.projection == "identity":
        return ProjectionBasis.identity(data.d + 1)
    return estimate_projection(data, mechanism, config.svd_samples, config.sampling_rate, seed=[seed, 1])


def measure_instability(data, mechanism, config, seed=0):
    """Run the per-record resampling rounds; independent of the MI budget."""
    basis = resolve_basis(data, mechanism, config, seed)
    if basis.dim != data.d + 1:
        raise ValueError(f"projection is {basis.dim}-dimensional, mechanism output is {data.d + 1}")
    instances = _select_instances(data.n, config, seed)
    full_output = None
    if config.pair == "full":
        full_output = basis.project(mechanism(data).as_vector())

    def run(i):
        try:
            return _instance_rounds(data, mechanism, i, config, basis, full_output, [seed, 0, int(i)])
        except Exception as exc:  # mechanism is a black box
            raise PacEstimationError(f"mechanism failed while leaving out record {i}: {exc}") from exc

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if config.n_jobs == 1:
            results = [run(i) for i in instances]
        else:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=config.n_jobs)(delayed(run)(i) for i in instances)
    return Instability(
        basis=basis,
        mean_sq_dev=np.vstack([r[0] for r in results]),
        rounds=np.array([r[1] for r in results]),
        converged=np.array([r[2] for r in results]),
        instances=instances,
    )


def profile_from_instability(inst, mi, mode="covariance_correct"):
    """Turn measured instability into released variances for budget ``mi``."""
    if not mi > 0:
        raise ValueError("mutual information budget must be > 0")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    per_instance = noise_variances(inst.mean_sq_dev, mi)
    if mode == "covariance_correct":
        variances = per_instance.max(axis=0)
    else:
        # diagonal of V^T diag(e) read in original coordinates; max starts from 0
        literal = per_instance * np.diag(inst.basis.v_t)
        variances = np.maximum(literal.max(axis=0), 0.0)
    return NoiseProfile(
        variances=variances,
        basis=inst.basis,
        mi_budget=float(mi),
        per_dim_mean_sq_dev=inst.mean_sq_dev.max(axis=0),
        mode=mode,
        converged=bool(inst.converged.all()),
        rounds_per_instance=inst.rounds.tolist(),
        instance_variances=per_instance,
        instance_mean_sq_dev=inst.mean_sq_dev,
    )


def estimate_noise(data, mechanism, config, seed=0):
    """Estimate the anisotropic noise profile of ``mechanism`` on ``data``.

    ``mechanism`` maps a Dataset to Coefficients and must be deterministic.
    """
    inst = measure_instability(data, mechanism, config, seed)
    return profile_from_instability(inst, config.mi_budget, config.mode)


def sample_noise(profile, rng, size=None):
    """Draw noise vectors in original coordinates (shape ``size + (dim,)``)."""
    if np.any(profile.variances < 0) or not np.all(np.isfinite(profile.variances)):
        raise ValueError("noise profile has negative or non-finite variances")
    shape = (profile.dim,) if size is None else (size, profile.dim)
    z = rng.normal(0.0, 1.0, shape) * np.sqrt(profile.variances)
    if profile.mode == "covariance_correct":
        return z @ profile.basis.v_t
    return z


def add_noise(model, profile, seed):
    """Perturb (weights, intercept) with one draw from the profile."""
    vec = model.as_vector()
    if vec.shape[0] != profile.dim:
        raise ValueError(f"profile has dimension {profile.dim}, model has {vec.shape[0]}")
    noise = sample_noise(profile, np.random.default_rng(seed))
    return Coefficients.from_vector(vec + noise)


def pac_train(data, fit, level, config, seed=0, profile=None):
    """Estimate noise for ``fit`` on ``data``, fit on all of it, then perturb."""
    if not level.mi > 0:
        raise ValueError("privacy level needs mi > 0")
    if profile is None:
        profile = estimate_noise(data, fit, replace(config, mi_budget=level.mi), seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fit(data)
    return add_noise(model, profile, seed=[seed, 2])
