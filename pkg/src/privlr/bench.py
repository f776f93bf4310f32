"""Benchmark harness: grid search and repeated private trainings per privacy level.

For every method and posterior-success-rate level the harness evaluates each
grid point over ``trials`` privatized trainings, keeps the point with the
lowest mean test RMSE, and records mean/std of RMSE and R^2.

PAC noise is estimated once per (fit config) on the training split; the
measured instability does not depend on the MI budget, so every privacy
level reuses it and only the Gaussian draws differ between trials.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .dataio import load_dataset, load_manifest, prepare_split
from .dp_engine import DivergenceError, DpParams, config_for_budget, dpsgd_train
from .pac_engine import (
    PSR_LEVELS,
    NoiseProfile,
    PacEstimationConfig,
    PrivacyLevel,
    add_noise,
    measure_instability,
    profile_from_instability,
)
from .regression import FitSpec, predict, r_squared, rmse

METHODS = ("non_private", "dpsgd", "pac")
LAMBDA_GRID = tuple(2.0**k for k in range(-10, 11))
DP_GRID = {
    "learning_rate": [0.001, 0.01, 0.1],
    "batch_size": [8, 16, 32],
    "clip_norm": [0.1, 1.0, 10.0],
    "epochs": [10, 20, 50],
}
DP_DEFAULTS = {"learning_rate": 0.01, "batch_size": 16, "clip_norm": 1.0, "epochs": 10}
PAC_GRID = [{"kind": "ols", "lam": 0.0}] + [{"kind": "ridge", "lam": lam} for lam in LAMBDA_GRID]
MAX_FAILED_FRACTION = 0.10


class SpecError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


@dataclass
class ExperimentSpec:
    dataset: str
    methods: list = field(default_factory=lambda: list(METHODS))
    psr_levels: list = field(default_factory=lambda: list(PSR_LEVELS))
    trials: int = 50
    dp_grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DP_GRID.items()})
    pac_grid: list = field(default_factory=lambda: [dict(c) for c in PAC_GRID])
    normalization: bool = True
    split: tuple = (0.2, 42)
    seed: int = 0
    delta: float = 1e-5
    pac: dict = field(default_factory=dict)  # PacEstimationConfig overrides
    dp_sampling: str = "poisson"
    results_dir: str = "results"

    @classmethod
    def from_dict(cls, obj):
        obj = dict(obj)
        if "method" in obj:
            obj["methods"] = [obj.pop("method")]
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError([f"unknown spec field {k!r}" for k in sorted(unknown)])
        if "dataset" not in obj:
            raise SpecError(["spec needs a 'dataset'"])
        if "split" in obj:
            split = obj["split"]
            obj["split"] = (split["fraction"], split["seed"]) if isinstance(split, dict) else tuple(split)
        spec = cls(**obj)
        spec.validate()
        return spec

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "methods": list(self.methods),
            "psr_levels": list(self.psr_levels),
            "trials": self.trials,
            "dp_grid": self.dp_grid,
            "pac_grid": self.pac_grid,
            "normalization": self.normalization,
            "split": {"fraction": self.split[0], "seed": self.split[1]},
            "seed": self.seed,
            "delta": self.delta,
            "pac": self.pac,
            "dp_sampling": self.dp_sampling,
            "results_dir": self.results_dir,
        }

    def problems(self):
        out = []
        if self.trials < 1:
            out.append("trials must be >= 1")
        for m in self.methods:
            if m not in METHODS:
                out.append(f"unknown method {m!r}")
        if not self.methods:
            out.append("no methods given")
        if not self.psr_levels:
            out.append("no psr levels given")
        for p in self.psr_levels:
            if not 0.5 < p < 1.0:
                out.append(f"psr level {p} outside (0.5, 1)")
        if not 0.0 < self.delta < 1.0:
            out.append("delta must be in (0, 1)")
        if not 0.0 < self.split[0] < 1.0:
            out.append("split fraction must be in (0, 1)")
        if "dpsgd" in self.methods:
            for key in DP_DEFAULTS:
                if not self.dp_grid.get(key):
                    out.append(f"dp_grid needs a non-empty {key!r} list")
        if "pac" in self.methods:
            if not self.pac_grid:
                out.append("pac_grid is empty")
            for cfg in self.pac_grid:
                try:
                    FitSpec(**cfg)
                except (TypeError, ValueError) as exc:
                    out.append(f"bad pac_grid entry {cfg}: {exc}")
        try:
            PacEstimationConfig(**self.pac)
        except (TypeError, ValueError) as exc:
            out.append(f"bad pac options: {exc}")
        try:
            load_manifest(self.dataset)
        except (FileNotFoundError, ValueError) as exc:
            out.append(str(exc))
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise SpecError(problems)


@dataclass
class TrialEntry:
    method: str
    psr: float
    epsilon: float
    mi: float
    config: dict
    rmse_raw: list
    r2_raw: list
    n_failed: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_trials(self):
        return len(self.rmse_raw)

    @property
    def valid(self):
        total = self.n_trials + self.n_failed
        return self.n_trials > 0 and self.n_failed <= MAX_FAILED_FRACTION * total

    def _stat(self, values, fn):
        return float(fn(values)) if values else math.nan

    @property
    def rmse_mean(self):
        return self._stat(self.rmse_raw, np.mean)

    @property
    def rmse_std(self):
        return self._stat(self.rmse_raw, np.std)

    @property
    def r2_mean(self):
        return self._stat(self.r2_raw, np.mean)

    @property
    def r2_std(self):
        return self._stat(self.r2_raw, np.std)

    def to_dict(self):
        return {
            "method": self.method,
            "psr": self.psr,
            "epsilon": self.epsilon,
            "mi": self.mi,
            "config": self.config,
            "rmse_mean": self.rmse_mean,
            "rmse_std": self.rmse_std,
            "r2_mean": self.r2_mean,
            "r2_std": self.r2_std,
            "rmse_raw": list(self.rmse_raw),
            "r2_raw": list(self.r2_raw),
            "n_trials": self.n_trials,
            "n_failed": self.n_failed,
            "valid": self.valid,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(
            method=obj["method"], psr=obj["psr"], epsilon=obj["epsilon"], mi=obj["mi"],
            config=obj["config"], rmse_raw=list(obj["rmse_raw"]), r2_raw=list(obj["r2_raw"]),
            n_failed=obj.get("n_failed", 0), extra=obj.get("extra", {}),
        )


@dataclass
class TrialReport:
    dataset: str
    entries: list
    metadata: dict = field(default_factory=dict)
    grid: list = field(default_factory=list)

    def entry(self, method, psr):
        for e in self.entries:
            if e.method == method and math.isclose(e.psr, psr):
                return e
        raise KeyError((method, psr))

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "metadata": self.metadata,
            "entries": [e.to_dict() for e in self.entries],
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["dataset"], [TrialEntry.from_dict(e) for e in obj["entries"]],
                   obj.get("metadata", {}), obj.get("grid", []))


class Workbench:
    """Loaded, split data for one spec plus caches shared across grid points."""

    def __init__(self, spec):
        self.spec = spec
        manifest = load_manifest(spec.dataset)
        self.name = manifest.name
        self.data = load_dataset(manifest)
        self.train, self.test, self.scaler = prepare_split(
            self.data, spec.split[0], spec.split[1], normalize=spec.normalization
        )
        self.pac_config = PacEstimationConfig(**spec.pac)
        self._instability = {}

    def metrics(self, model):
        y_hat = predict(model, self.test.features)
        return rmse(self.test.labels, y_hat), r_squared(self.test.labels, y_hat)

    def instability(self, fit):
        key = (fit.kind, fit.lam)
        if key not in self._instability:
            self._instability[key] = measure_instability(
                self.train, fit, self.pac_config, seed=self.spec.seed
            )
        return self._instability[key]


def _trial_seed(spec, method, trial):
    return [spec.seed, METHODS.index(method), trial]


def run_trials(bench, method, psr, config, profile=None):
    """Evaluate one grid point over ``spec.trials`` privatized trainings."""
    spec = bench.spec
    level = PrivacyLevel.from_psr(psr, spec.delta)
    entry = TrialEntry(method, psr, level.epsilon_equiv, level.mi, dict(config), [], [])

    if method == "non_private":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = FitSpec(**config)(bench.train)
        make_model = lambda t: model  # noqa: E731
    elif method == "dpsgd":
        dp_cfg = config_for_budget(
            DpParams(level.epsilon_equiv, spec.delta),
            bench.train.n,
            sampling=spec.dp_sampling,
            **config,
        )
        entry.extra["noise_multiplier"] = dp_cfg.noise_multiplier
        make_model = lambda t: dpsgd_train(  # noqa: E731
            bench.train, dp_cfg, rng_seed=_trial_seed(spec, method, t)
        )
    elif method == "pac":
        fit = FitSpec(**config)
        if profile is None:
            profile = profile_from_instability(bench.instability(fit), level.mi, bench.pac_config.mode)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            base = fit(bench.train)
        entry.extra.update(
            mode=profile.mode,
            projection=_projection_name(bench.pac_config),
            noise_variance_total=float(profile.variances.sum()),
            converged=profile.converged,
        )
        make_model = lambda t: add_noise(base, profile, _trial_seed(spec, method, t))  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")

    for t in range(spec.trials):
        try:
            err, r2 = bench.metrics(make_model(t))
        except (DivergenceError, ValueError, FloatingPointError):
            entry.n_failed += 1
            continue
        if not (math.isfinite(err) and math.isfinite(r2)):
            entry.n_failed += 1
            continue
        entry.rmse_raw.append(err)
        entry.r2_raw.append(r2)
    return entry


def _projection_name(cfg):
    return cfg.projection if isinstance(cfg.projection, str) else "custom"


def config_key(config):
    return tuple((k, config[k]) for k in sorted(config))


def select_best(entries):
    """Lowest mean RMSE among valid entries; ties go to the smaller config."""
    valid = [e for e in entries if e.valid]
    if not valid:
        raise RuntimeError("every grid point failed")
    return min(valid, key=lambda e: (e.rmse_mean, config_key(e.config)))


def grid_points(spec, method):
    if method == "non_private":
        return [{"kind": "ols", "lam": 0.0}]
    if method == "pac":
        return [dict(c) for c in spec.pac_grid]
    keys = sorted(spec.dp_grid)
    return [dict(zip(keys, values)) for values in product(*(spec.dp_grid[k] for k in keys))]


def grid_search(bench, method, psr):
    """Run every grid point for (method, psr); return (best, all entries)."""
    entries = [run_trials(bench, method, psr, cfg) for cfg in grid_points(bench.spec, method)]
    return select_best(entries), entries


def run_experiment(spec, progress=None):
    """Full benchmark for one dataset; a pure function of ``spec``."""
    bench = Workbench(spec)
    started = time.time()
    best_entries, grid = [], []
    for method in spec.methods:
        for psr in spec.psr_levels:
            best, entries = grid_search(bench, method, psr)
            best_entries.append(best)
            grid.extend(
                {"method": method, "psr": psr, "config": e.config, "rmse_mean": e.rmse_mean,
                 "valid": e.valid}
                for e in entries
            )
            if progress:
                progress(method, psr, best)
    metadata = {
        "dataset": bench.name,
        "n_train": bench.train.n,
        "n_test": bench.test.n,
        "d": bench.train.d,
        "seed": spec.seed,
        "split": {"fraction": spec.split[0], "seed": spec.split[1]},
        "normalization": spec.normalization,
        "delta": spec.delta,
        "pac_mode": bench.pac_config.mode,
        "pac_projection": _projection_name(bench.pac_config),
        "pac_pair": bench.pac_config.pair,
        "dp_sampling": spec.dp_sampling,
        "evaluation": "held-out test split",
        "spec": spec.to_dict(),
        "started": started,
        "elapsed_s": time.time() - started,
    }
    return TrialReport(bench.name, best_entries, metadata, grid)


CSV_COLUMNS = ["dataset", "method", "psr", "epsilon", "mi", "metric", "mean", "std", "n_trials", "config_json"]


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in report.entries:
        for metric, mean, std in (("rmse", e.rmse_mean, e.rmse_std), ("r2", e.r2_mean, e.r2_std)):
            w.writerow([report.dataset, e.method, repr(e.psr), repr(e.epsilon), repr(e.mi), metric,
                        repr(mean), repr(std), e.n_trials, json.dumps(e.config, sort_keys=True)])
    return buf.getvalue()


def plot_data(report):
    """Per-method (psr, rmse_mean, rmse_std) series plus a non-private reference line."""
    series = {}
    reference = None
    for e in report.entries:
        if e.method == "non_private":
            reference = {"rmse_mean": e.rmse_mean, "rmse_std": e.rmse_std,
                         "r2_mean": e.r2_mean, "style": "dotted"}
            continue
        series.setdefault(e.method, []).append(
            {"psr": e.psr, "rmse_mean": e.rmse_mean, "rmse_std": e.rmse_std,
             "r2_mean": e.r2_mean, "r2_std": e.r2_std}
        )
    for points in series.values():
        points.sort(key=lambda p: p["psr"])
    return {"dataset": report.dataset, "series": series, "non_private": reference}


def emit_report(report, fmt, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    elif fmt == "csv":
        text = report_csv(report)
    elif fmt == "plotdata":
        text = json.dumps(plot_data(report), indent=2, sort_keys=True)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def write_results(report, results_dir):
    """One JSON and one CSV per (dataset, method), plus combined CSV and plot data."""
    out = Path(results_dir)
    written = []
    for method in dict.fromkeys(e.method for e in report.entries):
        part = replace(report, entries=[e for e in report.entries if e.method == method],
                       grid=[g for g in report.grid if g["method"] == method])
        written.append(emit_report(part, "json", out / f"{report.dataset}_{method}.json"))
        written.append(emit_report(part, "csv", out / f"{report.dataset}_{method}.csv"))
    written.append(emit_report(report, "csv", out / f"{report.dataset}_summary.csv"))
    written.append(emit_report(report, "plotdata", out / f"{report.dataset}_plotdata.json"))
    return written


def zero_noise_profile(dim, mi):
    return NoiseProfile.zeros(dim, mi)
