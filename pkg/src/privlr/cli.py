"""Command-line interface.

Exit codes: 0 success, 1 usage error (bad flags, bad values, missing files),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import ExperimentSpec, SpecError, run_experiment, write_results
from .dataio import DataError, load_dataset, load_manifest, prepare_split
from .dp_engine import DpParams, config_for_budget, config_from_dict, dpsgd_train
from .pac_engine import (
    DEFAULT_DELTA,
    DomainError,
    NoiseProfile,
    PacEstimationConfig,
    PrivacyLevel,
    add_noise,
    estimate_noise,
)
from .regression import FitSpec, predict, r_squared, rmse

DEFAULT_SEED = 0
DEFAULT_SPLIT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_data_args(p):
    p.add_argument("--dataset", required=True,
                   help="dataset manifest JSON, or a bundled name (lenses, concrete, automobiles)")
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out fraction (default 0.2)")
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED, help="split seed (default 42)")
    p.add_argument("--no-normalize", action="store_true", help="skip feature standardization")


def _add_fit_args(p):
    p.add_argument("--kind", choices=["ols", "ridge", "lasso"], default="ols", help="regression solver")
    p.add_argument("--lam", type=float, default=0.0, help="ridge/lasso penalty strength (default 0)")


def _add_output_arg(p, what):
    p.add_argument("--output", "-o", type=Path, help=f"write the {what} JSON here")


def _add_pac_args(p):
    level = p.add_mutually_exclusive_group()
    level.add_argument("--psr", type=float, help="target posterior success rate in (0.5, 1) (default 0.75)")
    level.add_argument("--mi", type=float, help="mutual-information budget instead of --psr")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="delta for the epsilon equivalent")
    p.add_argument("--projection", choices=["svd", "identity"], default="svd", help="noise basis")
    p.add_argument("--mode", choices=["covariance_correct", "paper_literal"], default="covariance_correct",
                   help="how projected variances map back to weight coordinates")
    p.add_argument("--pair", choices=["subsample", "full"], default="subsample",
                   help="compare A with A+{x} (subsample) or with the full data (full)")
    p.add_argument("--threshold", type=float, default=1e-4, help="convergence threshold on running means")
    p.add_argument("--min-rounds", type=int, default=30, help="minimum rounds per left-out record")
    p.add_argument("--max-rounds", type=int, default=1000, help="maximum rounds per left-out record")
    p.add_argument("--max-instances", type=int, help="cap on left-out records (default: all up to 250)")
    p.add_argument("--n-jobs", type=int, default=1, help="parallel workers for the estimation loop")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default 0)")


def build_parser():
    parser = _Parser(prog="privlr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}",
                        help="show the version and exit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="convert between posterior success rate, epsilon and MI")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--psr", type=float, help="posterior success rate in (0.5, 1)")
    g.add_argument("--epsilon", type=float, help="DP privacy budget epsilon")
    g.add_argument("--mi", type=float, help="mutual information bound in (0, ln 2)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="DP delta (default 1e-5)")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")

    p = sub.add_parser("fit", help="non-private fit; prints test RMSE and R^2")
    _add_data_args(p)
    _add_fit_args(p)
    _add_output_arg(p, "model")

    p = sub.add_parser("dp-train", help="DP-SGD training at a target (epsilon, delta)")
    _add_data_args(p)
    p.add_argument("--config", type=Path, help="training config JSON (flags below override it)")
    p.add_argument("--epsilon", type=float, help="privacy budget epsilon (default 1.098598)")
    p.add_argument("--delta", type=float, help="privacy delta (default 1e-5)")
    p.add_argument("--learning-rate", type=float, help="step size (default 0.01)")
    p.add_argument("--batch-size", type=int, help="expected batch size (default 16)")
    p.add_argument("--epochs", type=int, help="passes over the data (default 10)")
    p.add_argument("--clip-norm", type=float, help="per-example gradient clip (default 1)")
    p.add_argument("--sampling", choices=["poisson", "fixed"], help="batch sampling (default poisson)")
    p.add_argument("--init", choices=["zeros", "random"], help="parameter initialization (default zeros)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    _add_output_arg(p, "model")

    p = sub.add_parser("pac-estimate", help="estimate a PAC noise profile only")
    _add_data_args(p)
    _add_fit_args(p)
    _add_pac_args(p)
    _add_output_arg(p, "noise profile")

    p = sub.add_parser("pac-train", help="PAC-private fit: estimate noise, fit, perturb")
    _add_data_args(p)
    _add_fit_args(p)
    _add_pac_args(p)
    p.add_argument("--profile", type=Path, help="reuse a noise profile JSON instead of estimating")
    _add_output_arg(p, "model")

    p = sub.add_parser("benchmark", help="run the benchmark described by a spec JSON")
    p.add_argument("spec", type=Path, help="experiment spec JSON")
    p.add_argument("--results-dir", type=Path, help="override the spec's results directory")
    p.add_argument("--trials", type=int, help="override the number of trials")
    p.add_argument("--quiet", action="store_true", help="suppress per-cell progress lines")
    return parser


def _load_split(args):
    try:
        manifest = load_manifest(args.dataset)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    if not manifest.path.exists():
        raise UsageError(f"data file not found: {manifest.path}")
    data = load_dataset(manifest)
    train, test, _ = prepare_split(data, args.test_fraction, args.split_seed, not args.no_normalize)
    return train, test


def _report(model, test, output):
    y_hat = predict(model, test.features)
    print(f"test RMSE {rmse(test.labels, y_hat):.6f}")
    print(f"test R2   {r_squared(test.labels, y_hat):.6f}")
    if output:
        output.write_text(json.dumps(model.to_dict(), indent=2))
        print(f"wrote {output}")


def cmd_convert(args):
    try:
        if args.psr is not None:
            level = PrivacyLevel.from_psr(args.psr, args.delta)
        elif args.epsilon is not None:
            level = PrivacyLevel.from_epsilon(args.epsilon, args.delta)
        else:
            level = PrivacyLevel.from_mi(args.mi, args.delta)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    if args.json:
        print(json.dumps(level.to_dict()))
    else:
        print(f"psr={level.psr:.6f} epsilon={level.epsilon_equiv:.6f} mi={level.mi:.6f} delta={level.delta_equiv:g}")


def _fit_spec(args):
    try:
        return FitSpec(args.kind, args.lam)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_fit(args):
    spec = _fit_spec(args)
    train, test = _load_split(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = spec(train)
    _report(model, test, args.output)


def cmd_dp_train(args):
    train, test = _load_split(args)
    obj = {}
    if args.config:
        if not args.config.exists():
            raise UsageError(f"config not found: {args.config}")
        obj = json.loads(args.config.read_text())
    flags = {
        "epsilon": args.epsilon, "delta": args.delta, "learning_rate": args.learning_rate,
        "batch_size": args.batch_size, "epochs": args.epochs, "clip_norm": args.clip_norm,
        "sampling": args.sampling, "init": args.init, "seed": args.seed,
    }
    obj.update({k: v for k, v in flags.items() if v is not None})
    obj.setdefault("epsilon", PrivacyLevel.from_psr(0.75).epsilon_equiv)
    obj.setdefault("delta", DEFAULT_DELTA)
    obj.setdefault("seed", DEFAULT_SEED)
    try:
        config = config_from_dict(obj, train.n)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc
    print(f"noise multiplier {config.noise_multiplier:.6f} for epsilon={obj['epsilon']} delta={obj['delta']}")
    _report(dpsgd_train(train, config), test, args.output)


def _pac_setup(args):
    spec = _fit_spec(args)
    try:
        if args.mi is not None:
            level = PrivacyLevel.from_mi(args.mi, args.delta)
        else:
            level = PrivacyLevel.from_psr(0.75 if args.psr is None else args.psr, args.delta)
        config = PacEstimationConfig(
            mi_budget=level.mi, convergence_threshold=args.threshold, min_rounds=args.min_rounds,
            max_rounds=args.max_rounds, projection=args.projection, mode=args.mode, pair=args.pair,
            max_instances=args.max_instances, n_jobs=args.n_jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return spec, level, config


def cmd_pac_estimate(args):
    spec, level, config = _pac_setup(args)
    train, _ = _load_split(args)
    profile = estimate_noise(train, spec, config, seed=args.seed)
    print(f"psr={level.psr:.6f} mi={level.mi:.6f} converged={profile.converged}")
    print("variances " + " ".join(f"{v:.6g}" for v in profile.variances))
    if args.output:
        args.output.write_text(json.dumps(profile.to_dict(), indent=2))
        print(f"wrote {args.output}")


def cmd_pac_train(args):
    spec, level, config = _pac_setup(args)
    train, test = _load_split(args)
    if args.profile:
        if not args.profile.exists():
            raise UsageError(f"profile not found: {args.profile}")
        profile = NoiseProfile.from_dict(json.loads(args.profile.read_text()))
    else:
        profile = estimate_noise(train, spec, config, seed=args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = add_noise(spec(train), profile, seed=[args.seed, 2])
    print(f"psr={level.psr:.6f} mi={profile.mi_budget:.6f} total noise variance {profile.variances.sum():.6g}")
    _report(model, test, args.output)


def cmd_benchmark(args):
    if not args.spec.exists():
        raise UsageError(f"spec not found: {args.spec}")
    try:
        obj = json.loads(args.spec.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.spec}: invalid JSON: {exc}") from exc
    if isinstance(obj.get("dataset"), str) and not Path(obj["dataset"]).is_absolute():
        candidate = args.spec.parent / obj["dataset"]
        if candidate.exists():
            obj["dataset"] = str(candidate)
    if args.trials is not None:
        obj["trials"] = args.trials
    try:
        spec = ExperimentSpec.from_dict(obj)
    except SpecError as exc:
        raise UsageError("invalid spec:\n  " + "\n  ".join(exc.problems)) from exc
    if args.results_dir is not None:
        spec = replace(spec, results_dir=str(args.results_dir))

    def progress(method, psr, best):
        if not args.quiet:
            print(f"  {method:<12} psr={psr:<5} rmse={best.rmse_mean:.4f}±{best.rmse_std:.4f}", flush=True)

    report = run_experiment(spec, progress=progress)
    paths = write_results(report, spec.results_dir)
    print(f"\n{report.dataset}: {report.metadata['n_train']} train / {report.metadata['n_test']} test")
    print(f"{'method':<12} {'psr':>5} {'epsilon':>9} {'rmse':>18} {'r2':>18}")
    for e in report.entries:
        print(f"{e.method:<12} {e.psr:>5} {e.epsilon:>9.4f} "
              f"{e.rmse_mean:>9.4f} ± {e.rmse_std:<6.4f} {e.r2_mean:>9.4f} ± {e.r2_std:<6.4f}")
    for path in paths:
        print(f"wrote {path}")


COMMANDS = {
    "convert": cmd_convert,
    "fit": cmd_fit,
    "dp-train": cmd_dp_train,
    "pac-estimate": cmd_pac_estimate,
    "pac-train": cmd_pac_train,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"privlr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError) as exc:
        print(f"privlr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # reported, not re-raised: exit code 2 is the contract
        print(f"privlr {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
