"""Command-line front end.

Subcommands map one-to-one onto the library layers: closed-form RLCT
lookups, exact finite-sample computations on a dataset file, Monte Carlo
free-energy estimates, the sublevel-volume estimator, the algebra self-check
suite, and the experiment harness. Machine-readable output goes to stdout
(JSON or CSV per subcommand); zeta-volume additionally prints a JSON fit
summary to stderr so the CSV stream stays clean.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import kforms
from .domain import Dataset, SimplexVector
from .estimators import (
    BoxDomain,
    GibbsConfig,
    VolumeScalingConfig,
    mixture_kl_volume_problem,
    normal_form_volume_problem,
    temperature_ladder,
    thermo_integration,
    volume_scaling_lambda,
    wbic_estimate,
)
from .exact_bayes import (
    ConjugatePrior,
    gen_error_exact,
    log_marginal_enumeration,
    log_marginal_quadrature,
)
from .harness import ExperimentConfig, run as run_harness
from .rlct import BinomialMixtureSpec, PriorSpec, rlct_binomial_bound, rlct_two_component


def _parse_alpha(text: str):
    """Hyperparameters given as fractions stay exact (e.g. '3/2')."""
    if "/" in text:
        return Fraction(text)
    value = float(text)
    return int(value) if value.is_integer() else value


def _cmd_rlct(args) -> int:
    if args.prior == "bounded":
        spec = PriorSpec.bounded()
    else:
        if args.alpha is None:
            print("--alpha is required for the dirichlet prior", file=sys.stderr)
            return 2
        spec = PriorSpec.dirichlet(_parse_alpha(args.alpha))
    report = rlct_two_component(args.L, spec)
    json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_rlct_binomial(args) -> int:
    spec = BinomialMixtureSpec(
        trials=args.M,
        model_components=args.H,
        true_components=args.H0,
        probabilistic_components=args.H1,
        deterministic_components=args.H2,
        alpha=_parse_alpha(args.alpha),
        beta=_parse_alpha(args.beta),
    )
    report = rlct_binomial_bound(spec)
    json.dump(report.to_dict(), sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _load_dataset(path: str) -> Dataset:
    return Dataset.from_json(Path(path).read_text())


def _cmd_exact(args) -> int:
    data = _load_dataset(args.dataset)
    prior = ConjugatePrior.symmetric(
        args.H, data.categories, mixing=args.alpha, emission=args.beta
    )
    if args.method == "enum":
        fe = log_marginal_enumeration(
            data, args.H, prior, cap=args.cap, block_count=args.block_count
        )
    else:
        fe = log_marginal_quadrature(data, args.H, prior, args.grid)
    payload = {"F_n": fe.value, "n": data.n, "method": fe.method}
    if args.gn:
        if data.truth is None:
            print("--gn needs a dataset file with a truth record", file=sys.stderr)
            return 2
        if args.method != "enum":
            print("--gn requires --method enum", file=sys.stderr)
            return 2
        payload["G_n"] = gen_error_exact(
            data, data.truth, args.H, prior, cap=args.cap,
            block_count=args.block_count,
        )
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_estimate(args) -> int:
    data = _load_dataset(args.dataset)
    prior = ConjugatePrior.symmetric(
        args.H, data.categories, mixing=args.alpha, emission=args.beta
    )
    burn_in = args.burn_in if args.burn_in is not None else args.sweeps // 5
    cfg = GibbsConfig(sweeps=args.sweeps, burn_in=burn_in, seed=args.seed)
    if args.method == "wbic":
        fe = wbic_estimate(data, args.H, prior, cfg)
    else:
        fe = thermo_integration(
            data, args.H, prior, temperature_ladder(args.rungs), cfg
        )
    writer = csv.writer(sys.stdout)
    writer.writerow(["n", "seed", "F_hat", "SE", "method"])
    writer.writerow(
        [data.n, args.seed, "%.17g" % fe.value, "%.17g" % fe.stderr, fe.method]
    )
    if fe.warning:
        print("warning: %s" % fe.warning, file=sys.stderr)
    return 0


def _cmd_zeta_volume(args) -> int:
    if args.loss == "square":
        domain = BoxDomain([0.0], [1.0])
        loss = lambda pts: pts[:, 0] ** 2  # noqa: E731
    elif args.loss == "normal-form":
        domain, loss = normal_form_volume_problem(args.L)
    else:
        truth = SimplexVector(tuple(float(v) for v in args.truth.split(",")))
        domain, loss = mixture_kl_volume_problem(truth, args.M)
    cfg = VolumeScalingConfig.geometric(
        args.samples_per_level,
        args.seed,
        start=args.start,
        levels=args.levels,
        ratio=args.ratio,
        mh_steps=args.mh_steps,
    )
    result = volume_scaling_lambda(loss, domain, cfg)
    writer = csv.writer(sys.stdout)
    writer.writerow(["t", "V_hat", "level_acceptance"])
    for t, logv, acc in zip(
        result.thresholds, result.log_volumes, result.acceptance_rates
    ):
        writer.writerow(["%.17g" % t, "%.17g" % np.exp(logv), "%.6f" % acc])
    json.dump(
        {
            "lambda_hat": result.lambda_hat,
            "m_hat": result.m_hat,
            "stderr": result.stderr,
            "intercept": result.intercept,
        },
        sys.stderr,
        sort_keys=True,
    )
    print(file=sys.stderr)
    return 0


def _cmd_kforms_check(args) -> int:
    report = kforms.self_check(points=args.points, seed=args.seed)
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0 if report["passed"] else 1


def _cmd_harness_run(args) -> int:
    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    return run_harness(cfg, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixrlct",
        description="learning coefficients and exact Bayes for multinomial mixtures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rlct", help="closed-form (lambda, m) for the two-component model")
    p.add_argument("--L", type=int, required=True, help="number of categories")
    p.add_argument("--prior", choices=["bounded", "dirichlet"], default="bounded")
    p.add_argument("--alpha", help="mixing Dirichlet exponent (dirichlet prior only)")
    p.set_defaults(func=_cmd_rlct)

    p = sub.add_parser("rlct-binomial", help="upper bound for binomial-mixture RLCT")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--H0", type=int, required=True)
    p.add_argument("--H1", type=int, required=True)
    p.add_argument("--H2", type=int, required=True)
    p.add_argument("--alpha", required=True)
    p.add_argument("--beta", required=True)
    p.set_defaults(func=_cmd_rlct_binomial)

    p = sub.add_parser("exact", help="exact free energy of a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="mixing prior exponent")
    p.add_argument("--beta", type=float, default=1.0, help="emission prior exponent")
    p.add_argument("--method", choices=["enum", "quad"], default="enum")
    p.add_argument("--grid", type=int, default=200, help="quadrature points per dim")
    p.add_argument("--cap", type=int, default=22)
    p.add_argument("--block-count", type=int, default=1)
    p.add_argument("--gn", action="store_true", help="also emit the exact generalization error")
    p.set_defaults(func=_cmd_exact)

    p = sub.add_parser("estimate", help="Monte Carlo free energy (WBIC or thermo)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--H", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--method", choices=["wbic", "thermo"], default="wbic")
    p.add_argument("--sweeps", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=None,
                   help="sweeps discarded before averaging (default: sweeps / 5)")
    p.add_argument("--rungs", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("zeta-volume", help="sublevel-volume (lambda, m) estimate")
    p.add_argument("--loss", choices=["square", "normal-form", "mixture-kl"],
                   default="normal-form")
    p.add_argument("--L", type=int, default=3)
    p.add_argument("--M", type=int, default=2)
    p.add_argument("--truth", default="0.5,0.3,0.2",
                   help="comma-separated truth cells (mixture-kl loss)")
    p.add_argument("--samples-per-level", type=int, default=100000)
    p.add_argument("--levels", type=int, default=12)
    p.add_argument("--start", type=float, default=0.1)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--mh-steps", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_zeta_volume)

    p = sub.add_parser("kforms-check", help="identity and round-trip self checks")
    p.add_argument("--points", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_kforms_check)

    p = sub.add_parser("harness", help="experiment harness")
    hsub = p.add_subparsers(dest="harness_command", required=True)
    pr = hsub.add_parser("run", help="run the experiment described by a config file")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=_cmd_harness_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
