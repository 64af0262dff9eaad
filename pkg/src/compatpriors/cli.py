"""Command-line entry point: ``compatpriors <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import compat, selection
from .compat import Procedure
from .core_model import Dataset, ModelId
from .errors import DataError, DomainError, ImproperPriorError, NumericalError
from .experiments import (
    SimulationSpec,
    RunConfig,
    illustration_csv,
    load_dataset,
    load_prediction,
    parse_mean_choice,
    resolve_g,
    run_analysis,
    run_illustration,
    run_simulation,
)
from .priors import NigPrior, PriorMeanChoice, resolve_prior_mean

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _pair(text: str) -> tuple:
    try:
        d, a = text.split(":")
        return float(d), float(a)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected d:a, got {text!r}") from None


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        return np.linspace(float(lo), float(hi), int(steps))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps, got {text!r}") from None


def _model(text: str) -> ModelId:
    """'1,3' or '{1,3}' or '' -> intercept plus those predictors."""
    body = text.strip().strip("{}")
    cols = [int(c) for c in body.split(",") if c.strip()]
    return ModelId((0, *cols))


def _write(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compatpriors", description="Compatible g-priors for linear-model selection.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    an = sub.add_parser("analyze", help="posterior model probabilities for a CSV data set")
    an.add_argument("--data", required=True, help="CSV (response first) or 'hald'")
    an.add_argument("--procedure", action="append", default=None,
                    help="S, I, UC, JC, KLcond or KL (repeatable; default S)")
    an.add_argument("--mean", action="append", default=None, help="b0|bbar|bhat (repeatable; default bbar)")
    an.add_argument("--prediction", help="one-column CSV of predicted responses ('hald' for the bundled one)")
    an.add_argument("--g", default="n", help="number, 'n' or 'max(n,p^2)'")
    an.add_argument("--d", type=float, default=1.0)
    an.add_argument("--a", type=float, default=1.0)
    an.add_argument("--gg-c", type=float, default=1.0)
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--format", choices=("csv", "json"), default="csv")
    an.add_argument("--out")
    an.add_argument("--uc-rate", choices=("exact", "printed"), default="exact",
                    help="UC/JC rate update: exact conditional (default) or without the 1/g factor")
    an.add_argument("--summary", action="store_true", help="print top-4 models per prior to stderr")

    si = sub.add_parser("simulate", help="frequency of correct model identification")
    si.add_argument("--truth", choices=("M1", "M2", "M3"), default="M1")
    si.add_argument("--replicates", type=int, default=50)
    si.add_argument("--n", type=int, default=30)
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--C", type=float, default=0.0)
    si.add_argument("--noise-sd", type=float, default=2.5)
    si.add_argument("--hyper", type=_pair, action="append", help="d:a (repeatable; default the standard grid)")
    si.add_argument("--uc-rate", choices=("exact", "printed"), default="exact")
    si.add_argument("--out")

    il = sub.add_parser("illustrate", help="Pr(mean model | y) curves against zero-mean model")
    il.add_argument("--n", type=int, default=25)
    il.add_argument("--g", type=float, default=25.0)
    il.add_argument("--hyper", type=_pair, action="append", help="d:a (repeatable; default 5:1)")
    il.add_argument("--mu-grid", type=_grid, default=_grid("-3:3:61"))
    il.add_argument("--seed", type=int, default=0)
    il.add_argument("--out")

    dp = sub.add_parser("derive-prior", help="hyperparameters of one derived submodel prior")
    dp.add_argument("--data", required=True)
    dp.add_argument("--model", required=True, type=_model, help="predictor indices, e.g. 1,2")
    dp.add_argument("--procedure", default="KL")
    dp.add_argument("--mean", default="bbar")
    dp.add_argument("--prediction")
    dp.add_argument("--g", default="n")
    dp.add_argument("--d", type=float, default=1.0)
    dp.add_argument("--a", type=float, default=1.0)

    ck = sub.add_parser("check", help="coherence and information-paradox self-checks")
    ck.add_argument("--seed", type=int, default=0)
    return p


def _procedures(values):
    return [Procedure.parse(v) for v in (values or ["S"])]


def cmd_analyze(args) -> int:
    cfg = RunConfig(
        dataset_path=args.data,
        procedures=_procedures(args.procedure),
        mean_choices=[parse_mean_choice(m) for m in (args.mean or ["bbar"])],
        g=args.g, d=args.d, a=args.a, seed=args.seed, output_format=args.format,
        gg_c=args.gg_c, prediction_path=args.prediction, uc_rate=args.uc_rate,
    )
    report = run_analysis(cfg)
    _write(report.emit(cfg.output_format), args.out)
    if args.summary:
        print(report.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    kw = {"hyper_grid": tuple(args.hyper)} if args.hyper else {}
    spec = SimulationSpec(n=args.n, replicates=args.replicates, true_model=args.truth, C=args.C,
                          noise_sd=args.noise_sd, seed=args.seed, uc_rate=args.uc_rate, **kw)
    _write(run_simulation(spec).to_csv(), args.out)
    return EXIT_OK


def cmd_illustrate(args) -> int:
    rows = run_illustration(args.n, args.g, tuple(args.hyper or [(5.0, 1.0)]), args.mu_grid, args.seed)
    _write(illustration_csv(rows), args.out)
    return EXIT_OK


def cmd_derive_prior(args) -> int:
    data = load_dataset(args.data)
    mean = load_prediction(args.prediction, data) if args.prediction else parse_mean_choice(args.mean)
    b = resolve_prior_mean(mean, data)
    g = resolve_g(args.g, data.n, data.p)
    if args.model.included[-1] >= data.p:
        raise UsageError(f"model {args.model} refers to a predictor beyond p-1={data.p - 1}")
    dp = compat.derive(args.procedure, NigPrior(b, g, args.d, args.a), args.model, data.design)
    out = {
        "model": args.model.label(), "procedure": dp.procedure.value,
        "b": [float(f"{v:.12g}") for v in dp.prior.b],
        "g": dp.prior.g, "d": dp.prior.d, "a": dp.prior.a, "diagnostics": dp.diagnostics,
    }
    print(json.dumps(out, indent=1, default=float))
    return EXIT_OK


def run_checks(seed: int = 0) -> list:
    """(name, passed) for the built-in property checks."""
    from .rng import stream

    rng = stream(seed, 0, "check")
    n = 14
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 3))])
    X[:, 3] += 0.7 * X[:, 1]
    y = X @ np.array([1.0, 1.5, 0.0, -0.8]) + rng.standard_normal(n)
    data = Dataset(y, X)
    prior = NigPrior(np.array([0.5, 1.0, -0.4, 0.6]), 3.0, 6.0, 4.0)
    mid, small, k = ModelId.of(0, 1, 3), ModelId.of(0, 1), ModelId.of(0, 1)
    res = []
    for proc in (Procedure.UC, Procedure.JC):
        rep = compat.check_nested_coherence(prior, mid, small, X, proc)
        res.append((f"nested coherence {proc.value}", rep.max_discrepancy < 1e-12))
    res.append(("nuisance coherence UC", compat.check_nuisance_coherence(prior, k, data, "UC").gap < 1e-8))
    # one-dimensional integrals keep the gap checks fast
    for proc in ("S", "KL"):
        gap = compat.check_nuisance_coherence(prior, ModelId.of(0), data, proc).gap
        res.append((f"nuisance gap {proc} nonzero", gap > 1e-4))
    bf = selection.bayes_factor(compat.derive_uc(prior, k, X).prior, prior, k, ModelId.full(4), data)
    sv = selection.savage_ratio(prior, k, data)
    res.append(("Savage ratio = UC Bayes factor", abs(bf - sv) < 1e-8 * (1 + abs(bf))))
    expect = [("S", "zero", "bounded"), ("UC", "zero", "diverging"), ("KL", "zero", "bounded"),
              ("KL", "ols", "diverging"), ("UC", "ols", "diverging")]
    for proc, mean, want in expect:
        t = selection.info_paradox_probe(proc, PriorMeanChoice(mean), data, mid)
        res.append((f"paradox {proc}/{mean} {want}", t.classification == want))
    return res


def cmd_check(args) -> int:
    results = run_checks(args.seed)
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if all(ok for _, ok in results) else EXIT_NUMERIC


COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "illustrate": cmd_illustrate,
    "derive-prior": cmd_derive_prior,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ImproperPriorError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
