"""Command-line entry point: ``socbayes {consultas,sparrows,saber11,synth,audit}``.

Exit codes: 0 success, 2 usage error, 3 invalid input data, 4 numerical
failure, 5 file-system error, 1 audit mismatch.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import SocBayesError
from .pipelines import DEFAULT_SCHEDULES, RunConfig, audit_bundle, generate_synthetic, run
from .samplers import CANONICAL, HALF_KICK

EXIT_IO = 5

INTEGRATORS = {"canonical": CANONICAL, "half-kick": HALF_KICK}


def _common(p: argparse.ArgumentParser, name: str) -> None:
    iters, burn = DEFAULT_SCHEDULES[name]
    p.add_argument("--input", help="input CSV" + (" (default: bundled poll counts)" if name == "consultas" else ""))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=2022)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=iters, help=f"iterations per chain incl. burn-in (default {iters})")
    p.add_argument("--burnin", type=int, default=burn)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="chains run concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socbayes", description="Bayesian case studies from the command line.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("consultas", help="Dirichlet-Multinomial shares of each consultation")
    _common(p, "consultas")

    p = sub.add_parser("sparrows", help="quadratic-age Poisson regression by Metropolis and HMC")
    _common(p, "sparrows")
    p.add_argument("--sampler", choices=["metropolis", "hmc", "both"], default="both")
    p.add_argument("--c", type=float, default=0.7, help="Metropolis proposal scale")
    p.add_argument("--L", type=int, default=100, dest="leapfrog_steps", help="leapfrog steps")
    p.add_argument("--eps", type=float, default=0.01, dest="step_size", help="leapfrog step size")
    p.add_argument("--integrator", choices=sorted(INTEGRATORS), default="half-kick")
    p.add_argument("--prior-variance", type=float, default=10.0)

    p = sub.add_parser("saber11", help="three hierarchical regression models by Gibbs sampling")
    _common(p, "saber11")
    p.add_argument("--model", choices=["1", "2", "3", "all"], default="all")
    p.add_argument("--nu-max", type=int, default=100, help="upper end of the 1..nu_max grid")
    p.add_argument("--focus", choices=["conditional", "marginal"], default="conditional",
                   help="DIC/WAIC likelihood: given group effects, or with them integrated out")
    p.add_argument("--sigma2-rate", type=float, help="model 3 Gamma rate of the pooled variance (default: OLS variance)")

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("kind", choices=["sparrows", "saber11"])
    p.add_argument("--out", required=True, help="output CSV file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="number of rows")
    p.add_argument("--groups", type=int, help="number of departments (saber11)")
    p.add_argument("--tau2", type=float, help="random-intercept variance (saber11)")
    p.add_argument("--dispersion", type=float, help="variance/mean ratio of counts (sparrows)")

    p = sub.add_parser("audit", help="recompute a report bundle's summary from its chains tables")
    p.add_argument("out", help="report directory")
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def _config(args) -> RunConfig:
    kw = dict(
        subcommand=args.command,
        input=args.input,
        out=args.out,
        seed=args.seed,
        chains=args.chains,
        iterations=args.iters,
        burn_in=args.burnin,
        thin=args.thin,
        jobs=args.jobs,
    )
    if args.command == "sparrows":
        kw.update(
            sampler=args.sampler,
            c=args.c,
            leapfrog_steps=args.leapfrog_steps,
            step_size=args.step_size,
            integrator=INTEGRATORS[args.integrator],
            prior_variance=args.prior_variance,
        )
    if args.command == "saber11":
        kw.update(model=args.model, nu_max=args.nu_max, sigma2_rate=args.sigma2_rate, focus=args.focus)
    return RunConfig(**kw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            params = {k: v for k in ("n", "groups", "tau2", "dispersion") if (v := getattr(args, k)) is not None}
            if args.kind == "sparrows" and ({"groups", "tau2"} & params.keys()):
                parser.error("--groups/--tau2 apply to saber11 only")
            if args.kind == "saber11" and "dispersion" in params:
                parser.error("--dispersion applies to sparrows only")
            print(generate_synthetic(args.kind, args.out, args.seed, **params))
            return 0
        if args.command == "audit":
            problems = audit_bundle(args.out, args.tol)
            for line in problems:
                print(line)
            print("audit ok" if not problems else f"audit failed: {len(problems)} mismatch(es)")
            return 0 if not problems else 1
        try:
            cfg = _config(args)
        except SocBayesError as exc:
            parser.error(str(exc))
        for path in run(cfg).write(cfg.out):
            print(path)
        return 0
    except SocBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
