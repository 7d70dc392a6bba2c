"""Case-study pipelines: run samplers, summarize, evaluate and write report bundles."""

from __future__ import annotations

import json
import logging
import re
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, io, synthetic
from .diagnostics import summarize
from .errors import DataError, DomainError
from .evaluation import evaluate, posterior_predictive_p
from .models import (
    DirichletMultinomialModel,
    HlmData,
    HlmLayout,
    PoissonGlmTarget,
    build_quadratic_design,
    dirichlet_posterior_update,
    hlm_loglik,
    hlm_marginal_group_loglik,
    hlm_pointwise_loglik,
    unit_information_config,
)
from .rand import RandomStream
from .samplers import (
    CANONICAL,
    HALF_KICK,
    HmcConfig,
    MetropolisConfig,
    Schedule,
    run_gibbs,
    run_hmc,
    run_iid_dirichlet,
    run_metropolis,
)

log = logging.getLogger(__name__)

PPP_STREAM = 1000
SPARROW_AGES = np.arange(1, 7)
# reference values for the per-group interval flags: intercept, then slopes
SABER_REFERENCE = (50.0, 0.0, 0.0)
FOCUS = ("conditional", "marginal")

DEFAULT_SCHEDULES = {
    "consultas": (50000, 0),
    "sparrows": (11000, 1000),
    "saber11": (55000, 5000),
}


@dataclass
class RunConfig:
    subcommand: str
    input: str | None = None
    out: str = "out"
    seed: int = 2022
    chains: int = 4
    iterations: int | None = None
    burn_in: int | None = None
    thin: int = 1
    model: str = "all"
    sampler: str = "both"
    c: float = 0.7
    leapfrog_steps: int = 100
    step_size: float = 0.01
    integrator: str = HALF_KICK
    nu_max: int = 100
    sigma2_rate: float | None = None
    focus: str = "conditional"
    prior_variance: float = 10.0
    jobs: int = 1

    def __post_init__(self):
        if self.subcommand not in DEFAULT_SCHEDULES:
            raise DomainError(f"unknown subcommand {self.subcommand!r}")
        iters, burn = DEFAULT_SCHEDULES[self.subcommand]
        if self.iterations is None:
            self.iterations = iters
        if self.burn_in is None:
            self.burn_in = burn
        if self.chains < 1:
            raise DomainError("chains must be >= 1")
        if self.jobs < 1:
            raise DomainError("jobs must be >= 1")
        if self.nu_max < 1:
            raise DomainError("nu_max must be >= 1")
        if self.sigma2_rate is not None and not self.sigma2_rate > 0:
            raise DomainError("sigma2_rate must be positive")
        if self.model not in ("1", "2", "3", "all"):
            raise DomainError("model must be 1, 2, 3 or all")
        if self.focus not in FOCUS:
            raise DomainError(f"focus must be one of {FOCUS}")
        if self.sampler not in ("metropolis", "hmc", "both"):
            raise DomainError("sampler must be metropolis, hmc or both")
        self.schedule  # validates iterations/burn-in/thin

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.iterations, self.burn_in, self.thin, self.seed)

    def echo(self) -> dict:
        return asdict(self)


@dataclass
class ReportBundle:
    """Everything a subcommand writes: chains per model, summary, extra tables and metadata."""

    chains: dict = field(default_factory=dict)
    summary: dict = field(default_factory=lambda: {"models": {}, "ppp": {}})
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def write(self, out) -> list:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, chains in self.chains.items():
            path = out / f"chains_{name}.csv"
            io.write_chains(path, chains)
            written.append(path)
        for fname, (header, rows) in self.tables.items():
            io.write_table(out / fname, header, rows)
            written.append(out / fname)
        io.write_json(out / "summary.json", self.summary)
        io.write_json(out / "meta.json", self.meta)
        return written + [out / "summary.json", out / "meta.json"]


def slug(text: str) -> str:
    """ASCII file-name fragment: ``'Pacto Histórico' -> 'pacto_historico'``."""
    plain = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode()
    return re.sub(r"[^a-z0-9]+", "_", plain.lower()).strip("_") or "group"


def _run_chains(run_one, cfg: RunConfig, slot: int):
    """``run_one(stream_id)`` for every chain; stream ids ``100*slot + c`` keep models independent."""
    ids = [100 * slot + c for c in range(cfg.chains)]
    if cfg.jobs > 1 and cfg.chains > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.jobs, cfg.chains)) as pool:
            return list(pool.map(run_one, ids))
    return [run_one(i) for i in ids]


def _model_entry(chains, fit=None, probs=(0.025, 0.5, 0.975)) -> dict:
    report = summarize(list(chains), probs=probs)
    entry = {
        "parameters": report.to_dict(),
        "acceptance_rate": report.acceptance_rate,
        "chains": len(chains),
        "draws_per_chain": len(chains[0]),
    }
    if fit is not None:
        entry["fit"] = fit.to_dict()
    return entry


def _pooled(chains) -> np.ndarray:
    return np.vstack([c.draws for c in chains])


def _meta(cfg: RunConfig, started: float, **extra) -> dict:
    return {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "version": __version__,
        "wall_seconds": time.perf_counter() - started,
        **extra,
    }


# ---------------------------------------------------------------------------
# consultas
# ---------------------------------------------------------------------------


def run_consultas(cfg: RunConfig) -> ReportBundle:
    """Jeffreys-prior Dirichlet posteriors of candidate shares in each consultation."""
    started = time.perf_counter()
    path = cfg.input or io.bundled_consultas()
    groups = io.read_consultas(path)
    bundle = ReportBundle()
    shares = []
    for slot, (group, (names, counts)) in enumerate(groups.items()):
        alpha_post = dirichlet_posterior_update(DirichletMultinomialModel.jeffreys(counts))
        chains = _run_chains(
            lambda sid: run_iid_dirichlet(alpha_post, cfg.schedule, sid, names=list(names)), cfg, slot
        )
        key = slug(group)
        bundle.chains[key] = chains
        entry = _model_entry(chains)
        entry["group"] = group
        entry["posterior_alpha"] = alpha_post.tolist()
        bundle.summary["models"][key] = entry
        for name, count in zip(names, counts):
            s = entry["parameters"][name]
            shares.append(
                [group, name, int(count)] + [f"{100 * s[k]:.2f}" for k in ("mean", "q025", "q975")]
            )
    bundle.tables["shares.csv"] = (
        ["group", "candidate", "count", "mean_pct", "lower95_pct", "upper95_pct"],
        shares,
    )
    bundle.meta = _meta(cfg, started, input=str(path))
    return bundle


# ---------------------------------------------------------------------------
# sparrows
# ---------------------------------------------------------------------------


def sparrow_target(y, age, prior_variance: float = 10.0) -> PoissonGlmTarget:
    return PoissonGlmTarget.iid_prior(build_quadratic_design(age), y, prior_variance)


def poisson_fit(target: PoissonGlmTarget, draws):
    return evaluate(
        lambda b: float(target.pointwise_loglik(b).sum()), target.pointwise_loglik, draws
    )


def poisson_ppp(target: PoissonGlmTarget, draws, seed: int, slot: int) -> dict:
    """Posterior predictive p-values of the sample mean and variance, with the replicated values."""
    out = {}
    for k, (stat, fn) in enumerate([("mean", np.mean), ("variance", lambda v: np.var(v, ddof=1))]):
        rng = RandomStream(seed, PPP_STREAM + 10 * slot + k)
        design = target.design
        out[stat] = posterior_predictive_p(
            draws,
            lambda b, r: r.poisson(np.exp(design @ b)),
            fn,
            target.y,
            rng,
            name=stat,
        )
    return out


def fitted_rates(draws, ages=SPARROW_AGES) -> np.ndarray:
    """Draws ``B x len(ages)`` of ``exp(b1 + b2 a + b3 a^2)``."""
    return np.exp(np.atleast_2d(draws) @ build_quadratic_design(ages).T)


def _sparrow_samplers(cfg: RunConfig):
    return ["metropolis", "hmc"] if cfg.sampler == "both" else [cfg.sampler]


def run_sparrows(cfg: RunConfig) -> ReportBundle:
    """Metropolis and/or HMC for the quadratic-age Poisson regression, with ppp checks."""
    started = time.perf_counter()
    if cfg.input is None:
        raise DataError("sparrows needs --input (generate one with `synth sparrows`)")
    y, age = io.read_sparrows(cfg.input)
    target = sparrow_target(y, age, cfg.prior_variance)
    names = ["beta[1]", "beta[2]", "beta[3]"]
    init = np.zeros(3)
    bundle = ReportBundle()
    diag_rows, rate_rows, ppp_rows = [], [], []
    for slot, sampler in enumerate(_sparrow_samplers(cfg)):
        if sampler == "metropolis":
            mh = MetropolisConfig.from_design(target.design, cfg.c)

            def one(sid, mh=mh):
                return run_metropolis(target.log_posterior, mh, init, cfg.schedule, sid, names=names)

        else:
            hmc = HmcConfig(cfg.leapfrog_steps, cfg.step_size, integrator=cfg.integrator)

            def one(sid, hmc=hmc):
                return run_hmc(target.log_posterior, target.grad, hmc, init, cfg.schedule, sid, names=names)

        chains = _run_chains(one, cfg, slot)
        draws = _pooled(chains)
        bundle.chains[sampler] = chains
        entry = _model_entry(chains, poisson_fit(target, draws))
        ppp = poisson_ppp(target, draws, cfg.seed, slot)
        entry["rejected_nonfinite"] = sum(c.rejected_nonfinite for c in chains)
        bundle.summary["models"][sampler] = entry
        bundle.summary["ppp"][sampler] = {s: r.ppp for s, r in ppp.items()}
        for name in names:
            s = entry["parameters"][name]
            diag_rows.append(
                [sampler, name, s["mean"], s["sd"], s["q025"], s["q975"], s["ess"], s["mcse"], s["rhat"],
                 entry["acceptance_rate"]]
            )
        rates = fitted_rates(draws)
        lo, mid, hi = np.quantile(rates, [0.025, 0.5, 0.975], axis=0)
        for a, m, l_, med, h in zip(SPARROW_AGES, rates.mean(axis=0), lo, mid, hi):
            rate_rows.append([sampler, int(a), m, l_, med, h])
        for stat, r in ppp.items():
            ppp_rows += [[sampler, stat, b + 1, v, r.observed] for b, v in enumerate(r.replicated)]
    bundle.tables["diagnostics.csv"] = (
        ["sampler", "parameter", "mean", "sd", "q025", "q975", "ess", "mcse", "rhat", "acceptance_rate"],
        diag_rows,
    )
    bundle.tables["fitted_rates.csv"] = (["sampler", "age", "mean", "q025", "q50", "q975"], rate_rows)
    bundle.tables["ppp_replicates.csv"] = (["sampler", "statistic", "draw", "replicated", "observed"], ppp_rows)
    bundle.meta = _meta(cfg, started, input=str(cfg.input))
    return bundle


# ---------------------------------------------------------------------------
# saber11
# ---------------------------------------------------------------------------


def saber_data(score, sex, work, department) -> HlmData:
    X = np.column_stack([np.ones(score.size), sex, work])
    data = HlmData.from_arrays(X, score, department)
    if data.m < 2:
        raise DataError("saber11 needs at least two departments")
    return data


def hlm_fit(model_id: int, data: HlmData, draws, focus: str = "conditional"):
    """DIC and WAIC of a regression model.

    ``conditional`` scores each observation given the group-level parameters;
    ``marginal`` integrates the random effects out and scores whole groups.
    """
    layout = HlmLayout(model_id, data.p, data.m)
    if focus == "conditional":
        return evaluate(
            lambda row: hlm_loglik(layout, data, row),
            lambda block: hlm_pointwise_loglik(layout, data, block),
            draws,
        )
    if focus == "marginal":
        return evaluate(
            lambda row: float(hlm_marginal_group_loglik(layout, data, row).sum()),
            lambda block: hlm_marginal_group_loglik(layout, data, block),
            draws,
        )
    raise DomainError(f"focus must be one of {FOCUS}")


def _models(cfg: RunConfig):
    return [1, 2, 3] if cfg.model == "all" else [int(cfg.model)]


def group_coefficient_draws(layout: HlmLayout, draws) -> np.ndarray:
    """``B x m x p`` group coefficients; the intercept column absorbs ``theta_j``."""
    m, p = layout.m, layout.p
    start = layout.index["group_beta[1,1]"]
    bj = draws[:, start : start + m * p].reshape(-1, m, p).copy()
    bj[:, :, 0] += layout.columns(draws, "theta")
    return bj


def run_saber11(cfg: RunConfig) -> ReportBundle:
    """Gibbs fits of the three regression models, DIC comparison and per-group intervals."""
    started = time.perf_counter()
    if cfg.input is None:
        raise DataError("saber11 needs --input (generate one with `synth saber11`)")
    data = saber_data(*io.read_saber11(cfg.input))
    nu_grid = np.arange(1, cfg.nu_max + 1)
    bundle = ReportBundle()
    coef_rows, dic_rows, group_rows = [], [], []
    for model_id in _models(cfg):
        hyper = unit_information_config(model_id, data.X, data.y, cfg.sigma2_rate)
        chains = _run_chains(
            lambda sid: run_gibbs(data, hyper, cfg.schedule, sid, nu_grid=nu_grid), cfg, model_id
        )
        key = f"model{model_id}"
        draws = _pooled(chains)
        fit = hlm_fit(model_id, data, draws, cfg.focus)
        bundle.chains[key] = chains
        bundle.summary["models"][key] = _model_entry(chains, fit, probs=(0.005, 0.025, 0.5, 0.975, 0.995))
        params = bundle.summary["models"][key]["parameters"]
        for k in range(data.p):
            s = params[f"beta[{k + 1}]"]
            coef_rows.append([key, f"beta[{k + 1}]", s["mean"], s["sd"], s["q025"], s["q975"]])
        sigma = np.sqrt(draws[:, data.p])
        lo, hi = np.quantile(sigma, [0.025, 0.975])
        coef_rows.append([key, "sigma", float(sigma.mean()), float(sigma.std(ddof=1)), float(lo), float(hi)])
        dic_rows.append([key, fit.dic, fit.p_dic, fit.waic, fit.lppd, fit.p_waic])
        if model_id == 3:
            layout = HlmLayout(3, data.p, data.m)
            bj = group_coefficient_draws(layout, draws)
            q = np.quantile(bj, [0.005, 0.025, 0.975, 0.995], axis=0)
            for j, label in enumerate(data.labels):
                for k in range(data.p):
                    ref = SABER_REFERENCE[k] if k < len(SABER_REFERENCE) else 0.0
                    l99, l95, h95, h99 = q[:, j, k]
                    group_rows.append(
                        [label, f"beta[{k + 1}]", float(bj[:, j, k].mean()), l95, h95, l99, h99, ref,
                         int(not l95 <= ref <= h95), int(not l99 <= ref <= h99)]
                    )
    bundle.tables["coefficients.csv"] = (["model", "parameter", "mean", "sd", "q025", "q975"], coef_rows)
    bundle.tables["dic.csv"] = (["model", "dic", "p_dic", "waic", "lppd", "p_waic"], dic_rows)
    if group_rows:
        bundle.tables["group_intervals.csv"] = (
            ["department", "parameter", "mean", "lower95", "upper95", "lower99", "upper99", "reference",
             "excludes_ref_95", "excludes_ref_99"],
            group_rows,
        )
    bundle.meta = _meta(cfg, started, input=str(cfg.input), groups=list(data.labels))
    return bundle


PIPELINES = {"consultas": run_consultas, "sparrows": run_sparrows, "saber11": run_saber11}


def run(cfg: RunConfig) -> ReportBundle:
    return PIPELINES[cfg.subcommand](cfg)


# ---------------------------------------------------------------------------
# synthetic data and audit
# ---------------------------------------------------------------------------


def generate_synthetic(kind: str, path, seed: int = 0, **params) -> Path:
    """Writes a synthetic dataset with the reader's header; same seed gives the same bytes."""
    path = Path(path)
    if kind == "sparrows":
        y, age = synthetic.sparrows(synthetic.SparrowParams(**params), seed)
        io.write_table(path, io.SPARROWS_HEADER, zip(y, age))
    elif kind == "saber11":
        score, sex, work, dept = synthetic.saber11(synthetic.SaberParams(**params), seed)
        io.write_table(path, io.SABER11_HEADER, zip(score, sex, work, dept))
    else:
        raise DomainError(f"unknown synthetic dataset {kind!r}")
    return path


def _same(a, b, tol) -> bool:
    # non-finite values are stored as null
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def audit_bundle(out, tol: float = 1e-9) -> list:
    """Recomputes every model's parameter summary (and fit and ppp, when the input is readable) from the chains tables.

    Returns a list of mismatch descriptions; empty means the bundle is self-consistent.
    """
    out = Path(out)
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    meta = json.loads((out / "meta.json").read_text(encoding="utf-8"))
    cfg = meta["config"]
    problems = []
    data = target = None
    inp = meta.get("input")
    if inp and Path(inp).exists():
        if cfg["subcommand"] == "sparrows":
            target = sparrow_target(*io.read_sparrows(inp), cfg["prior_variance"])
        elif cfg["subcommand"] == "saber11":
            data = saber_data(*io.read_saber11(inp))
    for slot, (key, entry) in enumerate(summary["models"].items()):
        names, per_chain = io.read_chains(out / f"chains_{key}.csv")
        arrays = list(per_chain.values())
        probs = [float("0." + k[1:]) for k in entry["parameters"][names[0]] if k.startswith("q")]
        fresh = json.loads(json.dumps(io._jsonable(summarize(arrays, probs=probs, names=names).to_dict())))
        for name in names:
            for stat, value in entry["parameters"][name].items():
                if not _same(value, fresh[name][stat], tol):
                    problems.append(f"{key}/{name}/{stat}: summary {value} vs chains {fresh[name][stat]}")
        if "fit" in entry and (target is not None or data is not None):
            pooled = np.vstack(arrays)
            if target is not None:
                fit = poisson_fit(target, pooled)
            else:
                fit = hlm_fit(int(key[-1]), data, pooled, cfg["focus"])
            for stat, value in fit.to_dict().items():
                if not _same(entry["fit"][stat], value, tol):
                    problems.append(f"{key}/fit/{stat}: summary {entry['fit'][stat]} vs chains {value}")
        if target is not None and key in summary["ppp"]:
            ppp = poisson_ppp(target, np.vstack(arrays), cfg["seed"], slot)
            for stat, value in summary["ppp"][key].items():
                if not _same(value, ppp[stat].ppp, tol):
                    problems.append(f"ppp/{key}/{stat}: summary {value} vs chains {ppp[stat].ppp}")
    return problems


__all__ = [
    "CANONICAL",
    "HALF_KICK",
    "ReportBundle",
    "RunConfig",
    "audit_bundle",
    "generate_synthetic",
    "run",
    "run_consultas",
    "run_saber11",
    "run_sparrows",
]
