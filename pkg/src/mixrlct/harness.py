"""Experiment orchestration: replicate sweeps, aggregation, and slope fits.

The experiments here drive everything else end to end: sample datasets from
a fixed truth, compute free energies by the configured method, regress
mean(F_n - n*S_n) on log n, and compare the slope against the closed-form
learning coefficient. A sweep over the emission hyperparameter repeats that
per alpha and locates the kink where the slope stops growing.

Determinism: every (n, replicate) row gets its seed from
seeds.derive_seed(root_seed, row_index) with row_index enumerating the grid
in declaration order, so identical configs give bitwise-identical CSVs. An
alpha sweep reuses the same row seeds for every alpha (the datasets do not
depend on alpha), which removes most of the between-alpha sampling noise
from the sweep's shape.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import (
    MixtureParams,
    empirical_entropy,
    entropy,
    enumerate_support,
    mixture_pmf,
    sample_dataset,
)
from .estimators import (
    GibbsConfig,
    SlopeFit,
    slope_fit,
    temperature_ladder,
    thermo_integration,
    wbic_estimate,
)
from .exact_bayes import (
    ENUMERATION_CAP,
    ConjugatePrior,
    gen_error_exact,
    log_marginal_enumeration,
)
from .rlct import PriorSpec, RlctReport, rlct_regular, rlct_two_component
from .seeds import derive_seed

METHOD_CHOICES = ("enumeration", "wbic", "thermo")

THREADS_ENV = "MIXRLCT_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment needs; science parameters only.

    prior None means the symmetric all-ones (uniform) conjugate prior for
    (model_components, categories). gibbs_burn_in None defaults to a fifth
    of gibbs_sweeps. m_hypothesis None picks the multiplicity from theory
    when a closed form applies (two components or regular), else 1.
    """

    categories: int
    trials: int
    model_components: int
    truth: MixtureParams
    n_grid: tuple[int, ...]
    replicates: int
    method: str = "enumeration"
    root_seed: int = 0
    prior: ConjugatePrior | None = None
    alpha_grid: tuple[float, ...] | None = None
    n_min: int = 6
    compute_gn: bool = False
    m_hypothesis: int | None = None
    gibbs_sweeps: int = 20000
    gibbs_burn_in: int | None = None
    ladder_rungs: int = 21
    cap: int = ENUMERATION_CAP
    block_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.alpha_grid is not None:
            object.__setattr__(
                self, "alpha_grid", tuple(float(a) for a in self.alpha_grid)
            )
        if self.method not in METHOD_CHOICES:
            raise ValueError(
                "method must be one of %s, got %r" % (METHOD_CHOICES, self.method)
            )
        if not self.n_grid:
            raise ValueError("n_grid must be nonempty")
        if any(n < 0 for n in self.n_grid):
            raise ValueError("n values must be nonnegative")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.truth.categories != self.categories:
            raise ValueError(
                "truth has %d categories, config says %d"
                % (self.truth.categories, self.categories)
            )
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.model_components < 1:
            raise ValueError("model_components must be >= 1")
        needed = max(self.n_grid) + (1 if self.compute_gn else 0)
        if self.method == "enumeration" and needed > self.cap:
            raise ValueError(
                "n_grid needs n=%d under the enumeration cap %d"
                % (needed, self.cap)
            )
        if self.method in ("wbic", "thermo") and min(self.n_grid) < 3:
            raise ValueError("Monte Carlo methods need n >= 3")
        if self.alpha_grid is not None:
            if not self.alpha_grid:
                raise ValueError("alpha_grid, when given, must be nonempty")
            if any(a <= 0 for a in self.alpha_grid):
                raise ValueError("alpha values must be positive")
        if self.prior is not None:
            if (
                self.prior.num_components != self.model_components
                or self.prior.categories != self.categories
            ):
                raise ValueError("prior dimensions disagree with the config")
        if self.m_hypothesis is not None and self.m_hypothesis not in (1, 2, 3):
            raise ValueError("m_hypothesis must be in {1,2,3}")

    def resolved_prior(self) -> ConjugatePrior:
        if self.prior is not None:
            return self.prior
        return ConjugatePrior.symmetric(self.model_components, self.categories)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        truth = MixtureParams(
            weights=tuple(d["truth"]["weights"]),
            components=tuple(tuple(row) for row in d["truth"]["components"]),
        )
        prior = None
        if "prior_emission_alpha" in d:
            prior = ConjugatePrior.symmetric(
                d["H"],
                d["L"],
                mixing=float(d.get("prior_mixing_alpha", 1.0)),
                emission=float(d["prior_emission_alpha"]),
            )
        kwargs = dict(
            categories=d["L"],
            trials=d["M"],
            model_components=d["H"],
            truth=truth,
            n_grid=tuple(d["n_grid"]),
            replicates=d["replicates"],
            method=d.get("method", "enumeration"),
            root_seed=d.get("root_seed", 0),
            prior=prior,
            alpha_grid=tuple(d["alpha_grid"]) if "alpha_grid" in d else None,
        )
        for key in (
            "n_min",
            "compute_gn",
            "m_hypothesis",
            "gibbs_sweeps",
            "gibbs_burn_in",
            "ladder_rungs",
            "cap",
            "block_count",
        ):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ExperimentRow:
    n: int
    replicate: int
    seed: int
    free_energy: float
    entropy_n: float
    gen_error: float | None = None
    stderr: float | None = None


@dataclass(frozen=True)
class Aggregate:
    """Per-n summary: mean regression target y = F_n - n*S_n and its spread."""

    n: int
    y_mean: float
    y_stderr: float | None
    free_energy_mean: float
    entropy_mean: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    rows: tuple[ExperimentRow, ...]
    aggregates: tuple[Aggregate, ...]
    fit: SlopeFit | None
    lambda_theory: float | None
    m_hypothesis: int


def _theory_report(cfg: ExperimentConfig) -> RlctReport | None:
    """Closed-form (lambda, m) when the config matches a known case.

    A one-component model is regular with dimension L-1. For a
    two-component model over an interior single-multinomial truth the
    closed form keys on the mixing-weight prior Dir(alpha, alpha); the
    component priors must be uniform (exponent 1), since that is the only
    Dirichlet that is both positive and bounded on the closed simplex as
    the theory requires. Anything else has no closed form here.
    """
    prior = cfg.resolved_prior()
    if cfg.model_components == 1:
        return rlct_regular(cfg.categories - 1)
    if cfg.model_components == 2 and cfg.truth.num_components == 1:
        emission_flat = {e for row in prior.emission for e in row}
        mixing_flat = set(prior.mixing)
        if emission_flat == {1.0} and len(mixing_flat) == 1:
            alpha = next(iter(mixing_flat))
            return rlct_two_component(
                cfg.categories, PriorSpec.dirichlet(alpha)
            )
    return None


def _row_indices(cfg: ExperimentConfig):
    idx = 0
    for n in cfg.n_grid:
        for rep in range(cfg.replicates):
            yield idx, n, rep
            idx += 1


def _compute_row(cfg: ExperimentConfig, prior: ConjugatePrior, idx: int, n: int, rep: int) -> ExperimentRow:
    seed = derive_seed(cfg.root_seed, idx)
    data = sample_dataset(cfg.truth, n, seed, trials=cfg.trials)
    burn = cfg.gibbs_burn_in
    if burn is None:
        burn = cfg.gibbs_sweeps // 5
    if cfg.method == "enumeration":
        fe = log_marginal_enumeration(
            data,
            cfg.model_components,
            prior,
            cap=cfg.cap,
            block_count=cfg.block_count,
        )
    elif cfg.method == "wbic":
        fe = wbic_estimate(
            data,
            cfg.model_components,
            prior,
            GibbsConfig(
                sweeps=cfg.gibbs_sweeps, burn_in=burn, seed=derive_seed(seed, 1)
            ),
        )
    else:
        fe = thermo_integration(
            data,
            cfg.model_components,
            prior,
            temperature_ladder(cfg.ladder_rungs),
            GibbsConfig(
                sweeps=cfg.gibbs_sweeps, burn_in=burn, seed=derive_seed(seed, 1)
            ),
        )
    gn = None
    if cfg.compute_gn and cfg.method == "enumeration":
        gn = gen_error_exact(
            data,
            cfg.truth,
            cfg.model_components,
            prior,
            cap=cfg.cap,
            block_count=cfg.block_count,
        )
    s_n = empirical_entropy(cfg.truth, data)
    return ExperimentRow(
        n=n,
        replicate=rep,
        seed=seed,
        free_energy=fe.value,
        entropy_n=s_n,
        gen_error=gn,
        stderr=fe.stderr,
    )


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        count = int(raw)
    except ValueError:
        raise ValueError("%s must be an integer, got %r" % (THREADS_ENV, raw))
    return max(count, 1)


def run_lambda_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Sample, evaluate, aggregate, and fit the log n slope.

    Rows cover n_grid x replicates in order; aggregation averages
    y = F_n - n*S_n per n and the slope fit runs on n >= cfg.n_min weighted
    by the inverse variance of the per-n mean when replicates > 1.
    """
    prior = cfg.resolved_prior()
    jobs = list(_row_indices(cfg))
    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(
                pool.map(
                    lambda job: _compute_row(cfg, prior, *job), jobs
                )
            )
    else:
        rows = [_compute_row(cfg, prior, *job) for job in jobs]
    aggregates = []
    for n in cfg.n_grid:
        ys = np.array(
            [r.free_energy - n * r.entropy_n for r in rows if r.n == n]
        )
        fs = np.array([r.free_energy for r in rows if r.n == n])
        ss = np.array([r.entropy_n for r in rows if r.n == n])
        se = (
            float(ys.std(ddof=1) / math.sqrt(len(ys))) if len(ys) > 1 else None
        )
        aggregates.append(
            Aggregate(
                n=n,
                y_mean=float(ys.mean()),
                y_stderr=se,
                free_energy_mean=float(fs.mean()),
                entropy_mean=float(ss.mean()),
            )
        )
    theory = _theory_report(cfg)
    if cfg.m_hypothesis is not None:
        m_hyp = cfg.m_hypothesis
    elif theory is not None:
        m_hyp = theory.multiplicity
    else:
        m_hyp = 1
    usable = [a for a in aggregates if a.n >= cfg.n_min]
    fit = None
    if len({a.n for a in usable}) >= 3:
        weights = None
        if all(a.y_stderr is not None and a.y_stderr > 0 for a in usable):
            weights = [1.0 / a.y_stderr**2 for a in usable]
        fit = slope_fit(
            [(a.n, a.y_mean) for a in usable],
            weights,
            m_hypothesis=m_hyp,
        )
    return ExperimentResult(
        config=cfg,
        rows=tuple(rows),
        aggregates=tuple(aggregates),
        fit=fit,
        lambda_theory=theory.lam if theory is not None else None,
        m_hypothesis=m_hyp,
    )


@dataclass(frozen=True)
class SweepEntry:
    alpha: float
    lambda_hat: float
    stderr: float
    lambda_theory: float | None


@dataclass(frozen=True)
class PhaseSweepResult:
    config: ExperimentConfig
    entries: tuple[SweepEntry, ...]
    alpha_c_hat: float | None
    per_alpha: tuple[ExperimentResult, ...]


def _hinge_kink(alphas: np.ndarray, lams: np.ndarray) -> float:
    """Two-segment fit lambda(alpha) ~ t0 + t1*min(alpha, c); best c by SSE."""
    lo, hi = float(alphas.min()), float(alphas.max())
    candidates = np.linspace(lo, hi, 201)
    best_c, best_sse = lo, math.inf
    for c in candidates:
        design = np.column_stack(
            [np.ones_like(alphas), np.minimum(alphas, c)]
        )
        coef, *_ = np.linalg.lstsq(design, lams, rcond=None)
        resid = lams - design @ coef
        sse = float(resid @ resid)
        if sse < best_sse - 1e-15:
            best_sse = sse
            best_c = float(c)
    return best_c


def run_phase_sweep(cfg: ExperimentConfig) -> PhaseSweepResult:
    """Per-alpha slope fits sharing row seeds, plus the detected kink.

    Each alpha swaps in the mixing-weight prior Dir(alpha, ..., alpha)
    (component priors stay uniform, where the closed form lives) and reruns
    the slope experiment on the same datasets.
    """
    if cfg.alpha_grid is None:
        raise ValueError("run_phase_sweep needs cfg.alpha_grid")
    entries = []
    per_alpha = []
    for alpha in cfg.alpha_grid:
        prior = ConjugatePrior.symmetric(
            cfg.model_components, cfg.categories, mixing=alpha, emission=1.0
        )
        sub = replace(cfg, prior=prior, alpha_grid=None)
        result = run_lambda_experiment(sub)
        if result.fit is None:
            raise ValueError(
                "alpha sweep needs enough n values above n_min to fit"
            )
        entries.append(
            SweepEntry(
                alpha=alpha,
                lambda_hat=result.fit.lambda_hat,
                stderr=result.fit.stderr,
                lambda_theory=result.lambda_theory,
            )
        )
        per_alpha.append(result)
    alpha_c = None
    if len(entries) >= 3:
        alpha_c = _hinge_kink(
            np.array([e.alpha for e in entries]),
            np.array([e.lambda_hat for e in entries]),
        )
    return PhaseSweepResult(
        config=cfg,
        entries=tuple(entries),
        alpha_c_hat=alpha_c,
        per_alpha=tuple(per_alpha),
    )


@dataclass(frozen=True)
class GnIdentityReport:
    """Direct predictive KL vs the free-energy-difference route, per row."""

    rows: tuple[tuple[int, int, int, float, float, float], ...]
    worst_deviation: float
    tolerance: float
    passed: bool


def run_gn_identity_check(
    cfg: ExperimentConfig, tolerance: float = 1e-9
) -> GnIdentityReport:
    """Check G_n == sum_x q(x) F_{n+1}(X + x) - F_n - S on every row.

    The left side is the predictive KL computed by gen_error_exact; the
    right side is assembled literally from n+1 further free energies and the
    closed-form entropy. Exact in exact arithmetic, so a 1e-9 gap means a
    numerical (or logic) problem, not statistics.
    """
    if cfg.method != "enumeration":
        raise ValueError("the identity check needs exact enumeration")
    needed = max(cfg.n_grid) + 1
    if needed > cfg.cap:
        raise ValueError(
            "identity check needs n+1=%d within cap %d" % (needed, cfg.cap)
        )
    prior = cfg.resolved_prior()
    s_true = entropy(cfg.truth, trials=cfg.trials)
    support = enumerate_support(cfg.categories, cfg.trials)
    q = [mixture_pmf(cfg.truth, x) for x in support]
    rows = []
    worst = 0.0
    for idx, n, rep in _row_indices(cfg):
        seed = derive_seed(cfg.root_seed, idx)
        data = sample_dataset(cfg.truth, n, seed, trials=cfg.trials)
        direct = float(
            gen_error_exact(
                data,
                cfg.truth,
                cfg.model_components,
                prior,
                cap=cfg.cap,
                block_count=cfg.block_count,
            )
        )
        f_n = log_marginal_enumeration(
            data,
            cfg.model_components,
            prior,
            cap=cfg.cap,
            block_count=cfg.block_count,
        ).value
        expected_f = 0.0
        for weight, x in zip(q, support):
            f_next = log_marginal_enumeration(
                data.append(x),
                cfg.model_components,
                prior,
                cap=cfg.cap,
                block_count=cfg.block_count,
            ).value
            expected_f += weight * f_next
        via_identity = expected_f - f_n - s_true
        dev = abs(direct - via_identity)
        worst = max(worst, dev)
        rows.append((n, rep, seed, direct, via_identity, dev))
    return GnIdentityReport(
        rows=tuple(rows),
        worst_deviation=worst,
        tolerance=tolerance,
        passed=bool(worst <= tolerance),
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    return "%.17g" % value


def write_rows_csv(result: ExperimentResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "replicate", "seed", "F", "S_n", "G", "SE"])
        for row in result.rows:
            writer.writerow(
                [
                    row.n,
                    row.replicate,
                    row.seed,
                    _fmt(row.free_energy),
                    _fmt(row.entropy_n),
                    _fmt(row.gen_error),
                    _fmt(row.stderr),
                ]
            )


def write_fit_json(
    result: ExperimentResult,
    path: str | Path,
    alpha_c_hat: float | None = None,
) -> None:
    payload = {
        "lambda_hat": result.fit.lambda_hat if result.fit else None,
        "stderr": result.fit.stderr if result.fit else None,
        "intercept": result.fit.intercept if result.fit else None,
        "lambda_theory": result.lambda_theory,
        "m_hypothesis": result.m_hypothesis,
        "n_min": result.config.n_min,
        "method": result.config.method,
        "root_seed": result.config.root_seed,
    }
    if alpha_c_hat is not None:
        payload["alpha_c_hat"] = alpha_c_hat
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_sweep_csv(sweep: PhaseSweepResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "lambda_hat", "stderr", "lambda_theory"])
        for e in sweep.entries:
            writer.writerow(
                [
                    _fmt(e.alpha),
                    _fmt(e.lambda_hat),
                    _fmt(e.stderr),
                    _fmt(e.lambda_theory),
                ]
            )


def run(cfg: ExperimentConfig, out_dir: str | Path) -> int:
    """Run the configured experiment into out_dir; 0 iff hard checks pass.

    Hard checks: full row counts, finite fit, nonnegative exact
    generalization errors (tiny negative rounding tolerated at 1e-12), and
    the F/G identity when compute_gn is set with enumeration.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures = []
    if cfg.alpha_grid is not None:
        sweep = run_phase_sweep(cfg)
        write_sweep_csv(sweep, out / "sweep.csv")
        last = sweep.per_alpha[-1]
        write_rows_csv(last, out / "rows.csv")
        write_fit_json(last, out / "fit.json", alpha_c_hat=sweep.alpha_c_hat)
        for res in sweep.per_alpha:
            if len(res.rows) != len(res.config.n_grid) * res.config.replicates:
                failures.append("row count mismatch at alpha sweep")
            if res.fit is not None and not math.isfinite(res.fit.lambda_hat):
                failures.append("non-finite slope in alpha sweep")
    else:
        result = run_lambda_experiment(cfg)
        write_rows_csv(result, out / "rows.csv")
        write_fit_json(result, out / "fit.json")
        if len(result.rows) != len(cfg.n_grid) * cfg.replicates:
            failures.append("row count mismatch")
        if result.fit is not None and not math.isfinite(result.fit.lambda_hat):
            failures.append("non-finite slope")
        for row in result.rows:
            if row.gen_error is not None and row.gen_error < -1e-12:
                failures.append(
                    "negative generalization error at n=%d rep=%d"
                    % (row.n, row.replicate)
                )
                break
        if cfg.compute_gn and cfg.method == "enumeration":
            report = run_gn_identity_check(cfg)
            (out / "gn_identity.json").write_text(
                json.dumps(
                    {
                        "worst_deviation": report.worst_deviation,
                        "tolerance": report.tolerance,
                        "passed": report.passed,
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n"
            )
            if not report.passed:
                failures.append(
                    "F/G identity violated: worst %.3e" % report.worst_deviation
                )
    if failures:
        (out / "failures.txt").write_text("\n".join(failures) + "\n")
        return 1
    return 0
