"""Monte Carlo estimators for the quantities the exact engines pin down.

Three families live here:

* Samplers for the conjugate mixture posterior. At temperature 1 the latent
  assignments are swept with the parameters integrated out (collapsed Gibbs);
  at temperature 0 draws come straight from the prior; in between, a
  random-walk Metropolis chain moves on the parameters themselves, since the
  tempered target prior * likelihood^t is exactly computable there while no
  latent-variable augmentation has it as a marginal.
* Free-energy estimators built on those chains: the posterior mean of the
  total negative log likelihood at temperature 1/log(n), and thermodynamic
  integration of that mean along a temperature ladder.
* A multilevel-splitting estimator of how prior volume of sublevel sets
  {loss <= t} scales as t -> 0, whose log-log slope recovers the learning
  coefficient directly from its definition.

Everything is deterministic given the seed in its config; replicate seeds
should come from seeds.derive_seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .domain import Dataset, SimplexVector, log_pmf_table, support_array
from .exact_bayes import (
    METHOD_THERMO,
    METHOD_WBIC,
    ConjugatePrior,
    FreeEnergyValue,
    _check_prior,
)
from .seeds import derive_seed

# Per-observation likelihoods are clamped below this during chain and energy
# evaluation, so a stray boundary parameter draw cannot emit -inf.
PMF_FLOOR = 1e-12
_LOG_FLOOR = math.log(PMF_FLOOR)


class LevelStarvationError(RuntimeError):
    """No particle survived a splitting level.

    Attributes:
        level: index of the starved level.
        threshold: its loss threshold.
    """

    def __init__(self, level: int, threshold: float):
        super().__init__(
            "no particles under threshold %g at level %d; raise "
            "samples_per_level or soften the threshold ladder"
            % (threshold, level)
        )
        self.level = level
        self.threshold = threshold


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length and stream parameters for the posterior samplers.

    temperature scales the likelihood contribution; 1 is the posterior, 0 is
    the prior (used by the integration ladder), values in between are power
    posteriors.
    """

    sweeps: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if self.sweeps <= self.burn_in:
            raise ValueError(
                "sweeps (%d) must exceed burn_in (%d)" % (self.sweeps, self.burn_in)
            )
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if not (0.0 <= self.temperature and math.isfinite(self.temperature)):
            raise ValueError(
                "temperature must be a finite nonnegative real, got %r"
                % self.temperature
            )

    @property
    def kept(self) -> int:
        return (self.sweeps - self.burn_in + self.thinning - 1) // self.thinning


@dataclass(frozen=True)
class GibbsResult:
    """Kept samples from one chain: assignments and parameter draws."""

    assignments: np.ndarray  # (kept, n) int8
    weights: np.ndarray  # (kept, H)
    components: np.ndarray  # (kept, H, L)


def _dirichlet_row(rng: np.random.Generator, alpha: np.ndarray) -> np.ndarray:
    return rng.dirichlet(alpha)


def _collapsed_chain(
    data: Dataset, components: int, prior: ConjugatePrior, cfg: GibbsConfig
) -> GibbsResult:
    """Exact-conditional sweep with parameters integrated out (temperature 1)."""
    H = components
    n = data.n
    rng = np.random.default_rng(cfg.seed)
    X = data.counts_matrix()
    rows = [tuple((l, int(x)) for l, x in enumerate(row) if x) for row in X]
    alpha = list(prior.mixing)
    stat = [list(row) for row in prior.emission]
    stat_sum = [math.fsum(row) for row in prior.emission]
    cnt = [0] * H
    y = [int(v) for v in rng.integers(0, H, size=n)] if n else []
    for i in range(n):
        h = y[i]
        cnt[h] += 1
        for l, x in rows[i]:
            stat[h][l] += x
        stat_sum[h] += data.trials

    lgamma = math.lgamma
    trials = data.trials

    def log_pred(h: int, i: int) -> float:
        s = stat_sum[h]
        total = lgamma(s) - lgamma(s + trials)
        row = stat[h]
        for l, x in rows[i]:
            total += lgamma(row[l] + x) - lgamma(row[l])
        return total

    kept = cfg.kept
    out_y = np.empty((kept, n), dtype=np.int8)
    out_w = np.empty((kept, H))
    out_c = np.empty((kept, H, prior.categories))
    k = 0
    logw = [0.0] * H
    for sweep in range(cfg.sweeps):
        for i in range(n):
            h_old = y[i]
            cnt[h_old] -= 1
            for l, x in rows[i]:
                stat[h_old][l] -= x
            stat_sum[h_old] -= trials
            top = -math.inf
            for h in range(H):
                v = math.log(alpha[h] + cnt[h]) + log_pred(h, i)
                logw[h] = v
                if v > top:
                    top = v
            total = 0.0
            for h in range(H):
                logw[h] = math.exp(logw[h] - top)
                total += logw[h]
            u = rng.random() * total
            h_new = H - 1
            acc = 0.0
            for h in range(H):
                acc += logw[h]
                if u < acc:
                    h_new = h
                    break
            y[i] = h_new
            cnt[h_new] += 1
            for l, x in rows[i]:
                stat[h_new][l] += x
            stat_sum[h_new] += trials
        w = rng.dirichlet(np.asarray(alpha) + np.asarray(cnt, dtype=float))
        comps = np.vstack([rng.dirichlet(np.asarray(stat[h])) for h in range(H)])
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
            out_y[k] = y
            out_w[k] = w
            out_c[k] = comps
            k += 1
    return GibbsResult(out_y, out_w, out_c)


def _prior_chain(
    data: Dataset, components: int, prior: ConjugatePrior, cfg: GibbsConfig
) -> GibbsResult:
    """Independent prior draws (the temperature-0 end of a ladder)."""
    H = components
    L = prior.categories
    rng = np.random.default_rng(cfg.seed)
    alpha = prior.mixing_array()
    beta = prior.emission_matrix()
    kept = cfg.kept
    out_y = np.empty((kept, data.n), dtype=np.int8)
    out_w = np.empty((kept, H))
    out_c = np.empty((kept, H, L))
    k = 0
    for sweep in range(cfg.sweeps):
        weights = rng.dirichlet(alpha)
        comps = np.vstack([rng.dirichlet(beta[h]) for h in range(H)])
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
            out_w[k] = weights
            out_c[k] = comps
            out_y[k] = rng.integers(0, H, size=data.n)
            k += 1
    return GibbsResult(out_y, out_w, out_c)


def _tempered_chain(
    data: Dataset, components: int, prior: ConjugatePrior, cfg: GibbsConfig
) -> GibbsResult:
    """Random-walk Metropolis on the parameters under the power posterior.

    Tempering the complete-data likelihood of the latent-variable chain does
    not marginalize to prior * prod_i p(X_i|w)^t (the power of a sum is not
    the sum of powers), so for temperatures other than 1 the chain walks the
    parameters directly: the tempered mixture likelihood is cheap to evaluate
    exactly, and the state space stays small. One sweep proposes a joint
    zero-sum Gaussian step on the weight simplex and every component simplex;
    the step scale adapts toward a moderate acceptance rate during burn-in
    and is frozen afterwards so the kept samples come from a fixed kernel.
    Kept assignments are drawn from the tempered responsibilities given the
    kept parameters.
    """
    H = components
    L = prior.categories
    n = data.n
    t = cfg.temperature
    rng = np.random.default_rng(cfg.seed)
    alpha = prior.mixing_array()
    beta = prior.emission_matrix()
    if n:
        X = data.counts_matrix()
        rows, inv, mult = np.unique(
            X, axis=0, return_inverse=True, return_counts=True
        )
        coeffs = gammaln(data.trials + 1) - gammaln(rows + 1).sum(axis=1)
        rows = rows.astype(float)
        multf = mult.astype(float)

    def log_target(weights: np.ndarray, comps: np.ndarray) -> float:
        lw = np.log(weights)
        lc = np.log(comps)
        val = float((alpha - 1.0) @ lw + ((beta - 1.0) * lc).sum())
        if n:
            scores = rows @ lc.T + lw[None, :]
            logp = np.maximum(logsumexp(scores, axis=1) + coeffs, _LOG_FLOOR)
            val += t * float(multf @ logp)
        return val

    weights = rng.dirichlet(alpha)
    comps = np.vstack([rng.dirichlet(beta[h]) for h in range(H)])
    current = log_target(weights, comps)
    scale = 0.1
    kept = cfg.kept
    out_y = np.empty((kept, n), dtype=np.int8)
    out_w = np.empty((kept, H))
    out_c = np.empty((kept, H, L))
    k = 0
    floor = PMF_FLOOR
    for sweep in range(cfg.sweeps):
        step_w = scale * rng.normal(size=H)
        step_w -= step_w.mean()
        step_c = scale * rng.normal(size=(H, L))
        step_c -= step_c.mean(axis=1, keepdims=True)
        prop_w = weights + step_w
        prop_c = comps + step_c
        log_u = math.log(rng.random())
        if (prop_w > floor).all() and (prop_c > floor).all():
            cand = log_target(prop_w, prop_c)
            accepted = log_u < cand - current
        else:
            accepted = False
        if accepted:
            weights, comps, current = prop_w, prop_c, cand
        if sweep < cfg.burn_in:
            scale = min(max(scale * (1.05 if accepted else 0.975), 1e-4), 1.0)
        if sweep >= cfg.burn_in and (sweep - cfg.burn_in) % cfg.thinning == 0:
            out_w[k] = weights
            out_c[k] = comps
            if n:
                logits = t * (
                    np.log(weights)[None, :] + (rows @ np.log(comps).T)
                )
                draw = np.argmax(
                    logits[inv] + rng.gumbel(size=(n, H)), axis=1
                )
                out_y[k] = draw
            k += 1
    return GibbsResult(out_y, out_w, out_c)


def gibbs_posterior(
    data: Dataset, components: int, prior: ConjugatePrior, cfg: GibbsConfig
) -> GibbsResult:
    """Sample the (power) posterior of the conjugate mixture.

    Returns kept assignment and parameter samples after burn-in and thinning.
    With n = 0 the samples are prior draws. Deterministic given cfg.seed.
    """
    _check_prior(data, components, prior)
    if cfg.temperature == 1.0:
        return _collapsed_chain(data, components, prior, cfg)
    if cfg.temperature == 0.0:
        return _prior_chain(data, components, prior, cfg)
    return _tempered_chain(data, components, prior, cfg)


def _energy_series(result: GibbsResult, data: Dataset) -> np.ndarray:
    """Total negative log likelihood n*L_n(w) for each kept parameter draw."""
    if data.n == 0:
        return np.zeros(result.weights.shape[0])
    X = data.counts_matrix()
    rows, mult = np.unique(X, axis=0, return_counts=True)
    coeffs = gammaln(data.trials + 1) - gammaln(rows + 1).sum(axis=1)
    logB = np.log(np.maximum(result.components, 1e-300))
    with np.errstate(divide="ignore"):
        scores = np.einsum("shl,ul->suh", logB, rows.astype(float)) + np.log(
            np.maximum(result.weights, 1e-300)
        )[:, None, :]
    logp = logsumexp(scores, axis=2) + coeffs[None, :]
    logp = np.maximum(logp, _LOG_FLOOR)
    return -(logp * mult[None, :]).sum(axis=1)


def _batch_means_se(series: np.ndarray, batches: int = 20) -> float:
    """Standard error of the mean from batch means (autocorrelation-aware)."""
    m = len(series)
    if m < 4:
        return float(np.std(series, ddof=1) / math.sqrt(m)) if m > 1 else math.inf
    b = max(1, m // batches)
    k = m // b
    means = series[: k * b].reshape(k, b).mean(axis=1)
    if k < 2:
        return float(np.std(series, ddof=1) / math.sqrt(m))
    return float(np.std(means, ddof=1) / math.sqrt(k))


def _split_rhat(series: np.ndarray) -> float:
    """Two-segment split R-hat of a scalar chain; ~1 when well mixed."""
    m = len(series) // 2
    if m < 2:
        return math.inf
    a, b = series[:m], series[m : 2 * m]
    w = (np.var(a, ddof=1) + np.var(b, ddof=1)) / 2.0
    if w == 0.0:
        return 1.0
    bvar = m * np.var([a.mean(), b.mean()], ddof=1)
    var_hat = (m - 1) / m * w + bvar / m
    return float(math.sqrt(var_hat / w))


RHAT_WARN = 1.1


def wbic_estimate(
    data: Dataset, components: int, prior: ConjugatePrior, cfg: GibbsConfig
) -> FreeEnergyValue:
    """Free-energy estimate as the power-posterior energy mean at 1/log(n).

    Runs the tempered sampler at temperature 1/log(n) (cfg.temperature is
    ignored), averages the total negative log likelihood over kept draws, and
    attaches a batch-means standard error. A split-chain diagnostic beyond
    1.1 sets warning="poor_mixing" instead of failing.
    """
    if data.n < 3:
        raise ValueError("the 1/log(n) temperature needs n >= 3, got %d" % data.n)
    t = 1.0 / math.log(data.n)
    chain = gibbs_posterior(
        data, components, prior, replace(cfg, temperature=t)
    )
    energies = _energy_series(chain, data)
    warning = "poor_mixing" if _split_rhat(energies) > RHAT_WARN else None
    return FreeEnergyValue(
        value=float(energies.mean()),
        n=data.n,
        method=METHOD_WBIC,
        stderr=_batch_means_se(energies),
        warning=warning,
    )


def temperature_ladder(rungs: int, exponent: float = 5.0) -> tuple[float, ...]:
    """Front-loaded ladder (k/(rungs-1))**exponent from 0 to 1.

    The integrand's curvature concentrates at small temperatures (it falls
    like lambda/t once t clears ~1/n), so equal spacing wastes rungs; a
    power-law schedule keeps the trapezoid bias below Monte Carlo noise at
    practical rung counts.
    """
    if rungs < 2:
        raise ValueError("need at least 2 rungs")
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    return tuple((k / (rungs - 1)) ** exponent for k in range(rungs))


def thermo_integration(
    data: Dataset,
    components: int,
    prior: ConjugatePrior,
    ladder: Sequence[float],
    cfg: GibbsConfig,
) -> FreeEnergyValue:
    """Free energy by trapezoid integration of energy means along a ladder.

    The ladder must start at 0, end at 1, and be strictly increasing; each
    rung runs its own chain at that temperature with a seed derived from
    cfg.seed and the rung index. Standard errors propagate through the
    trapezoid weights. A two-rung ladder is accepted but flagged
    "coarse_ladder" since the trapezoid bias is then unquantified.
    """
    ladder = [float(b) for b in ladder]
    if len(ladder) < 2 or ladder[0] != 0.0 or ladder[-1] != 1.0:
        raise ValueError("ladder must run from 0.0 to 1.0, got %r" % (ladder,))
    if any(b2 <= b1 for b1, b2 in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly increasing, got %r" % (ladder,))
    means, ses = [], []
    warning = "coarse_ladder" if len(ladder) == 2 else None
    for k, temp in enumerate(ladder):
        chain = gibbs_posterior(
            data,
            components,
            prior,
            replace(cfg, temperature=temp, seed=derive_seed(cfg.seed, k)),
        )
        energies = _energy_series(chain, data)
        means.append(float(energies.mean()))
        ses.append(_batch_means_se(energies))
        if warning is None and _split_rhat(energies) > RHAT_WARN:
            warning = "poor_mixing"
    value = 0.0
    coeff = [0.0] * len(ladder)
    for k in range(len(ladder) - 1):
        h = ladder[k + 1] - ladder[k]
        value += h * (means[k] + means[k + 1]) / 2.0
        coeff[k] += h / 2.0
        coeff[k + 1] += h / 2.0
    stderr = math.sqrt(math.fsum((c * s) ** 2 for c, s in zip(coeff, ses)))
    return FreeEnergyValue(
        value=value, n=data.n, method=METHOD_THERMO, stderr=stderr, warning=warning
    )


class BoxDomain:
    """Uniform prior on an axis-aligned box, with Gaussian-step proposals."""

    def __init__(self, lows: Sequence[float], highs: Sequence[float]):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        if self.lows.shape != self.highs.shape or self.lows.ndim != 1:
            raise ValueError("lows/highs must be 1-d and matching")
        if not (self.highs > self.lows).all():
            raise ValueError("each high must exceed its low")

    @property
    def dim(self) -> int:
        return len(self.lows)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random((size, self.dim))
        return self.lows + u * (self.highs - self.lows)

    def propose(
        self, rng: np.random.Generator, points: np.ndarray, scale: float
    ) -> tuple[np.ndarray, np.ndarray]:
        step = rng.normal(size=points.shape) * (
            scale * (self.highs - self.lows)
        )
        prop = points + step
        ok = ((prop >= self.lows) & (prop <= self.highs)).all(axis=1)
        return prop, ok


class TwoComponentSimplexDomain:
    """Uniform prior on (weight, two simplex components).

    Columns are [weight, first component cells, second component cells].
    Proposals perturb the weight with a Gaussian step and each simplex block
    with a zero-sum Gaussian step (staying on the sum-1 hyperplane), which is
    symmetric, so plain accept/reject against the constraint set is valid.
    """

    def __init__(self, categories: int):
        if categories < 2:
            raise ValueError("categories must be >= 2, got %d" % categories)
        self.categories = categories

    @property
    def dim(self) -> int:
        return 1 + 2 * self.categories

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        L = self.categories
        out = np.empty((size, self.dim))
        out[:, 0] = rng.random(size)
        out[:, 1 : 1 + L] = rng.dirichlet(np.ones(L), size)
        out[:, 1 + L :] = rng.dirichlet(np.ones(L), size)
        return out

    def propose(
        self, rng: np.random.Generator, points: np.ndarray, scale: float
    ) -> tuple[np.ndarray, np.ndarray]:
        L = self.categories
        prop = points.copy()
        prop[:, 0] += scale * rng.normal(size=len(points))
        for block in (slice(1, 1 + L), slice(1 + L, 1 + 2 * L)):
            step = scale * rng.normal(size=(len(points), L))
            step -= step.mean(axis=1, keepdims=True)
            prop[:, block] += step
        ok = (prop[:, 0] >= 0.0) & (prop[:, 0] <= 1.0)
        ok &= (prop[:, 1:] >= 0.0).all(axis=1)
        return prop, ok


@dataclass(frozen=True)
class VolumeScalingConfig:
    """Multilevel-splitting schedule.

    thresholds: strictly decreasing losses in (0, 1); informative roughly in
        [1e-5, 1e-1] for the losses here.
    samples_per_level: particle count N.
    seed: stream seed; the whole run is deterministic given it.
    mh_steps: constraint-respecting move attempts between levels.
    initial_step: proposal scale, adapted between levels from acceptance.
    """

    thresholds: tuple[float, ...]
    samples_per_level: int
    seed: int
    mh_steps: int = 24
    initial_step: float = 0.25

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", th)
        if len(th) < 3:
            raise ValueError("need at least 3 thresholds to fit a slope")
        if any(t2 >= t1 for t1, t2 in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly decreasing: %r" % (th,))
        if th[0] >= 1.0 or th[-1] <= 0.0:
            raise ValueError("thresholds must lie in (0, 1): %r" % (th,))
        if self.samples_per_level < 2:
            raise ValueError("samples_per_level must be >= 2")
        if self.mh_steps < 1:
            raise ValueError("mh_steps must be >= 1")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be positive")

    @classmethod
    def geometric(
        cls,
        samples_per_level: int,
        seed: int,
        *,
        start: float = 0.1,
        levels: int = 12,
        ratio: float = 0.5,
        mh_steps: int = 24,
        initial_step: float = 0.25,
    ) -> "VolumeScalingConfig":
        """Default schedule: geometric ladder start, start*ratio, ..."""
        if not (0.0 < ratio < 1.0):
            raise ValueError("ratio must be in (0, 1)")
        th = tuple(start * ratio**k for k in range(levels))
        return cls(
            thresholds=th,
            samples_per_level=samples_per_level,
            seed=seed,
            mh_steps=mh_steps,
            initial_step=initial_step,
        )


@dataclass(frozen=True)
class VolumeScalingResult:
    """Fitted sublevel-volume scaling with per-level diagnostics.

    The fit is log V(t) = intercept + lambda_hat*log t + (m-1)*log log(1/t)
    with the multiplicity coefficient fixed per hypothesis m in {1,2,3};
    m_hat minimizes the residual sum of squares (rss_by_multiplicity keeps
    all three).
    """

    lambda_hat: float
    m_hat: int
    stderr: float
    intercept: float
    thresholds: tuple[float, ...]
    log_volumes: tuple[float, ...]
    survival_fractions: tuple[float, ...]
    acceptance_rates: tuple[float, ...]
    rss_by_multiplicity: dict[int, float]


def volume_scaling_lambda(
    loss: Callable[[np.ndarray], np.ndarray],
    prior_sampler,
    cfg: VolumeScalingConfig,
) -> VolumeScalingResult:
    """Estimate the loss's learning coefficient from prior sublevel volumes.

    prior_sampler carries the reference measure: sample(rng, n) draws from
    it and propose(rng, points, scale) makes symmetric in-support moves
    (BoxDomain and TwoComponentSimplexDomain provide both). Multilevel
    splitting: particles start as prior draws; at each threshold the
    surviving fraction multiplies the running volume estimate, survivors are
    resampled and diversified by moves rejected outside {loss <= t}. Raises
    LevelStarvationError naming the level if no particle survives.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.samples_per_level
    points = prior_sampler.sample(rng, n)
    values = np.asarray(loss(points), dtype=float)
    if values.shape != (n,):
        raise ValueError("loss must map (N, dim) points to (N,) values")
    scale = cfg.initial_step
    log_v = 0.0
    log_volumes = []
    fractions = []
    acceptance = []
    for level, thr in enumerate(cfg.thresholds):
        alive = values <= thr
        frac = float(alive.mean())
        if frac == 0.0:
            raise LevelStarvationError(level, thr)
        log_v += math.log(frac)
        log_volumes.append(log_v)
        fractions.append(frac)
        keep = np.flatnonzero(alive)
        pick = keep[rng.integers(0, len(keep), size=n)]
        points = points[pick]
        values = values[pick]
        accepted = 0.0
        for _ in range(cfg.mh_steps):
            prop, ok = prior_sampler.propose(rng, points, scale)
            pv = np.asarray(loss(prop), dtype=float)
            take = ok & (pv <= thr)
            points = np.where(take[:, None], prop, points)
            values = np.where(take, pv, values)
            accepted += float(take.mean())
        rate = accepted / cfg.mh_steps
        acceptance.append(rate)
        if rate < 0.2:
            scale *= 0.5
        elif rate > 0.5:
            scale = min(scale * 1.6, 1.0)

    # V(t) ~ const * t^lambda * log(1/t)^(m-1), so under hypothesis m the
    # known +(m-1)*loglog(1/t) term is removed before the straight-line fit.
    x = np.log(np.asarray(cfg.thresholds))
    loglog = np.log(np.log(1.0 / np.asarray(cfg.thresholds)))
    y = np.asarray(log_volumes)
    design = np.column_stack([np.ones_like(x), x])
    fits = {}
    rss = {}
    for m in (1, 2, 3):
        target = y - (m - 1) * loglog
        coef, res, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = target - design @ coef
        fits[m] = coef
        rss[m] = float(resid @ resid)
    m_hat = min(rss, key=rss.get)
    coef = fits[m_hat]
    # The slope is linear in the level estimates, and each level estimate is
    # a cumulative sum of log survival fractions with (approximately)
    # independent binomial noise, so the splitting variance propagates
    # through suffix sums of the slope's weights.
    slope_weights = np.linalg.solve(design.T @ design, design.T)[1]
    suffix = np.cumsum(slope_weights[::-1])[::-1]
    frac_arr = np.asarray(fractions)
    increment_var = (1.0 - frac_arr) / (frac_arr * n)
    stderr = math.sqrt(float((suffix**2 * increment_var).sum()))
    return VolumeScalingResult(
        lambda_hat=float(coef[1]),
        m_hat=m_hat,
        stderr=stderr,
        intercept=float(coef[0]),
        thresholds=cfg.thresholds,
        log_volumes=tuple(log_volumes),
        survival_fractions=tuple(fractions),
        acceptance_rates=tuple(acceptance),
        rss_by_multiplicity=rss,
    )


def normal_form_volume_problem(
    categories: int, offset_half_width: float = 0.5
) -> tuple[BoxDomain, Callable[[np.ndarray], np.ndarray]]:
    """Box domain and vectorized loss for the two-term normal form.

    Columns are [weight, first offsets, mean offsets]; weight uniform on
    [0,1], offsets uniform on [-offset_half_width, offset_half_width].
    """
    k = categories - 1
    lows = [0.0] + [-offset_half_width] * (2 * k)
    highs = [1.0] + [offset_half_width] * (2 * k)

    def batch_loss(points: np.ndarray) -> np.ndarray:
        a = points[:, 0]
        beta = points[:, 1 : 1 + k]
        delta = points[:, 1 + k :]
        return (delta**2).sum(axis=1) + a**2 * (beta**4).sum(axis=1)

    return BoxDomain(lows, highs), batch_loss


def mixture_kl_volume_problem(
    truth: SimplexVector, trials: int
) -> tuple[TwoComponentSimplexDomain, Callable[[np.ndarray], np.ndarray]]:
    """Domain and vectorized loss for the full mixture KL error.

    The loss of a particle [weight, b cells, c cells] is
    KL(truth || weight*Mul(b) + (1-weight)*Mul(c)) over the count support,
    with the mixture pmf floored at PMF_FLOOR so boundary particles stay
    finite.
    """
    from .domain import MixtureParams

    L = truth.categories
    sup = support_array(L, trials).astype(float)
    coeffs = gammaln(trials + 1) - gammaln(sup + 1).sum(axis=1)
    log_q = log_pmf_table(MixtureParams.single(truth.probs), trials)
    q = np.exp(log_q)

    def batch_loss(points: np.ndarray) -> np.ndarray:
        a = points[:, 0]
        b = points[:, 1 : 1 + L]
        c = points[:, 1 + L :]
        pb = np.exp(coeffs[:, None] + sup @ np.log(np.maximum(b, 1e-300)).T)
        pc = np.exp(coeffs[:, None] + sup @ np.log(np.maximum(c, 1e-300)).T)
        mix = a[None, :] * pb + (1.0 - a)[None, :] * pc
        log_mix = np.log(np.maximum(mix, PMF_FLOOR))
        return (q[:, None] * (log_q[:, None] - log_mix)).sum(axis=0)

    return TwoComponentSimplexDomain(L), batch_loss


@dataclass(frozen=True)
class SlopeFit:
    """Weighted least-squares slope of y against log n."""

    lambda_hat: float
    intercept: float
    stderr: float
    m_hypothesis: int
    n_values: tuple[int, ...]


def slope_fit(
    records: Sequence[tuple[int, float]],
    weights: Sequence[float] | None = None,
    *,
    m_hypothesis: int = 1,
) -> SlopeFit:
    """Fit y = intercept + lambda*log(n) by weighted least squares.

    records are (n, y) pairs with y typically a mean of F_n - n*S_n. Under
    the multiplicity hypothesis m the known -(m-1)*log(log n) term is added
    back onto y before fitting; on sample sizes this package can enumerate,
    log n and log log n are far too collinear for a free coefficient to be
    estimable, so the hypothesis enters with its theoretical coefficient.
    Needs at least 3 distinct n >= 3.
    """
    if m_hypothesis not in (1, 2, 3):
        raise ValueError("m_hypothesis must be in {1,2,3}")
    ns = [int(n) for n, _ in records]
    ys = [float(v) for _, v in records]
    if any(n < 3 for n in ns):
        raise ValueError("all n must be >= 3 for the log log term")
    if len(set(ns)) < 3:
        raise ValueError(
            "slope fit is rank deficient: need >= 3 distinct n, got %r"
            % sorted(set(ns))
        )
    x = np.log(np.asarray(ns, dtype=float))
    y = np.asarray(ys) + (m_hypothesis - 1) * np.log(np.log(np.asarray(ns, dtype=float)))
    if weights is None:
        w = np.ones_like(x)
    else:
        w = np.asarray(list(weights), dtype=float)
        if w.shape != x.shape or (w <= 0).any():
            raise ValueError("weights must be positive, one per record")
    design = np.column_stack([np.ones_like(x), x])
    wd = design * w[:, None]
    gram = design.T @ wd
    coef = np.linalg.solve(gram, wd.T @ y)
    resid = y - design @ coef
    dof = max(len(x) - 2, 1)
    sigma2 = float(resid @ (w * resid)) / dof
    cov = sigma2 * np.linalg.inv(gram)
    return SlopeFit(
        lambda_hat=float(coef[1]),
        intercept=float(coef[0]),
        stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
        m_hypothesis=m_hypothesis,
        n_values=tuple(sorted(set(ns))),
    )
