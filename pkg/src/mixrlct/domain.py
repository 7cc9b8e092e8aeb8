"""Multinomial mixtures on the finite support of count vectors.

A single observation is a vector of nonnegative counts over `categories`
cells summing to `trials`. The support of the observation distribution is
therefore finite, which is what makes every information quantity in this
package (pmf tables, KL divergences, entropies, exact marginal likelihoods)
computable in closed form by direct summation.

All functions are pure; sampling takes an explicit seed and never touches
global RNG state. Probabilities are handled in log space internally and only
materialized at the API edge.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

SIMPLEX_TOL = 1e-12


class DimensionMismatchError(ValueError):
    """Operands describe different numbers of categories or trials."""


class SimplexError(ValueError):
    """A probability vector is not on the simplex within tolerance."""


class SupportViolationError(ValueError):
    """A distribution puts zero mass where another requires support.

    Attributes:
        offending: the count vector (tuple of ints) at which the violation
            was detected.
    """

    def __init__(self, message: str, offending: tuple[int, ...]):
        super().__init__(message)
        self.offending = offending


class SupportSizeError(OverflowError):
    """The requested support is too large to enumerate."""


# Enumerating more states than this is refused outright; callers that want a
# table must fit in memory anyway, and anything near this bound would not.
_MAX_SUPPORT = 1 << 62


def _validate_prob_vector(values: Iterable[float], what: str) -> tuple[float, ...]:
    """Validate a probability vector; snap 1e-12-scale boundary noise.

    Entries within SIMPLEX_TOL outside [0, 1] are snapped to the boundary
    (callers computing `1 - sum(...)` routinely produce -1e-17). Anything
    worse raises, and the sum is never rescaled: silently renormalizing would
    hide genuinely inconsistent inputs.
    """
    out = []
    for v in values:
        v = float(v)
        if not math.isfinite(v):
            raise SimplexError("%s entries must be finite, got %r" % (what, v))
        if v < 0.0:
            if v < -SIMPLEX_TOL:
                raise SimplexError("%s entry %r is negative" % (what, v))
            v = 0.0
        elif v > 1.0:
            if v > 1.0 + SIMPLEX_TOL:
                raise SimplexError("%s entry %r exceeds 1" % (what, v))
            v = 1.0
        out.append(v)
    total = math.fsum(out)
    if abs(total - 1.0) > SIMPLEX_TOL:
        raise SimplexError(
            "%s sums to %.17g, off by more than %g; refusing to renormalize"
            % (what, total, SIMPLEX_TOL)
        )
    return tuple(out)


@dataclass(frozen=True)
class CountVector:
    """Counts over `categories` cells summing to `trials`."""

    counts: tuple[int, ...]
    trials: int

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "trials", int(self.trials))
        if len(counts) < 2:
            raise ValueError("need at least 2 categories, got %d" % len(counts))
        if any(c < 0 for c in counts):
            raise ValueError("counts must be nonnegative, got %r" % (counts,))
        if sum(counts) != self.trials:
            raise ValueError(
                "counts %r sum to %d, expected trials=%d"
                % (counts, sum(counts), self.trials)
            )

    @classmethod
    def of(cls, counts: Sequence[int]) -> "CountVector":
        counts = tuple(int(c) for c in counts)
        return cls(counts, sum(counts))

    @property
    def categories(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class SimplexVector:
    """A point on the probability simplex (entries in [0,1], summing to 1)."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "probs", _validate_prob_vector(self.probs, "simplex vector")
        )
        if len(self.probs) < 2:
            raise ValueError("simplex vector needs at least 2 entries")

    @property
    def categories(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class MixtureParams:
    """A finite mixture: nonnegative weights summing to 1, one simplex row each."""

    weights: tuple[float, ...]
    components: tuple[SimplexVector, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "weights", _validate_prob_vector(self.weights, "mixture weights")
        )
        comps = tuple(
            c if isinstance(c, SimplexVector) else SimplexVector(tuple(c))
            for c in self.components
        )
        object.__setattr__(self, "components", comps)
        if len(self.weights) != len(comps):
            raise DimensionMismatchError(
                "%d weights but %d components" % (len(self.weights), len(comps))
            )
        if len(comps) < 1:
            raise ValueError("mixture needs at least one component")
        cats = {c.categories for c in comps}
        if len(cats) != 1:
            raise DimensionMismatchError(
                "components disagree on category count: %r" % sorted(cats)
            )

    @classmethod
    def single(cls, component: Sequence[float]) -> "MixtureParams":
        """The one-component mixture (a plain multinomial)."""
        return cls((1.0,), (SimplexVector(tuple(component)),))

    @property
    def num_components(self) -> int:
        return len(self.weights)

    @property
    def categories(self) -> int:
        return self.components[0].categories

    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def component_matrix(self) -> np.ndarray:
        return np.asarray([c.probs for c in self.components], dtype=float)


@dataclass(frozen=True)
class Dataset:
    """An i.i.d. sample of count vectors, with optional generating truth.

    `categories` and `trials` may be omitted when recoverable from the
    observations or the truth; they are mandatory for empty datasets.
    """

    observations: tuple[CountVector, ...]
    truth: MixtureParams | None = None
    seed: int = 0
    categories: int | None = None
    trials: int | None = None

    def __post_init__(self):
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        cats, tri = self.categories, self.trials
        if obs:
            cats = obs[0].categories if cats is None else cats
            tri = obs[0].trials if tri is None else tri
        if cats is None and self.truth is not None:
            cats = self.truth.categories
        if cats is None or tri is None:
            raise ValueError(
                "categories/trials must be given explicitly for an empty dataset"
            )
        object.__setattr__(self, "categories", int(cats))
        object.__setattr__(self, "trials", int(tri))
        for x in obs:
            if x.categories != cats or x.trials != tri:
                raise DimensionMismatchError(
                    "observation %r does not match categories=%d trials=%d"
                    % (x.counts, cats, tri)
                )
        if self.truth is not None and self.truth.categories != cats:
            raise DimensionMismatchError(
                "truth has %d categories, observations have %d"
                % (self.truth.categories, cats)
            )

    @property
    def n(self) -> int:
        return len(self.observations)

    def counts_matrix(self) -> np.ndarray:
        """Observations stacked as an (n, categories) int array."""
        if not self.observations:
            return np.zeros((0, self.categories), dtype=np.int64)
        return np.asarray([x.counts for x in self.observations], dtype=np.int64)

    def append(self, x: CountVector) -> "Dataset":
        """A new dataset with `x` added as observation n+1."""
        if x.categories != self.categories or x.trials != self.trials:
            raise DimensionMismatchError(
                "cannot append %r to a dataset with categories=%d trials=%d"
                % (x.counts, self.categories, self.trials)
            )
        return Dataset(
            self.observations + (x,),
            truth=self.truth,
            seed=self.seed,
            categories=self.categories,
            trials=self.trials,
        )

    def to_json(self) -> str:
        doc: dict = {
            "L": self.categories,
            "M": self.trials,
            "n": self.n,
            "seed": self.seed,
            "observations": [list(x.counts) for x in self.observations],
        }
        if self.truth is not None:
            doc["truth"] = {
                "weights": list(self.truth.weights),
                "components": [list(c.probs) for c in self.truth.components],
            }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        doc = json.loads(text)
        truth = None
        if doc.get("truth") is not None:
            truth = MixtureParams(
                tuple(doc["truth"]["weights"]),
                tuple(SimplexVector(tuple(row)) for row in doc["truth"]["components"]),
            )
        obs = tuple(CountVector(tuple(row), doc["M"]) for row in doc["observations"])
        if len(obs) != doc["n"]:
            raise ValueError(
                "dataset lists n=%d but has %d observations" % (doc["n"], len(obs))
            )
        return cls(
            obs,
            truth=truth,
            seed=int(doc.get("seed", 0)),
            categories=int(doc["L"]),
            trials=int(doc["M"]),
        )


def support_size(categories: int, trials: int) -> int:
    """Number of count vectors over `categories` cells summing to `trials`."""
    if categories < 2:
        raise ValueError("categories must be >= 2, got %d" % categories)
    if trials < 0:
        raise ValueError("trials must be >= 0, got %d" % trials)
    return math.comb(trials + categories - 1, categories - 1)


@lru_cache(maxsize=None)
def _support_tuples(categories: int, trials: int) -> tuple[tuple[int, ...], ...]:
    if categories == 1:
        return ((trials,),)
    out = []
    for last in range(trials + 1):
        for head in _support_tuples(categories - 1, trials - last):
            out.append(head + (last,))
    return tuple(out)


def enumerate_support(categories: int, trials: int) -> tuple[CountVector, ...]:
    """All count vectors, in colexicographic order (last cell varies slowest).

    The order is the canonical one used by every tabulating function in this
    package, so per-x outputs from different runs line up index by index.
    """
    size = support_size(categories, trials)
    if size > _MAX_SUPPORT:
        raise SupportSizeError(
            "support has %d states, refusing to enumerate more than %d"
            % (size, _MAX_SUPPORT)
        )
    return tuple(CountVector(t, trials) for t in _support_tuples(categories, trials))


@lru_cache(maxsize=None)
def support_array(categories: int, trials: int) -> np.ndarray:
    """Support as an (size, categories) int array in canonical order."""
    pts = enumerate_support(categories, trials)
    arr = np.asarray([x.counts for x in pts], dtype=np.int64)
    arr.setflags(write=False)
    return arr


def support_labels(categories: int, trials: int) -> list[str]:
    """CSV-safe column labels, one per support point, in canonical order."""
    return [
        "x_" + "_".join(str(c) for c in x.counts)
        for x in enumerate_support(categories, trials)
    ]


def log_multinomial_coeff(x: CountVector) -> float:
    """log( trials! / prod(counts!) )."""
    total = math.lgamma(x.trials + 1)
    for c in x.counts:
        total -= math.lgamma(c + 1)
    return total


def multinomial_log_pmf(component: SimplexVector, x: CountVector) -> float:
    """Log-pmf of a single multinomial; -inf iff some zero cell has a count.

    Zero counts contribute nothing regardless of the cell probability
    (0*log 0 = 0 by the usual convention).
    """
    if component.categories != x.categories:
        raise DimensionMismatchError(
            "component has %d categories, count vector has %d"
            % (component.categories, x.categories)
        )
    total = log_multinomial_coeff(x)
    for c, b in zip(x.counts, component.probs):
        if c == 0:
            continue
        if b == 0.0:
            return -math.inf
        total += c * math.log(b)
    return total


def mixture_log_pmf(mixture: MixtureParams, x: CountVector) -> float:
    """Log-pmf of a mixture via log-sum-exp over nonzero-weight components."""
    terms = []
    for w, comp in zip(mixture.weights, mixture.components):
        if w == 0.0:
            continue
        lp = multinomial_log_pmf(comp, x)
        if lp > -math.inf:
            terms.append(math.log(w) + lp)
    if not terms:
        return -math.inf
    m = max(terms)
    return m + math.log(math.fsum(math.exp(t - m) for t in terms))


def mixture_pmf(mixture: MixtureParams, x: CountVector) -> float:
    return math.exp(mixture_log_pmf(mixture, x))


def log_pmf_table(mixture: MixtureParams, trials: int) -> np.ndarray:
    """Mixture log-pmf over the whole support in canonical order.

    Vectorized equivalent of `mixture_log_pmf` row by row; entries are -inf
    exactly where the mixture has no support.
    """
    sup = support_array(mixture.categories, trials)
    coeff = gammaln(trials + 1) - gammaln(sup + 1).sum(axis=1)
    comp = mixture.component_matrix()
    weights = mixture.weight_array()
    scores = np.full((sup.shape[0], len(weights)), -np.inf)
    for h in range(len(weights)):
        if weights[h] == 0.0:
            continue
        pos = comp[h] > 0.0
        s = sup[:, pos].astype(float) @ np.log(comp[h, pos])
        bad = sup[:, ~pos].sum(axis=1) > 0
        s[bad] = -np.inf
        scores[:, h] = math.log(weights[h]) + s
    with np.errstate(divide="ignore"):
        out = coeff + logsumexp(scores, axis=1)
    return out


def pmf_table(mixture: MixtureParams, trials: int) -> np.ndarray:
    """Mixture pmf over the whole support in canonical order; sums to 1."""
    return np.exp(log_pmf_table(mixture, trials))


def sample_dataset(
    truth: MixtureParams, n: int, seed: int, *, trials: int
) -> Dataset:
    """Draw n i.i.d. count vectors from `truth` with `trials` draws each.

    Deterministic in (truth, n, seed, trials). The component label for each
    observation is drawn first, then its counts, in observation order.
    """
    if n < 0:
        raise ValueError("n must be >= 0, got %d" % n)
    if trials < 1:
        raise ValueError("trials must be >= 1, got %d" % trials)
    rng = np.random.default_rng(seed)
    comp = truth.component_matrix()
    weights = truth.weight_array()
    obs = []
    for _ in range(n):
        h = int(rng.choice(len(weights), p=weights))
        counts = rng.multinomial(trials, comp[h])
        obs.append(CountVector(tuple(int(c) for c in counts), trials))
    return Dataset(
        tuple(obs), truth=truth, seed=seed, categories=truth.categories, trials=trials
    )


def _check_same_shape(q: MixtureParams, p: MixtureParams) -> None:
    if q.categories != p.categories:
        raise DimensionMismatchError(
            "distributions have %d and %d categories" % (q.categories, p.categories)
        )


def kl_divergence(q: MixtureParams, p: MixtureParams, *, trials: int) -> float:
    """KL(q || p) summed over the finite support.

    Raises SupportViolationError (carrying the offending count vector) if q
    puts mass where p has none; the divergence is +inf there and that is
    almost always a modeling bug rather than an answer.
    """
    _check_same_shape(q, p)
    lq = log_pmf_table(q, trials)
    lp = log_pmf_table(p, trials)
    sup = enumerate_support(q.categories, trials)
    total = 0.0
    for i in range(len(sup)):
        if lq[i] == -np.inf:
            continue
        if lp[i] == -np.inf:
            raise SupportViolationError(
                "q has mass %g at %r but p has none"
                % (math.exp(lq[i]), sup[i].counts),
                sup[i].counts,
            )
        total += math.exp(lq[i]) * (lq[i] - lp[i])
    # Exact zero for identical inputs; tiny negatives are float round-off.
    return max(total, 0.0)


def entropy(q: MixtureParams, *, trials: int) -> float:
    """Shannon entropy of the mixture over the count support, in nats."""
    lq = log_pmf_table(q, trials)
    mask = lq > -np.inf
    return float(-(np.exp(lq[mask]) * lq[mask]).sum())


def empirical_entropy(q: MixtureParams, data: Dataset) -> float:
    """Empirical entropy -mean_i log q(X_i) of a dataset under q."""
    if data.n < 1:
        raise ValueError("empirical entropy needs at least one observation")
    if q.categories != data.categories:
        raise DimensionMismatchError(
            "q has %d categories, dataset has %d" % (q.categories, data.categories)
        )
    total = 0.0
    for x in data.observations:
        lp = mixture_log_pmf(q, x)
        if lp == -math.inf:
            raise SupportViolationError(
                "observation %r has probability zero under q" % (x.counts,), x.counts
            )
        total += lp
    return -total / data.n
