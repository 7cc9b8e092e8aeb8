"""Closed-form learning coefficients and the asymptotic laws they drive.

The learning coefficient (real log canonical threshold) lambda and its
multiplicity m control the leading corrections to Bayesian free energy and
generalization error:

    E[F_n] = n*S + lambda*log(n) - (m-1)*log(log(n)) + O(1)
    E[G_n] = lambda/n - (m-1)/(n*log(n)) + o(1/(n*log(n)))

This module evaluates lambda and m exactly for the model families where a
closed form is known, and turns them into finite-n predictions. Everything
here is arithmetic on rationals or floats; no sampling, no arrays.

Equality decisions that select a multiplicity branch (for example "is the
mixing hyperparameter exactly at the critical value") are made exactly when
the hyperparameters are given as int or Fraction, and with a relative
tolerance of 1e-9 when given as float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

REL_TOL = 1e-9

BOUNDED = "bounded_positive"
DIRICHLET = "dirichlet"

Real = "int | float | Fraction"


class RlctSource(str, Enum):
    """Which closed-form result produced a report."""

    TWO_COMPONENT_BOUNDED = "two_component_bounded"
    TWO_COMPONENT_DIRICHLET = "two_component_dirichlet"
    MATSUDA = "matsuda"
    BINOMIAL_BOUND = "binomial_bound"
    REGULAR = "regular"


def _as_fraction(x) -> Fraction | None:
    """Exact rational view of x, or None when x is an inexact float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return None


def _positive_real(x, what: str) -> None:
    if not (float(x) > 0.0) or not math.isfinite(float(x)):
        raise ValueError("%s must be a positive finite real, got %r" % (what, x))


def _same(x, target: Fraction) -> bool:
    """Is x equal to the rational target, exactly or within REL_TOL?"""
    fx = _as_fraction(x)
    if fx is not None:
        return fx == target
    return math.isclose(float(x), float(target), rel_tol=REL_TOL, abs_tol=0.0)


@dataclass(frozen=True)
class PriorSpec:
    """Prior regime for the mixing weight of a two-component mixture.

    kind: BOUNDED ("bounded_positive") for any prior bounded above and below
        away from zero, or DIRICHLET with hyperparameter `alpha`.
    alpha: mixing-weight hyperparameter; used iff kind is DIRICHLET. Pass an
        int or Fraction to get exact critical-value comparisons.
    """

    kind: str
    alpha: "int | float | Fraction | None" = None

    def __post_init__(self):
        if self.kind not in (BOUNDED, DIRICHLET):
            raise ValueError(
                "kind must be %r or %r, got %r" % (BOUNDED, DIRICHLET, self.kind)
            )
        if self.kind == DIRICHLET:
            if self.alpha is None:
                raise ValueError("dirichlet prior needs alpha")
            _positive_real(self.alpha, "alpha")

    @classmethod
    def bounded(cls) -> "PriorSpec":
        return cls(BOUNDED)

    @classmethod
    def dirichlet(cls, alpha) -> "PriorSpec":
        return cls(DIRICHLET, alpha)


@dataclass(frozen=True)
class RlctReport:
    """A learning coefficient with its multiplicity and provenance.

    lam: the learning coefficient (or its upper bound when is_exact=False).
    multiplicity: pole order m, in {1, 2, 3}.
    source: which closed form produced the value.
    is_exact: False only when the value is an upper bound.
    """

    lam: float
    multiplicity: int
    source: RlctSource
    is_exact: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError("lam must be positive and finite, got %r" % self.lam)
        if self.multiplicity not in (1, 2, 3):
            raise ValueError(
                "multiplicity must be in {1,2,3}, got %r" % self.multiplicity
            )

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "multiplicity": self.multiplicity,
            "source": self.source.value,
            "is_exact": self.is_exact,
        }


def rlct_two_component(categories: int, prior: PriorSpec) -> RlctReport:
    """Exact learning coefficient of a two-component multinomial mixture.

    Model: p(x|w) = a*Mul(x|b1) + (1-a)*Mul(x|b2) over `categories` cells,
    truth a single multinomial with all cell probabilities nonzero, component
    priors positive and bounded. With a bounded mixing prior,

        lambda = (L-1)/2 + min(1/2, (L-1)/4),   m = 2 iff L = 3,

    and with a Dirichlet(alpha) mixing prior,

        lambda = (L-1)/2 + min(alpha/2, (L-1)/4),   m = 2 iff alpha = (L-1)/2,

    where L is the number of categories. Both are exact values, not bounds.
    """
    if categories < 2:
        raise ValueError("categories must be >= 2, got %d" % categories)
    half = Fraction(categories - 1, 2)
    quarter = Fraction(categories - 1, 4)
    if prior.kind == BOUNDED:
        lam = half + min(Fraction(1, 2), quarter)
        mult = 2 if categories == 3 else 1
        return RlctReport(float(lam), mult, RlctSource.TWO_COMPONENT_BOUNDED)
    alpha = prior.alpha
    fa = _as_fraction(alpha)
    if fa is not None:
        lam = float(half + min(fa / 2, quarter))
    else:
        lam = float(half) + min(float(alpha) / 2.0, float(quarter))
    mult = 2 if _same(alpha, half) else 1
    return RlctReport(lam, mult, RlctSource.TWO_COMPONENT_DIRICHLET)


def rlct_matsuda() -> RlctReport:
    """The classical two-component trinomial value, for cross-checking.

    Matsuda's weighted-blow-up computation gives lambda = 3/2 for a trinomial
    mixture with two components and interior truth; the multiplicity of that
    case is 2. `rlct_two_component(3, bounded)` must reproduce it exactly.
    """
    return RlctReport(1.5, 2, RlctSource.MATSUDA)


@dataclass(frozen=True)
class BinomialMixtureSpec:
    """A mixture of products of Bernoulli cells, for the free-energy bound.

    The model mixes `model_components` products of `trials` independent
    Bernoulli variables; the truth has `true_components` such products, of
    which `probabilistic_components` have all their cell probabilities
    strictly inside (0,1) and `deterministic_components` emit a fixed binary
    vector (all cell probabilities 0 or 1). The prior is Dirichlet(alpha) on
    the mixing weights and Beta(beta, beta) on every cell probability.
    """

    trials: int
    model_components: int
    true_components: int
    probabilistic_components: int
    deterministic_components: int
    alpha: "int | float | Fraction"
    beta: "int | float | Fraction"

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("trials must be >= 2, got %d" % self.trials)
        if not (self.model_components >= self.true_components >= 1):
            raise ValueError(
                "need model_components >= true_components >= 1, got %d and %d"
                % (self.model_components, self.true_components)
            )
        if self.probabilistic_components < 0 or self.deterministic_components < 0:
            raise ValueError("component counts must be nonnegative")
        if (
            self.probabilistic_components + self.deterministic_components
            != self.true_components
        ):
            raise ValueError(
                "probabilistic (%d) + deterministic (%d) components must equal "
                "true_components (%d)"
                % (
                    self.probabilistic_components,
                    self.deterministic_components,
                    self.true_components,
                )
            )
        _positive_real(self.alpha, "alpha")
        _positive_real(self.beta, "beta")


def rlct_binomial_bound(spec: BinomialMixtureSpec) -> RlctReport:
    """Free-energy slope bound for Bernoulli-product mixtures.

    Returns mu and its multiplicity with
    F_n <= n*S + mu*log(n) - (m-1)*log(log(n)) + o(log log n). The bound is
    the exact learning coefficient precisely when the model has one more
    component than the truth (is_exact reflects that).
    """
    M = spec.trials
    H, H0 = spec.model_components, spec.true_components
    H1, H2 = spec.probabilistic_components, spec.deterministic_components
    alpha, beta = spec.alpha, spec.beta
    fa, fb = _as_fraction(alpha), _as_fraction(beta)
    exact_inputs = fa is not None and fb is not None

    if exact_inputs:
        base = Fraction(H0 - 1 + H1 * M, 2) + Fraction(H2 * M, 2) * fb
        if M >= 3:
            competing = min(Fraction(M, 2), Fraction(M, 2) * fb)
        else:
            competing = min(Fraction(1), fb)
        mu = float(base + Fraction(H - H0, 2) * min(fa, competing))
        at_competing = fa == competing
        above_competing = fa > competing
    else:
        alpha_f, beta_f = float(alpha), float(beta)
        base = (H0 - 1 + H1 * M + H2 * M * beta_f) / 2.0
        if M >= 3:
            competing = min(M / 2.0, beta_f * M / 2.0)
        else:
            competing = min(1.0, beta_f)
        mu = base + (H - H0) / 2.0 * min(alpha_f, competing)
        at_competing = math.isclose(alpha_f, competing, rel_tol=REL_TOL, abs_tol=0.0)
        above_competing = not at_competing and alpha_f > competing

    if M >= 3:
        mult = 2 if at_competing else 1
    else:
        if at_competing:
            mult = 3
        elif above_competing:
            mult = 2
        else:
            mult = 1
    return RlctReport(
        mu, mult, RlctSource.BINOMIAL_BOUND, is_exact=(H == H0 + 1)
    )


def rlct_regular(dimension: int) -> RlctReport:
    """Learning coefficient of a regular (identifiable, positive-Fisher) model.

    lambda = dimension/2 with multiplicity 1; the classical BIC penalty rate.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1, got %d" % dimension)
    return RlctReport(dimension / 2.0, 1, RlctSource.REGULAR)


def predict_free_energy(report: RlctReport, n: int, entropy: float) -> float:
    """Asymptotic mean free energy n*S + lam*log n - (m-1)*loglog n.

    Requires n >= 3 so that log(log(n)) is positive and the expansion is
    meaningful at all.
    """
    if n < 3:
        raise ValueError("free energy expansion needs n >= 3, got %d" % n)
    if not math.isfinite(entropy):
        raise ValueError("entropy must be finite, got %r" % entropy)
    return (
        n * entropy
        + report.lam * math.log(n)
        - (report.multiplicity - 1) * math.log(math.log(n))
    )


def predict_gen_error(report: RlctReport, n: int) -> float:
    """Asymptotic mean generalization error lam/n - (m-1)/(n*log n)."""
    if n < 3:
        raise ValueError("generalization expansion needs n >= 3, got %d" % n)
    return report.lam / n - (report.multiplicity - 1) / (n * math.log(n))


def phase_transition_alpha(categories: int):
    """Critical mixing hyperparameter (L-1)/2 where the free energy kinks."""
    if categories < 2:
        raise ValueError("categories must be >= 2, got %d" % categories)
    return Fraction(categories - 1, 2)


def free_energy_regime(alpha, categories: int, n: int, entropy: float) -> float:
    """Free-energy asymptote as a function of the mixing hyperparameter.

    Below the critical alpha the log-n coefficient grows with alpha; at the
    critical value a -log(log n) correction appears; above it the coefficient
    saturates at 3(L-1)/4. All three regimes are the Dirichlet-prior learning
    coefficient and multiplicity evaluated at alpha, so this is a convenience
    wrapper kept for the regime-by-regime reading of the same law.
    """
    _positive_real(alpha, "alpha")
    report = rlct_two_component(categories, PriorSpec.dirichlet(alpha))
    return predict_free_energy(report, n, entropy)
