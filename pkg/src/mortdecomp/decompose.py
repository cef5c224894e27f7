"""Decomposition of the between-survey change in average mortality risk.

The survey-1 minus survey-2 difference in fitted average risk splits
exactly into a covariate-distribution part (swap the sample while
holding survey 1's coefficients) and a coefficient part (hold survey
2's sample while swapping coefficients).  The coefficient part further
telescopes into per-covariate contributions by swapping one coefficient
block at a time, in a caller-chosen order; spline columns of a
covariate always swap together.  Running the decomposition on every
retained posterior draw turns those point identities into posterior
distributions for every component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .dataset import DesignMatrix
from .errors import ConfigError
from .marginal import MortalitySummary, marginalize_all

__all__ = [
    "DecompositionDraw",
    "DecompositionDraws",
    "ComponentSummary",
    "DecompositionSummary",
    "overall_decompose",
    "coefficient_decompose",
    "decompose_draw",
    "posterior_decompose",
    "annualize",
    "percent_of",
]

_ADDITIVITY_TOL = 1e-12


def _link_fn(link):
    if callable(link):
        return link
    if link == "probit":
        return ndtr
    if link == "identity":
        return lambda v: v
    raise ConfigError(f"unknown link {link!r}")


def _coefficients(b) -> np.ndarray:
    return np.asarray(getattr(b, "coefficients", b), dtype=float)


def _check_alignment(design1: DesignMatrix, design2: DesignMatrix) -> None:
    if design1.n_cols != design2.n_cols or design1.column_groups != design2.column_groups:
        raise ConfigError(
            "designs do not share a column layout; both surveys must be built "
            "against the same schema and knot source"
        )


def validate_order(order, column_groups) -> list[str]:
    wanted = ["intercept"] + list(column_groups)
    if order is None:
        return wanted
    order = list(order)
    if sorted(order) != sorted(wanted):
        raise ConfigError(
            f"order must be a permutation of {sorted(wanted)}, got {order}"
        )
    return order


def overall_decompose(design1, design2, b1, b2, link="probit") -> tuple[float, float]:
    """Two-part split of the survey-1 minus survey-2 fitted mean.

    Returns ``(x_effect, beta_effect)`` where the first term is the
    change from swapping the covariate sample under survey 1's
    coefficients and the second is the change from swapping the
    coefficients over survey 2's sample.  The two terms add up to the
    overall difference exactly.
    """
    _check_alignment(design1, design2)
    f = _link_fn(link)
    b1 = _coefficients(b1)
    b2 = _coefficients(b2)
    rate1 = float(np.mean(f(design1.x @ b1)))
    crossed = float(np.mean(f(design2.x @ b1)))
    rate2 = float(np.mean(f(design2.x @ b2)))
    return rate1 - crossed, crossed - rate2


def coefficient_decompose(design2, b1, b2, order=None, link="probit") -> dict[str, float]:
    """Sequential per-covariate split of the coefficient effect.

    Walks from survey 1's coefficients to survey 2's over survey 2's
    sample, swapping one whole column group at a time in ``order`` (a
    permutation of the intercept plus every covariate group); each entry
    is the drop in the fitted mean caused by that swap.  The entries sum
    to the overall coefficient effect; the split, but not the sum,
    depends on the order.
    """
    order = validate_order(order, design2.column_groups)
    f = _link_fn(link)
    b1 = _coefficients(b1)
    b2 = _coefficients(b2)
    eta = design2.x @ b1
    prev_mean = float(np.mean(f(eta)))
    effects: dict[str, float] = {}
    for name in order:
        cols = design2.group_columns(name)
        delta = b2[cols] - b1[cols]
        if np.any(delta != 0.0):
            eta = eta + design2.x[:, cols] @ delta
            new_mean = float(np.mean(f(eta)))
        else:
            new_mean = prev_mean
        effects[name] = prev_mean - new_mean
        prev_mean = new_mean
    return effects


@dataclass(frozen=True)
class DecompositionDraw:
    """All components of the decomposition for one coefficient pair.

    Construction enforces the two additivity identities: the covariate
    and coefficient effects sum to the overall difference, and the group
    effects sum to the coefficient effect, both to 1e-12.
    """

    rate1: float
    rate2: float
    x_effect: float
    beta_effect: float
    group_effects: dict[str, float]
    order: tuple[str, ...]

    def __post_init__(self):
        if abs(self.x_effect + self.beta_effect - self.overall_diff) > _ADDITIVITY_TOL:
            raise ValueError("x_effect + beta_effect must equal the overall difference")
        if abs(sum(self.group_effects.values()) - self.beta_effect) > _ADDITIVITY_TOL:
            raise ValueError("group effects must sum to the beta effect")

    @property
    def overall_diff(self) -> float:
        return self.rate1 - self.rate2


def decompose_draw(design1, design2, b1, b2, order=None, link="probit") -> DecompositionDraw:
    """Overall and per-group decomposition for one coefficient pair."""
    _check_alignment(design1, design2)
    order = validate_order(order, design2.column_groups)
    f = _link_fn(link)
    b1 = _coefficients(b1)
    b2 = _coefficients(b2)
    rate1 = float(np.mean(f(design1.x @ b1)))
    crossed = float(np.mean(f(design2.x @ b1)))
    rate2 = float(np.mean(f(design2.x @ b2)))
    x_effect = rate1 - crossed
    beta_effect = crossed - rate2
    effects = coefficient_decompose(design2, b1, b2, order, link)
    return DecompositionDraw(
        rate1=rate1,
        rate2=rate2,
        x_effect=x_effect,
        beta_effect=beta_effect,
        group_effects=effects,
        order=tuple(order),
    )


@dataclass(frozen=True)
class DecompositionDraws:
    """Per-draw component arrays, one entry per retained posterior draw."""

    rate1: np.ndarray
    rate2: np.ndarray
    x_effect: np.ndarray
    beta_effect: np.ndarray
    group_effects: np.ndarray  # (L, K) in order
    order: tuple[str, ...]

    @property
    def overall_diff(self) -> np.ndarray:
        return self.rate1 - self.rate2

    @property
    def n_draws(self) -> int:
        return self.rate1.size


@dataclass(frozen=True)
class ComponentSummary:
    """Posterior summary of one decomposition component.

    Values are in probability units; ``annualized`` entries are per
    1000 births per year between the surveys.  ``percent`` is the ratio
    of posterior means against the overall difference, and the percent
    interval comes from the per-draw ratios.
    """

    name: str
    mean: float
    lower: float
    upper: float
    annualized: float
    annualized_lower: float
    annualized_upper: float
    percent: float
    percent_lower: float
    percent_upper: float
    significant: bool


@dataclass(frozen=True)
class DecompositionSummary:
    """Posterior summaries for the overall and per-covariate decomposition."""

    years_between: float
    order: tuple[str, ...]
    components: dict[str, ComponentSummary]
    rate_s1: MortalitySummary
    rate_s2: MortalitySummary
    convention: str = "appendix_divide"
    draws: DecompositionDraws | None = field(default=None, repr=False, compare=False)

    def component_names(self) -> list[str]:
        return list(self.components)


def annualize(total_per_1000: float, years_between: float) -> float:
    """Spread a total per-1000 change over the years between surveys."""
    if years_between <= 0:
        raise ConfigError(f"years_between must be > 0, got {years_between}")
    return total_per_1000 / years_between


def percent_of(component: float, overall: float) -> float:
    """Share of the overall change attributed to one component, in percent."""
    if overall == 0:
        return float("nan")
    return 100.0 * component / overall


def _summarize(
    name: str, values: np.ndarray, overall: np.ndarray, years_between: float
) -> ComponentSummary:
    lo, hi = np.percentile(values, [2.5, 97.5])
    scale = 1000.0 / years_between
    overall_mean = float(overall.mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(overall != 0.0, 100.0 * values / overall, np.nan)
    if np.any(np.isnan(ratios)):
        p_lo, p_hi = float("nan"), float("nan")
    else:
        p_lo, p_hi = np.percentile(ratios, [2.5, 97.5])
    return ComponentSummary(
        name=name,
        mean=float(values.mean()),
        lower=float(lo),
        upper=float(hi),
        annualized=float(values.mean() * scale),
        annualized_lower=float(lo * scale),
        annualized_upper=float(hi * scale),
        percent=percent_of(float(values.mean()), overall_mean),
        percent_lower=float(p_lo),
        percent_upper=float(p_hi),
        significant=bool(lo > 0.0 or hi < 0.0),
    )


def posterior_decompose(
    design1,
    design2,
    draws1,
    draws2,
    years_between: float,
    order=None,
    convention: str = "appendix_divide",
    link="probit",
) -> DecompositionSummary:
    """Run the full decomposition on every paired posterior draw.

    Draw ``l`` of survey 1 is paired with draw ``l`` of survey 2; each
    pair is marginalized (cluster effects integrated out) and
    decomposed, and every component is summarized by its posterior
    mean, 95% equal-tailed interval, annualized per-1000 value, percent
    of the overall change, and a significance flag (interval excludes
    zero).
    """
    _check_alignment(design1, design2)
    if draws1.n_draws != draws2.n_draws:
        raise ConfigError(
            f"surveys have unequal retained draw counts ({draws1.n_draws} vs {draws2.n_draws})"
        )
    if years_between <= 0:
        raise ConfigError(f"years_between must be > 0, got {years_between}")
    order = validate_order(order, design2.column_groups)

    tilde1 = marginalize_all(draws1.beta, draws1.sigma2, convention)
    tilde2 = marginalize_all(draws2.beta, draws2.sigma2, convention)

    n_draws = tilde1.shape[0]
    k = len(order)
    rate1 = np.empty(n_draws)
    rate2 = np.empty(n_draws)
    x_eff = np.empty(n_draws)
    beta_eff = np.empty(n_draws)
    groups = np.empty((n_draws, k))
    for i in range(n_draws):
        d = decompose_draw(design1, design2, tilde1[i], tilde2[i], order, link)
        rate1[i] = d.rate1
        rate2[i] = d.rate2
        x_eff[i] = d.x_effect
        beta_eff[i] = d.beta_effect
        groups[i] = [d.group_effects[name] for name in order]

    per_draw = DecompositionDraws(
        rate1=rate1,
        rate2=rate2,
        x_effect=x_eff,
        beta_effect=beta_eff,
        group_effects=groups,
        order=tuple(order),
    )
    overall = per_draw.overall_diff
    components = {
        "overall_diff": _summarize("overall_diff", overall, overall, years_between),
        "x_effect": _summarize("x_effect", x_eff, overall, years_between),
        "beta_effect": _summarize("beta_effect", beta_eff, overall, years_between),
    }
    for j, name in enumerate(order):
        components[name] = _summarize(name, groups[:, j], overall, years_between)

    return DecompositionSummary(
        years_between=float(years_between),
        order=tuple(order),
        components=components,
        rate_s1=MortalitySummary.from_draws(rate1),
        rate_s2=MortalitySummary.from_draws(rate2),
        convention=convention,
        draws=per_draw,
    )
