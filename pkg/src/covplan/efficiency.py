"""Closed-form efficiency trade-off between explained variance and degrees of freedom.

Adjusting a trial analysis for p covariates multiplies the expected sampling
variance of the treatment effect by

    RE_p = (n - g - 1) / (n - p - g - 1) * (1 - nu_p)

relative to the unadjusted estimator, where nu_p is the share of residual
outcome variance the covariates explain.  RE below one means the adjustment
helps.  A composite covariate built from the same p inputs pays the degrees-
of-freedom price of a single covariate, which is what the region classifier
trades off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# Estimator labels used in orderings and region maps.
UNADJUSTED = "unadjusted"
COVARIATES = "covariates"
COMPOSITE = "composite"

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class DesignParams:
    """Planning inputs: trial size, group count, covariate count, explained variance."""

    n: int
    g: int = 2
    p: int = 0
    nu_p: float = 0.0
    nu_w: float | None = None

    def __post_init__(self):
        if self.g < 2:
            raise DomainError(f"g must be >= 2, got {self.g}")
        if self.p < 0:
            raise DomainError(f"p must be >= 0, got {self.p}")
        if not 0.0 <= self.nu_p < 1.0:
            raise DomainError(f"nu_p must lie in [0, 1), got {self.nu_p}")
        if self.n - self.p - self.g - 1 < 1:
            raise DomainError(
                f"need n - p - g - 1 >= 1, got {self.n - self.p - self.g - 1}"
            )
        if self.nu_w is not None:
            if not 0.0 <= self.nu_w < 1.0:
                raise DomainError(f"nu_w must lie in [0, 1), got {self.nu_w}")
            if self.nu_w > self.nu_p:
                raise DomainError(
                    f"nu_w = {self.nu_w} exceeds nu_p = {self.nu_p}; a linear "
                    "composite cannot explain more than its inputs"
                )


@dataclass(frozen=True)
class EfficiencyReport:
    """Relative efficiencies and the efficiency ordering for one design point.

    ``ordering`` groups estimator labels from most to least efficient; labels
    inside one group are ties.
    """

    re_p: float
    re_w: float | None
    max_p: int
    threshold_nu: float
    ordering: tuple[tuple[str, ...], ...]

    def ordering_text(self) -> str:
        return " > ".join(" = ".join(group) for group in self.ordering)


def expected_inverse_one_minus_r2(n: int, p: int, g: int = 2) -> float:
    """Mean of 1/(1 - R^2) for the regression of the group indicator on p normal covariates.

    R^2 follows Beta(p/2, (n - p - g + 1)/2), which integrates to
    (n - g - 1) / (n - p - g - 1); p = 0 gives 1.
    """
    if p < 0:
        raise DomainError(f"p must be >= 0, got {p}")
    if n - p - g - 1 < 1:
        raise DomainError(f"need n - p - g - 1 >= 1, got {n - p - g - 1}")
    if p == 0:
        return 1.0
    return (n - g - 1) / (n - p - g - 1)


def relative_efficiency(n: int, g: int, p, nu_p: float) -> float:
    """Expected variance ratio of the p-covariate estimator to the unadjusted one.

    RE_p = (n - g - 1) / (n - p - g - 1) * (1 - nu_p); values below one mean
    the covariates improve precision.  p may be fractional for boundary work.
    """
    if p < 0:
        raise DomainError(f"p must be >= 0, got {p}")
    if not 0.0 <= nu_p < 1.0:
        raise DomainError(f"nu_p must lie in [0, 1), got {nu_p}")
    denom = n - p - g - 1
    if denom < 1:
        raise DomainError(f"need n - p - g - 1 >= 1, got {denom}")
    return (n - g - 1) / denom * (1.0 - nu_p)


def max_beneficial_covariates(n: int, g: int, nu_p: float) -> int:
    """Largest p that still improves precision when p covariates explain nu_p.

    Benefit requires p < (n - g - 1) * nu_p strictly; equality is a wash and
    is excluded.  Returns 0 when no covariate count helps.
    """
    if not 0.0 <= nu_p < 1.0:
        raise DomainError(f"nu_p must lie in [0, 1), got {nu_p}")
    bound = (n - g - 1) * nu_p
    return max(0, math.ceil(bound) - 1)


def min_nu_for_benefit(n: int, g: int, p: int) -> float:
    """Smallest explained-variance share at which p covariates pay for themselves.

    Returns p / (n - g - 1); a value >= 1 signals that no achievable nu
    suffices for that p.
    """
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if n - g - 1 < 1:
        raise DomainError(f"need n - g - 1 >= 1, got {n - g - 1}")
    return p / (n - g - 1)


def screening_correlation(n: int, g: int = 2) -> float:
    """Per-covariate outcome correlation worth including, sqrt(1 / (n - g - 1))."""
    if n - g - 1 < 1:
        raise DomainError(f"need n - g - 1 >= 1, got {n - g - 1}")
    return math.sqrt(1.0 / (n - g - 1))


def composite_benefit_threshold(n: int, p, nu_p: float) -> float:
    """Explained variance a composite must beat to outperform its p inputs (two groups).

    Returns 1 - (n - 4) / (n - p - 3) * (1 - nu_p); the composite wins when
    nu_w strictly exceeds this.  At p = 1 the threshold is nu_p itself.
    """
    if n < 5:
        raise DomainError(f"need n >= 5, got {n}")
    if n - p - 3 < 1:
        raise DomainError(f"need n - p - 3 >= 1, got {n - p - 3}")
    if not 0.0 <= nu_p < 1.0:
        raise DomainError(f"nu_p must lie in [0, 1), got {nu_p}")
    return 1.0 - (n - 4) / (n - p - 3) * (1.0 - nu_p)


def triple_point(n: int, nu_p: float) -> tuple[float, float]:
    """Point where all three pairwise-efficiency boundaries meet (two groups).

    The composite-vs-none line nu_w = 1/(n-3), the composite-vs-covariates
    curve, and the covariates-vs-none line p = nu_p (n-3) intersect at
    (p, nu_w) = (nu_p (n - 3), 1 / (n - 3)).
    """
    if n < 5:
        raise DomainError(f"need n >= 5, got {n}")
    if not 0.0 < nu_p < 1.0:
        raise DomainError(f"nu_p must lie in (0, 1), got {nu_p}")
    return nu_p * (n - 3), 1.0 / (n - 3)


def _rank_with_ties(labelled: list[tuple[str, float]]) -> tuple[tuple[str, ...], ...]:
    labelled = sorted(labelled, key=lambda item: item[1])
    groups: list[list[str]] = []
    last = None
    for label, value in labelled:
        scale = max(1.0, abs(value), abs(last) if last is not None else 0.0)
        if groups and last is not None and abs(value - last) <= _TIE_TOL * scale:
            groups[-1].append(label)
        else:
            groups.append([label])
        last = value
    return tuple(tuple(sorted(group)) for group in groups)


def classify_region(params: DesignParams) -> EfficiencyReport:
    """Order the unadjusted, p-covariate, and composite estimators by efficiency.

    Works on population quantities: RE of the p covariates uses nu_p, the
    composite is treated as a single covariate explaining nu_w.  Ties (within
    1e-12 relative) are reported as equalities rather than broken arbitrarily.
    """
    if params.nu_w is None:
        raise DomainError("classify_region requires nu_w")
    if params.p < 1:
        raise DomainError("classify_region requires p >= 1")
    n, g = params.n, params.g

    re_p = relative_efficiency(n, g, params.p, params.nu_p)
    re_w = relative_efficiency(n, g, 1, params.nu_w)
    ordering = _rank_with_ties(
        [(UNADJUSTED, 1.0), (COVARIATES, re_p), (COMPOSITE, re_w)]
    )
    return EfficiencyReport(
        re_p=re_p,
        re_w=re_w,
        max_p=max_beneficial_covariates(n, g, params.nu_p),
        threshold_nu=min_nu_for_benefit(n, g, params.p),
        ordering=ordering,
    )
