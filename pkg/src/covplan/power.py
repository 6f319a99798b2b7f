"""Exact power for two-group trials, with and without covariate adjustment.

Unadjusted power is the classical noncentral-t computation.  With p random
covariates the achieved precision depends on the sample R^2 between the
treatment indicator and the covariates, which follows Beta(p/2, (n-p-g+1)/2);
expected power integrates the conditional noncentral-t power over that law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize, special, stats

from .errors import DomainError, NonConvergence

_QUAD_TOL = 1e-7
_QUAD_MAX_ORDER = 4096
_ROOT_TOL = 1e-9


def _balanced_allocation(n: int, g: int) -> tuple[int, ...]:
    base, extra = divmod(n, g)
    return tuple(base + (1 if j < extra else 0) for j in range(g))


@dataclass(frozen=True)
class PowerSpec:
    """Inputs for a power computation.

    ``per_group`` defaults to a balanced allocation of n across g groups.
    ``nu`` is the population share of residual variance the adjustment
    explains (nu_p for p covariates, nu_w for a composite).
    """

    n: int
    gamma: float
    sigma_u: float = 1.0
    alpha: float = 0.05
    g: int = 2
    per_group: tuple[int, ...] = field(default=())
    p: int = 0
    nu: float = 0.0
    two_sided: bool = True

    def __post_init__(self):
        if not self.per_group:
            object.__setattr__(self, "per_group", _balanced_allocation(self.n, self.g))
        per_group = tuple(int(v) for v in self.per_group)
        object.__setattr__(self, "per_group", per_group)
        if len(per_group) != self.g or sum(per_group) != self.n:
            raise DomainError(
                f"per_group {per_group} does not partition n = {self.n} into g = {self.g}"
            )
        if min(per_group) < 1:
            raise DomainError("every group needs at least one patient")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma_u <= 0.0:
            raise DomainError(f"sigma_u must be positive, got {self.sigma_u}")
        if not 0.0 <= self.nu < 1.0:
            raise DomainError(f"nu must lie in [0, 1), got {self.nu}")
        if self.p < 0:
            raise DomainError(f"p must be >= 0, got {self.p}")

    @property
    def indicator_ss(self) -> float:
        """sum((z - zbar)^2) = n1 n2 / n for the two-group indicator."""
        n1, n2 = self.per_group[0], self.per_group[1]
        return n1 * n2 / self.n


def noncentral_t_cdf(t, df: int, delta) -> float | np.ndarray:
    """P(T <= t) for a noncentral t variable with df degrees of freedom.

    Accepts array arguments; absolute accuracy is well inside 1e-8 over the
    ranges used here.
    """
    if df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    value = stats.nct.cdf(t, df, delta)
    if not np.all(np.isfinite(value)):
        raise NonConvergence(f"noncentral t CDF failed at t={t}, df={df}, delta={delta}")
    return value if np.ndim(value) else float(value)


def _t_test_power(df: int, delta, alpha: float, two_sided: bool):
    if two_sided:
        crit = stats.t.ppf(1.0 - alpha / 2.0, df)
        return (
            1.0
            - noncentral_t_cdf(crit, df, delta)
            + noncentral_t_cdf(-crit, df, delta)
        )
    crit = stats.t.ppf(1.0 - alpha, df)
    return 1.0 - noncentral_t_cdf(crit, df, delta)


def unadjusted_power(spec: PowerSpec) -> float:
    """Power of the level-alpha t-test of a zero treatment effect, no covariates.

    Noncentrality is gamma * sqrt(n1 n2 / n) / sigma_u on n - 2 degrees of
    freedom.
    """
    if spec.g != 2:
        raise DomainError("power computations support two-group designs only")
    if spec.p != 0:
        raise DomainError(f"unadjusted power requires p = 0, got p = {spec.p}")
    if spec.n < 3:
        raise DomainError(f"need n >= 3, got {spec.n}")
    delta = spec.gamma * math.sqrt(spec.indicator_ss) / spec.sigma_u
    return float(_t_test_power(spec.n - 2, delta, spec.alpha, spec.two_sided))


def adjusted_expected_power(spec: PowerSpec) -> float:
    """Expected power when adjusting for p covariates that explain ``spec.nu``.

    Conditional on the indicator-covariate R^2 = b, the test has
    n - p - g degrees of freedom and noncentrality
    gamma * sqrt((1 - b) n1 n2 / n) / (sigma_u sqrt(1 - nu)); the returned
    value averages that power over b ~ Beta(p/2, (n - p - g + 1)/2).

    Integration is Gauss-Legendre after the substitution b = sin^2(theta),
    which makes the integrand analytic; the order doubles until two
    successive evaluations agree to 1e-7.
    """
    if spec.p == 0:
        return unadjusted_power(spec)
    if spec.g != 2:
        raise DomainError("power computations support two-group designs only")
    n, g, p = spec.n, spec.g, spec.p
    if n - p - g - 1 < 1:
        raise DomainError(f"need n - p - g - 1 >= 1, got {n - p - g - 1}")

    df = n - p - g
    a = p / 2.0
    b = (n - p - g + 1) / 2.0
    log_beta = special.betaln(a, b)
    sigma_eps = spec.sigma_u * math.sqrt(1.0 - spec.nu)
    scale = spec.gamma * math.sqrt(spec.indicator_ss) / sigma_eps

    def evaluate(order: int) -> float:
        nodes, weights = leggauss(order)
        theta = (nodes + 1.0) * (math.pi / 4.0)
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        density = (
            2.0
            * np.exp(
                (2.0 * a - 1.0) * np.log(sin_t)
                + (2.0 * b - 1.0) * np.log(cos_t)
                - log_beta
            )
        )
        delta = scale * cos_t  # sqrt(1 - sin^2) = cos
        power = _t_test_power(df, delta, spec.alpha, spec.two_sided)
        return float((math.pi / 4.0) * (weights * density * power).sum())

    previous = evaluate(16)
    order = 32
    while order <= _QUAD_MAX_ORDER:
        current = evaluate(order)
        if abs(current - previous) < _QUAD_TOL:
            return min(1.0, max(0.0, current))
        previous = current
        order *= 2
    raise NonConvergence(
        f"expected-power quadrature did not stabilize below {_QUAD_TOL}"
    )


def solve_gamma_for_power(
    target_power: float,
    n: int,
    sigma_u: float = 1.0,
    alpha: float = 0.05,
    per_group: tuple[int, ...] = (),
    two_sided: bool = True,
) -> float:
    """Effect size at which the unadjusted two-group t-test reaches ``target_power``.

    Power is strictly increasing in gamma > 0, so a bracketing root solve
    converges; the result satisfies |power - target| <= 1e-9.  A target equal
    to alpha returns 0 (the test size).
    """
    if not 0.0 < target_power < 1.0:
        raise DomainError(f"target power must lie in (0, 1), got {target_power}")

    def power_of(gamma: float) -> float:
        return unadjusted_power(
            PowerSpec(
                n=n,
                gamma=gamma,
                sigma_u=sigma_u,
                alpha=alpha,
                per_group=per_group,
                two_sided=two_sided,
            )
        )

    size = power_of(0.0)
    if abs(target_power - size) <= _ROOT_TOL:
        return 0.0
    if target_power < size:
        raise DomainError(
            f"target power {target_power} is below the test size {size:.6g}"
        )

    spec = PowerSpec(n=n, gamma=0.0, sigma_u=sigma_u, alpha=alpha, per_group=per_group)
    # Normal-approximation starting point, then expand until bracketed.
    z_alpha = stats.norm.ppf(1.0 - alpha / (2.0 if two_sided else 1.0))
    z_power = stats.norm.ppf(min(target_power, 1.0 - 1e-12))
    hi = max(1e-8, (z_alpha + z_power) * sigma_u / math.sqrt(spec.indicator_ss))
    for _ in range(200):
        if power_of(hi) >= target_power:
            break
        hi *= 2.0
    else:
        raise NonConvergence("could not bracket the target power")

    gamma = optimize.brentq(
        lambda value: power_of(value) - target_power,
        0.0,
        hi,
        xtol=1e-13,
        rtol=8.9e-16,
        maxiter=200,
    )
    if abs(power_of(gamma) - target_power) > _ROOT_TOL:
        raise NonConvergence("root solve left a power residual above 1e-9")
    return float(gamma)
