"""Least squares estimation of treatment effects, with and without covariates.

All solvers go through orthogonal decompositions (SVD/QR); nothing inverts a
normal-equations matrix directly.  Covariates are grand-mean-centered before
they enter a design, so group intercepts are adjusted means at the average
covariate profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataset import ContrastMatrix, TrialDataset
from .errors import (
    DegenerateDesign,
    DomainError,
    InsufficientData,
    InvalidContrast,
    RankDeficient,
)

# Relative singular-value ratio below which a block is declared singular.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Treatment-effect estimates and their estimated sampling variability.

    Attributes
    ----------
    effect : ndarray, shape (c,)
        Estimated treatment effect(s); a single entry for the two-group
        paths, one per contrast row otherwise.
    effect_variance : ndarray, shape (c, c)
        Estimated sampling variance-covariance of ``effect``.
    intercept_estimates : ndarray, shape (g,)
        Per-group adjusted means (at the grand-mean covariate profile).
    residuals : ndarray, shape (n,)
    sse : float
        Residual sum of squares.
    residual_df : int
        n - 2 - p for the two-group paths, n - g - p with g groups.
    sigma_hat_sq : float
        sse / residual_df.
    r_squared_zx : float
        Multiple R^2 of the regression of the treatment indicator on the
        selected covariates (two-group paths only; 0.0 otherwise).
    """

    effect: np.ndarray
    effect_variance: np.ndarray
    intercept_estimates: np.ndarray
    residuals: np.ndarray
    sse: float
    residual_df: int
    sigma_hat_sq: float
    r_squared_zx: float

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.effect_variance))


@dataclass(frozen=True)
class RidgeFit:
    """Penalized linear fit: weights for centered inputs plus a free intercept."""

    weights: np.ndarray
    intercept: float


def _check_block_rank(block: np.ndarray, names) -> None:
    """Raise RankDeficient, naming the dependent columns, if the block is singular."""
    if block.shape[1] == 0:
        return
    sv = np.linalg.svd(block, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] < RANK_RTOL * sv[0]:
        _, _, pivot = scipy.linalg.qr(block, mode="economic", pivoting=True)
        rank = int(np.sum(sv >= RANK_RTOL * sv[0])) if sv[0] > 0 else 0
        offenders = tuple(names[j] for j in sorted(pivot[rank:]))
        raise RankDeficient("collinear covariate columns", offenders)


def _lstsq(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def _treatment_indicator(data: TrialDataset) -> np.ndarray:
    """z = 1 for group 1 (treatment), 0 for group 2 (control)."""
    if data.g != 2:
        raise DomainError(f"two-group path requires g = 2, got g = {data.g}")
    return (data.group == 1).astype(float)


def fit_unadjusted(data: TrialDataset) -> FitResult:
    """Two-group difference in means with its estimated sampling variance.

    The effect is sum((z - zbar)(y - ybar)) / sum((z - zbar)^2), i.e. the
    treatment-minus-control mean difference, with variance estimated from
    the residual mean square on n - 2 degrees of freedom.
    """
    z = _treatment_indicator(data)
    y = data.outcome
    n = data.n
    if n < 3:
        raise InsufficientData(f"n = {n} < 3")
    zc = z - z.mean()
    szz = float(zc @ zc)
    if szz == 0.0:
        raise DegenerateDesign("all patients in the same group")

    gamma = float(zc @ (y - y.mean())) / szz
    mu = float(y.mean() - gamma * z.mean())
    residuals = y - mu - gamma * z
    sse = float(residuals @ residuals)
    df = n - 2
    sigma_sq = sse / df

    return FitResult(
        effect=np.array([gamma]),
        effect_variance=np.array([[sigma_sq / szz]]),
        intercept_estimates=np.array([mu + gamma, mu]),
        residuals=residuals,
        sse=sse,
        residual_df=df,
        sigma_hat_sq=sigma_sq,
        r_squared_zx=0.0,
    )


def fit_adjusted(data: TrialDataset, covariate_selection) -> FitResult:
    """Two-group treatment effect adjusted for an ordered covariate subset.

    The effect is computed in partialled (Frisch-Waugh-Lovell) form: the
    treatment indicator is residualized on the covariates and the effect is
    sum(r * (y - ybar)) / sum(r^2).  Its variance estimate is
    sigma_eps^2 / ((1 - R^2_zx) * sum((z - zbar)^2)) with
    sigma_eps^2 = SSE_p / (n - p - 2).

    Raises
    ------
    RankDeficient
        If the centered covariate block is singular, or the covariates
        reproduce the treatment indicator exactly.
    InsufficientData
        If n <= p + 2.
    """
    names = tuple(covariate_selection)
    p = len(names)
    if p == 0:
        return fit_unadjusted(data)
    z = _treatment_indicator(data)
    y = data.outcome
    n = data.n
    if n <= p + 2:
        raise InsufficientData(f"n = {n} must exceed p + 2 = {p + 2}")

    x = data.select_covariates(names)
    xc = x - x.mean(axis=0)
    _check_block_rank(xc, names)

    zc = z - z.mean()
    szz = float(zc @ zc)
    if szz == 0.0:
        raise DegenerateDesign("all patients in the same group")

    # Auxiliary regression of the indicator on the covariates (intercept via centering).
    r = zc - xc @ _lstsq(xc, zc)
    srr = float(r @ r)
    r2_zx = max(0.0, 1.0 - srr / szz)
    if srr < RANK_RTOL * szz:
        raise RankDeficient("covariates reproduce the treatment indicator", names)

    gamma = float(r @ (y - y.mean())) / srr

    design = np.column_stack([np.ones(n), z, xc])
    coef = _lstsq(design, y)
    residuals = y - design @ coef
    sse = float(residuals @ residuals)
    df = n - p - 2
    sigma_eps_sq = sse / df
    variance = sigma_eps_sq / ((1.0 - r2_zx) * szz)

    intercept = float(coef[0])
    return FitResult(
        effect=np.array([gamma]),
        effect_variance=np.array([[variance]]),
        intercept_estimates=np.array([intercept + gamma, intercept]),
        residuals=residuals,
        sse=sse,
        residual_df=df,
        sigma_hat_sq=sigma_eps_sq,
        r_squared_zx=r2_zx,
    )


def fit_groups(
    data: TrialDataset,
    covariate_selection,
    contrasts: ContrastMatrix,
) -> FitResult:
    """Cell-means fit for g groups with covariates, effects through contrasts.

    Each group gets its own intercept (no global intercept); the covariates
    are grand-mean-centered.  For contrast matrix C the effect is C mu_hat
    with variance-covariance

        sigma_hat^2 * C (D + Xbar' Sxx^-1 Xbar) C'

    where D = diag(1/n_j), Xbar collects the per-group means of the centered
    covariates, and Sxx is the pooled within-group cross-product.  With p = 0
    the middle factor reduces to D.
    """
    names = tuple(covariate_selection)
    p = len(names)
    n, g = data.n, data.g
    if not isinstance(contrasts, ContrastMatrix):
        contrasts = ContrastMatrix(np.asarray(contrasts))
    if contrasts.g != g:
        raise InvalidContrast(f"contrast has {contrasts.g} columns for {g} groups")
    if n <= p + g:
        raise InsufficientData(f"n = {n} must exceed p + g = {p + g}")

    indicators = (data.group[:, None] == np.arange(1, g + 1)[None, :]).astype(float)
    sizes = indicators.sum(axis=0)

    if p:
        x = data.select_covariates(names)
        xc = x - x.mean(axis=0)
        _check_block_rank(xc, names)
        design = np.column_stack([indicators, xc])
        sv = np.linalg.svd(design, compute_uv=False)
        if sv[-1] < RANK_RTOL * sv[0]:
            raise RankDeficient(
                "covariates lie in the span of the group indicators", names
            )
    else:
        xc = np.empty((n, 0))
        design = indicators

    coef = _lstsq(design, data.outcome)
    mu_hat = coef[:g]
    residuals = data.outcome - design @ coef
    sse = float(residuals @ residuals)
    df = n - p - g
    sigma_sq = sse / df

    d = np.diag(1.0 / sizes)
    if p:
        group_means = indicators.T @ xc / sizes[:, None]  # (g, p)
        xbar = group_means.T  # (p, g)
        centered_within = xc - indicators @ group_means
        sxx = centered_within.T @ centered_within
        try:
            solved = np.linalg.solve(sxx, xbar)
        except np.linalg.LinAlgError:
            raise RankDeficient("no within-group covariate variation", names) from None
        middle = d + xbar.T @ solved
    else:
        middle = d

    c = contrasts.entries
    variance = sigma_sq * (c @ middle @ c.T)
    variance = (variance + variance.T) / 2.0

    return FitResult(
        effect=c @ mu_hat,
        effect_variance=variance,
        intercept_estimates=mu_hat,
        residuals=residuals,
        sse=sse,
        residual_df=df,
        sigma_hat_sq=sigma_sq,
        r_squared_zx=0.0,
    )


def fit_ridge(x: np.ndarray, u: np.ndarray, lam: float) -> RidgeFit:
    """Ridge regression of u on x with an unpenalized intercept.

    Minimizes ||u - intercept - x w||^2 + lam ||w||^2.  The intercept is
    handled by centering, so only the slope vector is shrunk; lam = 0 with a
    full-column-rank x reduces to OLS.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.ndim != 2 or x.shape[0] != u.shape[0]:
        raise DomainError(f"x is {x.shape}, u has {u.shape[0]} rows")
    m = x.shape[0]
    if m < 2:
        raise InsufficientData(f"m = {m} < 2")
    if not np.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam}")
    if not np.all(np.isfinite(x)):
        raise DomainError("x contains non-finite values")

    col_means = x.mean(axis=0)
    xc = x - col_means
    uc = u - u.mean()

    if lam == 0.0:
        _check_block_rank(xc, [f"column {j}" for j in range(x.shape[1])])
        weights = _lstsq(xc, uc)
    else:
        p = x.shape[1]
        augmented = np.vstack([xc, np.sqrt(lam) * np.eye(p)])
        target = np.concatenate([uc, np.zeros(p)])
        weights = _lstsq(augmented, target)

    intercept = float(u.mean() - col_means @ weights)
    return RidgeFit(weights=weights, intercept=intercept)
