"""Estimating explained-variance curves and composite covariates from prior studies.

A sample multiple R^2 overstates the population value; the Olkin-Pratt
shrinkage estimator corrects it through the Gauss hypergeometric function
F(1, 1; c; x).  Feeding the shrunken curve into the relative-efficiency
formula picks the covariate count a future trial should adjust for, and a
ridge fit on the same prior data packages all covariates into a single
composite column for that trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import efficiency
from .dataset import TrialDataset
from .errors import DomainError, MissingColumn, NonConvergence, RankDeficient
from .regression import RANK_RTOL, RidgeFit, _check_block_rank, _lstsq, fit_ridge

_SERIES_TOL = 1e-12
_SERIES_MAX_ITER = 10_000

# 25 log-spaced ridge penalties, rescaled by the design's mean squared size.
_GCV_GRID = np.logspace(-4.0, 4.0, 25)


def hyp2f1_11c(c: float, x: float) -> float:
    """Gauss hypergeometric F(1, 1; c; x) = sum_k k! x^k / (c)_k for x in [0, 1].

    The series is evaluated to absolute tolerance 1e-12 with a geometric
    tail bound; x = 1 uses the closed form (c - 1)/(c - 2), which requires
    c > 2.  Successive term ratios are (k + 1) x / (c + k), so convergence
    slows when x approaches 1 with small c.

    Raises
    ------
    DomainError
        If x is outside [0, 1], or x = 1 with c <= 2.
    NonConvergence
        If the tolerance is not reached within 10,000 terms.
    """
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 1.0:
        if c <= 2.0:
            raise DomainError(f"F(1,1;c;1) diverges for c <= 2, got c = {c}")
        return (c - 1.0) / (c - 2.0)
    if x == 0.0:
        return 1.0
    if c <= 0.0:
        raise DomainError(f"c must be positive, got c = {c}")

    total = 1.0
    term = 1.0
    for k in range(_SERIES_MAX_ITER):
        term *= (k + 1.0) * x / (c + k)
        total += term
        # Ratios (k+1)x/(c+k) increase toward x for c > 1, so the remaining
        # tail is bounded by term * x / (1 - x).
        if term * x / (1.0 - x) < _SERIES_TOL:
            return total
    raise NonConvergence(
        f"F(1,1;{c};{x}) did not reach {_SERIES_TOL} within {_SERIES_MAX_ITER} terms"
    )


def olkin_pratt_nu(r2: float, m: int, p: int) -> float:
    """Shrink a sample R^2 from m rows and p regressors toward the population value.

    nu_hat = 1 - (m - 3)/(m - p - 1) * (1 - R^2) * F(1, 1; (m - p + 1)/2; 1 - R^2)

    The estimate can be negative for small R^2: that is honest shrinkage and
    is reported as-is.  At R^2 = 0 the closed form 1 - (m - 3)/(m - p - 3)
    applies and needs m - p - 3 >= 1; at R^2 = 1 the estimate is exactly 1.
    """
    if not (0.0 <= r2 <= 1.0):
        raise DomainError(f"r2 must lie in [0, 1], got {r2}")
    if m - p - 1 < 1:
        raise DomainError(f"need m - p - 1 >= 1, got {m - p - 1}")
    if r2 == 1.0:
        return 1.0
    x = 1.0 - r2
    c = (m - p + 1) / 2.0
    if x == 1.0 and m - p - 3 < 1:
        raise DomainError(f"r2 = 0 requires m - p - 3 >= 1, got {m - p - 3}")
    return 1.0 - (m - 3) / (m - p - 1) * x * hyp2f1_11c(c, x)


@dataclass(frozen=True)
class HistoricalEstimate:
    """Per-prefix explained-variance curve with the selected covariate count.

    Vectors are indexed by prefix size p = 0..P.  ``nu_hat`` holds the raw
    shrinkage estimates (possibly negative); ``predicted_re`` clamps them at
    zero before applying the target design's efficiency formula.
    """

    m: int
    ranked_covariates: tuple[str, ...]
    r2_hat: np.ndarray
    nu_hat: np.ndarray
    predicted_re: np.ndarray
    optimal_p: int
    target_n: int
    target_g: int


@dataclass(frozen=True)
class CompositeModel:
    """A single derived covariate: W = (x - center) . weights.

    ``scale`` records the per-column standard deviations used to equalize the
    ridge penalty; the stored weights are already back-transformed, so
    applying the model needs only ``center`` and ``weights``.
    """

    covariate_names: tuple[str, ...]
    center: np.ndarray
    weights: np.ndarray
    scale: np.ndarray
    lambda_: float
    m: int
    trained_nu_w: float


def _group_residuals(data: TrialDataset) -> np.ndarray:
    """Outcome residuals after removing per-group means."""
    u = np.empty(data.n)
    for j in range(1, data.g + 1):
        mask = data.group == j
        u[mask] = data.outcome[mask] - data.outcome[mask].mean()
    return u


def estimate_nu_curve(
    historical: TrialDataset,
    ranking,
    target_n: int,
    target_g: int = 2,
) -> HistoricalEstimate:
    """Estimate nu_p for every prefix of a covariate ranking and pick the best p.

    The historical outcome is first residualized on its own group structure,
    then regressed on the first p ranked covariates for each p.  Each sample
    R^2 is shrunk with ``olkin_pratt_nu`` and converted to the relative
    efficiency the target (n, g) design would see; the optimal p minimizes
    that curve (ties go to the smallest p).

    Prefixes beyond the target design's feasible range p <= n - g - 2 are not
    evaluated.
    """
    ranking = tuple(ranking)
    historical.column_indices(ranking)  # validate names early
    m = historical.n
    max_target_p = target_n - target_g - 2
    if max_target_p < 0:
        raise DomainError(
            f"target design cannot fit any covariate: n = {target_n}, g = {target_g}"
        )
    p_max = min(len(ranking), max_target_p)
    if m - p_max - 3 < 1:
        raise DomainError(
            f"need m > max prefix + 3: m = {m}, max prefix = {p_max}"
        )

    u = _group_residuals(historical)
    sst = float(u @ u)
    if sst == 0.0:
        raise DomainError("historical outcome has no residual variation")

    r2 = np.zeros(p_max + 1)
    for p in range(1, p_max + 1):
        names = ranking[:p]
        x = historical.select_covariates(names)
        xc = x - x.mean(axis=0)
        _check_block_rank(xc, names)
        resid = u - xc @ _lstsq(xc, u)
        r2[p] = max(r2[p - 1], 1.0 - float(resid @ resid) / sst)

    nu_hat = np.array([olkin_pratt_nu(float(r2[p]), m, p) for p in range(p_max + 1)])
    predicted_re = np.array(
        [
            efficiency.relative_efficiency(
                target_n, target_g, p, min(max(float(nu_hat[p]), 0.0), 1.0 - 1e-15)
            )
            for p in range(p_max + 1)
        ]
    )
    optimal_p = int(np.argmin(predicted_re))

    return HistoricalEstimate(
        m=m,
        ranked_covariates=ranking[:p_max],
        r2_hat=r2,
        nu_hat=nu_hat,
        predicted_re=predicted_re,
        optimal_p=optimal_p,
        target_n=target_n,
        target_g=target_g,
    )


AUTO = "auto"


def _gcv_lambda(xs: np.ndarray, u: np.ndarray) -> float:
    """Generalized cross-validation over a log grid of ridge penalties."""
    m, p = xs.shape
    basis, singular, _ = np.linalg.svd(xs, full_matrices=False)
    rotated = basis.T @ u
    total_ss = float(u @ u)
    grid = _GCV_GRID * (singular @ singular) / (m * p)
    best_lam, best_score = grid[0], math.inf
    for lam in grid:
        shrink = singular**2 / (singular**2 + lam)
        sse = total_ss - float(((2.0 - shrink) * shrink) @ rotated**2)
        edf = 1.0 + float(shrink.sum())
        score = m * sse / (m - edf) ** 2
        if score < best_score:
            best_lam, best_score = lam, score
    return float(best_lam)


def train_composite(
    historical: TrialDataset,
    covariate_names,
    lam: float | str = AUTO,
) -> CompositeModel:
    """Fit composite-covariate weights on a prior study.

    The historical outcome is residualized on its group structure, the
    covariates are centered and scaled to unit standard deviation, and a
    ridge regression (penalty ``lam``, or GCV-selected when ``lam="auto"``)
    produces the weights.  Weights are back-transformed so the stored model
    applies directly to raw covariate values.
    """
    names = tuple(covariate_names)
    if not names:
        raise DomainError("composite requires at least one covariate")
    if historical.n < 5:
        raise DomainError(f"need m >= 5 historical rows, got {historical.n}")

    x = historical.select_covariates(names)
    center = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1)
    flat = tuple(names[j] for j in range(len(names)) if scale[j] < RANK_RTOL)
    if flat:
        raise RankDeficient("constant covariate columns", flat)

    u = _group_residuals(historical)
    xs = (x - center) / scale

    if lam == AUTO:
        lam_value = _gcv_lambda(xs, u)
    else:
        lam_value = float(lam)
    ridge: RidgeFit = fit_ridge(xs, u, lam_value)
    weights = ridge.weights / scale

    w = xs @ ridge.weights
    sww = float(w @ w)
    suu = float(u @ u)
    nu_w = (float(w @ u) ** 2 / (sww * suu)) if sww > 0.0 and suu > 0.0 else 0.0

    return CompositeModel(
        covariate_names=names,
        center=center,
        weights=weights,
        scale=scale,
        lambda_=lam_value,
        m=historical.n,
        trained_nu_w=nu_w,
    )


def apply_composite(model: CompositeModel, data: TrialDataset) -> np.ndarray:
    """Evaluate W = (x - center) . weights for every patient in ``data``."""
    x = data.select_covariates(model.covariate_names)
    return (x - model.center) @ model.weights


# --- model file format: name,center,weight rows plus metadata footer rows ---

_LAMBDA_KEY = "__lambda__"
_M_KEY = "__m__"
_SCALE_KEY = "__scale__"
_RESERVED = (_LAMBDA_KEY, _M_KEY, _SCALE_KEY)

MODEL_HEADER = ["name", "center", "weight"]


def model_to_rows(model: CompositeModel) -> list[list[str]]:
    """Serialize a composite model to name,center,weight rows with footer metadata."""
    clashes = tuple(c for c in model.covariate_names if c in _RESERVED)
    if clashes:
        raise DomainError(f"covariate names collide with metadata keys: {clashes}")
    rows = [
        [name, repr(float(model.center[j])), repr(float(model.weights[j]))]
        for j, name in enumerate(model.covariate_names)
    ]
    rows.append([_LAMBDA_KEY, repr(float(model.lambda_)), ""])
    rows.append([_M_KEY, str(int(model.m)), ""])
    rows.extend(
        [_SCALE_KEY, name, repr(float(model.scale[j]))]
        for j, name in enumerate(model.covariate_names)
    )
    return rows


def model_from_rows(rows) -> CompositeModel:
    """Rebuild a composite model from its CSV rows (inverse of model_to_rows)."""
    names: list[str] = []
    center: list[float] = []
    weights: list[float] = []
    scales: dict[str, float] = {}
    lambda_ = None
    m = None
    try:
        for row in rows:
            key = row[0]
            if key == _LAMBDA_KEY:
                lambda_ = float(row[1])
            elif key == _M_KEY:
                m = int(row[1])
            elif key == _SCALE_KEY:
                scales[row[1]] = float(row[2])
            else:
                names.append(key)
                center.append(float(row[1]))
                weights.append(float(row[2]))
    except (IndexError, ValueError) as exc:
        raise DomainError(f"malformed composite model row: {exc}") from exc
    if lambda_ is None or m is None or not names:
        raise DomainError("composite model file is missing covariates or metadata")
    scale = np.array([scales.get(name, math.nan) for name in names])
    return CompositeModel(
        covariate_names=tuple(names),
        center=np.array(center),
        weights=np.array(weights),
        scale=scale,
        lambda_=lambda_,
        m=m,
        trained_nu_w=math.nan,
    )
