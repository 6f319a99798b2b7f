"""Trial data containers: outcome, group labels, and covariate matrix.

Group labels are integers 1..g.  In the two-group paths group 1 is the
treatment arm (coded z = 1) and group 2 the control arm (z = 0), so a
contrast row [1, -1] reads as treatment minus control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, DomainError, InvalidContrast, MissingColumn


@dataclass(frozen=True)
class TrialDataset:
    """Rectangular trial data: one outcome, one group label and K covariates per patient.

    Parameters
    ----------
    outcome : ndarray, shape (n,)
        Response values.
    group : ndarray, shape (n,)
        Integer labels in 1..g; every label present with at least two patients.
    covariates : ndarray, shape (n, K)
        Baseline covariate columns (may be empty, K = 0).
    covariate_names : tuple of str
        Unique column names, one per covariate column.
    """

    outcome: np.ndarray
    group: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        outcome = np.asarray(self.outcome, dtype=float).reshape(-1)
        group = np.asarray(self.group, dtype=int).reshape(-1)
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1) if covariates.size else covariates.reshape(0, 0)
        names = tuple(str(c) for c in self.covariate_names)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "covariate_names", names)

        n = outcome.shape[0]
        if group.shape[0] != n:
            raise DomainError(f"group has {group.shape[0]} rows, outcome has {n}")
        if covariates.size and covariates.shape[0] != n:
            raise DomainError(f"covariates have {covariates.shape[0]} rows, outcome has {n}")
        if covariates.size == 0:
            object.__setattr__(self, "covariates", np.empty((n, len(names))))
        if len(names) != self.covariates.shape[1]:
            raise DomainError(
                f"{len(names)} covariate names for {self.covariates.shape[1]} columns"
            )
        if len(set(names)) != len(names):
            dupes = sorted({c for c in names if names.count(c) > 1})
            raise DomainError(f"duplicate covariate names: {', '.join(dupes)}")
        if not np.all(np.isfinite(outcome)):
            raise DomainError("outcome contains non-finite values")
        if self.covariates.size and not np.all(np.isfinite(self.covariates)):
            bad = [names[j] for j in range(len(names))
                   if not np.all(np.isfinite(self.covariates[:, j]))]
            raise DomainError(f"non-finite values in covariates: {', '.join(bad)}")

        if n == 0:
            raise DegenerateDesign("dataset is empty")
        g = int(group.max()) if n else 0
        if group.min() < 1:
            raise DomainError("group labels must be integers in 1..g")
        counts = np.bincount(group, minlength=g + 1)[1:]
        if np.any(counts == 0):
            missing = [str(j + 1) for j in range(g) if counts[j] == 0]
            raise DegenerateDesign(f"group labels {', '.join(missing)} have no patients")
        if np.any(counts < 2):
            small = [str(j + 1) for j in range(g) if counts[j] < 2]
            raise DegenerateDesign(f"groups with fewer than 2 patients: {', '.join(small)}")

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def g(self) -> int:
        return int(self.group.max())

    @property
    def k(self) -> int:
        return self.covariates.shape[1]

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group, minlength=self.g + 1)[1:]

    def column_indices(self, names) -> list[int]:
        """Map covariate names to column indices, preserving order."""
        lookup = {c: j for j, c in enumerate(self.covariate_names)}
        missing = tuple(c for c in names if c not in lookup)
        if missing:
            raise MissingColumn("covariate columns not in dataset", missing)
        return [lookup[c] for c in names]

    def select_covariates(self, names) -> np.ndarray:
        """Return the (n, p) block of the named covariate columns."""
        idx = self.column_indices(names)
        return self.covariates[:, idx]

    def with_covariates(self, matrix: np.ndarray, names) -> "TrialDataset":
        """Same outcome and groups, different covariate block."""
        return TrialDataset(self.outcome, self.group, matrix, tuple(names))


@dataclass(frozen=True)
class ContrastMatrix:
    """c x g matrix of treatment contrasts; rows sum to zero and are independent."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", entries)
        c, g = entries.shape
        if not np.all(np.isfinite(entries)):
            raise InvalidContrast("contrast entries must be finite")
        if c > g - 1:
            raise InvalidContrast(f"at most g-1 = {g - 1} contrasts allowed, got {c}")
        row_sums = entries.sum(axis=1)
        if np.any(np.abs(row_sums) > 1e-12):
            raise InvalidContrast("invalid contrast: rows must sum to zero")
        if np.linalg.matrix_rank(entries) < c:
            raise InvalidContrast("invalid contrast: rows are linearly dependent")

    @property
    def c(self) -> int:
        return self.entries.shape[0]

    @property
    def g(self) -> int:
        return self.entries.shape[1]


TWO_GROUP_CONTRAST = None  # placeholder; built lazily to keep dataclass validation simple


def two_group_contrast() -> ContrastMatrix:
    """Treatment-minus-control contrast for a two-group trial."""
    return ContrastMatrix(np.array([[1.0, -1.0]]))


def encode_groups(values) -> tuple[np.ndarray, list]:
    """Recode raw group labels to integers 1..g.

    Unique labels are sorted descending (numerically when every label parses
    as a number, lexically otherwise) so that conventional 0/1 treatment
    columns map 1 -> group 1 (treatment) and 0 -> group 2 (control).

    Returns the label vector and the ordered list of raw labels, where
    position j holds the raw label of group j+1.
    """
    raw = list(values)
    uniq = sorted(set(raw))
    try:
        order = sorted(uniq, key=float, reverse=True)
    except (TypeError, ValueError):
        order = sorted(uniq, key=str, reverse=True)
    index = {v: j + 1 for j, v in enumerate(order)}
    return np.array([index[v] for v in raw], dtype=int), order
