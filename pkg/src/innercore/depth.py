"""Mahalanobis depth to the origin over node feature matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SingularCovarianceError
from .graph import FeatureMatrix

RIDGE_SCHEDULE = tuple(10.0 ** -k for k in range(8, 1, -1))  # 1e-8 ... 1e-2
_SINGULAR_TOL = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class InverseCovariance:
    matrix: np.ndarray
    ridge_used: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _values(F) -> np.ndarray:
    return np.asarray(F.values if isinstance(F, FeatureMatrix) else F, dtype=np.float64)


def _spd_inverse(cov: np.ndarray) -> np.ndarray | None:
    """Inverse via Cholesky, or None when ``cov`` is numerically singular."""
    d = cov.shape[0]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return None
    # a squared pivot is the variance left after regressing out earlier columns;
    # near zero relative to the column's own variance means collinear
    resid = np.diag(L) ** 2
    if np.any(resid <= _SINGULAR_TOL * d * np.diag(cov)):
        return None
    Linv = np.linalg.solve(L, np.eye(d))
    inv = Linv.T @ Linv
    return (inv + inv.T) / 2


def _degenerate_columns(X: np.ndarray) -> list[int]:
    var = X.var(axis=0)
    scale = max(float(np.abs(X).max()), 1.0)
    cols = [j for j in range(X.shape[1]) if var[j] <= (np.finfo(float).eps * scale) ** 2]
    if cols:
        return cols
    # collinear set: columns carrying weight in the null-space direction
    Z = (X - X.mean(axis=0)) / np.sqrt(var)
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    null = vt[-1]
    return [j for j in range(X.shape[1]) if abs(null[j]) > 1e-3]


def inverse_covariance(F, ridge_schedule=RIDGE_SCHEDULE) -> InverseCovariance:
    """Inverse of the sample covariance (n-1 denominator) of F's rows.

    A singular covariance is retried with ``delta * trace(cov)/d * I`` for
    each ``delta`` in ``ridge_schedule``.
    """
    X = _values(F)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
        raise InputError(f"need at least 2 rows and 1 column, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("feature matrix has non-finite entries")
    d = X.shape[1]
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    inv = _spd_inverse(cov)
    if inv is not None:
        return InverseCovariance(inv, 0.0)
    scale = float(np.trace(cov)) / d
    if scale > 0:
        for delta in ridge_schedule:
            ridge = delta * scale
            inv = _spd_inverse(cov + ridge * np.eye(d))
            if inv is not None:
                return InverseCovariance(inv, ridge)
    cols = _degenerate_columns(X)
    raise SingularCovarianceError(
        f"covariance singular after ridge escalation; degenerate column(s) {cols}", cols)


def mhdo(x, inv_cov: InverseCovariance) -> float:
    """Depth of ``x`` relative to the origin, ``1 / (1 + x' S^-1 x)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    M = inv_cov.matrix if isinstance(inv_cov, InverseCovariance) else np.asarray(inv_cov)
    if x.shape[0] != M.shape[0]:
        raise InputError(f"dimension mismatch: x has {x.shape[0]}, inverse covariance {M.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError("x must be finite")
    q = float(x @ M @ x)
    return 1.0 / (1.0 + max(q, 0.0))


def depth_vector(F, inv_cov: InverseCovariance) -> np.ndarray:
    """Row-wise :func:`mhdo`."""
    X = _values(F)
    M = inv_cov.matrix if isinstance(inv_cov, InverseCovariance) else np.asarray(inv_cov)
    if X.ndim != 2 or (X.shape[0] and X.shape[1] != M.shape[0]):
        raise InputError(f"dimension mismatch: F is {X.shape}, inverse covariance {M.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    q = ((X @ M) * X).sum(axis=1)
    return 1.0 / (1.0 + np.maximum(q, 0.0))
