"""Geometry of symmetric positive-definite matrices.

Covariance matrices of detection windows live on the SPD cone, which is
not a vector space: averaging or differencing them entrywise leaves the
cone and distorts distances. The affine-invariant metric fixes this. With
``B^(1/2)`` the symmetric square root of a base point B, the maps

    Log_B(X) = B^(1/2) logm(B^(-1/2) X B^(-1/2)) B^(1/2)
    Exp_B(S) = B^(1/2) expm(B^(-1/2) S B^(-1/2)) B^(1/2)

carry points to/from the tangent space at B, where ordinary Euclidean
tools (and the classifier) apply. The geometric (Karcher) mean is the
point whose tangent-space average of the data is zero.

A log-Euclidean variant is provided for ablations: it flattens the whole
cone once through ``logm`` instead of linearizing around a base point.

All decompositions use symmetric eigensolvers; matrix functions are
applied to eigenvalues.
"""

from __future__ import annotations

import logging

import numpy as np

from .errors import (
    AllConstantWindowError,
    DimensionMismatchError,
    EigenFailureError,
    EmptyInputError,
    NoConvergenceError,
    NonFiniteValueError,
    NotSpdError,
    NotSymmetricError,
    WindowTooShortError,
)

__all__ = [
    "METRIC_AFFINE",
    "METRIC_LOG_EUCLIDEAN",
    "covariance",
    "check_spd",
    "spd_log",
    "spd_exp",
    "spd_distance",
    "karcher_mean",
    "tangent_vectorize",
    "tangent_unvectorize",
]

logger = logging.getLogger(__name__)

METRIC_AFFINE = "affine-invariant"
METRIC_LOG_EUCLIDEAN = "log-euclidean"
_METRICS = (METRIC_AFFINE, METRIC_LOG_EUCLIDEAN)

# Relative floor for covariance eigenvalues; windows this close to
# singular get a small ridge so the matrix logarithm stays usable.
_EIG_FLOOR = 1e-10
_RIDGE = 1e-6
_SYM_TOL = 1e-8


def _check_metric(metric: str) -> str:
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {_METRICS}, got {metric!r}")
    return metric


def _as_square(mat, name: str) -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValueError(f"{name} contains NaN or infinity")
    return arr


def _check_symmetric(mat, name: str) -> np.ndarray:
    arr = _as_square(mat, name)
    scale = max(1.0, float(np.abs(arr).max()))
    if np.abs(arr - arr.T).max() > _SYM_TOL * scale:
        raise NotSymmetricError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


def _eigh(mat: np.ndarray, name: str):
    try:
        return np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"eigendecomposition of {name} failed: {exc}") from exc


def check_spd(mat, name: str = "matrix") -> np.ndarray:
    """Validate symmetry and positive definiteness; return the symmetrized copy."""
    sym = _check_symmetric(mat, name)
    eigvals = _eigh(sym, name)[0]
    if eigvals[0] <= 0.0:
        raise NotSpdError(
            f"{name} has non-positive eigenvalue {eigvals[0]:.3e}"
        )
    return sym


def _spd_function(mat: np.ndarray, func, name: str) -> np.ndarray:
    """Apply a scalar function to the eigenvalues of an SPD matrix."""
    eigvals, eigvecs = _eigh(mat, name)
    if eigvals[0] <= 0.0:
        raise NotSpdError(f"{name} has non-positive eigenvalue {eigvals[0]:.3e}")
    transformed = (eigvecs * func(eigvals)) @ eigvecs.T
    return 0.5 * (transformed + transformed.T)


def _sym_function(mat: np.ndarray, func, name: str) -> np.ndarray:
    eigvals, eigvecs = _eigh(mat, name)
    transformed = (eigvecs * func(eigvals)) @ eigvecs.T
    return 0.5 * (transformed + transformed.T)


def covariance(window, *, strict: bool = False) -> np.ndarray:
    """Sample covariance (ddof=1) of a window, conditioned for the manifold.

    Near-singular results are ridged by ``1e-6 * trace/p`` on the diagonal
    so downstream matrix logarithms are defined. A window in which every
    stream is constant carries no covariance information at all; by
    default it maps to a tiny multiple of the identity (with a warning),
    or raises when ``strict`` is set.

    Args:
        window: Matrix of shape ``(n, p)``, ``n >= 2``.
        strict: Raise instead of repairing an all-constant window.

    Returns:
        SPD matrix of shape ``(p, p)``.
    """
    arr = np.asarray(window, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, np.newaxis]
    if arr.ndim != 2:
        raise DimensionMismatchError(f"window must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 2:
        raise WindowTooShortError(
            f"covariance needs at least 2 rows, got {arr.shape[0]}"
        )
    if not np.isfinite(arr).all():
        raise NonFiniteValueError("window contains NaN or infinity")
    centered = arr - arr.mean(axis=0)
    cov = centered.T @ centered / (arr.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    p = cov.shape[0]
    scale = float(np.trace(cov)) / p
    if scale <= 0.0:
        if strict:
            raise AllConstantWindowError(
                "every stream is constant over the window"
            )
        logger.warning(
            "all-constant window of %d rows; substituting %.0e * identity",
            arr.shape[0],
            _RIDGE,
        )
        return _RIDGE * np.eye(p)
    eigvals = _eigh(cov, "window covariance")[0]
    if eigvals[0] < _EIG_FLOOR * scale:
        cov = cov + (_RIDGE * scale) * np.eye(p)
    return cov


def spd_log(base, point, metric: str = METRIC_AFFINE) -> np.ndarray:
    """Map an SPD point into the tangent space at ``base``.

    Returns a symmetric matrix; in general it is not positive definite.
    """
    _check_metric(metric)
    b = check_spd(base, "base")
    x = check_spd(point, "point")
    if b.shape != x.shape:
        raise DimensionMismatchError(
            f"base has shape {b.shape} but point has {x.shape}"
        )
    if metric == METRIC_LOG_EUCLIDEAN:
        return _spd_function(x, np.log, "point") - _spd_function(b, np.log, "base")
    eigvals, eigvecs = _eigh(b, "base")
    half = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    inv_half = (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.T
    inner = inv_half @ x @ inv_half
    inner = 0.5 * (inner + inner.T)
    logged = _spd_function(inner, np.log, "whitened point")
    out = half @ logged @ half
    return 0.5 * (out + out.T)


def spd_exp(base, tangent, metric: str = METRIC_AFFINE) -> np.ndarray:
    """Map a tangent vector at ``base`` back onto the manifold."""
    _check_metric(metric)
    b = check_spd(base, "base")
    s = _check_symmetric(tangent, "tangent")
    if b.shape != s.shape:
        raise DimensionMismatchError(
            f"base has shape {b.shape} but tangent has {s.shape}"
        )
    if metric == METRIC_LOG_EUCLIDEAN:
        return _sym_function(
            _spd_function(b, np.log, "base") + s, np.exp, "log sum"
        )
    eigvals, eigvecs = _eigh(b, "base")
    half = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    inv_half = (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.T
    inner = inv_half @ s @ inv_half
    inner = 0.5 * (inner + inner.T)
    exped = _sym_function(inner, np.exp, "whitened tangent")
    out = half @ exped @ half
    return 0.5 * (out + out.T)


def spd_distance(a, b, metric: str = METRIC_AFFINE) -> float:
    """Geodesic distance between two SPD matrices.

    Affine-invariant: Frobenius norm of ``logm(A^(-1/2) B A^(-1/2))``,
    equivalently the root sum of squared log generalized eigenvalues.
    Log-Euclidean: Frobenius norm of ``logm(A) - logm(B)``.
    """
    _check_metric(metric)
    ma = check_spd(a, "a")
    mb = check_spd(b, "b")
    if ma.shape != mb.shape:
        raise DimensionMismatchError(f"shapes differ: {ma.shape} vs {mb.shape}")
    if metric == METRIC_LOG_EUCLIDEAN:
        diff = _spd_function(ma, np.log, "a") - _spd_function(mb, np.log, "b")
        return float(np.linalg.norm(diff, "fro"))
    eigvals, eigvecs = _eigh(ma, "a")
    inv_half = (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.T
    inner = inv_half @ mb @ inv_half
    inner = 0.5 * (inner + inner.T)
    inner_vals = _eigh(inner, "whitened b")[0]
    if inner_vals[0] <= 0.0:
        raise NotSpdError("b is not positive definite relative to a")
    return float(np.sqrt(np.sum(np.log(inner_vals) ** 2)))


def karcher_mean(
    matrices,
    metric: str = METRIC_AFFINE,
    *,
    tol_scale: float = 1e-6,
    max_iter: int = 100,
) -> np.ndarray:
    """Frechet mean of SPD matrices under the chosen metric.

    Affine-invariant: fixed-point iteration. Starting from the arithmetic
    mean, repeatedly average the data in the tangent space at the current
    estimate and move along that mean tangent; stop when the mean tangent
    has Frobenius norm below ``tol_scale * p``.

    Log-Euclidean: closed form, ``expm`` of the mean of ``logm``.

    Raises:
        NoConvergenceError: Iteration cap reached (affine metric only).
    """
    _check_metric(metric)
    mats = [check_spd(m, f"matrices[{i}]") for i, m in enumerate(matrices)]
    if not mats:
        raise EmptyInputError("need at least one matrix")
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise DimensionMismatchError(
                f"matrices[{i}] has shape {m.shape}, expected {shape}"
            )
    p = shape[0]
    if metric == METRIC_LOG_EUCLIDEAN:
        logs = [_spd_function(m, np.log, "matrix") for m in mats]
        return _sym_function(np.mean(logs, axis=0), np.exp, "mean log")

    mean = 0.5 * (np.mean(mats, axis=0) + np.mean(mats, axis=0).T)
    residual = np.inf
    for _ in range(max_iter):
        tangent = np.mean([spd_log(mean, m) for m in mats], axis=0)
        residual = float(np.linalg.norm(tangent, "fro"))
        if residual < tol_scale * p:
            return mean
        mean = spd_exp(mean, tangent)
    raise NoConvergenceError(
        f"Karcher mean did not converge in {max_iter} iterations "
        f"(residual {residual:.3e})",
        residual=residual,
    )


def tangent_vectorize(tangent) -> np.ndarray:
    """Flatten a symmetric matrix to ``p (p + 1) / 2`` coordinates.

    The upper triangle is read row-major; off-diagonal entries are scaled
    by sqrt(2) so the Euclidean norm of the vector equals the Frobenius
    norm of the matrix.
    """
    sym = _check_symmetric(tangent, "tangent")
    p = sym.shape[0]
    rows, cols = np.triu_indices(p)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return sym[rows, cols] * weights


def tangent_unvectorize(flat) -> np.ndarray:
    """Inverse of :func:`tangent_vectorize`."""
    vec = np.asarray(flat, dtype=float)
    if vec.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got ndim={vec.ndim}")
    p = int(round((np.sqrt(8.0 * vec.size + 1.0) - 1.0) / 2.0))
    if p * (p + 1) // 2 != vec.size:
        raise DimensionMismatchError(
            f"length {vec.size} is not a triangular number"
        )
    rows, cols = np.triu_indices(p)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    out = np.zeros((p, p))
    out[rows, cols] = vec / weights
    out = out + np.triu(out, 1).T
    return out
