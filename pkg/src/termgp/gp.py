"""Closed-form Gaussian-process posteriors under linear constraints.

Three conditioning variants, all returning a :class:`GaussianPosterior`:

* plain interpolation of observed values (``posterior_interpolation``),
* general linear equality constraints ``A f(X) = b`` (``posterior_linear``),
* the same with observation noise, where the normal-equation matrix
  ``A K A^T`` is inflated by a noise covariance ``Sigma``.

The posterior covariance never depends on the right-hand side ``b``: the
factorization is computed once from ``A``, ``K`` and ``Sigma`` alone, so
rebuilding a posterior with a different ``b`` changes the mean only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla

from . import kernels
from .errors import (InvalidSpec, RankDeficient, SingularConstraintMatrix,
                     SingularCovariance)

MeanLike = Union[float, Callable[[np.ndarray], np.ndarray]]


def _mean_at(mean: MeanLike, x: np.ndarray) -> np.ndarray:
    if callable(mean):
        return np.asarray(mean(x), dtype=float)
    return np.full(np.shape(x), float(mean))


def check_full_row_rank(A: np.ndarray, tol_factor: float = 1e-10) -> None:
    """Raise :class:`RankDeficient` unless ``A`` has full row rank.

    Rank test via pivoted QR of ``A^T`` with tolerance ``tol_factor * ||A||``.
    """
    A = np.atleast_2d(A)
    n = A.shape[0]
    if n == 0:
        return
    R = sla.qr(A.T, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R[: min(A.shape), : min(A.shape)]))
    tol = tol_factor * max(np.linalg.norm(A), 1.0)
    rank = int(np.sum(diag > tol))
    if rank < n:
        raise RankDeficient(f"constraint matrix has row rank {rank} < {n}")


@dataclass(frozen=True)
class MarketFitSystem:
    """Linear market-fit constraints ``A P(X) = b`` on curve values.

    ``X`` holds the m curve points (horizons in years), ``A`` is n x m with
    full row rank and n <= m, and ``sigma`` is an optional symmetric PSD
    observation-noise covariance.
    """

    A: np.ndarray
    b: np.ndarray
    X: np.ndarray
    sigma: np.ndarray | None = None
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "X", X)
        n, m = A.shape
        if b.shape[0] != n:
            raise InvalidSpec(f"b has length {b.shape[0]}, expected {n}")
        if X.shape[0] != m:
            raise InvalidSpec(f"X has {X.shape[0]} points, expected {m}")
        if n > m:
            raise InvalidSpec(f"more constraints ({n}) than curve points ({m})")
        check_full_row_rank(A)
        if self.sigma is not None:
            S = np.atleast_2d(np.asarray(self.sigma, dtype=float))
            if S.shape != (n, n):
                raise InvalidSpec(f"sigma must be {n}x{n}, got {S.shape}")
            if not np.allclose(S, S.T, atol=1e-12):
                raise InvalidSpec("sigma must be symmetric")
            if np.min(np.linalg.eigvalsh(S)) < -1e-10 * max(1.0, np.abs(S).max()):
                raise InvalidSpec("sigma must be positive semidefinite")
            object.__setattr__(self, "sigma", S)

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def n_points(self) -> int:
        return self.A.shape[1]

    def drop_row(self, i: int) -> "MarketFitSystem":
        """System without constraint row ``i`` (leave-one-out folds)."""
        keep = [k for k in range(self.n_constraints) if k != i]
        sig = self.sigma[np.ix_(keep, keep)] if self.sigma is not None else None
        labels = tuple(self.labels[k] for k in keep) if self.labels else ()
        return MarketFitSystem(self.A[keep], self.b[keep], self.X, sig, labels)


class GaussianPosterior:
    """Gaussian process conditioned on linear equalities, closed over its data.

    Exposes the posterior mean ``mean(x)``, covariance ``cov(x, xp)`` and
    variance ``var(x)``; all accept scalars or 1-d arrays of points.
    """

    def __init__(self, spec: kernels.KernelSpec, X: np.ndarray, A: np.ndarray,
                 weights: np.ndarray, cho, mean_fn: MeanLike):
        self._spec = spec
        self._X = X
        self._A = A
        self._w = weights          # (A K A^T + Sigma)^{-1} (b - A mu)
        self._cho = cho            # cholesky factor of the inflated matrix
        self._mean_fn = mean_fn

    def _projected_cross(self, x) -> np.ndarray:
        # rows: evaluation points, cols: constraints -> (A k(x))^T
        kx = kernels.cross_cov(self._spec, np.atleast_1d(x), self._X)
        return kx @ self._A.T

    def mean(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = _mean_at(self._mean_fn, x) + self._projected_cross(x) @ self._w
        return out

    def cov(self, x, xp) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        prior = kernels.cross_cov(self._spec, x, xp)
        ax = self._projected_cross(x)
        axp = self._projected_cross(xp)
        return prior - ax @ sla.cho_solve(self._cho, axp.T)

    def var(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.diag(self.cov(x, x)).copy()

    def __call__(self, x) -> np.ndarray:
        return self.mean(x)


def posterior_linear(spec: kernels.KernelSpec, system: MarketFitSystem,
                     mean: MeanLike = 0.0) -> GaussianPosterior:
    """Posterior of a GP given the linear constraints ``A Y(X) = b``.

    With ``system.sigma`` present, the constraint is understood as noisy
    (``b = A Y(X) + eps``) and the normal-equation matrix is inflated by the
    noise covariance; the resulting mean no longer reproduces ``b`` exactly.
    """
    X = system.X
    K = kernels.gram(spec, X)
    M = system.A @ K @ system.A.T
    if system.sigma is not None:
        M = M + system.sigma
    try:
        cho = sla.cho_factor((M + M.T) / 2.0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularConstraintMatrix(str(exc)) from exc
    mu = _mean_at(mean, X)
    w = sla.cho_solve(cho, system.b - system.A @ mu)
    return GaussianPosterior(spec, X, system.A, w, cho, mean)


def posterior_interpolation(spec: kernels.KernelSpec, X, y,
                            mean: MeanLike = 0.0) -> GaussianPosterior:
    """Classical kriging posterior through the observations ``(X, y)``."""
    X = np.asarray(X, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise InvalidSpec("X and y must have the same length")
    if X.shape[0] == 0:
        raise InvalidSpec("at least one observation is required")
    if np.unique(X).shape[0] != X.shape[0]:
        raise InvalidSpec("design points must be distinct")
    K = kernels.gram(spec, X)
    try:
        cho = sla.cho_factor((K + K.T) / 2.0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    mu = _mean_at(mean, X)
    w = sla.cho_solve(cho, y - mu)
    return GaussianPosterior(spec, X, np.eye(X.shape[0]), w, cho, mean)
