"""Stationary covariance kernels and their cross-derivatives.

Four correlation families are supported (smoothest first):

=============  =======================================================  ======
Family         C(h, theta)                                              Class
=============  =======================================================  ======
gaussian       exp(-h^2 / (2 theta^2))                                  C-inf
matern52       (1 + s5 r + 5 r^2/3) exp(-s5 r),  r=|h|/theta, s5=sqrt5  C^2
matern32       (1 + s3 r) exp(-s3 r),            s3=sqrt(3)             C^1
exponential    exp(-r)                                                  C^0
=============  =======================================================  ======

A kernel is ``K(x, x') = sigma2 * C(x - x', theta)``; in several dimensions
the correlation is the product of one-dimensional factors.  The first and
second cross-derivatives of K (needed to build the covariance of a process
value together with its slopes at grid knots) have closed forms for the two
families that are at least twice differentiable; asking for them with a
``matern32`` or ``exponential`` kernel raises :class:`UnsupportedDerivative`.

The nugget is a stabilising term added to the diagonal of Gram matrices,
never inside the correlation itself.  It is expressed on the correlation
scale, i.e. a Gram matrix is ``sigma2 * (C + nugget * I)``, so rescaling
``sigma2`` rescales the whole matrix and leaves scale-invariant quantities
(such as the constrained mode) untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidSpec, UnsupportedDerivative

GAUSSIAN = "gaussian"
MATERN52 = "matern52"
MATERN32 = "matern32"
EXPONENTIAL = "exponential"

FAMILIES = (GAUSSIAN, MATERN52, MATERN32, EXPONENTIAL)

# families whose sample paths are differentiable (twice-differentiable kernel)
C2_FAMILIES = (GAUSSIAN, MATERN52)

_ALIASES = {
    "gaussian": GAUSSIAN,
    "rbf": GAUSSIAN,
    "squared_exponential": GAUSSIAN,
    "matern52": MATERN52,
    "matern5/2": MATERN52,
    "matern32": MATERN32,
    "matern3/2": MATERN32,
    "exponential": EXPONENTIAL,
    "exp": EXPONENTIAL,
}

#: default nugget per family: the infinitely smooth kernel needs one to keep
#: Gram matrices factorizable, the others do not.
DEFAULT_NUGGET = {GAUSSIAN: 1e-5, MATERN52: 0.0, MATERN32: 0.0, EXPONENTIAL: 0.0}


def canonical_family(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace(" ", "")
    if key not in _ALIASES:
        raise InvalidSpec(f"unknown kernel family {name!r}; choose from {FAMILIES}")
    return _ALIASES[key]


@dataclass(frozen=True)
class KernelSpec:
    """One-dimensional covariance kernel: family, length, variance, nugget.

    ``theta`` is the correlation length in the units of the input axis
    (years for maturity axes).  ``nugget=None`` selects the family default
    (1e-5 for the gaussian kernel, 0 otherwise).
    """

    family: str
    theta: float
    sigma2: float = 1.0
    nugget: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        if not np.isfinite(self.theta) or self.theta <= 0:
            raise InvalidSpec(f"theta must be positive, got {self.theta}")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise InvalidSpec(f"sigma2 must be positive, got {self.sigma2}")
        if self.nugget is None:
            object.__setattr__(self, "nugget", DEFAULT_NUGGET[self.family])
        elif not np.isfinite(self.nugget) or self.nugget < 0:
            raise InvalidSpec(f"nugget must be nonnegative, got {self.nugget}")

    @property
    def differentiable(self) -> bool:
        return self.family in C2_FAMILIES

    def with_params(self, **kw) -> "KernelSpec":
        """Copy of this spec with some fields replaced."""
        fields = dict(family=self.family, theta=self.theta, sigma2=self.sigma2,
                      nugget=self.nugget)
        fields.update(kw)
        return KernelSpec(**fields)

    def to_dict(self) -> dict:
        return {"family": self.family, "theta": [self.theta],
                "sigma2": self.sigma2, "nugget": self.nugget}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        theta = d["theta"]
        if isinstance(theta, (list, tuple, np.ndarray)):
            if len(theta) != 1:
                raise InvalidSpec("KernelSpec holds a single length; build one "
                                  "spec per dimension for tensor kernels")
            theta = float(theta[0])
        return cls(d["family"], float(theta), float(d.get("sigma2", 1.0)),
                   d.get("nugget"))


# ---------------------------------------------------------------------------
# correlation and its derivatives with respect to the lag h = x - x'
# ---------------------------------------------------------------------------

_SQRT5 = np.sqrt(5.0)
_SQRT3 = np.sqrt(3.0)


def eval_corr(spec: KernelSpec, h) -> np.ndarray:
    """Correlation C(h, theta) of the family at signed distance ``h``."""
    h = np.asarray(h, dtype=float)
    t = spec.theta
    if spec.family == GAUSSIAN:
        return np.exp(-h * h / (2.0 * t * t))
    r = np.abs(h) / t
    if spec.family == MATERN52:
        s = _SQRT5 * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    if spec.family == MATERN32:
        s = _SQRT3 * r
        return (1.0 + s) * np.exp(-s)
    return np.exp(-r)  # exponential


def _corr_d1(spec: KernelSpec, h: np.ndarray) -> np.ndarray:
    """dC/dh for the C^2 families."""
    t = spec.theta
    if spec.family == GAUSSIAN:
        return -(h / (t * t)) * np.exp(-h * h / (2.0 * t * t))
    # matern52: a = sqrt5/theta, dC/dh = -(a^2/3) h (1 + a|h|) exp(-a|h|)
    a = _SQRT5 / t
    r = np.abs(h)
    return -(a * a / 3.0) * h * (1.0 + a * r) * np.exp(-a * r)


def _corr_d2(spec: KernelSpec, h: np.ndarray) -> np.ndarray:
    """d2C/dh2 for the C^2 families."""
    t = spec.theta
    if spec.family == GAUSSIAN:
        t2 = t * t
        return (h * h / t2 - 1.0) / t2 * np.exp(-h * h / (2.0 * t2))
    a = _SQRT5 / t
    r = np.abs(h)
    return -(a * a / 3.0) * (1.0 + a * r - (a * r) ** 2) * np.exp(-a * r)


def eval_cov_derivs(spec: KernelSpec, x, xp):
    """Covariance K(x, x') and its cross-derivatives.

    Returns the tuple ``(K, dK/dx, dK/dx', d2K/dx dx')`` evaluated at the
    (broadcast) points ``x`` and ``x'``.  Only available for twice
    differentiable families (gaussian, matern52).
    """
    if not spec.differentiable:
        raise UnsupportedDerivative(
            f"{spec.family} kernel is not twice differentiable; "
            f"use one of {C2_FAMILIES}")
    h = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    s2 = spec.sigma2
    k = s2 * eval_corr(spec, h)
    d1 = s2 * _corr_d1(spec, h)
    d2 = -s2 * _corr_d2(spec, h)
    # K(x,x') = s2 C(x-x'): d/dx = s2 C'(h), d/dx' = -s2 C'(h),
    # d2/dx dx' = -s2 C''(h)
    return k, d1, -d1, d2


def eval_tensor_cov(specs: Sequence[KernelSpec], x, xp) -> np.ndarray:
    """Tensor-product covariance: product of per-dimension correlations.

    ``x`` and ``xp`` have one trailing axis of length ``len(specs)``.  The
    overall variance is the product of the per-dimension ``sigma2`` values,
    so in practice all but one spec carry ``sigma2=1``.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    d = len(specs)
    if x.shape[-1] != d or xp.shape[-1] != d:
        raise InvalidSpec(f"points must have {d} coordinates to match the specs")
    out = np.ones(np.broadcast_shapes(x.shape[:-1], xp.shape[:-1]))
    for i, spec in enumerate(specs):
        out = out * eval_corr(spec, x[..., i] - xp[..., i]) * spec.sigma2
    return out


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------

def gram(spec: KernelSpec, X) -> np.ndarray:
    """Covariance matrix of the process at points ``X`` plus nugget diagonal."""
    X = np.asarray(X, dtype=float).reshape(-1)
    K = spec.sigma2 * eval_corr(spec, X[:, None] - X[None, :])
    K[np.diag_indices_from(K)] += spec.sigma2 * spec.nugget
    return K


def cross_cov(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Cross covariance between two point sets (no nugget)."""
    X1 = np.asarray(X1, dtype=float).reshape(-1)
    X2 = np.asarray(X2, dtype=float).reshape(-1)
    return spec.sigma2 * eval_corr(spec, X1[:, None] - X2[None, :])


def tensor_gram(specs: Sequence[KernelSpec], P) -> np.ndarray:
    """Gram matrix of a tensor-product kernel at points ``P`` (n x d).

    The nugget used on the diagonal is the largest of the per-dimension
    nuggets, scaled by the combined variance.
    """
    P = np.asarray(P, dtype=float)
    K = eval_tensor_cov(specs, P[:, None, :], P[None, :, :])
    sigma2 = float(np.prod([s.sigma2 for s in specs]))
    nugget = max(s.nugget for s in specs)
    K[np.diag_indices_from(K)] += sigma2 * nugget
    return K
