"""Derived financial quantities: rate transforms, bands, parametric fits.

Transforms of a positive curve ``Y`` (a discount or survival curve):

* spot rate    ``-log(Y(x)) / x``,
* forward rate ``-Y'(x) / Y(x)`` (analytic slope of the basis expansion),
* annuity-due present value ``sum_k Y(k/p) / p``.

Pointwise confidence bands are empirical quantiles over sampled coefficient
vectors evaluated on a grid.  Nelson-Siegel and Svensson yield curves serve
as parametric references, fitted by multi-start gradient descent on squared
quote errors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import Curve1D, FiniteModel1D, basis_matrix
from .errors import (InvalidSpec, NonConvergence, NonPositiveValue,
                     TooFewSamples, ZeroHorizon)

NELSON_SIEGEL = "nelson_siegel"
SVENSSON = "svensson"


def spot_rate(curve, x) -> np.ndarray:
    """Continuously compounded zero rate ``-log(Y(x)) / x`` of a positive curve."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0.0):
        raise ZeroHorizon("spot rates require strictly positive horizons")
    y = np.asarray(curve(x), dtype=float)
    if np.any(y <= 0.0):
        raise NonPositiveValue("curve must be strictly positive for spot rates")
    return -np.log(y) / x


def forward_rate(curve: Curve1D, x) -> np.ndarray:
    """Instantaneous forward rate ``-Y'(x)/Y(x)`` from the analytic slope."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.asarray(curve.value(x), dtype=float)
    if np.any(y <= 0.0):
        raise NonPositiveValue("curve must be strictly positive for forward rates")
    return -curve.slope(x) / y


def annuity_pv(curve, n_years: int, per_year: int) -> float:
    """Present value of a level annuity-due paying 1/p at 0, 1/p, ..., n-1/p."""
    if n_years < 1 or per_year < 1:
        raise InvalidSpec("annuity needs positive term and payment frequency")
    k = np.arange(n_years * per_year, dtype=float)
    return float(np.sum(np.asarray(curve(k / per_year), dtype=float))) / per_year


@dataclass(frozen=True)
class CurveBand:
    """Pointwise envelope of sampled curves around the most likely one."""

    grid: np.ndarray
    mode: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median: np.ndarray
    level: float
    n_samples: int


def bands(sample_coeffs, model: FiniteModel1D, grid, level: float,
          mode_coeffs=None) -> CurveBand:
    """Empirical pointwise band of sampled curves at confidence ``level``.

    Quantiles are taken at ``(1 - level)/2`` and ``(1 + level)/2`` per grid
    point.  ``mode_coeffs`` fills the band's centre curve; when omitted the
    pointwise median is used.
    """
    samples = np.atleast_2d(np.asarray(sample_coeffs, dtype=float))
    if samples.shape[0] < 2:
        raise TooFewSamples("bands need at least two sample paths")
    if not (0.0 <= level < 1.0):
        raise InvalidSpec("level must lie in [0, 1)")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    values = samples @ basis_matrix(model.grid, grid).T
    lo = np.quantile(values, (1.0 - level) / 2.0, axis=0)
    hi = np.quantile(values, (1.0 + level) / 2.0, axis=0)
    med = np.quantile(values, 0.5, axis=0)
    mode = (model.curve(mode_coeffs).value(grid)
            if mode_coeffs is not None else med.copy())
    return CurveBand(grid, mode, lo, hi, med, level, samples.shape[0])


# ---------------------------------------------------------------------------
# parametric reference curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParametricCurve:
    """Nelson-Siegel or Svensson yield curve parameters."""

    family: str
    lambda1: float
    beta1: float
    beta2: float
    beta3: float
    lambda2: float | None = None
    beta4: float | None = None

    def __post_init__(self):
        if self.family not in (NELSON_SIEGEL, SVENSSON):
            raise InvalidSpec(f"unknown parametric family {self.family!r}")
        if self.lambda1 <= 0:
            raise InvalidSpec("lambda1 must be positive")
        if self.family == SVENSSON:
            if self.lambda2 is None or self.beta4 is None:
                raise InvalidSpec("svensson needs lambda2 and beta4")
            if self.lambda2 <= 0:
                raise InvalidSpec("lambda2 must be positive")

    def params(self) -> dict:
        out = {"lambda1": self.lambda1, "beta1": self.beta1,
               "beta2": self.beta2, "beta3": self.beta3}
        if self.family == SVENSSON:
            out["lambda2"] = self.lambda2
            out["beta4"] = self.beta4
        return out

    def yield_curve(self):
        return lambda x: parametric_eval(self, x)

    def discount_curve(self):
        """Discount factors exp(-y(x) x) implied by the yield curve."""
        def df(x):
            x = np.asarray(x, dtype=float)
            out = np.ones_like(x, dtype=float)
            pos = x > 0
            out[pos] = np.exp(-parametric_eval(self, x[pos]) * x[pos])
            return out
        return df


def _loading(x: np.ndarray, lam: float) -> np.ndarray:
    u = x / lam
    return (1.0 - np.exp(-u)) / u


def parametric_eval(curve: ParametricCurve, x) -> np.ndarray:
    """Yield of the parametric curve at horizons ``x > 0``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x <= 0.0):
        raise ZeroHorizon("parametric yields require positive horizons")
    f1 = _loading(x, curve.lambda1)
    y = curve.beta1 + curve.beta2 * f1
    y = y + curve.beta3 * (f1 - np.exp(-x / curve.lambda1))
    if curve.family == SVENSSON:
        f2 = _loading(x, curve.lambda2)
        y = y + curve.beta4 * (f2 - np.exp(-x / curve.lambda2))
    return y


def _unpack(family: str, p: np.ndarray) -> ParametricCurve:
    if family == NELSON_SIEGEL:
        return ParametricCurve(family, float(np.exp(p[0])), float(p[1]),
                               float(p[2]), float(p[3]))
    return ParametricCurve(family, float(np.exp(p[0])), float(p[2]),
                           float(p[3]), float(p[4]),
                           lambda2=float(np.exp(p[1])), beta4=float(p[5]))


def _descent(objective, p0: np.ndarray, max_iters: int) -> tuple:
    """Gradient descent with backtracking line search; finite-difference grad."""
    p = p0.copy()
    f = objective(p)
    eps = 1e-7
    step0 = 1.0
    for _ in range(max_iters):
        g = np.empty_like(p)
        for i in range(p.shape[0]):
            dp = np.zeros_like(p)
            dp[i] = eps * max(1.0, abs(p[i]))
            g[i] = (objective(p + dp) - objective(p - dp)) / (2.0 * dp[i])
        gnorm = float(np.linalg.norm(g))
        if not np.isfinite(gnorm) or gnorm < 1e-12 * (1.0 + abs(f)):
            break
        step = step0
        improved = False
        for _ in range(40):
            trial = p - step * g
            ft = objective(trial)
            if ft < f - 1e-4 * step * gnorm ** 2:
                p, f = trial, ft
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return p, f


def parametric_fit(quotes: np.ndarray, pricing, family: str, seed: int,
                   restarts: int = 50, max_iters: int = 5000) -> ParametricCurve:
    """Best-fitting parametric curve by squared quote error, multi-start.

    ``pricing`` maps a yield function ``x -> y(x)`` to the vector of model
    quotes aligned with ``quotes``.  Starting points are drawn from wide
    random ranges; the best local minimum over all restarts wins.
    """
    quotes = np.asarray(quotes, dtype=float).reshape(-1)
    n_par = 4 if family == NELSON_SIEGEL else 6
    if quotes.shape[0] < n_par:
        raise InvalidSpec(f"{family} needs at least {n_par} quotes")
    rng = np.random.default_rng(seed)

    def objective(p: np.ndarray) -> float:
        curve = _unpack(family, p)
        model = pricing(curve.yield_curve())
        resid = np.asarray(model, dtype=float) - quotes
        if not np.all(np.isfinite(resid)):
            return np.inf
        return float(resid @ resid)

    best_p, best_f = None, np.inf
    for _ in range(restarts):
        if family == NELSON_SIEGEL:
            p0 = np.array([np.log(rng.uniform(0.5, 30.0)),
                           rng.normal(0.02, 0.03), rng.normal(0.0, 0.03),
                           rng.normal(0.0, 0.05)])
        else:
            p0 = np.array([np.log(rng.uniform(0.5, 30.0)),
                           np.log(rng.uniform(0.5, 30.0)),
                           rng.normal(0.02, 0.03), rng.normal(0.0, 0.03),
                           rng.normal(0.0, 0.05), rng.normal(0.0, 0.05)])
        p, f = _descent(objective, p0, max_iters)
        if f < best_f:
            best_p, best_f = p, f
    if best_p is None or not np.isfinite(best_f):
        raise NonConvergence(f"{family} fit produced no finite optimum")
    return _unpack(family, best_p)
