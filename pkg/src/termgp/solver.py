"""Constrained inference core: conditional moments, mode QP, path sampling.

The coefficient vector of a finite-dimensional curve model is Gaussian with
covariance ``Gamma``; market-fit conditions are equality constraints
``B xi = b`` and monotonicity is the inequality cone ``G xi <= 0``.  This
module computes

* the conditional Gaussian moments given the equalities alone,
* the mode (maximum of the constrained density), as the minimizer of
  ``1/2 xi^T Gamma^{-1} xi`` over the feasible set, and
* samples of ``xi`` restricted to both constraint sets.

Everything is phrased in whitened coordinates.  With ``Gamma = L L^T`` and
``xi = L z``, the density is spherical in ``z``; eliminating the equalities
through an orthonormal null-space basis ``Z`` of ``B L`` leaves a
least-distance problem ``min ||w||`` over a polytope ``D w <= c``, which a
primal active-set method solves in finitely many steps.  Samples come from
the exact rejection scheme that proposes Gaussians recentred at the mode and
accepts with the tilted-density ratio; a multi-chain Gibbs sweep takes over
when the acceptance rate is too low.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog
from scipy.special import ndtr, ndtri

from .basis import Curve1D, FiniteModel1D, FiniteModel2D, Surface2D, basis_matrix, basis_matrix_2d
from .errors import (AcceptanceTooLow, Infeasible, InvalidSpec, MaxIterations,
                     SingularConstraintMatrix, SingularCovariance)
from .gp import MarketFitSystem, check_full_row_rank

_FEAS_TOL = 1e-9


def conditional_moments(Gamma, B, b):
    """Mean and covariance of a zero-mean Gaussian given ``B xi = b``.

    Returns ``((B Gamma)^T (B Gamma B^T)^{-1} b,
    Gamma - (B Gamma)^T (B Gamma B^T)^{-1} B Gamma)``.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if B.shape[0] == 0:
        return np.zeros(Gamma.shape[0]), Gamma.copy()
    BG = B @ Gamma
    M = BG @ B.T
    try:
        cho = sla.cho_factor((M + M.T) / 2.0, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularConstraintMatrix(str(exc)) from exc
    mean = BG.T @ sla.cho_solve(cho, b)
    cov = Gamma - BG.T @ sla.cho_solve(cho, BG)
    return mean, (cov + cov.T) / 2.0


class ConstrainedProblem:
    """Gaussian coefficients restricted to ``B xi = b`` and ``G xi <= 0``."""

    def __init__(self, coeff_cov, B, b, G=None, *, check_feasible: bool = True):
        self.coeff_cov = np.asarray(coeff_cov, dtype=float)
        dim = self.coeff_cov.shape[0]
        self.B = (np.zeros((0, dim)) if B is None
                  else np.atleast_2d(np.asarray(B, dtype=float)))
        self.b = (np.zeros(0) if b is None
                  else np.asarray(b, dtype=float).reshape(-1))
        self.G = (np.zeros((0, dim)) if G is None
                  else np.atleast_2d(np.asarray(G, dtype=float)))
        if self.B.shape[1] != dim or self.G.shape[1] != dim:
            raise InvalidSpec("constraint matrices do not match the dimension")
        if self.b.shape[0] != self.B.shape[0]:
            raise InvalidSpec("b length does not match B")
        if self.B.shape[0] > 0:
            check_full_row_rank(self.B)
        self._prepare()
        if check_feasible:
            self.feasible_start()  # raises Infeasible when the set is empty

    # -- whitened workspace -------------------------------------------------

    def _prepare(self):
        try:
            self.L = np.linalg.cholesky(self.coeff_cov)
        except np.linalg.LinAlgError as exc:
            raise SingularCovariance(
                "coefficient covariance is not positive definite") from exc
        dim = self.coeff_cov.shape[0]
        k = self.B.shape[0]
        if k:
            Bw = self.B @ self.L
            U, s, Vt = np.linalg.svd(Bw, full_matrices=True)
            tol = max(Bw.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
            if np.sum(s > tol) < k:
                raise SingularConstraintMatrix(
                    "whitened equality constraints are rank deficient")
            self._zp = Vt[:k].T @ ((U.T @ self.b) / s)
            self._Z = Vt[k:].T
        else:
            self._zp = np.zeros(dim)
            self._Z = np.eye(dim)
        # inequalities in reduced coordinates: D w <= c, rows normalised
        if self.G.shape[0]:
            GL = self.G @ self.L
            D = GL @ self._Z
            c = -GL @ self._zp
            norms = np.linalg.norm(D, axis=1)
            keep = norms > 1e-14 * max(1.0, np.abs(GL).max())
            if np.any(~keep & (c < -_FEAS_TOL)):
                raise Infeasible(
                    "an inequality is violated by every point satisfying "
                    "the equality constraints")
            self._kept_rows = np.flatnonzero(keep)
            self._row_norms = norms[keep]
            self._D = D[keep] / norms[keep, None]
            self._c = c[keep] / norms[keep]
        else:
            self._kept_rows = np.zeros(0, dtype=int)
            self._row_norms = np.zeros(0)
            self._D = np.zeros((0, self._Z.shape[1]))
            self._c = np.zeros(0)
        self._w_feasible = None

    @property
    def dim(self) -> int:
        return self.coeff_cov.shape[0]

    @property
    def n_reduced(self) -> int:
        return self._Z.shape[1]

    def lift(self, w: np.ndarray) -> np.ndarray:
        """Map reduced coordinates back to coefficient space."""
        return self.L @ (self._zp + self._Z @ w)

    def conditional_mean(self) -> np.ndarray:
        return self.L @ self._zp

    def feasible_start(self) -> np.ndarray:
        """A reduced point satisfying the inequalities (phase-1 LP on demand)."""
        if self._w_feasible is not None:
            return self._w_feasible
        nz = self.n_reduced
        if self._D.shape[0] == 0 or np.all(self._c >= -_FEAS_TOL):
            w = np.zeros(nz)
        else:
            q = self._D.shape[0]
            # min sum(s)  s.t.  D w - s <= c,  s >= 0
            A_ub = np.hstack([self._D, -np.eye(q)])
            cost = np.concatenate([np.zeros(nz), np.ones(q)])
            bounds = [(None, None)] * nz + [(0.0, None)] * q
            res = linprog(cost, A_ub=A_ub, b_ub=self._c, bounds=bounds,
                          method="highs")
            if not res.success or res.fun > 1e-7 * max(1.0, np.abs(self._c).max()):
                raise Infeasible(
                    "equality constraints and the cone have empty intersection")
            w = res.x[:nz]
        self._w_feasible = w
        return w

    # -- convenience builders ------------------------------------------------

    @classmethod
    def from_curve_system(cls, model: FiniteModel1D, system: MarketFitSystem,
                          anchor: tuple | None = None, *,
                          check_feasible: bool = True) -> "ConstrainedProblem":
        """Constraint problem for a 1-d curve under a market-fit system.

        ``anchor=(x0, v0)`` pins the curve value at ``x0`` (for instance a
        unit discount factor at zero horizon) with one extra equality row.
        """
        Phi = basis_matrix(model.grid, system.X)
        B = system.A @ Phi
        b = system.b
        if anchor is not None:
            x0, v0 = anchor
            row = basis_matrix(model.grid, [float(x0)])
            B = np.vstack([row, B])
            b = np.concatenate([[float(v0)], b])
        return cls(model.coeff_cov, B, b, model.cone_matrix(),
                   check_feasible=check_feasible)

    @classmethod
    def from_panel(cls, model: FiniteModel2D, dated_systems,
                   anchor: tuple | None = None, *,
                   check_feasible: bool = True) -> "ConstrainedProblem":
        """Stacked constraints from per-date systems on a surface model.

        ``dated_systems`` is a sequence of ``(t, system)`` pairs with ``t``
        the quotation position on the model's t-axis.  ``anchor=(x0, v0)``
        pins the surface value at ``(x0, t)`` for every date.
        """
        blocks, rhs = [], []
        for t, system in dated_systems:
            H = basis_matrix_2d(model, system.X, float(t))
            blocks.append(system.A @ H)
            rhs.append(system.b)
            if anchor is not None:
                x0, v0 = anchor
                blocks.append(basis_matrix_2d(model, [float(x0)], float(t)))
                rhs.append(np.array([float(v0)]))
        B = np.vstack(blocks)
        b = np.concatenate(rhs)
        return cls(model.coeff_cov, B, b, model.cone_matrix(),
                   check_feasible=check_feasible)


@dataclass
class ModeSolution:
    """Mode of the constrained coefficient density, with its certificates."""

    coeffs: np.ndarray
    objective: float
    active: list = field(default_factory=list)
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


def _least_distance_active_set(D: np.ndarray, c: np.ndarray, w0: np.ndarray,
                               max_iter: int) -> tuple:
    """min 1/2 ||w||^2 subject to D w <= c, rows of D unit-norm.

    Primal active-set with Bland's smallest-index rule.  Returns the
    minimizer, the working set and its multipliers, and iteration count.
    """
    q, nz = D.shape
    w = w0.copy()
    W: list[int] = []
    mu_W = np.zeros(0)
    scale = 1.0 + float(np.abs(c).max()) if q else 1.0
    for it in range(1, max_iter + 1):
        if W:
            Dw = D[W]
            v, *_ = np.linalg.lstsq(Dw, c[W], rcond=None)
        else:
            v = np.zeros(nz)
        if np.max(np.abs(v - w), initial=0.0) <= 1e-11 * (1.0 + np.abs(w).max(initial=0.0)):
            if not W:
                return w, W, mu_W, it
            # stationarity: v + D_W^T mu = 0
            mu_W, *_ = np.linalg.lstsq(D[W].T, -v, rcond=None)
            if np.min(mu_W) >= -1e-9 * scale:
                return v, W, mu_W, it
            drop = min(j for j, m in zip(W, mu_W) if m < -1e-9 * scale)
            mu_W = np.zeros(0)
            W.remove(drop)
            continue
        p = v - w
        step = 1.0
        block = -1
        in_w = set(W)
        # ratio test in ascending index order: first strict improvement wins,
        # which is Bland's smallest-index rule
        for i in range(q):
            if i in in_w:
                continue
            d = float(D[i] @ p)
            if d > 1e-13 * scale:
                slack = max(c[i] - float(D[i] @ w), 0.0)
                a = slack / d
                if a < step - 1e-15:
                    step = a
                    block = i
        w = w + step * p
        if block >= 0:
            W.append(block)
    raise MaxIterations(f"active-set did not converge in {max_iter} iterations")


def solve_mode(problem: ConstrainedProblem, max_iter: int | None = None) -> ModeSolution:
    """Most likely coefficient vector under both constraint sets.

    The strictly convex objective ``1/2 xi^T Gamma^{-1} xi`` has a unique
    minimizer over the (nonempty) feasible set; the returned solution
    carries multipliers certifying the KKT conditions.
    """
    w0 = problem.feasible_start()
    if max_iter is None:
        max_iter = 50 * (problem._D.shape[0] + 10)
    w, W, mu_W, iters = _least_distance_active_set(problem._D, problem._c,
                                                   w0, max_iter)
    coeffs = problem.lift(w)
    zfull = problem._zp + problem._Z @ w
    objective = 0.5 * float(zfull @ zfull)
    # multipliers in coefficient space; the reduced working-set multipliers
    # carry over after undoing the row normalisation of D
    mu = np.zeros(problem.G.shape[0])
    for j, m in zip(W, mu_W):
        mu[problem._kept_rows[j]] = max(m, 0.0) / problem._row_norms[j]
    lam = np.zeros(problem.B.shape[0])
    if problem.B.shape[0]:
        Bw = problem.B @ problem.L
        rhs = -(problem._zp + problem._Z @ w)
        if problem.G.shape[0]:
            rhs = rhs - (problem.G @ problem.L).T @ mu
        lam, *_ = np.linalg.lstsq(Bw.T, rhs, rcond=None)
    active = sorted(int(i) for i in np.flatnonzero(mu > 0.0))
    return ModeSolution(coeffs, objective, active, lam, mu, iters)


def mode_curve(model: FiniteModel1D, system: MarketFitSystem,
               anchor: tuple | None = None) -> Curve1D:
    """Most likely curve fitting the system under the model's cone."""
    problem = ConstrainedProblem.from_curve_system(model, system, anchor)
    return model.curve(solve_mode(problem).coeffs)


def mode_surface(model: FiniteModel2D, dated_systems,
                 anchor: tuple | None = None) -> Surface2D:
    """Most likely surface fitting per-date systems under the model's cone."""
    problem = ConstrainedProblem.from_panel(model, dated_systems, anchor)
    return model.surface(solve_mode(problem).coeffs)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass
class SampleResult:
    """Sampled coefficient vectors plus sampler accounting."""

    draws: np.ndarray            # (n, dim)
    n_proposed: int
    n_accepted: int
    method: str                  # "rejection" or "gibbs"

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_proposed if self.n_proposed else float("nan")


_CHUNK = 1024          # draws per RNG stream; fixed so results do not depend
                       # on how draws are partitioned across workers
_BLOCK = 2048          # proposals per vectorized rejection round


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))


def _rejection_chunk(rng, w_mode, D, c, n, counters, min_rate, rate_budget):
    """Accept ``n`` reduced draws via mode-recentred tilted rejection.

    Proposals are ``w_mode + N(0, I)``; a proposal ``y`` inside the polytope
    is accepted with probability ``exp(||w_mode||^2 - y . w_mode)``, which the
    optimality of the mode bounds by one.  ``counters`` accumulates
    (proposed, accepted) across chunks for the rate guard.
    """
    nz = w_mode.shape[0]
    m2 = float(w_mode @ w_mode)
    out = np.empty((n, nz))
    got = 0
    while got < n:
        y = w_mode[None, :] + rng.standard_normal((_BLOCK, nz))
        ok = np.all(y @ D.T <= c[None, :], axis=1) if D.shape[0] else np.ones(_BLOCK, bool)
        if m2 > 0.0:
            logr = m2 - y @ w_mode
            ok &= np.log(rng.uniform(size=_BLOCK)) <= np.minimum(logr, 0.0)
        counters[0] += _BLOCK
        counters[1] += int(ok.sum())
        take = y[ok][: n - got]
        out[got: got + take.shape[0]] = take
        got += take.shape[0]
        if (counters[0] >= rate_budget
                and counters[1] < min_rate * counters[0]):
            raise AcceptanceTooLow(
                f"acceptance rate {counters[1] / counters[0]:.2e} below "
                f"{min_rate:.0e} after {counters[0]} proposals")
    return out


def _gibbs_draws(w_start, D, c, n, seed, burn_in=100, thin=10):
    """Thinned Gibbs draws from N(0, I) truncated to ``D w <= c``.

    Runs ``ceil(n / thin)`` parallel chains started at ``w_start``; each
    chain is burnt in and then sampled every ``thin`` sweeps, so the draw
    stream is reproducible from the seed alone.
    """
    nz = w_start.shape[0]
    n_chains = max(1, -(-n // thin))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    W = np.tile(w_start, (n_chains, 1)).T          # (nz, n_chains)
    q = D.shape[0]
    R = c[:, None] - D @ W if q else np.zeros((0, n_chains))
    draws = []
    sweeps = burn_in + thin * -(-n // n_chains)
    tiny = 1e-300
    for sweep in range(sweeps):
        for j in range(nz):
            wj = W[j]
            if q:
                r = R + np.outer(D[:, j], wj)      # bounds with w_j removed
                dj = D[:, j]
                lo = np.full(n_chains, -np.inf)
                hi = np.full(n_chains, np.inf)
                pos = dj > 1e-300
                neg = dj < -1e-300
                if pos.any():
                    hi = np.min(r[pos] / dj[pos, None], axis=0)
                if neg.any():
                    lo = np.max(r[neg] / dj[neg, None], axis=0)
            else:
                lo = np.full(n_chains, -np.inf)
                hi = np.full(n_chains, np.inf)
            plo = ndtr(lo)
            phi = ndtr(hi)
            span = np.maximum(phi - plo, tiny)
            u = plo + span * rng.uniform(size=n_chains)
            new = ndtri(np.clip(u, tiny, 1.0 - 1e-16))
            new = np.clip(new, lo, hi)
            if q:
                R -= np.outer(D[:, j], new - wj)
            W[j] = new
        if sweep >= burn_in and (sweep - burn_in) % thin == thin - 1:
            draws.append(W.T.copy())
    stacked = np.concatenate(draws, axis=0)
    return stacked[:n]


def sample_paths(problem: ConstrainedProblem, n_samples: int, seed: int,
                 method: str = "auto", min_rate: float = 1e-4,
                 rate_budget: int = 100_000) -> SampleResult:
    """Draw coefficient vectors satisfying both constraint sets.

    Draws are reproducible from ``seed`` and are generated in fixed chunks
    of independent RNG streams, so the first k draws never depend on how
    many are requested or how the work is partitioned.  ``method`` is
    ``"rejection"``, ``"gibbs"`` or ``"auto"`` (rejection with automatic
    Gibbs fallback when the acceptance rate drops below ``min_rate`` within
    ``rate_budget`` proposals).
    """
    if n_samples < 1:
        raise InvalidSpec("n_samples must be positive")
    sol = solve_mode(problem) if problem._D.shape[0] else None
    w_mode = (np.zeros(problem.n_reduced) if sol is None
              else _reduced_mode(problem, sol))
    counters = [0, 0]
    if method not in ("auto", "rejection", "gibbs"):
        raise InvalidSpec(f"unknown sampling method {method!r}")
    if method in ("auto", "rejection"):
        try:
            chunks = []
            for ci in range(-(-n_samples // _CHUNK)):
                take = min(_CHUNK, n_samples - ci * _CHUNK)
                rng = _chunk_rng(seed, ci)
                chunks.append(_rejection_chunk(rng, w_mode, problem._D,
                                               problem._c, take, counters,
                                               min_rate, rate_budget))
            W = np.concatenate(chunks, axis=0)
            draws = (problem.L @ (problem._zp[:, None]
                                  + problem._Z @ W.T)).T
            return SampleResult(draws, counters[0], counters[1], "rejection")
        except AcceptanceTooLow:
            if method == "rejection":
                raise
    W = _gibbs_draws(w_mode, problem._D, problem._c, n_samples, seed)
    draws = (problem.L @ (problem._zp[:, None] + problem._Z @ W.T)).T
    return SampleResult(draws, counters[0] + n_samples, n_samples, "gibbs")


def _reduced_mode(problem: ConstrainedProblem, sol: ModeSolution) -> np.ndarray:
    z = sla.solve_triangular(problem.L, sol.coeffs, lower=True)
    return problem._Z.T @ (z - problem._zp)


def kkt_residuals(problem: ConstrainedProblem, sol: ModeSolution) -> dict:
    """Diagnostics of the KKT conditions at a mode solution.

    Returns the stationarity residual of ``Gamma^{-1} xi + B^T lam + G^T mu``
    (relative to the gradient norm), the equality residual, the largest
    inequality violation and the most negative multiplier.
    """
    grad = sla.cho_solve((problem.L, True), sol.coeffs)
    station = grad.copy()
    if problem.B.shape[0]:
        station = station + problem.B.T @ sol.eq_multipliers
    if problem.G.shape[0]:
        station = station + problem.G.T @ sol.ineq_multipliers
    denom = max(1.0, float(np.linalg.norm(grad)))
    eq = (float(np.abs(problem.B @ sol.coeffs - problem.b).max())
          if problem.B.shape[0] else 0.0)
    ineq = (float((problem.G @ sol.coeffs).max()) if problem.G.shape[0] else 0.0)
    min_mu = float(sol.ineq_multipliers.min()) if sol.ineq_multipliers.size else 0.0
    return {"stationarity": float(np.linalg.norm(station)) / denom,
            "equality": eq, "inequality": ineq, "min_multiplier": min_mu}
