"""Finite-dimensional curve model on a regular knot grid.

A curve on ``[x_min, x_max]`` is represented as an intercept plus a linear
combination of integrated hat functions,

    Y(x) = eta + sum_j  xi_j * int_{x_min}^{x} hat_j(u) du,

where ``hat_j`` is the triangle of half-width ``mesh`` centred at knot ``u_j``
(clipped to the domain at the two boundary knots).  The slope of ``Y`` at a
knot ``u_k`` is exactly ``xi_k``, so sign constraints on the coefficients are
equivalent to monotonicity of the whole curve: Y is non-increasing on the
domain if and only if every ``xi_j <= 0``.

The coefficient vector ``(eta, xi_0, ..., xi_N)`` is Gaussian with the
covariance of the underlying process value at ``x_min`` together with its
slopes at the knots, which requires a twice-differentiable kernel.

The two-dimensional variant represents a surface as a bilinear combination
of hat functions in both axes; its coefficients are the surface values at
the grid nodes, and monotonicity in ``x`` is equivalent to ordering of
neighbouring coefficients along the ``x`` axis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InvalidSpec, OutOfDomain, SingularCovariance


class Cone(str, enum.Enum):
    """Monotonicity constraint on the curve (inequalities on coefficients)."""

    NON_INCREASING = "non_increasing"
    NON_DECREASING = "non_decreasing"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> "Cone":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for member in cls:
            if member.value == key:
                return member
        if key in ("unconstrained", "free", ""):
            return cls.NONE
        raise InvalidSpec(f"unknown cone {value!r}")


@dataclass(frozen=True)
class KnotGrid1D:
    """Regular subdivision of ``[x_min, x_max]`` into ``n_cells`` intervals."""

    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1:
            raise InvalidSpec("n_cells must be at least 1")
        if not self.x_max > self.x_min:
            raise InvalidSpec("x_max must exceed x_min")

    @property
    def mesh(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def knots(self) -> np.ndarray:
        return self.x_min + self.mesh * np.arange(self.n_cells + 1)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pad = 1e-12 * max(1.0, abs(self.x_max))
        return (x >= self.x_min - pad) & (x <= self.x_max + pad)

    def require_inside(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not np.all(self.contains(x)):
            bad = np.asarray(x)[~self.contains(x)]
            raise OutOfDomain(
                f"points {bad.ravel()[:5]} outside [{self.x_min}, {self.x_max}]")
        return x


def hat_value(x, center: float, mesh: float) -> np.ndarray:
    """Triangle function of half-width ``mesh`` centred at ``center``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(1.0 - np.abs(x - center) / mesh, 0.0)


def _triangle_cdf(s: np.ndarray, mesh: float) -> np.ndarray:
    """Integral of the unit triangle centred at 0 from -inf to ``s``."""
    s = np.clip(s, -mesh, mesh)
    left = (s + mesh) ** 2 / (2.0 * mesh)
    right = mesh - (mesh - s) ** 2 / (2.0 * mesh)
    return np.where(s <= 0.0, left, right)


def hat_integral(x, j: int, grid: KnotGrid1D) -> np.ndarray:
    """Integral of the j-th hat from the lower domain bound up to ``x``.

    Nondecreasing in x; equals 0 below the hat's support and the (possibly
    boundary-clipped) triangle area above it.
    """
    x = grid.require_inside(x)
    uj = grid.knots[j]
    d = grid.mesh
    return _triangle_cdf(x - uj, d) - _triangle_cdf(grid.x_min - uj, d)


def hat_matrix(grid: KnotGrid1D, x) -> np.ndarray:
    """Hat values at points ``x``: shape (len(x), n_cells + 1)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return hat_value(x[:, None], grid.knots[None, :], grid.mesh)


def basis_matrix(grid: KnotGrid1D, X, include_intercept: bool = True) -> np.ndarray:
    """Evaluation matrix of the integrated-hat basis at curve points ``X``.

    Row i is ``(1, phi_0(x_i), ..., phi_N(x_i))`` (the leading 1 column is
    dropped when ``include_intercept`` is false).  Points must lie inside
    the grid domain.
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    grid.require_inside(X)
    u = grid.knots
    d = grid.mesh
    s = X[:, None] - u[None, :]
    phi = _triangle_cdf(s, d) - _triangle_cdf(grid.x_min - u[None, :], d)
    if not include_intercept:
        return phi
    return np.hstack([np.ones((X.shape[0], 1)), phi])


# ---------------------------------------------------------------------------
# one-dimensional model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteModel1D:
    """Knot grid, kernel and coefficient covariance of the 1-d curve model."""

    grid: KnotGrid1D
    kernel: kernels.KernelSpec
    coeff_cov: np.ndarray = field(repr=False)
    cone: Cone = Cone.NON_INCREASING

    @property
    def dim(self) -> int:
        return self.grid.n_cells + 2

    def basis(self, X) -> np.ndarray:
        return basis_matrix(self.grid, X)

    def curve(self, coeffs) -> "Curve1D":
        return Curve1D(self, np.asarray(coeffs, dtype=float))

    def cone_matrix(self) -> np.ndarray:
        return cone_constraints(self)


def build_model_1d(grid: KnotGrid1D, kernel: kernels.KernelSpec,
                   cone: Cone | str = Cone.NON_INCREASING) -> FiniteModel1D:
    """Assemble the coefficient covariance for the 1-d model.

    The covariance couples the process value at the lower bound with the
    process slopes at all knots, hence the kernel must be twice
    differentiable.  The kernel nugget is added to the diagonal; a Cholesky
    factorization is attempted to certify the matrix.
    """
    cone = Cone.parse(cone)
    u = grid.knots
    n = u.shape[0]
    cov = np.empty((n + 1, n + 1))
    k00, _, d01, _ = kernels.eval_cov_derivs(kernel, u[0], u[0])
    cov[0, 0] = k00
    # value-at-x_min against slopes: derivative in the second argument
    _, _, dxp, _ = kernels.eval_cov_derivs(kernel, u[0], u)
    cov[0, 1:] = dxp
    _, dx, _, _ = kernels.eval_cov_derivs(kernel, u, u[0])
    cov[1:, 0] = dx
    _, _, _, dxdxp = kernels.eval_cov_derivs(kernel, u[:, None], u[None, :])
    cov[1:, 1:] = dxdxp
    cov[np.diag_indices_from(cov)] += kernel.sigma2 * kernel.nugget
    cov = (cov + cov.T) / 2.0
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(
            f"coefficient covariance is not positive definite "
            f"(family={kernel.family}, theta={kernel.theta}, "
            f"nugget={kernel.nugget}): {exc}") from exc
    return FiniteModel1D(grid, kernel, cov, cone)


class Curve1D:
    """Curve evaluator backed by a model and a coefficient vector."""

    def __init__(self, model: FiniteModel1D, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if coeffs.shape[0] != model.dim:
            raise InvalidSpec(
                f"expected {model.dim} coefficients, got {coeffs.shape[0]}")
        self.model = model
        self.coeffs = coeffs

    @property
    def domain(self) -> tuple:
        return (self.model.grid.x_min, self.model.grid.x_max)

    def value(self, x) -> np.ndarray:
        return basis_matrix(self.model.grid, x) @ self.coeffs

    def slope(self, x) -> np.ndarray:
        """Analytic derivative: hat values weighted by the slope coefficients."""
        x = self.model.grid.require_inside(np.atleast_1d(np.asarray(x, float)))
        return hat_matrix(self.model.grid, x) @ self.coeffs[1:]

    def __call__(self, x) -> np.ndarray:
        return self.value(x)


def eval_path_1d(model: FiniteModel1D, coeffs, x) -> np.ndarray:
    """Value of the finite-dimensional curve with coefficients ``coeffs``."""
    return model.curve(coeffs).value(x)


# ---------------------------------------------------------------------------
# two-dimensional model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteModel2D:
    """Bilinear hat-basis surface model over an (x, t) rectangle.

    Coefficients are the surface values at the grid nodes, flattened with
    the t-index fastest: slot of node (i, j) is ``i * (n_t + 1) + j``.
    """

    xgrid: KnotGrid1D
    tgrid: KnotGrid1D
    kernel: tuple
    coeff_cov: np.ndarray = field(repr=False)
    cone: Cone = Cone.NON_INCREASING

    @property
    def shape(self) -> tuple:
        return (self.xgrid.n_cells + 1, self.tgrid.n_cells + 1)

    @property
    def dim(self) -> int:
        nx, nt = self.shape
        return nx * nt

    def flat_index(self, i: int, j: int) -> int:
        return i * self.shape[1] + j

    def surface(self, coeffs) -> "Surface2D":
        return Surface2D(self, np.asarray(coeffs, dtype=float))

    def cone_matrix(self) -> np.ndarray:
        return cone_constraints(self)


def grid_nodes(model: FiniteModel2D) -> np.ndarray:
    """All (x, t) grid nodes in flat order, shape (dim, 2)."""
    ux = model.xgrid.knots
    vt = model.tgrid.knots
    xx, tt = np.meshgrid(ux, vt, indexing="ij")
    return np.column_stack([xx.ravel(), tt.ravel()])


def build_model_2d(xgrid: KnotGrid1D, tgrid: KnotGrid1D,
                   kernel: tuple, cone: Cone | str = Cone.NON_INCREASING
                   ) -> FiniteModel2D:
    """Assemble the node-value covariance of the surface model.

    ``kernel`` is a pair of one-dimensional specs, one per axis; the
    covariance between two nodes is the tensor-product kernel evaluated at
    them.  No derivatives are involved, so any family works.
    """
    cone = Cone.parse(cone)
    specs = tuple(kernel)
    if len(specs) != 2:
        raise InvalidSpec("2-d model needs exactly two kernel specs (x, t)")
    model = FiniteModel2D(xgrid, tgrid, specs, np.empty((0, 0)), cone)
    nodes = grid_nodes(model)
    cov = kernels.tensor_gram(specs, nodes)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    return FiniteModel2D(xgrid, tgrid, specs, cov, cone)


def basis_row_2d(model: FiniteModel2D, x: float, t: float) -> np.ndarray:
    """Bilinear hat weights of the point (x, t) over the flat node order."""
    model.xgrid.require_inside(x)
    model.tgrid.require_inside(t)
    gx = hat_value(x, model.xgrid.knots, model.xgrid.mesh)
    ht = hat_value(t, model.tgrid.knots, model.tgrid.mesh)
    return np.kron(gx, ht)


def basis_matrix_2d(model: FiniteModel2D, X, t: float) -> np.ndarray:
    """Evaluation matrix at maturities ``X`` for one quotation position ``t``.

    Each row sums to one for points inside the grid (partition of unity of
    the hat bases).
    """
    X = np.atleast_1d(np.asarray(X, dtype=float))
    model.xgrid.require_inside(X)
    model.tgrid.require_inside(t)
    gx = hat_matrix(model.xgrid, X)
    ht = hat_value(float(t), model.tgrid.knots, model.tgrid.mesh)
    # row k is kron(gx[k], ht)
    return np.einsum("ki,j->kij", gx, ht).reshape(X.shape[0], -1)


class Surface2D:
    """Surface evaluator backed by a 2-d model and flat node coefficients."""

    def __init__(self, model: FiniteModel2D, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if coeffs.shape[0] != model.dim:
            raise InvalidSpec(
                f"expected {model.dim} coefficients, got {coeffs.shape[0]}")
        self.model = model
        self.coeffs = coeffs

    def value(self, x, t) -> float:
        return float(basis_row_2d(self.model, float(x), float(t)) @ self.coeffs)

    def values_grid(self, xs, ts) -> np.ndarray:
        """Surface values on the product grid xs x ts, shape (len(xs), len(ts))."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self.model.xgrid.require_inside(xs)
        self.model.tgrid.require_inside(ts)
        gx = hat_matrix(self.model.xgrid, xs)
        ht = hat_matrix(self.model.tgrid, ts)
        nodes = self.coeffs.reshape(self.model.shape)
        return gx @ nodes @ ht.T

    def __call__(self, x, t) -> float:
        return self.value(x, t)


# ---------------------------------------------------------------------------
# monotonicity cones
# ---------------------------------------------------------------------------

def cone_constraints(model) -> np.ndarray:
    """Inequality matrix G of the model's cone, convention ``G coeffs <= 0``.

    1-d non-increasing: every slope coefficient is nonpositive (one row per
    knot).  2-d non-increasing in x: each coefficient is at most its
    neighbour at the previous x-knot, for every t-knot.  Returns an empty
    (0, dim) matrix for an unconstrained model.
    """
    if isinstance(model, FiniteModel1D):
        dim = model.dim
        if model.cone is Cone.NONE:
            return np.zeros((0, dim))
        sign = 1.0 if model.cone is Cone.NON_INCREASING else -1.0
        G = np.zeros((dim - 1, dim))
        G[:, 1:] = sign * np.eye(dim - 1)
        return G
    if isinstance(model, FiniteModel2D):
        nx, nt = model.shape
        dim = model.dim
        if model.cone is Cone.NONE:
            return np.zeros((0, dim))
        sign = 1.0 if model.cone is Cone.NON_INCREASING else -1.0
        rows = []
        for i in range(1, nx):
            for j in range(nt):
                row = np.zeros(dim)
                row[model.flat_index(i, j)] = sign
                row[model.flat_index(i - 1, j)] = -sign
                rows.append(row)
        return np.vstack(rows)
    raise InvalidSpec(f"unsupported model type {type(model).__name__}")
