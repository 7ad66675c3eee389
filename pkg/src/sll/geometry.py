"""Spatial discretization of the unit interval with flux boundary coupling.

The domain is D = (0, 1) with the two-point boundary {0, 1}.  Interior
fields are sampled on the uniform nodes x_i = i*h, i = 1..n, h = 1/(n+1);
boundary quantities live in R^2 ordered (left, right).  All operations
accept leading batch dimensions, i.e. interior fields of shape (..., n)
and boundary fields of shape (..., 2), so replica ensembles vectorize.

Sign convention for the outward normal: the left normal points in -x,
the right normal in +x, so a prescribed flux g = (g_L, g_R) means
-u'(0) = g_L and u'(1) = g_R.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


class DimensionError(ValueError):
    """Raised when a field's trailing dimension does not match the grid."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on (0, 1) with ``n_interior`` interior nodes.

    h * (n_interior + 1) == 1 up to rounding; n_interior >= 3 so the
    two-node trace/ghost stencils never overlap.
    """

    n_interior: int

    def __post_init__(self):
        if self.n_interior < 3:
            raise ValueError(f"n_interior must be >= 3, got {self.n_interior}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior node coordinates, shape (n_interior,)."""
        return np.arange(1, self.n_interior + 1) * self.h


def _check_interior(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.n_interior:
        raise DimensionError(
            f"interior field has last dim {u.shape[-1]}, grid expects {grid.n_interior}"
        )
    return u


def _check_boundary(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != 2:
        raise DimensionError(f"boundary field has last dim {b.shape[-1]}, expected 2")
    return b


def boundary_values_from_flux(u: np.ndarray, flux: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Reconstruct the boundary values of u from the outward-flux condition.

    Uses the second-order one-sided derivative; e.g. on the left,
    -u'(0) ~ (3u(0) - 4u_1 + u_2) / (2h) = g_L solved for u(0).
    Returns shape (..., 2).
    """
    u = _check_interior(u, grid)
    flux = _check_boundary(flux)
    h = grid.h
    left = (2.0 * h * flux[..., 0] + 4.0 * u[..., 0] - u[..., 1]) / 3.0
    right = (2.0 * h * flux[..., 1] + 4.0 * u[..., -1] - u[..., -2]) / 3.0
    return np.stack([left, right], axis=-1)


def laplacian_with_flux(u: np.ndarray, flux: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Second-difference Laplacian with the flux condition du/dn = flux.

    The boundary value beyond each end node is eliminated through the
    one-sided flux stencil (see :func:`boundary_values_from_flux`), which
    keeps the stencil exact for quadratics.  Linear in (u, flux).
    """
    u = _check_interior(u, grid)
    flux = _check_boundary(flux)
    h2 = grid.h * grid.h
    lap = np.empty_like(u)
    lap[..., 1:-1] = (u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]) / h2
    ub = boundary_values_from_flux(u, flux, grid)
    lap[..., 0] = (ub[..., 0] - 2.0 * u[..., 0] + u[..., 1]) / h2
    lap[..., -1] = (u[..., -2] - 2.0 * u[..., -1] + ub[..., 1]) / h2
    return lap


def trace(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Boundary restriction of an interior field by linear extrapolation.

    Returns (u(0), u(1)) estimated from the two nearest nodes; exact for
    affine fields, O(h^3) error for smooth ones.
    """
    u = _check_interior(u, grid)
    left = 2.0 * u[..., 0] - u[..., 1]
    right = 2.0 * u[..., -1] - u[..., -2]
    return np.stack([left, right], axis=-1)


def l2_norm(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Discrete L2(D) norm sqrt(h * sum u_i^2) over the last axis."""
    u = _check_interior(u, grid)
    return np.sqrt(grid.h * np.sum(u * u, axis=-1))


def boundary_norm(b: np.ndarray) -> np.ndarray:
    """Euclidean norm on L2 of the two-point boundary."""
    b = _check_boundary(b)
    return np.sqrt(np.sum(b * b, axis=-1))


def boundary_inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean inner product on the two-point boundary."""
    return np.sum(_check_boundary(a) * _check_boundary(b), axis=-1)


def grad_energy(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Discrete gradient energy h * sum (du/h)^2 including boundary segments.

    The two boundary segments use trace values, which for linear
    extrapolation duplicate the adjacent interior difference.
    """
    u = _check_interior(u, grid)
    h = grid.h
    d = np.diff(u, axis=-1) / h
    tr = trace(u, grid)
    d_left = (u[..., 0] - tr[..., 0]) / h
    d_right = (tr[..., 1] - u[..., -1]) / h
    return h * (np.sum(d * d, axis=-1) + d_left * d_left + d_right * d_right)


def h1_norm(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Discrete H1(D) norm sqrt(||u||_L2^2 + grad energy)."""
    return np.sqrt(grid.h * np.sum(np.asarray(u) ** 2, axis=-1) + grad_energy(u, grid))


def norms(values: np.ndarray, grid: Grid1D) -> dict:
    """Norm bundle for a field: {'l2': ...} plus 'h1' for interior fields.

    Boundary fields are recognized by a trailing dimension of 2 (the grid
    enforces n_interior >= 3, so the shapes never collide).
    """
    values = np.asarray(values, dtype=float)
    if values.shape[-1] == 2:
        return {"l2": boundary_norm(values)}
    return {"l2": l2_norm(values, grid), "h1": h1_norm(values, grid)}


def _riesz_banded(grid: Grid1D) -> np.ndarray:
    """Banded form of I - lap with zero-flux ghost elimination."""
    n = grid.n_interior
    h2 = grid.h * grid.h
    ab = np.zeros((3, n))
    ab[0, 1:] = -1.0 / h2
    ab[2, :-1] = -1.0 / h2
    ab[1, :] = 1.0 + 2.0 / h2
    ab[1, 0] = 1.0 + 2.0 / (3.0 * h2)
    ab[0, 1] = -2.0 / (3.0 * h2)
    ab[1, -1] = 1.0 + 2.0 / (3.0 * h2)
    ab[2, -2] = -2.0 / (3.0 * h2)
    return ab


def dual_norm_hminus1(f: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Discrete H^-1(D) dual norm via the Riesz solve (I - lap) w = f.

    The solve uses the natural zero-flux boundary closure (dual of the
    full H^1 space, where the sup in the dual norm ranges).  Returns
    sqrt(<f, w>_L2); a residual above 1e-8 reports a solver fault.
    """
    f = _check_interior(f, grid)
    ab = _riesz_banded(grid)
    flat = f.reshape(-1, grid.n_interior)
    w = solve_banded((1, 1), ab, flat.T).T
    n = grid.n_interior
    h2 = grid.h * grid.h
    aw = (1.0 + 2.0 / h2) * w
    aw[..., 1:] -= w[..., :-1] / h2
    aw[..., :-1] -= w[..., 1:] / h2
    aw[..., 0] = (1.0 + 2.0 / (3.0 * h2)) * w[..., 0] - (2.0 / (3.0 * h2)) * w[..., 1]
    aw[..., -1] = (1.0 + 2.0 / (3.0 * h2)) * w[..., -1] - (2.0 / (3.0 * h2)) * w[..., -2]
    resid = np.abs(aw - flat).max()
    if resid > 1e-8 * max(1.0, np.abs(flat).max()):
        raise RuntimeError(f"Riesz solve residual {resid:.3e} exceeds 1e-8")
    val = grid.h * np.sum(flat * w, axis=-1)
    val = np.maximum(val, 0.0)
    return np.sqrt(val).reshape(f.shape[:-1])
