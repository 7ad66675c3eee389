"""The two small-eps approximating systems.

For noise exponent alpha in [1/2, 1) the approximating system is the
stochastic parabolic equation with the dynamical boundary condition

    u_t - lap u + u - sin u = eps^alpha dW1/dt        in D
    delta_t + delta = -u_t + eps^alpha dW2/dt         on the boundary
    delta_t = du/dn,

solved by backward Euler in (lap - I) with explicit sin(u^n); the
boundary time derivative u_t is taken implicitly as
(trace(u^{n+1}) - trace(u^n))/dt, and since the trace stencil touches
only the two nodes nearest each endpoint, folding the flux condition
into the ghost elimination keeps the system strictly tridiagonal.

For alpha > 1 the approximating system is the deterministic wave system
with the same dynamical boundary condition: identical to the full
system with the noise amplitude set to zero, so the stepper delegates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .geometry import Grid1D, trace
from .full_system import FullParams, FullState, step_full
from .noise import WienerIncrement, zero_increment

WaveState = FullState


@dataclass
class ParabolicState:
    """Interior field and boundary displacement of the parabolic system."""

    u_bar: np.ndarray
    delta_bar: np.ndarray
    t: float = 0.0

    def copy(self) -> "ParabolicState":
        return ParabolicState(self.u_bar.copy(), self.delta_bar.copy(), self.t)


class ParabolicStepper:
    """Semi-implicit integrator; dt needs no eps scaling (non-stiff limit)."""

    def __init__(self, grid: Grid1D, eps: float, alpha: float, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.eps = eps
        self.alpha = alpha
        self.dt = dt
        self.amp = eps ** alpha
        n = grid.n_interior
        h2 = grid.h * grid.h
        hd = grid.h * dt
        ab = np.zeros((3, n))
        ab[1, :] = 1.0 / dt + 1.0 + 2.0 / h2
        ab[0, 1:] = -1.0 / h2
        ab[2, :-1] = -1.0 / h2
        ab[1, 0] = 1.0 / dt + 1.0 + 2.0 / (3.0 * h2) + 4.0 / (3.0 * hd)
        ab[0, 1] = -2.0 / (3.0 * h2) - 2.0 / (3.0 * hd)
        ab[1, -1] = 1.0 / dt + 1.0 + 2.0 / (3.0 * h2) + 4.0 / (3.0 * hd)
        ab[2, -2] = -2.0 / (3.0 * h2) - 2.0 / (3.0 * hd)
        self._ab = ab

    def _apply(self, w: np.ndarray) -> np.ndarray:
        """Dense re-application of the banded operator for the residual check."""
        ab = self._ab
        out = ab[1] * w
        out[..., 1:] += ab[2, :-1] * w[..., :-1]
        out[..., :-1] += ab[0, 1:] * w[..., 1:]
        return out

    def step(self, state: ParabolicState, inc: WienerIncrement | None) -> ParabolicState:
        """One step; inc carries plain increments over this stepper's dt."""
        grid, dt = self.grid, self.dt
        if inc is None:
            inc = zero_increment(grid, dt, state.u_bar.shape[:-1])
        if abs(inc.dt - dt) > 1e-12 * dt:
            raise ValueError(f"increment dt={inc.dt} does not match stepper dt={dt}")
        u, delta = state.u_bar, state.delta_bar
        tr_old = trace(u, grid)
        # known part of the flux: g = k - trace(u^{n+1})/dt
        k_bdry = -delta + tr_old / dt + self.amp * inc.dW2 / dt
        rhs = u / dt + np.sin(u) + self.amp * inc.dW1 / dt
        rhs = np.array(rhs, copy=True)
        rhs[..., 0] += 2.0 / (3.0 * grid.h) * k_bdry[..., 0]
        rhs[..., -1] += 2.0 / (3.0 * grid.h) * k_bdry[..., 1]
        flat = rhs.reshape(-1, grid.n_interior)
        w = solve_banded((1, 1), self._ab, flat.T).T.reshape(u.shape)
        resid = np.abs(self._apply(w) - rhs).max()
        if resid > 1e-8 * max(1.0, np.abs(rhs).max()):
            raise RuntimeError(f"parabolic solve residual {resid:.3e} exceeds 1e-8")
        g = k_bdry - trace(w, grid) / dt
        delta_new = delta + dt * g
        out = ParabolicState(w, delta_new, state.t + dt)
        if not (np.isfinite(w).all() and np.isfinite(delta_new).all()):
            raise RuntimeError(f"parabolic integration lost finiteness at t={out.t:.6g}")
        return out

    def flux(self, state_old: ParabolicState, state_new: ParabolicState,
             inc: WienerIncrement | None) -> np.ndarray:
        """The boundary flux the step imposed (for constraint audits)."""
        if inc is None:
            inc = zero_increment(self.grid, self.dt, state_old.u_bar.shape[:-1])
        k_bdry = (-state_old.delta_bar + trace(state_old.u_bar, self.grid) / self.dt
                  + self.amp * inc.dW2 / self.dt)
        return k_bdry - trace(state_new.u_bar, self.grid) / self.dt


def simulate_parabolic(stepper: ParabolicStepper, initial: ParabolicState,
                       n_steps: int, increments=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """March the parabolic system; increments is an optional per-step iterable.

    Returns (times, u series, delta series).
    """
    u_hist = np.zeros((n_steps + 1,) + initial.u_bar.shape)
    d_hist = np.zeros((n_steps + 1,) + initial.delta_bar.shape)
    u_hist[0] = initial.u_bar
    d_hist[0] = initial.delta_bar
    state = initial.copy()
    for k in range(n_steps):
        inc = None if increments is None else increments(k)
        state = stepper.step(state, inc)
        u_hist[k + 1] = state.u_bar
        d_hist[k + 1] = state.delta_bar
    times = np.arange(n_steps + 1) * stepper.dt
    return times, u_hist, d_hist


def step_wave(state: WaveState, params: FullParams, grid: Grid1D) -> WaveState:
    """Deterministic wave-limit step: the full stepper with zero increments."""
    return step_full(state, params, zero_increment(grid, params.dt, state.u.shape[:-1]), grid)
