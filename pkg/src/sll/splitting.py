"""Three-way decomposition of the velocity and boundary-velocity fields.

Along a recorded trajectory, v splits into a decaying transient v1, a
forced relaxation v2 driven by the recorded interior forcing, and a
damped noise part v3; theta splits the same way on the boundary.  The
sub-steppers reuse the full stepper's frozen-forcing convention and the
same keyed noise path, so the recombination v1 + v2 + v3 == v holds as
an algebraic identity up to round-off at every step (the per-step
round-off is itself damped by exp(-dt/eps), so it never accumulates).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .geometry import Grid1D
from .full_system import Trajectory, boundary_forcing, velocity_forcing
from .noise import NoisePair, ou_scale
from .noise import ou_update as _ou_update

ou_update = _ou_update  # noise-channel sub-step (v3/theta3) is the exact OU transition


def v1_exact(v0: np.ndarray, eps: float, t) -> np.ndarray:
    """Closed-form decaying transient v0 * exp(-t / eps).

    Also the boundary transient with theta_0 in place of v0.  Underflows
    cleanly to zero for t >> eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return np.asarray(v0, dtype=float) * np.exp(-t / eps)


def relax_step(x: np.ndarray, forcing: np.ndarray, eps: float, dt: float) -> np.ndarray:
    """One frozen-forcing relaxation step x' = F + (x - F) exp(-dt/eps)."""
    return forcing + (x - forcing) * np.exp(-dt / eps)


def step_v2(v2: np.ndarray, u_n: np.ndarray, theta_n: np.ndarray,
            eps: float, dt: float, grid: Grid1D) -> np.ndarray:
    """Forced velocity sub-step driven by the recorded (u, theta) at step n."""
    return relax_step(v2, velocity_forcing(u_n, theta_n, grid), eps, dt)


def step_theta2(th2: np.ndarray, delta_n: np.ndarray, v_next: np.ndarray,
                eps: float, dt: float, grid: Grid1D) -> np.ndarray:
    """Forced boundary sub-step; the forcing uses the recorded post-step velocity."""
    return relax_step(th2, boundary_forcing(delta_n, v_next, grid), eps, dt)


@dataclass
class SplitState:
    """The six sub-fields at one time."""

    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    th1: np.ndarray
    th2: np.ndarray
    th3: np.ndarray
    t: float = 0.0


@dataclass
class SplitRun:
    """Split sub-field series along a recorded trajectory plus gap audits."""

    times: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    th1: np.ndarray
    th2: np.ndarray
    th3: np.ndarray
    gap_v: np.ndarray
    gap_theta: np.ndarray


class SplitMarcher:
    """Streaming form of the decomposition along a full-system run.

    Advance with the recorded step context (state before, state after,
    the increment consumed); sub-states are kept in place so ensemble
    audits never materialize full trajectories.
    """

    def __init__(self, v0: np.ndarray, theta0: np.ndarray, eps: float, alpha: float,
                 dt: float, grid: Grid1D):
        self.grid = grid
        self.eps = eps
        self.dt = dt
        self.beta = np.exp(-dt / eps)
        self.kick = ou_scale(eps, alpha, dt)
        self.v1 = np.array(v0, dtype=float, copy=True)
        self.v2 = np.zeros_like(self.v1)
        self.v3 = np.zeros_like(self.v1)
        self.th1 = np.array(theta0, dtype=float, copy=True)
        self.th2 = np.zeros_like(self.th1)
        self.th3 = np.zeros_like(self.th1)

    def advance(self, u_before, theta_before, delta_before, v_after, dw1, dw2):
        self.v1 = self.v1 * self.beta
        self.v2 = step_v2(self.v2, u_before, theta_before, self.eps, self.dt, self.grid)
        self.v3 = self.v3 * self.beta + self.kick * dw1
        self.th1 = self.th1 * self.beta
        self.th2 = step_theta2(self.th2, delta_before, v_after, self.eps, self.dt, self.grid)
        self.th3 = self.th3 * self.beta + self.kick * dw2

    def gaps(self, v: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Max-norm recombination defects against the full-system fields."""
        gv = np.abs(self.v1 + self.v2 + self.v3 - v).max(axis=-1)
        gt = np.abs(self.th1 + self.th2 + self.th3 - theta).max(axis=-1)
        return gv, gt


def split_trajectory(traj: Trajectory, noise: NoisePair | None, grid: Grid1D) -> SplitRun:
    """Rerun the decomposition against a recorded full-system trajectory.

    noise must be a fresh pair with the same keys the full run consumed
    (or None for a deterministic run); the sub-steps then replay the
    identical increments.  Gap series are the max-norm recombination
    defects against the recorded v and theta.
    """
    if traj.u is None:
        raise ValueError("trajectory was recorded without fields")
    p = traj.params
    n = len(traj.times) - 1
    marcher = SplitMarcher(traj.v[0], traj.theta[0], p.eps, p.alpha, p.dt, grid)

    shape = (n + 1,) + traj.v.shape[1:]
    v1 = np.zeros(shape); v2 = np.zeros(shape); v3 = np.zeros(shape)
    bshape = (n + 1,) + traj.theta.shape[1:]
    th1 = np.zeros(bshape); th2 = np.zeros(bshape); th3 = np.zeros(bshape)
    v1[0] = marcher.v1
    th1[0] = marcher.th1

    for k in range(n):
        if noise is not None:
            inc = noise.increment(k, p.dt)
            dw1, dw2 = inc.dW1, inc.dW2
        else:
            dw1, dw2 = 0.0, 0.0
        marcher.advance(traj.u[k], traj.theta[k], traj.delta[k], traj.v[k + 1], dw1, dw2)
        v1[k + 1], v2[k + 1], v3[k + 1] = marcher.v1, marcher.v2, marcher.v3
        th1[k + 1], th2[k + 1], th3[k + 1] = marcher.th1, marcher.th2, marcher.th3

    gap_v = np.abs(v1 + v2 + v3 - traj.v).max(axis=-1)
    gap_theta = np.abs(th1 + th2 + th3 - traj.theta).max(axis=-1)
    return SplitRun(times=traj.times, v1=v1, v2=v2, v3=v3,
                    th1=th1, th2=th2, th3=th3, gap_v=gap_v, gap_theta=gap_theta)


def h_minus1_audit(v2: np.ndarray, grid: Grid1D, replica_axis: int | None = None) -> np.ndarray:
    """Dual-norm series of the forced velocity part.

    v2 is shaped (..., n); with replica_axis given, returns the MC mean
    over that axis.  The forced part is bounded uniformly in eps only in
    this dual norm (not in L2), hence the audit norm.
    """
    vals = geo.dual_norm_hminus1(v2, grid)
    if replica_axis is not None:
        vals = vals.mean(axis=replica_axis)
    return vals


def ou_moment_theory(eps: float, alpha: float, trace_q: float, t) -> np.ndarray:
    """Closed-form second moment of the damped noise channel.

    E ||x(t)||^2 solves y' = -(2/eps) y + eps^(2 alpha - 2) TrQ with
    y(0) = 0, i.e. (eps^(2 alpha - 1) TrQ / 2)(1 - exp(-2 t / eps)).
    """
    t = np.asarray(t, dtype=float)
    return eps ** (2.0 * alpha - 1.0) * trace_q / 2.0 * (-np.expm1(-2.0 * t / eps))
