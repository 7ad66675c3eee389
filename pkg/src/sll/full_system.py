"""Time integration of the stiff damped sine-Gordon system with boundary dynamics.

State is the 4-tuple (u, v, delta, theta) with v = u_t on the interior
and theta = delta_t on the boundary, coupled through the flux condition
delta_t = du/dn.  One step of the integrator:

    F      = lap_flux(u, theta) - u + sin u          (frozen forcing)
    v'     = F + (v - F) exp(-dt/eps) + OU kick (W1 channel)
    G      = -delta - trace(v')
    theta' = G + (theta - G) exp(-dt/eps) + OU kick (W2 channel)
    u'     = u + dt v'
    delta' = delta + dt theta'

The damping exp(-dt/eps) and the noise convolution are exact, so the
only stiffness left is the explicitly frozen Laplacian; the linearized
amplification factor gives the sharp step bound enforced by
:func:`check_stability`.  The same frozen-forcing convention is reused
verbatim by the splitting module, which makes the three-way velocity
decomposition recombine to round-off.

All steppers accept leading batch dimensions for replica ensembles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .geometry import Grid1D
from .noise import NoisePair, WienerIncrement, ou_scale, trace_of, zero_increment


class BlowUpError(RuntimeError):
    """Non-finite state during integration; carries the failure time."""

    def __init__(self, t: float):
        super().__init__(f"integration blew up at t={t:.6g}")
        self.t = t


def r_constraint_margins(r: float, eps: float, c_ti: float = 1.0) -> np.ndarray:
    """The four admissibility brackets for the pseudo-energy parameter r.

    All four must be positive for the shifted-energy coercivity argument
    to close; c_ti is the surrogate trace-inequality constant (the sharp
    1D value is moderate, and r = 0.1 is admissible at c_ti = 1).
    """
    c2 = c_ti * c_ti
    return np.array([
        1.0 - 3.0 * r * c2,
        1.0 - r - r * c2 + eps * r * r,
        1.0 - 2.0 * r - 6.0 * r * c2 + 2.0 * eps * r * r,
        1.0 - 2.0 * r + eps * r * r,
    ])


@dataclass(frozen=True)
class FullParams:
    """Integration parameters for the eps-system.

    alpha must avoid [0, 1/2) and the borderline alpha = 1 (no scale
    separation there); dt <= eps/10 is the coarse stiffness policy and
    :func:`check_stability` enforces the sharp grid-dependent bound.
    """

    eps: float
    alpha: float
    dt: float
    t_end: float
    r: float = 0.1
    c_ti: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 1/2), got {self.eps}")
        if not ((0.5 <= self.alpha < 1.0) or self.alpha > 1.0):
            raise ValueError(
                f"alpha must lie in [1/2, 1) or (1, inf), got {self.alpha}"
            )
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.dt > self.eps / 10.0 * (1.0 + 1e-12):
            raise ValueError(f"dt={self.dt} violates the dt <= eps/10 policy")
        if not 0.0 < self.r < 0.5:
            raise ValueError(f"r must lie in (0, 1/2), got {self.r}")
        margins = r_constraint_margins(self.r, self.eps, self.c_ti)
        if margins.min() <= 0.0:
            raise ValueError(
                f"r={self.r} inadmissible at c_ti={self.c_ti}: brackets {margins}"
            )

    @property
    def n_steps(self) -> int:
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(
                f"t_end={self.t_end} is not an integer multiple of dt={self.dt}"
            )
        return n


def check_stability(params: FullParams, grid: Grid1D) -> None:
    """Reject steps outside the linear stability region of the stepper.

    For mode eigenvalue mu of (I - lap) the update matrix is stable iff
    dt (1 - beta) mu <= 2 (1 + beta) with beta = exp(-dt/eps); the
    worst case is bounded by mu <= 4/h^2 + 2 (the +2 covers the mass
    term and the unit sine slope).
    """
    beta = np.exp(-params.dt / params.eps)
    mu_max = 4.0 / grid.h ** 2 + 2.0
    lhs = params.dt * (1.0 - beta) * mu_max
    rhs = 2.0 * (1.0 + beta)
    if lhs > rhs:
        need = int(np.ceil(params.eps / _max_stable_dt(params.eps, mu_max)))
        raise ValueError(
            f"dt={params.dt:g} unstable for n={grid.n_interior} at eps={params.eps:g} "
            f"({lhs:.2f} > {rhs:.2f}); use dt <= eps/{need}"
        )


def _max_stable_dt(eps: float, mu_max: float) -> float:
    lo, hi = 0.0, eps
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        beta = np.exp(-mid / eps)
        if mid * (1.0 - beta) * mu_max <= 2.0 * (1.0 + beta):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class FullState:
    """The (u, v, delta, theta) tuple at time t; arrays may carry batch dims."""

    u: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    theta: np.ndarray
    t: float = 0.0

    @classmethod
    def zero(cls, grid: Grid1D, batch_shape: tuple = ()) -> "FullState":
        n = grid.n_interior
        return cls(u=np.zeros(batch_shape + (n,)), v=np.zeros(batch_shape + (n,)),
                   delta=np.zeros(batch_shape + (2,)), theta=np.zeros(batch_shape + (2,)))

    def copy(self) -> "FullState":
        return FullState(self.u.copy(), self.v.copy(), self.delta.copy(),
                         self.theta.copy(), self.t)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all()
                    and np.isfinite(self.delta).all() and np.isfinite(self.theta).all())


def velocity_forcing(u: np.ndarray, theta: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Frozen interior forcing lap_flux(u, theta) - u + sin u.

    Shared bit-for-bit with the forced velocity sub-equation of the
    splitting, which is what makes recombination an algebraic identity.
    """
    return geo.laplacian_with_flux(u, theta, grid) - u + np.sin(u)


def boundary_forcing(delta: np.ndarray, v_new: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Frozen boundary forcing -delta - trace(v'); v' is the updated velocity."""
    return -delta - geo.trace(v_new, grid)


def step_full(state: FullState, params: FullParams, inc: WienerIncrement,
              grid: Grid1D) -> FullState:
    """One exponential step of the full system driven by one increment."""
    if abs(inc.dt - params.dt) > 1e-12 * params.dt:
        raise ValueError(f"increment dt={inc.dt} does not match params.dt={params.dt}")
    dt, eps = params.dt, params.eps
    beta = np.exp(-dt / eps)
    kick = ou_scale(eps, params.alpha, dt)
    f = velocity_forcing(state.u, state.theta, grid)
    v_new = f + (state.v - f) * beta + kick * inc.dW1
    g = boundary_forcing(state.delta, v_new, grid)
    theta_new = g + (state.theta - g) * beta + kick * inc.dW2
    u_new = state.u + dt * v_new
    delta_new = state.delta + dt * theta_new
    out = FullState(u_new, v_new, delta_new, theta_new, state.t + dt)
    if not out.is_finite():
        raise BlowUpError(out.t)
    return out


@dataclass
class EnergyLedger:
    """Per-step record of every term in the pseudo-energy balance.

    Each cumulative array carries the coefficient it enters the balance
    with; ``residual()`` assembles energy(t) minus the reconstructed
    right-hand side.  Arrays have shape (n_steps + 1,) plus batch dims.
    """

    times: np.ndarray
    energy: np.ndarray
    diss_vr: np.ndarray
    diss_gradu: np.ndarray
    diss_u: np.ndarray
    diss_thetar: np.ndarray
    diss_delta: np.ndarray
    cross_sin: np.ndarray
    cross_utheta: np.ndarray
    cross_udelta: np.ndarray
    stoch1: np.ndarray
    stoch2: np.ndarray
    trace_term: np.ndarray

    def residual(self) -> np.ndarray:
        rhs = (self.energy[0]
               - (self.diss_vr + self.diss_gradu + self.diss_u
                  + self.diss_thetar + self.diss_delta)
               + self.cross_sin + self.cross_utheta + self.cross_udelta
               + self.stoch1 + self.stoch2 + self.trace_term)
        return self.energy - rhs


def pseudo_energy(state: FullState, r: float, eps: float, grid: Grid1D) -> np.ndarray:
    """Shifted energy functional built from v_r = v + ru, theta_r = theta + r delta.

    eps ||v_r||^2 + grad energy + (1 - r + eps r^2)(||u||^2 + ||delta||^2)
    + eps ||theta_r||^2 + 4 ||cos(u/2)||^2 + 2 r <u, delta> on the boundary.
    Not homogeneous: the cosine term breaks quadratic scaling.
    """
    h = grid.h
    vr = state.v + r * state.u
    thr = state.theta + r * state.delta
    w = 1.0 - r + eps * r * r
    cos_term = 4.0 * h * np.sum(np.cos(state.u / 2.0) ** 2, axis=-1)
    return (eps * h * np.sum(vr * vr, axis=-1)
            + geo.grad_energy(state.u, grid)
            + w * h * np.sum(state.u * state.u, axis=-1)
            + eps * np.sum(thr * thr, axis=-1)
            + w * np.sum(state.delta * state.delta, axis=-1)
            + cos_term
            + 2.0 * r * geo.boundary_inner(geo.trace(state.u, grid), state.delta))


@dataclass
class Trajectory:
    """Output of :func:`simulate_full`; field arrays are None when not recorded."""

    times: np.ndarray
    u: np.ndarray | None
    v: np.ndarray | None
    delta: np.ndarray | None
    theta: np.ndarray | None
    ledger: EnergyLedger | None
    params: FullParams
    probes: dict = field(default_factory=dict)


def simulate_full(params: FullParams, initial: FullState, noise: NoisePair | None,
                  grid: Grid1D, *, record_fields: bool = True,
                  with_ledger: bool = True, probe_times=None,
                  probe_fn=None, n_steps: int | None = None) -> Trajectory:
    """March the full system on the master time grid.

    noise None means the deterministic system (zero increments).  The
    ledger accumulates drift integrals by left-endpoint quadrature and
    the stochastic sums with left-endpoint integrands, mirroring the
    energy balance term by term.  probe_times must sit on the time grid;
    probe_fn(state, grid) -> dict of arrays is evaluated there.
    """
    check_stability(params, grid)
    n = params.n_steps if n_steps is None else n_steps
    dt, eps, r, alpha = params.dt, params.eps, params.r, params.alpha
    batch = initial.u.shape[:-1]
    times = np.arange(n + 1) * dt

    probe_idx: dict[int, float] = {}
    probes: dict[str, list] = {}
    if probe_times is not None:
        for t in probe_times:
            k = round(t / dt)
            if abs(k * dt - t) > 1e-9:
                raise ValueError(f"probe time {t} is not on the dt={dt} grid")
            probe_idx[k] = t

    def make_rec():
        return {key: np.zeros((n + 1,) + batch) for key in
                ("energy", "diss_vr", "diss_gradu", "diss_u", "diss_thetar",
                 "diss_delta", "cross_sin", "cross_utheta", "cross_udelta",
                 "stoch1", "stoch2", "trace_term")}

    rec = make_rec() if with_ledger else None
    if record_fields:
        u_hist = np.zeros((n + 1,) + initial.u.shape)
        v_hist = np.zeros_like(u_hist)
        d_hist = np.zeros((n + 1,) + initial.delta.shape)
        th_hist = np.zeros_like(d_hist)

    if noise is not None:
        tr_rate = (eps ** (2.0 * alpha - 1.0)
                   * (trace_of(noise.spec1) + trace_of(noise.spec2)))
    else:
        tr_rate = 0.0

    state = initial.copy()
    state.t = 0.0
    h = grid.h
    w = 1.0 - r + eps * r * r
    beta_coeffs = (2.0 * (1.0 - eps * r), 2.0 * r, 2.0 * w * r)

    def store(k: int, st: FullState):
        if record_fields:
            u_hist[k] = st.u
            v_hist[k] = st.v
            d_hist[k] = st.delta
            th_hist[k] = st.theta
        if rec is not None:
            rec["energy"][k] = pseudo_energy(st, r, eps, grid)
        if k in probe_idx and probe_fn is not None:
            out = probe_fn(st, grid)
            for key, val in out.items():
                probes.setdefault(key, []).append(val)

    store(0, state)
    for k in range(n):
        if noise is not None:
            inc = noise.increment(k, dt)
        else:
            inc = zero_increment(grid, dt, batch)
        if rec is not None:
            vr = state.v + r * state.u
            thr = state.theta + r * state.delta
            utr = geo.trace(state.u, grid)
            rec["diss_vr"][k + 1] = rec["diss_vr"][k] + dt * beta_coeffs[0] * h * np.sum(vr * vr, axis=-1)
            rec["diss_gradu"][k + 1] = rec["diss_gradu"][k] + dt * beta_coeffs[1] * geo.grad_energy(state.u, grid)
            rec["diss_u"][k + 1] = rec["diss_u"][k] + dt * beta_coeffs[2] * h * np.sum(state.u * state.u, axis=-1)
            rec["diss_thetar"][k + 1] = rec["diss_thetar"][k] + dt * beta_coeffs[0] * np.sum(thr * thr, axis=-1)
            rec["diss_delta"][k + 1] = rec["diss_delta"][k] + dt * beta_coeffs[2] * np.sum(state.delta * state.delta, axis=-1)
            rec["cross_sin"][k + 1] = rec["cross_sin"][k] + dt * 2.0 * r * h * np.sum(state.u * np.sin(state.u), axis=-1)
            rec["cross_utheta"][k + 1] = rec["cross_utheta"][k] + dt * 4.0 * r * geo.boundary_inner(utr, thr)
            rec["cross_udelta"][k + 1] = rec["cross_udelta"][k] - dt * 4.0 * r * r * geo.boundary_inner(utr, state.delta)
            amp = eps ** alpha
            rec["stoch1"][k + 1] = rec["stoch1"][k] + amp * 2.0 * h * np.sum(vr * inc.dW1, axis=-1)
            rec["stoch2"][k + 1] = rec["stoch2"][k] + amp * 2.0 * np.sum(thr * inc.dW2, axis=-1)
            rec["trace_term"][k + 1] = tr_rate * times[k + 1]
        state = step_full(state, params, inc, grid)
        store(k + 1, state)

    ledger = EnergyLedger(times=times, **rec) if rec is not None else None
    probes_out = {key: np.array(vals) for key, vals in probes.items()}
    if probe_times is not None:
        probes_out["probe_times"] = np.array(sorted(probe_idx.values()))
    return Trajectory(times=times,
                      u=u_hist if record_fields else None,
                      v=v_hist if record_fields else None,
                      delta=d_hist if record_fields else None,
                      theta=th_hist if record_fields else None,
                      ledger=ledger, params=params, probes=probes_out)


def energy_residual(ledger: EnergyLedger) -> np.ndarray:
    """Balance residual series; zero to round-off for zero data and noise."""
    return ledger.residual()


def mean_se(samples: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error along an axis (ddof = 1)."""
    samples = np.asarray(samples, dtype=float)
    m = samples.mean(axis=axis)
    nrep = samples.shape[axis]
    if nrep < 2:
        return m, np.full_like(np.asarray(m, dtype=float), np.nan)
    se = samples.std(axis=axis, ddof=1) / np.sqrt(nrep)
    return m, se


def moment_stats(u: np.ndarray, v: np.ndarray, delta: np.ndarray,
                 theta: np.ndarray, grid: Grid1D, replica_axis: int = 1) -> dict:
    """Ensemble moments of the squared field norms with standard errors.

    Inputs are stacked as (times, replicas, field dim); returns, per
    recorded time, the MC mean and SE of ||v||^2, ||theta||^2, ||u||^2,
    the gradient energy and ||delta||^2.
    """
    h = grid.h
    quantities = {
        "v2": h * np.sum(v * v, axis=-1),
        "theta2": np.sum(theta * theta, axis=-1),
        "u2": h * np.sum(u * u, axis=-1),
        "gradu2": geo.grad_energy(u, grid),
        "delta2": np.sum(delta * delta, axis=-1),
    }
    out = {}
    for key, val in quantities.items():
        m, se = mean_se(val, axis=replica_axis)
        out[key] = {"mean": m, "se": se}
    return out
