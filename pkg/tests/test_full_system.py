"""Full-system stepper, parameter gates, energy functional and ledger."""

import numpy as np
import pytest

from sll.full_system import (BlowUpError, FullParams, FullState,
                             check_stability, energy_residual, mean_se,
                             moment_stats, pseudo_energy, r_constraint_margins,
                             simulate_full, step_full)
from sll.geometry import Grid1D, l2_norm
from sll.noise import CovarianceSpec, NoisePair, zero_increment

GRID = Grid1D(64)
SPEC1 = CovarianceSpec.interior(1.0, 2.0, 50)
SPEC2 = CovarianceSpec.boundary(0.5, 0.5)


def make_params(eps=0.25, alpha=0.5, factor=40.0, t_end=1.0, r=0.1):
    return FullParams(eps=eps, alpha=alpha, dt=eps / factor, t_end=t_end, r=r)


def test_param_gates():
    with pytest.raises(ValueError):
        FullParams(eps=0.6, alpha=0.5, dt=0.01, t_end=1.0)
    with pytest.raises(ValueError):
        FullParams(eps=0.25, alpha=0.4, dt=0.001, t_end=1.0)
    with pytest.raises(ValueError):
        FullParams(eps=0.25, alpha=1.0, dt=0.001, t_end=1.0)
    with pytest.raises(ValueError):
        FullParams(eps=0.25, alpha=0.5, dt=0.05, t_end=1.0)  # dt > eps/10
    FullParams(eps=0.25, alpha=2.0, dt=0.001, t_end=1.0)


def test_r_constraint_margins():
    assert r_constraint_margins(0.1, 0.25, c_ti=1.0).min() > 0
    # at the surrogate c_ti = 2 the third bracket is negative at r = 0.1
    assert r_constraint_margins(0.1, 0.25, c_ti=2.0).min() < 0
    with pytest.raises(ValueError):
        FullParams(eps=0.25, alpha=0.5, dt=0.001, t_end=1.0, r=0.2)


def test_time_grid_mismatch_rejected():
    p = FullParams(eps=0.25, alpha=0.5, dt=0.003, t_end=1.0)
    with pytest.raises(ValueError):
        _ = p.n_steps


def test_stability_gate():
    with pytest.raises(ValueError, match="unstable"):
        check_stability(make_params(eps=0.25, factor=10.0), GRID)
    with pytest.raises(ValueError, match="unstable"):
        check_stability(make_params(eps=0.25, factor=20.0), GRID)
    check_stability(make_params(eps=0.25, factor=40.0), GRID)
    check_stability(make_params(eps=2.0 ** -6, factor=10.0), GRID)


def test_zero_equilibrium():
    p = make_params()
    traj = simulate_full(p, FullState.zero(GRID), None, GRID)
    assert np.abs(traj.u).max() == 0.0
    assert np.abs(traj.v).max() == 0.0
    assert np.abs(traj.ledger.residual()).max() == 0.0


def test_constant_state_one_step_closed_form():
    p = make_params()
    c = 0.7
    state = FullState(u=np.full(64, c), v=np.zeros(64),
                      delta=np.zeros(2), theta=np.zeros(2))
    out = step_full(state, p, zero_increment(GRID, p.dt), GRID)
    beta = np.exp(-p.dt / p.eps)
    v_expect = (1.0 - beta) * (-c + np.sin(c))
    assert out.v == pytest.approx(np.full(64, v_expect), rel=1e-12)
    assert out.u == pytest.approx(np.full(64, c + p.dt * v_expect), rel=1e-12)


def test_increment_dt_mismatch():
    p = make_params()
    with pytest.raises(ValueError):
        step_full(FullState.zero(GRID), p, zero_increment(GRID, p.dt / 2), GRID)


def test_determinism_same_seed():
    p = make_params(t_end=0.25)
    init = FullState(u=0.1 * np.sin(np.pi * GRID.x), v=np.zeros(64),
                     delta=np.zeros(2), theta=np.zeros(2))
    runs = []
    for _ in range(2):
        noise = NoisePair.for_replica(404, 2, SPEC1, SPEC2, GRID)
        runs.append(simulate_full(p, init.copy(), noise, GRID))
    assert np.array_equal(runs[0].u, runs[1].u)
    assert np.array_equal(runs[0].theta, runs[1].theta)


def test_flux_sensitivity_spot_check():
    p = make_params()
    state = FullState(u=0.3 * np.sin(np.pi * GRID.x), v=np.zeros(64),
                      delta=np.array([0.1, 0.0]), theta=np.array([0.2, -0.1]))
    base = step_full(state, p, zero_increment(GRID, p.dt), GRID)
    bumped = state.copy()
    bumped.theta = state.theta + np.array([0.05, 0.0])
    out = step_full(bumped, p, zero_increment(GRID, p.dt), GRID)
    assert np.abs(out.v - base.v).max() > 0.0


def test_pseudo_energy_zero_state():
    e = pseudo_energy(FullState.zero(GRID), 0.1, 0.25, GRID)
    assert e == pytest.approx(4.0, abs=4.2 * GRID.h)


def test_pseudo_energy_constant_pi():
    # hand evaluation: (1-r+eps r^2) pi^2 + eps r^2 pi^2, cosine term 0,
    # on the h-weighted interior measure (1 - h)
    r, eps = 0.1, 0.25
    state = FullState(u=np.full(64, np.pi), v=np.zeros(64),
                      delta=np.zeros(2), theta=np.zeros(2))
    e = pseudo_energy(state, r, eps, GRID)
    closed = 0.905 * np.pi ** 2
    assert e == pytest.approx(closed, abs=closed * GRID.h * 1.05)


def test_pseudo_energy_not_homogeneous():
    state = FullState(u=0.5 * np.sin(np.pi * GRID.x), v=0.1 * np.cos(GRID.x),
                      delta=np.array([0.2, -0.1]), theta=np.array([0.1, 0.3]))
    doubled = FullState(u=2 * state.u, v=2 * state.v,
                        delta=2 * state.delta, theta=2 * state.theta)
    e1 = pseudo_energy(state, 0.1, 0.25, GRID)
    e2 = pseudo_energy(doubled, 0.1, 0.25, GRID)
    assert abs(e2 - 2.0 * e1) > 1e-3


def test_blowup_detection():
    p = make_params()
    bad = FullState(u=np.full(64, np.nan), v=np.zeros(64),
                    delta=np.zeros(2), theta=np.zeros(2))
    with pytest.raises(BlowUpError):
        step_full(bad, p, zero_increment(GRID, p.dt), GRID)


def test_sanity_envelope_seeded_replicas():
    # stays finite with the default noise; u stays within a 10x envelope
    # (first stable configuration: dt = eps/40 at n = 64)
    p = make_params(eps=0.25, alpha=0.5, factor=40.0, t_end=1.0)
    nrep = 20
    u0 = np.sin(np.pi * GRID.x)
    init = FullState(u=np.tile(u0, (nrep, 1)), v=np.zeros((nrep, 64)),
                     delta=np.zeros((nrep, 2)), theta=np.zeros((nrep, 2)))
    noise = NoisePair.for_batch(7, nrep, SPEC1, SPEC2, GRID)
    traj = simulate_full(p, init, noise, GRID, record_fields=False,
                         with_ledger=False, probe_times=[1.0],
                         probe_fn=lambda st, g: {"u2": g.h * np.sum(st.u ** 2, axis=-1)})
    u2_final = traj.probes["u2"][0]
    assert np.isfinite(u2_final).all()
    assert u2_final.max() <= 10.0 * GRID.h * np.sum(u0 ** 2)


def test_deterministic_residual_refines_first_order():
    eps = 2.0 ** -6
    x = GRID.x
    init = FullState(u=0.5 * np.sin(np.pi * x), v=0.25 * np.sin(2 * np.pi * x),
                     delta=np.array([0.1, -0.1]),
                     theta=np.array([-0.5 * np.pi, -0.5 * np.pi]))
    max_res = []
    for fac in (10, 20, 40):
        p = FullParams(eps=eps, alpha=0.5, dt=eps / fac, t_end=1.0)
        traj = simulate_full(p, init.copy(), None, GRID, record_fields=False)
        max_res.append(np.abs(energy_residual(traj.ledger)).max())
    for a, b in zip(max_res, max_res[1:]):
        assert 2.0 / 1.3 <= a / b <= 2.0 / 0.7


def test_ledger_has_all_terms():
    p = make_params(t_end=0.1)
    noise = NoisePair.for_replica(5, 0, SPEC1, SPEC2, GRID)
    traj = simulate_full(p, FullState.zero(GRID), noise, GRID, record_fields=False)
    led = traj.ledger
    for name in ("energy", "diss_vr", "diss_gradu", "diss_u", "diss_thetar",
                 "diss_delta", "cross_sin", "cross_utheta", "cross_udelta",
                 "stoch1", "stoch2", "trace_term"):
        assert getattr(led, name).shape == led.times.shape
    # trace term is the deterministic rate eps^(2a-1) (TrQ1 + TrQ2) t
    from sll.noise import trace_of
    expected = 0.25 ** 0.0 * (trace_of(SPEC1) + trace_of(SPEC2)) * led.times[-1]
    assert led.trace_term[-1] == pytest.approx(expected, rel=1e-12)


def test_moment_stats_and_mean_se():
    m, se = mean_se(np.array([1.0, 2.0, 3.0]))
    assert m == 2.0
    assert se == pytest.approx(1.0 / np.sqrt(3.0))
    rng = np.random.default_rng(0)
    u = rng.normal(size=(3, 8, 64))
    v = rng.normal(size=(3, 8, 64))
    d = rng.normal(size=(3, 8, 2))
    th = rng.normal(size=(3, 8, 2))
    stats = moment_stats(u, v, d, th, GRID)
    assert set(stats) == {"v2", "theta2", "u2", "gradu2", "delta2"}
    assert stats["v2"]["mean"].shape == (3,)
    assert np.isfinite(stats["gradu2"]["se"]).all()


def test_moment_stats_zero_ensemble():
    z = np.zeros((2, 4, 64))
    zb = np.zeros((2, 4, 2))
    stats = moment_stats(z, z, zb, zb, GRID)
    for rec in stats.values():
        assert np.abs(rec["mean"]).max() == 0.0


def test_probe_time_off_grid_rejected():
    p = make_params()
    with pytest.raises(ValueError):
        simulate_full(p, FullState.zero(GRID), None, GRID,
                      probe_times=[p.dt * 1.5], probe_fn=lambda st, g: {})
