"""HUM control solves: Gram-form structure, minimality, diagnostics."""

import numpy as np
import pytest

from degwave.discretization import build_operator
from degwave.errors import MethodTooLarge, ZeroTarget
from degwave.hum import (
    apply_lambda,
    apply_lambda_boundary,
    dense_lambda_boundary,
    dense_lambda_distributed,
    hum_bounds_check,
    hum_export_csv,
    inner_e,
    inner_f,
    pairing,
    riesz_e,
    riesz_f,
    solve_hum_boundary,
    solve_hum_distributed,
    verify_null,
)
from degwave.solver import (
    ControlWindow,
    DistributedSource,
    StatePair,
    energy,
    solve_forward,
)

from conftest import seeded_state


def _smooth_target(op):
    f = np.sin(np.pi * op.x) * op.x
    return StatePair(f / op.norm_h1a(f), np.zeros(op.n_dof))


@pytest.fixture(scope="module")
def hum20():
    """One converged distributed solve at N=20, shared by several tests."""
    op = build_operator(0.5, n_cells=20)
    T, dt = 3.2, 3.2 / 128
    window = ControlWindow.build(op, 0.4)
    target = _smooth_target(op)
    sol = solve_hum_distributed(op, window, target, T, dt, tol=1e-10)
    return op, window, target, T, dt, sol


def test_riesz_f_inverts_pairing(op_any):
    p = seeded_state(op_any)
    q = seeded_state(op_any, seed=321)
    from degwave.observability import _functional_of_f
    assert pairing(op_any, _functional_of_f(op_any, p), q) == pytest.approx(
        inner_f(op_any, p, q), rel=1e-10)


def test_riesz_e_inverts_pairing(op_any):
    p = seeded_state(op_any)
    from degwave.observability import _functional_of_e
    f = _functional_of_e(op_any, p)
    assert pairing(op_any, f, p) == pytest.approx(
        inner_e(op_any, p, p), rel=1e-10)
    assert np.allclose(riesz_e(op_any, f).position, p.position, atol=1e-10)


def test_lambda_linearity(op_weak):
    op = op_weak
    T, dt = 1.0, 1.0 / 48
    window = ControlWindow.build(op, 0.5)
    p = seeded_state(op, seed=1)
    q = seeded_state(op, seed=2)
    combo = StatePair(2.0 * p.position - 3.0 * q.position,
                      2.0 * p.velocity - 3.0 * q.velocity)
    lp = apply_lambda(op, window, p, T, dt)
    lq = apply_lambda(op, window, q, T, dt)
    lc = apply_lambda(op, window, combo, T, dt)
    assert np.allclose(lc.position, 2.0 * lp.position - 3.0 * lq.position,
                       atol=1e-11)
    assert np.allclose(lc.velocity, 2.0 * lp.velocity - 3.0 * lq.velocity,
                       atol=1e-11)


def test_form_symmetry_and_positivity(op_any):
    T, dt = 1.0, 1.0 / 48
    window = ControlWindow.build(op_any, 0.5)
    p = seeded_state(op_any, seed=4)
    q = seeded_state(op_any, seed=5)
    a_pq = pairing(op_any, apply_lambda(op_any, window, p, T, dt), q)
    a_qp = pairing(op_any, apply_lambda(op_any, window, q, T, dt), p)
    a_pp = pairing(op_any, apply_lambda(op_any, window, p, T, dt), p)
    assert a_pq == pytest.approx(a_qp, rel=1e-10)
    assert a_pp > 0.0


def test_boundary_form_symmetry(op_any):
    T, dt = 1.0, 1.0 / 48
    p = seeded_state(op_any, seed=6)
    q = seeded_state(op_any, seed=7)
    a_pq = pairing(op_any, apply_lambda_boundary(op_any, p, T, dt)[0], q)
    a_qp = pairing(op_any, apply_lambda_boundary(op_any, q, T, dt)[0], p)
    assert a_pq == pytest.approx(a_qp, rel=1e-9)


def test_zero_target_zero_control(op_weak):
    window = ControlWindow.build(op_weak, 0.4)
    sol = solve_hum_distributed(op_weak, window, StatePair.zero(op_weak),
                                3.2, 3.2 / 64, tol=1e-8)
    assert sol.cg_iterations == 0
    assert sol.control_cost == 0.0
    assert sol.terminal_energy == 0.0


def test_distributed_solve_reaches_rest(hum20):
    op, window, target, T, dt, sol = hum20
    e0 = energy(op, target)
    term, mismatch = verify_null(op, window, sol, target, T, dt)
    assert term <= 1e-10 * e0
    assert mismatch <= 1e-8


def test_duality_identity_within_solver_tolerance(hum20):
    op, window, target, T, dt, sol = hum20
    # -(v0, u1)_L2 + (v1, u0)_L2 = iint |v|^2, defect within 10x CG tol
    assert sol.identity_residual <= 10.0 * 1e-10 * max(sol.control_cost, 1.0)


def test_cg_residual_history_non_increasing(hum20):
    _, _, _, _, _, sol = hum20
    hist = np.asarray(sol.residual_history)
    assert np.all(np.diff(hist) <= 1e-14)


def _null_perturbation(op, window, K, dt, dof, amplitude):
    """An exact discrete null control supported on the window.

    Prescribes the null trajectory U_k = theta_k e_i (zero data at both
    endpoints), reads the exact trapezoidal-scheme load off the update
    equations, and divides by the window weights to express it as a
    windowed control field; adding it to any null control of a target
    yields another exact null control of the same target.
    """
    wts = window.active_weights
    k = np.arange(K + 1)
    th1 = np.sin(np.pi * k / K) ** 2
    th2 = th1 * np.sin(2.0 * np.pi * k / K)

    def terminal_velocity(theta):
        eta = np.zeros(K + 1)
        for j in range(K):
            eta[j + 1] = 2.0 * (theta[j + 1] - theta[j]) / dt - eta[j]
        return eta, eta[-1]

    _, e1 = terminal_velocity(th1)
    _, e2 = terminal_velocity(th2)
    theta = (th1 - (e1 / e2) * th2 if abs(e2) > abs(e1)
             else th2 - (e2 / e1) * th1)
    theta = amplitude * theta
    eta, eK = terminal_velocity(theta)
    assert abs(eK) <= 1e-9 * max(np.max(np.abs(eta)), 1.0)

    ei = np.zeros(op.n_dof)
    ei[dof] = 1.0
    a_ei = op.apply_stiffness(ei)
    mids = np.empty((K, op.n_dof))
    for j in range(K):
        load = (op.mass * (eta[j + 1] - eta[j]) / dt * ei
                + a_ei * (theta[j] + theta[j + 1]) / 2.0)
        mids[j] = np.where(wts > 0.0, load / np.where(wts > 0, wts, 1.0), 0.0)
        assert np.allclose(load[wts == 0.0], 0.0)
    values = np.zeros((K + 1, op.n_dof))
    values[0] = mids[0]
    for j in range(K):
        values[j + 1] = 2.0 * mids[j] - values[j]
    return values


def test_minimal_norm_among_null_controls(hum20):
    """The HUM control is the cheapest of 20 perturbed exact null controls."""
    op, window, target, T, dt, sol = hum20
    K = sol.adjoint_traj.nsteps
    wts = window.active_weights
    support = np.nonzero(wts > 0.0)[0][1:-1]
    rng = np.random.default_rng(2024)
    vstar = sol.adjoint_traj.positions
    e0 = energy(op, target)

    def cost(values):
        mid = 0.5 * (values[:-1] + values[1:])
        return dt * float(np.einsum("ki,i,ki->", mid, wts, mid))

    base = cost(vstar)
    assert base == pytest.approx(sol.control_cost, rel=1e-10)
    for _ in range(20):
        dof = int(rng.choice(support))
        amp = float(rng.uniform(0.05, 0.5) * np.sign(rng.standard_normal()))
        v_alt = vstar + _null_perturbation(op, window, K, dt, dof, amp)
        traj = solve_forward(op, target, DistributedSource(window, v_alt),
                             T, dt)
        assert energy(op, traj.terminal_state) <= 1e-12 * e0
        assert cost(v_alt) > base


def test_bounds_check_fields(hum20):
    op, window, target, _, _, sol = hum20
    b = hum_bounds_check(op, window, sol, target)
    assert b["epsilon"] == window.epsilon
    assert b["eps3_r2"] == pytest.approx(
        window.epsilon ** 3 * b["r2"], rel=1e-12)
    with pytest.raises(ZeroTarget):
        hum_bounds_check(op, window, sol, StatePair.zero(op))


def test_boundary_hum_reaches_rest():
    op = build_operator(0.5, n_cells=24)
    T = 4.0
    dt = T / 192
    target = _smooth_target(op)
    h, controlled, iters = solve_hum_boundary(op, target, T, dt, tol=1e-9)
    traj = solve_forward(op, target, h, T, dt)
    e0 = energy(op, target)
    assert energy(op, traj.terminal_state) <= 1e-3 * e0
    assert np.allclose(controlled.positions[0], target.position, atol=1e-6)


def test_dense_oracle_cap():
    op = build_operator(0.5, n_cells=80)
    with pytest.raises(MethodTooLarge):
        dense_lambda_distributed(op, ControlWindow.build(op, 0.5), 1.0,
                                 1.0 / 160)


def test_dense_matrices_symmetric_positive(op_weak):
    T, dt = 3.2, 3.2 / 64
    a, g = dense_lambda_distributed(op_weak, ControlWindow.build(op_weak, 0.4),
                                    T, dt)
    assert np.allclose(a, a.T, atol=1e-12)
    assert np.linalg.eigvalsh(g)[0] > 0.0
    ab, gb = dense_lambda_boundary(op_weak, T, dt)
    assert np.allclose(ab, ab.T, atol=1e-12)
    assert np.linalg.eigvalsh(gb)[0] > 0.0


def test_hum_export_csv(tmp_path, hum20):
    op, _, _, T, dt, sol = hum20
    path = tmp_path / "control.csv"
    hum_export_csv(sol, op, path, T, dt, 1e-10)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# alpha=0.5 regime=weak N=20")
    assert lines[1] == "t,x,v"
    assert len(lines) > 100
