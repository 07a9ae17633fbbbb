"""HUM null controls by conjugate gradients on the adjoint-data space.

Distributed control: the operator Lambda maps adjoint data (v0,v1) in
F = L2 x H^{-1}_a to (-u_t(0), u(0)) of the backward solve driven by
v chi_omega.  The induced bilinear form a(p,q) equals the space-time
window quadrature of v_p v_q exactly at the discrete level (the scheme's
summation-by-parts identity), so a is a Gram form: symmetric, positive,
and the CG minimizer is the minimal-norm control.

Boundary control: same construction in E = H^1_a x L2 with the form
int v_{p,x}(t,1) v_{q,x}(t,1) dt realized through the duality-exact
boundary trace paired with the Dirichlet lifting load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .discretization import DegenerateOperator
from .errors import MethodTooLarge, NoConvergence, ZeroTarget
from .solver import (
    BoundaryDirichlet,
    ControlWindow,
    DistributedSource,
    StatePair,
    Trajectory,
    duality_trace,
    energy,
    solve_backward,
    solve_forward,
    spacetime_inner,
    warn_if_below_minimal_time,
)

DENSE_DOF_CAP = 60


# -- duality pairings and Riesz maps -------------------------------------

def pairing(op, functional: StatePair, q: StatePair) -> float:
    """<(phi0,phi1), (q0,q1)> = q0.M.phi0 + q1.M.phi1 (mass-weighted)."""
    return float(np.dot(op.mass * q.position, functional.position)
                 + np.dot(op.mass * q.velocity, functional.velocity))


def riesz_f(op, functional: StatePair) -> StatePair:
    """Riesz lift of a functional pair into F = L2 x H^{-1}_a."""
    z1 = op.apply_stiffness(functional.velocity) / op.mass
    return StatePair(functional.position.copy(), z1)


def inner_f(op, p: StatePair, q: StatePair) -> float:
    mq = op.mass * q.velocity
    w = op.solve_stiffness(mq)
    return float(np.dot(op.mass * p.position, q.position)
                 + np.dot(op.mass * p.velocity, w))


def _ma_factor(op):
    ab = np.zeros((2, op.n_dof))
    ab[0, 1:] = op.stiff_off
    ab[1] = op.stiff_diag + op.mass
    return cholesky_banded(ab, lower=False)


def riesz_e(op, functional: StatePair) -> StatePair:
    """Riesz lift of a functional pair into E = H^1_a x L2."""
    z0 = cho_solve_banded((_ma_factor(op), False), op.mass * functional.position)
    return StatePair(z0, functional.velocity.copy())


def inner_e(op, p: StatePair, q: StatePair) -> float:
    aq = op.apply_stiffness(q.position) + op.mass * q.position
    return float(np.dot(p.position, aq)
                 + np.dot(op.mass * p.velocity, q.velocity))


# -- the HUM operators ----------------------------------------------------

def adjoint_solution(op, vdata: StatePair, T: float, dt: float) -> Trajectory:
    """Homogeneous solve of the adjoint system from data (v0, v1)."""
    return solve_forward(op, vdata, None, T, dt)


def apply_lambda_full(op, window: ControlWindow, vdata: StatePair,
                      T: float, dt: float):
    """Lambda_eps with intermediates: (functional pair, v traj, u traj)."""
    v_traj = adjoint_solution(op, vdata, T, dt)
    control = DistributedSource(window, v_traj.positions)
    u_traj = solve_backward(op, control, T, dt)
    lam = StatePair(-u_traj.velocities[0].copy(), u_traj.positions[0].copy())
    return lam, v_traj, u_traj


def apply_lambda(op, window: ControlWindow, vdata: StatePair,
                 T: float, dt: float) -> StatePair:
    """(v0,v1) -> (-u_t(0), u(0)); the HUM operator as a functional pair."""
    return apply_lambda_full(op, window, vdata, T, dt)[0]


def apply_lambda_boundary(op, vdata: StatePair, T: float, dt: float):
    """Boundary HUM operator: (pair, adjoint traj, midpoint trace series)."""
    v_traj = adjoint_solution(op, vdata, T, dt)
    tau = duality_trace(v_traj)
    y = solve_backward(op, BoundaryDirichlet(tau, at_midpoints=True), T, dt)
    lam = StatePair(y.velocities[0].copy(), -y.positions[0].copy())
    return lam, v_traj, tau


# -- conjugate gradients ---------------------------------------------------

def _axpy(a: StatePair, c: float, b: StatePair) -> StatePair:
    return StatePair(a.position + c * b.position, a.velocity + c * b.velocity)


def _cg(apply_op, riesz, pair, rhs: StatePair, tol: float, max_iter: int,
        strict: bool = True):
    """CG for the Gram-form equation Lambda p = rhs in a Hilbert space.

    apply_op returns the functional pair Lambda d; riesz lifts functionals
    to elements; pair is the duality pairing.  Minimal-residual smoothing
    keeps the reported residual norm non-increasing.  Returns (p,
    iterations, relative residual, residual history).
    """
    p = StatePair(np.zeros_like(rhs.position), np.zeros_like(rhs.velocity))
    r = rhs
    z = riesz(r)
    rho = pair(r, z)
    history = []
    if rho <= 0.0:
        return p, 0, 0.0, history
    rho0 = rho
    d = z
    p_s, r_s, rho_s = p, r, rho  # smoothed iterate / residual
    for it in range(1, max_iter + 1):
        lam_d = apply_op(d)
        ad = pair(lam_d, d)
        if ad <= 0.0:
            raise NoConvergence(
                "HUM form lost positivity (observability failure at this "
                "resolution)", iterations=it, residual=np.sqrt(rho / rho0))
        alpha = rho / ad
        p = _axpy(p, alpha, d)
        r = _axpy(r, -alpha, lam_d)
        z = riesz(r)
        rho_new = pair(r, z)
        # residual smoothing: convex step from (p_s, r_s) towards (p, r)
        delta = _axpy(r, -1.0, r_s)
        dd = pair(delta, riesz(delta))
        if dd > 0.0:
            eta = min(max(-pair(r_s, riesz(delta)) / dd, 0.0), 1.0)
            r_s = _axpy(r_s, eta, delta)
            p_s = _axpy(p_s, eta, _axpy(p, -1.0, p_s))
            rho_s = pair(r_s, riesz(r_s))
        rel = np.sqrt(max(rho_s, 0.0) / rho0)
        history.append(rel)
        if rel < tol:
            return p_s, it, rel, history
        d = StatePair(z.position + (rho_new / rho) * d.position,
                      z.velocity + (rho_new / rho) * d.velocity)
        rho = rho_new
    if not strict:  # best smoothed iterate; callers that can tolerate it
        return p_s, max_iter, history[-1], history
    raise NoConvergence(
        f"CG did not reach tol={tol} in {max_iter} iterations "
        "(T too small or window too narrow for this grid?)",
        iterations=max_iter, residual=history[-1] if history else None)


# -- distributed HUM -------------------------------------------------------

@dataclass
class HUMSolution:
    """Minimizer data, control field and diagnostics of one HUM solve."""

    adjoint_data: StatePair
    adjoint_traj: Trajectory
    control: DistributedSource
    controlled: Trajectory
    epsilon: float
    cg_iterations: int
    cg_residual: float
    residual_history: list
    control_cost: float        # iint_{Q_eps} v^2
    identity_residual: float   # defect of -(v0,u1) + <v1,u0> = iint v^2
    terminal_energy: float     # of the forward verification re-solve


def solve_hum_distributed(op, window: ControlWindow, target: StatePair,
                          T: float, dt: float, tol: float = 1e-8,
                          max_iter: int = 5000) -> HUMSolution:
    """Drive `target` to rest with a control supported on the window."""
    warn_if_below_minimal_time(op.alpha, T)
    rhs = StatePair(-target.velocity, target.position)

    def apply_op(d):
        return apply_lambda_full(op, window, d, T, dt)[0]

    p, iters, rel, history = _cg(
        apply_op, lambda r: riesz_f(op, r), lambda a, b: pairing(op, a, b),
        rhs, tol, max_iter)

    v_traj = adjoint_solution(op, p, T, dt)
    control = DistributedSource(window, v_traj.positions)
    controlled = solve_backward(op, control, T, dt)
    cost = spacetime_inner(v_traj, v_traj, window.active_weights)
    ident = (-op.inner_l2(p.position, target.velocity)
             + op.inner_l2(p.velocity, target.position) - cost)
    verification = solve_forward(op, target, control, T, dt)
    term = energy(op, verification.terminal_state)
    return HUMSolution(p, v_traj, control, controlled, window.epsilon,
                       iters, rel, history, cost, abs(ident), term)


def verify_null(op, window: ControlWindow, solution: HUMSolution,
                target: StatePair, T: float, dt: float):
    """Forward re-solve with the stored control; returns
    (terminal energy, H^1_a x L2 mismatch of controlled(0) vs target)."""
    verification = solve_forward(op, target, solution.control, T, dt)
    term = energy(op, verification.terminal_state)
    du = solution.controlled.positions[0] - target.position
    dv = solution.controlled.velocities[0] - target.velocity
    mismatch = np.sqrt(op.norm_h1a(du) ** 2 + op.norm_l2(dv) ** 2)
    return term, mismatch


def target_norm_sq(op, target: StatePair) -> float:
    """||u0||^2_{H^1_a} + ||u1||^2_{L2}."""
    return op.norm_h1a(target.position) ** 2 + op.norm_l2(target.velocity) ** 2


def hum_bounds_check(op, window: ControlWindow, solution: HUMSolution,
                     target: StatePair) -> dict:
    """Ratios behind the eps^{-3} data/cost bounds, premultiplied by eps^3."""
    tn = target_norm_sq(op, target)
    if tn == 0.0:
        raise ZeroTarget("bounds check needs a nonzero target")
    p = solution.adjoint_data
    data = np.sqrt(op.norm_l2(p.position) ** 2 + op.norm_hneg1(p.velocity) ** 2)
    r1 = data / np.sqrt(tn)
    r2 = solution.control_cost / tn
    e3 = window.epsilon ** 3
    return {"r1": r1, "r2": r2, "eps3_r1": e3 * r1, "eps3_r2": e3 * r2,
            "epsilon": window.epsilon}


# -- boundary HUM ----------------------------------------------------------

def solve_hum_boundary(op, target: StatePair, T: float, dt: float,
                       tol: float = 1e-8, max_iter: int = 5000):
    """Boundary-control HUM: returns (h source, controlled traj, iterations).

    h is carried at time half-steps (the duality-exact sampling); the
    controlled trajectory is the Dirichlet-driven solve hitting the target
    at t=0 and rest at t=T.
    """
    warn_if_below_minimal_time(op.alpha, T)
    rhs = StatePair(-target.velocity, target.position)

    def apply_op(d):
        return apply_lambda_boundary(op, d, T, dt)[0]

    p, iters, rel, history = _cg(
        apply_op, lambda r: riesz_e(op, r), lambda a, b: pairing(op, a, b),
        rhs, tol, max_iter)

    v_traj = adjoint_solution(op, p, T, dt)
    h = BoundaryDirichlet(-duality_trace(v_traj), at_midpoints=True)
    controlled = solve_backward(op, h, T, dt)
    return h, controlled, iters


# -- dense desk-scale oracles ---------------------------------------------

def _basis_states(op):
    n = op.n_dof
    for j in range(2 * n):
        e = np.zeros(n)
        e[j % n] = 1.0
        if j < n:
            yield StatePair(e, np.zeros(n))
        else:
            yield StatePair(np.zeros(n), e)


def _dense_from_apply(op, apply_op, cap):
    n = op.n_dof
    if n > cap:
        raise MethodTooLarge(f"dense oracle capped at {cap} dofs, got {n}")
    a = np.empty((2 * n, 2 * n))
    for j, q in enumerate(_basis_states(op)):
        lam = apply_op(q)
        a[:n, j] = op.mass * lam.position
        a[n:, j] = op.mass * lam.velocity
    return 0.5 * (a + a.T)


def _dense_gram_f(op):
    n = op.n_dof
    m = np.diag(op.mass)
    a_dense = np.diag(op.stiff_diag)
    idx = np.arange(n - 1)
    a_dense[idx, idx + 1] = op.stiff_off
    a_dense[idx + 1, idx] = op.stiff_off
    g = np.zeros((2 * n, 2 * n))
    g[:n, :n] = m
    g[n:, n:] = m @ np.linalg.solve(a_dense, m)
    return g


def _dense_gram_e(op):
    n = op.n_dof
    a_dense = np.diag(op.stiff_diag + op.mass)
    idx = np.arange(n - 1)
    a_dense[idx, idx + 1] = op.stiff_off
    a_dense[idx + 1, idx] = op.stiff_off
    g = np.zeros((2 * n, 2 * n))
    g[:n, :n] = a_dense
    g[n:, n:] = np.diag(op.mass)
    return g


def dense_lambda_distributed(op, window: ControlWindow, T: float, dt: float,
                             cap: int = DENSE_DOF_CAP):
    """(form matrix, F-gram matrix) over the coordinate basis of F."""
    a = _dense_from_apply(
        op, lambda q: apply_lambda_full(op, window, q, T, dt)[0], cap)
    return a, _dense_gram_f(op)


def dense_lambda_boundary(op, T: float, dt: float, cap: int = DENSE_DOF_CAP):
    """(form matrix, E-gram matrix) for the boundary-trace form."""
    a = _dense_from_apply(
        op, lambda q: apply_lambda_boundary(op, q, T, dt)[0], cap)
    return a, _dense_gram_e(op)


def hum_export_csv(solution: HUMSolution, op, path, T, dt, tol) -> None:
    """Control values (t, x, v_eps) with a metadata header."""
    w = solution.control.window
    with open(path, "w") as f:
        f.write(f"# alpha={op.alpha} regime={op.regime.value} N={op.grid.n_cells} "
                f"dt={dt!r} T={T!r} eps={w.epsilon!r} tol={tol!r} "
                f"iterations={solution.cg_iterations} "
                f"terminal_energy={solution.terminal_energy!r}\n")
        f.write("t,x,v\n")
        times = solution.adjoint_traj.times
        mask = w.active_weights > 0.0
        for k in range(times.size):
            for i in np.nonzero(mask)[0]:
                f.write(f"{times[k]!r},{op.x[i]!r},"
                        f"{solution.adjoint_traj.positions[k, i]!r}\n")
