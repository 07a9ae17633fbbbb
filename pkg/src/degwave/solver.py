"""Trapezoidal time integration of the degenerate wave equation.

The semi-discrete system is M u'' + A u = b(t) on the active dofs, with
distributed loads b = W v (window-weighted) or a Dirichlet lifting load at
the last active row.  The one-step scheme averages states at t_k and
t_{k+1}; it is unconditionally stable, exactly energy-conserving for
b = 0, and time-reversal symmetric, which makes the discrete duality
identities used by the control modules exact up to round-off.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import stepping
from .discretization import DegenerateOperator, minimal_time
from .errors import GridTooCoarse, NonPositiveStep, WindowMismatch


@dataclass(frozen=True)
class StatePair:
    """A (position, velocity) snapshot on the active dofs."""

    position: np.ndarray
    velocity: np.ndarray

    @classmethod
    def zero(cls, op: DegenerateOperator) -> "StatePair":
        return cls(np.zeros(op.n_dof), np.zeros(op.n_dof))

    def scaled(self, c: float) -> "StatePair":
        return StatePair(c * self.position, c * self.velocity)


@dataclass(frozen=True)
class ControlWindow:
    """Quadrature restriction to omega_eps = (1-eps, 1).

    node_weights are the cell weights m_i scaled by the overlap fraction of
    cell i with (1-eps,1), over all nodes 0..N; they sum to eps exactly.
    active_weights is the view on the operator's active dofs (the Dirichlet
    node at x=1 never contributes since v(t,1)=0).
    """

    epsilon: float
    node_weights: np.ndarray
    active_weights: np.ndarray

    @classmethod
    def build(cls, op: DegenerateOperator, epsilon: float) -> "ControlWindow":
        if not 0.0 < epsilon <= 1.0:
            raise WindowMismatch(f"epsilon={epsilon} outside (0, 1]")
        nodes, h = op.grid.nodes, op.grid.h
        lo_cell = nodes - h / 2.0
        hi_cell = nodes + h / 2.0
        lo_cell[0], hi_cell[-1] = 0.0, 1.0
        overlap = np.clip(hi_cell, 1.0 - epsilon, 1.0) - np.clip(lo_cell, 1.0 - epsilon, 1.0)
        node_w = np.maximum(overlap, 0.0)
        lo = 1 if op.n_dof == op.grid.n_cells - 1 else 0
        return cls(epsilon, node_w, node_w[lo:-1].copy())


class DistributedSource:
    """Right-hand side v(t,x) chi_omega: node samples of a field, windowed."""

    def __init__(self, window: ControlWindow, values: np.ndarray):
        self.window = window
        self.values = np.asarray(values, dtype=float)  # (K+1, n) node samples

    def loads(self, op, nsteps):
        if self.values.shape != (nsteps + 1, op.n_dof):
            raise WindowMismatch(
                f"distributed source of shape {self.values.shape} does not match "
                f"{nsteps + 1} time nodes x {op.n_dof} dofs")
        mid = 0.5 * (self.values[:-1] + self.values[1:])
        return mid * self.window.active_weights


class BoundaryDirichlet:
    """Inhomogeneous Dirichlet datum h(t) at x=1, imposed by lifting.

    h may be sampled at time nodes (length K+1, averaged to midpoints) or
    directly at half-steps (length K, at_midpoints=True); the latter is the
    duality-exact representation used by the HUM machinery.
    """

    def __init__(self, h: np.ndarray, at_midpoints: bool = False):
        self.h = np.asarray(h, dtype=float)
        self.at_midpoints = at_midpoints

    def h_mid(self, nsteps):
        if self.at_midpoints:
            if self.h.shape != (nsteps,):
                raise WindowMismatch("midpoint h series must have length nsteps")
            return self.h
        if self.h.shape != (nsteps + 1,):
            raise WindowMismatch("node h series must have length nsteps+1")
        return 0.5 * (self.h[:-1] + self.h[1:])

    def h_nodes(self, nsteps):
        if not self.at_midpoints:
            return self.h
        # midpoint-to-node reconstruction, second order in the interior
        hn = np.empty(nsteps + 1)
        hn[1:-1] = 0.5 * (self.h[:-1] + self.h[1:])
        hn[0] = 1.5 * self.h[0] - 0.5 * self.h[1]
        hn[-1] = 1.5 * self.h[-1] - 0.5 * self.h[-2]
        return hn

    def loads(self, op, nsteps):
        b = np.zeros((nsteps, op.n_dof))
        b[:, -1] = op.face_right * self.h_mid(nsteps) / op.grid.h
        return b


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed states at t_k = k*dt, k = 0..K, on one operator."""

    op: DegenerateOperator
    positions: np.ndarray   # (K+1, n)
    velocities: np.ndarray  # (K+1, n)
    dt: float
    boundary: np.ndarray = None  # node-N Dirichlet values, (K+1,)

    @property
    def nsteps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.nsteps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nsteps + 1) * self.dt

    def state(self, k: int) -> StatePair:
        return StatePair(self.positions[k], self.velocities[k])

    @property
    def initial_state(self) -> StatePair:
        return self.state(0)

    @property
    def terminal_state(self) -> StatePair:
        return self.state(self.nsteps)

    def scaled(self, c: float) -> "Trajectory":
        return Trajectory(self.op, c * self.positions, c * self.velocities,
                          self.dt, self.boundary)


def _nsteps(T, dt):
    if dt <= 0.0 or T <= 0.0:
        raise NonPositiveStep(f"need T, dt > 0, got T={T}, dt={dt}")
    k = int(round(T / dt))
    if k < 1 or abs(k * dt - T) > 1e-9 * max(T, 1.0):
        raise NonPositiveStep(f"dt={dt} does not divide T={T}")
    return k


def solve_forward(op, initial: StatePair, source, T: float, dt: float) -> Trajectory:
    """Integrate forward from `initial` under the given source (or None)."""
    K = _nsteps(T, dt)
    loads = None if source is None else source.loads(op, K)
    U, W = stepping.integrate(op, initial.position, initial.velocity, loads, dt, K)
    boundary = None
    if isinstance(source, BoundaryDirichlet):
        boundary = source.h_nodes(K)
    return Trajectory(op, U, W, dt, boundary)


def solve_backward(op, source, T: float, dt: float) -> Trajectory:
    """Integrate the backward problem with zero data at t = T.

    Realized through the scheme's exact time-reversal symmetry: integrate
    forward with the time-reversed load from zero data, then flip the time
    axis and negate velocities.
    """
    K = _nsteps(T, dt)
    loads = None if source is None else source.loads(op, K)
    if loads is not None:
        loads = loads[::-1]
    U, W = stepping.integrate(op, np.zeros(op.n_dof), np.zeros(op.n_dof),
                              loads, dt, K)
    boundary = None
    if isinstance(source, BoundaryDirichlet):
        boundary = source.h_nodes(K)
    return Trajectory(op, U[::-1].copy(), -W[::-1].copy(), dt, boundary)


def energy(op, state: StatePair) -> float:
    """E = 1/2 (v^T M v + u^T A u) on the active dofs."""
    kin = float(np.dot(op.mass * state.velocity, state.velocity))
    return 0.5 * (kin + op.h1a_form(state.position))


def energy_series(traj: Trajectory) -> np.ndarray:
    op = traj.op
    kin = np.einsum("ki,i,ki->k", traj.velocities, op.mass, traj.velocities)
    av = np.array([traj.op.apply_stiffness(u) for u in traj.positions])
    pot = np.einsum("ki,ki->k", traj.positions, av)
    return 0.5 * (kin + pot)


def boundary_trace(traj: Trajectory) -> np.ndarray:
    """u_x(t_k, 1) by the second-order one-sided difference at x=1."""
    op = traj.op
    if op.grid.n_cells < 3:
        raise GridTooCoarse("boundary trace needs at least 3 cells")
    h = op.grid.h
    u_n = traj.boundary if traj.boundary is not None else np.zeros(traj.nsteps + 1)
    return (3.0 * u_n - 4.0 * traj.positions[:, -1] + traj.positions[:, -2]) / (2.0 * h)


def duality_trace(traj: Trajectory) -> np.ndarray:
    """Midpoint trace -a_{N-1/2} v_{N-1}/h, exact partner of the lifting load.

    For a homogeneous trajectory (v(t,1)=0) this is the first-order
    one-sided difference of x^a v_x at x=1, weighted so that
    dt * sum h_mid * trace equals the discrete boundary duality pairing.
    """
    op = traj.op
    mid = 0.5 * (traj.positions[:-1, -1] + traj.positions[1:, -1])
    return -op.face_right * mid / op.grid.h


def spacetime_inner(traj_p: Trajectory, traj_q: Trajectory,
                    weights: np.ndarray) -> float:
    """dt * sum_k pbar^T diag(weights) qbar, the duality-exact quadrature."""
    pm = 0.5 * (traj_p.positions[:-1] + traj_p.positions[1:])
    qm = 0.5 * (traj_q.positions[:-1] + traj_q.positions[1:])
    return traj_p.dt * float(np.einsum("ki,i,ki->", pm, weights, qm))


def warn_if_below_minimal_time(alpha: float, T: float) -> None:
    ta = minimal_time(alpha)
    if T <= ta:
        warnings.warn(
            f"horizon T={T} is not above the minimal time T_alpha={ta:.4f}; "
            "observability degenerates under refinement", stacklevel=3)


def trajectory_to_csv(traj: Trajectory, path, stride_t: int = 1,
                      stride_x: int = 1) -> None:
    """Write (t, x, u, u_t) rows with a parameter header."""
    op = traj.op
    with open(path, "w") as f:
        f.write(f"# alpha={op.alpha} regime={op.regime.value} N={op.grid.n_cells} "
                f"dt={traj.dt!r} T={traj.horizon!r}\n")
        f.write("t,x,u,u_t\n")
        times = traj.times
        for k in range(0, traj.nsteps + 1, stride_t):
            for i in range(0, op.n_dof, stride_x):
                f.write(f"{times[k]!r},{op.x[i]!r},"
                        f"{traj.positions[k, i]!r},{traj.velocities[k, i]!r}\n")
