"""Observability constants, scaling sweeps and norm-equivalence bounds.

The observability constant is the extremal Rayleigh quotient
c_obs = sup ||data||^2 / form(data) = 1 / mu_min, where mu_min is the
smallest eigenvalue of the observation Gramian relative to the
initial-data norm.  Two estimators are provided: a dense oracle that
assembles the Gramian over a basis (size-capped) and a matrix-free
shift-inverted iteration whose inner solves reuse the HUM conjugate
gradient.

Spectral filtering: over the full grid space the discrete constants do
not converge -- high-frequency mesh modes have vanishing group velocity,
hide from any fixed observation region, and drive mu_min to round-off
level under refinement.  Restricting the data to the lowest fraction of
eigenmodes of the weighted operator removes the spurious band and the
filtered constants stabilize under refinement above the minimal time and
exhibit the expected blow-up below it.  filter_fraction=1.0 disables the
filter and measures the raw, non-uniform constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .discretization import DegenerateOperator, build_operator
from .errors import ConfigError, MethodTooLarge, NoConvergence
from .hum import (
    DENSE_DOF_CAP,
    _cg,
    _dense_from_apply,
    _dense_gram_e,
    _dense_gram_f,
    apply_lambda,
    apply_lambda_boundary,
    dense_lambda_boundary,
    dense_lambda_distributed,
    inner_e,
    inner_f,
    pairing,
    riesz_e,
    riesz_f,
)
from .solver import ControlWindow, StatePair

MODAL_BASIS_CAP = 320       # reduced basis vectors for filtered assembly
SWEEP_FILTER = 0.25         # default mode fraction for scaling sweeps
BLOWUP_FILTER = 0.04        # small band for below-minimal-time probes


class Method(str, Enum):
    DENSE = "DenseOracle"
    INVERSE_POWER = "InversePowerCG"


class SweepAxis(str, Enum):
    EPSILON = "Epsilon"
    TIME = "Time"
    RESOLUTION = "Resolution"


@dataclass
class ObservabilityReport:
    alpha: float
    regime: str
    n_cells: int
    T: float
    epsilon: float | None
    c_obs: float
    mu_min: float
    method: Method
    iterations: int
    residual: float
    filter_fraction: float = 1.0
    n_modes: int | None = None


@dataclass
class SweepResult:
    axis: SweepAxis
    samples: list          # (parameter, c_obs), sorted by parameter
    fitted_slope: float | None = None
    ratio_extremes: float | None = None   # c_obs at smallest / largest parameter
    reports: list = field(default_factory=list)


def resolve_steps(T: float, dt_target: float):
    """Snap dt to an exact divisor of T near dt_target: (dt, nsteps)."""
    if T <= 0.0 or dt_target <= 0.0:
        raise ConfigError(f"need T, dt > 0, got T={T}, dt={dt_target}")
    k = max(1, int(round(T / dt_target)))
    return T / k, k


# -- filtered modal pencil -------------------------------------------------

def _mode_count(op, fraction: float) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"filter_fraction={fraction} outside (0, 1]")
    return max(1, int(round(fraction * op.n_dof)))


class ModalBand:
    """The lowest m eigenmodes of the weighted operator, as a data space.

    Coordinates are (a, b) in R^{2m}: position Phi a, velocity Phi b with
    Phi mass-orthonormal, so both the F- and E-inner products are the
    diagonals stored in gram_f / gram_e.
    """

    def __init__(self, op: DegenerateOperator, n_modes: int):
        self.op = op
        self.m = n_modes
        self.lam, self.phi = op.eigenpairs(n_modes)
        self.gram_f = np.concatenate([np.ones(n_modes), 1.0 / self.lam])
        self.gram_e = np.concatenate([self.lam + 1.0, np.ones(n_modes)])

    def lift(self, coeffs: np.ndarray) -> StatePair:
        return StatePair(self.phi @ coeffs[:self.m], self.phi @ coeffs[self.m:])

    def restrict_functional(self, functional: StatePair) -> np.ndarray:
        return np.concatenate([
            self.phi.T @ (self.op.mass * functional.position),
            self.phi.T @ (self.op.mass * functional.velocity)])

    def form_matrix(self, apply_op, cap: int = MODAL_BASIS_CAP) -> np.ndarray:
        if 2 * self.m > cap:
            raise MethodTooLarge(
                f"filtered dense assembly capped at {cap} basis vectors, "
                f"got {2 * self.m}")
        a = np.empty((2 * self.m, 2 * self.m))
        for j in range(2 * self.m):
            e = np.zeros(2 * self.m)
            e[j] = 1.0
            a[:, j] = self.restrict_functional(apply_op(self.lift(e)))
        return 0.5 * (a + a.T)


def _filtered_mu_min(band: ModalBand, apply_op, gram_diag, method: Method,
                     tol: float = 1e-10):
    """(mu_min, iterations, residual) of the reduced pencil (form, diag)."""
    if method is Method.DENSE:
        form = band.form_matrix(apply_op)
        vals = scipy.linalg.eigh(form, np.diag(gram_diag), eigvals_only=True)
        return float(vals[0]), 0, 0.0
    # shift-inverted iteration on B = D^{-1/2} A D^{-1/2}, CG inner solves
    s = 1.0 / np.sqrt(gram_diag)
    dim = 2 * band.m
    applies = [0]

    def bmat(z):
        applies[0] += 1
        return s * band.restrict_functional(apply_op(band.lift(s * z)))

    bop = spla.LinearOperator((dim, dim), matvec=bmat)

    def opinv(z):
        x, info = spla.cg(bop, z, rtol=1e-10, maxiter=20000)
        if info != 0:
            raise NoConvergence("inner CG of the shift-inverted iteration "
                                "stalled", residual=float(info))
        return x

    vals = spla.eigsh(bop, k=1, sigma=0.0, which="LM",
                      OPinv=spla.LinearOperator((dim, dim), matvec=opinv),
                      tol=tol, return_eigenvectors=False)
    return float(vals[0]), applies[0], tol


# -- full-space extremal eigenvalue estimators ----------------------------

def _dense_mu_range(form: np.ndarray, gram: np.ndarray):
    vals = scipy.linalg.eigh(form, gram, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def _inverse_power(apply_op, riesz, pair, functional_of, inner, v0: StatePair,
                   tol: float = 1e-9, max_iter: int = 200,
                   cg_tol: float = 1e-10, cg_max_iter: int = 5000):
    """Smallest eigenvalue of the pencil (form, space norm), matrix-free.

    Krylov-accelerated inverse iteration: Lanczos on T = Lambda^{-1} G,
    self-adjoint in the space inner product, with full reorthogonalization
    (the bottom of the Gramian spectrum clusters, so plain power steps
    stall).  Each application of T is one CG solve whose matrix-vector
    products are forward/backward PDE solves.  Returns (mu_min, outer
    iterations, eigen-residual relative to the space norm, CG total).
    """
    nrm = np.sqrt(inner(v0, v0))
    if nrm == 0.0:
        raise NoConvergence("inverse iteration needs a nonzero start vector")
    q = v0.scaled(1.0 / nrm)
    basis = [q]
    alphas, betas = [], []
    total_cg = 0
    res = np.inf
    for it in range(1, max_iter + 1):
        rhs = functional_of(q)
        w, cg_it, _, _ = _cg(apply_op, riesz, pair, rhs, cg_tol, cg_max_iter,
                             strict=False)
        total_cg += cg_it
        if betas:
            w = StatePair(w.position - betas[-1] * basis[-2].position,
                          w.velocity - betas[-1] * basis[-2].velocity)
        a = inner(w, q)
        alphas.append(a)
        w = StatePair(w.position - a * q.position, w.velocity - a * q.velocity)
        for b in basis:  # full reorthogonalization
            c = inner(w, b)
            w = StatePair(w.position - c * b.position,
                          w.velocity - c * b.velocity)
        theta, s = scipy.linalg.eigh_tridiagonal(np.array(alphas),
                                                 np.array(betas))
        lam = theta[-1]
        beta = np.sqrt(max(inner(w, w), 0.0))
        res = beta * abs(s[-1, -1]) / abs(lam)
        if res <= tol:
            return 1.0 / lam, it, res, total_cg
        if beta == 0.0:  # invariant subspace exhausted: exact on its span
            return 1.0 / lam, it, 0.0, total_cg
        betas.append(beta)
        q = w.scaled(1.0 / beta)
        basis.append(q)
    raise NoConvergence("inverse Lanczos iteration stalled",
                        iterations=max_iter, residual=res)


def _seed_state(op: DegenerateOperator, seed: int = 20210) -> StatePair:
    rng = np.random.default_rng(seed)
    return StatePair(rng.standard_normal(op.n_dof),
                     rng.standard_normal(op.n_dof))


def _functional_of_f(op, q: StatePair) -> StatePair:
    """The F-functional representing q: pairing(., phi) = <., q>_F."""
    return StatePair(q.position.copy(),
                     op.solve_stiffness(op.mass * q.velocity))


def _functional_of_e(op, q: StatePair) -> StatePair:
    z0 = (op.apply_stiffness(q.position) + op.mass * q.position) / op.mass
    return StatePair(z0, q.velocity.copy())


def _report(op, T, epsilon, mu_min, method, iterations, residual,
            fraction=1.0, n_modes=None):
    return ObservabilityReport(
        alpha=op.alpha, regime=op.regime.value, n_cells=op.grid.n_cells,
        T=T, epsilon=epsilon, c_obs=1.0 / mu_min, mu_min=mu_min,
        method=method, iterations=iterations, residual=residual,
        filter_fraction=fraction, n_modes=n_modes)


def observability_constant_distributed(op, window: ControlWindow, T: float,
                                       dt: float,
                                       method: Method = Method.INVERSE_POWER,
                                       filter_fraction: float = 1.0,
                                       ) -> ObservabilityReport:
    """Best constant in ||v0||^2_{L2} + ||v1||^2_{H-1} <= c_obs iint |v|^2."""
    method = Method(method)
    lam_op = lambda d: apply_lambda(op, window, d, T, dt)
    if filter_fraction < 1.0:
        band = ModalBand(op, _mode_count(op, filter_fraction))
        mu, iters, res = _filtered_mu_min(band, lam_op, band.gram_f, method)
        return _report(op, T, window.epsilon, mu, method, iters, res,
                       filter_fraction, band.m)
    if method is Method.DENSE:
        mu, _ = _dense_mu_range(*dense_lambda_distributed(op, window, T, dt))
        return _report(op, T, window.epsilon, mu, method, 0, 0.0)
    mu, iters, res, _ = _inverse_power(
        lam_op, lambda r: riesz_f(op, r), lambda a, b: pairing(op, a, b),
        lambda q: _functional_of_f(op, q), lambda a, b: inner_f(op, a, b),
        _seed_state(op))
    return _report(op, T, window.epsilon, mu, method, iters, res)


def observability_constant_boundary(op, T: float, dt: float,
                                    method: Method = Method.INVERSE_POWER,
                                    filter_fraction: float = 1.0,
                                    ) -> ObservabilityReport:
    """Best constant in ||v0||^2_{H1_a} + ||v1||^2_{L2} <= c_obs int |v_x(t,1)|^2."""
    method = Method(method)
    lam_op = lambda d: apply_lambda_boundary(op, d, T, dt)[0]
    if filter_fraction < 1.0:
        band = ModalBand(op, _mode_count(op, filter_fraction))
        mu, iters, res = _filtered_mu_min(band, lam_op, band.gram_e, method)
        return _report(op, T, None, mu, method, iters, res,
                       filter_fraction, band.m)
    if method is Method.DENSE:
        mu, _ = _dense_mu_range(*dense_lambda_boundary(op, T, dt))
        return _report(op, T, None, mu, method, 0, 0.0)
    mu, iters, res, _ = _inverse_power(
        lam_op, lambda r: riesz_e(op, r), lambda a, b: pairing(op, a, b),
        lambda q: _functional_of_e(op, q), lambda a, b: inner_e(op, a, b),
        _seed_state(op))
    return _report(op, T, None, mu, method, iters, res)


# -- sweeps ----------------------------------------------------------------

def epsilon_sweep(op, T: float, dt: float, epsilons,
                  method: Method = Method.DENSE,
                  filter_fraction: float = SWEEP_FILTER) -> SweepResult:
    """c_obs per window width, with a log-log slope fit against 1/eps."""
    if len(epsilons) < 3:
        raise ConfigError("epsilon sweep needs at least 3 samples for a fit")
    reports = []
    for eps in sorted(epsilons):
        window = ControlWindow.build(op, eps)
        reports.append(observability_constant_distributed(
            op, window, T, dt, method, filter_fraction))
    samples = [(r.epsilon, r.c_obs) for r in reports]
    logs = np.log([1.0 / e for e, _ in samples])
    logc = np.log([c for _, c in samples])
    slope = float(np.polyfit(logs, logc, 1)[0])
    ratio = samples[0][1] / samples[-1][1]
    return SweepResult(SweepAxis.EPSILON, samples, fitted_slope=slope,
                       ratio_extremes=ratio, reports=reports)


def time_sweep(op, window, dt_target: float, times,
               method: Method = Method.DENSE,
               filter_fraction: float = SWEEP_FILTER) -> SweepResult:
    """c_obs per horizon; window=None selects the boundary observation.

    dt is re-snapped per horizon so each T is an exact multiple of the
    step; the ratio of the constants at the extreme horizons is reported.
    """
    if len(times) < 2:
        raise ConfigError("time sweep needs at least 2 horizons")
    reports = []
    for T in sorted(times):
        dt, _ = resolve_steps(T, dt_target)
        if window is None:
            reports.append(observability_constant_boundary(
                op, T, dt, method, filter_fraction))
        else:
            reports.append(observability_constant_distributed(
                op, window, T, dt, method, filter_fraction))
    samples = [(r.T, r.c_obs) for r in reports]
    ratio = samples[0][1] / samples[-1][1]
    return SweepResult(SweepAxis.TIME, samples, ratio_extremes=ratio,
                       reports=reports)


def resolution_sweep(alpha: float, resolutions, T: float,
                     dt_of_h=lambda h: h / 2.0,
                     method: Method = Method.DENSE,
                     filter_fraction: float = BLOWUP_FILTER,
                     window_epsilon: float | None = None) -> SweepResult:
    """Boundary (or distributed) c_obs under grid refinement.

    The minimal-time probe: below T_alpha the filtered constant grows
    with N without bound, above it it stabilizes.  The default filter
    band is small so the growth stays resolvable in double precision.
    """
    reports = []
    for n in sorted(resolutions):
        op = build_operator(alpha, n_cells=n)
        dt, _ = resolve_steps(T, dt_of_h(op.grid.h))
        if window_epsilon is None:
            reports.append(observability_constant_boundary(
                op, T, dt, method, filter_fraction))
        else:
            window = ControlWindow.build(op, window_epsilon)
            reports.append(observability_constant_distributed(
                op, window, T, dt, method, filter_fraction))
    samples = [(r.n_cells, r.c_obs) for r in reports]
    ratio = samples[0][1] / samples[-1][1]
    return SweepResult(SweepAxis.RESOLUTION, samples, ratio_extremes=ratio,
                       reports=reports)


# -- norm-equivalence constants -------------------------------------------

def _shift_data(op, d: StatePair) -> StatePair:
    """(v0,v1) -> (v1, -M^{-1}A v0): data of the velocity trajectory."""
    return StatePair(d.velocity.copy(), -op.apply_stiffness(d.position) / op.mass)


def _shift_functional(op, phi: StatePair) -> StatePair:
    """Adjoint of _shift_data w.r.t. the mass pairing."""
    return StatePair(-op.apply_stiffness(phi.velocity) / op.mass,
                     phi.position.copy())


def apply_lambda_vt(op, vdata: StatePair, T: float, dt: float) -> StatePair:
    """Gram functional of the form iint_Q |v_t|^2 on E-data.

    The discrete velocity trajectory of the scheme is itself a scheme
    solution with shifted data, so the form is the full-window position
    form conjugated by the shift; the identity is exact, not asymptotic.
    """
    window = ControlWindow.build(op, 1.0)
    lam = apply_lambda(op, window, _shift_data(op, vdata), T, dt)
    return _shift_functional(op, lam)


def norm_equivalence_constants(op, T: float, dt: float, which: str,
                               cap: int = DENSE_DOF_CAP):
    """Extremal constants (A_best, B_best) of the stated norm equivalence.

    which: 'vt' (iint |v_t|^2 vs H^1_a x L2), 'v' (iint |v|^2 vs
    L2 x H^-1_a), or 'trace' (int |v_x(t,1)|^2 vs H^1_a x L2).  The
    equivalence chain is  ||data||^2 <= A_best * form  and
    form <= B_best * ||data||^2,  i.e. A_best = 1/mu_min and
    B_best = mu_max of the form relative to the data norm.  Dense oracle
    only (size-capped).
    """
    which = which.lower()
    if which == "v":
        form, gram = dense_lambda_distributed(op, ControlWindow.build(op, 1.0),
                                              T, dt, cap=cap)
    elif which == "trace":
        form, gram = dense_lambda_boundary(op, T, dt, cap=cap)
    elif which == "vt":
        form = _dense_from_apply(
            op, lambda q: apply_lambda_vt(op, q, T, dt), cap)
        gram = _dense_gram_e(op)
    else:
        raise ConfigError(f"unknown norm-equivalence form {which!r}")
    mu_min, mu_max = _dense_mu_range(form, gram)
    return 1.0 / mu_min, mu_max


def sweep_to_csv(result: SweepResult, path, header: str = "") -> None:
    """parameter, c_obs, mu_min, iterations rows plus a fit summary line."""
    with open(path, "w") as f:
        if header:
            f.write(header if header.endswith("\n") else header + "\n")
        f.write("parameter,c_obs,mu_min,iterations\n")
        for r in result.reports:
            par = {"Epsilon": r.epsilon, "Time": r.T,
                   "Resolution": r.n_cells}[result.axis.value]
            f.write(f"{par!r},{r.c_obs!r},{r.mu_min!r},{r.iterations}\n")
        f.write(f"# axis={result.axis.value} fitted_slope="
                f"{result.fitted_slope!r} ratio_extremes="
                f"{result.ratio_extremes!r}\n")
