"""Command-line front end: parse experiment configurations, dispatch to
the numerical modules, and emit reproducible CSV/SVG artifacts.

Every run resolves its configuration deterministically ("auto" values
included), stamps each output file with the resolved parameters, and
writes a run manifest alongside the data so an artifact can be traced
back to the exact invocation that produced it.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .discretization import (
    Regime,
    build_operator,
    minimal_time,
    regime_for_alpha,
)
from .errors import ConfigError, DegwaveError
from .hum import (
    hum_bounds_check,
    hum_export_csv,
    solve_hum_boundary,
    solve_hum_distributed,
    verify_null,
)
from .limits import h_to_csv, limit_to_csv, run_limit_sweep
from .observability import (
    BLOWUP_FILTER,
    SWEEP_FILTER,
    Method,
    epsilon_sweep,
    observability_constant_boundary,
    observability_constant_distributed,
    resolve_steps,
    sweep_to_csv,
    time_sweep,
)
from .solver import (
    ControlWindow,
    StatePair,
    energy_series,
    solve_forward,
    trajectory_to_csv,
)

OUTPUT_DIR_ENV = "DEGWAVE_OUTPUT_DIR"

COMMANDS = ("solve", "hum", "hum-boundary", "observability", "sweep-eps",
            "sweep-time", "limit", "selftest")

_METHODS = {"dense": Method.DENSE, "inverse-power": Method.INVERSE_POWER}


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; "auto" fields resolve deterministically."""

    alpha: float = 0.5
    regime: str = "auto"          # auto = Weak iff alpha < 1
    n_cells: int = 100
    T: str | float = "auto"       # auto = 1.6 * T_alpha
    dt: str | float = "auto"      # auto = h / 2, snapped to divide T
    epsilon: float = 0.3
    epsilon_list: list = field(
        default_factory=lambda: [0.4, 0.3, 0.2, 0.15, 0.1])
    times: list = field(default_factory=list)   # auto: around T_alpha
    tol: float = 1e-8
    seed: int = 7771
    method: str = "dense"
    filter_fraction: float | None = None
    output_dir: str = ""
    plot: bool = False

    def resolved(self) -> "ResolvedConfig":
        if not 0.0 <= self.alpha < 2.0:
            raise ConfigError(f"alpha={self.alpha} outside [0, 2)")
        if self.regime == "auto":
            regime = regime_for_alpha(self.alpha)
        else:
            try:
                regime = Regime(self.regime.capitalize())
            except ValueError:
                raise ConfigError(f"unknown regime {self.regime!r}") from None
        if self.n_cells < 4:
            raise ConfigError(f"n_cells={self.n_cells} too small")
        t_alpha = minimal_time(self.alpha)
        T = 1.6 * t_alpha if self.T == "auto" else float(self.T)
        if T <= 0.0:
            raise ConfigError(f"T={T} must be positive")
        h = 1.0 / self.n_cells
        dt_target = h / 2.0 if self.dt == "auto" else float(self.dt)
        dt, nsteps = resolve_steps(T, dt_target)
        if not self.epsilon_list or any(
                not 0.0 < e <= 1.0 for e in self.epsilon_list):
            raise ConfigError(f"epsilon_list={self.epsilon_list} invalid")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigError(f"epsilon={self.epsilon} outside (0, 1]")
        if self.method not in _METHODS:
            raise ConfigError(f"unknown method {self.method!r} "
                              f"(choose from {sorted(_METHODS)})")
        if self.tol <= 0.0:
            raise ConfigError(f"tol={self.tol} must be positive")
        times = list(self.times) or [round(f * t_alpha, 12)
                                     for f in (0.75, 1.0, 1.25, 1.5)]
        out = self.output_dir or os.environ.get(OUTPUT_DIR_ENV, ".")
        return ResolvedConfig(
            alpha=self.alpha, regime=regime, n_cells=self.n_cells,
            T=T, dt=dt, nsteps=nsteps, epsilon=self.epsilon,
            epsilon_list=sorted(self.epsilon_list, reverse=True),
            times=sorted(times), tol=self.tol, seed=self.seed,
            method=_METHODS[self.method],
            filter_fraction=self.filter_fraction,
            output_dir=out, plot=self.plot,
            auto_T=self.T == "auto", auto_dt=self.dt == "auto",
            auto_regime=self.regime == "auto")


@dataclass
class ResolvedConfig:
    alpha: float
    regime: Regime
    n_cells: int
    T: float
    dt: float
    nsteps: int
    epsilon: float
    epsilon_list: list
    times: list
    tol: float
    seed: int
    method: Method
    filter_fraction: float | None
    output_dir: str
    plot: bool
    auto_T: bool
    auto_dt: bool
    auto_regime: bool

    def header(self, epsilon=None) -> str:
        eps = self.epsilon if epsilon is None else epsilon
        return (f"# alpha={self.alpha} regime={self.regime.value} "
                f"N={self.n_cells} dt={self.dt!r} T={self.T!r} "
                f"eps={eps!r} tol={self.tol!r} seed={self.seed}")

    def path(self, name: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        return os.path.join(self.output_dir, name)

    def write_manifest(self, command: str, artifacts: list) -> str:
        path = self.path(f"{command}_manifest.txt")
        with open(path, "w") as f:
            f.write(f"command = {command}\n")
            f.write(f"version = {__version__}\n")
            f.write(f"alpha = {self.alpha!r}\n")
            f.write(f"regime = {self.regime.value}"
                    f"{' (auto)' if self.auto_regime else ''}\n")
            f.write(f"n_cells = {self.n_cells}\n")
            f.write(f"T = {self.T!r}{' (auto = 1.6*T_alpha)' if self.auto_T else ''}\n")
            f.write(f"dt = {self.dt!r}"
                    f"{' (auto = h/2, snapped)' if self.auto_dt else ''}\n")
            f.write(f"nsteps = {self.nsteps}\n")
            f.write(f"epsilon = {self.epsilon!r}\n")
            f.write(f"epsilon_list = {','.join(repr(e) for e in self.epsilon_list)}\n")
            f.write(f"times = {','.join(repr(t) for t in self.times)}\n")
            f.write(f"tol = {self.tol!r}\n")
            f.write(f"seed = {self.seed}\n")
            f.write(f"method = {self.method.value}\n")
            f.write(f"filter_fraction = {self.filter_fraction!r}\n")
            for a in artifacts:
                f.write(f"artifact = {os.path.basename(a)}\n")
        return path


# -- config file / flag parsing --------------------------------------------

_LIST_KEYS = {"epsilon_list", "times"}
_FLOAT_KEYS = {"alpha", "epsilon", "tol"}
_INT_KEYS = {"n_cells", "seed"}
_AUTO_FLOAT_KEYS = {"T", "dt"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _LIST_KEYS:
            return [float(v) for v in raw.split(",") if v.strip()]
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _AUTO_FLOAT_KEYS:
            return raw if raw == "auto" else float(raw)
        if key == "filter_fraction":
            return None if raw in ("", "none", "None") else float(raw)
        if key == "plot":
            return raw.lower() in ("1", "true", "yes", "on")
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None
    return raw


def load_config_file(path: str) -> dict:
    """Flat key = value text file; '#' starts a comment."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    try:
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(
                        f"{path}:{lineno}: expected key = value, got {line!r}")
                key, raw = (s.strip() for s in line.split("=", 1))
                if key not in known:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _coerce(key, raw)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="degwave",
        description="Null controllability experiments for the degenerate "
                    "wave equation u_tt = (x^alpha u_x)_x")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--alpha", type=float)
    p.add_argument("--regime", choices=["auto", "weak", "strong"])
    p.add_argument("--N", dest="n_cells", type=int)
    p.add_argument("--T", dest="T")
    p.add_argument("--dt", dest="dt")
    p.add_argument("--eps", dest="epsilon_raw",
                   help="window width; a comma list feeds the sweeps")
    p.add_argument("--times", dest="times_raw",
                   help="comma list of horizons for sweep-time")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=sorted(_METHODS))
    p.add_argument("--filter-fraction", dest="filter_fraction", type=float)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--plot", action="store_true", default=None)
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = load_config_file(args.config) if args.config else {}
    for key in ("alpha", "regime", "n_cells", "tol", "seed", "method",
                "filter_fraction", "output_dir", "plot"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    for key in ("T", "dt"):
        v = getattr(args, key)
        if v is not None:
            values[key] = _coerce(key, v)
    if args.epsilon_raw is not None:
        eps = _coerce("epsilon_list", args.epsilon_raw)
        if not eps:
            raise ConfigError(f"cannot parse --eps {args.epsilon_raw!r}")
        values["epsilon"] = eps[0]
        if len(eps) > 1:
            values["epsilon_list"] = eps
    if args.times_raw is not None:
        values["times"] = _coerce("times", args.times_raw)
    return ExperimentConfig(**values)


# -- SVG polyline plots ----------------------------------------------------

def write_svg(path, xs, ys, title="", width=640, height=420,
              logx=False, logy=False) -> None:
    """Dependency-free polyline plot of one series."""
    xs = np.log10(np.asarray(xs, float)) if logx else np.asarray(xs, float)
    ys = np.log10(np.asarray(ys, float)) if logy else np.asarray(ys, float)
    pad = 50.0
    w, h = width - 2 * pad, height - 2 * pad

    def span(a):
        lo, hi = float(np.min(a)), float(np.max(a))
        if hi == lo:
            hi = lo + 1.0
        return lo, hi

    x0, x1 = span(xs)
    y0, y1 = span(ys)
    px = pad + (xs - x0) / (x1 - x0) * w
    py = pad + (1.0 - (ys - y0) / (y1 - y0)) * h
    points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    with open(path, "w") as f:
        f.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{width}" height="{height}">\n')
        f.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
        f.write(f'<text x="{width / 2:.0f}" y="24" text-anchor="middle" '
                f'font-family="monospace" font-size="13">{title}</text>\n')
        f.write(f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" '
                f'fill="none" stroke="black"/>\n')
        f.write(f'<polyline points="{points}" fill="none" stroke="steelblue" '
                f'stroke-width="1.5"/>\n')
        f.write(f'<text x="{pad}" y="{height - 8:.0f}" font-family="monospace" '
                f'font-size="11">x: [{x0:.4g}, {x1:.4g}]'
                f'{" (log10)" if logx else ""}</text>\n')
        f.write(f'<text x="{width - pad:.0f}" y="{height - 8:.0f}" '
                f'text-anchor="end" font-family="monospace" font-size="11">'
                f'y: [{y0:.4g}, {y1:.4g}]{" (log10)" if logy else ""}</text>\n')
        f.write('</svg>\n')


# -- shared run ingredients ------------------------------------------------

def default_target(op) -> StatePair:
    """Smooth unit-H^1_a position target used by the control commands."""
    f = np.sin(np.pi * op.x) * op.x
    return StatePair(f / op.norm_h1a(f), np.zeros(op.n_dof))


def seeded_initial_state(op, seed: int) -> StatePair:
    """Low-frequency seeded data for the plain forward solve."""
    rng = np.random.default_rng(seed)
    x = op.x
    shape = x * (1.0 - x) if op.n_dof < op.grid.n_cells else (1.0 - x)
    c = rng.standard_normal(4)
    return StatePair(shape * (c[0] + c[1] * x), shape * (c[2] + c[3] * x))


def _build(cfg: ResolvedConfig):
    return build_operator(cfg.alpha, regime=cfg.regime, n_cells=cfg.n_cells)


# -- command implementations ----------------------------------------------

def cmd_solve(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    traj = solve_forward(op, seeded_initial_state(op, cfg.seed), None,
                         cfg.T, cfg.dt)
    out = cfg.path("solve_trajectory.csv")
    stride = max(1, cfg.nsteps // 200)
    trajectory_to_csv(traj, out, stride_t=stride)
    e = energy_series(traj)
    drift = float(np.max(np.abs(e - e[0])) / e[0]) if e[0] else 0.0
    epath = cfg.path("solve_energy.csv")
    with open(epath, "w") as f:
        f.write(cfg.header() + "\n")
        f.write("t,energy\n")
        for k in range(0, cfg.nsteps + 1, stride):
            f.write(f"{traj.times[k]!r},{e[k]!r}\n")
        f.write(f"# relative_energy_drift={drift!r}\n")
    artifacts = [out, epath]
    if cfg.plot:
        svg = cfg.path("solve_energy.svg")
        write_svg(svg, traj.times, e, title="conserved energy E(t)")
        artifacts.append(svg)
    print(f"solve: {cfg.nsteps} steps, relative energy drift {drift:.3e}")
    return artifacts


def cmd_hum(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    window = ControlWindow.build(op, cfg.epsilon)
    target = default_target(op)
    sol = solve_hum_distributed(op, window, target, cfg.T, cfg.dt,
                                tol=cfg.tol)
    term, mismatch = verify_null(op, window, sol, target, cfg.T, cfg.dt)
    bounds = hum_bounds_check(op, window, sol, target)
    out = cfg.path("hum_control.csv")
    hum_export_csv(sol, op, out, cfg.T, cfg.dt, cfg.tol)
    spath = cfg.path("hum_summary.csv")
    with open(spath, "w") as f:
        f.write(cfg.header() + "\n")
        f.write("cg_iterations,cg_residual,control_cost,identity_residual,"
                "terminal_energy,initial_mismatch,eps3_cost_ratio\n")
        f.write(f"{sol.cg_iterations},{sol.cg_residual!r},"
                f"{sol.control_cost!r},{sol.identity_residual!r},"
                f"{term!r},{mismatch!r},{bounds['eps3_r2']!r}\n")
    artifacts = [out, spath]
    if cfg.plot:
        svg = cfg.path("hum_residuals.svg")
        write_svg(svg, np.arange(1, len(sol.residual_history) + 1),
                  sol.residual_history, title="CG residual history",
                  logy=True)
        artifacts.append(svg)
    print(f"hum: {sol.cg_iterations} CG iterations, "
          f"terminal energy {term:.3e}")
    return artifacts


def cmd_hum_boundary(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    target = default_target(op)
    h, controlled, iters = solve_hum_boundary(op, target, cfg.T, cfg.dt,
                                              tol=cfg.tol)
    hmid = h.h_mid(cfg.nsteps)
    out = cfg.path("hum_boundary_h.csv")
    with open(out, "w") as f:
        f.write(cfg.header(epsilon=0.0) + "\n")
        f.write("t,h\n")
        for k, hk in enumerate(hmid):
            f.write(f"{(k + 0.5) * cfg.dt!r},{hk!r}\n")
    artifacts = [out]
    if cfg.plot:
        svg = cfg.path("hum_boundary_h.svg")
        write_svg(svg, (np.arange(cfg.nsteps) + 0.5) * cfg.dt, hmid,
                  title="boundary control h(t)")
        artifacts.append(svg)
    print(f"hum-boundary: {iters} CG iterations, "
          f"||h||_inf = {float(np.max(np.abs(hmid))):.4g}")
    return artifacts


def cmd_observability(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    fraction = (1.0 if cfg.filter_fraction is None
                else cfg.filter_fraction)
    if cfg.epsilon < 1.0:
        window = ControlWindow.build(op, cfg.epsilon)
        rep = observability_constant_distributed(
            op, window, cfg.T, cfg.dt, cfg.method, fraction)
    else:
        rep = observability_constant_boundary(
            op, cfg.T, cfg.dt, cfg.method, fraction)
    out = cfg.path("observability.csv")
    with open(out, "w") as f:
        f.write(cfg.header(epsilon=rep.epsilon) + "\n")
        f.write("c_obs,mu_min,method,iterations,residual,"
                "filter_fraction,n_modes\n")
        f.write(f"{rep.c_obs!r},{rep.mu_min!r},{rep.method.value},"
                f"{rep.iterations},{rep.residual!r},"
                f"{rep.filter_fraction!r},{rep.n_modes}\n")
    print(f"observability: c_obs = {rep.c_obs:.6g} ({rep.method.value})")
    return [out]


def cmd_sweep_eps(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    fraction = (SWEEP_FILTER if cfg.filter_fraction is None
                else cfg.filter_fraction)
    result = epsilon_sweep(op, cfg.T, cfg.dt, cfg.epsilon_list,
                           method=cfg.method, filter_fraction=fraction)
    out = cfg.path("sweep_eps.csv")
    sweep_to_csv(result, out, header=cfg.header(
        epsilon=",".join(repr(e) for e in cfg.epsilon_list)))
    artifacts = [out]
    if cfg.plot:
        svg = cfg.path("sweep_eps.svg")
        write_svg(svg, [1.0 / e for e, _ in result.samples],
                  [c for _, c in result.samples],
                  title=f"c_obs vs 1/eps (slope {result.fitted_slope:.3f})",
                  logx=True, logy=True)
        artifacts.append(svg)
    print(f"sweep-eps: fitted slope {result.fitted_slope:.4f}")
    return artifacts


def cmd_sweep_time(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    fraction = (SWEEP_FILTER if cfg.filter_fraction is None
                else cfg.filter_fraction)
    window = (None if cfg.epsilon >= 1.0
              else ControlWindow.build(op, cfg.epsilon))
    dt_target = cfg.dt
    result = time_sweep(op, window, dt_target, cfg.times,
                        method=cfg.method, filter_fraction=fraction)
    out = cfg.path("sweep_time.csv")
    sweep_to_csv(result, out, header=cfg.header(
        epsilon=None if window is None else cfg.epsilon))
    artifacts = [out]
    if cfg.plot:
        svg = cfg.path("sweep_time.svg")
        write_svg(svg, [t for t, _ in result.samples],
                  [c for _, c in result.samples],
                  title="c_obs vs horizon T", logy=True)
        artifacts.append(svg)
    print(f"sweep-time: c_obs ratio (shortest/longest) "
          f"{result.ratio_extremes:.4g}")
    return artifacts


def cmd_limit(cfg: ResolvedConfig) -> list:
    op = _build(cfg)
    target = default_target(op)
    diag = run_limit_sweep(op, target, cfg.T, cfg.dt, cfg.epsilon_list,
                           tol=cfg.tol, seed=cfg.seed)
    out = cfg.path("limit_diagnostics.csv")
    limit_to_csv(diag, out, header=cfg.header(
        epsilon=",".join(repr(e) for e in cfg.epsilon_list)))
    hpath = cfg.path("limit_h.csv")
    h_to_csv(diag, hpath, header=cfg.header(epsilon=diag.epsilons[-1]))
    artifacts = [out, hpath]
    if cfg.plot:
        svg = cfg.path("limit_h.svg")
        write_svg(svg, np.arange(diag.h_extracted.size) * cfg.dt,
                  diag.h_extracted, title="extracted boundary control h(t)")
        artifacts.append(svg)
    print(f"limit: terminal sizes "
          + " ".join(f"{t:.3e}" for t in diag.terminal_energies_boundary))
    return artifacts


def cmd_selftest(cfg: ResolvedConfig) -> list:
    """Desk-scale smoke checks of every module; raises on failure."""
    from .hum import pairing, riesz_f
    from .limits import (
        extract_boundary_control,
        rescale_control,
        transposition_norm_sq,
    )
    from .solver import energy, solve_backward

    op = build_operator(0.5, n_cells=24)
    n = op.n_dof
    zero = StatePair(np.zeros(n), np.zeros(n))
    assert energy(op, zero) == 0.0
    T, dt = 1.0, 1.0 / 48
    traj = solve_forward(op, seeded_initial_state(op, cfg.seed), None, T, dt)
    e = energy_series(traj)
    assert np.max(np.abs(e - e[0])) <= 1e-10 * e[0]
    f = riesz_f(op, StatePair(np.ones(n), np.zeros(n)))
    assert pairing(op, StatePair(np.ones(n), np.zeros(n)), f) > 0.0
    window = ControlWindow.build(op, 0.5)
    assert abs(window.node_weights.sum() - 0.5) < 1e-12
    sol_zero = solve_backward(op, None, T, dt)
    assert energy(op, sol_zero.terminal_state) == 0.0
    sol = solve_hum_distributed(op, window, default_target(op), 3.2, 3.2 / 160,
                                tol=1e-6)
    assert sol.identity_residual <= 1e-6 * max(sol.control_cost, 1.0)
    phi = rescale_control(sol)
    assert np.allclose(phi.positions, 0.5 ** 3 * sol.adjoint_traj.positions)
    h = extract_boundary_control(phi)
    assert h.shape == (phi.nsteps + 1,)
    assert transposition_norm_sq(op, zero) == 0.0
    rep = observability_constant_distributed(
        op, window, 3.2, 3.2 / 160, Method.DENSE, 0.5)
    assert rep.c_obs > 0.0
    print("selftest: all module smoke checks passed")
    return []


_DISPATCH = {
    "solve": cmd_solve,
    "hum": cmd_hum,
    "hum-boundary": cmd_hum_boundary,
    "observability": cmd_observability,
    "sweep-eps": cmd_sweep_eps,
    "sweep-time": cmd_sweep_time,
    "limit": cmd_limit,
    "selftest": cmd_selftest,
}


def run(command: str, config: ExperimentConfig) -> int:
    """Dispatch one command; returns the process exit code."""
    try:
        cfg = config.resolved()
    except DegwaveError as exc:
        print(f"degwave: config error: {exc}", file=sys.stderr)
        return 1
    try:
        artifacts = _DISPATCH[command](cfg)
    except ConfigError as exc:
        print(f"degwave: config error: {exc}", file=sys.stderr)
        return 1
    except DegwaveError as exc:
        print(f"degwave: {command} failed: {exc}", file=sys.stderr)
        return 2
    cfg.write_manifest(command, artifacts)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        config = config_from_args(args)
    except DegwaveError as exc:
        print(f"degwave: config error: {exc}", file=sys.stderr)
        return 1
    return run(args.command, config)


if __name__ == "__main__":
    sys.exit(main())
