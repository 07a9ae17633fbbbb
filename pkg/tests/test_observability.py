"""Observability constants: estimators, sweeps, norm equivalences."""

import numpy as np
import pytest

from degwave.discretization import build_operator, minimal_time
from degwave.errors import ConfigError
from degwave.hum import apply_lambda, apply_lambda_boundary, inner_e, inner_f, pairing
from degwave.observability import (
    Method,
    ModalBand,
    SweepAxis,
    apply_lambda_vt,
    epsilon_sweep,
    norm_equivalence_constants,
    observability_constant_boundary,
    observability_constant_distributed,
    resolution_sweep,
    resolve_steps,
    sweep_to_csv,
    time_sweep,
)
from degwave.solver import ControlWindow, StatePair

from conftest import seeded_state


def test_resolve_steps_snaps():
    dt, k = resolve_steps(3.2, 0.00999)
    assert k * dt == pytest.approx(3.2, abs=1e-14)
    assert abs(dt - 0.01) < 1e-3
    with pytest.raises(ConfigError):
        resolve_steps(0.0, 0.1)
    with pytest.raises(ConfigError):
        resolve_steps(1.0, -0.1)


def test_modal_band_grams(op_any):
    band = ModalBand(op_any, 5)
    rng = np.random.default_rng(17)
    c = rng.standard_normal(10)
    state = band.lift(c)
    assert inner_f(op_any, state, state) == pytest.approx(
        float(np.sum(band.gram_f * c * c)), rel=1e-9)
    assert inner_e(op_any, state, state) == pytest.approx(
        float(np.sum(band.gram_e * c * c)), rel=1e-9)


def test_modal_band_restrict_is_adjoint_of_lift(op_weak):
    band = ModalBand(op_weak, 4)
    rng = np.random.default_rng(23)
    c = rng.standard_normal(8)
    func = StatePair(rng.standard_normal(op_weak.n_dof),
                     rng.standard_normal(op_weak.n_dof))
    lhs = pairing(op_weak, func, band.lift(c))
    rhs = float(np.dot(band.restrict_functional(func), c))
    assert lhs == pytest.approx(rhs, rel=1e-11)


def test_distributed_constant_dense_vs_iterative():
    op = build_operator(0.5, n_cells=12)
    T = 3.2
    dt = T / 96
    window = ControlWindow.build(op, 0.4)
    dense = observability_constant_distributed(op, window, T, dt,
                                               Method.DENSE)
    iterative = observability_constant_distributed(op, window, T, dt,
                                                   Method.INVERSE_POWER)
    assert iterative.c_obs == pytest.approx(dense.c_obs, rel=1e-6)
    assert dense.method is Method.DENSE
    assert iterative.iterations > 0


def test_boundary_constant_dense_vs_iterative():
    op = build_operator(1.5, n_cells=10)
    T = 1.5 * minimal_time(1.5)
    dt = T / 240
    dense = observability_constant_boundary(op, T, dt, Method.DENSE)
    iterative = observability_constant_boundary(op, T, dt,
                                                Method.INVERSE_POWER)
    assert iterative.c_obs == pytest.approx(dense.c_obs, rel=1e-6)


def test_filtered_methods_agree():
    op = build_operator(0.5, n_cells=24)
    T = 3.2
    dt = T / 128
    window = ControlWindow.build(op, 0.3)
    dense = observability_constant_distributed(
        op, window, T, dt, Method.DENSE, filter_fraction=0.25)
    iterative = observability_constant_distributed(
        op, window, T, dt, Method.INVERSE_POWER, filter_fraction=0.25)
    assert dense.n_modes == iterative.n_modes
    assert iterative.c_obs == pytest.approx(dense.c_obs, rel=1e-6)


def test_epsilon_sweep_needs_three_samples(op_weak):
    with pytest.raises(ConfigError):
        epsilon_sweep(op_weak, 3.2, 3.2 / 96, [0.4, 0.2])


def test_epsilon_sweep_monotone_with_slope(op_weak):
    T = 3.2
    result = epsilon_sweep(op_weak, T, T / 96, [0.4, 0.3, 0.2, 0.15, 0.1])
    assert result.axis is SweepAxis.EPSILON
    cs = [c for _, c in result.samples]
    assert all(cs[i] > cs[i + 1] for i in range(len(cs) - 1))
    assert result.fitted_slope is not None and result.fitted_slope > 0.0


def test_time_sweep_constant_shrinks_with_horizon(op_weak):
    t_a = minimal_time(0.5)
    result = time_sweep(op_weak, None, op_weak.grid.h / 2.0,
                        [1.1 * t_a, 1.5 * t_a, 2.0 * t_a])
    cs = [c for _, c in result.samples]
    assert cs[0] > cs[-1]
    assert result.ratio_extremes > 1.0


def test_resolution_sweep_below_minimal_time_blows_up():
    t_a = minimal_time(0.5)
    result = resolution_sweep(0.5, [16, 32, 64], 0.5 * t_a)
    cs = [c for _, c in result.samples]
    assert all(cs[i] < cs[i + 1] for i in range(len(cs) - 1))


def test_norm_equivalence_chain(op_weak):
    """||data||^2 <= A_best * form  and  form <= B_best * ||data||^2."""
    op = op_weak
    T = 3.2
    dt = T / 128
    full = ControlWindow.build(op, 1.0)
    for which in ("v", "vt", "trace"):
        a_best, b_best = norm_equivalence_constants(op, T, dt, which)
        assert a_best > 0.0 and b_best > 0.0
        for seed in (31, 32, 33):
            q = seeded_state(op, seed=seed)
            if which == "v":
                form = pairing(op, apply_lambda(op, full, q, T, dt), q)
                data = inner_f(op, q, q)
            elif which == "vt":
                form = pairing(op, apply_lambda_vt(op, q, T, dt), q)
                data = inner_e(op, q, q)
            else:
                form = pairing(op, apply_lambda_boundary(op, q, T, dt)[0], q)
                data = inner_e(op, q, q)
            assert data <= a_best * form * (1.0 + 1e-8)
            assert form <= b_best * data * (1.0 + 1e-8)
    with pytest.raises(ConfigError):
        norm_equivalence_constants(op, T, dt, "bogus")


def test_vt_form_matches_velocity_quadrature(op_weak):
    """The shift-conjugated form equals iint |v_t|^2 of the actual solve."""
    from degwave.solver import solve_forward, spacetime_inner
    op = op_weak
    T, dt = 1.0, 1.0 / 64
    q = seeded_state(op, seed=41)
    form = pairing(op, apply_lambda_vt(op, q, T, dt), q)
    traj = solve_forward(op, q, None, T, dt)
    vel = solve_forward(
        op, StatePair(q.velocity, -op.apply_stiffness(q.position) / op.mass),
        None, T, dt)
    full = ControlWindow.build(op, 1.0)
    direct = spacetime_inner(vel, vel, full.active_weights)
    assert form == pytest.approx(direct, rel=1e-10)
    assert np.allclose(vel.positions, traj.velocities, atol=1e-10)


def test_sweep_csv_format(tmp_path, op_weak):
    result = epsilon_sweep(op_weak, 3.2, 3.2 / 96, [0.4, 0.2, 0.1])
    path = tmp_path / "sweep.csv"
    sweep_to_csv(result, path, header="# alpha=0.5")
    lines = path.read_text().splitlines()
    assert lines[0] == "# alpha=0.5"
    assert lines[1] == "parameter,c_obs,mu_min,iterations"
    assert lines[-1].startswith("# axis=Epsilon fitted_slope=")
    assert len(lines) == 6
