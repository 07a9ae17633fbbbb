"""Grid, operator closure, norms and spectral helpers."""

import numpy as np
import pytest

from degwave.discretization import (
    DegenerateOperator,
    Regime,
    SpatialGrid,
    build_operator,
    minimal_time,
    regime_for_alpha,
)
from degwave.errors import (
    AlphaOne,
    DimensionMismatch,
    GridTooCoarse,
    RegimeMismatch,
    ZeroField,
)

from conftest import seeded_state  # noqa: F401  (import check only)


def test_grid_weights_sum_to_one():
    g = SpatialGrid.build(17)
    assert g.cell_weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 1.0


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        SpatialGrid.build(3)


def test_minimal_time_values():
    assert minimal_time(0.0) == pytest.approx(2.0)
    assert minimal_time(1.0) == pytest.approx(4.0)
    assert minimal_time(1.5) == pytest.approx(8.0)


def test_regime_resolution():
    assert regime_for_alpha(0.5) is Regime.WEAK
    assert regime_for_alpha(1.0) is Regime.STRONG
    with pytest.raises(RegimeMismatch):
        regime_for_alpha(2.0)
    with pytest.raises(RegimeMismatch):
        regime_for_alpha(-0.1)


def test_regime_alpha_compatibility():
    with pytest.raises(RegimeMismatch):
        DegenerateOperator.build(1.5, Regime.WEAK, 16)
    with pytest.raises(RegimeMismatch):
        DegenerateOperator.build(0.5, Regime.STRONG, 16)


def test_dof_counts(op_weak, op_strong):
    # weak: Dirichlet at both ends; strong: flux closure keeps node 0
    assert op_weak.n_dof == op_weak.grid.n_cells - 1
    assert op_strong.n_dof == op_strong.grid.n_cells
    assert op_strong.x[0] == 0.0 and op_weak.x[0] > 0.0


def test_stiffness_symmetry_and_positivity(op_any):
    n = op_any.n_dof
    a = np.array([op_any.apply_stiffness(e) for e in np.eye(n)])
    assert np.allclose(a, a.T, atol=1e-14)
    vals = np.linalg.eigvalsh(a)
    assert vals[0] > 0.0


def test_classical_limit_eigenvalue():
    # alpha = 0 is the ordinary Laplacian: lam_1 = pi^2 with Dirichlet ends
    op = build_operator(0.0, n_cells=200)
    vals, vecs = op.eigenpairs(1)
    assert vals[0] == pytest.approx(np.pi ** 2, rel=1e-3)


def test_eigenpairs_mass_orthonormal(op_any):
    vals, vecs = op_any.eigenpairs(4)
    gram = vecs.T @ (op_any.mass[:, None] * vecs)
    assert np.allclose(gram, np.eye(4), atol=1e-10)
    assert np.all(np.diff(vals) > 0.0)
    # residual of the generalized eigenproblem
    for j in range(4):
        r = op_any.apply_stiffness(vecs[:, j]) - vals[j] * op_any.mass * vecs[:, j]
        assert np.linalg.norm(r) <= 1e-9 * vals[j]


def test_solve_stiffness_roundtrip(op_any):
    rng = np.random.default_rng(5)
    f = rng.standard_normal(op_any.n_dof)
    w = op_any.solve_stiffness(f)
    assert np.allclose(op_any.apply_stiffness(w), f, atol=1e-11)


def test_norm_duality_cauchy_schwarz(op_any):
    rng = np.random.default_rng(7)
    f = rng.standard_normal(op_any.n_dof)
    g = rng.standard_normal(op_any.n_dof)
    # |<f, g>_L2| <= ||f||_{H-1} * ||g||_{H1-seminorm side}
    lhs = abs(op_any.inner_l2(f, g))
    rhs = op_any.norm_hneg1(f) * np.sqrt(op_any.h1a_form(g))
    assert lhs <= rhs * (1.0 + 1e-12)


def test_hneg1_of_eigenmode(op_any):
    vals, vecs = op_any.eigenpairs(1)
    # A w = lam M w  =>  ||w||_{H-1} = ||w||_{L2} / sqrt(lam) exactly
    w = vecs[:, 0]
    assert op_any.norm_hneg1(w) == pytest.approx(
        op_any.norm_l2(w) / np.sqrt(vals[0]), rel=1e-11)


def test_hardy_quotient_alpha_one_excluded():
    op = build_operator(1.0, n_cells=16)
    with pytest.raises(AlphaOne):
        op.hardy_quotient(np.ones(op.n_dof))


def test_hardy_quotient_zero_field(op_weak):
    with pytest.raises(ZeroField):
        op_weak.hardy_quotient(np.zeros(op_weak.n_dof))


def test_dimension_mismatch(op_weak):
    with pytest.raises(DimensionMismatch):
        op_weak.apply_stiffness(np.ones(op_weak.n_dof + 1))


def test_build_operator_defaults():
    op = build_operator(1.2)
    assert op.regime is Regime.STRONG
    assert op.grid.n_cells == 100
