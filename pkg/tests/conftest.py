"""Shared fixtures: small operators and seeded fields for fast tests."""

import numpy as np
import pytest

from degwave.discretization import build_operator
from degwave.solver import StatePair


@pytest.fixture(scope="session")
def op_weak():
    return build_operator(0.5, n_cells=24)


@pytest.fixture(scope="session")
def op_strong():
    return build_operator(1.5, n_cells=24)


@pytest.fixture(params=["weak", "strong"])
def op_any(request, op_weak, op_strong):
    return op_weak if request.param == "weak" else op_strong


def seeded_state(op, seed=123):
    rng = np.random.default_rng(seed)
    return StatePair(rng.standard_normal(op.n_dof),
                     rng.standard_normal(op.n_dof))


def smooth_state(op):
    x = op.x
    shape = x * (1.0 - x) if op.n_dof < op.grid.n_cells else (1.0 - x)
    return StatePair(shape * np.sin(2.0 * x), shape * (1.0 + x))
