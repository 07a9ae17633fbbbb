"""Pure NumPy/SciPy fallback for the trapezoidal stepper.

Same contract as the compiled kernel in _kernel.pyx; used when the
extension is unavailable or DEGWAVE_FORCE_PYTHON is set.  The banded
Cholesky factorization is done once, each step is two O(n) triangular
solves plus vectorized tridiagonal products.
"""

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


def _tridiag_mv(diag, off, v):
    out = diag * v
    out[:-1] += off * v[1:]
    out[1:] += off * v[:-1]
    return out


def integrate(diag, off, mass, u0, w0, loads, dt, nsteps):
    n = diag.shape[0]
    q = dt * dt / 4.0
    ab = np.zeros((2, n))
    ab[0, 1:] = q * off
    ab[1] = mass + q * diag
    factor = cholesky_banded(ab, lower=False)

    U = np.empty((nsteps + 1, n))
    W = np.empty((nsteps + 1, n))
    U[0], W[0] = u0, w0
    for k in range(nsteps):
        y = (mass - q * diag) * W[k] - dt * diag * U[k]
        y[:-1] -= (q * W[k, 1:] + dt * U[k, 1:]) * off
        y[1:] -= (q * W[k, :-1] + dt * U[k, :-1]) * off
        if loads is not None:
            y += dt * loads[k]
        W[k + 1] = cho_solve_banded((factor, False), y)
        U[k + 1] = U[k] + 0.5 * dt * (W[k] + W[k + 1])
    return U, W
