# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trapezoidal time-stepper for M u'' + A u = b(t).

A is symmetric tridiagonal (diag/off), M diagonal.  One step:

    (M + dt^2/4 A) w_{k+1} = (M - dt^2/4 A) w_k - dt A u_k + dt b_{k+1/2}
    u_{k+1} = u_k + dt/2 (w_k + w_{k+1})

The SPD tridiagonal system is factorized once (LDL^T) and each step is a
forward/back substitution, so the whole trajectory loop runs in C.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def integrate(double[::1] diag, double[::1] off, double[::1] mass,
              double[::1] u0, double[::1] w0, loads, double dt, int nsteps):
    """Integrate nsteps of the trapezoidal scheme.

    loads: (nsteps, n) midpoint load vectors, or None for the homogeneous
    problem.  Returns (U, W) of shape (nsteps+1, n).
    """
    cdef int n = diag.shape[0]
    cdef cnp.ndarray[double, ndim=2] U = np.empty((nsteps + 1, n))
    cdef cnp.ndarray[double, ndim=2] W = np.empty((nsteps + 1, n))
    cdef double[:, ::1] Uv = U, Wv = W
    cdef double[:, ::1] B
    cdef bint has_load = loads is not None
    if has_load:
        B = loads

    cdef double q = dt * dt / 4.0
    # LDL^T factors of S = M + q A
    cdef cnp.ndarray[double, ndim=1] d_ = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] l_ = np.empty(n - 1 if n > 1 else 0)
    cdef double[::1] d = d_, l = l_
    cdef cnp.ndarray[double, ndim=1] y_ = np.empty(n)
    cdef double[::1] y = y_
    cdef int i, k
    cdef double s_off, prev

    d[0] = mass[0] + q * diag[0]
    for i in range(n - 1):
        s_off = q * off[i]
        l[i] = s_off / d[i]
        d[i + 1] = mass[i + 1] + q * diag[i + 1] - l[i] * s_off

    for i in range(n):
        Uv[0, i] = u0[i]
        Wv[0, i] = w0[i]

    for k in range(nsteps):
        # rhs y = (M - q A) w_k - dt A u_k (+ dt b)
        for i in range(n):
            y[i] = (mass[i] - q * diag[i]) * Wv[k, i] - dt * diag[i] * Uv[k, i]
        for i in range(n - 1):
            y[i] += -q * off[i] * Wv[k, i + 1] - dt * off[i] * Uv[k, i + 1]
            y[i + 1] += -q * off[i] * Wv[k, i] - dt * off[i] * Uv[k, i]
        if has_load:
            for i in range(n):
                y[i] += dt * B[k, i]
        # forward substitution L z = y (in place)
        for i in range(1, n):
            y[i] -= l[i - 1] * y[i - 1]
        # diagonal + back substitution
        prev = y[n - 1] / d[n - 1]
        Wv[k + 1, n - 1] = prev
        for i in range(n - 2, -1, -1):
            prev = y[i] / d[i] - l[i] * prev
            Wv[k + 1, i] = prev
        for i in range(n):
            Uv[k + 1, i] = Uv[k, i] + 0.5 * dt * (Wv[k, i] + Wv[k + 1, i])

    return U, W
