"""Kernel selection: compiled extension if available, NumPy fallback otherwise."""

import os

if os.environ.get("DEGWAVE_FORCE_PYTHON"):
    from . import _kernel_py as _impl
    KERNEL = "python"
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
        KERNEL = "cython"
    except ImportError:
        from . import _kernel_py as _impl
        KERNEL = "python"


def integrate(op, u0, w0, loads, dt, nsteps):
    """Run the trapezoidal stepper for M u'' + A u = b on operator op.

    loads is None or a (nsteps, n) array of midpoint load vectors.
    Returns (U, W): positions and velocities at nodes t_k, k = 0..nsteps.
    """
    import numpy as np

    u0 = np.ascontiguousarray(u0, dtype=float)
    w0 = np.ascontiguousarray(w0, dtype=float)
    if loads is not None:
        loads = np.ascontiguousarray(loads, dtype=float)
    return _impl.integrate(op.stiff_diag, op.stiff_off, op.mass,
                           u0, w0, loads, dt, nsteps)
