"""Finite-volume discretization of the degenerate operator -(x^a u_x)_x.

The diffusion weight x^a vanishes at x=0.  For a in (0,1) ("weak"
degeneracy) a Dirichlet condition at x=0 is still meaningful; for a in
[1,2) ("strong" degeneracy) only the weighted flux condition
(x^a u_x)(0)=0 makes sense.  Both closures are realized through the face
coefficients of a uniform-grid finite-volume scheme: the weight is only
ever evaluated at cell faces, never at the degenerate node itself.

Conventions used throughout the package:

* ``mass`` is the diagonal of the lumped mass matrix M (cell widths, half
  cells at the interval ends), so ``f @ (M g)`` approximates the L2 inner
  product.
* ``stiffness`` A is energy-scaled: ``f @ (A f)`` approximates the
  weighted Dirichlet energy  int x^a |f_x|^2 dx.  The PDE system reads
  M u'' + A u = load, i.e. the classical 1/h^2 stencil is M^{-1} A.
* the dual H^{-1}_a norm is realized through the Riesz solve A w = M f,
  ||f||^2 = (M f) @ w.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh_tridiagonal

from .errors import (
    AlphaOne,
    DimensionMismatch,
    GridTooCoarse,
    RegimeMismatch,
    SolveFailure,
    ZeroField,
)


class Regime(enum.Enum):
    WEAK = "weak"
    STRONG = "strong"


def regime_for_alpha(alpha: float) -> Regime:
    """Default regime: weak for alpha < 1, strong for alpha in [1,2)."""
    if not 0.0 <= alpha < 2.0:
        raise RegimeMismatch(f"alpha={alpha} outside [0, 2)")
    return Regime.WEAK if alpha < 1.0 else Regime.STRONG


def minimal_time(alpha: float) -> float:
    """Minimal control/observation time 4/(2-alpha)."""
    return 4.0 / (2.0 - alpha)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform node grid on [0,1] with lumped cell weights."""

    n_cells: int
    h: float
    nodes: np.ndarray          # x_i = i*h, i = 0..N
    cell_weights: np.ndarray   # h for interior nodes, h/2 at both ends

    @classmethod
    def build(cls, n_cells: int) -> "SpatialGrid":
        if n_cells < 4:
            raise GridTooCoarse(f"n_cells={n_cells} < 4")
        h = 1.0 / n_cells
        nodes = np.arange(n_cells + 1) * h
        w = np.full(n_cells + 1, h)
        w[0] = w[-1] = h / 2.0
        return cls(n_cells, h, nodes, w)


@dataclass(frozen=True)
class DegenerateOperator:
    """Discretized -(x^a d/dx) d/dx with regime-dependent closure at x=0.

    Active unknowns are nodes 1..N-1 (weak) or 0..N-1 (strong); node N is
    always the Dirichlet/control boundary x=1.  Immutable and shareable.
    """

    alpha: float
    regime: Regime
    grid: SpatialGrid
    x: np.ndarray            # coordinates of active dofs
    mass: np.ndarray         # lumped mass at active dofs
    stiff_diag: np.ndarray   # tridiagonal stiffness, energy-scaled
    stiff_off: np.ndarray    # superdiagonal (length n-1)
    face_right: float        # a_{N-1/2}, used by boundary lifting/trace
    _cho: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_dof(self) -> int:
        return self.x.size

    # -- construction -----------------------------------------------------

    @classmethod
    def build(cls, alpha: float, regime: Regime, n_cells: int) -> "DegenerateOperator":
        if regime is Regime.WEAK:
            # alpha = 0 admitted as the classical (nondegenerate) fixture
            if not 0.0 <= alpha < 1.0:
                raise RegimeMismatch(f"weak regime needs alpha in [0,1), got {alpha}")
        elif regime is Regime.STRONG:
            if not 1.0 <= alpha < 2.0:
                raise RegimeMismatch(f"strong regime needs alpha in [1,2), got {alpha}")
        else:
            raise RegimeMismatch(f"unknown regime {regime!r}")
        grid = SpatialGrid.build(n_cells)
        h, nodes = grid.h, grid.nodes

        # midpoint weight at every interior face (i, i+1), i = 0..N-1
        faces = ((nodes[:-1] + nodes[1:]) / 2.0) ** alpha

        if regime is Regime.WEAK:
            lo = 1
            a_left = faces[:-1]      # a_{i-1/2} for i = 1..N-1
            a_right = faces[1:]      # a_{i+1/2}
        else:
            lo = 0
            # flux closure at x=0: a_{-1/2} = 0
            a_left = np.concatenate(([0.0], faces[:-1]))
            a_right = faces
        x = nodes[lo:-1]
        mass = grid.cell_weights[lo:-1].copy()
        diag = (a_left + a_right) / h
        off = -faces[lo:-1] / h      # couples dof i to dof i+1
        return cls(alpha, regime, grid, x, mass, diag, off, faces[-1])

    # -- basic linear algebra ---------------------------------------------

    def _check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_dof,):
            raise DimensionMismatch(
                f"field of shape {f.shape} does not match {self.n_dof} dofs")
        return f

    def apply_stiffness(self, f: np.ndarray) -> np.ndarray:
        """A f (energy-scaled); M^{-1} A f is the classical stencil."""
        f = self._check(f)
        out = self.stiff_diag * f
        out[:-1] += self.stiff_off * f[1:]
        out[1:] += self.stiff_off * f[:-1]
        return out

    def solve_stiffness(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A w = rhs using a cached banded Cholesky factorization."""
        rhs = self._check(rhs)
        if self._cho is None:
            ab = np.zeros((2, self.n_dof))
            ab[0, 1:] = self.stiff_off
            ab[1] = self.stiff_diag
            try:
                factor = cholesky_banded(ab, lower=False)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise SolveFailure(f"stiffness factorization failed: {exc}")
            object.__setattr__(self, "_cho", (False, factor))
        lower, factor = self._cho
        return cho_solve_banded((factor, lower), rhs)

    # -- inner products and norms -----------------------------------------

    def inner_l2(self, f: np.ndarray, g: np.ndarray) -> float:
        f, g = self._check(f), self._check(g)
        return float(np.dot(self.mass * f, g))

    def norm_l2(self, f: np.ndarray) -> float:
        return np.sqrt(max(self.inner_l2(f, f), 0.0))

    def h1a_form(self, f: np.ndarray, g: np.ndarray = None) -> float:
        """Weighted Dirichlet energy  f^T A g  ~ int x^a f_x g_x dx."""
        g = f if g is None else g
        return float(np.dot(self._check(f), self.apply_stiffness(g)))

    def norm_h1a(self, f: np.ndarray) -> float:
        return np.sqrt(max(self.inner_l2(f, f) + self.h1a_form(f), 0.0))

    def norm_hneg1(self, f: np.ndarray) -> float:
        """Dual norm via the Riesz solve A w = M f, ||f||^2 = (M f) @ w."""
        f = self._check(f)
        mf = self.mass * f
        w = self.solve_stiffness(mf)
        return np.sqrt(max(float(np.dot(w, mf)), 0.0))

    def hardy_quotient(self, f: np.ndarray) -> float:
        """[sum m_i x_i^{a-2} f_i^2] / [f^T A f]; continuum bound 4/(1-a)^2.

        The singular node x=0 (strong regime only) is evaluated at the
        half-cell midpoint h/2, consistent with the finite-volume scheme.
        """
        if self.alpha == 1.0:
            raise AlphaOne("Hardy-Poincare quotient excludes alpha = 1")
        f = self._check(f)
        denom = self.h1a_form(f)
        if denom == 0.0:
            raise ZeroField("Hardy quotient of a zero-energy field")
        xs = np.maximum(self.x, self.grid.h / 2.0)
        num = float(np.dot(self.mass * xs ** (self.alpha - 2.0), f ** 2))
        return num / denom

    # -- spectral helpers --------------------------------------------------

    def eigenpairs(self, k: int = 1):
        """First k generalized eigenpairs of A w = lam M w (dense, small k).

        Used as test oracle and to build eigenmode initial data; the
        symmetrized problem is tridiagonal so eigh_tridiagonal applies.
        """
        s = 1.0 / np.sqrt(self.mass)
        d = self.stiff_diag * s * s
        e = self.stiff_off * s[:-1] * s[1:]
        vals, vecs = eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
        return vals, vecs * s[:, None]


def build_operator(alpha: float, regime: Regime = None,
                   n_cells: int = 100) -> DegenerateOperator:
    """Convenience constructor; regime defaults to the one fitting alpha."""
    if regime is None:
        regime = regime_for_alpha(alpha)
    return DegenerateOperator.build(alpha, regime, n_cells)
