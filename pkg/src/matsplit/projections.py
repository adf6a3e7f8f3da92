"""Projections onto matrix product constraints.

Three families are implemented:

* symmetric factors, ``X X^T = C`` (Gram constraint),
* orthogonal factors, ``X Y = 0``,
* outer full rank factors, ``X Y = C`` with ``C`` square and full rank,

plus the scalar specialization ``x y = c`` for complex numbers.  The outer
full rank projection is iterative: a quasiprojection restores the constraint
exactly and a tangent-space projection (one Sylvester solve) improves the
distance to the anchor; ``T`` refinement cycles interleave the two.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import matcore
from .errors import InvalidInput, DegeneratePair, ProjectionFailed

_TINY = 1e-300


# ---------------------------------------------------------------------------
# symmetric factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GramConstraint:
    """Holds a rank-revealing factor ``A`` (m x r) with ``A @ A.T = C``."""

    A: np.ndarray

    @classmethod
    def from_matrix(cls, c, rank_tol=matcore.RANK_TOL):
        return cls(A=matcore.cholesky_psd(c, rank_tol))

    @property
    def r(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]


def proj_gram(gc, x0):
    """Nearest ``X`` with ``X X^T = A A^T`` to the anchor ``x0``.

    Computed as ``A @ unitarize(A.T @ x0)``.  Raises ``DegenerateInput`` when
    ``A.T @ x0`` carries no direction information (measure-zero anchors);
    the caller perturbs and retries.
    """
    x0 = matcore.as_matrix(x0, "x0")
    if x0.shape[0] != gc.m:
        raise InvalidInput(f"anchor has {x0.shape[0]} rows, constraint expects {gc.m}")
    if x0.shape[1] < gc.r:
        raise InvalidInput(f"anchor width {x0.shape[1]} is below the constraint rank {gc.r}")
    return gc.A @ matcore.unitarize(gc.A.T @ x0)


# ---------------------------------------------------------------------------
# orthogonal factors
# ---------------------------------------------------------------------------

def proj_orthogonal(x0, y0):
    """Project ``(x0, y0)`` onto the set of pairs with ``X Y = 0``.

    The optimal split of inner-dimension space is read off the spectrum of
    ``Y0 Y0^T - X0^T X0``: the rows of ``X`` keep the negative eigenspace,
    the columns of ``Y`` the positive one, and zero modes (distance ties)
    are dropped from both.
    """
    x0 = matcore.as_matrix(x0, "x0")
    y0 = matcore.as_matrix(y0, "y0")
    if x0.shape[1] != y0.shape[0]:
        raise InvalidInput(f"inner dimensions disagree: {x0.shape} vs {y0.shape}")
    s = y0 @ y0.T - x0.T @ x0
    pn, pp = matcore.eig_projectors(s)
    return x0 @ pn, pp @ y0


# ---------------------------------------------------------------------------
# outer full rank factors
# ---------------------------------------------------------------------------

class FactorPair(NamedTuple):
    X: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True)
class FullRankConstraint:
    """Product constraint ``X Y = C`` with square full-rank ``C`` (r x r).

    ``k`` is the inner factor dimension (k >= r) and ``T`` the number of
    tangent-space refinement cycles used by :func:`proj_product_fullrank`.
    """

    C: np.ndarray
    k: int
    T: int = 10
    norm_C: float = field(init=False, repr=False)

    def __post_init__(self):
        c = matcore.as_matrix(self.C, "C")
        if c.shape[0] != c.shape[1]:
            raise InvalidInput(f"C must be square, got {c.shape}")
        if matcore.numerical_rank(c) != c.shape[0]:
            raise InvalidInput("C must have full numerical rank")
        if self.k < c.shape[0]:
            raise InvalidInput(f"inner dimension k={self.k} below rank {c.shape[0]}")
        if self.T < 0:
            raise InvalidInput("refinement count T must be >= 0")
        object.__setattr__(self, "C", c)
        object.__setattr__(self, "norm_C", float(np.linalg.norm(c)))

    @property
    def r(self):
        return self.C.shape[0]


def _fix_x_option(c, norm_c, x1, y0):
    """Keep ``x1``, restore the product with the minimum-norm update of ``y0``."""
    rhs = c - x1 @ y0
    dy = None
    try:
        g = scipy.linalg.cho_factor(x1 @ x1.T, check_finite=False)
        dy = x1.T @ scipy.linalg.cho_solve(g, rhs, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    for attempt in range(2):
        if dy is not None and np.all(np.isfinite(dy)):
            y2 = y0 + dy
            if np.linalg.norm(x1 @ y2 - c) <= 1e-9 * max(norm_c, _TINY):
                return y2, float(np.sum(dy * dy))
        if attempt == 0:
            dy = np.linalg.lstsq(x1, rhs, rcond=matcore.RANK_TOL)[0]
    return None, np.inf


def quasiproject(fc, anchor, current):
    """Map ``current`` onto ``X Y = C``, minimizing the distance to ``anchor``.

    Tries fixing ``X`` (solve for ``Y``) and fixing ``Y`` (solve for ``X``),
    returning whichever lands closer to the anchor; near-ties go to the
    fix-X option for determinism.  ``DegeneratePair`` signals that neither
    factor of ``current`` could restore the product.
    """
    x0, y0 = anchor
    x1, y1 = current
    y2, dist_x = _fix_x_option(fc.C, fc.norm_C, x1, y0)
    if y2 is not None:
        dist_x += float(np.sum((x1 - x0) ** 2))
    x2t, dist_y = _fix_x_option(fc.C.T, fc.norm_C, y1.T, x0.T)
    if x2t is not None:
        dist_y += float(np.sum((y1 - y0) ** 2))
    if y2 is None and x2t is None:
        raise DegeneratePair("both quasiprojection options failed to restore the product")
    if x2t is None or (y2 is not None and dist_x <= dist_y + 1e-12):
        return FactorPair(x1.copy(), y2)
    return FactorPair(x2t.T, y1.copy())


def tangent_project(anchor, feasible):
    """Project the anchor onto the tangent space of ``X Y = C`` at ``feasible``.

    The Lagrange multiplier solves the Sylvester equation
    ``(X1 X1^T) F + F (Y1^T Y1) = (X0 - X1) Y1 + X1 (Y0 - Y1)``
    and the projection is ``(X0 - F Y1^T, Y0 - X1^T F)``.
    """
    x0, y0 = anchor
    x1, y1 = feasible
    rhs = (x0 - x1) @ y1 + x1 @ (y0 - y1)
    f = matcore.sylvester_spd(x1 @ x1.T, y1.T @ y1, rhs)
    return FactorPair(x0 - f @ y1.T, y0 - x1.T @ f)


def _quasi_with_retry(fc, anchor, current):
    try:
        return quasiproject(fc, anchor, current)
    except DegeneratePair:
        eps = 1e-8 * (1.0 + fc.norm_C)
        x1 = current.X + eps * np.eye(fc.r, fc.k)
        try:
            return quasiproject(fc, anchor, FactorPair(x1, current.Y))
        except DegeneratePair as exc:
            raise ProjectionFailed("quasiprojection degenerate even after perturbation") from exc


def proj_product_fullrank(fc, anchor):
    """Approximate projection of ``anchor`` onto ``X Y = C``.

    Runs ``T + 1`` quasiprojections interleaved with ``T`` tangent-space
    refinements.  The output satisfies the product constraint to 1e-9
    relative tolerance for any ``T``; larger ``T`` improves distance
    minimization.  The 1 x 1 case delegates to the scalar formulas.
    """
    x0 = matcore.as_matrix(anchor[0], "X0")
    y0 = matcore.as_matrix(anchor[1], "Y0")
    if x0.shape != (fc.r, fc.k) or y0.shape != (fc.k, fc.r):
        raise InvalidInput(f"anchor shapes {x0.shape}, {y0.shape} do not match ({fc.r}, {fc.k})")
    if fc.r == 1 and fc.k == 1:
        x, y = scalar_product_project(
            np.asarray([complex(fc.C[0, 0])]),
            np.asarray([complex(x0[0, 0])]),
            np.asarray([complex(y0[0, 0])]),
            fc.T,
        )
        return FactorPair(np.array([[x[0].real]]), np.array([[y[0].real]]))
    anchor = FactorPair(x0, y0)
    cur = _quasi_with_retry(fc, anchor, anchor)
    for _ in range(fc.T):
        cur = _quasi_with_retry(fc, anchor, tangent_project(anchor, cur))
    return cur


# ---------------------------------------------------------------------------
# scalar product constraint (complex), vectorized over independent pairs
# ---------------------------------------------------------------------------

def _abs2(z):
    return z.real * z.real + z.imag * z.imag


def _scalar_quasi(c, x0, y0, x1, y1):
    with np.errstate(divide="ignore", invalid="ignore"):
        y_fx = np.where(x1 != 0, c / x1, y0)
        x_fy = np.where(y1 != 0, c / y1, x0)
    tol = 1e-9 * (np.abs(c) + _TINY)
    ok_x = np.isfinite(y_fx) & (np.abs(x1 * y_fx - c) <= tol)
    ok_y = np.isfinite(x_fy) & (np.abs(y1 * x_fy - c) <= tol)
    if not np.all(ok_x | ok_y):
        # measure-zero anchor (both factors unusable): deterministic nudge
        bad = ~ok_x & ~ok_y
        eps = 1e-8 * (1.0 + np.abs(c))
        x1 = np.where(bad, x1 + eps, x1)
        with np.errstate(divide="ignore", invalid="ignore"):
            y_fx = np.where(x1 != 0, c / x1, y0)
        ok_x = np.isfinite(y_fx) & (np.abs(x1 * y_fx - c) <= tol)
        if not np.all(ok_x | ok_y):
            raise ProjectionFailed("scalar quasiprojection degenerate after perturbation")
    d_x = np.where(ok_x, _abs2(x1 - x0) + _abs2(y_fx - y0), np.inf)
    d_y = np.where(ok_y, _abs2(x_fy - x0) + _abs2(y1 - y0), np.inf)
    take_y = d_y < d_x - 1e-12
    return np.where(take_y, x_fy, x1), np.where(take_y, y1, y_fx)


def _scalar_tangent(x0, y0, x1, y1):
    denom = _abs2(x1) + _abs2(y1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = ((x0 - x1) * y1 + (y0 - y1) * x1) / denom
    f = np.where(denom > 0, f, 0.0)
    return x0 - f * np.conj(y1), y0 - f * np.conj(x1)


def scalar_product_project(c, x0, y0, T):
    """Vectorized projection of anchor pairs onto ``x y = c`` (componentwise).

    All arguments are complex arrays of a common shape; real problems are
    handled by zero imaginary parts, which the arithmetic preserves exactly.
    """
    c = np.asarray(c, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    y0 = np.asarray(y0, dtype=np.complex128)
    x1, y1 = _scalar_quasi(c, x0, y0, x0, y0)
    for _ in range(T):
        x2, y2 = _scalar_tangent(x0, y0, x1, y1)
        x1, y1 = _scalar_quasi(c, x0, y0, x2, y2)
    return x1, y1


def proj_scalar_product(c, anchor, T):
    """Scalar form of the product projection for a single complex pair."""
    x, y = scalar_product_project(
        np.asarray([complex(c)]), np.asarray([complex(anchor[0])]),
        np.asarray([complex(anchor[1])]), T)
    return complex(x[0]), complex(y[0])
