"""Compound projection constructions for general factor shapes.

Three constructions reduce a structured factorization ``X Y = C`` to a pair
of projections:

* rank-limited (factor ranks equal ``rank(C)``): four matrices ``W, X, Z, Y``
  tied by ``X = U W``, ``Y = Z V`` and ``W Z = D`` from a rescaled SVD of
  ``C``; a hybrid variant folds half of the SVD into the product constant
  when one outer dimension already equals the rank;
* rank-excessive: ten matrices including replicas, with an orthogonality
  block absorbing the extra rank;
* rank-1: ``k`` summands constrained to rank one and, elementwise across
  summands, to nonnegative (or integer) tuples with fixed sums.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import matcore
from .errors import InvalidInput, Unsupported, NotRankOne
from .projections import FactorPair, FullRankConstraint, proj_orthogonal, proj_product_fullrank

STRUCTURE_KINDS = ("nonnegative", "pm_one", "integer", "none")
SETUP_MODES = ("full", "half_left", "half_right")


@dataclass(frozen=True)
class StructureSpec:
    """Element-wise structure required of each factor."""

    kind: str = "none"

    def __post_init__(self):
        if self.kind not in STRUCTURE_KINDS:
            raise InvalidInput(f"unknown structure kind {self.kind!r}")


def project_structure(a, kind):
    """Element-wise projection onto a structure constraint."""
    if kind == "none":
        return a
    if kind == "nonnegative":
        return np.maximum(a, 0.0)
    if kind == "pm_one":
        # ties at exactly zero round up
        return np.where(a >= 0.0, 1.0, -1.0)
    if kind == "integer":
        return np.rint(a)
    raise InvalidInput(f"unknown structure kind {kind!r}")


# ---------------------------------------------------------------------------
# rescaled SVD setup
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScaledSvdSetup:
    """Rescaled thin SVD of the constraint matrix.

    In ``full`` mode ``U @ D @ V`` reconstructs ``C`` with ``U.T @ U = g^2 I``
    and ``V @ V.T = h^2 I``.  The half modes keep only one rescaled side and
    fold the rest into the square product constant ``K`` (``U @ K = C`` for
    ``half_left``, ``K @ V = C`` for ``half_right``).
    """

    mode: str
    g: float
    h: float
    r: int
    m: int
    n: int
    U: Optional[np.ndarray]
    V: Optional[np.ndarray]
    D: Optional[np.ndarray]
    K: Optional[np.ndarray]

    def reconstruct(self):
        if self.mode == "full":
            return self.U @ self.D @ self.V
        if self.mode == "half_left":
            return self.U @ self.K
        return self.K @ self.V

    def product_constant(self):
        """Constraint matrix of the inner product projection."""
        return self.D if self.mode == "full" else self.K


def setup_scaled_svd(c, g, h, mode="full"):
    """Build the rescaled SVD setup ``U -> g U``, ``V -> h V``, ``D -> D/(g h)``.

    ``half_left`` requires ``n == rank(C)`` and folds ``D V`` into the product
    constant; ``half_right`` requires ``m == rank(C)`` and folds ``U D``.
    """
    if mode not in SETUP_MODES:
        raise InvalidInput(f"unknown setup mode {mode!r}")
    if g <= 0 or h <= 0:
        raise InvalidInput("metric parameters g and h must be positive")
    c = matcore.as_matrix(c, "C")
    res = matcore.svd(c)
    if res.rank == 0:
        raise InvalidInput("constraint matrix is numerically zero")
    m, n = c.shape
    r = res.rank
    if mode == "full":
        return ScaledSvdSetup(mode=mode, g=g, h=h, r=r, m=m, n=n,
                              U=g * res.U, V=h * res.V,
                              D=np.diag(res.S / (g * h)), K=None)
    if mode == "half_left":
        if n != r:
            raise InvalidInput(f"half_left needs n == rank, got n={n}, rank={r}")
        return ScaledSvdSetup(mode=mode, g=g, h=h, r=r, m=m, n=n,
                              U=g * res.U, V=None, D=None,
                              K=(res.S[:, None] * res.V) / g)
    if m != r:
        raise InvalidInput(f"half_right needs m == rank, got m={m}, rank={r}")
    return ScaledSvdSetup(mode=mode, g=g, h=h, r=r, m=m, n=n,
                          U=None, V=h * res.V, D=None,
                          K=(res.U * res.S[None, :]) / h)


def product_constraint_for(setup, k, T=10):
    """The inner full-rank product constraint implied by a setup."""
    return FullRankConstraint(setup.product_constant(), k=k, T=T)


# ---------------------------------------------------------------------------
# rank-limited construction (incl. hybrid half-SVD variant)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RankLimitedState:
    """State ``(W, X; Z, Y)``; ``Z`` is absent in half_left mode, ``W`` in half_right."""

    W: Optional[np.ndarray]
    X: np.ndarray
    Z: Optional[np.ndarray]
    Y: np.ndarray


def p1_rank_limited(s, setup, struct, product_constraint=None):
    """Product projection on the inner pair plus structure on the factors."""
    if setup.mode == "full":
        fc = product_constraint or product_constraint_for(setup, s.W.shape[1])
        w, z = proj_product_fullrank(fc, FactorPair(s.W, s.Z))
        return RankLimitedState(W=w, X=project_structure(s.X, struct.kind),
                                Z=z, Y=project_structure(s.Y, struct.kind))
    if setup.mode == "half_left":
        fc = product_constraint or product_constraint_for(setup, s.W.shape[1])
        w, y = proj_product_fullrank(fc, FactorPair(s.W, s.Y))
        return RankLimitedState(W=w, X=project_structure(s.X, struct.kind), Z=None, Y=y)
    fc = product_constraint or product_constraint_for(setup, s.X.shape[1])
    x, z = proj_product_fullrank(fc, FactorPair(s.X, s.Z))
    return RankLimitedState(W=None, X=x, Z=z, Y=project_structure(s.Y, struct.kind))


def proj_linear_left(setup, w0, x0):
    """Project ``(W, X)`` onto ``X = U W``; closed form from the quadratic."""
    w1 = (w0 + setup.U.T @ x0) / (setup.g ** 2 + 1.0)
    return w1, setup.U @ w1


def proj_linear_right(setup, z0, y0):
    """Project ``(Z, Y)`` onto ``Y = Z V``."""
    z1 = (z0 + y0 @ setup.V.T) / (setup.h ** 2 + 1.0)
    return z1, z1 @ setup.V


def p2_rank_limited(s, setup, struct=None):
    """Linear-compatibility projections; half modes add structure on the free factor."""
    if setup.mode == "full":
        w, x = proj_linear_left(setup, s.W, s.X)
        z, y = proj_linear_right(setup, s.Z, s.Y)
        return RankLimitedState(W=w, X=x, Z=z, Y=y)
    if struct is None:
        raise InvalidInput("half modes need a structure spec in the second projection")
    if setup.mode == "half_left":
        w, x = proj_linear_left(setup, s.W, s.X)
        return RankLimitedState(W=w, X=x, Z=None, Y=project_structure(s.Y, struct.kind))
    z, y = proj_linear_right(setup, s.Z, s.Y)
    return RankLimitedState(W=None, X=project_structure(s.X, struct.kind), Z=z, Y=y)


# ---------------------------------------------------------------------------
# rank-excessive construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RankExcessiveState:
    """Ten matrices: ``t`` suffix marks the replica of the same-named variable."""

    W: np.ndarray
    Xc: np.ndarray
    Xct: np.ndarray
    Xp: np.ndarray
    Xpt: np.ndarray
    Z: np.ndarray
    Yc: np.ndarray
    Yct: np.ndarray
    Yp: np.ndarray
    Ypt: np.ndarray


def _nonneg_four_arrays(x_c, x_ct, x_p, x_pt):
    bar_c = 0.5 * (x_c + x_ct)
    bar_p = 0.5 * (x_p + x_pt)
    feasible = bar_c + bar_p >= 0.0
    dx = 0.5 * (bar_c - bar_p)
    out_c = np.where(feasible, bar_c, dx)
    out_p = np.where(feasible, bar_p, -dx)
    return out_c, out_p


def nonneg_four(x_c, x_ct, x_p, x_pt):
    """Project four scalars onto equal replicas with nonnegative part-sum.

    Replicas are first averaged; if the two part means already sum to a
    nonnegative value they are returned, otherwise both parts are shifted by
    the same amount to make the sum exactly zero.
    """
    out_c, out_p = _nonneg_four_arrays(np.float64(x_c), np.float64(x_ct),
                                       np.float64(x_p), np.float64(x_pt))
    return float(out_c), float(out_c), float(out_p), float(out_p)


def p1_rank_excessive(s, setup, struct, product_constraint=None):
    """Inner product projection plus the replica/part structure projection."""
    if setup.mode != "full":
        raise InvalidInput("rank-excessive construction requires a full-mode setup")
    if struct.kind != "nonnegative":
        raise Unsupported(f"rank-excessive structure projection only supports "
                          f"nonnegative factors, got {struct.kind!r}")
    fc = product_constraint or product_constraint_for(setup, s.W.shape[1])
    w, z = proj_product_fullrank(fc, FactorPair(s.W, s.Z))
    xc, xp = _nonneg_four_arrays(s.Xc, s.Xct, s.Xp, s.Xpt)
    yc, yp = _nonneg_four_arrays(s.Yc, s.Yct, s.Yp, s.Ypt)
    return RankExcessiveState(W=w, Xc=xc, Xct=xc.copy(), Xp=xp, Xpt=xp.copy(),
                              Z=z, Yc=yc, Yct=yc.copy(), Yp=yp, Ypt=yp.copy())


def p2_rank_excessive(s, setup):
    """Linear-compatibility projections plus the orthogonality block.

    The replicas and perpendicular parts are concatenated into an m x 3k by
    3k x n pair whose product must vanish, which is exactly the orthogonal
    factor projection.
    """
    if setup.mode != "full":
        raise InvalidInput("rank-excessive construction requires a full-mode setup")
    k = s.W.shape[1]
    w, xc = proj_linear_left(setup, s.W, s.Xc)
    z, yc = proj_linear_right(setup, s.Z, s.Yc)
    x3 = np.hstack([s.Xct, s.Xp, s.Xpt])
    y3 = np.vstack([s.Yp, s.Yct, s.Ypt])
    x3, y3 = proj_orthogonal(x3, y3)
    return RankExcessiveState(
        W=w, Xc=xc, Xct=x3[:, :k], Xp=x3[:, k:2 * k], Xpt=x3[:, 2 * k:],
        Z=z, Yc=yc, Yp=y3[:k, :], Yct=y3[k:2 * k, :], Ypt=y3[2 * k:, :])


# ---------------------------------------------------------------------------
# rank-1 decomposition
# ---------------------------------------------------------------------------

def rank1_project(z):
    """Closest rank-1 matrix in Frobenius norm (zero maps to zero)."""
    z = matcore.as_matrix(z, "Z")
    res = matcore.svd(z)
    if res.rank == 0:
        return np.zeros_like(z)
    return res.S[0] * np.outer(res.U[:, 0], res.V[0])


def rank1_project_stack(z):
    """Batched :func:`rank1_project` over a (k, m, n) stack."""
    u, s, vh = np.linalg.svd(z, full_matrices=False)
    return s[:, 0, None, None] * (u[:, :, 0, None] @ vh[:, None, 0, :])


def _simplex_batch(z, c):
    """Row-wise Euclidean projection onto ``{v >= 0, sum(v) = c}``.

    Implements the recursive shift-and-drop algorithm: sort descending once,
    then repeatedly shift the active prefix to the target sum and drop the
    entries that become nonpositive.
    """
    z = np.asarray(z, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    nrows, k = z.shape
    order = np.argsort(-z, axis=1, kind="stable")
    u = np.take_along_axis(z, order, axis=1)
    csum = np.cumsum(u, axis=1)
    rho = np.full(nrows, k, dtype=np.int64)
    shift = np.zeros(nrows)
    active = np.ones(nrows, dtype=bool)
    rows = np.arange(nrows)
    for _ in range(k):
        if not np.any(active):
            break
        s = (c[active] - csum[active, rho[active] - 1]) / rho[active]
        shift[active] = s
        cnt = np.minimum((u[active] > -s[:, None]).sum(axis=1), rho[active])
        done = cnt == rho[active]
        rho[rows[active]] = np.where(cnt == 0, 0, cnt)
        nxt = active.copy()
        nxt[rows[active][done | (cnt == 0)]] = False
        active = nxt
    cols = np.arange(k)[None, :]
    out_sorted = np.where(cols < rho[:, None], u + shift[:, None], 0.0)
    out_sorted[rho == 0] = 0.0
    out = np.empty_like(z)
    np.put_along_axis(out, order, out_sorted, axis=1)
    return out


def _lattice_batch(z, c):
    """Row-wise nearest nonnegative integer vector with sum ``c``.

    Projects onto the simplex first, then rounds down and hands the remaining
    units to the coordinates with the largest fractional parts; among equal
    fractions the lower index receives the larger value.
    """
    w = _simplex_batch(z, c)
    base = np.floor(w)
    frac = w - base
    t = np.clip(np.rint(np.asarray(c, dtype=np.float64) - base.sum(axis=1)).astype(np.int64),
                0, z.shape[1])
    order = np.argsort(-frac, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(z.shape[1]), z.shape).copy(), axis=1)
    return base + (rank < t[:, None])


def simplex_project(z, c):
    """Euclidean projection of a vector onto ``{v >= 0, sum(v) = c}``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidInput("simplex_project expects a nonempty 1-D vector")
    if c < 0:
        raise InvalidInput("target sum must be nonnegative")
    return _simplex_batch(z[None, :], np.asarray([c]))[0]


def lattice_project(z, c):
    """Nearest nonnegative integer vector with sum ``c``, via the shifted A lattice.

    Composition of the simplex projection with integer rounding repaired to
    the target sum.  ``c`` must be a nonnegative integer.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise InvalidInput("lattice_project expects a nonempty 1-D vector")
    if c < 0 or c != int(c):
        raise InvalidInput("target sum must be a nonnegative integer")
    return _lattice_batch(z[None, :], np.asarray([float(c)]))[0].astype(np.int64)


def p1_rank1(summands):
    """Project each summand of a (k, m, n) stack to its nearest rank-1 matrix."""
    return rank1_project_stack(np.asarray(summands, dtype=np.float64))


def p2_rank1(summands, c, struct):
    """Structure-plus-sum projection applied tuple-wise across summands.

    For every matrix element ``(i, j)`` the k-tuple of summand entries is
    projected onto nonnegative (or nonnegative integer) tuples summing to
    ``C[i, j]``.
    """
    z = np.asarray(summands, dtype=np.float64)
    k = z.shape[0]
    c = matcore.as_matrix(c, "C")
    if struct.kind == "nonnegative":
        if np.min(c) < 0:
            raise InvalidInput("nonnegative structure requires a nonnegative C")
        batch = _simplex_batch(z.reshape(k, -1).T, c.ravel())
    elif struct.kind == "integer":
        if np.min(c) < 0:
            raise InvalidInput("integer structure requires a nonnegative C")
        batch = _lattice_batch(z.reshape(k, -1).T, c.ravel())
    else:
        raise Unsupported(f"rank-1 structure projection supports nonnegative or "
                          f"integer factors, got {struct.kind!r}")
    return batch.T.reshape(z.shape)


def reassemble_rank1(summands, scale=None):
    """Recover nonnegative factors ``X, Y`` from rank-1 nonnegative summands.

    Peels each summand: picks its first nonzero row ``i``, sets
    ``x[i] = scale_l``, reads off ``y`` from that row and the remaining
    ``x`` from a positive column of ``y``.  Raises ``NotRankOne`` when a
    summand is not rank-1 within tolerance.
    """
    z = np.asarray(summands, dtype=np.float64)
    if z.ndim != 3:
        raise InvalidInput("expected a (k, m, n) stack of summands")
    k, m, n = z.shape
    if scale is None:
        scale = np.ones(k)
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (k,) or np.any(scale <= 0):
        raise InvalidInput("scale must hold k positive values")
    x = np.zeros((m, k))
    y = np.zeros((k, n))
    for l in range(k):
        zl = z[l]
        tol = 1e-8 * max(1.0, float(np.max(np.abs(zl))))
        if np.min(zl) < -tol:
            raise InvalidInput(f"summand {l} has negative entries")
        if np.max(zl) <= tol:
            continue
        row_mass = zl.max(axis=1)
        i = int(np.argmax(row_mass > tol))
        yl = zl[i, :] / scale[l]
        j = int(np.argmax(yl))
        xl = zl[:, j] / yl[j]
        if np.max(np.abs(np.outer(xl, yl) - zl)) > tol:
            raise NotRankOne(f"summand {l} is not rank-1 within tolerance")
        x[:, l] = xl
        y[l, :] = yl
    return x, y
