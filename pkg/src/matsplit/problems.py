"""Instance generators, verifiers, and projection wiring for the applications.

Families
--------
``gram``          reconstruct a +-1 matrix from its Gram matrix ``X X^T = C``
``hadamard``      real Hadamard search, ``H H^T = m I`` with +-1 entries
``cyclic``        factor a cyclic polynomial into +-1-coefficient factors
``nmf_designed``  exact nonnegative factorization of designed hard instances
``udisj``         unique-disjointness test matrices (rank-limited NMF)
``edm``           linear Euclidean distance matrices (rank-excessive or rank-1)
``int2d``         two-dimensional integer factorization toy for flow fields

Each family wires a pair of projections, a seeded initializer, an exact
verifier where the structure is discrete, and a solution extractor.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import compound, matcore
from .errors import (InvalidInput, DegenerateInput, GenerationFailed, ProjectionFailed,
                     ResourceLimit, NotRankOne)
from .projections import GramConstraint, proj_gram, scalar_product_project
from .solver import ProjectionPair, SolveConfig, SplitVariables, init_random

DEFAULT_METHOD = {
    "gram": "gram",
    "hadamard": "gram",
    "cyclic": "cyclic",
    "nmf_designed": "rank_limited",
    "udisj": "rank_limited",
    "edm": "rank_excessive",
    "int2d": "int2d",
}

METHODS_BY_FAMILY = {
    "gram": ("gram",),
    "hadamard": ("gram",),
    "cyclic": ("cyclic",),
    "nmf_designed": ("rank_limited",),
    "udisj": ("rank_limited",),
    "edm": ("rank_excessive", "rank1"),
    "int2d": ("int2d",),
}


@dataclass(eq=False)
class ProblemInstance:
    """A generated problem: constraint data plus generator parameters.

    ``C`` is the constraint matrix; for ``cyclic`` it is the 1 x m row of
    polynomial coefficients, for ``int2d`` the 1 x 1 matrix ``[[c]]``.
    ``hidden`` optionally holds a known solution for self-checks.
    """

    family: str
    params: dict
    C: np.ndarray
    hidden: Optional[dict] = None


@dataclass(eq=False)
class Problem:
    """Solver-ready wiring of an instance under a particular method."""

    schema: tuple
    pair: ProjectionPair
    init: Callable[[int], SplitVariables]
    verifier: Optional[Callable]
    extract: Callable[[SplitVariables], dict]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def gen_gram(m, k, seed):
    """Soluble Gram instance: hidden +-1 matrix X, constraint ``C = X X^T``."""
    if m < 1 or k < 1:
        raise InvalidInput("m and k must be >= 1")
    rng = np.random.default_rng(seed)
    x = 2.0 * rng.integers(0, 2, size=(m, k)) - 1.0
    return ProblemInstance(family="gram", params={"m": m, "k": k, "seed": seed},
                           C=x @ x.T, hidden={"X": x})


def maxdet_candidate_15():
    """The 15 x 15 candidate Gram matrix ``12 I + B`` of the determinant search.

    ``B`` is the 16 x 16 four-block pattern (3 J on the diagonal blocks,
    -J off-diagonal, J the 4 x 4 all-ones block) with its last row and
    column removed.
    """
    pattern = 4.0 * np.eye(4) - np.ones((4, 4))
    b = np.kron(pattern, np.ones((4, 4)))[:15, :15]
    return ProblemInstance(family="gram", params={"m": 15, "k": 15, "name": "maxdet15"},
                           C=12.0 * np.eye(15) + b, hidden=None)


def gen_hadamard(m):
    """Hadamard search instance ``H H^T = m I`` with +-1 entries."""
    if not (m in (1, 2) or m % 4 == 0):
        raise InvalidInput(f"Hadamard matrices require m in {{1, 2}} or m divisible by 4, got {m}")
    return ProblemInstance(family="hadamard", params={"m": m, "k": m},
                           C=float(m) * np.eye(m), hidden=None)


def cyclic_product(x, y, m=None):
    """Circular convolution of two coefficient vectors (exact for integers)."""
    x = np.asarray(x).ravel()
    y = np.asarray(y).ravel()
    if x.size != y.size or (m is not None and x.size != m):
        raise InvalidInput("coefficient vectors must share the length m")
    full = np.convolve(x, y)
    out = full[:x.size].copy()
    out[:x.size - 1] += full[x.size:]
    return out


_C23 = np.array([1, -3, -3, -3, 1, 1, 1, 1, 1, -3, -3, -3,
                 1, -3, -3, 1, -3, -3, 1, 1, -3, 1, 1], dtype=np.float64)


def c23_instance():
    """The m = 23 two-valued cyclic polynomial with +-1-coefficient factors."""
    return ProblemInstance(family="cyclic", params={"m": 23, "name": "c23"},
                           C=_C23[None, :].copy(), hidden=None)


def gen_cyclic(m, seed):
    """Soluble cyclic instance from hidden random +-1 factor polynomials."""
    if m < 1:
        raise InvalidInput("m must be >= 1")
    rng = np.random.default_rng(seed)
    x = 2.0 * rng.integers(0, 2, size=m) - 1.0
    y = 2.0 * rng.integers(0, 2, size=m) - 1.0
    c = cyclic_product(x, y)
    return ProblemInstance(family="cyclic", params={"m": m, "seed": seed},
                           C=c[None, :], hidden={"x": x[None, :], "y": y[None, :]})


def _fourier_project_with_targets(x, y, targets, T):
    m = x.size
    xh = matcore.dft(x)
    yh = matcore.dft(y)
    half = m // 2
    px, py = scalar_product_project(targets[:half + 1], xh[:half + 1], yh[:half + 1], T)
    xh_out = np.empty(m, dtype=np.complex128)
    yh_out = np.empty(m, dtype=np.complex128)
    xh_out[:half + 1] = px
    yh_out[:half + 1] = py
    hi = (m - 1) // 2
    if hi >= 1:
        idx = np.arange(1, hi + 1)
        xh_out[m - idx] = np.conj(px[idx])
        yh_out[m - idx] = np.conj(py[idx])
    return matcore.idft(xh_out).real, matcore.idft(yh_out).real


def fourier_product_projection(x, y, c, T):
    """Project coefficient pairs onto the cyclic product constraint.

    The constraint decouples into independent complex-scalar constraints on
    the unitary Fourier coefficients; conjugate frequency pairs are projected
    once and mirrored, so real inputs give exactly real outputs.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    c = np.asarray(c, dtype=np.float64).ravel()
    if x.size != c.size or y.size != c.size:
        raise InvalidInput("coefficient vectors must share the length m")
    targets = matcore.dft(c) / np.sqrt(c.size)
    return _fourier_project_with_targets(x, y, targets, T)


def gen_nmf_designed(m, n, k, f=None, seed=0):
    """Designed exact NMF instance with a forced fraction of zero entries.

    Hidden factors are uniform on [0, 1] with ``floor(f m k)`` entries of X
    and ``floor(f k n)`` entries of Y zeroed uniformly at random; instances
    are regenerated (fresh substream) until ``rank(C) = k`` and no factor
    column/row is entirely zero.  ``f`` defaults to the hardness fraction
    ``k / m``.
    """
    if k > min(m, n):
        raise InvalidInput("k must not exceed min(m, n)")
    if f is None:
        f = k / m
    if not 0.0 <= f < 1.0:
        raise InvalidInput("zero fraction f must lie in [0, 1)")
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        x = rng.random((m, k))
        nzx = int(np.floor(f * m * k))
        if nzx:
            x.ravel()[rng.choice(m * k, nzx, replace=False)] = 0.0
        y = rng.random((k, n))
        nzy = int(np.floor(f * k * n))
        if nzy:
            y.ravel()[rng.choice(k * n, nzy, replace=False)] = 0.0
        if np.any(x.max(axis=0) == 0.0) or np.any(y.max(axis=1) == 0.0):
            continue
        c = x @ y
        if matcore.numerical_rank(c) != k:
            continue
        return ProblemInstance(family="nmf_designed",
                               params={"m": m, "n": n, "k": k, "f": f, "seed": seed},
                               C=c, hidden={"X": x, "Y": y})
    raise GenerationFailed("no rank-k instance found in 100 attempts")


def udisj(d):
    """Unique-disjointness instance ``C_d = X_d Y_d`` from the block recursion."""
    if d < 1:
        raise InvalidInput("d must be >= 1")
    if 4 ** (d - 1) > 4096:
        raise ResourceLimit(f"udisj depth {d} exceeds the memory budget")
    x = np.eye(1)
    y = np.eye(1)
    for _ in range(d - 1):
        zx = np.zeros_like(x)
        zy = np.zeros_like(y)
        x = np.block([[x, x, x], [zx, x, zx], [x, zx, zx], [zx, zx, x]])
        y = np.block([[y, y, zy, zy], [y, zy, y, zy], [y, zy, zy, y]])
    return ProblemInstance(family="udisj",
                           params={"d": d, "m": x.shape[0], "n": y.shape[1], "k": x.shape[1]},
                           C=x @ y, hidden={"X": x, "Y": y})


def edm(m, k=None):
    """Linear Euclidean distance matrix instance, entries ``(i - j)^2``."""
    if m < 3:
        raise InvalidInput("m must be >= 3")
    if k is not None and k < 3:
        raise InvalidInput("factor width k must be >= 3 (the rank of C)")
    idx = np.arange(m, dtype=np.float64)
    c = (idx[:, None] - idx[None, :]) ** 2
    params = {"m": m}
    if k is not None:
        params["k"] = k
    return ProblemInstance(family="edm", params=params, C=c, hidden=None)


def edm_special_init(instance, k, g, h):
    """Deterministic initial point for the rank-excessive construction.

    Built from the rescaled SVD: ``W`` and ``Z`` are the zero-padded square
    roots of the rescaled singular values, ``X_C = U W``, ``Y_C = Z V``, the
    perpendicular parts absorb the negative entries, and all replicas start
    equal.  Every constraint except the orthogonality block holds exactly.
    """
    c = instance.C
    if k < 3:
        raise InvalidInput("factor width k must be >= 3 (the rank of C)")
    setup = compound.setup_scaled_svd(c, g, h, "full")
    if k < setup.r:
        raise InvalidInput(f"k={k} is below rank(C)={setup.r}")
    sqrt_d = np.sqrt(np.diag(setup.D))
    w = np.zeros((setup.r, k))
    w[:, :setup.r] = np.diag(sqrt_d)
    z = np.zeros((k, setup.r))
    z[:setup.r, :] = np.diag(sqrt_d)
    xc = setup.U @ w
    yc = z @ setup.V
    xp = np.maximum(0.0, -xc)
    yp = np.maximum(0.0, -yc)
    return SplitVariables([
        ("W", w), ("Xc", xc), ("Xct", xc.copy()), ("Xp", xp), ("Xpt", xp.copy()),
        ("Z", z), ("Yc", yc), ("Yct", yc.copy()), ("Yp", yp), ("Ypt", yp.copy()),
    ])


def int2d_instance(c):
    """Plane integer-factorization toy: hyperbola ``x y = c`` versus the lattice."""
    if c <= 0 or c != int(c):
        raise InvalidInput("c must be a positive integer")
    return ProblemInstance(family="int2d", params={"c": int(c)},
                           C=np.array([[float(c)]]), hidden=None)


def int2d_point_projections(c, T=20):
    """Vectorized plane projections (hyperbola, rounding) for flow fields."""
    def hyperbola(pts):
        x, y = scalar_product_project(
            np.full(pts.shape[0], complex(c)),
            pts[:, 0].astype(np.complex128), pts[:, 1].astype(np.complex128), T)
        return np.column_stack([x.real, y.real])

    def rounding(pts):
        return np.rint(pts)

    return hyperbola, rounding


# ---------------------------------------------------------------------------
# exact verification
# ---------------------------------------------------------------------------

def _as_int(a):
    return np.rint(np.asarray(a, dtype=np.float64)).astype(np.int64)


def _int_rank_le_one(z):
    nz = np.argwhere(z != 0)
    if nz.size == 0:
        return True
    i0, j0 = nz[0]
    return np.array_equal(z * z[i0, j0], np.outer(z[:, j0], z[i0, :]))


def _edm_summands_ok(x, y, c_int):
    z = _as_int(np.einsum("il,lj->lij", x, y))
    if not np.array_equal(z.sum(axis=0), c_int):
        return "summands do not sum to C"
    for l in range(z.shape[0]):
        if not _int_rank_le_one(z[l]):
            return f"summand {l} is not rank-1"
    return None


def verify(instance, candidate, tol=1e-6):
    """Exact acceptance check of a candidate solution.

    Returns ``(accepted, reason)``.  Discrete families (gram, hadamard,
    cyclic, edm, int2d) are checked in integer arithmetic after rounding;
    nonnegative factorizations are checked to ``tol`` in max norm.
    """
    fam = instance.family
    c = instance.C
    if fam in ("gram", "hadamard"):
        x = candidate.get("X")
        if x is None or x.shape != (c.shape[0], instance.params.get("k", c.shape[0])):
            return False, "shape"
        xi = _as_int(x)
        if not np.all(np.abs(xi) == 1):
            return False, "entries not +-1"
        if not np.array_equal(xi @ xi.T, _as_int(c)):
            return False, "product"
        return True, None
    if fam == "cyclic":
        x, y = candidate.get("x"), candidate.get("y")
        m = c.size
        if x is None or y is None or x.size != m or y.size != m:
            return False, "shape"
        xi, yi = _as_int(x).ravel(), _as_int(y).ravel()
        if not (np.all(np.abs(xi) == 1) and np.all(np.abs(yi) == 1)):
            return False, "entries not +-1"
        if not np.array_equal(cyclic_product(xi, yi), _as_int(c).ravel()):
            return False, "product"
        return True, None
    if fam in ("nmf_designed", "udisj"):
        x, y = candidate.get("X"), candidate.get("Y")
        if x is None or y is None or x.shape[0] != c.shape[0] or y.shape[1] != c.shape[1] \
                or x.shape[1] != y.shape[0]:
            return False, "shape"
        if min(x.min(), y.min()) < -tol:
            return False, "negative entry"
        if np.max(np.abs(x @ y - c)) > tol:
            return False, "product"
        return True, None
    if fam == "edm":
        x, y = candidate.get("X"), candidate.get("Y")
        if x is None or y is None or x.shape[0] != c.shape[0] or y.shape[1] != c.shape[1] \
                or x.shape[1] != y.shape[0]:
            return False, "shape"
        reason = _edm_summands_ok(x, y, _as_int(c))
        return (reason is None), reason
    if fam == "int2d":
        x, y = candidate.get("x"), candidate.get("y")
        if x is None or y is None:
            return False, "shape"
        if int(_as_int(x).ravel()[0]) * int(_as_int(y).ravel()[0]) != int(c[0, 0]):
            return False, "product"
        return True, None
    raise InvalidInput(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# projection wiring per method
# ---------------------------------------------------------------------------

def _gram_problem(instance, cfg):
    c = instance.C
    m = c.shape[0]
    k = int(instance.params.get("k", m))
    gc = GramConstraint.from_matrix(c)
    if k < gc.r:
        raise InvalidInput(f"factor width k={k} below rank(C)={gc.r}")
    ci = _as_int(c)
    eps = 1e-8 * (1.0 + float(np.linalg.norm(c)))
    schema = (("X", (m, k)),)

    def p1(sv):
        return sv.replace(X=compound.project_structure(sv["X"], "pm_one"))

    def p2(sv):
        try:
            return sv.replace(X=proj_gram(gc, sv["X"]))
        except DegenerateInput:
            try:
                return sv.replace(X=proj_gram(gc, sv["X"] + eps * np.eye(m, k)))
            except DegenerateInput as exc:
                raise ProjectionFailed("Gram projection degenerate after perturbation") from exc

    def verifier(img1, img2):
        xi = _as_int(img1["X"])
        if np.all(np.abs(xi) == 1) and np.array_equal(xi @ xi.T, ci):
            return img1
        return None

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2),
        init=lambda seed: init_random(schema, seed, "uniform_range", -1.0, 1.0),
        verifier=verifier, extract=lambda sv: {"X": sv["X"]})


def _cyclic_problem(instance, cfg):
    coeffs = instance.C.ravel()
    m = coeffs.size
    ci = _as_int(coeffs)
    targets = matcore.dft(coeffs) / np.sqrt(m)
    schema = (("x", (1, m)), ("y", (1, m)))
    T = cfg.T

    def p1(sv):
        xr, yr = _fourier_project_with_targets(sv["x"].ravel(), sv["y"].ravel(), targets, T)
        return sv.replace(x=xr[None, :], y=yr[None, :])

    def p2(sv):
        return sv.replace(x=compound.project_structure(sv["x"], "pm_one"),
                          y=compound.project_structure(sv["y"], "pm_one"))

    def verifier(img1, img2):
        xi = _as_int(img2["x"]).ravel()
        yi = _as_int(img2["y"]).ravel()
        if np.array_equal(cyclic_product(xi, yi), ci):
            return img2
        return None

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2),
        init=lambda seed: init_random(schema, seed, "uniform_range", -1.0, 1.0),
        verifier=verifier, extract=lambda sv: {"x": sv["x"], "y": sv["y"]})


def _support_sign_fix(vec, support, tol):
    """Orient a candidate factor column so its support is positive; None if mixed."""
    vals = vec[support]
    if np.all(vals > tol):
        return 1.0
    if np.all(vals < -tol):
        return -1.0
    return None


def _complete_from_support(setup, sx, sy, c, scale):
    """Exact factorization pinned by a candidate support pattern.

    On hard designed instances each factor column (row) is determined, up
    to scale, by its zero pattern inside the span of ``U`` (``V``): the
    zero rows select a one-dimensional nullspace.  The remaining scales
    are fixed, linearly, by the inner product constraint, so a candidate
    support either reproduces ``C`` exactly or is rejected.

    Returns ``("ok", factors)``, ``("fail", None)`` for a rejected support
    pattern, or ``("na", None)`` when the one-dimensional structure does
    not apply (the Gauss-Newton fallback handles those instances).
    """
    r = setup.r
    k = sx.shape[1]
    tol_pos = 1e-12
    nmat = np.zeros((r, k))
    mmat = np.zeros((k, r))
    for j in range(k):
        a = setup.U[~sx[:, j], :]
        if a.shape[0] < r - 1:
            return "na", None
        _, s, vt = np.linalg.svd(a)
        rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
        if r - rank != 1:
            return "na", None
        nj = vt[-1]
        sign = _support_sign_fix(setup.U @ nj, sx[:, j], tol_pos)
        if sign is None:
            return "fail", None
        nmat[:, j] = sign * nj
    for i in range(k):
        a = setup.V[:, ~sy[i, :]]
        if a.shape[1] < r - 1:
            return "na", None
        u, s, _ = np.linalg.svd(a)
        rank = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
        if r - rank != 1:
            return "na", None
        mi = u[:, -1]
        sign = _support_sign_fix(mi @ setup.V, sy[i, :], tol_pos)
        if sign is None:
            return "fail", None
        mmat[i, :] = sign * mi
    # W Z = D is linear in the per-summand scales gamma_l
    kmat = np.empty((r * r, k))
    for l in range(k):
        kmat[:, l] = np.outer(nmat[:, l], mmat[l, :]).ravel()
    gamma, *_ = np.linalg.lstsq(kmat, setup.D.ravel(), rcond=None)
    if np.any(gamma <= 0):
        return "fail", None
    if np.max(np.abs(kmat @ gamma - setup.D.ravel())) > 1e-9 * max(np.max(np.abs(setup.D)), 1.0):
        return "fail", None
    root = np.sqrt(gamma)
    w = nmat * root
    z = root[:, None] * mmat
    x = setup.U @ w
    y = z @ setup.V
    if x.min() < -1e-9 or y.min() < -1e-9 or np.max(np.abs(x @ y - c)) > 1e-9 * scale:
        return "fail", None
    return "ok", (w, np.maximum(x, 0.0), z, np.maximum(y, 0.0))


def _complete_by_least_squares(sx, sy, x, y, c, scale):
    """Gauss-Newton polish of a candidate restricted to its support, or None."""
    from scipy.optimize import least_squares

    ix = np.argwhere(sx)
    iy = np.argwhere(sy)
    nx = len(ix)
    m, k = sx.shape
    n = sy.shape[1]
    if nx == 0 or len(iy) == 0:
        return None

    def unpack(v):
        xf = np.zeros((m, k))
        yf = np.zeros((k, n))
        xf[ix[:, 0], ix[:, 1]] = v[:nx]
        yf[iy[:, 0], iy[:, 1]] = v[nx:]
        return xf, yf

    def resid(v):
        xf, yf = unpack(v)
        return (xf @ yf - c).ravel()

    def jac(v):
        xf, yf = unpack(v)
        j = np.zeros((m * n, nx + len(iy)))
        for p, (i, l) in enumerate(ix):
            j[i * n:(i + 1) * n, p] = yf[l, :]
        for p, (l, col) in enumerate(iy):
            j[col::n, nx + p] = xf[:, l]
        return j

    v0 = np.concatenate([x[sx], y[sy]])
    res = least_squares(resid, v0, jac=jac, method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=25)
    xf, yf = unpack(res.x)
    if xf.min() < -1e-9 or yf.min() < -1e-9 or np.max(np.abs(xf @ yf - c)) > 1e-9 * scale:
        return None
    return np.maximum(xf, 0.0), np.maximum(yf, 0.0)


def _make_nmf_verifier(setup, c, scale, gate=1.5e-3, stride=10, lm_stride=500):
    """Support-lock verifier for exact nonnegative factorization.

    The discrete object of these problems is the zero pattern of the
    factors.  Once the iterate's pattern matches a solvable pattern, the
    exact factorization is recovered in closed form (or, for sparse
    patterns without the pinned one-dimensional structure, by a short
    Gauss-Newton polish) and checked to machine precision, mirroring the
    round-and-verify termination of the integer families.
    """
    state = {"calls": 0, "last": -stride, "last_lm": -lm_stride}

    def verifier(img1, img2):
        state["calls"] += 1
        it = state["calls"]
        x = img1["X"]
        y = img1["Y"]
        gap = np.linalg.norm(img1.flatten() - img2.flatten()) / np.sqrt(img1.size)
        if gap > gate or it - state["last"] < stride:
            return None
        state["last"] = it
        sx = x > 0
        sy = y > 0
        status, completed = _complete_from_support(setup, sx, sy, c, scale)
        if (status == "na" and it - state["last_lm"] >= lm_stride
                and sx.sum() + sy.sum() <= 0.35 * (sx.size + sy.size)):
            # sparse support without the pinned structure: polish is cheap
            state["last_lm"] = it
            pair = _complete_by_least_squares(sx, sy, x, y, c, scale)
            if pair is not None:
                xf, yf = pair
                w = setup.U.T @ xf / setup.g ** 2
                z = yf @ setup.V.T / setup.h ** 2
                completed = (w, xf, z, yf)
        if completed is None:
            return None
        w, xf, z, yf = completed
        return img1.replace(W=w, X=xf, Z=z, Y=yf)

    return verifier


def _rank_limited_problem(instance, cfg):
    c = instance.C
    m, n = c.shape
    k = int(instance.params["k"])
    setup = compound.setup_scaled_svd(c, cfg.g, cfg.h, "full")
    if setup.r != k:
        warnings.warn(f"rank-limited construction assumes rank(C) == k; "
                      f"got rank {setup.r}, k {k}", stacklevel=2)
    fc = compound.product_constraint_for(setup, k, cfg.T)
    struct = compound.StructureSpec("nonnegative")
    scale = max(float(np.max(np.abs(c))), 1e-300)
    schema = (("W", (setup.r, k)), ("X", (m, k)), ("Z", (k, setup.r)), ("Y", (k, n)))

    def p1(sv):
        s = compound.p1_rank_limited(
            compound.RankLimitedState(W=sv["W"], X=sv["X"], Z=sv["Z"], Y=sv["Y"]),
            setup, struct, product_constraint=fc)
        return sv.replace(W=s.W, X=s.X, Z=s.Z, Y=s.Y)

    def p2(sv):
        s = compound.p2_rank_limited(
            compound.RankLimitedState(W=sv["W"], X=sv["X"], Z=sv["Z"], Y=sv["Y"]), setup)
        return sv.replace(W=s.W, X=s.X, Z=s.Z, Y=s.Y)

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2),
        init=lambda seed: init_random(schema, seed, "uniform01"),
        verifier=_make_nmf_verifier(setup, c, scale),
        extract=lambda sv: {"X": sv["X"], "Y": sv["Y"]})


_EXCESSIVE_NAMES = ("W", "Xc", "Xct", "Xp", "Xpt", "Z", "Yc", "Yct", "Yp", "Ypt")


def _rank_excessive_problem(instance, cfg, init_kind):
    c = instance.C
    m, n = c.shape
    k = int(instance.params["k"])
    setup = compound.setup_scaled_svd(c, cfg.g, cfg.h, "full")
    r = setup.r
    fc = compound.product_constraint_for(setup, k, cfg.T)
    struct = compound.StructureSpec("nonnegative")
    ci = _as_int(c)
    schema = (("W", (r, k)), ("Xc", (m, k)), ("Xct", (m, k)), ("Xp", (m, k)), ("Xpt", (m, k)),
              ("Z", (k, r)), ("Yc", (k, n)), ("Yct", (k, n)), ("Yp", (k, n)), ("Ypt", (k, n)))

    def _state(sv):
        return compound.RankExcessiveState(**{name: sv[name] for name in _EXCESSIVE_NAMES})

    def _back(sv, s):
        return sv.replace(**{name: getattr(s, name) for name in _EXCESSIVE_NAMES})

    def p1(sv):
        return _back(sv, compound.p1_rank_excessive(_state(sv), setup, struct,
                                                    product_constraint=fc))

    def p2(sv):
        return _back(sv, compound.p2_rank_excessive(_state(sv), setup))

    def verifier(img1, img2):
        x = img1["Xc"] + img1["Xp"]
        y = img1["Yc"] + img1["Yp"]
        if _edm_summands_ok(x, y, ci) is None:
            return img1
        return None

    if init_kind == "special":
        def init(seed):
            return edm_special_init(instance, k, cfg.g, cfg.h)
    else:
        def init(seed):
            return init_random(schema, seed, "uniform01")

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2), init=init,
        verifier=verifier if instance.family == "edm" else None,
        extract=lambda sv: {"X": sv["Xc"] + sv["Xp"], "Y": sv["Yc"] + sv["Yp"]})


def _rank1_problem(instance, cfg, struct_kind):
    c = instance.C
    m, n = c.shape
    k = int(instance.params["k"])
    struct = compound.StructureSpec(struct_kind)
    ci = _as_int(c)
    names = tuple(f"Z{l + 1:02d}" for l in range(k))
    schema = tuple((name, (m, n)) for name in names)
    hi = float(np.max(c))

    def _stack(sv):
        return np.stack([sv[name] for name in names])

    def _back(sv, z):
        return sv.replace(**{name: z[l] for l, name in enumerate(names)})

    def p1(sv):
        return _back(sv, compound.p1_rank1(_stack(sv)))

    def p2(sv):
        return _back(sv, compound.p2_rank1(_stack(sv), c, struct))

    def verifier(img1, img2):
        z = _as_int(_stack(img2))
        if not np.array_equal(z.sum(axis=0), ci):
            return None
        if all(_int_rank_le_one(z[l]) for l in range(k)):
            return _back(img2, z.astype(np.float64))
        return None

    def extract(sv):
        out = {name: sv[name] for name in names}
        try:
            x, y = compound.reassemble_rank1(_stack(sv))
            out["X"] = x
            out["Y"] = y
        except (NotRankOne, InvalidInput):
            pass
        return out

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2),
        init=lambda seed: init_random(schema, seed, "uniform_range", 0.0, hi),
        verifier=verifier, extract=extract)


def _int2d_problem(instance, cfg):
    c = float(instance.C[0, 0])
    schema = (("x", (1, 1)), ("y", (1, 1)))
    T = cfg.T

    def p1(sv):
        x, y = scalar_product_project(
            np.asarray([complex(c)]),
            np.asarray([complex(sv["x"][0, 0])]), np.asarray([complex(sv["y"][0, 0])]), T)
        return sv.replace(x=np.array([[x[0].real]]), y=np.array([[y[0].real]]))

    def p2(sv):
        return sv.replace(x=np.rint(sv["x"]), y=np.rint(sv["y"]))

    def verifier(img1, img2):
        xi = int(_as_int(img2["x"])[0, 0])
        yi = int(_as_int(img2["y"])[0, 0])
        if xi * yi == int(c):
            return img2
        return None

    return Problem(
        schema=schema, pair=ProjectionPair(p1, p2),
        init=lambda seed: init_random(schema, seed, "uniform_range", 0.0, max(c, 1.0)),
        verifier=verifier, extract=lambda sv: {"x": sv["x"], "y": sv["y"]})


def build_problem(instance, method=None, cfg=None, struct=None, init_kind=None):
    """Wire an instance into projections, initializer, verifier, extractor.

    ``method`` defaults per family; ``struct`` selects the rank-1 structure
    projection (``integer`` or ``nonnegative``); ``init_kind`` is ``random``
    or ``special`` (rank-excessive only, default special for edm).
    """
    cfg = cfg or SolveConfig()
    method = method or DEFAULT_METHOD[instance.family]
    if method not in METHODS_BY_FAMILY[instance.family]:
        raise InvalidInput(f"method {method!r} is not valid for family {instance.family!r}")
    if method == "gram":
        return _gram_problem(instance, cfg)
    if method == "cyclic":
        return _cyclic_problem(instance, cfg)
    if method == "rank_limited":
        return _rank_limited_problem(instance, cfg)
    if method == "rank_excessive":
        return _rank_excessive_problem(instance, cfg, init_kind or "special")
    if method == "rank1":
        return _rank1_problem(instance, cfg, struct or "integer")
    if method == "int2d":
        return _int2d_problem(instance, cfg)
    raise InvalidInput(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# instance manifests
# ---------------------------------------------------------------------------

def write_instance(instance, outdir):
    """Write matrix files plus ``manifest.json``; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = {"C": "C.txt"}
    matcore.write_matrix(outdir / "C.txt", instance.C)
    if instance.hidden:
        for name, arr in instance.hidden.items():
            key = f"hidden_{name}"
            files[key] = f"{key}.txt"
            matcore.write_matrix(outdir / files[key], arr)
    manifest = {"family": instance.family, "params": instance.params, "files": files}
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_instance(manifest_path):
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    files = manifest["files"]
    c = matcore.read_matrix(base / files["C"])
    hidden = {}
    for key, rel in files.items():
        if key.startswith("hidden_"):
            hidden[key[len("hidden_"):]] = matcore.read_matrix(base / rel)
    return ProblemInstance(family=manifest["family"], params=manifest["params"],
                           C=c, hidden=hidden or None)
