"""Dense linear-algebra kernels used by every projection.

All matrices are real, dense, 64-bit float ``numpy`` arrays with at least one
row and one column.  Decompositions are thin wrappers around LAPACK (via
``numpy.linalg``) that add the rank-tolerance conventions used throughout the
package; the Sylvester solver and the unitarization / eigenspace operators are
implemented here directly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, DegenerateInput, NotPSD, SingularPencil

# Default relative rank tolerance: singular values (eigenvalues) at or below
# this fraction of the largest one are treated as zero.
RANK_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInput(f"{name} must be 2-D with at least one row and column, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return m


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD truncated at the numerical rank.

    ``U`` is m x r with orthonormal columns, ``S`` the r singular values in
    descending order (all above tolerance), ``V`` is r x n with orthonormal
    rows, and ``U @ diag(S) @ V`` reconstructs the input up to the dropped
    part of the spectrum.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.S.size


@dataclass(frozen=True)
class EigSymResult:
    """Symmetric eigendecomposition, eigenvalues ascending, ``V`` orthogonal columns."""

    V: np.ndarray
    E: np.ndarray


def svd(a, rank_tol=RANK_TOL):
    """Singular value decomposition truncated at the numerical rank.

    Singular values at or below ``rank_tol`` times the largest are dropped
    together with their singular vectors.
    """
    a = as_matrix(a)
    if rank_tol <= 0:
        raise InvalidInput("rank_tol must be positive")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.sum(s > rank_tol * s[0]))
    return SvdResult(U=u[:, :r], S=s[:r], V=vh[:r, :])


def numerical_rank(a, rank_tol=RANK_TOL):
    """Number of singular values above ``rank_tol`` relative tolerance."""
    return svd(a, rank_tol).rank


def unitarize(a, rank_tol=RANK_TOL):
    """Replace every retained singular value of ``a`` by one.

    Sub-tolerance singular directions are dropped rather than completed
    arbitrarily, which keeps the map deterministic.  A matrix with no
    direction information at all (``a`` numerically zero) raises
    ``DegenerateInput`` so the caller can decide on a fallback.
    """
    res = svd(as_matrix(a), rank_tol)
    if res.rank == 0:
        raise DegenerateInput("cannot unitarize a numerically zero matrix")
    return res.U @ res.V


def eig_sym(s):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    The input is symmetrized as ``(S + S.T)/2`` before decomposition.
    """
    s = as_matrix(s)
    if s.shape[0] != s.shape[1]:
        raise InvalidInput(f"eig_sym requires a square matrix, got {s.shape}")
    w, v = np.linalg.eigh(0.5 * (s + s.T))
    return EigSymResult(V=v, E=w)


def eigspace_projector(s, sign, zero_tol=RANK_TOL):
    """Spectral projector onto the negative or positive eigenspace of ``s``.

    ``sign`` is ``"negative"`` or ``"positive"``.  Eigenvalues within
    ``zero_tol`` (scaled by the spectral radius) of zero are excluded from
    both projectors; those directions are distance ties and dropping them is
    the deterministic choice.
    """
    res = eig_sym(s)
    scale = max(float(np.max(np.abs(res.E))), 1.0) if res.E.size else 1.0
    cut = zero_tol * scale
    if sign == "negative":
        keep = res.E < -cut
    elif sign == "positive":
        keep = res.E > cut
    else:
        raise InvalidInput(f"sign must be 'negative' or 'positive', got {sign!r}")
    vk = res.V[:, keep]
    return vk @ vk.T


def eig_projectors(s, zero_tol=RANK_TOL):
    """Both eigenspace projectors of ``s`` from a single decomposition."""
    res = eig_sym(s)
    scale = max(float(np.max(np.abs(res.E))), 1.0) if res.E.size else 1.0
    cut = zero_tol * scale
    vn = res.V[:, res.E < -cut]
    vp = res.V[:, res.E > cut]
    return vn @ vn.T, vp @ vp.T


def cholesky_psd(c, rank_tol=RANK_TOL):
    """Rank-revealing factor ``A`` (m x r) of a PSD matrix with ``A @ A.T = C``.

    Computed from the symmetric eigendecomposition; only the product contract
    matters, so any right-orthogonal rotation of the returned factor is
    equally valid.  Raises ``NotPSD`` when ``c`` has an eigenvalue below
    ``-rank_tol * ||c||``.
    """
    c = as_matrix(c)
    if c.shape[0] != c.shape[1]:
        raise InvalidInput("cholesky_psd requires a square matrix")
    res = eig_sym(c)
    scale = max(float(np.max(np.abs(res.E))), 0.0)
    if scale == 0.0:
        raise DegenerateInput("cannot factor the zero matrix")
    if res.E[0] < -rank_tol * scale:
        raise NotPSD(f"matrix has eigenvalue {res.E[0]:.3e} below tolerance")
    keep = res.E > rank_tol * scale
    # descending eigenvalue order for a deterministic column convention
    w = res.E[keep][::-1]
    v = res.V[:, keep][:, ::-1]
    return v * np.sqrt(w)


def pinv(a, rank_tol=RANK_TOL):
    """Moore-Penrose pseudoinverse with the package rank tolerance."""
    return np.linalg.pinv(as_matrix(a), rcond=rank_tol)


def sylvester_spd(a, b, r):
    """Solve ``A F + F B = R`` for symmetric PSD ``A`` and ``B``.

    Both coefficient matrices are diagonalized and the transformed right-hand
    side is divided componentwise by the eigenvalue sums.  A sum at or below
    the pencil tolerance means one of the underlying factors lost rank, which
    is reported as ``SingularPencil``.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    r = as_matrix(r, "R")
    ea = eig_sym(a)
    eb = eig_sym(b)
    if r.shape != (a.shape[0], b.shape[0]):
        raise InvalidInput(f"R must be {a.shape[0]} x {b.shape[0]}, got {r.shape}")
    denom = ea.E[:, None] + eb.E[None, :]
    scale = max(float(np.max(np.abs(ea.E))) if ea.E.size else 0.0,
                float(np.max(np.abs(eb.E))) if eb.E.size else 0.0, 1.0)
    if np.min(denom) <= 1e-13 * scale:
        raise SingularPencil("eigenvalue sum of the pencil is not positive")
    m = (ea.V.T @ r @ eb.V) / denom
    return ea.V @ m @ eb.V.T


def dft(x):
    """Unitary DFT with positive-exponent convention.

    ``X[l] = (1/sqrt(m)) * sum_k exp(+2i pi k l / m) x[k]``
    """
    x = np.asarray(x)
    if x.ndim != 1 or x.size < 1:
        raise InvalidInput("dft expects a 1-D vector of length >= 1")
    return np.sqrt(x.size) * np.fft.ifft(x)


def idft(xhat):
    """Inverse of :func:`dft`; returns a complex vector."""
    xhat = np.asarray(xhat)
    if xhat.ndim != 1 or xhat.size < 1:
        raise InvalidInput("idft expects a 1-D vector of length >= 1")
    return np.fft.fft(xhat) / np.sqrt(xhat.size)


# ---------------------------------------------------------------------------
# matrix text format: first line "rows cols", then one line per row of
# space-separated decimal literals at full round-trip precision.
# ---------------------------------------------------------------------------

def write_matrix(path, a):
    a = as_matrix(a)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise InvalidInput(f"{path}: malformed header")
        rows, cols = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (rows, cols):
        raise InvalidInput(f"{path}: expected {rows} x {cols}, got {data.shape}")
    return as_matrix(data, path)
