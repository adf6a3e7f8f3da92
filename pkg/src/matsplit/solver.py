"""Split-iteration engines: RRR and ADMM over named matrix variables.

The iterate is a Cartesian product of named matrices (:class:`SplitVariables`)
treated as one flat vector for the update arithmetic.  Solutions are the
common fixed points of the two projections; progress is tracked by the
root-mean-square constraint discrepancy ``delta = ||x1 - x2|| / sqrt(M)``.
"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInput, ProjectionFailed

PRNG_ID = "numpy-pcg64"

STALL_WINDOW = 1000
STALL_VAR_TOL = 1e-6


class SplitVariables:
    """Ordered, named collection of matrices with exact flatten/unflatten."""

    __slots__ = ("_names", "_arrays")

    def __init__(self, components):
        self._names = tuple(name for name, _ in components)
        self._arrays = {name: np.asarray(a, dtype=np.float64) for name, a in components}
        if len(self._names) != len(set(self._names)):
            raise InvalidInput("duplicate component names")

    @property
    def names(self):
        return self._names

    @property
    def size(self):
        return sum(self._arrays[n].size for n in self._names)

    def schema(self):
        return tuple((n, self._arrays[n].shape) for n in self._names)

    def __getitem__(self, name):
        return self._arrays[name]

    def items(self):
        return [(n, self._arrays[n]) for n in self._names]

    def replace(self, **arrays):
        out = [(n, arrays.get(n, self._arrays[n])) for n in self._names]
        unknown = set(arrays) - set(self._names)
        if unknown:
            raise InvalidInput(f"unknown components {sorted(unknown)}")
        return SplitVariables(out)

    def flatten(self):
        return np.concatenate([self._arrays[n].ravel() for n in self._names])

    @classmethod
    def from_flat(cls, schema, vec):
        out = []
        pos = 0
        for name, shape in schema:
            n = math.prod(shape)
            out.append((name, vec[pos:pos + n].reshape(shape)))
            pos += n
        if pos != vec.size:
            raise InvalidInput("flat vector length does not match schema")
        return cls(out)

    @classmethod
    def zeros(cls, schema):
        return cls([(name, np.zeros(shape)) for name, shape in schema])


@dataclass(frozen=True)
class ProjectionPair:
    """The two constraint projections of a split formulation."""

    p1: Callable[[SplitVariables], SplitVariables]
    p2: Callable[[SplitVariables], SplitVariables]


@dataclass(frozen=True)
class SolveConfig:
    algorithm: str = "rrr"
    beta: float = 0.2
    alpha: float = 1.0
    T: int = 10
    g: float = 1.0
    h: float = 1.0
    max_iter: int = 100_000
    delta_tol: float = 1e-10
    seed: int = 0
    swap_projections: bool = False
    trace_every: Optional[int] = None
    stall_restart: bool = False

    def __post_init__(self):
        if self.algorithm not in ("rrr", "admm"):
            raise InvalidInput(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "rrr" and not 0.0 < self.beta < 2.0:
            raise InvalidInput("RRR requires 0 < beta < 2")
        if self.algorithm == "admm" and self.alpha <= 0.0:
            raise InvalidInput("ADMM requires alpha > 0")
        if self.max_iter < 0 or self.delta_tol < 0:
            raise InvalidInput("max_iter and delta_tol must be nonnegative")
        if self.trace_every is not None and self.trace_every < 1:
            raise InvalidInput("trace_every must be >= 1")

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass
class TraceRecord:
    iter: int
    delta: float


@dataclass
class SolveOutcome:
    status: str                      # solved | max_iter | failed
    iterations: int
    final_delta: float
    solution: Optional[SplitVariables]
    trace: list
    restarts: int = 0
    message: str = ""
    prng_id: str = PRNG_ID


def _rrr_parts(x, p1, p2, beta):
    schema = x.schema()
    v = x.flatten()
    x1 = p1(x)
    v1 = x1.flatten()
    x2 = p2(SplitVariables.from_flat(schema, 2.0 * v1 - v))
    v2 = x2.flatten()
    delta = float(np.linalg.norm(v1 - v2)) / math.sqrt(v.size)
    xn = SplitVariables.from_flat(schema, v + beta * (v2 - v1))
    return xn, delta, x1, x2


def rrr_step(x, p1, p2, beta):
    """One relaxed-reflect-reflect update.

    ``x1 = P1(x); x2 = P2(2 x1 - x); x' = x + beta (x2 - x1)`` with
    ``delta = ||x1 - x2||_2 / sqrt(M)``.
    """
    if not 0.0 < beta < 2.0:
        raise InvalidInput("RRR requires 0 < beta < 2")
    xn, delta, _, _ = _rrr_parts(x, p1, p2, beta)
    return xn, delta


def _admm_parts(x_acc, x2_prev, p1, p2, alpha):
    schema = x2_prev.schema()
    va = x_acc.flatten()
    x1 = p1(SplitVariables.from_flat(schema, x2_prev.flatten() + va))
    v1 = x1.flatten()
    x2 = p2(SplitVariables.from_flat(schema, v1 - va))
    v2 = x2.flatten()
    delta = float(np.linalg.norm(v1 - v2)) / math.sqrt(va.size)
    xn = SplitVariables.from_flat(schema, va + alpha * (v2 - v1))
    return xn, x2, delta, x1


def admm_step(x, x2_prev, p1, p2, alpha):
    """One ADMM update with accumulated-discrepancy variable ``x``.

    ``x1 = P1(x2 + x); x2' = P2(x1 - x); x' = x + alpha (x2' - x1)``.
    """
    if alpha <= 0.0:
        raise InvalidInput("ADMM requires alpha > 0")
    xn, x2, delta, _ = _admm_parts(x, x2_prev, p1, p2, alpha)
    return xn, x2, delta


def _trace_due(it, every):
    if every is not None:
        return it % every == 0
    # default policy: every iteration up to 1e5, then every 10th
    return it < 100_000 or it % 10 == 0


def solve(pair, x0, cfg, verifier=None, reinit=None):
    """Iterate the configured engine until a solution, tolerance, or the cap.

    ``verifier``, when given, is called every iteration with the two
    projection images (in the pair's original order, regardless of
    ``swap_projections``) and returns the accepted solution state or None.
    Without a verifier, termination is ``delta <= cfg.delta_tol``.  The
    optional ``reinit(restart_index) -> SplitVariables`` enables the stall
    detector selected by ``cfg.stall_restart``.
    """
    p1, p2 = (pair.p2, pair.p1) if cfg.swap_projections else (pair.p1, pair.p2)
    admm = cfg.algorithm == "admm"
    schema = x0.schema()
    if admm:
        x_acc = SplitVariables.zeros(schema)
        x2_prev = x0
    else:
        x = x0
    trace = []
    window = []
    restarts = 0
    it = 0
    while True:
        try:
            if admm:
                xn, x2_next, delta, x1 = _admm_parts(x_acc, x2_prev, p1, p2, cfg.alpha)
                img_a, img_b = x1, x2_next
            else:
                xn, delta, x1, x2 = _rrr_parts(x, p1, p2, cfg.beta)
                img_a, img_b = x1, x2
        except ProjectionFailed as exc:
            trace.append(TraceRecord(it, float("nan")))
            return SolveOutcome(status="failed", iterations=it, final_delta=float("nan"),
                                solution=None, trace=trace, restarts=restarts,
                                message=f"projection failed at iteration {it}: {exc}")
        if cfg.swap_projections:
            img1, img2 = img_b, img_a
        else:
            img1, img2 = img_a, img_b
        accepted = verifier(img1, img2) if verifier is not None else None
        if accepted is not None:
            trace.append(TraceRecord(it, delta))
            return SolveOutcome(status="solved", iterations=it, final_delta=delta,
                                solution=accepted, trace=trace, restarts=restarts)
        if delta <= cfg.delta_tol:
            trace.append(TraceRecord(it, delta))
            return SolveOutcome(status="solved", iterations=it, final_delta=delta,
                                solution=img1, trace=trace, restarts=restarts)
        if it >= cfg.max_iter:
            trace.append(TraceRecord(it, delta))
            return SolveOutcome(status="max_iter", iterations=it, final_delta=delta,
                                solution=img1, trace=trace, restarts=restarts)
        if _trace_due(it, cfg.trace_every):
            trace.append(TraceRecord(it, delta))
        if cfg.stall_restart and reinit is not None:
            window.append(delta)
            if len(window) >= STALL_WINDOW:
                if float(np.var(window[-STALL_WINDOW:])) < STALL_VAR_TOL:
                    restarts += 1
                    fresh = reinit(restarts)
                    if admm:
                        x_acc = SplitVariables.zeros(schema)
                        x2_prev = fresh
                    else:
                        x = fresh
                    window.clear()
                    it += 1
                    continue
                window = window[-STALL_WINDOW:]
        if admm:
            x_acc, x2_prev = xn, x2_next
        else:
            x = xn
        it += 1


def init_random(schema, seed, sampler="uniform01", low=0.0, high=1.0):
    """Seeded random state; stream order is component order, row-major within.

    ``sampler`` is one of ``uniform01``, ``uniform_range`` (uses ``low`` and
    ``high``), or ``gaussian``.  The generator is numpy's default PCG64.
    """
    rng = np.random.default_rng(seed)
    out = []
    for name, shape in schema:
        if sampler == "uniform01":
            a = rng.random(shape)
        elif sampler == "uniform_range":
            a = rng.uniform(low, high, shape)
        elif sampler == "gaussian":
            a = rng.standard_normal(shape)
        else:
            raise InvalidInput(f"unknown sampler {sampler!r}")
        out.append((name, a))
    return SplitVariables(out)


def flow_field(p1, p2, xmin, xmax, ymin, ymax, step):
    """Sample the RRR flow field ``P1(2 P2(p) - p) - P2(p)`` on a grid.

    ``p1`` and ``p2`` map (N, 2) point arrays to (N, 2).  Returns an (N, 4)
    array of rows ``(x, y, vx, vy)`` in row-major grid order (x varies
    slowest); nodes where a projection fails carry NaN vectors.
    """
    if step <= 0:
        raise InvalidInput("step must be positive")
    nx = int(round((xmax - xmin) / step)) + 1
    ny = int(round((ymax - ymin) / step)) + 1
    xs = xmin + step * np.arange(nx)
    ys = ymin + step * np.arange(ny)
    pts = np.column_stack([np.repeat(xs, ny), np.tile(ys, nx)])

    def _apply(fn, arr):
        try:
            out = np.asarray(fn(arr), dtype=np.float64)
            if out.shape != arr.shape:
                raise InvalidInput("projection returned a wrong shape")
            return out
        except Exception:
            out = np.full_like(arr, np.nan)
            for i in range(arr.shape[0]):
                try:
                    out[i] = fn(arr[i:i + 1])[0]
                except Exception:
                    pass
            return out

    q = _apply(p2, pts)
    r = _apply(p1, 2.0 * q - pts)
    v = r - q
    return np.column_stack([pts, v])
