import itertools

import numpy as np
import pytest

from matsplit import matcore
from matsplit.compound import (RankExcessiveState, RankLimitedState, ScaledSvdSetup,
                               StructureSpec, lattice_project, nonneg_four,
                               p1_rank1, p1_rank_excessive, p1_rank_limited,
                               p2_rank1, p2_rank_excessive, p2_rank_limited,
                               product_constraint_for, project_structure,
                               rank1_project, reassemble_rank1, setup_scaled_svd,
                               simplex_project, _lattice_batch, _simplex_batch)
from matsplit.errors import InvalidInput, NotRankOne, Unsupported
from matsplit.projections import proj_orthogonal


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def simplex_oracle(z, c):
    """Active-set enumeration of the projection onto {v >= 0, sum v = c}."""
    k = z.size
    best, best_v = np.inf, None
    for mask in itertools.product((0, 1), repeat=k):
        idx = [i for i in range(k) if mask[i]]
        if not idx:
            continue
        v = np.zeros(k)
        shift = (c - z[idx].sum()) / len(idx)
        v[idx] = z[idx] + shift
        if np.min(v[idx]) < -1e-12:
            continue
        d = np.sum((v - z) ** 2)
        if d < best:
            best, best_v = d, v
    return best_v


def compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def lattice_oracle(w, c):
    """Exhaustive nearest integer composition to the simplex projection w."""
    best, best_v = np.inf, None
    for comp in compositions(int(c), w.size):
        v = np.array(comp, dtype=float)
        d = np.sum((v - w) ** 2)
        if d < best:
            best, best_v = d, v
    return best, best_v


# ---------------------------------------------------------------------------
# scaled SVD setup
# ---------------------------------------------------------------------------

class TestSetup:
    def test_identity(self):
        s = setup_scaled_svd(np.eye(2), 1.0, 1.0)
        assert np.allclose(s.U @ s.D @ s.V, np.eye(2))
        assert np.allclose(s.D, np.eye(2))

    def test_rescaling_arithmetic(self):
        s = setup_scaled_svd(np.diag([4.0, 1.0]), 2.0, 1.0)
        assert np.allclose(s.U.T @ s.U, 4.0 * np.eye(2))
        assert np.allclose(np.sort(np.diag(s.D))[::-1], [2.0, 0.5])
        assert np.allclose(s.reconstruct(), np.diag([4.0, 1.0]))

    def test_reconstruction_grid(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            c = rng.standard_normal((4, 3))
            g, h = rng.choice([0.3, 1.0, 3.0], size=2)
            s = setup_scaled_svd(c, g, h)
            assert np.max(np.abs(s.reconstruct() - c)) <= 1e-8 * max(1.0, np.max(np.abs(c)))
            assert np.max(np.abs(s.U.T @ s.U - g ** 2 * np.eye(s.r))) <= 1e-9 * max(1, g * g)
            assert np.max(np.abs(s.V @ s.V.T - h ** 2 * np.eye(s.r))) <= 1e-9 * max(1, h * h)

    def test_half_modes(self):
        rng = np.random.default_rng(1)
        b = rng.random((5, 3))
        c = b @ rng.random((3, 3))  # full rank 3, n = 3 = r
        s = setup_scaled_svd(c, 1.5, 1.0, "half_left")
        assert s.V is None and s.D is None
        assert np.max(np.abs(s.U @ s.K - c)) <= 1e-8 * np.max(np.abs(c))
        ct = c.T
        s2 = setup_scaled_svd(ct, 1.0, 0.7, "half_right")
        assert s2.U is None
        assert np.max(np.abs(s2.K @ s2.V - ct)) <= 1e-8 * np.max(np.abs(ct))
        lowrank = rng.random((4, 2)) @ rng.random((2, 4))
        with pytest.raises(InvalidInput):
            setup_scaled_svd(lowrank, 1.0, 1.0, "half_left")

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            setup_scaled_svd(np.zeros((2, 2)), 1.0, 1.0)
        with pytest.raises(InvalidInput):
            setup_scaled_svd(np.eye(2), -1.0, 1.0)
        with pytest.raises(InvalidInput):
            setup_scaled_svd(np.eye(2), 1.0, 1.0, "half")


# ---------------------------------------------------------------------------
# rank-limited construction
# ---------------------------------------------------------------------------

def feasible_rank_limited(rng, m, n, k, g, h):
    x = rng.random((m, k))
    y = rng.random((k, n))
    c = x @ y
    setup = setup_scaled_svd(c, g, h)
    w = setup.U.T @ x / g ** 2
    z = y @ setup.V.T / h ** 2
    return setup, RankLimitedState(W=w, X=x, Z=z, Y=y)


class TestRankLimited:
    def test_p2_formulas(self):
        setup = setup_scaled_svd(np.eye(1), 1.0, 1.0)
        s = RankLimitedState(W=np.array([[0.0]]), X=np.array([[1.0]]),
                             Z=np.array([[1.0]]), Y=np.array([[1.0]]))
        out = p2_rank_limited(s, setup)
        assert np.allclose(out.W, 0.5) and np.allclose(out.X, 0.5)

    def test_p2_zero_w(self):
        rng = np.random.default_rng(2)
        setup, s = feasible_rank_limited(rng, 4, 4, 3, 1.0, 1.0)
        out = p2_rank_limited(RankLimitedState(W=np.zeros_like(s.W), X=s.X, Z=s.Z, Y=s.Y), setup)
        assert np.allclose(out.W, setup.U.T @ s.X / 2.0)
        assert np.allclose(out.X, setup.U @ out.W)

    def test_p2_exact_consistency_and_idempotence(self):
        rng = np.random.default_rng(3)
        setup, _ = feasible_rank_limited(rng, 5, 4, 3, 1.3, 0.8)
        s = RankLimitedState(W=rng.standard_normal((3, 3)), X=rng.standard_normal((5, 3)),
                             Z=rng.standard_normal((3, 3)), Y=rng.standard_normal((3, 4)))
        out = p2_rank_limited(s, setup)
        assert np.max(np.abs(out.X - setup.U @ out.W)) <= 1e-12
        assert np.max(np.abs(out.Y - out.Z @ setup.V)) <= 1e-12
        out2 = p2_rank_limited(out, setup)
        for a, b in ((out.W, out2.W), (out.X, out2.X), (out.Z, out2.Z), (out.Y, out2.Y)):
            assert np.max(np.abs(a - b)) <= 1e-12

    def test_p1_feasible_fixed(self):
        rng = np.random.default_rng(4)
        setup, s = feasible_rank_limited(rng, 4, 5, 3, 1.0, 1.0)
        out = p1_rank_limited(s, setup, StructureSpec("nonnegative"))
        for a, b in ((s.W, out.W), (s.X, out.X), (s.Z, out.Z), (s.Y, out.Y)):
            assert np.max(np.abs(a - b)) <= 1e-8

    def test_p1_structure_clamps(self):
        rng = np.random.default_rng(5)
        setup, s = feasible_rank_limited(rng, 4, 4, 3, 1.0, 1.0)
        x = s.X.copy()
        x[0, 0] = -0.5
        out = p1_rank_limited(RankLimitedState(W=s.W, X=x, Z=s.Z, Y=s.Y),
                              setup, StructureSpec("nonnegative"))
        assert out.X[0, 0] == 0.0
        assert np.array_equal(out.X[1:], x[1:])

    def test_pm_one_rounding(self):
        assert project_structure(np.array([[0.2, -0.2, 0.0]]), "pm_one").tolist() == [[1.0, -1.0, 1.0]]

    def test_hybrid_half_left_projections(self):
        rng = np.random.default_rng(6)
        x = rng.random((5, 3))
        y = rng.random((3, 3)) + np.eye(3)
        c = x @ y
        setup = setup_scaled_svd(c, 1.2, 1.0, "half_left")
        w = setup.U.T @ x / setup.g ** 2
        s = RankLimitedState(W=w, X=x, Z=None, Y=y)
        struct = StructureSpec("nonnegative")
        out1 = p1_rank_limited(s, setup, struct)
        assert np.max(np.abs(out1.W - w)) <= 1e-7
        assert np.max(np.abs(out1.Y - y)) <= 1e-7
        out2 = p2_rank_limited(s, setup, struct)
        assert np.max(np.abs(out2.X - setup.U @ out2.W)) <= 1e-12
        assert np.array_equal(out2.Y, y)
        with pytest.raises(InvalidInput):
            p2_rank_limited(s, setup)


# ---------------------------------------------------------------------------
# nonneg_four and rank-excessive construction
# ---------------------------------------------------------------------------

class TestNonnegFour:
    def test_examples(self):
        assert nonneg_four(1, 1, 2, 2) == (1, 1, 2, 2)
        assert nonneg_four(-3, -1, 1, 1) == (-1.5, -1.5, 1.5, 1.5)
        assert nonneg_four(0, 0, 0, 0) == (0, 0, 0, 0)

    def test_properties(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            vals = rng.standard_normal(4) * 3
            out = nonneg_four(*vals)
            assert out[0] == out[1] and out[2] == out[3]
            assert out[0] + out[2] >= -1e-12
            assert nonneg_four(*out) == out
        # identity on equal replicas, positive sum
        assert nonneg_four(0.5, 0.5, 1.5, 1.5) == (0.5, 0.5, 1.5, 1.5)


def feasible_rank_excessive(rng, m, n, k, g, h):
    # start from the known EDM-style split: Xc = U W, Xp absorbs negatives
    from matsplit import problems
    inst = problems.edm(m)
    sv = problems.edm_special_init(inst, k, g, h)
    return inst, sv


class TestRankExcessive:
    def setup_method(self):
        rng = np.random.default_rng(8)
        x = rng.random((4, 3))
        y = rng.random((3, 4))
        self.c = x @ y
        self.setup = setup_scaled_svd(self.c, 1.0, 1.0)
        r, k = self.setup.r, 3
        w = self.setup.U.T @ x
        z = y @ self.setup.V.T
        zero_m = np.zeros((4, 3))
        zero_n = np.zeros((3, 4))
        self.state = RankExcessiveState(W=w, Xc=x, Xct=x.copy(), Xp=zero_m, Xpt=zero_m.copy(),
                                        Z=z, Yc=y, Yct=y.copy(), Yp=zero_n, Ypt=zero_n.copy())

    def test_feasible_state_fixed_by_both(self):
        struct = StructureSpec("nonnegative")
        o1 = p1_rank_excessive(self.state, self.setup, struct)
        o2 = p2_rank_excessive(self.state, self.setup)
        for name in ("W", "Xc", "Xct", "Xp", "Xpt", "Z", "Yc", "Yct", "Yp", "Ypt"):
            assert np.max(np.abs(getattr(o1, name) - getattr(self.state, name))) <= 1e-7, name
            assert np.max(np.abs(getattr(o2, name) - getattr(self.state, name))) <= 1e-7, name

    def test_p1_applies_nonneg_four(self):
        struct = StructureSpec("nonnegative")
        s = self.state
        xc = s.Xc.copy(); xct = s.Xct.copy(); xp = s.Xp.copy(); xpt = s.Xpt.copy()
        xc[0, 0], xct[0, 0], xp[0, 0], xpt[0, 0] = -3.0, -1.0, 1.0, 1.0
        out = p1_rank_excessive(RankExcessiveState(W=s.W, Xc=xc, Xct=xct, Xp=xp, Xpt=xpt,
                                                   Z=s.Z, Yc=s.Yc, Yct=s.Yct, Yp=s.Yp, Ypt=s.Ypt),
                                self.setup, struct)
        assert out.Xc[0, 0] == -1.5 and out.Xct[0, 0] == -1.5
        assert out.Xp[0, 0] == 1.5 and out.Xpt[0, 0] == 1.5

    def test_p2_orthogonality_constraint(self):
        rng = np.random.default_rng(9)
        s = RankExcessiveState(*(rng.standard_normal(a.shape) for a in (
            self.state.W, self.state.Xc, self.state.Xct, self.state.Xp, self.state.Xpt,
            self.state.Z, self.state.Yc, self.state.Yct, self.state.Yp, self.state.Ypt)))
        out = p2_rank_excessive(s, self.setup)
        con = out.Xct @ out.Yp + out.Xp @ out.Yct + out.Xpt @ out.Ypt
        assert np.max(np.abs(con)) <= 1e-9
        assert np.max(np.abs(out.Xc - self.setup.U @ out.W)) <= 1e-12

    def test_p2_zero_block_unchanged(self):
        out = p2_rank_excessive(self.state, self.setup)
        assert np.allclose(out.Xct, self.state.Xct)
        assert np.allclose(out.Ypt, 0.0)

    def test_miniature_reduces_to_orthogonal_scalar(self):
        # k = m = n = 1: concatenated blocks behave like the scalar example
        c = np.array([[2.0]])
        setup = setup_scaled_svd(c, 1.0, 1.0)
        s = RankExcessiveState(W=np.array([[1.0]]), Xc=np.array([[1.0]]), Xct=np.array([[2.0]]),
                               Xp=np.array([[0.0]]), Xpt=np.array([[0.0]]),
                               Z=np.array([[2.0]]), Yc=np.array([[1.0]]), Yct=np.array([[1.0]]),
                               Yp=np.array([[0.0]]), Ypt=np.array([[0.0]]))
        out = p2_rank_excessive(s, setup)
        x3 = np.hstack([s.Xct, s.Xp, s.Xpt])
        y3 = np.vstack([s.Yp, s.Yct, s.Ypt])
        ox, oy = proj_orthogonal(x3, y3)
        assert np.allclose(np.hstack([out.Xct, out.Xp, out.Xpt]), ox)
        assert np.allclose(np.vstack([out.Yp, out.Yct, out.Ypt]), oy)

    def test_unsupported_structure(self):
        with pytest.raises(Unsupported):
            p1_rank_excessive(self.state, self.setup, StructureSpec("pm_one"))


# ---------------------------------------------------------------------------
# rank-1 pieces
# ---------------------------------------------------------------------------

class TestRank1:
    def test_rank1_project_examples(self):
        z = np.outer([1.0, 2.0], [3.0, 4.0])
        assert np.max(np.abs(rank1_project(z) - z)) <= 1e-12
        assert np.allclose(rank1_project(np.diag([3.0, 1.0])), np.diag([3.0, 0.0]))
        assert np.allclose(rank1_project(np.zeros((2, 3))), 0.0)

    def test_rank1_project_eckart_young(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            z = rng.standard_normal((4, 3))
            p = rank1_project(z)
            u, s, vt = np.linalg.svd(z)
            assert abs(np.linalg.norm(z - p) - np.sqrt(np.sum(s[1:] ** 2))) <= 1e-9

    def test_p1_rank1_identity_on_rank1(self):
        rng = np.random.default_rng(11)
        z = np.stack([np.outer(rng.random(3), rng.random(4)) for _ in range(2)])
        out = p1_rank1(z)
        assert np.max(np.abs(out - z)) <= 1e-9

    def test_p2_rank1_simplex_example(self):
        c = np.array([[1.0]])
        z = np.array([[[2.0]], [[0.0]]])
        out = p2_rank1(z, c, StructureSpec("nonnegative"))
        assert np.allclose(out[:, 0, 0], [1.0, 0.0])

    def test_p2_rank1_integer_identity_on_feasible(self):
        c = np.array([[3.0, 2.0], [1.0, 0.0]])
        z = np.array([[[1.0, 2.0], [0.0, 0.0]], [[2.0, 0.0], [1.0, 0.0]]])
        out = p2_rank1(z, c, StructureSpec("integer"))
        assert np.array_equal(out, z)

    def test_p2_rank1_rejects_negative_c(self):
        with pytest.raises(InvalidInput):
            p2_rank1(np.zeros((2, 1, 1)), np.array([[-1.0]]), StructureSpec("nonnegative"))

    def test_reassemble_outer_product(self):
        z = np.outer([1.0, 2.0], [3.0, 4.0])
        x, y = reassemble_rank1(z[None, :, :])
        assert np.allclose(x[:, 0], [1.0, 2.0])
        assert np.allclose(y[0, :], [3.0, 4.0])
        assert np.max(np.abs(x @ y - z)) <= 1e-8

    def test_reassemble_zero_and_scale(self):
        z = np.stack([np.zeros((2, 2)), np.outer([1.0, 2.0], [3.0, 4.0])])
        x, y = reassemble_rank1(z, scale=[1.0, 2.0])
        assert np.allclose(x[:, 0], 0.0) and np.allclose(y[0], 0.0)
        assert np.allclose(x[:, 1], [2.0, 4.0])
        assert np.allclose(y[1], [1.5, 2.0])
        assert np.max(np.abs(x @ y - z.sum(axis=0))) <= 1e-8

    def test_reassemble_not_rank_one(self):
        with pytest.raises(NotRankOne):
            reassemble_rank1(np.eye(2)[None, :, :] + np.diag([0.0, 1.0]))


# ---------------------------------------------------------------------------
# simplex and lattice projections
# ---------------------------------------------------------------------------

class TestSimplex:
    def test_examples(self):
        assert np.allclose(simplex_project(np.array([0.25, 0.75]), 1.0), [0.25, 0.75])
        assert np.allclose(simplex_project(np.array([2.0, 0.0]), 1.0), [1.0, 0.0])
        assert np.allclose(simplex_project(np.array([3.0, 2.0, -1.0]), 3.0), [2.0, 1.0, 0.0])

    def test_against_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            k = int(rng.integers(1, 5))
            z = rng.standard_normal(k) * 3
            c = float(rng.random() * 4)
            got = simplex_project(z, c)
            want = simplex_oracle(z, c)
            assert np.max(np.abs(got - want)) <= 1e-9
            assert abs(got.sum() - c) <= 1e-9 and got.min() >= 0

    def test_batch_matches_single(self):
        rng = np.random.default_rng(13)
        z = rng.standard_normal((50, 4))
        c = rng.random(50) * 3
        batch = _simplex_batch(z, c)
        for i in range(50):
            assert np.array_equal(batch[i], simplex_project(z[i], c[i]))

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            simplex_project(np.array([]), 1.0)
        with pytest.raises(InvalidInput):
            simplex_project(np.array([1.0]), -1.0)


class TestLattice:
    def test_examples(self):
        assert np.array_equal(lattice_project(np.array([1.0, 1.0, 1.0]), 3), [1, 1, 1])
        assert np.array_equal(lattice_project(np.array([1.6, 1.6, -0.2]), 3), [2, 1, 0])
        assert np.array_equal(lattice_project(np.array([2.9, 0.1]), 3), [3, 0])

    def test_against_exhaustive(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            k = int(rng.integers(1, 5))
            c = int(rng.integers(0, 9))
            z = rng.standard_normal(k) * 3
            got = lattice_project(z, c)
            assert got.sum() == c and got.min() >= 0
            w = simplex_project(z, c)
            best, best_v = lattice_oracle(w, c)
            assert abs(np.sum((got - w) ** 2) - best) <= 1e-9

    def test_batch_matches_single(self):
        rng = np.random.default_rng(15)
        z = rng.standard_normal((40, 3))
        c = rng.integers(0, 6, size=40)
        batch = _lattice_batch(z, c.astype(float))
        for i in range(40):
            assert np.array_equal(batch[i].astype(np.int64), lattice_project(z[i], int(c[i])))

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            lattice_project(np.array([1.0]), 1.5)


def test_fixed_points_of_each_construction():
    # feasible states satisfy X Y = C and the structure, and both projections fix them
    rng = np.random.default_rng(16)
    # rank-limited
    setup, s = feasible_rank_limited(rng, 4, 5, 3, 1.1, 0.9)
    struct = StructureSpec("nonnegative")
    o1 = p1_rank_limited(s, setup, struct)
    o2 = p2_rank_limited(s, setup)
    assert np.max(np.abs(o1.X @ o1.Y - s.X @ s.Y)) <= 1e-7
    assert np.max(np.abs(o2.X - s.X)) <= 1e-9
    # rank-1: integer summands of an integer matrix
    z = np.stack([np.outer([1.0, 0.0], [2.0, 1.0]), np.outer([0.0, 1.0], [1.0, 3.0])])
    c = z.sum(axis=0)
    assert np.max(np.abs(p1_rank1(z) - z)) <= 1e-9
    assert np.array_equal(p2_rank1(z, c, StructureSpec("integer")), z)
