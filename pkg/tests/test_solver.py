import numpy as np
import pytest

from matsplit.errors import InvalidInput, ProjectionFailed
from matsplit.solver import (ProjectionPair, SolveConfig, SplitVariables, admm_step,
                             flow_field, init_random, rrr_step, solve)


def sv1(value):
    return SplitVariables([("x", np.array([[float(value)]]))])


def point_projector(target):
    t = float(target)
    return lambda sv: sv.replace(x=np.array([[t]]))


class TestSplitVariables:
    def test_flatten_roundtrip_exact(self):
        rng = np.random.default_rng(0)
        sv = SplitVariables([("a", rng.standard_normal((2, 3))),
                             ("b", rng.standard_normal((4, 1)))])
        flat = sv.flatten()
        assert flat.size == sv.size == 10
        back = SplitVariables.from_flat(sv.schema(), flat)
        for name in sv.names:
            assert np.array_equal(sv[name], back[name])

    def test_replace_validates(self):
        sv = sv1(1.0)
        with pytest.raises(InvalidInput):
            sv.replace(bogus=np.zeros((1, 1)))

    def test_from_flat_length_check(self):
        sv = sv1(1.0)
        with pytest.raises(InvalidInput):
            SplitVariables.from_flat(sv.schema(), np.zeros(3))


class TestRrrStep:
    def test_fixed_point(self):
        ident = lambda sv: sv
        x = sv1(0.7)
        xn, delta = rrr_step(x, ident, ident, 0.5)
        assert delta == 0.0
        assert np.array_equal(xn["x"], x["x"])

    def test_two_point_drift(self):
        p0 = point_projector(0.0)
        p1 = point_projector(1.0)
        for beta in (0.2, 0.9):
            for x0 in (-1.3, 0.4):
                xn, delta = rrr_step(sv1(x0), p0, p1, beta)
                assert delta == 1.0  # independent of beta and x
                assert np.allclose(xn["x"], x0 + beta)

    def test_compact_reflection_form(self):
        # x' = (1 - beta/2) x + (beta/2) R2(R1(x)), R_i = 2 P_i - id
        rng = np.random.default_rng(1)
        schema = (("a", (2, 2)), ("b", (1, 3)))

        def pa(sv):
            return sv.replace(a=np.maximum(sv["a"], 0.0), b=np.rint(sv["b"]))

        def pb(sv):
            return sv.replace(a=np.tril(sv["a"]), b=0.5 * sv["b"])

        for _ in range(20):
            x = init_random(schema, rng.integers(1 << 31), "gaussian")
            beta = float(rng.uniform(0.1, 1.9))
            xn, _ = rrr_step(x, pa, pb, beta)
            v = x.flatten()
            r1 = 2.0 * pa(x).flatten() - v
            r2 = 2.0 * pb(SplitVariables.from_flat(x.schema(), r1)).flatten() - r1
            want = (1 - beta / 2) * v + (beta / 2) * r2
            assert np.max(np.abs(xn.flatten() - want)) <= 1e-12

    def test_beta_validation(self):
        with pytest.raises(InvalidInput):
            rrr_step(sv1(0.0), lambda s: s, lambda s: s, 2.5)


class TestAdmmStep:
    def test_fixed_point(self):
        ident = lambda sv: sv
        x2 = sv1(0.3)
        zero = sv1(0.0)
        xn, x2n, delta = admm_step(zero, x2, ident, ident, 1.0)
        assert delta == 0.0
        assert np.array_equal(xn["x"], zero["x"])
        assert np.array_equal(x2n["x"], x2["x"])

    def test_two_point_drift(self):
        p0 = point_projector(0.0)
        p1 = point_projector(1.0)
        x = sv1(0.0)
        x2 = sv1(0.5)
        for _ in range(3):
            x, x2, delta = admm_step(x, x2, p0, p1, 0.7)
            assert delta == 1.0

    def test_matches_rrr_on_affine_pair(self):
        # for two fixed points the delta sequences of ADMM (alpha=1) and
        # RRR (beta=1) coincide
        p0 = point_projector(-0.25)
        p1 = point_projector(2.0)
        deltas_rrr = []
        x = sv1(0.3)
        for _ in range(5):
            x, d = rrr_step(x, p0, p1, 1.0)
            deltas_rrr.append(d)
        deltas_admm = []
        xa, x2 = sv1(0.0), sv1(0.3)
        for _ in range(5):
            xa, x2, d = admm_step(xa, x2, p0, p1, 1.0)
            deltas_admm.append(d)
        assert deltas_rrr == deltas_admm


class TestSolve:
    def test_feasible_initial_point_solves_at_zero(self):
        ident = lambda sv: sv
        pair = ProjectionPair(ident, ident)
        out = solve(pair, sv1(0.4), SolveConfig(max_iter=10))
        assert out.status == "solved"
        assert out.iterations == 0
        assert out.final_delta == 0.0

    def test_max_iter_zero(self):
        pair = ProjectionPair(point_projector(0.0), point_projector(1.0))
        out = solve(pair, sv1(0.3), SolveConfig(max_iter=0, delta_tol=0.0))
        assert out.status == "max_iter"
        assert out.iterations == 0
        assert abs(out.final_delta - 1.0) <= 1e-12

    def test_infeasible_two_point_runs_to_cap(self):
        pair = ProjectionPair(point_projector(0.0), point_projector(1.0))
        out = solve(pair, sv1(0.3), SolveConfig(max_iter=50, delta_tol=0.0))
        assert out.status == "max_iter"
        assert out.iterations == 50
        assert abs(out.final_delta - 1.0) <= 1e-12

    def test_determinism(self):
        def noisy_projector(sv):
            return sv.replace(x=np.rint(sv["x"]))

        def contract(sv):
            return sv.replace(x=0.8 * sv["x"] + 0.1)

        pair = ProjectionPair(noisy_projector, contract)
        cfg = SolveConfig(max_iter=40, delta_tol=0.0, trace_every=1)
        outs = [solve(pair, sv1(5.4321), cfg) for _ in range(2)]
        t0 = [(r.iter, r.delta) for r in outs[0].trace]
        t1 = [(r.iter, r.delta) for r in outs[1].trace]
        assert t0 == t1
        assert np.array_equal(outs[0].solution["x"], outs[1].solution["x"])

    def test_delta_recompute_from_logged_components(self):
        captured = {}

        def p1(sv):
            out = sv.replace(x=np.maximum(sv["x"], 0.0))
            captured["x1"] = out
            return out

        def p2(sv):
            out = sv.replace(x=np.rint(sv["x"]))
            captured["x2"] = out
            return out

        pair = ProjectionPair(p1, p2)
        out = solve(pair, sv1(-0.7), SolveConfig(max_iter=1, delta_tol=0.0))
        want = np.linalg.norm(captured["x1"].flatten() - captured["x2"].flatten())
        assert abs(out.final_delta - want) <= 1e-12

    def test_trace_schedule_counts(self):
        pair = ProjectionPair(point_projector(0.0), point_projector(1.0))
        for every, n in ((1, 10), (3, 10), (4, 9)):
            out = solve(pair, sv1(0.3),
                        SolveConfig(max_iter=n, delta_tol=0.0, trace_every=every))
            want = int(np.ceil(n / every)) + 1
            assert len(out.trace) == want
            assert out.trace[-1].iter == n

    def test_verifier_termination_and_solution(self):
        def verifier(img1, img2):
            if img1["x"][0, 0] >= 0.9:
                return img1
            return None

        grow = lambda sv: sv.replace(x=sv["x"] + 0.3)
        pair = ProjectionPair(grow, lambda sv: sv)
        out = solve(pair, sv1(0.0), SolveConfig(max_iter=100, delta_tol=0.0), verifier=verifier)
        assert out.status == "solved"
        assert out.solution["x"][0, 0] >= 0.9

    def test_swap_projections_changes_trajectory(self):
        p1 = lambda sv: sv.replace(x=np.maximum(sv["x"], 0.0))
        p2 = lambda sv: sv.replace(x=sv["x"] - 1.0)
        pair = ProjectionPair(p1, p2)
        cfg = SolveConfig(max_iter=5, delta_tol=0.0, trace_every=1)
        a = solve(pair, sv1(0.5), cfg)
        b = solve(pair, sv1(0.5), SolveConfig(max_iter=5, delta_tol=0.0, trace_every=1,
                                              swap_projections=True))
        assert [r.delta for r in a.trace] != [r.delta for r in b.trace]

    def test_projection_failure_reported(self):
        def bad(sv):
            raise ProjectionFailed("boom")

        pair = ProjectionPair(bad, lambda sv: sv)
        out = solve(pair, sv1(0.0), SolveConfig(max_iter=5))
        assert out.status == "failed"
        assert "boom" in out.message

    def test_stall_restart_triggers(self):
        pair = ProjectionPair(point_projector(0.0), point_projector(1.0))
        hits = []

        def reinit(restart_idx):
            hits.append(restart_idx)
            return sv1(7.0)

        cfg = SolveConfig(max_iter=2500, delta_tol=0.0, stall_restart=True)
        out = solve(pair, sv1(0.3), cfg, reinit=reinit)
        assert out.restarts >= 1
        assert hits


class TestInitRandom:
    def test_deterministic(self):
        schema = (("a", (2, 2)), ("b", (3, 1)))
        x = init_random(schema, 42)
        y = init_random(schema, 42)
        for n in ("a", "b"):
            assert np.array_equal(x[n], y[n])
        z = init_random(schema, 43)
        assert not np.array_equal(x["a"], z["a"])

    def test_samplers(self):
        schema = (("a", (50, 50)),)
        u = init_random(schema, 0, "uniform01")
        assert u["a"].min() >= 0 and u["a"].max() < 1
        r = init_random(schema, 0, "uniform_range", 0.0, 25.0)
        assert r["a"].min() >= 0 and r["a"].max() < 25
        g = init_random(schema, 0, "gaussian")
        assert abs(g["a"].mean()) < 0.1
        with pytest.raises(InvalidInput):
            init_random(schema, 0, "bogus")

    def test_stream_order_is_component_then_row_major(self):
        schema = (("a", (2, 2)), ("b", (1, 2)))
        sv = init_random(schema, 7, "uniform01")
        flat = np.random.default_rng(7).random(6)
        assert np.array_equal(sv["a"].ravel(), flat[:4])
        assert np.array_equal(sv["b"].ravel(), flat[4:])


class TestFlowField:
    def test_solution_nodes_are_zero(self):
        from matsplit.problems import int2d_point_projections
        hyp, rnd = int2d_point_projections(15, T=20)
        field = flow_field(hyp, rnd, 2.0, 6.0, 2.0, 6.0, 1.0)
        assert field.shape == (25, 4)
        for x, y, vx, vy in field:
            speed = np.hypot(vx, vy)
            if (round(x), round(y)) in ((3, 5), (5, 3)):
                assert speed <= 1e-9
            else:
                assert speed > 1e-6

    def test_c16_solution_node(self):
        from matsplit.problems import int2d_point_projections
        hyp, rnd = int2d_point_projections(16, T=20)
        field = flow_field(hyp, rnd, 4.0, 4.0, 4.0, 4.0, 1.0)
        assert field.shape == (1, 4)
        assert np.hypot(field[0, 2], field[0, 3]) <= 1e-12

    def test_nan_sentinel_for_failing_projection(self):
        def bad(pts):
            if pts.shape[0] > 1:
                raise RuntimeError("vectorized failure")
            if abs(pts[0, 0] - 1.0) < 1e-9:
                raise RuntimeError("node failure")
            return pts

        ident = lambda pts: pts
        field = flow_field(bad, ident, 0.0, 2.0, 0.0, 0.0, 1.0)
        assert field.shape == (3, 4)
        bad_row = field[np.isclose(field[:, 0], 1.0)][0]
        assert np.isnan(bad_row[2]) and np.isnan(bad_row[3])
        good = field[~np.isclose(field[:, 0], 1.0)]
        assert np.all(np.isfinite(good))

    def test_step_validation(self):
        with pytest.raises(InvalidInput):
            flow_field(lambda p: p, lambda p: p, 0, 1, 0, 1, 0.0)


def test_solve_config_validation():
    with pytest.raises(InvalidInput):
        SolveConfig(beta=2.0)
    with pytest.raises(InvalidInput):
        SolveConfig(algorithm="admm", alpha=0.0)
    with pytest.raises(InvalidInput):
        SolveConfig(algorithm="sgd")
    with pytest.raises(InvalidInput):
        SolveConfig(trace_every=0)
