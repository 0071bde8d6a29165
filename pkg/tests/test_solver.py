from __future__ import annotations

import numpy as np
import pytest

from liftrules.solver import (CapabilityError, ProgramBuilder, SolveRequest, bundled_lp_solve, dump_triplets,
                              load_triplets, residuals, resolve_backend, solve)

LP_BACKENDS = ("bundled", "highs", "clarabel")


def small_lp(rhs=(4.0, 6.0)):
    """max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x - y == 0 (free y)."""
    pb = ProgramBuilder()
    x = pb.add_vars("x", 1, 0.0)
    y = pb.add_vars("y", 1, -np.inf)
    pb.set_objective([x.start, y.start], [3.0, 2.0])
    pb.add_rows("cap", "le", [0, 0, 1, 1], [x.start, y.start, x.start, y.start], [1, 1, 1, 3], list(rhs))
    pb.add_rows("tie", "eq", [0, 0], [x.start, y.start], [1, -1], [0.0])
    return pb.build("max", "small")


@pytest.mark.parametrize("backend", LP_BACKENDS)
def test_small_lp(backend):
    res = solve(SolveRequest(small_lp(), backend))
    assert res.ok
    assert res.objective == pytest.approx(7.5, abs=1e-7)
    assert np.allclose(res.x, [1.5, 1.5], atol=1e-6)


@pytest.mark.parametrize("backend", LP_BACKENDS)
def test_duals_are_sensitivities(backend):
    base = solve(SolveRequest(small_lp(), backend))
    h = 1e-4
    bumped = solve(SolveRequest(small_lp((4.0, 6.0 + h)), backend))
    assert base.duals["cap"][1] == pytest.approx((bumped.objective - base.objective) / h, abs=1e-4)
    assert base.duals["cap"][0] == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("backend", LP_BACKENDS)
def test_infeasible_and_unbounded(backend):
    pb = ProgramBuilder()
    x = pb.add_vars("x", 1)
    pb.set_objective([x.start], [1.0])
    pb.add_rows("r", "le", [0], [x.start], [1.0], [-1.0])
    assert solve(SolveRequest(pb.build("max"), backend)).status == "infeasible"
    pb = ProgramBuilder()
    x = pb.add_vars("x", 1)
    pb.set_objective([x.start], [1.0])
    pb.add_rows("r", "le", [0], [x.start], [-1.0], [1.0])
    assert solve(SolveRequest(pb.build("max"), backend)).status == "unbounded"


def soc_program():
    """max x1 + x2 s.t. ||(x1, x2)|| <= 1 written as (1, x1, x2) in the cone."""
    pb = ProgramBuilder()
    x = pb.add_vars("x", 2, -np.inf)
    pb.set_objective([x.start, x.start + 1], [1.0, 1.0])
    # rows: b - A x in K  ->  (1, x1, x2): A = [[0,0],[-1,0],[0,-1]], b = [1,0,0]
    pb.add_rows("ball", "soc", [1, 2], [x.start, x.start + 1], [-1.0, -1.0], [1.0, 0.0, 0.0], sizes=[3])
    return pb.build("max")


def test_second_order_cone():
    res = solve(SolveRequest(soc_program(), "clarabel"))
    assert res.ok and res.objective == pytest.approx(np.sqrt(2), abs=1e-7)
    assert resolve_backend(soc_program(), "auto") == "clarabel"


@pytest.mark.parametrize("backend", ["bundled", "highs"])
def test_cone_capability_checked(backend):
    with pytest.raises(CapabilityError):
        solve(SolveRequest(soc_program(), backend))


def test_triplet_roundtrip():
    prog = small_lp()
    again = load_triplets(dump_triplets(prog))
    assert dump_triplets(again) == dump_triplets(prog)
    assert bundled_lp_solve(again).objective == pytest.approx(7.5)


def test_residuals_of_optimum():
    res = solve(SolveRequest(small_lp(), "highs"))
    assert residuals(small_lp(), res.x) <= 1e-8


def test_unknown_backend():
    with pytest.raises(ValueError):
        resolve_backend(small_lp(), "nope")
