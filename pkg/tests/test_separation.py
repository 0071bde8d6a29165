from __future__ import annotations

import numpy as np
import pytest

from liftrules.lifting import AssumptionError, equidistant_breakpoints, fold
from liftrules.separation import (Rectangle, RectangleTable, cut_loop, d_prime, l1_distance, make_cut,
                                  rect_from_indices, separate_bruteforce, separate_symmetric, square_cuts)
from liftrules.supports import NormBall, SupportFamily, dbar_norm_ball, eta_norm_ball


def sym_grid(I=3, count=3):
    return equidistant_breakpoints(-np.ones(I), np.ones(I), count)


def test_d_prime_is_exact_on_lifted_points():
    grid = sym_grid()
    rng = np.random.default_rng(0)
    lo, hi = np.array([0, 1, 2]), np.array([3, 2, 4])
    rect = rect_from_indices(grid, lo, hi)
    for th in rng.uniform(-1, 1, (30, 3)):
        assert d_prime(grid, fold(grid, th), rect) == pytest.approx(l1_distance(th, rect), abs=1e-12)


def test_cut_evaluates_to_d_prime_minus_dbar():
    grid = sym_grid()
    rect = Rectangle([-0.5, -0.5, 0.0], [0.5, 1.0, 0.5])
    cut = make_cut(rect, 0, grid, 0.7)
    p = fold(grid, [0.9, -0.8, 0.2])
    assert cut.evaluate(p) == pytest.approx(d_prime(grid, p, rect) - 0.7)
    assert cut.evaluate(2 * p, 2.0) == pytest.approx(2 * cut.evaluate(p))


def test_negative_dbar_is_rejected():
    grid = sym_grid()
    with pytest.raises(RuntimeError):
        make_cut(Rectangle([-1, -1, -1], [1, 1, 1]), 0, grid, -1.0)


def test_rectangle_order_checked():
    with pytest.raises(Exception):
        Rectangle([1.0], [0.0])


def test_square_cuts_are_nested_squares():
    squares = square_cuts(sym_grid(2, 3))
    assert [tuple(r.zplus) for r in squares] == [(0.5, 0.5), (0.0, 0.0)]
    assert all(np.array_equal(r.zminus, -r.zplus) for r in squares)


def test_square_cuts_need_symmetric_grid():
    with pytest.raises(AssumptionError):
        square_cuts(equidistant_breakpoints([-1, -1], [1, 2], 3))


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_symmetric_separation_matches_bruteforce(p):
    grid = sym_grid(3, 3)
    ball = NormBall(p, 1.0, np.zeros(3))
    eta = eta_norm_ball(p, 1.0, 3)
    table = RectangleTable.build(grid, lambda zm, zp: dbar_norm_ball(ball, zm, zp), vectorized=True)
    rng = np.random.default_rng(1)
    for _ in range(25):
        w = rng.dirichlet(np.ones(3))
        pts = rng.uniform(-1, 1, (3, 3))
        lifted = w @ np.array([fold(grid, t) for t in pts])
        fast = separate_symmetric(grid, lifted, eta)
        slow = separate_bruteforce(grid, lifted, table=table)
        assert fast.violation == pytest.approx(max(slow.violation, 0.0), abs=1e-9)


def test_symmetric_separation_rejects_asymmetric_grid():
    grid = equidistant_breakpoints([-1, -1], [1, 2], 3)
    with pytest.raises(AssumptionError):
        separate_symmetric(grid, np.zeros(grid.lifted_dim), eta_norm_ball(2, 1.0, 2))


def test_folded_ball_points_are_not_separated():
    grid = sym_grid(3, 5)
    eta = eta_norm_ball(2, 1.0, 3)
    rng = np.random.default_rng(2)
    for th in rng.normal(size=(20, 3)):
        th /= max(1.0, np.linalg.norm(th))
        assert separate_symmetric(grid, fold(grid, th), eta).violation <= 1e-9


class _FakeSolution:
    def __init__(self, p):
        self.ok, self.objective, self.p = True, 0.0, p

    def blocks(self):
        yield 0, 0, self.p, 1.0


class _FakeProgram:
    def __init__(self, p):
        self.p, self.cuts, self.calls = p, [], 0

    def solve(self):
        self.calls += 1
        return _FakeSolution(self.p)

    def add_cut(self, cut):
        self.cuts.append(cut)
        return True


def test_cut_loop_with_infinite_tolerance_adds_nothing():
    grid = sym_grid(2, 3)
    fam = SupportFamily([NormBall(2, 1.0, np.zeros(2))])
    prog = _FakeProgram(np.ones(grid.lifted_dim))
    res = cut_loop(prog, fam, grid, tol=np.inf)
    assert res.cuts == [] and res.rounds == 1 and prog.calls == 1


def test_cut_loop_stops_when_no_new_cut():
    grid = sym_grid(2, 3)
    fam = SupportFamily([NormBall(2, 1.0, np.zeros(2))])
    # corner of the box folded: outside the unit disc, so one cut is found
    prog = _FakeProgram(fold(grid, [1.0, 1.0]))
    prog.add_cut = lambda cut: (prog.cuts.append(cut) or len(prog.cuts) == 1)
    res = cut_loop(prog, fam, grid, tol=1e-9, max_rounds=5)
    assert len(res.cuts) == 1 and res.converged
