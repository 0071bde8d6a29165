"""Acceptance checks, one test per criterion, each against an independent oracle."""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest
from scipy.optimize import linprog

from liftrules import bench_inventory as bi
from liftrules.cli import oracle_trials, random_incumbents
from liftrules.lifting import equidistant_breakpoints, fold, hull_constraints
from liftrules.reformulation import nonanticipativity_mask
from liftrules.separation import d_prime, rect_from_indices
from liftrules.supports import eta_intersection, eta_norm_ball

ROBUST_CONFIGS = [(T, a) for T in (3, 5) for a in (0.0, 0.25)]


@pytest.fixture(scope="module")
def robust_runs():
    """AFF, GLIFTF and LIFTF (both cut modes) on the robust instances, solved once."""
    out = {}
    t0 = time.perf_counter()
    for T, a in ROBUST_CONFIGS:
        inst = bi.InventoryInstance.robust(T, a)
        for pol in ("AFF", "GLIFT1", "GLIFT3", "GLIFTF", "LIFT1", "LIFT3", "LIFTF"):
            out[(T, a, pol)] = bi.solve_robust(inst, pol).objective
        out[(T, a, "LIFTF-square")] = bi.solve_robust(inst, "LIFTF", cut_mode="square_apriori").objective
    out["seconds"] = time.perf_counter() - t0
    return out


def rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-12)


# ---------------------------------------------------------------------------

def test_symmetric_separation_matches_enumeration():
    t0 = time.perf_counter()
    nontrivial = 0
    for I, J, p in itertools.product((2, 3, 4), (2, 4), (1.0, 2.0, math.inf)):
        matches, worst = oracle_trials(I, J, p, 100, seed=I * 100 + J * 10 + int(min(p, 9)))
        assert matches == 100, (I, J, p, worst)
        assert worst <= 1e-9
        nontrivial += 1
    assert nontrivial == 18
    assert time.perf_counter() - t0 < 60


def test_square_cuts_suffice_on_full_grid(robust_runs):
    for T, a in ROBUST_CONFIGS:
        sq = robust_runs[(T, a, "LIFTF-square")]
        ex = robust_runs[(T, a, "LIFTF")]
        assert rel(sq, ex) <= 1e-7, (T, a, sq, ex)


def test_full_grid_without_cuts_equals_affine(robust_runs):
    for T, a in ROBUST_CONFIGS:
        g = robust_runs[(T, a, "GLIFTF")]
        f = robust_runs[(T, a, "AFF")]
        assert rel(g, f) <= 1e-6, (T, a, g, f)
    assert robust_runs["seconds"] < 120


def test_cuts_tighten_robust_policies(robust_runs):
    # cuts never hurt
    for T, a in ROBUST_CONFIGS:
        for tag in ("1", "3", "F"):
            assert robust_runs[(T, a, "LIFT" + tag)] <= robust_runs[(T, a, "GLIFT" + tag)] + 1e-8
    # strict improvement on the larger uncorrelated instance
    g = robust_runs[(5, 0.0, "GLIFTF")]
    f = robust_runs[(5, 0.0, "LIFTF")]
    assert f <= g - 1e-4 * abs(g), f"LIFTF {f!r} vs GLIFTF {g!r}: relative gain {(g - f) / g:.2e}"


def test_lifted_distance_equals_box_distance():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        I = int(rng.integers(1, 5))
        count = int(rng.integers(1, 5))
        lo_b = -rng.uniform(0.5, 2.0, I)
        hi_b = rng.uniform(0.5, 2.0, I)
        grid = equidistant_breakpoints(lo_b, hi_b, count)
        theta = lo_b + (hi_b - lo_b) * rng.random(I)
        lo = rng.integers(0, count + 2, I)
        hi = np.array([rng.integers(l, count + 2) for l in lo])
        rect = rect_from_indices(grid, lo, hi)
        # independent hinge form of the l1 distance from a point to a box
        expect = np.sum(np.maximum(rect.zminus - theta, 0.0) + np.maximum(theta - rect.zplus, 0.0))
        assert abs(d_prime(grid, fold(grid, theta), rect) - expect) <= 1e-9


def _vertex_hull_member(V: np.ndarray, p: np.ndarray) -> bool:
    """Is ``p`` a convex combination of the rows of ``V``? (feasibility LP)"""
    n = V.shape[0]
    A_eq = np.vstack([V.T, np.ones((1, n))])
    b_eq = np.concatenate([p, [1.0]])
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def test_hull_rows_match_vertex_hull():
    rng = np.random.default_rng(11)
    ones = np.ones(2)
    grid = equidistant_breakpoints(-ones, ones, 1)
    disagreements = 0
    inside_seen = outside_seen = 0
    for _ in range(20):
        a = rng.uniform(-1, 1, 2)
        b = rng.uniform(-1, 1, 2)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        # per-coordinate vertex curves, then their product
        per_dim = []
        for i in range(2):
            pts = [lo[i]] + [z for z in grid.breakpoints[i] if lo[i] < z < hi[i]] + [hi[i]]
            per_dim.append(pts)
        thetas = np.array(list(itertools.product(*per_dim)))
        V = fold(grid, thetas)
        hull = hull_constraints(grid, lo, hi)
        box_lo, box_hi = V.min(axis=0), V.max(axis=0)
        inner = rng.dirichlet(np.ones(V.shape[0]), 100) @ V
        outer = box_lo + (box_hi - box_lo) * rng.random((100, V.shape[1]))
        for p in np.vstack([inner, outer]):
            mine = bool(hull.contains(p[None, :])[0])
            truth = _vertex_hull_member(V, p)
            disagreements += mine != truth
            inside_seen += truth
            outside_seen += not truth
    assert disagreements == 0
    assert inside_seen > 0 and outside_seen > 0


def test_extracted_policy_is_dual_optimal_and_feasible():
    inst = bi.InventoryInstance.stochastic(3, 0.25)
    res = bi.solve_stochastic(inst, "LIFTF", moment_samples=100_000, seed=3)
    assert res.status == "optimal"
    value = res.rule.expected_objective(res.program.moments)
    assert rel(value, res.objective) <= 1e-6
    rng = np.random.default_rng(8)
    zeta = np.vstack([inst.sample_shocks(rng, 5000), _sphere(rng, 5000, inst.T)])
    psi = bi.ar_forward(zeta, inst.mu, inst.nu, inst.alpha)
    prob = res.program.problem
    x = res.rule.evaluate(psi) - prob.dec_offset
    blk = prob.blocks[0]
    lhs = x @ blk.A.T
    rhs = blk.rhs(psi)
    scale = np.maximum(1.0, np.abs(rhs))
    assert np.max((lhs - rhs) / scale) <= 1e-6


def _sphere(rng, n, dim):
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _simplex_grid(I: int, res: int) -> np.ndarray:
    pts = [c for c in itertools.product(range(res + 1), repeat=I - 1) if sum(c) <= res]
    return np.array([list(c) + [res - sum(c)] for c in pts], float) / res


def _gauge(d: np.ndarray, norms) -> np.ndarray:
    return np.max(np.stack([np.linalg.norm(d, p, axis=1) for p in norms]), axis=0)


def _eta_bruteforce(norms, I: int, rng) -> np.ndarray:
    """Largest top-i l1 mass over boundary points reached along many directions."""
    dirs = np.vstack([_simplex_grid(I, 60 if I == 4 else 120), np.abs(rng.standard_normal((50_000, I)))])
    dirs = dirs[np.linalg.norm(dirs, 1, axis=1) > 0]
    pts = dirs / _gauge(dirs, norms)[:, None]
    top = -np.sort(-np.abs(pts), axis=1)
    return np.concatenate([[0.0], np.cumsum(top, axis=1).max(axis=0)])


def test_eta_formula_matches_sampling():
    rng = np.random.default_rng(2)
    ps = (1.0, 1.5, 2.0, 3.0, math.inf)
    for I in (2, 3, 4):
        for p in ps:
            eta = eta_norm_ball(p, 1.0, I)
            bf = _eta_bruteforce([p], I, rng)
            assert np.all(bf <= eta.values + 1e-9), (p, I)
            assert np.max(eta.values - bf) <= 1e-3, (p, I, eta.values, bf)
            assert eta.has_nonincreasing_differences()
        for p1, p2 in itertools.combinations(ps, 2):
            eta = eta_intersection([eta_norm_ball(p1, 1.0, I), eta_norm_ball(p2, 1.0, I)])
            bf = _eta_bruteforce([p1, p2], I, rng)
            assert np.all(bf <= eta.values + 1e-9), (p1, p2, I)
            assert np.max(eta.values - bf) <= 1e-3, (p1, p2, I)
            assert eta.has_nonincreasing_differences()


def test_stochastic_improvement_ordering():
    cfg = bi.ExperimentConfig(kind="stochastic", T_values=(5,), alphas=(0.0, 0.25, 0.5),
                              policies=("AFF", "LIFT1", "LIFT3", "LIFTF"), instances=20,
                              moment_samples=50_000, eval_paths=200, seed=1)
    report = bi.run_experiment("stochastic", cfg)
    for a in cfg.alphas:
        r = {row.policy: row for row in report.rows if row.alpha == a}
        assert all(row.status == "optimal" for row in r.values())
        assert r["LIFTF"].relative <= r["LIFT3"].relative + 1e-8
        assert r["LIFT3"].relative <= r["LIFT1"].relative + 1e-8
        assert r["LIFT1"].relative <= 1.0 + 1e-8


def _saa_oracle(inst, policy: str, samples) -> float:
    """Sample-average LP over lifted affine rules, stated in primal form."""
    problem = bi.make_inventory(inst, "data_driven")
    lifting, _ = bi.data_driven_lifting(inst, samples, 0.0, policy)
    mask = nonanticipativity_mask(problem, lifting)
    ent = np.argwhere(mask)
    n, m = problem.n, len(ent)
    blk = problem.blocks[0]
    G = samples.shape[0]
    L = lifting.lift(samples)
    nv = m + n + G  # X entries, x0, per-sample cost epigraphs
    rows, rhs = [], []
    for g in range(G):
        M = np.zeros((blk.rows, nv))
        M[:, :m] = blk.A[:, ent[:, 0]] * L[g, ent[:, 1]]
        M[:, m:m + n] = blk.A
        rows.append(M)
        rhs.append(blk.rhs(samples[g]))
        c = np.zeros((1, nv))
        c[0, :m] = problem.c0[ent[:, 0]] * L[g, ent[:, 1]]
        c[0, m:m + n] = problem.c0
        c[0, m + n + g] = -1.0
        rows.append(c)
        rhs.append([-problem.offset_cost()])
    obj = np.zeros(nv)
    obj[m + n:] = 1.0 / G
    res = linprog(obj, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=(None, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def test_data_driven_properties():
    inst = bi.InventoryInstance.data_driven(5, 0.25)
    samples = inst.sample_demands(np.random.default_rng(21), 10)
    grid = (0.0, 0.1, 1.0, 10.0)
    for pol in ("AFF", "LIFTF"):
        vals = [bi.solve_data_driven(inst, pol, samples, e, backend="clarabel").objective for e in grid]
        assert all(np.isfinite(vals))
        assert all(b >= a - 1e-7 * max(1.0, abs(a)) for a, b in zip(vals, vals[1:])), (pol, vals)
        saa = _saa_oracle(inst, pol, samples)
        assert rel(vals[0], saa) <= 1e-6, (pol, vals[0], saa)
    first = bi.cross_validate(inst, grid, samples, folds=5, seed=4, policy="AFF")
    second = bi.cross_validate(inst, grid, samples, folds=5, seed=4, policy="AFF")
    assert first == second


def test_solve_time_grows_with_breakpoints():
    inst = bi.InventoryInstance.stochastic(5, 0.25)
    order = ("AFF", "GLIFT1", "GLIFT3", "GLIFTF", "LIFT1", "LIFT3", "LIFTF")
    times = {p: [] for p in order}
    for run in range(5):
        for p in order:
            times[p].append(bi.solve_stochastic(inst, p, moment_samples=20_000, seed=run).seconds)
    med = {p: float(np.median(v)) for p, v in times.items()}
    for group in (("AFF", "GLIFT1", "GLIFT3", "GLIFTF"), ("AFF", "LIFT1", "LIFT3", "LIFTF")):
        for a, b in zip(group, group[1:]):
            assert med[a] <= med[b], (a, b, med)
