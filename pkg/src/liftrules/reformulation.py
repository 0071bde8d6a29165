"""Dual conic programs for lifted affine decision rules.

For constraint blocks ``A_g x(psi) <= b_g(psi)`` over subsets ``U_g`` and an
objective ``E[c(psi)^T x(psi)]``, the affine rule ``x = X L(psi) + x0`` in
lifted space is optimized through its dual::

    max  -sum_{g,k} [ b_gk(R(p_gk)) + (s_gk - 1) b_gk(R(0)) ]
    s.t. sum_{g,k} A_gk^T p_gk^T = -E[c(R(xi')) xi'^T]   (allowed entries of X)
         sum_{g,k} s_gk A_gk^T   = -E[c(R(xi'))]
         p_gk in s_gk * PsiBar_g,  s_gk >= 0

Membership in the scaled lifted support uses the hull rows of the folded
bounding box, the conic rows of the embedded support applied to
``s * lower + S p`` and any distance cuts. The affine rule is recovered
from the multipliers of the two moment blocks.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .lifting import LiftingOperator, StructuralError, hull_constraints
from .separation import Cut
from .solver import ConicProgram, ProgramBuilder, RowBlock, SolveOptions, SolveRequest, SolveResult, solve
from .supports import Box, SupportFamily, conic_rows


@dataclass
class ConstraintBlock:
    """Rows ``A x <= b0 + B psi``.

    ``lazy`` flags rows expected to be slack; the dual program leaves them
    out until the extracted rule is found to violate them.
    """

    A: np.ndarray
    b0: np.ndarray
    B: np.ndarray
    lazy: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.b0 = np.asarray(self.b0, float).reshape(-1)
        self.B = np.atleast_2d(np.asarray(self.B, float))
        if not self.A.shape[0] == self.b0.size == self.B.shape[0]:
            raise StructuralError("constraint block row counts differ")
        self.lazy = np.zeros(self.rows, bool) if self.lazy is None else np.asarray(self.lazy, bool).reshape(-1)
        if self.lazy.size != self.rows:
            raise StructuralError("lazy flags do not match the rows")

    def extended(self, A_row, b0_val: float, B_row) -> "ConstraintBlock":
        """Copy with one extra (non-lazy) row."""
        return ConstraintBlock(np.vstack([self.A, A_row]), np.concatenate([self.b0, [b0_val]]),
                               np.vstack([self.B, B_row]), np.concatenate([self.lazy, [False]]))

    @property
    def rows(self) -> int:
        return self.b0.size

    def rhs(self, psi) -> np.ndarray:
        return self.b0 + np.asarray(psi, float) @ self.B.T


@dataclass
class MultistageProblem:
    """``min E[c(psi)^T x(psi)]`` subject to ``A_g x(psi) <= b_g(psi)`` on ``U_g``.

    ``dec_stage[d] = 0`` marks a here-and-now decision; a decision of stage
    ``t`` may read uncertainty revealed at stages ``<= t``. The modelled
    variables are shifted by the constant ``dec_offset``: the implemented
    decision is ``dec_offset + x``, and ``blocks``/``c0`` refer to ``x``.
    Centring large here-and-now quantities this way keeps the dual's
    constants small.
    """

    dec_stage: np.ndarray
    psi_stage: np.ndarray
    c0: np.ndarray
    C: np.ndarray
    blocks: List[ConstraintBlock]
    dec_names: List[str] = field(default_factory=list)
    dec_offset: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.dec_stage = np.asarray(self.dec_stage, int).reshape(-1)
        self.psi_stage = np.asarray(self.psi_stage, int).reshape(-1)
        n, K = self.dec_stage.size, self.psi_stage.size
        self.c0 = np.asarray(self.c0, float).reshape(-1)
        self.C = np.zeros((n, K)) if self.C is None else np.atleast_2d(np.asarray(self.C, float))
        if self.c0.size != n or self.C.shape != (n, K):
            raise StructuralError("objective dimensions do not match the decisions")
        for blk in self.blocks:
            if blk.A.shape[1] != n or blk.B.shape[1] != K:
                raise StructuralError("constraint block does not match decision/uncertainty dims")
        if not self.dec_names:
            self.dec_names = [f"x{d}" for d in range(n)]
        self.dec_offset = np.zeros(n) if self.dec_offset is None else np.asarray(self.dec_offset, float).reshape(-1)
        if self.dec_offset.size != n:
            raise StructuralError("decision offset does not match the decisions")

    @property
    def n(self) -> int:
        return self.dec_stage.size

    @property
    def K(self) -> int:
        return self.psi_stage.size

    @property
    def T(self) -> int:
        return int(max(self.dec_stage.max(initial=0), self.psi_stage.max(initial=0)))

    def cost(self, psi) -> np.ndarray:
        return self.c0 + np.asarray(psi, float) @ self.C.T

    def with_epigraphs(self, count: int) -> "MultistageProblem":
        """Append ``count`` here-and-now epigraph variables (zero cost)."""
        if np.any(self.C != 0):
            raise StructuralError("epigraph reformulations need an uncertainty-free cost vector")
        n = self.n
        blocks = [ConstraintBlock(np.hstack([b.A, np.zeros((b.rows, count))]), b.b0, b.B, b.lazy)
                  for b in self.blocks]
        return MultistageProblem(np.concatenate([self.dec_stage, np.zeros(count, int)]), self.psi_stage,
                                 np.zeros(n + count), np.zeros((n + count, self.K)), blocks,
                                 self.dec_names + [f"tau{g}" for g in range(count)],
                                 np.concatenate([self.dec_offset, np.zeros(count)]))

    def offset_cost(self) -> float:
        """Cost of the decision offset; the epigraph rows must absorb it."""
        if np.any(self.C != 0) and np.any(self.dec_offset != 0):
            raise StructuralError("offsets need an uncertainty-free cost vector")
        return float(self.c0 @ self.dec_offset)


def nonanticipativity_mask(problem: MultistageProblem, lifting: LiftingOperator) -> np.ndarray:
    """Boolean (n, N') matrix of entries of X a decision may use."""
    ls = lifting.lifted_stage
    ds = problem.dec_stage
    return (ds[:, None] >= 1) & (ls[None, :] <= ds[:, None])


@dataclass
class MomentData:
    mean_lifted: np.ndarray
    cross: np.ndarray
    mean_cost: np.ndarray
    sample_count: int
    seed: Optional[int]


def estimate_moments(sampler: Callable[[np.random.Generator, int], np.ndarray], lifting: LiftingOperator,
                     problem: MultistageProblem, n: int = 100_000, seed: int = 0,
                     chunk: int = 20_000) -> MomentData:
    """Monte Carlo moments of the lifted distribution.

    ``sampler(rng, m)`` returns ``m`` draws of ``psi`` as rows.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    N = lifting.lifted_dim
    s_lift = np.zeros(N)
    s_cross = np.zeros((problem.n, N))
    s_cost = np.zeros(problem.n)
    done = 0
    const_cost = not np.any(problem.C)
    while done < n:
        m = min(chunk, n - done)
        psi = np.asarray(sampler(rng, m), float).reshape(m, problem.K)
        xi = lifting.lift(psi)
        s_lift += xi.sum(axis=0)
        if not const_cost:
            c = problem.cost(lifting.retract(xi))
            s_cross += c.T @ xi
            s_cost += c.sum(axis=0)
        done += m
    mean_lifted = s_lift / n
    if const_cost:
        cross = np.outer(problem.c0, mean_lifted)
        mean_cost = problem.c0.copy()
    else:
        cross = s_cross / n
        mean_cost = s_cost / n
    return MomentData(mean_lifted, cross, mean_cost, n, seed)


def point_moments(psi0, lifting: LiftingOperator, problem: MultistageProblem) -> MomentData:
    xi = lifting.lift(np.asarray(psi0, float))
    c = problem.cost(np.asarray(psi0, float))
    return MomentData(xi, np.outer(c, xi), c, 1, None)


@dataclass
class PiecewiseAffinePolicy:
    X: np.ndarray
    x0: np.ndarray
    lifting: LiftingOperator
    mask: np.ndarray
    dec_names: List[str] = field(default_factory=list)
    offset: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if np.any(self.X[~self.mask] != 0):
            raise StructuralError("policy reads uncertainty it has not observed")
        if self.offset is None:
            self.offset = np.zeros(self.x0.size)

    def evaluate(self, psi) -> np.ndarray:
        """Implemented decisions, including the problem's decision offset."""
        return self.lifting.lift(psi) @ self.X.T + self.x0 + self.offset

    def expected_objective(self, moments: MomentData) -> float:
        """Expected cost of the modelled variables (the offset's cost is a separate constant)."""
        return float(np.sum(self.X * moments.cross) + self.x0 @ moments.mean_cost)


@dataclass
class DualSolution:
    result: SolveResult
    program: "DualProgram"

    @property
    def ok(self) -> bool:
        return self.result.ok

    @property
    def status(self) -> str:
        return self.result.status

    @property
    def objective(self) -> float:
        return self.result.objective

    def blocks(self) -> Iterator[Tuple[int, int, np.ndarray, float]]:
        x = self.result.x
        for (g, k), (ps, si) in self.program.index.items():
            yield g, k, x[ps], float(x[si])


class DualProgram:
    """The dual conic program together with its cut pool.

    Cuts are kept per subset ``g`` and imposed on every row ``k`` of that
    subset.
    """

    def __init__(self, problem: MultistageProblem, lifting: LiftingOperator, family: SupportFamily,
                 moments: MomentData, backend: Optional[str] = None, ball_facets: Optional[int] = None,
                 options: Optional[SolveOptions] = None, label: str = ""):
        if len(problem.blocks) != family.G:
            raise StructuralError("one constraint block per support subset is required")
        if family.dim != lifting.grid.dims:
            raise StructuralError("support family and grid dimensions differ")
        glo, ghi = family.global_bounds
        if np.any(glo < lifting.grid.lower - 1e-9) or np.any(ghi > lifting.grid.upper + 1e-9):
            raise StructuralError("support family exceeds the grid bounds")
        self.problem = problem
        self.lifting = lifting
        self.family = family
        self.moments = moments
        self.backend = backend
        self.ball_facets = ball_facets
        self.options = options or SolveOptions()
        self.label = label
        self.mask = nonanticipativity_mask(problem, lifting)
        self.r0, self.Rm = lifting.retract_affine()
        self.cuts: Dict[int, Dict[tuple, Cut]] = {g: {} for g in range(family.G)}
        self.active = {g: ~blk.lazy for g, blk in enumerate(problem.blocks)}
        self.lazy_checks = 0
        self._build_base()

    # ---------------------------------------------------------------- build
    def _build_base(self) -> None:
        prob, lift, fam = self.problem, self.lifting, self.family
        grid = lift.grid
        N = grid.lifted_dim
        I, K = lift.embedding.dims, lift.embedding.K
        need_u = I != K
        S = grid.sum_matrix().toarray()
        pb = ProgramBuilder()
        self.index: Dict[Tuple[int, int], Tuple[slice, int]] = {}
        obj_cols: List[np.ndarray] = []
        obj_vals: List[np.ndarray] = []
        mx_rows, mx_cols, mx_vals = [], [], []
        mv_rows, mv_cols, mv_vals = [], [], []
        row_of = -np.ones((prob.n, N), dtype=int)
        allowed = np.argwhere(self.mask)
        row_of[allowed[:, 0], allowed[:, 1]] = np.arange(allowed.shape[0])
        self.moment_entries = allowed
        for g in range(fam.G):
            blk = prob.blocks[g]
            hull = hull_constraints(grid, *fam.boxes[g])
            hl = hull.A_le.tocoo()
            he = hull.A_eq.tocoo()
            gamma = blk.B @ self.Rm  # (rows, N)
            beta = blk.b0 + blk.B @ self.r0
            for k in np.nonzero(self.active[g])[0]:
                ps = pb.add_vars(f"p[{g},{k}]", N, 0.0)
                s_sl = pb.add_vars(f"s[{g},{k}]", 1, 0.0)
                si = s_sl.start
                self.index[(g, k)] = (ps, si)
                pc = np.arange(ps.start, ps.stop)
                # hull rows, homogenized
                if hull.b_le.size:
                    nz = np.nonzero(hull.b_le)[0]
                    pb.add_rows(f"hull_le[{g}]", "le",
                                np.concatenate([hl.row, nz]), np.concatenate([pc[hl.col], np.full(nz.size, si)]),
                                np.concatenate([hl.data, -hull.b_le[nz]]), np.zeros(hull.b_le.size))
                if hull.b_eq.size:
                    nz = np.nonzero(hull.b_eq)[0]
                    pb.add_rows(f"hull_eq[{g}]", "eq",
                                np.concatenate([he.row, nz]), np.concatenate([pc[he.col], np.full(nz.size, si)]),
                                np.concatenate([he.data, -hull.b_eq[nz]]), np.zeros(hull.b_eq.size))
                # embedded support rows on s*lower + S p
                skip_support = isinstance(fam.subsets[g], Box) and np.allclose(fam.subsets[g].lower, fam.boxes[g][0]) \
                    and np.allclose(fam.subsets[g].upper, fam.boxes[g][1])
                if not skip_support:
                    conic_rows(pb, fam.subsets[g], pc, si, f"supp[{g}]", coef=S, const=grid.lower,
                               ball_facets=self.ball_facets)
                if need_u:
                    u = pb.add_vars(f"u[{g},{k}]", K, -np.inf)
                    E = lift.embedding.matrix
                    rr, cc = np.nonzero(S)
                    er, ec = np.nonzero(E)
                    shift = grid.lower - lift.embedding.offset
                    nzs = np.nonzero(shift)[0]
                    pb.add_rows(f"range[{g}]", "eq",
                                np.concatenate([rr, er, nzs]),
                                np.concatenate([pc[cc], u.start + ec, np.full(nzs.size, si)]),
                                np.concatenate([S[rr, cc], -E[er, ec], shift[nzs]]), np.zeros(I))
                # objective: -(gamma_k p + beta_k s)
                obj_cols.append(np.concatenate([pc, [si]]))
                obj_vals.append(-np.concatenate([gamma[k], [beta[k]]]))
                # moment rows
                a = blk.A[k]
                for d in np.nonzero(a)[0]:
                    cs = np.nonzero(self.mask[d])[0]
                    if cs.size:
                        mx_rows.append(row_of[d, cs])
                        mx_cols.append(pc[cs])
                        mx_vals.append(np.full(cs.size, a[d]))
                    mv_rows.append(d)
                    mv_cols.append(si)
                    mv_vals.append(a[d])
        M = self.moments
        rhs_x = -M.cross[allowed[:, 0], allowed[:, 1]] if allowed.size else np.zeros(0)
        pb.add_rows("moment_X", "eq",
                    np.concatenate(mx_rows) if mx_rows else np.zeros(0, int),
                    np.concatenate(mx_cols) if mx_cols else np.zeros(0, int),
                    np.concatenate(mx_vals) if mx_vals else np.zeros(0), rhs_x)
        pb.add_rows("moment_x", "eq", mv_rows, mv_cols, mv_vals, -M.mean_cost)
        pb.set_objective(np.concatenate(obj_cols), np.concatenate(obj_vals))
        self.base = pb.build("max", self.label)

    def add_cut(self, cut: Cut) -> bool:
        key = cut.rect.key()
        pool = self.cuts[cut.g]
        if key in pool:
            return False
        pool[key] = cut
        return True

    @property
    def cut_count(self) -> int:
        return sum(len(p) for p in self.cuts.values())

    def program(self) -> ConicProgram:
        rows, cols, vals = [], [], []
        r = 0
        for g, pool in self.cuts.items():
            for cut in pool.values():
                nz = np.nonzero(cut.coeff_psi)[0]
                for k in np.nonzero(self.active[g])[0]:
                    ps, si = self.index[(g, k)]
                    rows.append(np.full(nz.size + 1, r))
                    cols.append(np.concatenate([ps.start + nz, [si]]))
                    vals.append(np.concatenate([cut.coeff_psi[nz], [cut.coeff_s]]))
                    r += 1
        blocks = list(self.base.blocks)
        if r:
            A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(r, self.base.n))
            blocks.append(RowBlock("cuts", "le", A, np.zeros(r)))
        return ConicProgram(self.base.c, blocks, self.base.lb, "max", self.base.var_names, self.label)

    def solve(self) -> DualSolution:
        """Solve; lazily omitted rows violated by the extracted rule are added and the program re-solved."""
        while True:
            res = solve(SolveRequest(self.program(), self.backend, self.options))
            if not res.ok:
                warnings.warn(f"dual program {self.label!r} ended with status {res.status}")
                return DualSolution(res, self)
            sol = DualSolution(res, self)
            if not self._activate_violated(sol):
                return sol
            self._build_base()

    def relaxed_set(self, g: int) -> ConicProgram:
        """Primal description of the lifted set the dual imposes on subset ``g`` (zero objective)."""
        grid, fam, lift = self.lifting.grid, self.family, self.lifting
        N = grid.lifted_dim
        S = grid.sum_matrix().toarray()
        pb = ProgramBuilder()
        xi = pb.add_vars("xi", N, 0.0)
        pc = np.arange(xi.start, xi.stop)
        hull = hull_constraints(grid, *fam.boxes[g])
        if hull.b_le.size:
            hl = hull.A_le.tocoo()
            pb.add_rows("hull_le", "le", hl.row, pc[hl.col], hl.data, hull.b_le)
        if hull.b_eq.size:
            he = hull.A_eq.tocoo()
            pb.add_rows("hull_eq", "eq", he.row, pc[he.col], he.data, hull.b_eq)
        sub = fam.subsets[g]
        if not (isinstance(sub, Box) and np.allclose(sub.lower, fam.boxes[g][0])
                and np.allclose(sub.upper, fam.boxes[g][1])):
            conic_rows(pb, sub, pc, None, "supp", coef=S, const=grid.lower, ball_facets=self.ball_facets)
        if lift.embedding.dims != lift.embedding.K:
            E = lift.embedding.matrix
            u = pb.add_vars("u", lift.embedding.K, -np.inf)
            rr, cc = np.nonzero(S)
            er, ec = np.nonzero(E)
            pb.add_rows("range", "eq", np.concatenate([rr, er]), np.concatenate([pc[cc], u.start + ec]),
                        np.concatenate([S[rr, cc], -E[er, ec]]), lift.embedding.offset - grid.lower)
        for i, cut in enumerate(self.cuts[g].values()):
            nz = np.nonzero(cut.coeff_psi)[0]
            pb.add_rows("cuts", "le", np.zeros(nz.size, int), pc[nz], cut.coeff_psi[nz], [-cut.coeff_s])
        return pb.build("max", f"{self.label} relaxed set {g}")

    def _activate_violated(self, sol: DualSolution, tol: float = 1e-7) -> bool:
        added = False
        rule = None
        for g, blk in enumerate(self.problem.blocks):
            idle = np.nonzero(~self.active[g])[0]
            if not idle.size:
                continue
            if rule is None:
                rule = extract_policy(self, sol, self.lifting)
            base = self.relaxed_set(g)
            gamma = blk.B @ self.Rm
            beta = blk.b0 + blk.B @ self.r0
            N = self.lifting.grid.lifted_dim
            for k in idle:
                w = rule.X.T @ blk.A[k] - gamma[k]
                c = np.zeros(base.n)
                c[:N] = w
                self.lazy_checks += 1
                res = solve(SolveRequest(replace(base, c=c), self.backend, self.options))
                worst = res.objective if res.ok else np.inf
                if blk.A[k] @ rule.x0 + worst - beta[k] > tol * (1.0 + abs(beta[k])):
                    self.active[g][k] = True
                    added = True
        return added

    # -------------------------------------------------------------- extract
    def extract_policy(self, sol: DualSolution, zero_tol: float = 1e-7) -> PiecewiseAffinePolicy:
        return extract_policy(self, sol, self.lifting, zero_tol)


def extract_policy(program: DualProgram, solution: DualSolution, lifting: Optional[LiftingOperator] = None,
                   zero_tol: float = 1e-7) -> PiecewiseAffinePolicy:
    """Affine rule in lifted space from the moment-row multipliers.

    Multipliers are sensitivities of the dual optimum with respect to the
    moment right-hand sides, which equal minus the moments; hence the sign
    flip.
    """
    res = solution.result
    if not res.ok or "moment_X" not in res.duals or "moment_x" not in res.duals:
        raise RuntimeError("solution carries no moment multipliers")
    lifting = lifting or program.lifting
    n, N = program.problem.n, lifting.lifted_dim
    X = np.zeros((n, N))
    ent = program.moment_entries
    if ent.size:
        X[ent[:, 0], ent[:, 1]] = -res.duals["moment_X"]
    x0 = -np.asarray(res.duals["moment_x"], float)
    return PiecewiseAffinePolicy(X, x0, lifting, program.mask.copy(), list(program.problem.dec_names),
                                 program.problem.dec_offset.copy())


def build_stochastic(problem: MultistageProblem, lifting: LiftingOperator, family: SupportFamily,
                     moments: MomentData, **kw) -> DualProgram:
    if family.G != 1 or len(problem.blocks) != 1:
        raise StructuralError("the stochastic program has a single support subset")
    return DualProgram(problem, lifting, family, moments, **kw)


def _zero_moments(problem: MultistageProblem, lifting: LiftingOperator, cost: np.ndarray) -> MomentData:
    N = lifting.lifted_dim
    return MomentData(np.zeros(N), np.zeros((problem.n, N)), cost, 0, None)


def robust_problem(problem: MultistageProblem) -> MultistageProblem:
    """Worst-case form: epigraph ``tau`` with ``c^T x(psi) - tau <= 0``."""
    if len(problem.blocks) != 1:
        raise StructuralError("the robust program has a single support subset")
    aug = problem.with_epigraphs(1)
    n = problem.n
    blk = aug.blocks[0]
    row = np.concatenate([problem.c0, [-1.0]])
    aug.blocks[0] = blk.extended(row, -problem.offset_cost(), np.zeros((1, problem.K)))
    aug.c0 = np.zeros(n + 1)
    aug.c0[n] = 1.0
    aug.dec_names[-1] = "tau"
    return aug


def build_robust(problem: MultistageProblem, lifting: LiftingOperator, family: SupportFamily, **kw) -> DualProgram:
    if family.G != 1:
        raise StructuralError("the robust program has a single support subset")
    aug = robust_problem(problem)
    return DualProgram(aug, lifting, family, _zero_moments(aug, lifting, aug.c0), **kw)


def data_driven_problem(problem: MultistageProblem, G: int) -> MultistageProblem:
    """One copy of the constraints per sample plus ``c^T x(psi) <= tau_g``."""
    if len(problem.blocks) != 1:
        raise StructuralError("expected a single base constraint block")
    aug = problem.with_epigraphs(G)
    n = problem.n
    base = aug.blocks[0]
    blocks = []
    for g in range(G):
        row = np.concatenate([problem.c0, np.zeros(G)])
        row[n + g] = -1.0
        blocks.append(base.extended(row, -problem.offset_cost(), np.zeros((1, problem.K))))
    aug.blocks = blocks
    aug.c0 = np.concatenate([np.zeros(n), np.full(G, 1.0 / G)])
    return aug


def sample_boxes(lifting_embedding, samples, eps: float):
    """Embedded perturbation sets of the sample boxes ``||psi - psi_g||_inf <= eps``."""
    from .supports import Polytope

    E = lifting_embedding
    samples = np.atleast_2d(np.asarray(samples, float))
    diag = np.allclose(E.matrix, np.diag(np.diag(E.matrix))) and np.all(np.diag(E.matrix) > 0) \
        and E.matrix.shape[0] == E.matrix.shape[1]
    sets = []
    for s in samples:
        if diag:
            lo = E.apply(s - eps)
            hi = E.apply(s + eps)
            sets.append(Box(lo, hi))
        else:
            Einv = E.left_inverse
            V = np.vstack([Einv, -Einv])
            d = np.concatenate([s + eps + Einv @ E.offset, -(s - eps) - Einv @ E.offset])
            sets.append(Polytope(V, d))
    return sets


def build_data_driven(problem: MultistageProblem, lifting: LiftingOperator, samples, eps: float,
                      norm: float = np.inf, family: Optional[SupportFamily] = None, **kw) -> DualProgram:
    """Type-infinity Wasserstein program with one box per training sample."""
    if eps < 0:
        raise ValueError("radius must be nonnegative")
    if not np.isinf(norm):
        raise NotImplementedError("only infinity-norm perturbation sets are supported")
    samples = np.atleast_2d(np.asarray(samples, float))
    G = samples.shape[0]
    if family is None:
        family = SupportFamily(sample_boxes(lifting.embedding, samples, eps), global_bounds=(lifting.grid.lower, lifting.grid.upper))
    aug = data_driven_problem(problem, G)
    return DualProgram(aug, lifting, family, _zero_moments(aug, lifting, aug.c0), **kw)
