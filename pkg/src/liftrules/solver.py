"""Conic program container and pluggable solve backends.

A :class:`ConicProgram` has the form::

    max/min  c^T x
    s.t.     A_blk x  = b_blk        (kind "eq")
             A_blk x <= b_blk        (kind "le")
             b_blk - A_blk x in SOC  (kind "soc", one cone per entry of ``sizes``)
             x >= lb

Dual multipliers are reported per row block with a *sensitivity* sign
convention: ``duals[name][r]`` is the derivative of the optimal objective
value (in the program's own sense) with respect to ``b_blk[r]``.

Three backends ship with the package:

* ``bundled``: a dense revised simplex (LP only) written for this package.
* ``highs``: scipy's HiGHS interface (LP only).
* ``clarabel``: the Clarabel interior point solver (LP and SOC).
"""
from __future__ import annotations

import os
import time
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

STATUSES = ("optimal", "infeasible", "unbounded", "numerical_failure", "iteration_limit")
ENV_BACKEND = "LIFTRULES_SOLVER"


class CapabilityError(RuntimeError):
    """Raised when a backend is asked to handle a cone it does not support."""


@dataclass
class RowBlock:
    name: str
    kind: str  # "eq" | "le" | "soc"
    A: sp.csr_matrix
    b: np.ndarray
    sizes: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("eq", "le", "soc"):
            raise ValueError(f"unknown row kind {self.kind!r}")
        self.A = sp.csr_matrix(self.A)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise ValueError(f"block {self.name}: A has {self.A.shape[0]} rows, b has {self.b.size}")
        if self.kind == "soc":
            if sum(self.sizes) != self.b.size or any(s < 1 for s in self.sizes):
                raise ValueError(f"block {self.name}: cone sizes do not cover the rows")

    @property
    def rows(self) -> int:
        return self.b.size


@dataclass
class ConicProgram:
    c: np.ndarray
    blocks: List[RowBlock]
    lb: np.ndarray
    sense: str = "max"
    var_names: Dict[str, slice] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        if self.lb.size != self.c.size:
            raise ValueError("lb and c lengths differ")
        if not np.all((self.lb == 0.0) | np.isneginf(self.lb)):
            raise ValueError("variable lower bounds must be 0 or -inf")
        names = set()
        for blk in self.blocks:
            if blk.A.shape[1] != self.c.size:
                raise ValueError(f"block {blk.name}: column count {blk.A.shape[1]} != {self.c.size}")
            if blk.name in names:
                raise ValueError(f"duplicate block name {blk.name}")
            names.add(blk.name)

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def has_soc(self) -> bool:
        return any(b.kind == "soc" and b.rows > 0 for b in self.blocks)

    def block(self, name: str) -> RowBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)


@dataclass
class SolveOptions:
    tol: float = 1e-9
    max_iter: int = 100000
    verbose: bool = False
    time_limit: float = float("inf")


@dataclass
class SolveRequest:
    program: ConicProgram
    backend: Optional[str] = None
    options: SolveOptions = field(default_factory=SolveOptions)


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray]
    objective: float
    duals: Dict[str, np.ndarray]
    backend: str
    seconds: float = 0.0
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _empty_result(status: str, backend: str, message: str = "", seconds: float = 0.0) -> SolveResult:
    return SolveResult(status, None, float("nan"), {}, backend, seconds, 0, message)


# --------------------------------------------------------------------------
# bundled revised simplex
# --------------------------------------------------------------------------

def _standard_form(prog: ConicProgram):
    """Convert an LP to min f^T z, M z = r, z >= 0, r >= 0.

    Returns the data plus the maps needed to recover x and the row duals.
    """
    n = prog.n
    free = np.where(np.isneginf(prog.lb))[0]
    rows_A, rows_b, kinds, origin = [], [], [], []
    for blk in prog.blocks:
        if blk.kind == "soc":
            raise CapabilityError("bundled backend handles linear programs only")
        for r in range(blk.rows):
            origin.append((blk.name, r))
        rows_A.append(blk.A)
        rows_b.append(blk.b)
        kinds.extend([blk.kind] * blk.rows)
    m = len(kinds)
    A = sp.vstack(rows_A).toarray() if m else np.zeros((0, n))
    b = np.concatenate(rows_b) if m else np.zeros(0)
    n_le = sum(1 for k in kinds if k == "le")
    # columns: x (n), -x_free (len(free)), slacks (n_le)
    M = np.zeros((m, n + free.size + n_le))
    M[:, :n] = A
    M[:, n:n + free.size] = -A[:, free]
    s_col = n + free.size
    for r, k in enumerate(kinds):
        if k == "le":
            M[r, s_col] = 1.0
            s_col += 1
    f = np.zeros(M.shape[1])
    sign = -1.0 if prog.sense == "max" else 1.0
    f[:n] = sign * prog.c
    f[n:n + free.size] = -sign * prog.c[free]
    flip = b < 0
    M[flip] *= -1.0
    r_vec = np.where(flip, -b, b)
    return M, r_vec, f, free, flip, origin, sign


class _Simplex:
    """Dense revised simplex on min f^T z, M z = r, z >= 0 with r >= 0."""

    def __init__(self, M: np.ndarray, r: np.ndarray, tol: float, max_iter: int):
        self.M = M
        self.r = r
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0
        self.bland = False

    def _run(self, cost: np.ndarray, basis: List[int], allowed: np.ndarray) -> str:
        M, tol = self.M, self.tol
        m = M.shape[0]
        degenerate_streak = 0
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            B = M[:, basis]
            try:
                xb = np.linalg.solve(B, self.r)
                y = np.linalg.solve(B.T, cost[basis])
            except np.linalg.LinAlgError:
                return "numerical_failure"
            reduced = cost - M.T @ y
            reduced[basis] = 0.0
            cand = np.where(allowed & (reduced < -tol))[0]
            if cand.size == 0:
                self.xb = xb
                self.y = y
                return "optimal"
            if self.bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmin(reduced[cand])])
            d = np.linalg.solve(B, M[:, q])
            pos = d > tol
            if not np.any(pos):
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(xb[pos], 0.0) / d[pos]
            step = ratios.min()
            ties = np.where(ratios <= step + tol * max(1.0, step))[0]
            if self.bland:
                leave = int(min(ties, key=lambda t: basis[t]))
            else:
                leave = int(ties[np.argmax(d[ties])])
            if step <= tol:
                degenerate_streak += 1
                if degenerate_streak > 50:
                    self.bland = True
            else:
                degenerate_streak = 0
            basis[leave] = q
            self.iterations += 1

    def solve(self, f: np.ndarray) -> Tuple[str, np.ndarray, np.ndarray]:
        M, r = self.M, self.r
        m, n = M.shape
        # phase one with artificial identity columns
        self.M = np.hstack([M, np.eye(m)])
        basis = list(range(n, n + m))
        cost1 = np.concatenate([np.zeros(n), np.ones(m)])
        allowed = np.concatenate([np.ones(n, bool), np.zeros(m, bool)])
        status = self._run(cost1, basis, allowed)
        if status != "optimal":
            return status, None, None
        if self.xb @ cost1[basis] > self.tol * max(1.0, np.abs(r).max(initial=0.0)) * 10:
            return "infeasible", None, None
        # drive remaining artificials out of the basis where possible
        for pos_, bvar in enumerate(list(basis)):
            if bvar < n:
                continue
            Binv_row = np.linalg.solve(self.M[:, basis].T, np.eye(m)[pos_])
            alpha = Binv_row @ M
            alpha[[v for v in basis if v < n]] = 0.0
            cand = np.where(np.abs(alpha) > 1e-9)[0]
            if cand.size:
                basis[pos_] = int(cand[0])
        self.bland = False
        cost2 = np.concatenate([f, np.zeros(m)])
        status = self._run(cost2, basis, allowed)
        if status != "optimal":
            return status, None, None
        z = np.zeros(n + m)
        z[basis] = self.xb
        return "optimal", z[:n], self.y


def bundled_lp_solve(program: ConicProgram, options: Optional[SolveOptions] = None) -> SolveResult:
    """Solve a linear program with the bundled revised simplex.

    Dantzig pricing is used until a long run of degenerate pivots is seen,
    after which Bland's smallest-index rule takes over for the rest of the
    phase. Row duals come from the final basis.
    """
    opts = options or SolveOptions()
    t0 = time.perf_counter()
    M, r, f, free, flip, origin, sign = _standard_form(program)
    # presolve: drop empty rows that are consistent
    empty = ~np.any(M != 0.0, axis=1)
    if np.any(empty & (r > 1e-8)):
        return _empty_result("infeasible", "bundled", "empty row with nonzero rhs", time.perf_counter() - t0)
    keep = ~empty
    solver = _Simplex(M[keep], r[keep], tol=1e-9, max_iter=opts.max_iter)
    status, z, y = solver.solve(f)
    secs = time.perf_counter() - t0
    if status != "optimal":
        return SolveResult(status, None, float("nan"), {}, "bundled", secs, solver.iterations)
    n = program.n
    x = z[:n].copy()
    x[free] -= z[n:n + free.size]
    y_full = np.zeros(M.shape[0])
    y_full[keep] = y
    y_full[flip] *= -1.0
    # y_full is d(min f^T z)/d r; convert to the program's own sense
    y_full *= sign
    duals: Dict[str, np.ndarray] = {}
    pos = 0
    for blk in program.blocks:
        duals[blk.name] = y_full[pos:pos + blk.rows].copy()
        pos += blk.rows
    obj = float(program.c @ x)
    return SolveResult("optimal", x, obj, duals, "bundled", secs, solver.iterations)


# --------------------------------------------------------------------------
# external backends
# --------------------------------------------------------------------------

def _highs_solve(program: ConicProgram, options: SolveOptions) -> SolveResult:
    from scipy.optimize import linprog

    t0 = time.perf_counter()
    if program.has_soc:
        raise CapabilityError("highs backend handles linear programs only")
    sign = -1.0 if program.sense == "max" else 1.0
    eq = [b for b in program.blocks if b.kind == "eq"]
    le = [b for b in program.blocks if b.kind == "le"]
    A_eq = sp.vstack([b.A for b in eq]).tocsr() if eq else None
    b_eq = np.concatenate([b.b for b in eq]) if eq else None
    A_ub = sp.vstack([b.A for b in le]).tocsr() if le else None
    b_ub = np.concatenate([b.b for b in le]) if le else None
    bounds = [(None if np.isneginf(l) else l, None) for l in program.lb]
    res = linprog(sign * program.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-9,
                           "dual_feasibility_tolerance": 1e-9,
                           "disp": options.verbose})
    secs = time.perf_counter() - t0
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "numerical_failure")
    if status != "optimal":
        return SolveResult(status, None, float("nan"), {}, "highs", secs, int(getattr(res, "nit", 0)), res.message)
    duals: Dict[str, np.ndarray] = {}
    pos = 0
    for blk in eq:
        duals[blk.name] = sign * res.eqlin.marginals[pos:pos + blk.rows]
        pos += blk.rows
    pos = 0
    for blk in le:
        duals[blk.name] = sign * res.ineqlin.marginals[pos:pos + blk.rows]
        pos += blk.rows
    x = np.asarray(res.x, dtype=float)
    return SolveResult("optimal", x, float(program.c @ x), duals, "highs", secs, int(res.nit))


def _clarabel_solve(program: ConicProgram, options: SolveOptions) -> SolveResult:
    import clarabel

    t0 = time.perf_counter()
    sign = -1.0 if program.sense == "max" else 1.0
    n = program.n
    order = [b for b in program.blocks if b.kind == "eq"] + [b for b in program.blocks if b.kind == "le"]
    socs = [b for b in program.blocks if b.kind == "soc"]
    mats, rhs, cones = [], [], []
    n_eq = sum(b.rows for b in order if b.kind == "eq")
    n_le = sum(b.rows for b in order if b.kind == "le")
    for b in order:
        mats.append(b.A)
        rhs.append(b.b)
    nonneg = np.where(program.lb == 0.0)[0]
    bound_rows = sp.csr_matrix((-np.ones(nonneg.size), (np.arange(nonneg.size), nonneg)), shape=(nonneg.size, n))
    mats.append(bound_rows)
    rhs.append(np.zeros(nonneg.size))
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_le + nonneg.size:
        cones.append(clarabel.NonnegativeConeT(n_le + nonneg.size))
    for b in socs:
        mats.append(b.A)
        rhs.append(b.b)
        for s in b.sizes:
            cones.append(clarabel.SecondOrderConeT(int(s)))
    A = sp.vstack(mats).tocsc() if mats else sp.csc_matrix((0, n))
    bvec = np.concatenate(rhs) if rhs else np.zeros(0)
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = options.verbose
    settings.presolve_enable = False
    settings.max_iter = min(int(options.max_iter), 500)
    # tight tolerances: policy comparisons are made at 1e-7 relative
    settings.tol_gap_abs = 1e-13
    settings.tol_gap_rel = 1e-12
    settings.tol_feas = 1e-9
    settings.tol_ktratio = 1e-10
    if np.isfinite(options.time_limit):
        settings.time_limit = float(options.time_limit)
    solver = clarabel.DefaultSolver(P, sign * program.c, A, bvec, cones, settings)
    sol = solver.solve()
    secs = time.perf_counter() - t0
    st = str(sol.status)
    if st in ("Solved", "AlmostSolved"):
        status = "optimal"
    elif st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    elif st in ("DualInfeasible", "AlmostDualInfeasible"):
        status = "unbounded"
    elif st in ("MaxIterations", "MaxTime"):
        status = "iteration_limit"
    else:
        status = "numerical_failure"
    if status != "optimal":
        return SolveResult(status, None, float("nan"), {}, "clarabel", secs, int(sol.iterations), st)
    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    # d(min q^T x)/db = -z for Clarabel's Ax + s = b convention
    y = -sign * z
    duals: Dict[str, np.ndarray] = {}
    pos = 0
    for b in order:
        duals[b.name] = y[pos:pos + b.rows].copy()
        pos += b.rows
    pos += nonneg.size
    for b in socs:
        duals[b.name] = y[pos:pos + b.rows].copy()
        pos += b.rows
    return SolveResult("optimal", x, float(program.c @ x), duals, "clarabel", secs, int(sol.iterations), st)


BACKENDS = {
    "bundled": {"capabilities": frozenset({"lp"}), "solve": lambda p, o: bundled_lp_solve(p, o)},
    "highs": {"capabilities": frozenset({"lp"}), "solve": _highs_solve},
    "clarabel": {"capabilities": frozenset({"lp", "soc"}), "solve": _clarabel_solve},
}


def capabilities(backend: str) -> frozenset:
    return BACKENDS[backend]["capabilities"]


def resolve_backend(program: ConicProgram, name: Optional[str] = None) -> str:
    name = name or os.environ.get(ENV_BACKEND) or "auto"
    if name == "auto":
        return "clarabel" if program.has_soc else "highs"
    if name not in BACKENDS:
        raise ValueError(f"unknown solver backend {name!r}; choose from {sorted(BACKENDS)} or 'auto'")
    return name


def solve(request: SolveRequest) -> SolveResult:
    """Dispatch a program to a backend, checking cone capabilities first."""
    prog = request.program
    backend = resolve_backend(prog, request.backend)
    if prog.has_soc and "soc" not in capabilities(backend):
        raise CapabilityError(f"backend {backend!r} does not support second-order cones")
    try:
        return BACKENDS[backend]["solve"](prog, request.options)
    except (CapabilityError, ValueError):
        raise
    except Exception as exc:  # numerical trouble inside a backend is a status, not a crash
        warnings.warn(f"{backend} failed: {exc}")
        return _empty_result("numerical_failure", backend, str(exc))


def residuals(program: ConicProgram, x: np.ndarray) -> float:
    """Largest constraint violation of ``x``, scaled by 1 + max|b|."""
    worst = 0.0
    for blk in program.blocks:
        if blk.rows == 0:
            continue
        r = blk.b - blk.A @ x
        scale = 1.0 + np.abs(blk.b).max()
        if blk.kind == "eq":
            v = np.abs(r).max()
        elif blk.kind == "le":
            v = max(0.0, -r.min())
        else:
            v, pos = 0.0, 0
            for s in blk.sizes:
                w = r[pos:pos + s]
                v = max(v, np.linalg.norm(w[1:]) - w[0])
                pos += s
        worst = max(worst, v / scale)
    worst = max(worst, max(0.0, -(x[program.lb == 0.0].min(initial=0.0))))
    return float(worst)


def dual_objective(program: ConicProgram, result: SolveResult) -> float:
    """b^T y with sensitivity duals; equals the optimum under strong duality."""
    return float(sum(blk.b @ result.duals[blk.name] for blk in program.blocks))


# --------------------------------------------------------------------------
# sparse triplet dump
# --------------------------------------------------------------------------

def dump_triplets(program: ConicProgram) -> str:
    """Serialize a program in the line-oriented triplet format.

    Lines: ``sense``, ``nvars``, ``var name start stop``, ``lb j value`` for
    free variables, ``obj j value``, then per block a ``block`` header
    followed by ``A row col value`` and ``b row value`` lines. Row indices
    are local to the block.
    """
    out = ["# liftrules conic program v1", f"sense {program.sense}", f"nvars {program.n}"]
    for name, sl in program.var_names.items():
        out.append(f"var {name} {sl.start} {sl.stop}")
    for j in np.where(np.isneginf(program.lb))[0]:
        out.append(f"lb {j} -inf")
    for j in np.nonzero(program.c)[0]:
        out.append(f"obj {j} {program.c[j]:.17g}")
    for blk in program.blocks:
        sizes = " ".join(str(s) for s in blk.sizes)
        out.append(f"block {blk.name} {blk.kind} {blk.rows} {sizes}".rstrip())
        coo = blk.A.tocoo()
        for r, c_, v in sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())):
            out.append(f"A {r} {c_} {v:.17g}")
        for r in np.nonzero(blk.b)[0]:
            out.append(f"b {r} {blk.b[r]:.17g}")
    return "\n".join(out) + "\n"


def load_triplets(text: str) -> ConicProgram:
    """Inverse of :func:`dump_triplets`."""
    sense, n = "max", 0
    var_names: Dict[str, slice] = {}
    free: List[int] = []
    obj: List[Tuple[int, float]] = []
    blocks: List[dict] = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        key = tok[0]
        if key == "sense":
            sense = tok[1]
        elif key == "nvars":
            n = int(tok[1])
        elif key == "var":
            var_names[tok[1]] = slice(int(tok[2]), int(tok[3]))
        elif key == "lb":
            free.append(int(tok[1]))
        elif key == "obj":
            obj.append((int(tok[1]), float(tok[2])))
        elif key == "block":
            blocks.append({"name": tok[1], "kind": tok[2], "rows": int(tok[3]),
                           "sizes": tuple(int(s) for s in tok[4:]), "A": [], "b": []})
        elif key == "A":
            blocks[-1]["A"].append((int(tok[1]), int(tok[2]), float(tok[3])))
        elif key == "b":
            blocks[-1]["b"].append((int(tok[1]), float(tok[2])))
        else:
            raise ValueError(f"unrecognized line {line!r}")
    c = np.zeros(n)
    for j, v in obj:
        c[j] = v
    lb = np.zeros(n)
    lb[free] = -np.inf
    rb = []
    for blk in blocks:
        rows, cols, vals = zip(*blk["A"]) if blk["A"] else ((), (), ())
        A = sp.csr_matrix((vals, (rows, cols)), shape=(blk["rows"], n))
        b = np.zeros(blk["rows"])
        for r, v in blk["b"]:
            b[r] = v
        rb.append(RowBlock(blk["name"], blk["kind"], A, b, blk["sizes"]))
    return ConicProgram(c, rb, lb, sense, var_names)


class ProgramBuilder:
    """Incremental COO assembly of a :class:`ConicProgram`."""

    def __init__(self) -> None:
        self.n = 0
        self.lb: List[np.ndarray] = []
        self.var_names: Dict[str, slice] = {}
        self.c_parts: List[Tuple[np.ndarray, np.ndarray]] = []
        self._blocks: Dict[str, dict] = {}
        self._order: List[str] = []

    def add_vars(self, name: str, count: int, lower: float = 0.0) -> slice:
        sl = slice(self.n, self.n + count)
        self.n += count
        self.lb.append(np.full(count, lower, dtype=float))
        self.var_names[name] = sl
        return sl

    def set_objective(self, cols: Sequence[int], vals: Sequence[float]) -> None:
        self.c_parts.append((np.asarray(cols, dtype=int), np.asarray(vals, dtype=float)))

    def _blk(self, name: str, kind: str) -> dict:
        if name not in self._blocks:
            self._blocks[name] = {"kind": kind, "rows": [], "cols": [], "vals": [], "b": [], "m": 0, "sizes": []}
            self._order.append(name)
        blk = self._blocks[name]
        if blk["kind"] != kind:
            raise ValueError(f"block {name} already has kind {blk['kind']}")
        return blk

    def add_rows(self, name: str, kind: str, rows, cols, vals, b, sizes: Sequence[int] = ()) -> range:
        """Append rows; ``rows`` are local indices 0..len(b)-1 of this batch."""
        blk = self._blk(name, kind)
        b = np.atleast_1d(np.asarray(b, dtype=float))
        base = blk["m"]
        blk["rows"].append(np.asarray(rows, dtype=int) + base)
        blk["cols"].append(np.asarray(cols, dtype=int))
        blk["vals"].append(np.asarray(vals, dtype=float))
        blk["b"].append(b)
        blk["m"] += b.size
        blk["sizes"].extend(int(s) for s in sizes)
        return range(base, base + b.size)

    def build(self, sense: str = "max", label: str = "") -> ConicProgram:
        c = np.zeros(self.n)
        for cols, vals in self.c_parts:
            np.add.at(c, cols, vals)
        blocks = []
        for name in self._order:
            blk = self._blocks[name]
            if blk["rows"]:
                rows = np.concatenate(blk["rows"])
                cols = np.concatenate(blk["cols"])
                vals = np.concatenate(blk["vals"])
                b = np.concatenate(blk["b"])
            else:
                rows = cols = np.zeros(0, int)
                vals = b = np.zeros(0)
            A = sp.csr_matrix((vals, (rows, cols)), shape=(blk["m"], self.n))
            blocks.append(RowBlock(name, blk["kind"], A, b, tuple(blk["sizes"])))
        lb = np.concatenate(self.lb) if self.lb else np.zeros(0)
        return ConicProgram(c, blocks, lb, sense, dict(self.var_names), label)
