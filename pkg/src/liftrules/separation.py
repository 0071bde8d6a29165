"""Distance cuts on the lifted support and their separation.

A rectangle ``[zm, zp]`` on the grid induces the valid inequality
``d'(p, rect) <= dbar(rect)`` on lifted points, where ``d'`` is the affine
surrogate of the l1 point-to-rectangle distance. In the dual program the
inequality is homogenized with the scaling variable ``s``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lifting import AssumptionError, BreakpointGrid, StructuralError
from .supports import EtaFunction, SupportFamily, dbar_box, dbar_exact, dbar_symmetric, eta_box_circumscription

log = logging.getLogger(__name__)

S_FLOOR = 1e-9
MODES = ("exact_symmetric", "square_apriori", "heuristic_general", "bruteforce")


@dataclass(frozen=True)
class Rectangle:
    zminus: np.ndarray
    zplus: np.ndarray

    def __post_init__(self) -> None:
        zm = np.asarray(self.zminus, float).reshape(-1)
        zp = np.asarray(self.zplus, float).reshape(-1)
        if zm.size != zp.size or np.any(zm > zp):
            raise StructuralError("rectangle needs zminus <= zplus")
        object.__setattr__(self, "zminus", zm)
        object.__setattr__(self, "zplus", zp)

    def key(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        return tuple(self.zminus.tolist()), tuple(self.zplus.tolist())

    def encode(self) -> str:
        return ";".join(f"{a:.6g}:{b:.6g}" for a, b in zip(self.zminus, self.zplus))


@dataclass
class Cut:
    """``coeff_psi @ p + coeff_s * s <= 0``."""

    coeff_psi: np.ndarray
    coeff_s: float
    g: int
    rect: Rectangle
    dbar: float
    k: Optional[int] = None

    def evaluate(self, p, s=1.0) -> np.ndarray:
        return np.asarray(p, float) @ self.coeff_psi + self.coeff_s * np.asarray(s, float)


@dataclass
class SeparationResult:
    rect: Rectangle
    violation: float
    i_star: int = -1
    j_star: int = -1
    order: Optional[np.ndarray] = None


def rect_indices(grid: BreakpointGrid, rect: Rectangle) -> Tuple[np.ndarray, np.ndarray]:
    """Grid value indices of the rectangle endpoints; requires exact membership."""
    if rect.zminus.size != grid.dims:
        raise StructuralError("rectangle and grid dimensions differ")
    lo = np.empty(grid.dims, int)
    hi = np.empty(grid.dims, int)
    for i, v in enumerate(grid.values):
        a = np.where(v == rect.zminus[i])[0]
        b = np.where(v == rect.zplus[i])[0]
        if a.size != 1 or b.size != 1:
            raise StructuralError(f"rectangle entry off the grid in dimension {i}")
        lo[i], hi[i] = a[0], b[0]
    return lo, hi


def rect_from_indices(grid: BreakpointGrid, lo: Sequence[int], hi: Sequence[int]) -> Rectangle:
    return Rectangle(np.array([grid.values[i][a] for i, a in enumerate(lo)]),
                     np.array([grid.values[i][b] for i, b in enumerate(hi)]))


def cut_coefficients(grid: BreakpointGrid, rect: Rectangle) -> Tuple[np.ndarray, float]:
    """``(a, c)`` with ``d'(p, rect) = a @ p + c``."""
    lo, hi = rect_indices(grid, rect)
    j = grid.seg_index
    dim = grid.seg_dim
    a = np.where(j > hi[dim], 1.0, 0.0) - np.where(j <= lo[dim], 1.0, 0.0)
    c = float(np.sum(rect.zminus - grid.lower))
    return a, c


def d_prime(grid: BreakpointGrid, psi_lifted, rect: Rectangle) -> float:
    """Affine surrogate of the l1 distance; exact on lifted points."""
    p = np.asarray(psi_lifted, float).reshape(-1)
    if p.size != grid.lifted_dim:
        raise StructuralError("lifted vector has the wrong length")
    a, c = cut_coefficients(grid, rect)
    return float(a @ p + c)


def l1_distance(theta, rect: Rectangle) -> float:
    th = np.asarray(theta, float)
    return float(np.sum(np.maximum(rect.zminus - th, 0.0) + np.maximum(th - rect.zplus, 0.0)))


def make_cut(rect: Rectangle, g: int, grid: BreakpointGrid, dbar_value: float) -> Cut:
    if dbar_value < -1e-12:
        raise RuntimeError("negative maximal distance; the support data is inconsistent")
    a, c = cut_coefficients(grid, rect)
    return Cut(a, c - float(dbar_value), g, rect, float(dbar_value))


# --------------------------------------------------------------------------
# brute force over all grid rectangles
# --------------------------------------------------------------------------

def enumerate_rectangles(grid: BreakpointGrid, limit: int = 10 ** 6) -> Tuple[np.ndarray, np.ndarray]:
    """Index arrays ``(lo, hi)`` of shape (R, I) over every grid rectangle."""
    per_dim = []
    total = 1
    for v in grid.values:
        n = v.size
        pairs = np.array([(a, b) for a in range(n) for b in range(a, n)], dtype=int)
        per_dim.append(pairs)
        total *= pairs.shape[0]
    if total > limit:
        raise ValueError(f"{total} rectangles exceed the enumeration guard of {limit}")
    idx = np.stack(np.meshgrid(*[np.arange(p.shape[0]) for p in per_dim], indexing="ij"), -1).reshape(-1, grid.dims)
    lo = np.stack([per_dim[i][idx[:, i], 0] for i in range(grid.dims)], axis=1)
    hi = np.stack([per_dim[i][idx[:, i], 1] for i in range(grid.dims)], axis=1)
    return lo, hi


def rectangle_values(grid: BreakpointGrid, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    zm = np.stack([grid.values[i][lo[:, i]] for i in range(grid.dims)], axis=1)
    zp = np.stack([grid.values[i][hi[:, i]] for i in range(grid.dims)], axis=1)
    return zm, zp


def _d_prime_all(grid: BreakpointGrid, p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    total = np.zeros(lo.shape[0])
    for i in range(grid.dims):
        seg = p[grid.offsets[i]:grid.offsets[i + 1]]
        prefix = np.concatenate([[0.0], np.cumsum(seg)])  # prefix[a] = sum_{j<=a}
        suffix = prefix[-1] - prefix  # suffix[b] = sum_{j>b}
        v = grid.values[i]
        total += suffix[hi[:, i]] - prefix[lo[:, i]] + v[lo[:, i]] - grid.lower[i]
    return total


@dataclass
class RectangleTable:
    """All grid rectangles with precomputed maximal distances."""

    grid: BreakpointGrid
    lo: np.ndarray
    hi: np.ndarray
    dbar: np.ndarray

    @classmethod
    def build(cls, grid: BreakpointGrid, dbar_eval: Callable, vectorized: bool = False) -> "RectangleTable":
        lo, hi = enumerate_rectangles(grid)
        zm, zp = rectangle_values(grid, lo, hi)
        if vectorized:
            d = np.asarray(dbar_eval(zm, zp), float)
        else:
            d = np.array([dbar_eval(Rectangle(a, b)) for a, b in zip(zm, zp)])
        return cls(grid, lo, hi, d)


def separate_bruteforce(grid: BreakpointGrid, psi_lifted, dbar_eval=None,
                        table: Optional[RectangleTable] = None) -> SeparationResult:
    """Maximize ``d'(p, rect) - dbar(rect)`` by enumerating every grid rectangle.

    Ties go to the first rectangle in enumeration order.
    """
    if table is None:
        if dbar_eval is None:
            raise ValueError("need a dbar evaluator or a precomputed table")
        table = RectangleTable.build(grid, dbar_eval)
    p = np.asarray(psi_lifted, float).reshape(-1)
    obj = _d_prime_all(grid, p, table.lo, table.hi) - table.dbar
    r = int(np.argmax(obj))
    rect = rect_from_indices(grid, table.lo[r], table.hi[r])
    return SeparationResult(rect, float(obj[r]))


# --------------------------------------------------------------------------
# exact separation for permutation-invariant supports
# --------------------------------------------------------------------------

def _check_symmetric(grid: BreakpointGrid, eta: EtaFunction) -> None:
    if not grid.is_uniform_symmetric():
        raise AssumptionError("grid must be identical across dimensions, symmetric around zero and contain zero")
    if not eta.permutation_invariant:
        raise AssumptionError("eta is not flagged permutation invariant")
    if eta.dims != grid.dims:
        raise StructuralError("eta and grid dimensions differ")


def separate_symmetric(grid: BreakpointGrid, psi_lifted, eta: EtaFunction) -> SeparationResult:
    """Most violated symmetric rectangle in O(I J log I).

    Sweeps ``j`` from ``J-1`` down to ``J/2``; within a sweep the dimensions
    move their upper endpoint from ``z_{j+1}`` to ``z_j`` in non-ascending
    order of their gain ``delta_ij``. The running objective carries over
    between sweeps because the last state of sweep ``j`` is the first state
    of sweep ``j-1``.
    """
    _check_symmetric(grid, eta)
    p = np.asarray(psi_lifted, float).reshape(-1)
    if p.size != grid.lifted_dim:
        raise StructuralError("lifted vector has the wrong length")
    I = grid.dims
    z = grid.values[0]
    J = z.size - 1
    P = p.reshape(I, J)
    deta = np.diff(eta.values)
    best, o = 0.0, 0.0
    j_star, i_star, order_star = -1, -1, None
    for j in range(J - 1, J // 2 - 1, -1):
        # gains of lowering z+ from z_{j+1} to z_j (segment j+1 and its mirror J-j, 1-based)
        delta = z[j + 1] - z[j] + P[:, j] - P[:, J - j - 1]
        order = np.argsort(-delta, kind="stable")
        for i in range(1, I + 1):
            de = deta[i - 1]
            if de >= z[j + 1]:
                loss = z[j + 1] - z[j]
            elif de >= z[j]:
                loss = de - z[j]
            else:
                loss = 0.0
            o += delta[order[i - 1]] - loss
            if o > best:
                best, j_star, i_star, order_star = o, j, i, order.copy()
    zplus = np.full(I, z[J])
    if j_star >= 0:
        zplus[order_star[:i_star]] = z[j_star]
        zplus[order_star[i_star:]] = z[j_star + 1]
    return SeparationResult(Rectangle(-zplus, zplus), float(best), i_star, j_star, order_star)


def square_cuts(grid: BreakpointGrid) -> List[Rectangle]:
    """The ``J/2`` squares ``[z_j e, -z_j e]`` for ``j = 1..J/2``."""
    if not grid.is_uniform_symmetric():
        raise AssumptionError("square cuts need a uniform grid symmetric around zero")
    z = grid.values[0]
    J = z.size - 1
    out = []
    for j in range(1, J // 2 + 1):
        zm = np.full(grid.dims, z[j])
        out.append(Rectangle(zm, np.full(grid.dims, z[J - j])))
    return out


# --------------------------------------------------------------------------
# constraint generation
# --------------------------------------------------------------------------

@dataclass
class CutLoopResult:
    solution: object
    cuts: List[Cut]
    rounds: int
    converged: bool
    history: List[Tuple[int, float, int]] = field(default_factory=list)
    log_rows: List[Tuple[int, int, int, float, str]] = field(default_factory=list)


class _Separator:
    def __init__(self, family: SupportFamily, grid: BreakpointGrid, mode: str):
        if mode not in MODES:
            raise ValueError(f"unknown separation mode {mode!r}")
        self.family, self.grid, self.mode = family, grid, mode
        self.etas: Dict[int, EtaFunction] = {}
        self.tables: Dict[int, RectangleTable] = {}
        self.circ: Dict[int, EtaFunction] = {}
        if mode in ("exact_symmetric", "square_apriori"):
            for g in range(family.G):
                eta = family.eta(g)
                if eta is None:
                    raise AssumptionError(f"subset {g} is not permutation invariant; use heuristic_general")
                self.etas[g] = eta
            if not grid.is_uniform_symmetric():
                raise AssumptionError("exact separation needs a uniform grid symmetric around zero")
        elif mode == "heuristic_general":
            if not grid.is_uniform_symmetric():
                raise AssumptionError("heuristic separation needs a uniform grid symmetric around zero")
            for g in range(family.G):
                self.circ[g] = eta_box_circumscription(*family.boxes[g])

    def dbar(self, g: int, rect: Rectangle) -> float:
        if self.mode in ("exact_symmetric", "square_apriori") and np.all(rect.zminus == -rect.zplus):
            return dbar_symmetric(self.etas[g], np.sort(rect.zplus))
        return self.family.dbar(g, rect.zminus, rect.zplus)

    def separate(self, g: int, p: np.ndarray) -> Tuple[Rectangle, float, float]:
        """Returns (rect, violation reported by the separator, exact dbar)."""
        if self.mode in ("exact_symmetric", "square_apriori"):
            res = separate_symmetric(self.grid, p, self.etas[g])
            return res.rect, res.violation, self.dbar(g, res.rect)
        if self.mode == "bruteforce":
            if g not in self.tables:
                s = self.family.subsets[g]
                from .supports import Box, NormBall, dbar_norm_ball

                if isinstance(s, NormBall):
                    self.tables[g] = RectangleTable.build(self.grid, lambda zm, zp: dbar_norm_ball(s, zm, zp), True)
                elif isinstance(s, Box):
                    self.tables[g] = RectangleTable.build(
                        self.grid, lambda zm, zp: np.sum(np.maximum(np.maximum(s.upper - zp, 0), np.maximum(zm - s.lower, 0)), axis=1), True)
                else:
                    self.tables[g] = RectangleTable.build(self.grid, lambda r: self.family.dbar(g, r.zminus, r.zplus))
            res = separate_bruteforce(self.grid, p, table=self.tables[g])
            return res.rect, res.violation, self.dbar(g, res.rect)
        res = separate_symmetric(self.grid, p, self.circ[g])
        exact = self.family.dbar(g, res.rect.zminus, res.rect.zplus)
        return res.rect, d_prime(self.grid, p, res.rect) - exact, exact


def cut_loop(program, family: SupportFamily, grid: BreakpointGrid, mode: str = "exact_symmetric",
             tol: float = 1e-7, max_rounds: int = 50, s_floor: float = S_FLOOR) -> CutLoopResult:
    """Constraint generation on a dual program.

    ``program`` must expose ``solve()`` returning an object with ``ok``,
    ``objective``, ``blocks()`` yielding ``(g, k, psi, s)``, and
    ``add_cut(cut)`` returning True when the cut is new.
    """
    sep = _Separator(family, grid, mode)
    cuts: List[Cut] = []
    history: List[Tuple[int, float, int]] = []
    log_rows: List[Tuple[int, int, int, float, str]] = []
    if mode == "square_apriori":
        for g in range(family.G):
            for rect in square_cuts(grid):
                cut = make_cut(rect, g, grid, sep.dbar(g, rect))
                if program.add_cut(cut):
                    cuts.append(cut)
        sol = program.solve()
        history.append((0, sol.objective, len(cuts)))
        return CutLoopResult(sol, cuts, 1, True, history, log_rows)
    sol = None
    converged = False
    rounds = 0
    while rounds < max_rounds:
        sol = program.solve()
        rounds += 1
        history.append((rounds, sol.objective, len(cuts)))
        if not sol.ok or not np.isfinite(tol):
            converged = sol.ok
            break
        added = 0
        seen: set = set()
        for g, k, psi, s in sol.blocks():
            if s <= s_floor:
                continue
            p = psi / s
            rect, viol, dbar = sep.separate(g, p)
            if viol <= tol:
                continue
            key = (g, rect.key())
            if key in seen:
                continue
            seen.add(key)
            cut = make_cut(rect, g, grid, dbar)
            cut.k = k
            if program.add_cut(cut):
                cuts.append(cut)
                added += 1
                log_rows.append((rounds, g, k, float(viol), rect.encode()))
        log.debug("cut round %d objective %.10g added %d", rounds, sol.objective, added)
        if added == 0:
            converged = True
            break
    else:
        warnings.warn(f"cut loop stopped after {max_rounds} rounds without convergence")
        sol = program.solve()
        history.append((rounds + 1, sol.objective, len(cuts)))
    return CutLoopResult(sol, cuts, rounds, converged, history, log_rows)
