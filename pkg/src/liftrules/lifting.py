"""Embedding, folding and retraction operators on breakpoint grids.

Lifted vectors are flat arrays of length ``N' = sum_i J_i``; segment ``j``
(1-based) of dimension ``i`` sits at ``grid.offsets[i] + j - 1``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp


class StructuralError(ValueError):
    """Dimension or nesting mismatch between grids, boxes and vectors."""


class AssumptionError(ValueError):
    """A grid or support violates the symmetry assumptions an operation needs."""


def _as_vec(v, n: Optional[int] = None, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if n is not None and a.shape[-1] != n:
        raise StructuralError(f"{name} has length {a.shape[-1]}, expected {n}")
    return a


@dataclass(frozen=True)
class BreakpointGrid:
    """Per-dimension breakpoints strictly inside ``[lower_i, upper_i]``."""

    lower: np.ndarray
    upper: np.ndarray
    breakpoints: Tuple[np.ndarray, ...]
    # derived
    values: Tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    segments: np.ndarray = field(init=False, repr=False, compare=False)
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    seg_dim: np.ndarray = field(init=False, repr=False, compare=False)
    seg_lo: np.ndarray = field(init=False, repr=False, compare=False)
    seg_hi: np.ndarray = field(init=False, repr=False, compare=False)
    seg_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.size != hi.size or lo.size != len(self.breakpoints):
            raise StructuralError("bounds and breakpoint lists disagree on the dimension count")
        if np.any(lo > hi):
            raise StructuralError("lower bound above upper bound")
        bps, vals = [], []
        for i, bp in enumerate(self.breakpoints):
            b = np.asarray(bp, dtype=float).reshape(-1)
            if b.size and (np.any(np.diff(b) <= 0) or b[0] <= lo[i] or b[-1] >= hi[i]):
                raise StructuralError(f"breakpoints of dimension {i} must be increasing and strictly inside the bounds")
            bps.append(b)
            vals.append(np.concatenate([[lo[i]], b, [hi[i]]]))
        segs = np.array([v.size - 1 for v in vals], dtype=int)
        offsets = np.concatenate([[0], np.cumsum(segs)]).astype(int)
        seg_dim = np.repeat(np.arange(lo.size), segs)
        seg_lo = np.concatenate([v[:-1] for v in vals]) if vals else np.zeros(0)
        seg_hi = np.concatenate([v[1:] for v in vals]) if vals else np.zeros(0)
        seg_index = np.concatenate([np.arange(1, s + 1) for s in segs]) if vals else np.zeros(0, int)
        for name, val in (("lower", lo), ("upper", hi), ("breakpoints", tuple(bps)), ("values", tuple(vals)),
                          ("segments", segs), ("offsets", offsets), ("seg_dim", seg_dim),
                          ("seg_lo", seg_lo), ("seg_hi", seg_hi), ("seg_index", seg_index)):
            object.__setattr__(self, name, val)

    @property
    def dims(self) -> int:
        return self.lower.size

    @property
    def lifted_dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def widths(self) -> np.ndarray:
        return self.seg_hi - self.seg_lo

    def segment(self, i: int, j: int) -> int:
        """Flat index of 1-based segment ``j`` of dimension ``i``."""
        if not 1 <= j <= self.segments[i]:
            raise StructuralError(f"segment {j} out of range for dimension {i}")
        return int(self.offsets[i] + j - 1)

    def sum_matrix(self) -> sp.csr_matrix:
        """Matrix S with ``S @ psi'`` the per-dimension segment sums."""
        n = self.lifted_dim
        return sp.csr_matrix((np.ones(n), (self.seg_dim, np.arange(n))), shape=(self.dims, n))

    def is_uniform_symmetric(self, tol: float = 1e-12) -> bool:
        """Same grid in every dimension, symmetric around zero, zero on the grid."""
        v0 = self.values[0]
        if any(v.size != v0.size or np.max(np.abs(v - v0)) > tol for v in self.values):
            return False
        if np.max(np.abs(v0 + v0[::-1])) > tol:
            return False
        return (v0.size - 1) % 2 == 0

    def to_dict(self) -> dict:
        return {"dims": self.dims, "bounds": [[float(a), float(b)] for a, b in zip(self.lower, self.upper)],
                "breakpoints": [b.tolist() for b in self.breakpoints]}

    @classmethod
    def from_dict(cls, d: dict) -> "BreakpointGrid":
        bounds = np.asarray(d["bounds"], dtype=float)
        grid = cls(bounds[:, 0], bounds[:, 1], tuple(np.asarray(b, dtype=float) for b in d["breakpoints"]))
        if "dims" in d and grid.dims != int(d["dims"]):
            raise StructuralError("dims field does not match bounds")
        return grid


def fold(grid: BreakpointGrid, theta) -> np.ndarray:
    """Folding operator F; accepts a vector or a stack of row vectors."""
    th = _as_vec(theta, grid.dims, "theta")
    return np.clip(th[..., grid.seg_dim] - grid.seg_lo, 0.0, grid.widths)


def fold_plus(grid: BreakpointGrid, psi_lifted) -> np.ndarray:
    """Summing left inverse F+ of the folding operator."""
    p = _as_vec(psi_lifted, grid.lifted_dim, "lifted vector")
    out = np.zeros(p.shape[:-1] + (grid.dims,))
    for i in range(grid.dims):
        out[..., i] = grid.lower[i] + p[..., grid.offsets[i]:grid.offsets[i + 1]].sum(axis=-1)
    return out


@dataclass(frozen=True)
class Embedding:
    """Affine information-preserving map ``theta = matrix @ psi + offset``.

    ``theta_stage[i]`` and ``psi_stage[k]`` give the stage at which each
    coordinate is revealed; the matrix must be lower block triangular in
    those stages.
    """

    matrix: np.ndarray
    theta_stage: np.ndarray
    psi_stage: np.ndarray
    offset: Optional[np.ndarray] = None
    left_inverse: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        E = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        I, K = E.shape
        ts = np.asarray(self.theta_stage, dtype=int).reshape(-1)
        ps = np.asarray(self.psi_stage, dtype=int).reshape(-1)
        if ts.size != I or ps.size != K:
            raise StructuralError("stage labels do not match the embedding shape")
        off = np.zeros(I) if self.offset is None else _as_vec(self.offset, I, "offset").copy()
        Einv = np.linalg.pinv(E) if self.left_inverse is None else np.asarray(self.left_inverse, float)
        if Einv.shape != (K, I):
            raise StructuralError("left inverse has the wrong shape")
        if np.max(np.abs(Einv @ E - np.eye(K))) > 1e-9:
            raise StructuralError("embedding is not information preserving")
        reads_future = (np.abs(E) > 0) & (ps[None, :] > ts[:, None])
        if np.any(reads_future):
            raise StructuralError("embedding reads uncertainty from a later stage")
        for name, val in (("matrix", E), ("theta_stage", ts), ("psi_stage", ps), ("offset", off), ("left_inverse", Einv)):
            object.__setattr__(self, name, val)

    @property
    def dims(self) -> int:
        return self.matrix.shape[0]

    @property
    def K(self) -> int:
        return self.matrix.shape[1]

    @property
    def stage_blocks(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        stages = sorted(set(self.theta_stage.tolist()) | set(self.psi_stage.tolist()))
        return [(np.where(self.theta_stage == t)[0], np.where(self.psi_stage == t)[0]) for t in stages]

    def apply(self, psi) -> np.ndarray:
        p = _as_vec(psi, self.K, "psi")
        return p @ self.matrix.T + self.offset

    def invert(self, theta) -> np.ndarray:
        th = _as_vec(theta, self.dims, "theta")
        return (th - self.offset) @ self.left_inverse.T

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "offset": self.offset.tolist(),
                "theta_stage": self.theta_stage.tolist(), "psi_stage": self.psi_stage.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Embedding":
        return cls(np.asarray(d["matrix"], float), d["theta_stage"], d["psi_stage"], d.get("offset"))


def identity_embedding(K: int, stages: Optional[Sequence[int]] = None, offset=None, scale: float = 1.0) -> Embedding:
    st = np.arange(1, K + 1) if stages is None else np.asarray(stages, int)
    return Embedding(scale * np.eye(K), st, st, offset, np.eye(K) / scale)


def ar_inverse_embedding(T: int, mu: float, nu: float, alpha: float) -> Embedding:
    """Map demands to constituent shocks of the autoregressive demand process.

    Demands follow ``psi_t = mu + nu * (zeta_t + alpha * sum_{t'<t} zeta_t')``;
    the embedding returns ``zeta``. The intercept ``mu`` enters through the
    offset, so the linear part stays lower triangular.
    """
    if T < 1:
        raise StructuralError("T must be positive")
    if nu == 0:
        raise ValueError("nu must be nonzero")
    forward = np.eye(T) + alpha * np.tril(np.ones((T, T)), -1)
    E = np.linalg.inv(forward) / nu
    E[np.abs(E) < 1e-300] = 0.0
    E = np.tril(E)
    offset = -E @ np.full(T, mu)
    st = np.arange(1, T + 1)
    return Embedding(E, st, st, offset, nu * forward)


def ar_forward(zeta, mu: float, nu: float, alpha: float) -> np.ndarray:
    """Demands generated by shocks ``zeta`` (rows are paths)."""
    z = np.asarray(zeta, dtype=float)
    cum = np.cumsum(z, axis=-1) - z
    return mu + nu * (z + alpha * cum)


@dataclass(frozen=True)
class LiftingOperator:
    embedding: Embedding
    grid: BreakpointGrid

    def __post_init__(self) -> None:
        if self.grid.dims != self.embedding.dims:
            raise StructuralError("grid and embedding disagree on the embedded dimension")

    @property
    def lifted_dim(self) -> int:
        return self.grid.lifted_dim

    @property
    def lifted_stage(self) -> np.ndarray:
        return self.embedding.theta_stage[self.grid.seg_dim]

    def lift(self, psi) -> np.ndarray:
        return fold(self.grid, self.embedding.apply(psi))

    def retract(self, psi_lifted) -> np.ndarray:
        return retract(self, psi_lifted)

    def retract_affine(self) -> Tuple[np.ndarray, np.ndarray]:
        """``(r0, Rm)`` with ``retract(p) = r0 + Rm @ p``."""
        Einv = self.embedding.left_inverse
        r0 = Einv @ (self.grid.lower - self.embedding.offset)
        Rm = np.asarray(self.grid.sum_matrix().T @ Einv.T).T
        return r0, Rm

    def to_dict(self) -> dict:
        return {"embedding": self.embedding.to_dict(), "grid": self.grid.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "LiftingOperator":
        return cls(Embedding.from_dict(d["embedding"]), BreakpointGrid.from_dict(d["grid"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def retract(op: LiftingOperator, psi_lifted) -> np.ndarray:
    """Affine left inverse R = E+ o F+ of the lifting."""
    return op.embedding.invert(fold_plus(op.grid, psi_lifted))


@dataclass
class HullRows:
    """``A_le @ p <= b_le`` and ``A_eq @ p == b_eq`` over the lifted space."""

    A_le: sp.csr_matrix
    b_le: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray

    def contains(self, p, tol: float = 1e-9) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        ok = np.all(self.A_le @ p.T <= self.b_le[:, None] + tol, axis=0)
        if self.b_eq.size:
            ok &= np.all(np.abs(self.A_eq @ p.T - self.b_eq[:, None]) <= tol, axis=0)
        return ok


def hull_constraints(grid: BreakpointGrid, lower, upper) -> HullRows:
    """Convex hull of ``F([lower, upper])`` as linear rows.

    Per segment the bounds ``F_ij(lower) <= p_ij <= F_ij(upper)``; for each
    breakpoint strictly inside the box the chained fill-ratio row
    ``(p_ij - F_ij(l)) D_{i,j+1} >= (p_{i,j+1} - F_{i,j+1}(l)) D_ij`` with
    ``D = F(u) - F(l)``. Segments with ``D = 0`` are fixed by an equality.
    """
    lo = _as_vec(lower, grid.dims, "box lower")
    hi = _as_vec(upper, grid.dims, "box upper")
    if np.any(lo > hi) or np.any(lo < grid.lower - 1e-12) or np.any(hi > grid.upper + 1e-12):
        raise StructuralError("box must be nonempty and nested in the grid bounds")
    lo = np.maximum(lo, grid.lower)
    hi = np.minimum(hi, grid.upper)
    Fl, Fu = fold(grid, lo), fold(grid, hi)
    D = Fu - Fl
    n = grid.lifted_dim
    degenerate = D <= 0.0
    le_r, le_c, le_v, le_b = [], [], [], []
    row = 0
    for s in np.where(~degenerate)[0]:
        le_r += [row, row + 1]
        le_c += [s, s]
        le_v += [-1.0, 1.0]
        le_b += [-Fl[s], Fu[s]]
        row += 2
    for i in range(grid.dims):
        bp = grid.breakpoints[i]
        for jj, z in enumerate(bp, start=1):
            if lo[i] < z < hi[i]:
                a = grid.segment(i, jj)
                b = grid.segment(i, jj + 1)
                le_r += [row, row]
                le_c += [a, b]
                le_v += [-D[b], D[a]]
                le_b.append(-D[b] * Fl[a] + D[a] * Fl[b])
                row += 1
    eq_idx = np.where(degenerate)[0]
    A_le = sp.csr_matrix((le_v, (le_r, le_c)), shape=(row, n))
    A_eq = sp.csr_matrix((np.ones(eq_idx.size), (np.arange(eq_idx.size), eq_idx)), shape=(eq_idx.size, n))
    return HullRows(A_le, np.asarray(le_b, float), A_eq, Fl[eq_idx].copy())


def equidistant_breakpoints(lower, upper, count: int) -> BreakpointGrid:
    """``count`` breakpoints per dimension splitting the bounds evenly."""
    if count < 0 or int(count) != count:
        raise ValueError("breakpoint count must be a nonnegative integer")
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    bps = []
    for a, b in zip(lo, hi):
        if b > a and count > 0:
            bps.append(a + (b - a) * np.arange(1, count + 1) / (count + 1))
        else:
            bps.append(np.zeros(0))
    return BreakpointGrid(lo, hi, tuple(bps))


def affine_grid(lower, upper) -> BreakpointGrid:
    """Grid without breakpoints; lifted affine rules are plain affine rules."""
    return equidistant_breakpoints(lower, upper, 0)


def full_breakpoints(eta, lower, upper, tol: float = 1e-12) -> BreakpointGrid:
    """Breakpoints at the signed differences of ``eta`` plus zero."""
    vals = np.asarray(getattr(eta, "values", eta), dtype=float)
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if np.max(np.abs(lo + hi)) > tol or np.max(np.abs(hi - hi[0])) > tol:
        raise AssumptionError("full breakpoints need bounds symmetric around zero and equal across dimensions")
    diffs = np.diff(vals)
    cand = np.sort(np.concatenate([diffs, -diffs, [0.0]]))
    uniq: List[float] = []
    for v in cand:
        if not uniq or v - uniq[-1] > tol:
            uniq.append(float(v))
    B = hi[0]
    inner = np.array([v for v in uniq if -B + tol < v < B - tol])
    return BreakpointGrid(lo, hi, tuple(inner.copy() for _ in range(lo.size)))
