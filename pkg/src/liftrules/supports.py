"""Support sets in embedded space, their bounding boxes and grid distances.

The maximal grid distance of a rectangle ``[zm, zp]`` over a set ``S`` is
``dbar(S, rect) = max_{theta in S} sum_i dist(theta_i, [zm_i, zp_i])``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .lifting import AssumptionError, StructuralError


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, float).reshape(-1)
        hi = np.asarray(self.upper, float).reshape(-1)
        if lo.size != hi.size or np.any(lo > hi):
            raise StructuralError("box needs lower <= upper with matching lengths")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size


@dataclass(frozen=True)
class NormBall:
    p: float
    radius: float
    center: np.ndarray

    def __post_init__(self) -> None:
        if not self.p >= 1:
            raise ValueError("norm order must be at least 1")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(-1))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def dual_p(self) -> float:
        if self.p == 1:
            return np.inf
        if np.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class Polytope:
    """``{theta : V theta <= d}``."""

    V: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        V = np.atleast_2d(np.asarray(self.V, float))
        d = np.asarray(self.d, float).reshape(-1)
        if V.shape[0] != d.size:
            raise StructuralError("polytope rows and rhs differ in length")
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.V.shape[1]


@dataclass(frozen=True)
class Intersection:
    members: Tuple["SupportSet", ...]

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("intersection of no sets")
        if len({m.dim for m in self.members}) != 1:
            raise StructuralError("intersection members differ in dimension")
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def dim(self) -> int:
        return self.members[0].dim


SupportSet = Union[Box, NormBall, Polytope, Intersection]


@dataclass(frozen=True)
class EtaFunction:
    """``values[i]`` is the largest l1 mass of any ``i`` coordinates over the set."""

    values: np.ndarray
    permutation_invariant: bool = True

    def __post_init__(self) -> None:
        v = np.asarray(self.values, float).reshape(-1)
        if v.size < 1 or v[0] != 0.0:
            raise ValueError("eta must start with eta(0) = 0")
        if np.any(np.diff(v) < -1e-12):
            raise ValueError("eta must be nondecreasing")
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> int:
        return self.values.size - 1

    def __call__(self, i: int) -> float:
        return float(self.values[i])

    def differences(self) -> np.ndarray:
        return np.diff(self.values)

    def has_nonincreasing_differences(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.differences()) <= tol))


def eta_norm_ball(p: float, radius: float, I: int) -> EtaFunction:
    """``eta(i) = i**(1 - 1/p) * radius`` for a p-norm ball centred at zero."""
    if not p >= 1:
        raise ValueError("norm order must be at least 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    i = np.arange(I + 1, dtype=float)
    expo = 1.0 if np.isinf(p) else 1.0 - 1.0 / p
    vals = np.where(i > 0, i ** expo, 0.0) * radius
    return EtaFunction(vals, True)


def eta_intersection(etas: Sequence[EtaFunction]) -> EtaFunction:
    etas = list(etas)
    if not etas:
        raise ValueError("need at least one eta function")
    if len({e.values.size for e in etas}) != 1:
        raise StructuralError("eta functions have different lengths")
    vals = np.min(np.stack([e.values for e in etas]), axis=0)
    return EtaFunction(vals, all(e.permutation_invariant for e in etas))


def eta_box_circumscription(lower, upper) -> EtaFunction:
    """Eta of the smallest sign- and permutation-invariant set containing the box."""
    lo = np.asarray(lower, float).reshape(-1)
    hi = np.asarray(upper, float).reshape(-1)
    m = np.sort(np.maximum(np.abs(lo), np.abs(hi)))[::-1]
    return EtaFunction(np.concatenate([[0.0], np.cumsum(m)]), True)


def eta_of(s: SupportSet) -> Optional[EtaFunction]:
    """Eta for sets that are invariant under signed permutations, else None."""
    if isinstance(s, NormBall):
        if np.any(s.center != 0):
            return None
        return eta_norm_ball(s.p, s.radius, s.dim)
    if isinstance(s, Box):
        if np.all(s.lower == -s.upper) and np.all(s.upper == s.upper[0]):
            return eta_norm_ball(np.inf, float(s.upper[0]), s.dim) if s.upper[0] > 0 else EtaFunction(np.zeros(s.dim + 1))
        return None
    if isinstance(s, Intersection):
        parts = [eta_of(m) for m in s.members]
        if any(e is None for e in parts):
            return None
        return eta_intersection(parts)
    return None


def bounding_box(s: SupportSet, backend: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds; tight except for intersections."""
    if isinstance(s, Box):
        return s.lower.copy(), s.upper.copy()
    if isinstance(s, NormBall):
        return s.center - s.radius, s.center + s.radius
    if isinstance(s, Intersection):
        boxes = [bounding_box(m, backend) for m in s.members]
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        if np.any(lo > hi):
            raise StructuralError("intersection is empty")
        return lo, hi
    if isinstance(s, Polytope):
        lo = np.empty(s.dim)
        hi = np.empty(s.dim)
        for i in range(s.dim):
            e = np.zeros(s.dim)
            e[i] = 1.0
            hi[i] = support_function(s, e, backend)
            lo[i] = -support_function(s, -e, backend)
        return lo, hi
    raise TypeError(f"unsupported support kind {type(s).__name__}")


def support_function(s: SupportSet, w, backend: Optional[str] = None) -> float:
    """``max_{theta in s} w @ theta``."""
    w = np.asarray(w, float).reshape(-1)
    if isinstance(s, Box):
        return float(np.sum(np.where(w > 0, w * s.upper, w * s.lower)))
    if isinstance(s, NormBall):
        return float(w @ s.center + s.radius * np.linalg.norm(w, s.dual_p))
    from .solver import ProgramBuilder, SolveRequest, solve

    pb = ProgramBuilder()
    th = pb.add_vars("theta", s.dim, -np.inf)
    pb.set_objective(np.arange(th.start, th.stop), w)
    conic_rows(pb, s, np.arange(th.start, th.stop), None, "set")
    prog = pb.build("max")
    res = solve(SolveRequest(prog, backend))
    if res.status == "unbounded":
        raise ValueError("support set is unbounded")
    if not res.ok:
        raise RuntimeError(f"support function solve failed: {res.status}")
    return float(res.objective)


def conic_rows(pb, s: SupportSet, cols: np.ndarray, scale_col: Optional[int], prefix: str,
               coef: Optional[np.ndarray] = None, const: Optional[np.ndarray] = None,
               ball_facets: Optional[int] = None) -> None:
    """Add rows forcing ``expr in scale * s`` to a program builder.

    ``expr = const*scale + sum_c coef[r, c] * x[cols[c]]`` row by row; by
    default ``coef`` is the identity and ``const`` is zero. If ``scale_col``
    is None the scale is the constant 1. With ``ball_facets`` set, 2-norm
    balls are replaced by a polyhedral outer approximation.
    """
    I = s.dim
    coef = np.eye(I) if coef is None else np.asarray(coef, float)
    const = np.zeros(I) if const is None else np.asarray(const, float)
    cols = np.asarray(cols, int)

    def affine_le(G: np.ndarray, h: np.ndarray, name: str) -> None:
        # G @ expr <= scale * h
        M = G @ coef
        rr, cc = np.nonzero(M)
        rows, colv, vals = list(rr), list(cols[cc]), list(M[rr, cc])
        rhs_const = G @ const
        if scale_col is None:
            b = h - rhs_const
        else:
            k = np.arange(G.shape[0])
            rows += list(k)
            colv += [scale_col] * G.shape[0]
            vals += list(rhs_const - h)
            b = np.zeros(G.shape[0])
        pb.add_rows(f"{prefix}:{name}", "le", rows, colv, vals, b)

    if isinstance(s, Box):
        affine_le(np.vstack([np.eye(I), -np.eye(I)]), np.concatenate([s.upper, -s.lower]), "box")
    elif isinstance(s, Polytope):
        affine_le(s.V, s.d, "poly")
    elif isinstance(s, Intersection):
        for m_i, m in enumerate(s.members):
            conic_rows(pb, m, cols, scale_col, f"{prefix}.{m_i}", coef, const, ball_facets)
    elif isinstance(s, NormBall):
        shifted = const - s.center
        if np.isinf(s.p):
            affine_le(np.vstack([np.eye(I), -np.eye(I)]),
                      np.concatenate([s.center + s.radius, -(s.center - s.radius)]), "linf")
        elif s.p == 1:
            # sign-pattern free form: auxiliary w >= |expr - c|, sum w <= r
            w = pb.add_vars(f"{prefix}:l1aux{pb.n}", I, 0.0)
            wcols = np.arange(w.start, w.stop)
            G = np.vstack([np.eye(I), -np.eye(I)])
            M = G @ coef
            rr, cc = np.nonzero(M)
            rows, colv, vals = list(rr), list(cols[cc]), list(M[rr, cc])
            rows += list(range(2 * I))
            colv += list(wcols) * 2
            vals += [-1.0] * (2 * I)
            if scale_col is None:
                b = -(G @ shifted)
            else:
                rows += list(range(2 * I))
                colv += [scale_col] * (2 * I)
                vals += list(G @ shifted)
                b = np.zeros(2 * I)
            pb.add_rows(f"{prefix}:l1abs", "le", rows, colv, vals, b)
            rows, colv, vals = [0] * I, list(wcols), [1.0] * I
            if scale_col is None:
                b = np.array([s.radius])
            else:
                rows.append(0)
                colv.append(scale_col)
                vals.append(-s.radius)
                b = np.zeros(1)
            pb.add_rows(f"{prefix}:l1sum", "le", rows, colv, vals, b)
        elif s.p == 2 and ball_facets:
            G, h = polyhedral_ball(I, ball_facets)
            G_full = G
            h_full = h * s.radius + G @ s.center
            affine_le(G_full, h_full, "l2poly")
        elif s.p == 2:
            # b - A x in SOC: (r*scale, expr - c*scale)
            rows, colv, vals = [], [], []
            if scale_col is None:
                b = np.concatenate([[s.radius], -shifted])
            else:
                rows.append(0)
                colv.append(scale_col)
                vals.append(-s.radius)
                b = np.zeros(I + 1)
                for i in range(I):
                    if shifted[i] != 0.0:
                        rows.append(1 + i)
                        colv.append(scale_col)
                        vals.append(shifted[i])
            rr, cc = np.nonzero(coef)
            rows += list(1 + rr)
            colv += list(cols[cc])
            vals += list(coef[rr, cc])
            pb.add_rows(f"{prefix}:soc", "soc", rows, colv, vals, b, sizes=[I + 1])
        else:
            raise NotImplementedError("conic rows exist for p in {1, 2, inf} only")
    else:
        raise TypeError(f"unsupported support kind {type(s).__name__}")


def polyhedral_ball(I: int, facets: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """Outer approximation of the unit 2-ball: ``facets`` directions in each coordinate plane."""
    rows = []
    if I == 1:
        rows = [[1.0], [-1.0]]
    else:
        ang = 2 * np.pi * np.arange(facets) / facets
        for a, b in itertools.combinations(range(I), 2):
            for t in ang:
                r = np.zeros(I)
                r[a], r[b] = np.cos(t), np.sin(t)
                rows.append(r)
    G = np.asarray(rows)
    return G, np.ones(G.shape[0])


def dbar_box(lower, upper, zminus, zplus) -> float:
    """Exact maximal l1 distance from the box to the rectangle."""
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    zm, zp = np.asarray(zminus, float), np.asarray(zplus, float)
    if not lo.shape == hi.shape == zm.shape == zp.shape:
        raise StructuralError("box and rectangle dimensions differ")
    return float(np.sum(np.maximum(np.maximum(hi - zp, 0.0), np.maximum(zm - lo, 0.0))))


def dbar_symmetric(eta: EtaFunction, zplus_sorted) -> float:
    """Maximal l1 distance to ``[-z+, z+]`` over a permutation-invariant set.

    ``zplus_sorted`` must be nondecreasing; the value is
    ``max(0, max_i eta(i) - sum_{i' <= i} z+_{i'})``.
    """
    z = np.asarray(zplus_sorted, float).reshape(-1)
    if np.any(z < 0):
        raise ValueError("z+ entries must be nonnegative")
    if np.any(np.diff(z) < 0):
        raise ValueError("z+ must be sorted nondecreasing")
    if z.size != eta.dims:
        raise StructuralError("eta and rectangle dimensions differ")
    return float(max(0.0, np.max(eta.values[1:] - np.cumsum(z))))


def dbar_norm_ball(ball: NormBall, zminus, zplus) -> np.ndarray:
    """Exact maximal l1 distance for arbitrary rectangles over a p-norm ball.

    Vectorized over leading axes of ``zminus``/``zplus``. The distance is a
    maximum of linear pieces indexed by sign patterns; a piece with support
    size ``m`` contributes the ``m`` best per-coordinate offsets plus
    ``radius * m**(1/q)``.
    """
    zm = np.asarray(zminus, float)
    zp = np.asarray(zplus, float)
    best = np.maximum(ball.center - zp, zm - ball.center)
    best = -np.sort(-best, axis=-1)
    csum = np.cumsum(best, axis=-1)
    q = ball.dual_p
    m = np.arange(1, ball.dim + 1, dtype=float)
    norm = np.ones_like(m) if np.isinf(q) else m ** (1.0 / q)
    vals = csum + ball.radius * norm
    return np.maximum(vals.max(axis=-1), 0.0)


def dbar_exact(s: SupportSet, zminus, zplus, backend: Optional[str] = None) -> float:
    """Exact maximal l1 distance for any supported set (closed forms where available)."""
    zm = np.asarray(zminus, float).reshape(-1)
    zp = np.asarray(zplus, float).reshape(-1)
    if isinstance(s, Box):
        return dbar_box(s.lower, s.upper, zm, zp)
    if isinstance(s, NormBall):
        return float(dbar_norm_ball(s, zm, zp))
    return dbar_enumerate(s, zm, zp, backend)


def dbar_enumerate(s: SupportSet, zminus, zplus, backend: Optional[str] = None) -> float:
    """Enumerate all 3**I sign patterns of the l1 distance; small I only."""
    zm = np.asarray(zminus, float).reshape(-1)
    zp = np.asarray(zplus, float).reshape(-1)
    I = zm.size
    if I > 10:
        raise ValueError("sign enumeration is limited to I <= 10")
    best = 0.0
    for pattern in itertools.product((-1, 0, 1), repeat=I):
        w = np.asarray(pattern, float)
        if not np.any(w):
            continue
        const = float(np.sum(np.where(w > 0, -zp, 0.0)) + np.sum(np.where(w < 0, zm, 0.0)))
        best = max(best, const + support_function(s, w, backend))
    return best


def sample(s: SupportSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples for boxes and balls; rejection from the bounding box otherwise."""
    if isinstance(s, Box):
        return s.lower + (s.upper - s.lower) * rng.random((n, s.dim))
    if isinstance(s, NormBall):
        return s.center + s.radius * _unit_ball(s.p, s.dim, n, rng)
    lo, hi = bounding_box(s)
    out: List[np.ndarray] = []
    got = 0
    while got < n:
        cand = lo + (hi - lo) * rng.random((4 * n, s.dim))
        keep = cand[contains(s, cand)]
        out.append(keep)
        got += keep.shape[0]
    return np.vstack(out)[:n]


def _unit_ball(p: float, I: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if np.isinf(p):
        return 2.0 * rng.random((n, I)) - 1.0
    if p == 2:
        g = rng.standard_normal((n, I))
    else:
        g = rng.gamma(1.0 / p, 1.0, (n, I)) ** (1.0 / p) * rng.choice([-1.0, 1.0], (n, I))
    nrm = np.linalg.norm(g, p, axis=1, keepdims=True)
    r = rng.random((n, 1)) ** (1.0 / I)
    return g / nrm * r


def sample_ball_boundary(p: float, radius: float, I: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points with ``||theta||_p = radius`` from a mixture that reaches faces and vertices."""
    k = n // 3
    parts = []
    if np.isinf(p):
        u = rng.random((n, I))
        snap = rng.random((n, I)) < 0.5
        u[snap] = 1.0
        u[np.arange(n), rng.integers(0, I, n)] = 1.0
        pts = u
    else:
        g = rng.standard_normal((k, I))
        parts.append(np.abs(g) / np.linalg.norm(g, p, axis=1, keepdims=True))
        for a in (1.0, 0.05):
            w = rng.dirichlet(np.full(I, a), n // 3 if a == 1.0 else n - k - n // 3)
            parts.append(w ** (1.0 / p))
        pts = np.vstack(parts)
    signs = rng.choice([-1.0, 1.0], pts.shape)
    return radius * pts * signs


def contains(s: SupportSet, pts, tol: float = 1e-9) -> np.ndarray:
    P = np.atleast_2d(np.asarray(pts, float))
    if isinstance(s, Box):
        return np.all((P >= s.lower - tol) & (P <= s.upper + tol), axis=1)
    if isinstance(s, NormBall):
        return np.linalg.norm(P - s.center, s.p, axis=1) <= s.radius + tol
    if isinstance(s, Polytope):
        return np.all(P @ s.V.T <= s.d + tol, axis=1)
    if isinstance(s, Intersection):
        ok = np.ones(P.shape[0], bool)
        for m in s.members:
            ok &= contains(m, P, tol)
        return ok
    raise TypeError(f"unsupported support kind {type(s).__name__}")


@dataclass
class SupportFamily:
    subsets: List[SupportSet]
    boxes: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    global_bounds: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self) -> None:
        if not self.subsets:
            raise ValueError("a support family needs at least one subset")
        if len({s.dim for s in self.subsets}) != 1:
            raise StructuralError("subsets differ in dimension")
        if not self.boxes:
            self.boxes = [bounding_box(s) for s in self.subsets]
        lo = np.min([b[0] for b in self.boxes], axis=0)
        hi = np.max([b[1] for b in self.boxes], axis=0)
        if self.global_bounds is None:
            self.global_bounds = (lo, hi)
        else:
            glo, ghi = (np.asarray(v, float) for v in self.global_bounds)
            if np.any(glo > lo + 1e-12) or np.any(ghi < hi - 1e-12):
                raise StructuralError("subset boxes are not nested in the global bounds")
            self.global_bounds = (glo, ghi)

    @property
    def G(self) -> int:
        return len(self.subsets)

    @property
    def dim(self) -> int:
        return self.subsets[0].dim

    def eta(self, g: int) -> Optional[EtaFunction]:
        return eta_of(self.subsets[g])

    def dbar(self, g: int, zminus, zplus) -> float:
        return dbar_exact(self.subsets[g], zminus, zplus)

    def to_dict(self) -> dict:
        return {"subsets": [support_to_dict(s) for s in self.subsets],
                "global_bounds": [np.asarray(v).tolist() for v in self.global_bounds]}


def support_to_dict(s: SupportSet) -> dict:
    if isinstance(s, Box):
        return {"kind": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, NormBall):
        return {"kind": "norm_ball", "p": "inf" if np.isinf(s.p) else s.p, "radius": s.radius,
                "center": s.center.tolist()}
    if isinstance(s, Polytope):
        return {"kind": "polytope", "V": s.V.tolist(), "d": s.d.tolist()}
    return {"kind": "intersection", "members": [support_to_dict(m) for m in s.members]}


def support_from_dict(d: dict) -> SupportSet:
    kind = d["kind"]
    if kind == "box":
        return Box(d["lower"], d["upper"])
    if kind == "norm_ball":
        p = float("inf") if d["p"] in ("inf", "Infinity") else float(d["p"])
        return NormBall(p, float(d["radius"]), d["center"])
    if kind == "polytope":
        return Polytope(d["V"], d["d"])
    if kind == "intersection":
        return Intersection(tuple(support_from_dict(m) for m in d["members"]))
    raise ValueError(f"unknown support kind {kind!r}")
