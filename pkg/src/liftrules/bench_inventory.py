"""Single-product multi-period inventory benchmark.

Pre-committed orders ``y_t`` are chosen here and now, reactive orders
``x_t`` after observing demand ``psi_t``. Holding and backlog costs use
epigraph recourse variables ``h_t >= I_t, h_t >= 0`` and
``e_t >= -I_t, e_t >= 0``. Demand follows
``psi_t = mu + nu * (zeta_t + alpha * sum_{t'<t} zeta_t')``.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lifting import (LiftingOperator, affine_grid, ar_forward, ar_inverse_embedding, equidistant_breakpoints,
                      full_breakpoints, identity_embedding)
from .reformulation import (ConstraintBlock, DualProgram, MultistageProblem, PiecewiseAffinePolicy, build_data_driven,
                            build_robust, build_stochastic, estimate_moments, sample_boxes)
from .separation import cut_loop
from .solver import SolveOptions
from .supports import NormBall, SupportFamily, eta_box_circumscription, eta_of, sample

log = logging.getLogger(__name__)

CSV_HEADER = ["kind", "policy", "T", "alpha", "epsilon", "objective", "oos_mean", "oos_q20", "oos_q80",
              "solve_sec", "cuts", "status"]
POLICIES = ("AFF", "GLIFT1", "GLIFT3", "GLIFTF", "LIFT1", "LIFT3", "LIFTF")
KINDS = ("stochastic", "robust", "data_driven")
EPS_GRID = (0.0,) + tuple(10.0 ** x for x in (-3, -2, -1, -0.5, 0, 0.25, 0.5, 0.75, 1, 1.25, 1.5))


class ConfigurationError(ValueError):
    """Inconsistent experiment or instance parameters."""


@dataclass(frozen=True)
class InventoryInstance:
    T: int
    c: Tuple[float, ...]
    h: Tuple[float, ...]
    b: Tuple[float, ...]
    xbar: Tuple[float, ...]
    service: float
    mu: float
    nu: float
    alpha: float
    I0: float = 0.0
    support: str = "l2"  # constituent shocks: "l2" unit ball or "linf" unit square

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigurationError("T must be at least 1")
        for name in ("c", "h", "b", "xbar"):
            v = getattr(self, name)
            if len(v) != self.T:
                raise ConfigurationError(f"{name} needs one entry per period")
        if min(self.xbar) < 0:
            raise ConfigurationError("order caps must be nonnegative")
        if self.support not in ("l2", "linf"):
            raise ConfigurationError("support must be 'l2' or 'linf'")
        if self.nu <= 0:
            raise ConfigurationError("nu must be positive")

    @classmethod
    def stochastic(cls, T: int, alpha: float = 0.0, **kw) -> "InventoryInstance":
        mu = kw.pop("mu", 200.0)
        base = dict(c=(0.1,) * T, h=(0.02,) * T, b=(0.0,) * (T - 1) + (0.1,), xbar=(260.0,) * T,
                    service=0.05, mu=mu, nu=T / math.sqrt(mu), alpha=alpha, support="l2")
        base.update(kw)
        return cls(T=T, **base)

    robust = stochastic

    @classmethod
    def data_driven(cls, T: int, alpha: float = 0.25, **kw) -> "InventoryInstance":
        mu = kw.pop("mu", 200.0)
        base = dict(c=(0.1,) * T, h=(0.02,) * T, b=(0.2,) * (T - 1) + (2.0,), xbar=(260.0,) * T,
                    service=math.inf, mu=mu, nu=T / mu, alpha=alpha, support="linf")
        base.update(kw)
        return cls(T=T, **base)

    def shock_set(self) -> NormBall:
        return NormBall(2.0 if self.support == "l2" else math.inf, 1.0, np.zeros(self.T))

    def sample_shocks(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample(self.shock_set(), n, rng)

    def sample_demands(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return ar_forward(self.sample_shocks(rng, n), self.mu, self.nu, self.alpha)


def _names(T: int) -> List[str]:
    return [f"{v}{t}" for v in ("y", "x", "h", "e") for t in range(1, T + 1)]


def make_inventory(instance: InventoryInstance, variant: str) -> MultistageProblem:
    """Linear multistage model over raw demands ``psi``."""
    if variant not in KINDS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    if variant in ("stochastic", "robust") and instance.support != "l2":
        raise ConfigurationError(f"{variant} instances use 2-norm ball shocks")
    if variant == "data_driven" and instance.support != "linf":
        raise ConfigurationError("data-driven instances use infinity-norm shocks")
    T = instance.T
    n = 4 * T
    Y, X, H, E = (np.arange(T) + k * T for k in range(4))
    L = np.tril(np.ones((T, T)))  # cumulative sums up to t
    rows_A, rows_b0, rows_B = [], [], []

    def add(A, b0, B):
        rows_A.append(np.atleast_2d(A))
        rows_b0.append(np.atleast_1d(b0))
        rows_B.append(np.atleast_2d(B))

    eye = np.eye(T)
    zT = np.zeros((T, T))
    for var in (Y, X):
        A = np.zeros((T, n)); A[:, var] = -eye
        add(A, np.zeros(T), zT)
    A = np.zeros((T, n)); A[:, X] = eye
    add(A, np.asarray(instance.xbar, float), zT)
    # I_t - h_t <= 0
    A = np.zeros((T, n)); A[:, Y] = L; A[:, X] = L; A[:, H] = -eye
    add(A, np.full(T, -instance.I0), L)
    A = np.zeros((T, n)); A[:, H] = -eye
    add(A, np.zeros(T), zT)
    # -I_t - e_t <= 0
    A = np.zeros((T, n)); A[:, Y] = -L; A[:, X] = -L; A[:, E] = -eye
    add(A, np.full(T, instance.I0), -L)
    A = np.zeros((T, n)); A[:, E] = -eye
    add(A, np.zeros(T), zT)
    if math.isfinite(instance.service):
        A = np.zeros((1, n)); A[0, E] = 1.0
        add(A, [0.0], np.full((1, T), instance.service))
    # pre-commitments are modelled as deviations from the mean demand
    offset = np.zeros(n)
    offset[Y] = instance.mu
    A = np.vstack(rows_A)
    # y >= 0, order caps and the service row are far from binding at these
    # scales; the dual adds them back only if the extracted rule violates them
    lazy = np.zeros(A.shape[0], bool)
    lazy[:T] = True
    lazy[2 * T:3 * T] = True
    lazy[7 * T:] = True
    block = ConstraintBlock(A, np.concatenate(rows_b0) - A @ offset, np.vstack(rows_B), lazy)
    c0 = np.zeros(n)
    c0[X] = instance.c
    c0[H] = instance.h
    c0[E] = instance.b
    stages = np.concatenate([np.zeros(T, int), np.tile(np.arange(1, T + 1), 3)])
    return MultistageProblem(stages, np.arange(1, T + 1), c0, None, [block], _names(T), offset)


# ----------------------------------------------------------------------------
# liftings per policy
# ----------------------------------------------------------------------------

def policy_grid(policy: str, lower, upper, eta=None):
    tag = policy[-1]
    if policy == "AFF":
        return affine_grid(lower, upper)
    if tag == "1":
        return equidistant_breakpoints(lower, upper, 1)
    if tag == "3":
        return equidistant_breakpoints(lower, upper, 3)
    if tag == "F":
        return full_breakpoints(eta, lower, upper)
    raise ConfigurationError(f"unknown policy {policy!r}")


def _check_policy(policy: str) -> None:
    if policy not in POLICIES:
        raise ConfigurationError(f"unknown policy {policy!r}; choose from {POLICIES}")


@dataclass
class PolicySolve:
    policy: str
    objective: float
    status: str
    seconds: float
    cuts: int
    rounds: int
    rule: Optional[PiecewiseAffinePolicy]
    program: Optional[DualProgram] = None
    history: list = field(default_factory=list)


def _finish(policy: str, program: DualProgram, family: SupportFamily, cut_mode: str, tol: float,
            max_rounds: int, t0: float) -> PolicySolve:
    if policy.startswith("LIFT"):
        out = cut_loop(program, family, program.lifting.grid, cut_mode, tol, max_rounds)
        sol, rounds, history = out.solution, out.rounds, out.history
        converged = out.converged
    else:
        sol, rounds, history, converged = program.solve(), 1, [], True
    secs = time.perf_counter() - t0
    status = sol.status if converged or not sol.ok else "optimal_unconverged"
    rule = program.extract_policy(sol) if sol.ok else None
    return PolicySolve(policy, sol.objective, status, secs, program.cut_count, rounds, rule, program, history)


def shock_lifting(instance: InventoryInstance, policy: str) -> Tuple[LiftingOperator, SupportFamily]:
    emb = ar_inverse_embedding(instance.T, instance.mu, instance.nu, instance.alpha)
    ball = instance.shock_set()
    family = SupportFamily([ball])
    lo, hi = family.global_bounds
    grid = policy_grid(policy, lo, hi, eta_of(ball))
    return LiftingOperator(emb, grid), family


def solve_stochastic(instance: InventoryInstance, policy: str, moment_samples: int = 100_000, seed: int = 0,
                     backend: Optional[str] = None, cut_mode: str = "exact_symmetric", tol: float = 1e-7,
                     max_rounds: int = 50, ball_facets: Optional[int] = None) -> PolicySolve:
    _check_policy(policy)
    problem = make_inventory(instance, "stochastic")
    lifting, family = shock_lifting(instance, policy)
    moments = estimate_moments(instance.sample_demands, lifting, problem, moment_samples, seed)
    t0 = time.perf_counter()  # solution time excludes moment estimation
    prog = build_stochastic(problem, lifting, family, moments, backend=backend, ball_facets=ball_facets,
                            label=f"stochastic {policy} T={instance.T}")
    return _finish(policy, prog, family, cut_mode, tol, max_rounds, t0)


def solve_robust(instance: InventoryInstance, policy: str, backend: Optional[str] = None,
                 cut_mode: str = "exact_symmetric", tol: float = 1e-7, max_rounds: int = 50,
                 ball_facets: Optional[int] = None) -> PolicySolve:
    _check_policy(policy)
    t0 = time.perf_counter()
    problem = make_inventory(instance, "robust")
    lifting, family = shock_lifting(instance, policy)
    prog = build_robust(problem, lifting, family, backend=backend, ball_facets=ball_facets,
                        label=f"robust {policy} T={instance.T}")
    return _finish(policy, prog, family, cut_mode, tol, max_rounds, t0)


def data_driven_lifting(instance: InventoryInstance, samples, eps: float, policy: str):
    """Centred identity embedding, per-sample boxes and a symmetric grid around the mean demand."""
    emb = identity_embedding(instance.T, offset=np.full(instance.T, -instance.mu))
    sets = sample_boxes(emb, samples, eps)
    family = SupportFamily(sets)
    lo, hi = family.global_bounds
    B = float(max(np.abs(lo).max(), np.abs(hi).max()))
    lower, upper = np.full(instance.T, -B), np.full(instance.T, B)
    family = SupportFamily(sets, global_bounds=(lower, upper))
    eta = eta_box_circumscription(lower, upper)
    grid = policy_grid(policy, lower, upper, eta) if B > 0 else affine_grid(lower, upper)
    return LiftingOperator(emb, grid), family


def solve_data_driven(instance: InventoryInstance, policy: str, samples, eps: float,
                      backend: Optional[str] = None, tol: float = 1e-7, max_rounds: int = 50) -> PolicySolve:
    _check_policy(policy)
    t0 = time.perf_counter()
    problem = make_inventory(instance, "data_driven")
    lifting, family = data_driven_lifting(instance, samples, eps, policy)
    prog = build_data_driven(problem, lifting, samples, eps, family=family, backend=backend,
                             label=f"data-driven {policy} T={instance.T} eps={eps:g}")
    return _finish(policy, prog, family, "heuristic_general", tol, max_rounds, t0)


# ----------------------------------------------------------------------------
# simulation
# ----------------------------------------------------------------------------

@dataclass
class SimulationResult:
    costs: np.ndarray
    clamp: np.ndarray
    service_violation: float
    negative_demand: bool

    @property
    def mean(self) -> float:
        return float(self.costs.mean())


def simulate_policy(policy: PiecewiseAffinePolicy, instance: InventoryInstance, paths) -> SimulationResult:
    """Roll inventories forward with clamped orders and exact piecewise costs."""
    psi = np.atleast_2d(np.asarray(paths, float))
    T = instance.T
    dec = policy.evaluate(psi)
    idx = {name: i for i, name in enumerate(policy.dec_names)}
    y_raw = dec[:, [idx[f"y{t}"] for t in range(1, T + 1)]]
    x_raw = dec[:, [idx[f"x{t}"] for t in range(1, T + 1)]]
    return simulate_orders(y_raw, x_raw, instance, psi)


def simulate_orders(y_raw, x_raw, instance: InventoryInstance, psi) -> SimulationResult:
    xbar = np.asarray(instance.xbar, float)
    y = np.maximum(y_raw, 0.0)
    x = np.clip(x_raw, 0.0, xbar)
    clamp = np.abs(y - y_raw).sum(axis=1) + np.abs(x - x_raw).sum(axis=1)
    inv = instance.I0 + np.cumsum(y + x - psi, axis=1)
    c, h, b = (np.asarray(v, float) for v in (instance.c, instance.h, instance.b))
    costs = x @ c + np.maximum(inv, 0.0) @ h + np.maximum(-inv, 0.0) @ b
    if math.isfinite(instance.service):
        backlog = np.maximum(-inv, 0.0).sum(axis=1)
        viol = float(np.mean(backlog > instance.service * psi.sum(axis=1) + 1e-9))
    else:
        viol = 0.0
    return SimulationResult(costs, clamp, viol, bool(np.any(psi < 0)))


# ----------------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: str
    T_values: Tuple[int, ...] = (3, 5)
    alphas: Tuple[float, ...] = (0.0, 0.25)
    policies: Tuple[str, ...] = POLICIES
    instances: int = 20
    seed: int = 0
    moment_samples: int = 100_000
    eval_paths: int = 2000
    eps_grid: Tuple[float, ...] = EPS_GRID
    train_size: int = 10
    cross_validate: bool = False
    folds: int = 5
    backend: Optional[str] = None
    cut_tol: float = 1e-7
    max_rounds: int = 50
    record_timing: bool = False
    ball_facets: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}")
        for p in self.policies:
            _check_policy(p)
        if not self.T_values or min(self.T_values) < 1:
            raise ConfigurationError("need at least one positive T")
        if self.instances < 1 or self.eval_paths < 1:
            raise ConfigurationError("instances and evaluation paths must be positive")
        if self.kind == "data_driven" and (not self.eps_grid or min(self.eps_grid) < 0):
            raise ConfigurationError("need a nonnegative radius grid")


@dataclass
class ReportRow:
    kind: str
    policy: str
    T: int
    alpha: float
    epsilon: Optional[object]
    objective: float
    oos_mean: float
    oos_q20: float
    oos_q80: float
    solve_sec: float
    cuts: float
    status: str
    relative: float = float("nan")
    inst_q20: float = float("nan")
    inst_q80: float = float("nan")
    service_violation: float = 0.0
    approximate: bool = False


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: List[ReportRow]
    # per (T, alpha, epsilon, policy): list of per-instance objectives
    detail: Dict[tuple, List[float]] = field(default_factory=dict)

    def to_csv(self, timing: Optional[bool] = None) -> str:
        timing = self.config.record_timing if timing is None else timing
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            eps = "" if r.epsilon is None else (r.epsilon if isinstance(r.epsilon, str) else _fmt(r.epsilon))
            w.writerow([r.kind, r.policy, r.T, _fmt(r.alpha), eps, _fmt(r.objective), _fmt(r.oos_mean),
                        _fmt(r.oos_q20), _fmt(r.oos_q80), _fmt(r.solve_sec) if timing else "",
                        _fmt(r.cuts), r.status])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.10g}"


def derive_seed(*parts) -> int:
    ss = np.random.SeedSequence([int(abs(p)) if not isinstance(p, float) else int(round(p * 1e6)) for p in parts])
    return int(ss.generate_state(1)[0])


def _status(statuses: List[str]) -> str:
    bad = [s for s in statuses if s != "optimal"]
    if not bad:
        return "optimal"
    return f"{len(bad)}/{len(statuses)} {bad[0]}"


def _aggregate(kind, policy, T, alpha, eps, solves: List[PolicySolve], sims: List[Optional[SimulationResult]],
               base: List[float], approximate: bool) -> ReportRow:
    objs = np.array([s.objective for s in solves], float)
    ok = np.isfinite(objs)
    pooled = np.concatenate([m.costs for m in sims if m is not None]) if any(m is not None for m in sims) else np.array([np.nan])
    inst_means = np.array([m.mean for m in sims if m is not None]) if any(m is not None for m in sims) else np.array([np.nan])
    rel = np.array(base, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = objs / rel
    return ReportRow(kind, policy, T, alpha, eps,
                     float(objs[ok].mean()) if ok.any() else float("nan"),
                     float(pooled.mean()), float(np.quantile(pooled, 0.2)), float(np.quantile(pooled, 0.8)),
                     float(np.mean([s.seconds for s in solves])), float(np.mean([s.cuts for s in solves])),
                     _status([s.status for s in solves]),
                     float(np.nanmean(ratios)) if np.any(np.isfinite(ratios)) else float("nan"),
                     float(np.quantile(inst_means, 0.2)), float(np.quantile(inst_means, 0.8)),
                     float(np.mean([m.service_violation for m in sims if m is not None])) if sims else 0.0,
                     approximate)


def run_experiment(kind: str, config: Optional[ExperimentConfig] = None, **overrides) -> ExperimentReport:
    """Solve, extract and simulate every policy on every configuration."""
    if config is None:
        config = ExperimentConfig(kind=kind, **overrides)
    elif overrides:
        config = replace(config, **overrides)
    if config.kind != kind:
        config = replace(config, kind=kind)
    rows: List[ReportRow] = []
    detail: Dict[tuple, List[float]] = {}
    approx = bool(config.ball_facets)
    for T in config.T_values:
        for alpha in config.alphas:
            if kind == "data_driven":
                rows += _run_data_driven(config, T, alpha, detail)
                continue
            inst = InventoryInstance.stochastic(T, alpha)
            n_inst = config.instances if kind == "stochastic" else 1
            base: List[float] = []
            per_policy: Dict[str, Tuple[List[PolicySolve], List[Optional[SimulationResult]]]] = {}
            for i in range(n_inst):
                mseed = derive_seed(config.seed, T, alpha, i, 1)
                eseed = derive_seed(config.seed, T, alpha, i, 2)
                paths = inst.sample_demands(np.random.default_rng(eseed), config.eval_paths)
                for policy in ("AFF",) + tuple(p for p in config.policies if p != "AFF"):
                    try:
                        if kind == "stochastic":
                            res = solve_stochastic(inst, policy, config.moment_samples, mseed, config.backend,
                                                   tol=config.cut_tol, max_rounds=config.max_rounds,
                                                   ball_facets=config.ball_facets)
                        else:
                            res = solve_robust(inst, policy, config.backend, tol=config.cut_tol,
                                               max_rounds=config.max_rounds, ball_facets=config.ball_facets)
                    except Exception as exc:  # record and continue
                        log.warning("%s %s T=%d alpha=%g failed: %s", kind, policy, T, alpha, exc)
                        res = PolicySolve(policy, float("nan"), "error", 0.0, 0, 0, None)
                    if policy == "AFF":
                        base.append(res.objective)
                    sim = simulate_policy(res.rule, inst, paths) if res.rule is not None else None
                    s_list, m_list = per_policy.setdefault(policy, ([], []))
                    s_list.append(res)
                    m_list.append(sim)
            for policy in config.policies:
                s_list, m_list = per_policy[policy]
                detail[(T, alpha, None, policy)] = [s.objective for s in s_list]
                rows.append(_aggregate(kind, policy, T, alpha, None, s_list, m_list, base, approx))
    return ExperimentReport(config, rows, detail)


def _run_data_driven(config: ExperimentConfig, T: int, alpha: float, detail) -> List[ReportRow]:
    inst = InventoryInstance.data_driven(T, alpha)
    eps_grid = sorted(set(float(e) for e in config.eps_grid))
    labels: List[object] = list(eps_grid) + (["cv"] if config.cross_validate else [])
    store: Dict[Tuple[object, str], Tuple[List[PolicySolve], List[Optional[SimulationResult]]]] = {}
    base: Dict[object, List[float]] = {e: [] for e in labels}
    for i in range(config.instances):
        tseed = derive_seed(config.seed, T, alpha, i, 3)
        eseed = derive_seed(config.seed, T, alpha, i, 2)
        samples = inst.sample_demands(np.random.default_rng(tseed), config.train_size)
        paths = inst.sample_demands(np.random.default_rng(eseed), config.eval_paths)
        chosen: Dict[str, float] = {}
        if config.cross_validate:
            for policy in set(("AFF",) + tuple(config.policies)):
                chosen[policy] = cross_validate(inst, eps_grid, samples, config.folds, derive_seed(config.seed, i, 4),
                                                policy, config.backend)[0]
        for eps in labels:
            for policy in ("AFF",) + tuple(p for p in config.policies if p != "AFF"):
                e_val = chosen[policy] if eps == "cv" else eps
                try:
                    res = solve_data_driven(inst, policy, samples, e_val, config.backend, config.cut_tol,
                                            config.max_rounds)
                except Exception as exc:
                    log.warning("data-driven %s failed: %s", policy, exc)
                    res = PolicySolve(policy, float("nan"), "error", 0.0, 0, 0, None)
                if policy == "AFF":
                    base[eps].append(res.objective)
                sim = simulate_policy(res.rule, inst, paths) if res.rule is not None else None
                s_list, m_list = store.setdefault((eps, policy), ([], []))
                s_list.append(res)
                m_list.append(sim)
    rows = []
    for eps in labels:
        for policy in config.policies:
            s_list, m_list = store[(eps, policy)]
            detail[(T, alpha, eps, policy)] = [s.objective for s in s_list]
            rows.append(_aggregate("data_driven", policy, T, alpha, eps, s_list, m_list, base[eps], False))
    return rows


def cross_validate(instance: InventoryInstance, eps_grid: Sequence[float], samples, folds: int = 5, seed: int = 0,
                   policy: str = "AFF", backend: Optional[str] = None) -> Tuple[float, List[Tuple[float, float]]]:
    """Pick the radius with the lowest mean held-out simulated cost (ties: smaller radius)."""
    samples = np.atleast_2d(np.asarray(samples, float))
    if samples.shape[0] < folds:
        raise ConfigurationError("fewer training samples than folds")
    grid = sorted(set(float(e) for e in eps_grid))
    if len(grid) == 1:
        return grid[0], [(grid[0], float("nan"))]
    perm = np.random.default_rng(seed).permutation(samples.shape[0])
    parts = np.array_split(perm, folds)
    table = []
    for eps in grid:
        losses = []
        for f in range(folds):
            held = parts[f]
            train = np.concatenate([parts[q] for q in range(folds) if q != f])
            res = solve_data_driven(instance, policy, samples[train], eps, backend)
            if res.rule is None:
                losses.append(float("inf"))
                continue
            losses.append(simulate_policy(res.rule, instance, samples[held]).mean)
        table.append((eps, float(np.mean(losses))))
    best = min(table, key=lambda t: (t[1], t[0]))
    return best[0], table
