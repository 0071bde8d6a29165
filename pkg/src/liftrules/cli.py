"""Command-line front end: ``run``, ``oracle-check``, ``selftest`` and ``dump-program``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields
from typing import List, Optional, Sequence

import numpy as np

from . import bench_inventory as bi
from .lifting import equidistant_breakpoints, fold, hull_constraints
from .reformulation import build_data_driven, build_robust, build_stochastic, estimate_moments
from .separation import RectangleTable, d_prime, l1_distance, rect_from_indices, separate_bruteforce, \
    separate_symmetric
from .solver import ENV_BACKEND, dump_triplets
from .supports import NormBall, dbar_norm_ball, eta_norm_ball

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("liftrules")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # configuration errors exit with 2 after the usage text
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _words(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="liftrules", description="Lifted piecewise affine decision rules with cutting planes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run an inventory experiment and write the CSV report")
    run.add_argument("--config", help="JSON file with experiment settings (flags override it)")
    run.add_argument("--kind", choices=bi.KINDS)
    run.add_argument("--T", type=_ints)
    run.add_argument("--alpha", type=_floats)
    run.add_argument("--epsilon", type=_floats)
    run.add_argument("--policies", type=_words)
    run.add_argument("--seed", type=int)
    run.add_argument("--instances", type=int)
    run.add_argument("--moment-samples", type=int)
    run.add_argument("--eval-paths", type=int)
    run.add_argument("--train-size", type=int)
    run.add_argument("--cv", action="store_true", default=None, help="add cross-validated radius rows")
    run.add_argument("--backend", help=f"solver backend (default: ${ENV_BACKEND} or auto)")
    run.add_argument("--cut-tol", type=float)
    run.add_argument("--max-rounds", type=int)
    run.add_argument("--timing", action="store_true", default=None, help="fill the solve_sec column")
    run.add_argument("--out", help="CSV path (default: stdout)")

    oc = sub.add_parser("oracle-check", help="compare symmetric separation with brute-force enumeration")
    oc.add_argument("--I", type=int, default=3)
    oc.add_argument("--J", type=int, default=4)
    oc.add_argument("--p", type=float, default=2.0)
    oc.add_argument("--trials", type=int, default=100)
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--tol", type=float, default=1e-9)

    st = sub.add_parser("selftest", help="run the built-in invariant checks")
    st.add_argument("--seed", type=int, default=0)

    dp = sub.add_parser("dump-program", help="write the dual program as sparse triplets")
    dp.add_argument("--kind", choices=bi.KINDS, required=True)
    dp.add_argument("--T", type=int, default=3)
    dp.add_argument("--alpha", type=float, default=0.0)
    dp.add_argument("--policy", default="LIFTF")
    dp.add_argument("--epsilon", type=float, default=0.1)
    dp.add_argument("--train-size", type=int, default=10)
    dp.add_argument("--moment-samples", type=int, default=20000)
    dp.add_argument("--seed", type=int, default=0)
    dp.add_argument("--out", help="output path (default: stdout)")
    return ap


# ----------------------------------------------------------------------------
# run
# ----------------------------------------------------------------------------

_FLAG_TO_FIELD = {"T": "T_values", "alpha": "alphas", "epsilon": "eps_grid", "policies": "policies",
                  "seed": "seed", "instances": "instances", "moment_samples": "moment_samples",
                  "eval_paths": "eval_paths", "train_size": "train_size", "cv": "cross_validate",
                  "backend": "backend", "cut_tol": "cut_tol", "max_rounds": "max_rounds",
                  "timing": "record_timing"}


def load_config(args: argparse.Namespace) -> bi.ExperimentConfig:
    """Merge a JSON file with command-line flags; flags win."""
    settings = {}
    if args.config:
        try:
            with open(args.config) as fh:
                settings = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise bi.ConfigurationError(f"cannot read config: {exc}") from exc
        if not isinstance(settings, dict):
            raise bi.ConfigurationError("config file must hold a JSON object")
    known = {f.name for f in fields(bi.ExperimentConfig)}
    aliases = {**_FLAG_TO_FIELD, "kind": "kind"}
    merged = {}
    for key, val in settings.items():
        name = aliases.get(key, key)
        if name not in known:
            raise bi.ConfigurationError(f"unknown config key {key!r}")
        merged[name] = val
    for flag, name in _FLAG_TO_FIELD.items():
        val = getattr(args, flag)
        if val is not None:
            merged[name] = val
    if args.kind is not None:
        merged["kind"] = args.kind
    if "kind" not in merged:
        raise bi.ConfigurationError("no experiment kind given (use --kind or --config)")
    for name in ("T_values", "alphas", "eps_grid", "policies"):
        if name in merged:
            merged[name] = tuple(merged[name])
    return bi.ExperimentConfig(**merged)


def cmd_run(args) -> int:
    if not args.config and not args.kind:
        sys.stderr.write("usage: liftrules run (--config FILE | --kind KIND) [options]\n"
                         "error: run needs a configuration\n")
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
    except (bi.ConfigurationError, TypeError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    report = bi.run_experiment(cfg.kind, cfg)
    text = report.to_csv()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    bad = [r for r in report.rows if r.status != "optimal"]
    for r in bad:
        log.warning("row %s T=%d alpha=%g: %s", r.policy, r.T, r.alpha, r.status)
    return EXIT_OK


# ----------------------------------------------------------------------------
# oracle suite
# ----------------------------------------------------------------------------

def random_incumbents(grid, n: int, rng: np.random.Generator, mix: int = 3) -> np.ndarray:
    """Convex combinations of folded box points: members of the folded box's hull."""
    lo, hi = grid.lower, grid.upper
    out = np.empty((n, grid.lifted_dim))
    for t in range(n):
        thetas = lo + (hi - lo) * rng.random((mix, grid.dims))
        w = rng.dirichlet(np.ones(mix))
        out[t] = w @ fold(grid, thetas)
    return out


def oracle_trials(I: int, J: int, p: float, trials: int, seed: int = 0, tol: float = 1e-9):
    """Symmetric separation vs exhaustive enumeration on the unit ``p``-ball; returns (matches, worst gap)."""
    if J < 2 or J % 2:
        raise bi.ConfigurationError("J must be even and at least 2")
    ones = np.ones(I)
    grid = equidistant_breakpoints(-ones, ones, J - 1)
    ball = NormBall(p, 1.0, np.zeros(I))
    eta = eta_norm_ball(p, 1.0, I)
    table = RectangleTable.build(grid, lambda zm, zp: dbar_norm_ball(ball, zm, zp), vectorized=True)
    rng = np.random.default_rng(seed)
    pts = random_incumbents(grid, trials, rng)
    matches, worst = 0, 0.0
    for pt in pts:
        a = separate_symmetric(grid, pt, eta).violation
        b = separate_bruteforce(grid, pt, table=table).violation
        gap = abs(a - b)
        worst = max(worst, gap)
        matches += gap <= tol
    return matches, worst


def cmd_oracle(args) -> int:
    try:
        m, worst = oracle_trials(args.I, args.J, args.p, args.trials, args.seed, args.tol)
    except (bi.ConfigurationError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    print(f"{m}/{args.trials} exact matches (max gap {worst:.3e})")
    return EXIT_OK if m == args.trials else EXIT_FAIL


# ----------------------------------------------------------------------------
# selftest
# ----------------------------------------------------------------------------

def _check_distance(rng) -> bool:
    ones = np.ones(3)
    grid = equidistant_breakpoints(-ones, ones, 3)
    for _ in range(200):
        theta = rng.uniform(-1, 1, 3)
        lo = rng.integers(0, 5, 3)
        hi = np.array([rng.integers(l, 5) for l in lo])
        rect = rect_from_indices(grid, lo, hi)
        if abs(d_prime(grid, fold(grid, theta), rect) - l1_distance(theta, rect)) > 1e-9:
            return False
    return True


def _check_hull(rng) -> bool:
    ones = np.ones(2)
    grid = equidistant_breakpoints(-ones, ones, 1)
    hull = hull_constraints(grid, -ones, ones)
    pts = fold(grid, rng.uniform(-1, 1, (200, 2)))
    return bool(np.all(hull.contains(pts)))


def _check_duality(seed: int) -> bool:
    inst = bi.InventoryInstance.stochastic(3, 0.25)
    res = bi.solve_stochastic(inst, "LIFT1", moment_samples=5000, seed=seed)
    if res.rule is None:
        return False
    val = res.rule.expected_objective(res.program.moments)
    return abs(val - res.objective) <= 1e-6 * max(1.0, abs(res.objective))


def cmd_selftest(args) -> int:
    rng = np.random.default_rng(args.seed)
    checks = [
        ("separation oracle (I=3, J=4, p=2)", lambda: oracle_trials(3, 4, 2.0, 30, args.seed)[0] == 30),
        ("separation oracle (I=2, J=2, p=inf)", lambda: oracle_trials(2, 2, math.inf, 30, args.seed)[0] == 30),
        ("lifted distance equals box distance", lambda: _check_distance(rng)),
        ("hull contains folded points", lambda: _check_hull(rng)),
        ("eta differences non-increasing",
         lambda: all(eta_norm_ball(p, 1.0, 4).has_nonincreasing_differences() for p in (1, 1.5, 2, 3, math.inf))),
        ("policy value equals dual optimum", lambda: _check_duality(args.seed)),
    ]
    failed = 0
    for name, fn in checks:
        try:
            ok = bool(fn())
        except Exception as exc:  # report and keep going
            ok = False
            name = f"{name} ({exc})"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


# ----------------------------------------------------------------------------
# dump-program
# ----------------------------------------------------------------------------

def cmd_dump(args) -> int:
    try:
        bi._check_policy(args.policy)
        if args.kind == "data_driven":
            inst = bi.InventoryInstance.data_driven(args.T, args.alpha)
            samples = inst.sample_demands(np.random.default_rng(args.seed), args.train_size)
            problem = bi.make_inventory(inst, "data_driven")
            lifting, family = bi.data_driven_lifting(inst, samples, args.epsilon, args.policy)
            prog = build_data_driven(problem, lifting, samples, args.epsilon, family=family)
        else:
            inst = bi.InventoryInstance.stochastic(args.T, args.alpha)
            problem = bi.make_inventory(inst, args.kind)
            lifting, family = bi.shock_lifting(inst, args.policy)
            if args.kind == "robust":
                prog = build_robust(problem, lifting, family)
            else:
                moments = estimate_moments(inst.sample_demands, lifting, problem, args.moment_samples, args.seed)
                prog = build_stochastic(problem, lifting, family, moments)
    except (bi.ConfigurationError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    text = dump_triplets(prog.program())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    handler = {"run": cmd_run, "oracle-check": cmd_oracle, "selftest": cmd_selftest, "dump-program": cmd_dump}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
