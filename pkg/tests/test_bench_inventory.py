from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest

from liftrules.bench_inventory import (CSV_HEADER, ConfigurationError, ExperimentConfig, InventoryInstance,
                                       cross_validate, data_driven_lifting, derive_seed, make_inventory,
                                       run_experiment, simulate_orders, simulate_policy, solve_data_driven,
                                       solve_robust)
from liftrules.reformulation import build_data_driven


def test_point_sample_needs_no_reactive_orders():
    inst = InventoryInstance.data_driven(1)
    res = solve_data_driven(inst, "AFF", [[inst.mu]], 0.0)
    assert res.status == "optimal"
    # the free pre-commitment covers the known demand exactly
    assert res.objective == pytest.approx(0.0, abs=1e-6)


def test_point_sample_without_pre_commitment():
    inst = InventoryInstance.data_driven(1)
    prob = make_inventory(inst, "data_driven")
    # forbid the pre-commitment: true y1 = mu + x_y1 <= 0
    row = np.zeros(prob.n)
    row[0] = 1.0
    prob.blocks[0] = prob.blocks[0].extended(row, -inst.mu, np.zeros((1, prob.K)))
    lifting, family = data_driven_lifting(inst, [[inst.mu]], 0.0, "AFF")
    sol = build_data_driven(prob, lifting, [[inst.mu]], 0.0, family=family).solve()
    assert sol.objective == pytest.approx(min(inst.c[0], inst.b[0]) * inst.mu, rel=1e-7)


def test_data_driven_objective_grows_with_radius():
    inst = InventoryInstance.data_driven(2)
    samples = inst.sample_demands(np.random.default_rng(0), 4)
    objs = [solve_data_driven(inst, "GLIFT1", samples, e).objective for e in (0.0, 1.0, 5.0)]
    assert np.all(np.diff(objs) >= -1e-7)


@pytest.mark.parametrize("policy", ["AFF", "LIFT1"])
def test_robust_bound_holds_in_simulation(policy):
    inst = InventoryInstance.robust(3, 0.25)
    res = solve_robust(inst, policy)
    assert res.status == "optimal"
    paths = inst.sample_demands(np.random.default_rng(1), 3000)
    sim = simulate_policy(res.rule, inst, paths)
    assert sim.costs.max() <= res.objective + 1e-6
    assert np.all(sim.clamp <= 1e-6)


def test_simulation_hand_recursion():
    inst = InventoryInstance(T=2, c=(1.0, 2.0), h=(0.5, 0.5), b=(3.0, 4.0), xbar=(5.0, 5.0), service=0.5,
                             mu=1.0, nu=1.0, alpha=0.0)
    psi = np.array([[4.0, 2.0]])
    y = np.array([[1.0, -1.0]])  # second pre-commitment is clamped to zero
    x = np.array([[2.0, 9.0]])   # second order is clamped to the cap
    sim = simulate_orders(y, x, inst, psi)
    # inventory: 1 + 2 - 4 = -1, then -1 + 0 + 5 - 2 = 2
    assert sim.costs[0] == pytest.approx(1 * 2 + 2 * 5 + 3 * 1 + 0.5 * 2)
    assert sim.clamp[0] == pytest.approx(1 + 4)
    assert sim.service_violation == 0.0  # backlog 1 <= 0.5 * 6


def test_zero_policy_costs_only_backlog():
    inst = InventoryInstance.stochastic(3)
    psi = np.full((2, 3), 10.0)
    sim = simulate_orders(np.zeros((2, 3)), np.zeros((2, 3)), inst, psi)
    assert np.allclose(sim.costs, 0.1 * 30)
    assert sim.service_violation == 1.0


def test_instance_validation():
    with pytest.raises(ConfigurationError):
        InventoryInstance.stochastic(0)
    with pytest.raises(ConfigurationError):
        InventoryInstance.stochastic(2, xbar=(1.0,))
    with pytest.raises(ConfigurationError):
        make_inventory(InventoryInstance.stochastic(2), "data_driven")
    with pytest.raises(ConfigurationError):
        make_inventory(InventoryInstance.data_driven(2), "robust")
    with pytest.raises(ConfigurationError):
        make_inventory(InventoryInstance.stochastic(2), "other")


def test_inventory_layout():
    prob = make_inventory(InventoryInstance.stochastic(3), "stochastic")
    assert prob.dec_names[:4] == ["y1", "y2", "y3", "x1"]
    assert prob.dec_stage.tolist() == [0, 0, 0] + [1, 2, 3] * 3
    assert prob.blocks[0].rows == 7 * 3 + 1
    assert np.allclose(prob.dec_offset[:3], 200.0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="nope")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="robust", policies=("LIFT7",))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind="data_driven", eps_grid=(-1.0,))


def test_cross_validation_contract():
    inst = InventoryInstance.data_driven(2)
    samples = inst.sample_demands(np.random.default_rng(2), 6)
    assert cross_validate(inst, [0.5], samples, folds=3)[0] == 0.5
    a = cross_validate(inst, [0.0, 1.0, 1.0, 10.0], samples, folds=3, seed=5)
    b = cross_validate(inst, [10.0, 1.0, 0.0], samples, folds=3, seed=5)
    assert a == b
    assert [e for e, _ in a[1]] == [0.0, 1.0, 10.0]
    assert a[0] == min(a[1], key=lambda t: (t[1], t[0]))[0]
    with pytest.raises(ConfigurationError):
        cross_validate(inst, [0.0, 1.0], samples[:2], folds=3)


def test_seeds_are_deterministic_and_distinct():
    assert derive_seed(0, 3, 0.25, 1, 1) == derive_seed(0, 3, 0.25, 1, 1)
    assert derive_seed(0, 3, 0.25, 1, 1) != derive_seed(0, 3, 0.25, 1, 2)


def test_robust_experiment_csv():
    kw = dict(T_values=(2,), alphas=(0.0, 0.25), policies=("AFF", "LIFT1"), eval_paths=200)
    text = run_experiment("robust", **kw).to_csv()
    assert text == run_experiment("robust", **kw).to_csv()
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 2 * 2
    assert all(r[9] == "" for r in rows[1:])  # timing is opt-in
    assert all(r[11] == "optimal" for r in rows[1:])
    objs = {(r[1], r[3]): float(r[5]) for r in rows[1:]}
    for a in ("0", "0.25"):
        assert objs[("LIFT1", a)] <= objs[("AFF", a)] + 1e-6 * abs(objs[("AFF", a)])


def test_timing_column_when_requested():
    rep = run_experiment("robust", T_values=(2,), alphas=(0.0,), policies=("AFF",), eval_paths=50,
                         record_timing=True)
    row = list(csv.reader(io.StringIO(rep.to_csv())))[1]
    assert math.isfinite(float(row[9]))
