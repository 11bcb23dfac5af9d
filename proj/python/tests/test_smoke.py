import json
import math

import numpy as np
import pytest

import drsac


def test_solve_dual_matches_primal_and_bounds():
    values, probs = [0.0, 1.0, 3.0], [0.2, 0.5, 0.3]
    for delta in (0.01, 0.1, 1.0):
        sol = drsac.solve_dual(values, probs, delta)
        assert abs(sol.value - drsac.solve_primal_bruteforce(values, probs, delta)) <= 1e-5
        assert min(values) <= sol.value <= float(np.dot(values, probs))
    # essinf mass 0.5 and delta >= log 2: the worst case is the infimum.
    sol = drsac.solve_dual([1.0, 2.0], [0.5, 0.5], 1.0)
    assert sol.at_boundary and sol.value == 1.0


def test_worst_case_distribution_sits_on_the_ball():
    values, probs = [0.0, 1.0, 2.0], [0.3, 0.3, 0.4]
    q, concentrated = drsac.worst_case_distribution(values, probs, 0.05)
    assert not concentrated
    assert drsac.kl_divergence(q, probs) == pytest.approx(0.05, abs=1e-8)
    assert float(np.dot(q, values)) == pytest.approx(drsac.solve_dual(values, probs, 0.05).value, abs=1e-6)


def test_invalid_distribution_raises():
    with pytest.raises(ValueError):
        drsac.solve_dual([0.0, 1.0], [0.7, 0.7], 0.1)


def test_tabular_policy_iteration_is_a_fixed_point():
    rmdp = drsac.random_rmdp(3, n_states=3, n_actions=2, gamma=0.8, delta=0.3, alpha=0.2)
    policy, q, iterations = drsac.dr_soft_policy_iteration(rmdp)
    assert iterations >= 1
    assert np.allclose(policy.sum(axis=1), 1.0)
    backup = drsac.dr_soft_bellman(q, policy, rmdp)
    assert np.max(np.abs(backup - q)) < 1e-7
    nominal = drsac.nonrobust_soft_bellman(q, policy, rmdp)
    assert np.all(backup <= nominal + 1e-12)


def test_verify_quick_report():
    report = drsac.verify(seed=3, scale=0.05, only={"dual_primal", "boundary", "interchange"})
    drsac.validate_report(report)
    assert report["pass"]
    assert [p["name"] for p in report["properties"]] == ["dual_primal", "boundary", "interchange"]
    json.dumps(report)
    faulty = drsac.verify(seed=3, scale=0.05, only={"dual_primal"}, sign_flip_fault=True)
    assert not faulty["pass"]
    with pytest.raises(ValueError):
        drsac.verify(only={"nope"})


def test_dataset_train_evaluate_roundtrip(tmp_path):
    data = str(tmp_path / "d.bin")
    assert drsac.gen_dataset(data, seed=1, config={"n": "1500"}) == 1500
    cfg = {"hidden": "8,8", "batch_size": "16", "steps": "20", "log_every": "10", "delta": "0.5", "m": "3"}
    steps, metrics, ckpt = drsac.train(data, str(tmp_path / "run"), seed=2, config=cfg)
    assert steps == 20
    with open(metrics) as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("step,") and len(lines) == 3
    rows = drsac.evaluate([("dr", ckpt)], seed=4, config={"episodes": "2", "grid": "mass=1.2"})
    assert len(rows) == 1 and rows[0]["param"] == "mass" and math.isfinite(rows[0]["mean"])
    with pytest.raises(ValueError):
        drsac.train(data, str(tmp_path / "bad"), config={"seed": "1"})
    with pytest.raises(OSError):
        drsac.train(str(tmp_path / "missing.bin"), str(tmp_path / "bad"))
