"""Smoke test for the pychsh extension module. Run after `pip install`."""

import math

import pychsh


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    phi = pychsh.DensityMatrix.phi_plus()
    assert close(phi.chsh(), 2 * math.sqrt(2))
    assert close(phi.fidelity(), 1.0)

    w = pychsh.DensityMatrix.werner(0.8)
    assert close(w.chsh(), 2 * math.sqrt(2) * 0.8)
    assert close(w.teleport_fidelity(), (2 * w.fidelity() + 1) / 3)

    rows = w.matrix()
    again = pychsh.DensityMatrix(rows)
    assert close(again.fidelity(), w.fidelity())
    try:
        pychsh.DensityMatrix([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    except ValueError:
        pass
    else:
        raise AssertionError("trace-2 matrix accepted")

    plan = pychsh.plan(0.05, 0.05)
    assert plan["n_per_setting"] == 24000 and plan["method"] == "chebyshev"
    assert pychsh.plan(0.05, 0.01)["n_per_setting"] == 85515
    assert 0.0149 < pychsh.crossover_delta(0.05) < 0.0150
    lo, hi = pychsh.fidelity_interval(pychsh.TSIRELSON_BOUND - 0.03, 0.05, 0.05)
    assert abs(lo - 0.9717) < 5e-4 and hi == 1.0

    s = pychsh.estimate_chsh(phi, 20000, seed=1)
    assert abs(s - 2 * math.sqrt(2)) < 0.05
    out = pychsh.verify(pychsh.DensityMatrix.werner_with_fidelity(0.95), 0.1, 0.1)
    assert out["decision"] == "accept_h0"
    out = pychsh.verify(pychsh.DensityMatrix.werner_with_fidelity(0.70), 0.1, n=750)
    assert out["decision"] == "reject_h1"

    metrics = pychsh.run_experiment(capacity=2000, repetitions=10, seed=3)
    assert close(metrics["success_rate"] + metrics["fpr"] + metrics["fnr"], 1.0)
    points = pychsh.run_sweep("distance", [0.5, 3.0], capacity=2000, repetitions=5)
    assert [p["value"] for p in points] == [0.5, 3.0]
    assert points[0]["metrics"]["mean_remaining_fidelity"] > points[1]["metrics"]["mean_remaining_fidelity"]
    print("pychsh smoke test ok")


if __name__ == "__main__":
    main()
