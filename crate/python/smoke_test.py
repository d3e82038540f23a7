"""Smoke test for the ackpc Python module.

Build and install first:
    cd crates/python && maturin build --release -o dist && pip install dist/ackpc-*.whl
"""

import math

import ackpc


def main():
    # Two symmetric pairs, hand-solved equilibrium p = noise / (1 - 0.2).
    gains = [[1.0, 0.2], [0.2, 1.0]]
    rep = ackpc.feasibility(gains, 0.1, [1.0, 1.0])
    assert rep["feasible"] and abs(rep["spectral_radius"] - 0.2) < 1e-12, rep
    p = ackpc.solve_gne(gains, 0.1, [1.0, 1.0])
    assert all(abs(x - 0.125) < 1e-12 for x in p), p
    q, iters = ackpc.best_response_iterate(gains, 0.1, [1.0, 1.0], [1.0, 1.0])
    assert all(abs(a - b) / b < 1e-8 for a, b in zip(q, p)) and iters > 0

    model = ackpc.CodingModel()
    eps = model.error_prob(10.0, 1.0, 1.29)
    assert 1e-3 < eps < 0.999, eps
    h = 1e-6
    fd = (model.error_prob(10.0 + h, 1.0, 1.29) - model.error_prob(10.0 - h, 1.0, 1.29)) / (2 * h)
    assert abs(model.error_prob_derivative(10.0, 1.0, 1.29) - fd) <= 1e-4 * abs(fd), (eps, fd)

    agent = ackpc.Agent(model, target=1.5, beta=0.9, mu_init=10.0)
    before = agent.mu_hat
    agent.step(True)
    assert agent.mu_hat > before
    assert math.isclose(agent.power, 1.5 / agent.mu_hat)

    cfg = ackpc.ScenarioConfig("pairs = 2\npackets = 200\nseed = 3\n")
    assert ackpc.ScenarioConfig(cfg.to_toml()) == cfg
    csv, stats = ackpc.run(cfg)
    again, _ = ackpc.run(cfg)
    assert csv == again and csv.startswith(ackpc.CSV_HEADER)
    assert len(csv.splitlines()) == 1 + 2 * 200
    print("median_convergence_packet:", stats["median_convergence_packet"])
    print("smoke test ok")


if __name__ == "__main__":
    main()
