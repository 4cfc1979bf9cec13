"""Smoke test for the regpath extension module.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/regpath-*.whl
"""

import math

import regpath


def main():
    problem = regpath.ManufacturedProblem(1.0)
    assert problem.exact_control() == -0.2
    assert math.isclose(problem.exact_zero_measure(0.01), 0.04)

    assert regpath.adjointness_defect(5, 8, cases=20, seed=3) <= 1e-10

    heat = regpath.LocatedHeat(1.0, n_per_side=9, time_steps=128)
    path = heat.path([1, 2, 3, 4])
    assert not path["failures"], path["failures"]
    records = path["records"]
    errors = [r["err_l1"] for r in records]
    alphas = [r["alpha"] for r in records]
    assert alphas == [regpath.regularization_parameter(l) for l in range(1, 5)]
    rates = regpath.eoc(errors, alphas)
    assert rates[0] is None and all(r > 0.5 for r in rates[1:])
    exponent, constant = regpath.fit_rate(errors, alphas)
    print(f"located heat kappa=1: L1 exponent {exponent:.3f}, constant {constant:.3f}")

    single = heat.solve(0.01)
    q = single["outcome"]["q"]
    u = heat.control_values(0.01, q, heat.time_nodes())
    assert all(-0.2 <= v <= 0.2 for v in u)

    poisson = regpath.PoissonExample(9).path(list(range(1, 7)))
    assert min(poisson["slacks"]) >= -1e-6
    print("poisson slacks:", ", ".join(f"{s:.1e}" for s in poisson["slacks"]))

    try:
        regpath.ManufacturedProblem(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative kappa accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
