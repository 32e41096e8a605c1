"""Smoke test for the stochch_py extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import math
import random

import stochch_py as sc


def check_potentials():
    log = sc.Potential.logarithmic(1.0, 2.0)
    assert abs(log.c_f - 1.0) < 1e-15
    assert abs(log.d2f(0.0) + 1.0) < 1e-12
    try:
        log.f(1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("F_log outside [-1, 1] must raise")
    reg = log.regularize_eps(0.05)
    assert math.isfinite(reg.f(1.5))
    pol = sc.Potential.polynomial().regularize_lambda(1e-2)
    assert pol.df(0.0) == 0.0


def check_mobility():
    m = sc.Mobility.poly_degenerate()
    assert abs(m.m(0.5) - 0.75) < 1e-15
    assert abs(m.entropy(0.5) - 0.130812036) < 1e-9
    tm = m.truncate(0.1)
    for r in (-3.0, -1.2, 0.0, 1.05, 2.5):
        lhs, rhs = tm.confinement_gap(r)
        assert lhs <= rhs


def check_noise():
    n = sc.Noise(0.5, 1.0, 4)
    assert abs(n.sigma(1) - 0.25) < 1e-15
    c = n.compat(sc.Potential.logarithmic(1.0, 2.0), sc.Mobility.poly_degenerate())
    for k, v in enumerate(c["sup_f"]):
        assert abs(v - n.sigma(k) ** 2) < 1e-6
        assert v <= c["analytic_bound"][k]


def check_grid():
    g = sc.Grid([1.0, 2.0], 8)
    rng = random.Random(0)
    coeffs = [rng.uniform(-1, 1) for _ in range(g.n_coeffs)]
    back = g.to_coeffs(g.to_values(coeffs))
    assert max(abs(a - b) for a, b in zip(coeffs, back)) < 1e-12


CONFIG = """
potential.kind = logarithmic
potential.theta = 1
potential.theta0 = 2
potential.epsilon = 0.1
mobility.kind = polynomial-degenerate
domain.modes = 16
noise.sigma0 = 0.2
time.T = 0.01
time.dt = 1e-4
time.record_every = 10
init.amplitude = 0.4
"""


def check_simulation():
    assert "time.T" in sc.canonical_config(CONFIG)
    out = sc.simulate(CONFIG, path=3)
    again = sc.simulate(CONFIG, path=3)
    assert out["final_coeffs"] == again["final_coeffs"]
    a0 = out["mass"][0]
    for mass, ledger in zip(out["mass"], out["noise_mass_acc"]):
        assert abs(mass - a0 - ledger) < 1e-12
    rep = sc.check_energy(CONFIG, paths=32)
    print(f"energy inequality pass={rep['pass']} allowance={rep['allowance']:.3e}")
    assert rep["pass"]


if __name__ == "__main__":
    for check in (check_potentials, check_mobility, check_noise, check_grid, check_simulation):
        check()
        print(f"ok {check.__name__}")
