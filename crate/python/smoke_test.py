"""Smoke test of the mflab_py extension module.

Build and stage the module first:

    cargo build --release -p mflab-py
    cp target/release/libmflab_py.so python/mflab_py.so

then run:

    PYTHONPATH=python python3 python/smoke_test.py
"""

import math

import mflab_py as m


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    # Double-well potential: V_kappa(x) = x^4/4 - x^2/2.
    pot = m.Potential.quartic1d(1.0)
    assert pot.d == 1 and pot.kappa == 1.0
    close(pot.v_kappa([1.0]), -0.25, 1e-12)
    close(pot.grad_v_kappa([1.0])[0], 0.0, 1e-12)
    close(pot.hess_v_kappa([1.0])[0][0], 2.0, 1e-12)

    # Critical points -1, 0, +1 with Morse indices 0, 1, 0.
    pts = m.critical_points(pot, 3.0, 9)
    locs = sorted(p[0][0] for p in pts)
    assert len(locs) == 3
    for got, want in zip(locs, [-1.0, 0.0, 1.0]):
        close(got, want, 1e-8)
    indices = {round(p[0][0]): p[2] for p in pts}
    assert indices[-1] == 0 and indices[0] == 1 and indices[1] == 0

    # Tilted Gibbs measure: symmetric at xi=0, pushed right for xi>0.
    log_z0, mean0, var0 = m.tilted_measure(pot, 0.0)
    assert var0 > 0.0
    close(mean0, 0.0, 1e-9)
    _, mean1, _ = m.tilted_measure(pot, 0.5)
    assert mean1 > 0.0

    # Closed-form expected transition time: prefactor pi*sqrt(2), barrier 1/4.
    t20 = m.expected_transition_time(pot, [-1.0], [0.0], 20.0)
    close(t20, math.pi * math.sqrt(2.0) * math.exp(5.0), 1e-6 * t20)

    # Particle simulation stays finite and reproduces bitwise under reruns.
    mean_a, var_a = m.simulate_terminal(pot, "toy", 32, 1e-3, 1.0, seed=7)
    mean_b, var_b = m.simulate_terminal(pot, "toy", 32, 1e-3, 1.0, seed=7)
    assert mean_a == mean_b and var_a == var_b
    assert all(map(math.isfinite, mean_a + var_a))

    # Curie-Weiss critical temperature at kappa0 = 1.
    s2c = m.curie_weiss_critical_sigma2(1.0)
    assert 0.45 <= s2c <= 0.47, s2c

    # Quadratic confinement: profile exponents theta ~ r, phi ~ r.
    quad = m.Potential.quadratic(2.0, 1)
    theta_exp, phi_exp, tight = m.lojasiewicz_exponents(quad)
    close(theta_exp, 1.0, 0.05)
    close(phi_exp, 1.0, 0.05)
    assert tight

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
