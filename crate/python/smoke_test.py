"""Smoke test for the cmfbound_py extension.

Run after `pip install --no-build-isolation crates/cmfbound-py`:

    python python/smoke_test.py
"""

import math
import sys

import cmfbound_py as cb


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    failures = []

    def check(name, ok, detail=""):
        print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
        if not ok:
            failures.append(name)

    check("gamma_star(2)", close(cb.gamma_star(2.0), 1.0 / 3.0, 1e-12))
    check("u(1; mu) = 1", cb.eigfun_u(1.0, 3.7) == 1.0)

    d = cb.delta_star(2.0, 1e-6)
    check("delta_star fields", set(d) >= {"delta_star", "veps", "pythagoras_residual"})
    check("pythagoras", d["pythagoras_residual"] < 1e-8, f"{d['pythagoras_residual']:.2e}")

    eps = [10.0 ** (-9 + 0.5 * k) for k in range(9)]
    fit = cb.powerlaw_fit(2.0, eps)
    check("powerlaw slope", abs(fit["slope"] - fit["gamma_star"]) < 0.01, f"{fit['slope']:.6f}")

    ny = cb.nystrom(2.0, 1e-4)
    sp = cb.solve_psi(2.0, 1e-2)
    check("nystrom vs spectral", close(ny["psi_at_x0"], sp["psi_at_x0"], 1e-4))

    s = cb.solve_local(2.0, 1e-3)
    check("local certificate", s["certificate_passed"], f"{s['certificate_min']:.2e}")
    s0 = cb.solve_local(2.0, 0.0)
    check("local at delta = 0", s0["residual_l2"] == 0.0)
    env = cb.envelope(2.0, 0.01, [(0.0, 0.5), (1.5, 0.25)])
    f0 = 0.5 + 0.25 * math.exp(-3.0)
    check("envelope brackets f0", env["lower"] < f0 < env["upper"])

    e_plus, _ = cb.e_slopes(1.0)
    check("E+(1)", close(e_plus, 2.67788263, 1e-4), f"{e_plus:.8f}")

    rows = cb.left_demo(0.01, [50.0, 5000.0])
    check("left demo gap grows", rows[1][3] > rows[0][3])

    try:
        cb.solve_local(2.0, -1.0)
        check("infeasible raises", False)
    except ValueError:
        check("infeasible raises", True)

    r = cb.verify("pythagoras")
    check("verify pythagoras", len(r) == 1 and r[0]["passed"], r[0]["detail"])

    print(f"{len(failures)} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
