"""Independent reference values, frozen into frozen.json.

Nothing here imports the package.  The limit eigenvalue comes from shooting
in lambda with scipy's ODE integrator; stationary profiles come from
direct shooting in the central value ``u(0)`` with a root
find on ``u(1)``; bubble
integrals come from adaptive quadrature of the closed forms.

Run from the repository root:  python3 tests/oracles/build_oracles.py
"""

import json
from pathlib import Path

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq
from scipy.special import gamma


def bubble(n, r):
    a = n * (n - 2.0)
    return (a / (a + r * r)) ** ((n - 2) / 2.0)


def sphere(n):
    return 2 * np.pi ** (n / 2) / gamma(n / 2)


def limit_phi_end(n, lam, radius):
    ps = (n + 2) / (n - 2)

    def rhs(r, y):
        v = ps * bubble(n, r) ** (ps - 1)
        return [y[1], -(n - 1) / r * y[1] - (v + lam) * y[0]]

    r0 = 1e-6
    # phi = 1 + c r^2 near 0 with c = -(V(0) + lam) / (2n)
    c = -(ps + lam) / (2 * n)
    sol = solve_ivp(rhs, (r0, radius), [1 + c * r0**2, 2 * c * r0], method="DOP853",
                    rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


def limit_lambda(n, radius=30.0):
    # the ground state has no interior zero: scan for the first sign flip of phi(R)
    grid = np.linspace(-3.0, -0.05, 120)
    vals = [limit_phi_end(n, l, radius) for l in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa * fb < 0:
            last = (a, b)
    return brentq(lambda l: limit_phi_end(n, l, radius), *last, xtol=1e-14, rtol=1e-14)


def bubble_levels(n):
    ps = 2.0 * n / (n - 2)
    a = n * (n - 2.0)
    dU = lambda r: -(n - 2.0) * r / (a + r * r) * bubble(n, r)
    g = quad(lambda r: dU(r) ** 2 * r ** (n - 1), 0, np.inf, epsabs=0, epsrel=1e-13, limit=500)[0]
    c = quad(lambda r: bubble(n, r) ** ps * r ** (n - 1), 0, np.inf, epsabs=0, epsrel=1e-13,
             limit=500)[0]
    return g * sphere(n), c * sphere(n)


def _shoot(n, p, amp, r_end=1.0, rtol=1e-13):
    def rhs(r, y):
        return [y[1], -(n - 1) / r * y[1] - np.abs(y[0]) ** (p - 1) * y[0]]

    r0 = 1e-7
    y0 = [amp - amp**p * r0**2 / (2 * n), -amp**p * r0 / n]
    if n == 1:
        r0, y0 = 0.0, [amp, 0.0]
        rhs = lambda r, y: [y[1], -np.abs(y[0]) ** (p - 1) * y[0]]
    return solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=rtol, atol=rtol * amp,
                     dense_output=True)


def _zeros_before_one(n, p, amp):
    sol = _shoot(n, p, amp, rtol=1e-8)
    r = np.linspace(sol.t[0], 1.0, 20001)
    u = sol.sol(r)[0]
    return int(np.sum(u[:-1] * u[1:] < 0))


def stationary_amplitude(n, p, k):
    """Direct shooting in u(0): the root of u(1; A) where the k-th zero reaches r = 1."""
    amps = np.geomspace(0.5, 1e4, 150)
    counts = [_zeros_before_one(n, p, a) for a in amps]
    i = next(i for i, c in enumerate(counts) if c >= k)
    lo, hi = amps[i - 1], amps[i]
    amp = brentq(lambda a: _shoot(n, p, a).y[0, -1], lo, hi, xtol=1e-14, rtol=1e-15)
    sol = _shoot(n, p, amp)
    r = np.linspace(sol.t[0], 1.0, 400001)
    u = sol.sol(r)[0]
    zc = np.where(u[:-1] * u[1:] < 0)[0]
    zeros = [brentq(lambda s: sol.sol(s)[0], r[i], r[i + 1], xtol=1e-15) for i in zc]
    return {"u0": float(amp), "nodal_radii": zeros[: k - 1], "m_minus": float(-u.min())}


def main():
    out = {"lambda_star": {}, "bubble_levels": {}, "stationary": []}
    for n in (3, 4, 5, 6):
        out["lambda_star"][str(n)] = limit_lambda(n)
    for n in (3, 4, 5):
        g, c = bubble_levels(n)
        out["bubble_levels"][str(n)] = {"grad_sq": g, "crit": c}
    for n, p, k in [(3, 3.0, 2), (3, 2.0, 3), (4, 2.0, 2), (1, 3.0, 2)]:
        rec = stationary_amplitude(n, p, k)
        rec.update(n=n, p=p, k=k)
        out["stationary"].append(rec)
    path = Path(__file__).with_name("frozen.json")
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
