"""Second derivatives of the semigroup, two ways.

The Hessian estimator splits time at t/2 and multiplies independent
martingale weights on the two halves.  The correction terms can be
expressed either with the derivative of the right inverse ("weights") or
as inner gradient estimates at an intermediate time ("nested"); the two
must agree.
"""

import numpy as np

import semigrad as sg

grid = sg.TimeGrid(1.0, 500)
budget = dict(n_paths=40_000, seed=11)

sc = sg.get_scenario("bm1d")
bm = sc.make()
print("BM, f = sin, x0 = pi/2: second derivative of P_t f")
print(f"  analytic: {-np.exp(-0.5):.5f}")
for variant in ("weights", "nested"):
    r = sg.bel_hessian(bm, sc.observables["sin"], grid, [np.pi / 2],
                       [1.0], [1.0], variant=variant, **budget)
    print(f"  {variant:8s}: {r.mean:.5f} +/- {r.std_error:.5f}")

sco = sg.get_scenario("ou1d")
ou = sco.make()
print("\nOU, f = x^2, x0 = 0")
print(f"  analytic: {2 * np.exp(-2):.5f}")
r = sg.bel_hessian(ou, sco.observables["x_sq"], grid, [0.0], [1.0], [1.0],
                   variant="weights", **budget)
print(f"  weights : {r.mean:.5f} +/- {r.std_error:.5f}")

# curved case: covariant Hessian of the height function at the north pole
sphere = sg.get_scenario("sphere3").make()
height = sg.get_scenario("sphere3").observables["height"]
g2 = sg.TimeGrid(0.5, 400)
e1 = np.array([1.0, 0.0, 0.0])
r = sg.bel_hessian(sphere, height, g2, [0.0, 0.0, 1.0], e1, e1,
                   variant="weights", **budget)
print("\nS^2 height at the north pole, t = 0.5")
print(f"  analytic: {-np.exp(-0.5):.5f}")
print(f"  weights : {r.mean:.5f} +/- {r.std_error:.5f}")
