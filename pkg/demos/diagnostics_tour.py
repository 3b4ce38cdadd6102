"""The diagnostics that make the estimators trustworthy.

Pointwise quadratic forms bound the moments of the variation flow; the
gradient weight must be a mean-zero martingale; the sup-norm and Sobolev
inequalities sandwich the estimates.  Every check reports the claimed
bound next to the measured value.
"""

import numpy as np

import semigrad as sg
from semigrad.diagnostics import (evaluate_hp, gronwall_gradient_bound,
                                  martingale_mean_check, moment_bound_check,
                                  sobolev_norm_check)

grid = sg.TimeGrid(1.0, 400)

ou = sg.get_scenario("ou1d").make()
print("OU: H_p(x)(v, v)/|v|^2 =", evaluate_hp(ou, 2.0, [0.0], [1.0]),
      "(the mean-reversion rate, doubled)")
rep = moment_bound_check(ou, grid, [0.0], [1.0], p=2, n_paths=5000, seed=1)
print(f"moment bound p=2: E|v_t|^2 = {rep.empirical:.5f} <= {rep.claimed_bound:.5f}"
      f"  -> {'PASS' if rep.passed else 'FAIL'}")

circle = sg.get_scenario("circle").make()
rep = moment_bound_check(circle, grid, [1.0, 0.0], [0.0, 1.0], p=2,
                         n_paths=20_000, seed=2)
print(f"circle grows: E|v_t|^2 = {rep.empirical:.4f} <= e = {rep.claimed_bound:.4f}"
      f"  -> {'PASS' if rep.passed else 'FAIL'}")

bm = sg.get_scenario("bm1d").make()
rep = martingale_mean_check(bm, grid, [0.0], [1.0], n_paths=20_000, seed=3)
print(f"martingale weight mean: {rep.empirical:+.5f} (3 SE = {rep.claimed_bound:.5f})"
      f"  -> {'PASS' if rep.passed else 'FAIL'}")

obs = sg.get_scenario("bm1d").observables["sin"]
rep = gronwall_gradient_bound(bm, obs, grid, [0.0], [1.0], n_paths=20_000, seed=4)
print(f"sup-gradient bound: |{rep.empirical:.4f}| <= {rep.claimed_bound:.4f}"
      f"  -> {'PASS' if rep.passed else 'FAIL'}")

sobs = sg.get_scenario("circle").observables["sin"]
rep = sobolev_norm_check(circle, sobs, sg.TimeGrid(1.0, 200), p=2,
                         n_grid=8, n_paths=3000, seed=5)
print(f"Sobolev norm: {rep.empirical:.4f} <= {rep.claimed_bound:.4f}"
      f"  -> {'PASS' if rep.passed else 'FAIL'}")

# the 1/t blow-up of the weight variance as t -> 0: the price of smoothing
one = sg.get_scenario("bm1d").observables["one"]
print("\nweight variance vs t (expect slope -1):")
for t in (0.01, 0.1, 1.0):
    r = sg.bel_gradient(bm, one, sg.TimeGrid(t, 500), [0.0], [1.0],
                        n_paths=10_000, seed=6)
    var = r.std_error ** 2 * r.n_paths
    print(f"  t = {t:5.2f}: var = {var:9.3f}")
