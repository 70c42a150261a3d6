"""Resistance, exit-time and eigenvalue exponents against their predicted values.

Run: python3 demos/walk_exponents.py   (about half a minute)
"""
import numpy as np

from gasket_renorm import forms, walksim
from gasket_renorm.network import FormV0
from gasket_renorm.wordspace import census_slope

THETA, A_STAR = 0.6136022051237405, 0.31315953892323617
base = FormV0.symmetric(A_STAR)
dims = forms.dimension_constants(THETA)
print(f"predicted: d_H {dims.d_H:.4f}  theta {THETA:.4f}  beta {dims.beta:.4f}  "
      f"d_S {dims.d_S:.4f}")

slope, counts = census_slope(6, 20)
print(f"cell census slope {slope:.4f}  (cells at scale rho^20: {counts[20]})")

samples = forms.resistance_samples(2, 9, base, THETA, 300, seed=0)
fit = forms.fit_exponent(samples)
print(f"log R vs log d slope {fit.slope:.4f}  95% CI [{fit.slope_ci[0]:.3f}, "
      f"{fit.slope_ci[1]:.3f}]")

lf = forms.assemble_scale_form(13, base, THETA)
mu = walksim.measure_weights(lf, dims.d_H)
print(f"uniform-scale network: {lf.skeleton.vertex_count} vertices, "
      f"measure defect {mu.defect:.3f}")
lo, hi = walksim.resolved_range(lf)
radii = walksim.log_radii(lo, hi, 25)
centers = np.random.default_rng(0).choice(lf.real_vertices(), 16, replace=False)
prof = np.array([walksim.exit_time_profile(lf, mu, c, radii) for c in centers])
beta = walksim.fit_exit_exponent(radii, np.exp(np.log(prof).mean(axis=0)))
print(f"exit-time slope {beta.slope:.4f} over radii {lo:.4f}..{hi:.2f}")

c0 = int(centers[0])
w = walksim.mc_walk(lf, mu, c0, seed=0, walker_count=2000, horizon=1e3 * prof[0, 3],
                    region=walksim.ball(lf, c0, radii[3]))
print(f"Monte Carlo at s = {radii[3]:.4f}: {w.mean:.4e} +- {w.stderr:.1e}  "
      f"exact {prof[0, 3]:.4e}  z = {(w.mean - prof[0, 3]) / w.stderr:+.2f}")

lfs = forms.assemble_scale_form(12, base, THETA)
eigs = walksim.spectral_counting(lfs, walksim.measure_weights(lfs, dims.d_H), 200)
weyl = walksim.counting_fit(eigs)
print(f"Weyl counting slope {weyl.slope:.4f}  (predicted d_S/2 = {dims.d_S / 2:.4f})")
