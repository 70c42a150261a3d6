"""Energy identities on a finite truncation, and what breaks when theta is off.

A truncated network has its own fixed point (r, theta, a). At those values the
level forms refine each other exactly and the decimation identities hold to
round-off; shifting theta by 0.1 breaks them by tens of percent.

Run: python3 demos/finite_level_identities.py   (a few seconds)
"""
import numpy as np

from gasket_renorm import forms
from gasket_renorm.renorm import cut_r_star

DEPTH, CHAIN = 6, 26
cp = cut_r_star(DEPTH, CHAIN)
print(f"truncation depth {DEPTH}, chains {CHAIN}: r = {cp.r:.8f} theta = {cp.theta:.8f} "
      f"a = {cp.a:.8f}")
base, theta = forms.consistent_parameters(DEPTH, CHAIN)

lf = forms.assemble_Dm(1, DEPTH, base, theta, CHAIN)
print(f"level 1 network: {lf.skeleton.vertex_count} vertices, {len(lf.skeleton.cells)} cells")
f = np.random.default_rng(0).standard_normal(lf.skeleton.vertex_count)

for label, th in (("consistent theta", theta), ("theta + 0.1", theta + 0.1)):
    pairs = forms.monotonicity_check(base, th, 1, DEPTH, chain_depth=CHAIN, samples=3)
    ratio = max(abs(hi / lo - 1) for lo, hi in pairs)
    k1, k2 = forms.decimation_residual(f, base, th, 1, DEPTH, CHAIN)
    print(f"{label:17s} |D2/D1 - 1| = {ratio:.2e}   decimation K1 {k1:.2e}  K2 {k2:.2e}")

# plain regrouping of cells holds for any theta; it is bookkeeping, not physics
lf2 = forms.assemble_Dm(2, 4, base, 0.5)
g = np.random.default_rng(1).standard_normal(lf2.skeleton.vertex_count)
print(f"level-2 regrouping residual at theta 0.5: "
      f"{forms.self_similar_residual(g, base, 0.5, 2, 4):.2e}")
