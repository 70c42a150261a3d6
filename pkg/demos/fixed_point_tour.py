"""Walk from the lambda(r) enclosures to r*, theta and the harmonic values.

Run: python3 demos/fixed_point_tour.py   (about a minute)
"""
import math

from gasket_renorm.network import FormV0
from gasket_renorm.qfield import RHO
from gasket_renorm.renorm import (fixed_point, harmonic_values, lambda_bounds, lambda_scan,
                                  solve_r_star)

print(f"rho = {RHO:.15f}, admissible r lie in (rho, 1)\n")

# enclosures tighten with depth while staying inside the closed-form bounds
for depth in (8, 12, 18):
    li = fixed_point(0.8, depth=depth)
    print(f"depth {depth:2d}: lambda(0.8) in [{li.low:.10f}, {li.high:.10f}]  "
          f"width {li.width:.2e}")
lo, hi = lambda_bounds(0.8)
print(f"closed-form bounds at 0.8: [{lo:.6f}, {hi:.6f}]\n")

# lambda decreases in r while r^2 increases, so they cross once
print("     r   lambda_low  lambda_high      r^2")
for row in lambda_scan([0.65, 0.70, 0.75, 0.80, 0.85], depth=14):
    print(f"{row['r']:6.2f}  {row['lambda_low']:.8f}  {row['lambda_high']:.8f}  "
          f"{row['r'] ** 2:.8f}")

res = solve_r_star(1e-6)
print(f"\nr* = {res.r_star:.10f}  theta = {res.theta:.10f}  a* = {res.a_star:.10f}")
print(f"check: log r*/log rho = {math.log(res.r_star) / math.log(RHO):.10f}")

# the symmetric harmonic function takes the value lambda at F1 q0 and F2 q0
li = fixed_point(res.r_star, depth=18)
hv = harmonic_values(res.r_star, FormV0.symmetric(li.a_star), 18)
print(f"h_s at F1 q0, F2 q0: {hv.hs[0]:.10f}, {hv.hs[1]:.10f}  lambda mid {li.mid:.10f}")
print(f"h_a at F1 q0, F2 q0: {hv.ha[0]:+.10f}, {hv.ha[1]:+.10f}")
