"""
The local set in the (covCHSH, covCHSH') plane
==============================================

The support function of the local set in direction theta is the maximum
of ``cos(theta) covCHSH + sin(theta) covCHSH'`` over local mixtures.  A
coarse scan already shows the corner at P_Opt = (16/7, 16/49), and that
the local set only touches the no-signalling line covCHSH + covCHSH' = 4
at P_2 = (2, 2).
"""

# %%
import math

from covbell import localset_scan

pts = localset_scan(24, restarts=10, seed=0)

# %%
print(" theta/pi   covCHSH   covCHSH'   support")
for p in pts:
    print(f"{p.theta / math.pi:8.3f}  {p.covchsh:8.5f}  {p.covchsh_prime:9.5f}  {p.support_value:8.5f}")

# %%
print("largest covCHSH + covCHSH' on the boundary:", round(max(p.covchsh + p.covchsh_prime for p in pts), 6))
