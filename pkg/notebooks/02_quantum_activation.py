"""
Quantum violation and activation by mixing
==========================================

Two partially entangled pure states that cannot violate covCHSH <= 16/7
on their own can violate it once mixed.  The closed forms are
``2 sqrt2 sin(theta)`` for the pure states and ``2 sqrt(1 + sin^2 theta)``
for their equal mixture.
"""

# %%
import math

import numpy as np

from covbell import COVCHSH, optimize_measurements, phi_theta, rho_theta
from covbell.quantum import mixed_covchsh_reference, pure_covchsh_reference

BOUND = 16 / 7

# %% [markdown]
# A coarse version of the activation figure.  Each value is a multi-start
# optimization over Alice's and Bob's Bloch vectors.

# %%
print(" theta   pure(opt)  pure(ref)  mixed(opt)  mixed(ref)")
for theta in np.linspace(0.3, math.pi / 2, 7):
    pure = optimize_measurements(phi_theta(theta), COVCHSH, restarts=8, seed=1).value
    mixed = optimize_measurements(rho_theta(theta), COVCHSH, restarts=8, seed=1).value
    mark = "  <- only the mixture violates" if pure <= BOUND < mixed else ""
    print(
        f"{theta:6.3f}  {pure:9.6f}  {pure_covchsh_reference(theta):9.6f}"
        f"  {mixed:10.6f}  {mixed_covchsh_reference(theta):10.6f}{mark}"
    )

# %% [markdown]
# The window edges follow directly from the closed forms.

# %%
lo = math.asin(math.sqrt((BOUND / 2) ** 2 - 1))
hi = math.asin(BOUND / (2 * math.sqrt(2)))
print(f"activation window: {lo:.4f} < theta < {hi:.4f}")
