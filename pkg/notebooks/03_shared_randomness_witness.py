"""
How much shared randomness does a covCHSH value need?
=====================================================

Covariances vanish for deterministic strategies, so a large covCHSH
certifies that the source used randomness.  Up to covCHSH = 2 two
strategies suffice and the minimal entropy is ``h2(sqrt(1 - c/2))``;
beyond 2 a third strategy is needed.
"""

# %%
import math

from covbell import entropy_curve, h2, min_shannon_entropy

# %%
print("    c     H_min   log2 d   closed form (c <= 2)")
for p in entropy_curve(0, 16 / 7, 13):
    ref = f"{h2(math.sqrt(1 - p.c / 2)):.6f}" if p.c <= 2 else ""
    print(f"{p.c:6.3f}  {p.min_shannon:.6f}  {p.min_max_entropy:.4f}   {ref}")

# %% [markdown]
# At the local bound the witness decomposition is P_Opt itself.

# %%
top = min_shannon_entropy(16 / 7)
print({k: round(float(top.decomposition.weights[k]), 6) for k in top.decomposition.support})
print(f"H = {top.min_shannon:.4f} bits")
