"""Group Planck functions and Fleck-Cummings group opacities.

A tour of the frequency-dependent material data: how the Planck spectrum
splits over logarithmic groups, how that split moves with temperature, and
how strongly the group opacities fall off with frequency.
"""

import numpy as np

from trtblock.grid import FrequencyGroups
from trtblock.physics import (
    FleckCummingsOpacity, planck_fractions, planck_group, planck_group_derivative, planck_total,
)

# %% Eight logarithmic groups on [0.01, 100] keV with the tails folded in
groups = FrequencyGroups.logarithmic(8)
print("group bounds (keV):", np.array2string(groups.bounds, precision=3))

# %% Fraction of the spectrum per group: cold material radiates in the
# lowest groups, the 1 keV boundary source in the middle ones
T = np.array([1e-3, 0.1, 1.0])
frac = planck_fractions(T, groups)
for t, row in zip(T, frac):
    print(f"T = {t:6.3f} keV  fractions", np.array2string(row, precision=3, suppress_small=True))

# the group functions add up to the full Planck integral
B = planck_group(T, groups)
print("sum_g B_g / (a c T^4 / 4 pi) =", B.sum(axis=1) / planck_total(T))

# %% dB_g/dT drives the linearized emission in the Newton solves
dB = planck_group_derivative(np.array([0.3]), groups)[0]
print("dB_g/dT at 0.3 keV:", np.array2string(dB, precision=3))

# %% Planck-averaged opacity 27/nu^3 (1 - exp(-nu/T)): several decades
# between the first and last group
law = FleckCummingsOpacity(27.0)
for t in (1e-3, 0.1, 1.0):
    k = law.group_mean(np.array([t]), groups)[0]
    print(f"T = {t:6.3f} keV  kappa_g (1/cm)", np.array2string(k, precision=2))
