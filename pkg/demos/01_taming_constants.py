"""Taming constants of the three example families.

Builds one field per family, certifies the hypotheses on a sample grid and
compares the claimed constant with the empirical supremum.  Then prints the
exponent intervals that follow from the claimed constant.
"""

from fractions import Fraction

import numpy as np

from semigroup_lab import coefficient_models as cm
from semigroup_lab import constants_lab as cl

rng = np.random.default_rng(0)
plan = cm.SamplePlan([-2, -2], [2, 2], resolution=9)

fields = {
    "case I   (k0 = 0.05)": cm.random_case_I(rng, 2, 2, 0.05),
    "case II  (Lambda_G = 0.2)": cm.random_case_II(rng, 2, 2, 0.2),
    "case III (k2 = 0.05, k3 = 0.025)": cm.random_case_III(rng, 2, 2, 0.05, 0.025),
}

print(f"{'family':36s} {'claimed C':>10s} {'empirical C':>12s} {'c0':>8s}")
for name, fld in fields.items():
    rep = cm.certify_hypotheses(fld, plan)
    print(f"{name:36s} {fld.metadata['claimed_scriptC']:10.4f} "
          f"{rep.constants['scriptC']:12.4f} {rep.constants['c0']:8.4f}")

# case III carries two candidate constants
alt = fields["case III (k2 = 0.05, k3 = 0.025)"].metadata["claimed_scriptC_alt"]
print(f"\ncase III alternative constant m d (k2 + k3) = {alt:.4f}")

print("\nExponent ranges for C = 0.2 (exact arithmetic):")
rep = cl.dissipativity_intervals(Fraction(1, 5))
for label, iv in (("J", rep.J), ("J tilde", rep.Jtilde), ("condition window", rep.cond_p_window),
                  ("domain window", rep.domain_window)):
    print(f"  {label:17s} {iv}")
