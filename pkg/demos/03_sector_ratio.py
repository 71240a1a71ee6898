"""The sector ratio |Im lhs| / A for a diagonal-plus-antisymmetric Q.

With real symmetric coefficients and real test functions the ratio is zero.
An antisymmetric part in Q tilts the numerical range; the ratio then stays
bounded by the budget built from c0 and C, which is what analyticity needs.
"""

import numpy as np

from semigroup_lab import coefficient_models as cm
from semigroup_lab import form_quadrature as fq

rng = np.random.default_rng(2)
sym = cm.random_case_I(rng, 2, 2, 0.05)
tilted = cm.random_case_III(rng, 2, 2, 0.3, 0.02)
c0 = tilted.metadata["claimed_c0"]
C = tilted.metadata["claimed_scriptC"]

for label, fld, complex_u in (("symmetric, real u", sym, False), ("tilted, complex u", tilted, True)):
    ratios, budgets = [], []
    for _ in range(20):
        u = fq.random_mixture(rng, 2, 2, complex_values=complex_u)
        g = fq.QuadratureGrid.covering(u, 1 / 16)
        r = fq.analyticity_ratio(fld, u, 2.2, fq.default_eps(u, g, 2.2), g, c0=c0, scriptC=C)
        ratios.append(r.ratio)
        budgets.append(r.budget["C1"] if r.budget else np.nan)
    print(f"{label:20s} max ratio {max(ratios):.3e}   budget {budgets[0]:.3f}")
