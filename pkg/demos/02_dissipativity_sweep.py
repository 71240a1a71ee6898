"""How much dissipativity survives as p moves away from 2.

For a case II field with C = 0.2 the admissible gain delta shrinks as p
approaches the ends of J tilde.  For each exponent we evaluate the margin
``-delta * A - Re lhs`` on a few random test functions; it should stay
nonnegative, and the smallest margin shows how much room the bound leaves.
"""

import numpy as np

from semigroup_lab import coefficient_models as cm
from semigroup_lab import constants_lab as cl
from semigroup_lab import form_quadrature as fq

rng = np.random.default_rng(1)
fld = cm.random_case_II(rng, 2, 2, 0.2)
C = fld.metadata["claimed_scriptC"]
Jt = cl.Jtilde_interval(C)
funcs = [fq.random_mixture(rng, 2, 2) for _ in range(4)]

print(f"C = {C}, J tilde = {Jt}")
print(f"{'p':>6s} {'delta':>7s} {'min margin / A':>15s}")
for p in (1.35, 1.6, 1.8, 2.0, 2.5, 4.0, 10.0, 25.0):
    delta = cl.max_delta_for(p, C).delta
    worst = np.inf
    for u in funcs:
        g = fq.QuadratureGrid.covering(u, 1 / 16)
        r = fq.dissipativity_margin(fld, u, p, fq.default_eps(u, g, p), delta, g)
        worst = min(worst, r.margin / r.A_quant)
    print(f"{p:6.2f} {delta:7.4f} {worst:15.4e}")
