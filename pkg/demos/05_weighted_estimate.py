"""Weighted L^p estimate with an unbounded potential.

The potential V = (1 + |x|^2) I dominates the weight v = 1 + |x|^2.  For p = 2
the audit checks the lower bound term by term and reports the ratio
||v u||_p / ||A u||_p, which the estimate bounds by a constant.
"""

import numpy as np

from semigroup_lab import coefficient_models as cm
from semigroup_lab import form_quadrature as fq

fld = cm.make_symmetric_case_II(0.1 * np.eye(2), 0.1 * np.eye(2), V0=np.eye(2), alpha=0.1, v_alpha=1.0)
w = cm.quadratic_potential_weight(gamma=0.5, C_gamma=0.0, c1=1.0)
rep = cm.certify_potential_weight(fld, w, cm.SamplePlan([-4, -4], [4, 4], resolution=17))
print("weight conditions:", rep.status)

rng = np.random.default_rng(3)
for i in range(5):
    u = fq.random_mixture(rng, 2, 2, complex_values=False, center_box=1.5)
    g = fq.QuadratureGrid.covering(u, 1 / 16)
    a = fq.weighted_estimate_audit(fld, w, u, 2.0, 0.0, g, c0=0.0, scriptC=0.1)
    print(f"u{i}: margin {a.margin:.3e}  ||vu||/||Au|| = {a.ratio:.4f}  (Lambda = {a.Lambda:.4f})")
