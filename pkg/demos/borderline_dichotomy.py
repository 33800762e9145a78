"""The borderline speed schedule and its two mixed norms.

Block speeds live in u = logloglog(1/t) coordinates where the envelope
integral is exactly du. The L^1_t L^inf_x partial sums grow linearly with the
block count (one triple-log unit of mass per block) while the critical-line
L^q_t L^p_x partial sums converge: membership in the critical family does not
see the accumulating speed.
"""

import numpy as np

from driftlab import borderline_partial_sums, borderline_schedule
from driftlab.drifts import envelope_integral, t_of_u, u_of_t

for a in (1e-3, 1e-5):
    val = envelope_integral(a, np.exp(-np.e))
    print(f"int_{a:g} S(t) dt = {val:.8f}   logloglog gap = "
          f"{u_of_t(a) - u_of_t(np.exp(-np.e)):.8f}")

sched = borderline_schedule(12, n=2)
print(f"\n12 blocks, each with speed mass {sched.blocks[0].integral():.6f}")
print(f"last block covers u in ({sched.blocks[-1].u_lo:.1f}, "
      f"{sched.blocks[-1].u_hi:.1f}); t_of_u underflows there to "
      f"{t_of_u(sched.blocks[-1].u_lo):.3g}")

l1, lq = borderline_partial_sums(sched, q=2.0, n=2, cap_lp=1.0, cap_sup=1.0)
print("\n k   L1_t Linf_x    L2_t L2_x (critical line)")
for k in range(12):
    print(f"{k + 1:2d}   {l1[k]:10.3f}    {lq[k]:.6f}")
print(f"\nL1 sums diverge linearly; Lq tail beyond k = 7: "
      f"{(lq[-1] - lq[6]) / lq[-1]:.2%} of the total")
