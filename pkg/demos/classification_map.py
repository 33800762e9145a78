"""Print a text map of the criticality regions in the (1/q, 1/p) square.

Each drift space L^q_t L^p_x gets an index zeta0 = 2/q + n/p; the map marks
the subcritical/critical region, the supercritical band where local
boundedness still holds, and the failure line, with its bounded-total-speed
endpoint.
"""

import numpy as np

from driftlab import MixedNormSpec, criticality_index

MARKS = {
    "subcritical_or_critical": "A",
    "supercritical_bounded": "B",
    "bounded_total_speed": "S",
    "unbounded_line": "x",
    "dimension_reduced_ok": "a",
    "dimension_reduced_fail": "f",
    "unknown": "?",
}


def text_map(order, n, m=24):
    print(f"\norder = {order}, n = {n}  (rows: 1/q = 0..1, cols: 1/p = 0..1)")
    for iq in np.linspace(0, 1, m):
        row = []
        for ip in np.linspace(0, 1, m):
            q = np.inf if iq == 0 else 1.0 / iq
            p = np.inf if ip == 0 else 1.0 / ip
            if order == "space_outer" and p > q:
                row.append(".")
                continue
            rep = criticality_index(MixedNormSpec(order, n, p=p, q=q))
            row.append(MARKS[rep.cls])
        print(" ".join(row))


if __name__ == "__main__":
    text_map("time_outer", 3)
    text_map("space_outer", 3)
    print("\nA subcritical/critical  B supercritical-bounded  S total speed")
    print("x fails  a dimension-reduced ok  f dimension-reduced fail  ? open")
