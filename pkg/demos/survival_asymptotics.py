"""
Survival of a two-type population in a random environment
==========================================================

"""

# The two-type fixture: a rare mild environment and a common harsh one
import numpy as np
from mbpre import build_chain, f3, perron_eig, survival_exact, survival_mc, theorem1_report, yaglom_exact

model = f3()
print(model.m)

# Perron root and eigenvectors of the annealed mean
sd = perron_eig(model.m)
print(sd.lam, sd.U, sd.V)

# Exact annealed chain on |z| <= 40; leaked mass is tracked, not dropped
chain = build_chain(model, 40)
print(len(chain.states), chain.row_sum_error())

# Quasi-stationary law of the surviving population
ya = yaglom_exact(chain)
print(ya.rate, ya.W)
for y, w in list(ya.pmf().items())[:6]:
    print(y, round(w, 6))

# P(Z_n != 0) / lam^n settles on (z, U) / W
rep = theorem1_report(chain, [(1, 0), (0, 1), (1, 1), (2, 1)], yaglom=ya)
for s in rep.summary:
    print(s["z"], s["limit_candidate"], s["target"])

# Monte Carlo against the exact bracket at n = 10
est = survival_mc(model, np.array([1, 1]), 10, 50_000, 7)
br = survival_exact(chain, (1, 1), 10)
print(est.value, est.stderr, br.lower, br.upper)
