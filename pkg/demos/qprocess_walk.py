"""
The population conditioned to survive forever
=============================================

"""

import numpy as np
from mbpre import build_chain, build_qkernel, corollary_checks, f3, qprocess_simulate, qstat, yaglom_exact
from mbpre.qprocess import occupation

chain = build_chain(f3(), 40)
ya = yaglom_exact(chain)

# size-biased kernel: rows lose only the size-biased leak
q = build_qkernel(chain)
print(q.row_sum_error(), q.leak_star.max())

# invariant law t*_y proportional to (y, U) t_y
st = qstat(q, ya)
print(st.residual, len(st.recurrent_class), st.aperiodic_witness)
print(st.t_star @ q.leak_star)

# a long run of the conditioned chain
path = qprocess_simulate(q, (1, 0), 200_000, 5)
occ = occupation(q, path)
print(0.5 * np.abs(occ - st.t_star).sum())

# mean size along the path against the size-biased mean
print(path.sum(axis=1).mean(), q.states.sum(axis=1) @ st.t_star)

# finite-dimensional identities and limits
rep = corollary_checks(chain, q, ya)
print(rep.as_dict())
