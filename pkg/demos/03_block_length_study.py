"""How the length of a time block affects the outer iterations.

The same 20 steps are solved with 1, 5 and 20 steps per block.  The
converged answers agree to roundoff, while longer blocks need more outer
iterations and contract more slowly.  The rates are measured against the
one-step-per-block run, as in the command-line ``rates`` tool.
"""

from trtblock.config import load_config
from trtblock.diagnostics import average_convergence_rate, relative_l2
from trtblock.driver import ConvergenceCriteria, run_problem
from trtblock.grid import partition_by_steps

cfg = load_config("fc_desk.cfg")
criteria = ConvergenceCriteria(epsilon=1e-12)
nsteps = 20

runs = {nb: run_problem(cfg.build_problem(), partition_by_steps(cfg.dt, nsteps, nb), criteria)
        for nb in (1, 5, 20)}
ref = runs[1]

print(" N_b  blocks  mean outer  rho_E    rho_T    final T diff")
for nb, rec in runs.items():
    rho_E, rho_T = average_convergence_rate(rec, ref)
    diff = relative_l2(rec.states[-1].T, ref.states[-1].T)
    print(f"{nb:4d}  {rec.partition.nblocks:6d}  {rec.iteration_counts.mean():10.2f}  "
          f"{rho_E:.4f}   {rho_T:.4f}   {diff:.1e}")
