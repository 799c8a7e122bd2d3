"""A Marshak wave on the reduced Fleck-Cummings problem.

A 1 keV black body heats the left side of a cold 6 cm slab.  We run the
first 0.4 ns with one step per time block and follow the temperature front.
"""

import numpy as np

from trtblock.config import load_config
from trtblock.diagnostics import energy_balance_history, front_position
from trtblock.driver import run_problem
from trtblock.grid import partition_by_steps

cfg = load_config("fc_desk.cfg")
problem = cfg.build_problem()
partition = partition_by_steps(cfg.dt, 20, 1)
record = run_problem(problem, partition, cfg.build_criteria())

# %% y-averaged temperature profile every 0.1 ns
mesh = problem.mesh
for n in range(0, 21, 5):
    prof = record.states[n].T.reshape(mesh.shape).mean(axis=1)
    print(f"t = {n * cfg.dt:4.2f} ns  T(x) =", np.array2string(prof, precision=3))

# %% the 0.3 keV front moves right but slows as the heated layer thickens
front = [front_position(s.T, mesh, 0.3) for s in record.states]
print("front position (cm):", np.array2string(np.array(front[::4]), precision=2))

# %% bookkeeping: outer iterations per step and the energy balance
print("outer iterations per step:", record.iteration_counts)
print("max relative energy-balance residual: %.1e" % energy_balance_history(record).max())
