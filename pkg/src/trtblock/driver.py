"""Outer iteration cycles over time blocks.

Within a block every outer iteration first sweeps the transport equation over
all of the block's time steps with the temperatures of the previous
iteration, storing one Eddington closure per step, and then solves the
low-order equations with the material energy balance over the same steps.
The zeroth iteration runs the low-order pass alone with the isotropic
closure.  Converged terminal fields seed the next block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .grid import AngularQuadrature, FrequencyGroups, SpatialMesh, TimeBlockPartition
from .loqd import LowOrderSolver, LowOrderState
from .physics import MaterialModel
from .transport import TransportSolver, eddington_tensor, isotropic_closure

logger = logging.getLogger(__name__)


class ConvergenceFailure(RuntimeError):
    """Outer iterations exceeded their cap; carries the ``xi`` history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass
class ConvergenceCriteria:
    epsilon: float = 1e-14
    inner_epsilon: float | None = None
    max_outer: int = 200
    max_inner: int = 200

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("outer tolerance must be positive")
        if self.inner_epsilon is None:
            self.inner_epsilon = max(1e-2 * self.epsilon, 1e-15)
        if not self.inner_epsilon > 0:
            raise ValueError("inner tolerance must be positive")


@dataclass
class Problem:
    """Everything that defines a run except the time partition."""

    mesh: SpatialMesh
    quad: AngularQuadrature
    groups: FrequencyGroups
    material: MaterialModel
    boundaries: dict
    initial_temperature: float
    drift_mean: str = "flux"

    @cached_property
    def transport(self) -> TransportSolver:
        return TransportSolver(self.mesh, self.quad, self.groups, self.material, self.boundaries)

    @cached_property
    def low_order(self) -> LowOrderSolver:
        return LowOrderSolver(self.mesh, self.groups, self.material, self.boundaries, self.quad,
                              drift_mean=self.drift_mean)

    @cached_property
    def isotropic_closure(self):
        return isotropic_closure(self.mesh, self.quad, self.groups, self.boundaries)

    def initial_conditions(self):
        T0 = np.full(self.mesh.shape, float(self.initial_temperature))
        return self.transport.initial_intensity(T0), self.low_order.initial_state(T0)


@dataclass
class BlockResult:
    """Outcome of the outer cycle on one block.

    ``xi_E[j-1, k]`` is ``||E^(j)(t^n) - E^(j-1)(t^n)||_2`` for the ``k``-th
    step of the block; ``E_iterates[j, k]`` the grey energy density of
    iteration ``j`` (``j = 0`` is the isotropic-closure pass) when stored.
    """

    block: int
    steps: list
    outer_iterations: int
    xi_E: np.ndarray
    xi_T: np.ndarray
    E_norm: np.ndarray
    T_norm: np.ndarray
    inner_iterations: list
    states: list
    I_start: np.ndarray
    I_end: np.ndarray
    transport_T: np.ndarray
    E_iterates: np.ndarray | None = None
    T_iterates: np.ndarray | None = None


def _low_order_pass(lo: LowOrderSolver, start: LowOrderState, closures, dt, guesses, criteria):
    states, inner = [], []
    prev = start
    for k, closure in enumerate(closures):
        guess = guesses[k] if guesses is not None else prev
        st, s = lo.solve_step(prev, closure, dt, T_guess=guess.T, E_guess=guess.E,
                              tol=criteria.inner_epsilon, max_inner=criteria.max_inner)
        states.append(st)
        inner.append(s)
        prev = st
    return states, inner


def run_block(problem: Problem, partition: TimeBlockPartition, b: int, I_start, lo_start: LowOrderState,
              criteria: ConvergenceCriteria, store_iterates=True) -> BlockResult:
    """Converge block ``b`` (0-based) from its initial intensity and low-order state."""
    steps = list(partition.steps_in_block(b))
    dt = partition.step
    ho, lo = problem.transport, problem.low_order
    shape = problem.mesh.shape

    iso = problem.isotropic_closure
    states, inner0 = _low_order_pass(lo, lo_start, [iso] * len(steps), dt, None, criteria)
    inner = [inner0]
    E_it = [np.array([s.E for s in states])] if store_iterates else None
    T_it = [np.array([s.T for s in states])] if store_iterates else None
    xiE_hist, xiT_hist, En_hist, Tn_hist = [], [], [], []

    j = 0
    while True:
        j += 1
        if j > criteria.max_outer:
            raise ConvergenceFailure(
                f"block {b + 1}: no convergence in {criteria.max_outer} outer iterations",
                {"xi_E": np.array(xiE_hist), "xi_T": np.array(xiT_hist)})
        # high-order pass with the previous iterate's temperatures
        transport_T = np.array([s.T for s in states])
        I = I_start
        closures = []
        for k in range(len(steps)):
            res = ho.sweep_step(I, transport_T[k].reshape(shape), dt)
            closures.append(eddington_tensor(res, problem.quad))
            I = res.cell
        # low-order pass closed with this iteration's Eddington tensors
        new_states, inner_j = _low_order_pass(lo, lo_start, closures, dt, states, criteria)
        inner.append(inner_j)

        xi_E = np.array([np.linalg.norm(a.E - o.E) for a, o in zip(new_states, states)])
        xi_T = np.array([np.linalg.norm(a.T - o.T) for a, o in zip(new_states, states)])
        E_norm = np.array([np.linalg.norm(a.E) for a in new_states])
        T_norm = np.array([np.linalg.norm(a.T) for a in new_states])
        xiE_hist.append(xi_E)
        xiT_hist.append(xi_T)
        En_hist.append(E_norm)
        Tn_hist.append(T_norm)
        states = new_states
        if store_iterates:
            E_it.append(np.array([s.E for s in states]))
            T_it.append(np.array([s.T for s in states]))
        logger.debug("block %d iteration %d: xi_E=%.3e xi_T=%.3e", b + 1, j,
                     xi_E.max() / E_norm.max(), xi_T.max() / T_norm.max())
        if (xi_E.max() <= criteria.epsilon * E_norm.max()
                and xi_T.max() <= criteria.epsilon * T_norm.max()):
            break

    return BlockResult(
        block=b, steps=steps, outer_iterations=j,
        xi_E=np.array(xiE_hist), xi_T=np.array(xiT_hist),
        E_norm=np.array(En_hist), T_norm=np.array(Tn_hist),
        inner_iterations=inner, states=states,
        I_start=I_start, I_end=I, transport_T=transport_T,
        E_iterates=np.array(E_it) if store_iterates else None,
        T_iterates=np.array(T_it) if store_iterates else None,
    )


@dataclass
class RunRecord:
    """Full time history of a run plus the iteration logs of every block.

    ``states[n]`` is the converged low-order state at ``t^n`` (``n = 0`` is
    the initial condition).
    """

    problem: Problem
    partition: TimeBlockPartition
    criteria: ConvergenceCriteria
    states: list
    blocks: list = field(default_factory=list)

    @property
    def iteration_counts(self) -> np.ndarray:
        return np.array([b.outer_iterations for b in self.blocks])

    def field_history(self, name: str) -> np.ndarray:
        """``(N + 1, ncells)`` array of a grey field (``"E"`` or ``"T"``)."""
        return np.array([getattr(s, name) for s in self.states])


def run_problem(problem: Problem, partition: TimeBlockPartition, criteria: ConvergenceCriteria,
                store_iterates=True, keep_block_intensities=True, progress=None) -> RunRecord:
    """Run all blocks in sequence; block ``b``'s terminal fields seed block ``b + 1``."""
    I, lo_state = problem.initial_conditions()
    record = RunRecord(problem=problem, partition=partition, criteria=criteria, states=[lo_state])
    for b in range(partition.nblocks):
        res = run_block(problem, partition, b, I, lo_state, criteria, store_iterates)
        I, lo_state = res.I_end, res.states[-1]
        if not keep_block_intensities:
            res.I_start = res.I_end = None
        record.blocks.append(res)
        record.states.extend(res.states)
        logger.info("block %d/%d: %d outer iterations", b + 1, partition.nblocks, res.outer_iterations)
        if progress is not None:
            progress(res)
    return record


def run_standard(problem: Problem, dt: float, nsteps: int, criteria: ConvergenceCriteria):
    """Reference per-step driver: outer iterations converge every time step
    separately.  Returns the converged states ``[t^0, ..., t^N]`` and the
    outer iteration count of each step."""
    ho, lo = problem.transport, problem.low_order
    shape = problem.mesh.shape
    I, prev = problem.initial_conditions()
    states, counts = [prev], []
    iso = problem.isotropic_closure
    eps, tol = criteria.epsilon, criteria.inner_epsilon
    for _ in range(nsteps):
        cur, _ = lo.solve_step(prev, iso, dt, T_guess=prev.T, E_guess=prev.E,
                               tol=tol, max_inner=criteria.max_inner)
        for j in range(1, criteria.max_outer + 1):
            res = ho.sweep_step(I, cur.T.reshape(shape), dt)
            closure = eddington_tensor(res, problem.quad)
            new, _ = lo.solve_step(prev, closure, dt, T_guess=cur.T, E_guess=cur.E,
                                   tol=tol, max_inner=criteria.max_inner)
            done = (np.linalg.norm(new.E - cur.E) <= eps * np.linalg.norm(new.E)
                    and np.linalg.norm(new.T - cur.T) <= eps * np.linalg.norm(new.T))
            cur = new
            if done:
                break
        else:
            raise ConvergenceFailure("per-step iteration did not converge", {})
        I = res.cell
        prev = cur
        states.append(cur)
        counts.append(j)
    return states, counts
