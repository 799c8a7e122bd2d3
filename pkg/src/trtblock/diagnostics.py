"""Post-processing of run records.

Errors of outer iterates against a reference run, the average contraction
rate of the outer iterations, and physical sanity checks on converged
fields (energy balance, multi-step transport identity, front position).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .driver import BlockResult, Problem, RunRecord
from .transport import SIDES


class GridMismatchError(ValueError):
    """Run and reference live on different meshes or time grids."""


class RateEstimationError(ValueError):
    """No iteration pair is usable for a contraction-rate estimate."""


def relative_l2(a, ref) -> float:
    """``||a - ref||_2 / ||ref||_2`` (absolute norm when ``ref`` vanishes)."""
    a = np.asarray(a, float)
    ref = np.asarray(ref, float)
    if a.shape != ref.shape:
        raise GridMismatchError(f"shape {a.shape} does not match reference {ref.shape}")
    d = np.linalg.norm(a - ref)
    n = np.linalg.norm(ref)
    return d / n if n > 0 else d


@dataclass
class BlockErrors:
    """Iterate errors of one block against the reference solution.

    ``step_E[j, k]`` is the relative L2 error of iterate ``j`` at the block's
    ``k``-th step; ``E[j]`` the space-time 2-norm ``||E_ref - E^(j)||`` over
    the whole block and ``E_ref_norm`` the same norm of the reference.
    """

    block: int
    steps: list
    step_E: np.ndarray
    step_T: np.ndarray
    E: np.ndarray
    T: np.ndarray
    E_ref_norm: float
    T_ref_norm: float


def check_same_grid(run: RunRecord, ref: RunRecord):
    a, b = run.problem.mesh, ref.problem.mesh
    if (a.nx, a.ny) != (b.nx, b.ny) or not np.isclose(a.lx, b.lx) or not np.isclose(a.ly, b.ly):
        raise GridMismatchError("run and reference meshes differ")
    ea, eb = run.partition.step_edges, ref.partition.step_edges
    if ea.shape != eb.shape or not np.allclose(ea, eb, rtol=1e-12, atol=0.0):
        raise GridMismatchError("run and reference time grids differ")


def block_errors(steps, E_iterates, T_iterates, E_ref, T_ref, block: int = 0) -> BlockErrors:
    """Errors of a block's outer iterates ``(J + 1, nsteps_in_block, ncells)``
    against reference fields ``(nsteps_in_block, ncells)``."""
    E_iterates = np.asarray(E_iterates, float)
    T_iterates = np.asarray(T_iterates, float)
    if E_iterates.shape[1:] != np.shape(E_ref) or T_iterates.shape[1:] != np.shape(T_ref):
        raise GridMismatchError("iterates and reference fields have different shapes")
    dE = E_iterates - E_ref[None]
    dT = T_iterates - T_ref[None]
    nE = np.linalg.norm(E_ref, axis=1)
    nT = np.linalg.norm(T_ref, axis=1)
    return BlockErrors(
        block=block, steps=list(steps),
        step_E=np.linalg.norm(dE, axis=2) / nE, step_T=np.linalg.norm(dT, axis=2) / nT,
        E=np.sqrt(np.sum(dE**2, axis=(1, 2))), T=np.sqrt(np.sum(dT**2, axis=(1, 2))),
        E_ref_norm=float(np.linalg.norm(E_ref)), T_ref_norm=float(np.linalg.norm(T_ref)),
    )


def error_vs_reference(run: RunRecord, ref: RunRecord) -> list[BlockErrors]:
    """Per-block iterate errors of ``run`` against the converged ``ref``."""
    check_same_grid(run, ref)
    E_hat = ref.field_history("E")
    T_hat = ref.field_history("T")
    out = []
    for blk in run.blocks:
        if blk.E_iterates is None:
            raise ValueError(f"block {blk.block + 1} was run without stored iterates")
        idx = np.asarray(blk.steps)
        out.append(block_errors(blk.steps, blk.E_iterates, blk.T_iterates,
                                E_hat[idx], T_hat[idx], block=blk.block))
    return out


def contraction_ratios(errors, floor: float = 0.0) -> np.ndarray:
    """Ratios ``e[j+1] / e[j]`` of one error sequence.

    A pair is kept only when both errors exceed ``floor``: below it the
    iterates have reached the precision of the reference and the ratio
    measures noise rather than contraction.
    """
    e = np.asarray(errors, float)
    keep = (e[:-1] > floor) & (e[1:] > floor)
    return e[1:][keep] / e[:-1][keep]


def geometric_mean_rate(sequences, floors=None) -> float:
    """Geometric mean of the contraction ratios pooled over ``sequences``."""
    if floors is None:
        floors = [0.0] * len(sequences)
    ratios = np.concatenate([contraction_ratios(e, f) for e, f in zip(sequences, floors)]
                            + [np.empty(0)])
    if ratios.size == 0:
        raise RateEstimationError("no iteration pair above the noise floor")
    return float(np.exp(np.mean(np.log(ratios))))


def average_convergence_rate(run: RunRecord, ref: RunRecord, noise: float | None = None):
    """Average contraction factors ``(rho_E, rho_T)`` of the outer iterations.

    Errors are space-time norms over each block; the rate is the geometric
    mean of ``||ref - x^(j+1)|| / ||ref - x^(j)||`` over all blocks and
    iterations whose errors stay above ``noise`` times the reference norm
    (default ``1e3`` times the looser of the two outer tolerances).
    """
    if noise is None:
        noise = 1e3 * max(run.criteria.epsilon, ref.criteria.epsilon)
    return rates_from_errors(error_vs_reference(run, ref), noise)


def rates_from_errors(errs, noise: float):
    """``(rho_E, rho_T)`` from per-block :class:`BlockErrors`."""
    rho_E = geometric_mean_rate([e.E for e in errs], [noise * e.E_ref_norm for e in errs])
    rho_T = geometric_mean_rate([e.T for e in errs], [noise * e.T_ref_norm for e in errs])
    return rho_E, rho_T


def rises_to_plateau(values, band: float = 0.8) -> bool:
    """True when ``values`` do not decrease up to their maximum and stay
    within ``band`` times that maximum afterwards."""
    v = np.asarray(values, float)
    top = int(np.argmax(v))
    return bool(np.all(np.diff(v[:top + 1]) >= 0) and np.all(v[top:] >= band * v[top]))


# ----------------------------------------------------------------- physics
def boundary_outflow(problem: Problem, F) -> float:
    """Net radiative power leaving the domain through its sides (per unit
    depth) for a grey face-flux vector ``F``."""
    ops = problem.low_order.ops
    mesh = problem.mesh
    total = 0.0
    for side in SIDES:
        idx = ops.side_faces[side]
        length = mesh.dy if side in ("left", "right") else mesh.dx
        total += -ops.side_sign[side] * length * F[idx].sum()
    return total


def energy_balance(problem: Problem, prev, cur, dt):
    """Cell-summed ``delta(material) + delta(radiation) + dt * outflow`` for
    one step, with the sum of the magnitudes of the three terms as scale.

    Returns ``(residual, scale)``.
    """
    V = problem.mesh.cell_volume
    cv = problem.material.cv
    d_mat = V * cv * np.sum(cur.T - prev.T)
    d_rad = V * np.sum(cur.E - prev.E)
    out = dt * boundary_outflow(problem, cur.F)
    return d_mat + d_rad + out, abs(d_mat) + abs(d_rad) + abs(out)


def energy_balance_history(record: RunRecord) -> np.ndarray:
    """Relative energy-balance residual of every accepted step."""
    dt = record.partition.step
    out = []
    for prev, cur in zip(record.states[:-1], record.states[1:]):
        r, scale = energy_balance(record.problem, prev, cur, dt)
        out.append(abs(r) / scale if scale > 0 else abs(r))
    return np.array(out)


def multistep_identity_residual(problem: Problem, block: BlockResult, dt: float) -> float:
    """``||I_end - I_start - sum_n dt * H^n|| / ||I_end||`` over a block.

    The sweeps of the block's last high-order pass are replayed from its
    stored initial intensity and temperatures; ``H^n`` is the transport
    right-hand side evaluated from each swept solution.
    """
    if block.I_start is None:
        raise ValueError("block intensities were not kept")
    ho = problem.transport
    shape = problem.mesh.shape
    I = block.I_start
    acc = np.zeros_like(I)
    for T in block.transport_T:
        res = ho.sweep_step(I, T.reshape(shape), dt)
        acc += dt * ho.rate(res, T.reshape(shape))
        I = res.cell
    return float(np.linalg.norm(I - block.I_start - acc) / np.linalg.norm(I))


def front_position(T, mesh, threshold: float) -> float:
    """Distance from the left side at which the y-averaged temperature
    first drops below ``threshold`` (linear interpolation between cell
    centres; 0 when even the first cell is colder, ``lx`` when no cell is)."""
    prof = np.asarray(T, float).reshape(mesh.shape).mean(axis=1)
    x = (np.arange(mesh.nx) + 0.5) * mesh.dx
    below = np.nonzero(prof < threshold)[0]
    if below.size == 0:
        return mesh.lx
    k = int(below[0])
    if k == 0:
        return 0.0
    t0, t1 = prof[k - 1], prof[k]
    return float(x[k - 1] + (t0 - threshold) / (t0 - t1) * mesh.dx)
