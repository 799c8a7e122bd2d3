"""High-order solver: backward-Euler discrete-ordinates sweep of the multigroup
transport equation with a step-characteristics cell closure, plus the angular
moments and Eddington closure handed to the low-order equations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import QUADRANT_SIGNS, AngularQuadrature, FrequencyGroups, SpatialMesh
from .physics import C_LIGHT, MaterialModel, planck_group

SIDES = ("left", "right", "bottom", "top")
# outward normal of each side as (nx, ny)
SIDE_NORMALS = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}

# below this angular integral a cell/face is treated as radiation-free
DENOMINATOR_FLOOR = 1e-300

_PARTNER_X = (1, 0, 3, 2)
_PARTNER_Y = (3, 2, 1, 0)


@dataclass(frozen=True)
class BoundaryCondition:
    """Incoming radiation on one side: ``vacuum``, ``blackbody`` or ``reflective``.

    Reflection is a test-only proxy for symmetry/infinite-medium problems.
    """

    kind: str = "vacuum"
    temperature: float | None = None

    def __post_init__(self):
        if self.kind not in ("vacuum", "blackbody", "reflective"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "blackbody" and not (self.temperature and self.temperature > 0):
            raise ValueError("blackbody boundary needs a positive temperature")

    def inflow(self, groups: FrequencyGroups) -> np.ndarray:
        """Isotropic incoming group intensity, shape ``(G,)``."""
        if self.kind == "blackbody":
            return planck_group(np.array(self.temperature), groups)
        return np.zeros(groups.count)


def _side_index(side):
    """Face-array slice of a side in an x-face or y-face array."""
    return {"left": 0, "right": -1, "bottom": 0, "top": -1}[side]


def _local(a, q):
    """View of actual-frame array ``a[..., nx(+1), ny(+1)]`` in quadrant ``q``'s sweep frame."""
    sx, sy = QUADRANT_SIGNS[q]
    return a[..., ::sx, ::sy]


@dataclass
class SweepResult:
    """Solution of one transport step, all arrays in the physical frame.

    ``cell``: ``(G, M, nx, ny)`` cell-average intensities; ``xface``:
    ``(G, M, nx + 1, ny)`` and ``yface``: ``(G, M, nx, ny + 1)`` face-average
    intensities for every direction (inflow values on entry faces).
    """

    cell: np.ndarray
    xface: np.ndarray
    yface: np.ndarray
    streaming: np.ndarray | None = None


def sweep(sigma, source, xin, yin, mesh: SpatialMesh, quad: AngularQuadrature,
          reflective=(), max_reflections=2000, reflect_tol=1e-15) -> SweepResult:
    """Solve ``Omega.grad(I) + sigma I = source`` on every ordinate.

    Parameters
    ----------
    sigma : (G, nx, ny) array
        Total (time-absorption included) interaction coefficient.
    source : (G, M, nx, ny) array
        Cell-constant emission plus previous-time intensity term.
    xin : (G, M, ny) array
        Inflow on the x-face a direction enters through (left for ``mu > 0``,
        right for ``mu < 0``).  Ignored on reflective sides.
    yin : (G, M, nx) array
        Inflow on the y-face a direction enters through.
    reflective : iterable of side names
        Sides whose inflow mirrors the outflow; the sweep is repeated until
        the reflected inflow stops changing.
    """
    G = sigma.shape[0]
    nx, ny = mesh.shape
    dx, dy = mesh.dx, mesh.dy
    mq = quad.per_quadrant
    mu = np.abs(quad.mu[:mq])[:, None, None]
    eta = np.abs(quad.eta[:mq])[:, None, None]

    # Local sweep frame: every quadrant travels toward +x, +y.
    sig = np.stack([_local(sigma, q) for q in range(4)], axis=1)[:, :, None]
    src = source.reshape(G, 4, mq, nx, ny)
    src = np.stack([_local(src[:, q], q) for q in range(4)], axis=1)
    qbar = src / sig

    ystar = np.minimum(dy, eta * dx / mu)
    xstar = np.minimum(dx, mu * dy / eta)
    # psi_right = q + rB (psi_bottom - q) + rL (psi_left - q); same for top.
    rB = (eta / sig) * -np.expm1(-sig * ystar / eta) / dy
    rL = np.exp(-sig * dx / mu) * (dy - ystar) / dy
    tL = (mu / sig) * -np.expm1(-sig * xstar / mu) / dx
    tB = np.exp(-sig * dy / eta) * (dx - xstar) / dx

    # in the local frame the inflow face index runs along the flipped axis
    xin = xin.reshape(G, 4, mq, ny)
    yin = yin.reshape(G, 4, mq, nx)
    xin = np.stack([xin[:, q, :, ::QUADRANT_SIGNS[q][1]] for q in range(4)], axis=1)
    yin = np.stack([yin[:, q, :, ::QUADRANT_SIGNS[q][0]] for q in range(4)], axis=1)

    diagonals = []
    for d in range(nx + ny - 1):
        ii = np.arange(max(0, d - ny + 1), min(nx, d + 1))
        diagonals.append((ii, d - ii))

    reflective = tuple(reflective)
    # reflected inflow starts from the adjacent cells' local equilibrium
    for side in reflective:
        for q in range(4):
            sx, sy = QUADRANT_SIGNS[q]
            if (side == "left" and sx > 0) or (side == "right" and sx < 0):
                xin[:, q] = qbar[:, q, :, 0, :]
            elif (side == "bottom" and sy > 0) or (side == "top" and sy < 0):
                yin[:, q] = qbar[:, q, :, :, 0]
    for _ in range(max_reflections):
        X = np.empty((G, 4, mq, nx + 1, ny))
        Y = np.empty((G, 4, mq, nx, ny + 1))
        X[..., 0, :] = xin
        Y[..., :, 0] = yin
        for ii, jj in diagonals:
            psiL = X[..., ii, jj]
            psiB = Y[..., ii, jj]
            qd = qbar[..., ii, jj]
            X[..., ii + 1, jj] = qd + rB[..., ii, jj] * (psiB - qd) + rL[..., ii, jj] * (psiL - qd)
            Y[..., ii, jj + 1] = qd + tL[..., ii, jj] * (psiL - qd) + tB[..., ii, jj] * (psiB - qd)
        if not reflective:
            break
        new_x, new_y = xin.copy(), yin.copy()
        for side in reflective:
            for q in range(4):
                sx, sy = QUADRANT_SIGNS[q]
                if (side == "left" and sx > 0) or (side == "right" and sx < 0):
                    new_x[:, q] = X[:, _PARTNER_X[q], :, nx, :]
                elif (side == "bottom" and sy > 0) or (side == "top" and sy < 0):
                    new_y[:, q] = Y[:, _PARTNER_Y[q], :, :, ny]
        done = (np.all(np.abs(new_x - xin) <= reflect_tol * np.abs(new_x))
                and np.all(np.abs(new_y - yin) <= reflect_tol * np.abs(new_y)))
        xin, yin = new_x, new_y
        if done:
            break
    else:
        raise RuntimeError("reflective boundary iteration did not converge")

    # cell averages from the exact per-cell balance
    cell = (src - mu * (X[..., 1:, :] - X[..., :-1, :]) / dx
            - eta * (Y[..., :, 1:] - Y[..., :, :-1]) / dy) / sig

    cell_a = np.empty((G, 4, mq, nx, ny))
    X_a = np.empty_like(X)
    Y_a = np.empty_like(Y)
    for q in range(4):
        cell_a[:, q] = _local(cell[:, q], q)
        X_a[:, q] = _local(X[:, q], q)
        Y_a[:, q] = _local(Y[:, q], q)
    M = 4 * mq
    return SweepResult(cell=cell_a.reshape(G, M, nx, ny),
                       xface=X_a.reshape(G, M, nx + 1, ny),
                       yface=Y_a.reshape(G, M, nx, ny + 1))


def streaming_term(result: SweepResult, mesh: SpatialMesh, quad: AngularQuadrature):
    """Discrete ``Omega.grad(I)`` per cell and ordinate from face averages."""
    mu = quad.mu[None, :, None, None]
    eta = quad.eta[None, :, None, None]
    X, Y = result.xface, result.yface
    return (mu * (X[..., 1:, :] - X[..., :-1, :]) / mesh.dx
            + eta * (Y[..., :, 1:] - Y[..., :, :-1]) / mesh.dy)


@dataclass
class Moments:
    """Group angular moments; ``E`` on cells, ``Fx``/``Fy`` on x/y faces."""

    E: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray


def moments(result: SweepResult, quad: AngularQuadrature) -> Moments:
    w = quad.weights
    E = np.einsum("m,gmij->gij", w, result.cell) / C_LIGHT
    Fx = np.einsum("m,gmij->gij", w * quad.mu, result.xface)
    Fy = np.einsum("m,gmij->gij", w * quad.eta, result.yface)
    return Moments(E=E, Fx=Fx, Fy=Fy)


@dataclass
class BoundaryFactors:
    """Low-order closure on one domain side, per group and boundary face.

    The outward normal flux obeys ``F_n = c * C * E_face + K``, which is exact
    for the transport solution whenever ``K = F_n - c * C * E_face`` is taken
    from the same face intensities.  Without incoming radiation
    ``C = sum_out w (Omega.n) I / sum_out w I`` and ``K = 0``.  Where
    radiation enters, ``C`` is the half-range factor of an isotropic field:
    the outgoing ratio there would be a quotient of possibly negligible
    emission tails, and ``K`` would amplify its noise by the incoming energy.
    ``fnn`` is the normal-normal Eddington factor on the face.
    """

    fnn: np.ndarray
    C: np.ndarray
    K: np.ndarray


@dataclass
class EddingtonClosure:
    """Cell Eddington tensors ``(G, nx, ny)`` per component plus side factors."""

    fxx: np.ndarray
    fyy: np.ndarray
    fxy: np.ndarray
    fzz: np.ndarray
    boundary: dict = field(default_factory=dict)
    flagged: np.ndarray | None = None


def _side_faces(result_or_inflow, side):
    return result_or_inflow[..., _side_index(side), :] if side in ("left", "right") \
        else result_or_inflow[..., :, _side_index(side)]


def _direction_normal(quad, side):
    nxs, nys = SIDE_NORMALS[side]
    return nxs * quad.mu + nys * quad.eta


def isotropic_boundary_factor(quad: AngularQuadrature, side: str) -> float:
    """``C`` of an isotropic outgoing distribution for this quadrature."""
    on = _direction_normal(quad, side)
    out = on > 0
    return float(np.sum(quad.weights[out] * on[out]) / np.sum(quad.weights[out]))


def boundary_factors(face_psi, quad: AngularQuadrature, side: str) -> BoundaryFactors:
    """Side closure from face intensities ``face_psi`` of shape ``(G, M, nface)``."""
    w = quad.weights[None, :, None]
    on = _direction_normal(quad, side)[None, :, None]
    out = on > 0
    normal = quad.mu if side in ("left", "right") else quad.eta
    wpsi = w * face_psi

    out_den = np.sum(np.where(out, wpsi, 0.0), axis=1)
    out_num = np.sum(np.where(out, wpsi * on, 0.0), axis=1)
    in_den = np.sum(np.where(out, 0.0, wpsi), axis=1)
    c_iso = isotropic_boundary_factor(quad, side)
    ok = (out_den > DENOMINATOR_FLOOR) & (in_den == 0.0)
    C = np.where(ok, out_num / np.where(ok, out_den, 1.0), c_iso)

    tot = np.sum(wpsi, axis=1)
    nn = np.sum(wpsi * normal[None, :, None] ** 2, axis=1)
    okt = tot > DENOMINATOR_FLOOR
    fnn = np.where(okt, nn / np.where(okt, tot, 1.0), 1.0 / 3.0)

    # K = F_n - c C E on the face; zero up to rounding without inflow
    f_n = np.sum(wpsi * on, axis=1)
    K = np.where(in_den == 0.0, 0.0, f_n - C * tot)
    return BoundaryFactors(fnn=fnn, C=C, K=K)


def eddington_tensor(result: SweepResult, quad: AngularQuadrature) -> EddingtonClosure:
    """Quadrature ratios ``sum w Omega_a Omega_b I / sum w I`` per cell and group.

    Cells whose angular integral is below ``DENOMINATOR_FLOOR`` get the
    isotropic tensor and are marked in ``flagged``.
    """
    w = quad.weights
    I = result.cell
    den = np.einsum("m,gmij->gij", w, I)
    ok = den > DENOMINATOR_FLOOR
    safe = np.where(ok, den, 1.0)

    def ratio(a, b, iso):
        num = np.einsum("m,gmij->gij", w * a * b, I)
        return np.where(ok, num / safe, iso)

    closure = EddingtonClosure(
        fxx=ratio(quad.mu, quad.mu, 1.0 / 3.0),
        fyy=ratio(quad.eta, quad.eta, 1.0 / 3.0),
        fxy=ratio(quad.mu, quad.eta, 0.0),
        fzz=ratio(quad.xi, quad.xi, 1.0 / 3.0),
        flagged=~ok,
    )
    for side in SIDES:
        faces = result.xface if side in ("left", "right") else result.yface
        closure.boundary[side] = boundary_factors(_side_faces(faces, side), quad, side)
    return closure


def isotropic_closure(mesh: SpatialMesh, quad: AngularQuadrature, groups: FrequencyGroups,
                      boundaries: dict) -> EddingtonClosure:
    """Initial-guess closure: ``f = I/3`` and isotropic side factors."""
    G = groups.count
    shape = (G,) + mesh.shape
    third = np.full(shape, 1.0 / 3.0)
    closure = EddingtonClosure(fxx=third, fyy=third.copy(), fxy=np.zeros(shape),
                               fzz=third.copy(), flagged=np.zeros(shape, bool))
    for side in SIDES:
        nface = mesh.ny if side in ("left", "right") else mesh.nx
        bc = boundaries[side]
        on = _direction_normal(quad, side)
        inc = on < 0
        c_iso = isotropic_boundary_factor(quad, side)
        psi_in = bc.inflow(groups)
        e_in = np.sum(quad.weights[inc]) * psi_in / C_LIGHT
        f_in = np.sum(quad.weights[inc] * on[inc]) * psi_in
        K = f_in - C_LIGHT * c_iso * e_in
        closure.boundary[side] = BoundaryFactors(
            fnn=np.full((G, nface), 1.0 / 3.0),
            C=np.full((G, nface), c_iso),
            K=np.repeat(K[:, None], nface, axis=1),
        )
    return closure


class TransportSolver:
    """Backward-Euler step of the multigroup transport equation.

    Solves ``(1/(c dt) + kappa_g(T) + Omega.grad) I = kappa_g(T) B_g(T) +
    I_prev / (c dt)`` by one sweep per ordinate (no scattering, so no source
    iteration is needed).
    """

    def __init__(self, mesh: SpatialMesh, quad: AngularQuadrature, groups: FrequencyGroups,
                 material: MaterialModel, boundaries: dict):
        self.mesh = mesh
        self.quad = quad
        self.groups = groups
        self.material = material
        self.boundaries = boundaries
        self.reflective = tuple(s for s in SIDES if boundaries[s].kind == "reflective")
        self._xin, self._yin = self._inflow()

    def _inflow(self):
        G, M = self.groups.count, self.quad.count
        nx, ny = self.mesh.shape
        xin = np.zeros((G, M, ny))
        yin = np.zeros((G, M, nx))
        for side in SIDES:
            psi = self.boundaries[side].inflow(self.groups)
            enters = _direction_normal(self.quad, side) < 0
            if side in ("left", "right"):
                xin[:, enters, :] = psi[:, None, None]
            else:
                yin[:, enters, :] = psi[:, None, None]
        return xin, yin

    def initial_intensity(self, T) -> np.ndarray:
        """Isotropic equilibrium intensity ``B_g(T)`` on every ordinate."""
        _, B = self.material.group_data(np.asarray(T, float), self.groups)
        return np.repeat(B[:, None], self.quad.count, axis=1)

    def sweep_step(self, I_prev, T, dt, with_streaming=False) -> SweepResult:
        kappa, B = self.material.group_data(np.asarray(T, float), self.groups)
        inv_cdt = 1.0 / (C_LIGHT * dt)
        sigma = kappa + inv_cdt
        source = (kappa * B)[:, None] + I_prev * inv_cdt
        res = sweep(sigma, source, self._xin, self._yin, self.mesh, self.quad,
                    reflective=self.reflective)
        if with_streaming:
            res.streaming = streaming_term(res, self.mesh, self.quad)
        return res

    def rate(self, result: SweepResult, T) -> np.ndarray:
        """Time derivative ``dI/dt = c (kappa B - kappa I - Omega.grad I)``
        evaluated from a swept solution at temperature ``T``.

        The streaming term is differenced from the face intensities, so the
        backward-Euler identity ``I = I_prev + dt * rate`` holds only as far
        as the sweep satisfies its own cell balance.
        """
        kappa, B = self.material.group_data(np.asarray(T, float), self.groups)
        stream = streaming_term(result, self.mesh, self.quad)
        return C_LIGHT * ((kappa * B)[:, None] - kappa[:, None] * result.cell - stream)
