"""Low-order quasidiffusion solvers.

Finite volumes on a staggered grid: energy densities live at cell centres,
normal fluxes on faces.  Each face flux equation is integrated over the two
half cells that share the face, so a boundary face only sees its own half
cell; the boundary value of ``E`` is eliminated with the transport-derived
relation ``F_n = c C E + K``.  The off-diagonal Eddington term is differenced
through corner values averaged from the neighbouring cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .grid import SpatialMesh, FrequencyGroups
from .physics import A_RAD, C_LIGHT, MaterialModel, planck_group_derivative
from .transport import SIDES, DENOMINATOR_FLOOR, EddingtonClosure, isotropic_boundary_factor

_FOUR_PI = 4.0 * np.pi


class LinearSolveError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    pass


class DegenerateCellError(ValueError):
    pass


@dataclass
class LowOrderState:
    """Low-order fields at one time level (flattened cell/face vectors).

    ``Eg``: ``(G, ncells)``; ``Fg``: ``(G, nfaces)`` with x-faces first;
    ``E``, ``F``, ``T``: grey energy density, grey flux and temperature.
    """

    Eg: np.ndarray
    Fg: np.ndarray
    E: np.ndarray
    F: np.ndarray
    T: np.ndarray

    def copy(self) -> "LowOrderState":
        return LowOrderState(self.Eg.copy(), self.Fg.copy(), self.E.copy(),
                             self.F.copy(), self.T.copy())


@dataclass
class GreyCoefficients:
    kappa_E: np.ndarray
    kappa_B: np.ndarray
    kappa_F: np.ndarray
    fxx: np.ndarray
    fyy: np.ndarray
    fxy: np.ndarray
    eta: np.ndarray
    fnn: np.ndarray
    C: np.ndarray
    K: np.ndarray


def _coo(op):
    op = op.tocoo()
    keep = op.data != 0
    return op.row[keep], op.col[keep], op.data[keep]


class FaceOperators:
    """Difference and averaging operators on one mesh plus the precomputed
    sparsity structure of the flux-eliminated cell system.

    Per channel the face flux equations read ``D F + P E = rhs_F`` with ``D``
    diagonal, and the cell balance ``absorb E + div F = rhs``.  Eliminating
    ``F`` gives ``(absorb - div D^-1 P) E``; its pattern is fixed, so the
    matrix values are accumulated with ``bincount`` over precomputed triplets.
    """

    def __init__(self, mesh: SpatialMesh):
        self.mesh = mesh
        nx, ny = mesh.shape
        dx, dy = mesh.dx, mesh.dy
        self.ncells = N = nx * ny
        self.nfx = (nx + 1) * ny
        self.nfy = nx * (ny + 1)
        self.nfaces = nF = self.nfx + self.nfy

        cell = np.arange(N).reshape(nx, ny)
        fx = np.arange(self.nfx).reshape(nx + 1, ny)
        fy = self.nfx + np.arange(self.nfy).reshape(nx, ny + 1)

        def csr(rows, cols, vals, shape):
            return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=shape)

        # divergence: cells x faces
        self.div = csr([cell.ravel()] * 4,
                       [fx[1:].ravel(), fx[:-1].ravel(), fy[:, 1:].ravel(), fy[:, :-1].ravel()],
                       [np.full(N, 1 / dx), np.full(N, -1 / dx), np.full(N, 1 / dy), np.full(N, -1 / dy)],
                       (N, nF))

        # differences of a cell quantity across faces; a boundary face only
        # sees its own cell (the face value is eliminated separately)
        mx, my = (nx - 1) * ny, nx * (ny - 1)
        self.grad = csr(
            [fx[1:-1].ravel(), fx[1:-1].ravel(), fx[0], fx[-1],
             fy[:, 1:-1].ravel(), fy[:, 1:-1].ravel(), fy[:, 0], fy[:, -1]],
            [cell[1:].ravel(), cell[:-1].ravel(), cell[0], cell[-1],
             cell[:, 1:].ravel(), cell[:, :-1].ravel(), cell[:, 0], cell[:, -1]],
            [np.ones(mx), -np.ones(mx), np.ones(ny), -np.ones(ny),
             np.ones(my), -np.ones(my), np.ones(nx), -np.ones(nx)],
            (nF, N))
        self.face_is_x = np.r_[np.ones(self.nfx, bool), np.zeros(self.nfy, bool)]

        # face averages of cell values (boundary faces take their only cell)
        self.avg = csr(
            [fx[1:-1].ravel(), fx[1:-1].ravel(), fx[0], fx[-1],
             fy[:, 1:-1].ravel(), fy[:, 1:-1].ravel(), fy[:, 0], fy[:, -1]],
            [cell[1:].ravel(), cell[:-1].ravel(), cell[0], cell[-1],
             cell[:, 1:].ravel(), cell[:, :-1].ravel(), cell[:, 0], cell[:, -1]],
            [np.full(mx, 0.5), np.full(mx, 0.5), np.ones(ny), np.ones(ny),
             np.full(my, 0.5), np.full(my, 0.5), np.ones(nx), np.ones(nx)],
            (nF, N))

        # corner values averaged from the adjacent cells, then differenced
        # along each face
        ncorner = (nx + 1) * (ny + 1)
        corner = np.arange(ncorner).reshape(nx + 1, ny + 1)
        cnt = np.zeros((nx + 1, ny + 1))
        rows = []
        for di in (0, 1):
            for dj in (0, 1):
                rows.append(corner[di:di + nx, dj:dj + ny].ravel())
                cnt[di:di + nx, dj:dj + ny] += 1
        rows = np.concatenate(rows)
        corner_avg = sp.csr_matrix((1.0 / cnt.ravel()[rows], (rows, np.tile(cell.ravel(), 4))),
                                   shape=(ncorner, N))
        tang = csr([fx.ravel(), fx.ravel(), fy.ravel(), fy.ravel()],
                   [corner[:, 1:].ravel(), corner[:, :-1].ravel(),
                    corner[1:, :].ravel(), corner[:-1, :].ravel()],
                   [np.full(self.nfx, 1 / dy), np.full(self.nfx, -1 / dy),
                    np.full(self.nfy, 1 / dx), np.full(self.nfy, -1 / dx)],
                   (nF, ncorner))
        self.cross = (tang @ corner_avg).tocsr()

        # half-width of the control volume of each face flux equation
        hx = np.full((nx + 1, ny), dx)
        hx[0] = hx[-1] = 0.5 * dx
        hy = np.full((nx, ny + 1), dy)
        hy[:, 0] = hy[:, -1] = 0.5 * dy
        self.h = np.r_[hx.ravel(), hy.ravel()]

        self.side_faces = {
            "left": fx[0].copy(), "right": fx[-1].copy(),
            "bottom": fy[:, 0].copy(), "top": fy[:, -1].copy(),
        }
        # +1 where the face's positive flux direction points into the domain
        self.side_sign = {"left": 1.0, "bottom": 1.0, "right": -1.0, "top": -1.0}

        self._build_pattern()

    def _build_pattern(self):
        N, nF = self.ncells, self.nfaces
        gf, gc, gv = _coo(self.grad)
        xf, xc, xv = _coo(self.cross)
        af, ac, av = _coo(self.avg)
        # union pattern of P
        pf = np.r_[gf, xf, af]
        pc = np.r_[gc, xc, ac]
        key, inv = np.unique(pf * N + pc, return_inverse=True)
        self.p_face, self.p_cell = key // N, key % N
        self.p_nnz = key.size
        n1, n2 = gf.size, gf.size + xf.size
        self.grad_terms = (inv[:n1], gf, gc, gv)
        self.cross_terms = (inv[n1:n2], xf, xc, xv)
        self.avg_terms = (inv[n2:], af, ac, av)

        # triplets of div * D^-1 * P
        dk, df, dv = _coo(self.div)
        by_face_k = np.full((nF, 2), -1)
        by_face_v = np.zeros((nF, 2))
        fill = np.zeros(nF, int)
        for k, f, v in zip(dk, df, dv):
            by_face_k[f, fill[f]] = k
            by_face_v[f, fill[f]] = v
            fill[f] += 1
        tri_p, tri_k, tri_v = [], [], []
        for slot in (0, 1):
            ks = by_face_k[self.p_face, slot]
            ok = ks >= 0
            tri_p.append(np.nonzero(ok)[0])
            tri_k.append(ks[ok])
            tri_v.append(by_face_v[self.p_face, slot][ok])
        tri_p = np.concatenate(tri_p)
        tri_k = np.concatenate(tri_k)
        self.tri_v = np.concatenate(tri_v)
        self.tri_p = tri_p
        self.tri_f = self.p_face[tri_p]
        lkey = np.r_[tri_k * N + self.p_cell[tri_p], np.arange(N) * (N + 1)]
        ukey, linv = np.unique(lkey, return_inverse=True)
        self.l_nnz = ukey.size
        self.tri_l = linv[:tri_p.size]
        self.diag_l = linv[tri_p.size:]
        self.l_row, self.l_col = ukey // N, ukey % N
        self._csr_cache = {}

    def csr_structure(self, nch):
        """``(indptr, indices)`` of the block-diagonal system for ``nch`` channels."""
        if nch not in self._csr_cache:
            N = self.ncells
            rows = (self.l_row[None] + N * np.arange(nch)[:, None]).ravel()
            cols = (self.l_col[None] + N * np.arange(nch)[:, None]).ravel()
            indptr = np.r_[0, np.cumsum(np.bincount(rows, minlength=nch * N))]
            self._csr_cache[nch] = (indptr, cols)
        return self._csr_cache[nch]

    def flux_values(self, fxx, fyy, fxy, eta=None):
        """Values of ``P`` (pattern ``p_face, p_cell``) for stacked channels.

        ``fxx, fyy, fxy``: ``(nch, ncells)``; ``eta``: ``(nch, nfaces)``.
        """
        nch = fxx.shape[0]
        ip, gf, gc, gv = self.grad_terms
        vals = [C_LIGHT * gv * np.where(self.face_is_x[gf], fxx[:, gc], fyy[:, gc])]
        idx = [ip]
        ip2, xf, xc, xv = self.cross_terms
        vals.append(C_LIGHT * self.h[xf] * xv * fxy[:, xc])
        idx.append(ip2)
        if eta is not None:
            ip3, af, ac, av = self.avg_terms
            vals.append(self.h[af] * av * eta[:, af])
            idx.append(ip3)
        idx = np.concatenate(idx)
        vals = np.concatenate(vals, axis=1)
        return _segment_sum(idx, vals, self.p_nnz)

    def system(self, P, dinv, absorb):
        """Block-diagonal CSR of ``absorb - div D^-1 P``."""
        nch = P.shape[0]
        w = -self.tri_v * dinv[:, self.tri_f] * P[:, self.tri_p]
        data = _segment_sum(self.tri_l, w, self.l_nnz)
        data[:, self.diag_l] += absorb
        indptr, indices = self.csr_structure(nch)
        n = nch * self.ncells
        return sp.csr_matrix((data.ravel(), indices, indptr), shape=(n, n))

    def apply_flux(self, P, E):
        """``P @ E`` per channel: ``(nch, nfaces)``."""
        return _segment_sum(self.p_face, P * E[:, self.p_cell], self.nfaces)


def _segment_sum(idx, vals, n):
    """Row-wise ``bincount``: ``out[c, i] = sum(vals[c, idx == i])``."""
    nch = vals.shape[0]
    off = (idx[None, :] + n * np.arange(nch)[:, None]).ravel()
    return np.bincount(off, weights=vals.ravel(), minlength=nch * n).reshape(nch, n)


def _solve(A, rhs, rtol=1e-12):
    """Sparse direct solve with a residual check."""
    x = spsolve(A.tocsc(), rhs)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    r = np.linalg.norm(A @ x - rhs)
    if r > rtol * max(np.linalg.norm(rhs), np.abs(A).max() * np.linalg.norm(x)):
        raise LinearSolveError(f"linear solve residual too large ({r:.3e})")
    return x


DRIFT_MEANS = ("flux", "rosseland")


class LowOrderSolver:
    """Multigroup and effective grey quasidiffusion equations with the
    material energy balance, discretized with backward Euler in time.

    ``drift_mean`` selects the face opacity multiplying the grey flux: the
    flux-weighted group mean (default) or the Rosseland mean.  The drift
    term ``eta`` absorbs the difference either way, so the grey equations
    reproduce the summed group equations exactly.  With the Rosseland mean
    the drift can dominate near cold fronts, where the grey system loses
    positivity; it is meant for comparisons on smooth problems.
    """

    def __init__(self, mesh: SpatialMesh, groups: FrequencyGroups, material: MaterialModel,
                 boundaries: dict, quad=None, drift_mean: str = "flux"):
        if drift_mean not in DRIFT_MEANS:
            raise ValueError(f"drift_mean must be one of {DRIFT_MEANS}, got {drift_mean!r}")
        self.drift_mean = drift_mean
        self.mesh = mesh
        self.groups = groups
        self.material = material
        self.boundaries = boundaries
        self.ops = o = FaceOperators(mesh)
        self.zero_flux = np.zeros(o.nfaces, bool)
        for side in SIDES:
            if boundaries[side].kind == "reflective":
                self.zero_flux[o.side_faces[side]] = True
        self.c_iso = {s: (isotropic_boundary_factor(quad, s) if quad is not None else 0.5)
                      for s in SIDES}

    # ------------------------------------------------------------------ state
    def initial_state(self, T0) -> LowOrderState:
        """Equilibrium radiation at temperature ``T0`` with zero flux."""
        G, o = self.groups.count, self.ops
        T = np.broadcast_to(np.asarray(T0, float), self.mesh.shape).ravel().copy()
        _, B = self.material.group_data(T, self.groups)
        Eg = _FOUR_PI * B / C_LIGHT
        return LowOrderState(Eg=Eg, Fg=np.zeros((G, o.nfaces)), E=Eg.sum(axis=0),
                             F=np.zeros(o.nfaces), T=T)

    # ------------------------------------------------------- face coefficients
    def _face_closure(self, nch, fnn_sides, C_sides, K_sides):
        """Boundary coefficient ``beta = f_nn / C`` and inhomogeneous term
        ``gamma`` of the face flux equations, arrays ``(nch, nfaces)``."""
        o = self.ops
        beta = np.zeros((nch, o.nfaces))
        gamma = np.zeros((nch, o.nfaces))
        for side in SIDES:
            idx = o.side_faces[side]
            if self.boundaries[side].kind == "reflective":
                continue
            fb, C, K = fnn_sides[side], C_sides[side], K_sides[side]
            beta[:, idx] = fb / C
            gamma[:, idx] = o.side_sign[side] * fb * K / C
        return beta, gamma

    def _assemble(self, P, a_face, beta, gamma, F_prev, dt, absorb, rhs_cell):
        """Eliminate face fluxes ``F = dinv * (b0 - P E)``.

        Returns the cell matrix, its right-hand side and ``(dinv, b)`` with
        ``b = dinv * b0`` so that ``F = b - dinv * (P E)``.
        """
        o = self.ops
        denom = o.h * a_face + beta
        dinv = np.where(self.zero_flux, 0.0, 1.0 / np.where(self.zero_flux, 1.0, denom))
        b = dinv * (o.h * F_prev / (C_LIGHT * dt) - gamma)
        M = o.system(P, dinv, absorb)
        rhs = (rhs_cell - (o.div @ b.T).T).ravel()
        return M, rhs, dinv, b

    def _fluxes(self, P, dinv, b, E):
        return b - dinv * self.ops.apply_flux(P, E)

    # --------------------------------------------------------- multigroup step
    def mg_step(self, prev: LowOrderState, closure: EddingtonClosure, T, dt, kappa=None, B=None):
        """Backward-Euler multigroup LOQD step at fixed temperature ``T``.

        Returns ``(Eg, Fg, Eb)`` where ``Eb`` maps side name to the group
        energy densities on that side's faces.
        """
        G, N = self.groups.count, self.ops.ncells
        if kappa is None:
            kappa, B = self.material.group_data(np.asarray(T).ravel(), self.groups)
        fxx = closure.fxx.reshape(G, N)
        fyy = closure.fyy.reshape(G, N)
        fxy = closure.fxy.reshape(G, N)
        P = self.ops.flux_values(fxx, fyy, fxy)
        return self._mg_solve(prev, closure, P, kappa, B, dt)

    def _mg_solve(self, prev, closure, P, kappa, B, dt):
        G, o = self.groups.count, self.ops
        beta, gamma = self._face_closure(
            G,
            {s: closure.boundary[s].fnn for s in SIDES},
            {s: closure.boundary[s].C for s in SIDES},
            {s: closure.boundary[s].K for s in SIDES})
        kface = (o.avg @ kappa.T).T
        a_face = 1.0 / (C_LIGHT * dt) + kface
        absorb = 1.0 / dt + C_LIGHT * kappa
        src = _FOUR_PI * kappa * B + prev.Eg / dt
        M, rhs, dinv, b = self._assemble(P, a_face, beta, gamma, prev.Fg, dt, absorb, src)
        Eg = _solve(M, rhs).reshape(G, o.ncells)
        Fg = self._fluxes(P, dinv, b, Eg)
        Eb = {}
        for side in SIDES:
            if self.boundaries[side].kind == "reflective":
                continue
            bf = closure.boundary[side]
            Fn = -o.side_sign[side] * Fg[:, o.side_faces[side]]
            Eb[side] = (Fn - bf.K) / (C_LIGHT * bf.C)
        return Eg, Fg, Eb

    # -------------------------------------------------------- grey averaging
    def grey_coefficients(self, Eg, Fg, kappa, B, closure: EddingtonClosure, Eb,
                          T=None) -> GreyCoefficients:
        """Spectrum-averaged coefficients reproducing the summed group equations.

        Energy-weighted cell averages, flux-weighted face opacities with the
        energy-weighted opacity as fallback where all group fluxes vanish (or
        face-averaged Rosseland means at ``T``), and the drift vector ``eta``
        carrying the remainder of the face absorption.
        """
        G, o = self.groups.count, self.ops
        Esum = Eg.sum(axis=0)
        if np.any(~(Esum > 0)):
            bad = int(np.argmin(Esum))
            raise DegenerateCellError(f"non-positive total energy density in cell {bad}")
        wE = Eg / Esum
        kE = np.sum(kappa * wE, axis=0)
        kB = np.sum(kappa * B, axis=0) / np.sum(B, axis=0)
        fxx = np.sum(closure.fxx.reshape(G, -1) * wE, axis=0)
        fyy = np.sum(closure.fyy.reshape(G, -1) * wE, axis=0)
        fxy = np.sum(closure.fxy.reshape(G, -1) * wE, axis=0)

        kface = (o.avg @ kappa.T).T
        absF = np.abs(Fg)
        sF = absF.sum(axis=0)
        okF = sF > DENOMINATOR_FLOOR
        kF = np.where(okF, np.sum(kface * absF, axis=0) / np.where(okF, sF, 1.0), o.avg @ kE)
        if self.drift_mean == "rosseland":
            if T is None:
                raise ValueError("the Rosseland drift mean needs the temperature")
            dB = np.moveaxis(planck_group_derivative(T, self.groups), -1, 0)
            kF = o.avg @ (dB.sum(axis=0) / np.sum(dB / kappa, axis=0))
        Eface = (o.avg @ Eg.T).T.sum(axis=0)
        okE = Eface > DENOMINATOR_FLOOR
        eta = np.where(okE, np.sum((kface - kF) * Fg, axis=0) / np.where(okE, Eface, 1.0), 0.0)

        fnn, C, K = {}, {}, {}
        for side in SIDES:
            if side not in Eb:
                continue
            bf = closure.boundary[side]
            s = Eb[side].sum(axis=0)
            ok = np.abs(s) > DENOMINATOR_FLOOR
            safe = np.where(ok, s, 1.0)
            fnn[side] = np.where(ok, np.sum(bf.fnn * Eb[side], axis=0) / safe, 1.0 / 3.0)
            C[side] = np.where(ok, np.sum(bf.C * Eb[side], axis=0) / safe, self.c_iso[side])
            K[side] = bf.K.sum(axis=0)
        return GreyCoefficients(kappa_E=kE, kappa_B=kB, kappa_F=kF, fxx=fxx, fyy=fyy, fxy=fxy,
                                eta=eta, fnn=fnn, C=C, K=K)

    # ------------------------------------------------------ grey + MEB solve
    def meb_temperature(self, E, coeffs: GreyCoefficients, T_prev, dt, tol=1e-15, max_iter=200):
        """Temperature balancing the material energy equation for given ``E``.

        Solves ``cv (T - T_prev)/dt + c kB aR T^4 = c kE E`` per cell with
        Newton iterations started above the root, which converge
        monotonically for this convex increasing function.
        """
        cv = self.material.cv
        a = C_LIGHT * coeffs.kappa_B * A_RAD
        R = C_LIGHT * coeffs.kappa_E * E + cv * T_prev / dt
        if np.any(~(R > 0)):
            bad = int(np.argmin(R))
            raise NewtonError(f"no positive temperature in cell {bad}: E={E[bad]:.6e}")
        T = np.minimum(R * dt / cv, (R / a) ** 0.25)
        for _ in range(max_iter):
            g = cv * T / dt + a * T**4 - R
            step = g / (cv / dt + 4.0 * a * T**3)
            T = T - step
            if np.all(np.abs(step) <= tol * T):
                return T
        raise NewtonError("material temperature Newton did not converge")

    def grey_step(self, prev: LowOrderState, coeffs: GreyCoefficients, dt, T_guess=None,
                  tol=1e-14, max_iter=60):
        """Coupled grey LOQD + material energy balance step.

        Newton iteration on the reduced system ``E -> balance(E, T(E))``:
        the emission term is linearized about the current temperature, the
        grey equations are solved for ``E``, and ``T`` is re-evaluated exactly
        from the material balance.

        Returns ``(E, F, T, iterations)``.
        """
        o = self.ops
        cv = self.material.cv
        beta, gamma = self._face_closure(
            1,
            {s: coeffs.fnn[s][None] for s in coeffs.fnn},
            {s: coeffs.C[s][None] for s in coeffs.C},
            {s: coeffs.K[s][None] for s in coeffs.K})
        P = o.flux_values(coeffs.fxx[None], coeffs.fyy[None], coeffs.fxy[None], eta=coeffs.eta[None])
        a_face = 1.0 / (C_LIGHT * dt) + coeffs.kappa_F
        T_prev = prev.T
        T = T_prev.copy() if T_guess is None else np.asarray(T_guess, float).copy()
        E = None
        restarted = T_guess is None
        kB4 = C_LIGHT * coeffs.kappa_B * A_RAD
        for it in range(1, max_iter + 1):
            phi = 4.0 * kB4 * T**3
            nu = phi / (cv / dt + phi)
            absorb = 1.0 / dt + C_LIGHT * coeffs.kappa_E * (1.0 - nu)
            src = prev.E / dt + nu * cv * T_prev / dt - 3.0 * (1.0 - nu) * kB4 * T**4
            M, rhs, dinv, b = self._assemble(P, a_face[None], beta, gamma, prev.F[None], dt,
                                             absorb[None], src[None])
            E_new = _solve(M, rhs)
            if np.any(E_new <= 0.0) and not restarted:
                # linearized emission from a far-off guess overshot; restart
                # from the previous time level
                restarted = True
                T = T_prev.copy()
                E = None
                continue
            T_new = self.meb_temperature(E_new, coeffs, T_prev, dt)
            dT = np.max(np.abs(T_new - T) / T_new)
            dE = np.linalg.norm(E_new - E) / np.linalg.norm(E_new) if E is not None else np.inf
            E, T = E_new, T_new
            if dT <= tol and dE <= tol:
                break
        else:
            raise NewtonError(f"grey/material Newton did not converge (dT={dT:.3e}, dE={dE:.3e})")
        F = self._fluxes(P, dinv, b, E[None])[0]
        return E, F, T, it

    # ------------------------------------------------------------ inner cycle
    def _inner_map(self, prev, closure, P, T, dt):
        kappa, B = self.material.group_data(T, self.groups)
        Eg, Fg, Eb = self._mg_solve(prev, closure, P, kappa, B, dt)
        coeffs = self.grey_coefficients(Eg, Fg, kappa, B, closure, Eb, T=T)
        E, F, T_new, _ = self.grey_step(prev, coeffs, dt, T_guess=T)
        return Eg, Fg, E, F, T_new

    def solve_step(self, prev: LowOrderState, closure: EddingtonClosure, dt, T_guess=None,
                   E_guess=None, tol=1e-14, max_inner=200):
        """Nested multigroup / grey iteration for one time step.

        Each pass solves the multigroup equations at the current temperature,
        averages them into grey coefficients and solves the grey equations
        with the material balance.  The passes define a fixed-point map on
        the temperature, which is accelerated by Anderson mixing; the fixed
        point is unchanged.  Iterates stop when the grey ``E`` and ``T``
        change by at most ``tol`` relative in the 2-norm.

        Returns ``(state, iterations)``.
        """
        G, N = self.groups.count, self.ops.ncells
        T = prev.T.copy() if T_guess is None else np.asarray(T_guess, float).copy()
        E = prev.E.copy() if E_guess is None else np.asarray(E_guess, float).copy()
        P = self.ops.flux_values(closure.fxx.reshape(G, N), closure.fyy.reshape(G, N),
                                 closure.fxy.reshape(G, N))
        mixer = AndersonMixer(ANDERSON_DEPTH)
        plain = None
        for s in range(1, max_inner + 1):
            try:
                Eg, Fg, E_new, F_new, T_new = self._inner_map(prev, closure, P, T, dt)
            except (NewtonError, DegenerateCellError, LinearSolveError):
                if plain is None:
                    raise
                # extrapolated temperature left the solver's reach
                mixer.reset()
                T, plain = plain, None
                Eg, Fg, E_new, F_new, T_new = self._inner_map(prev, closure, P, T, dt)
            dE = np.linalg.norm(E_new - E)
            dT = np.linalg.norm(T_new - T)
            E = E_new
            if dE <= tol * np.linalg.norm(E) and dT <= tol * np.linalg.norm(T_new):
                T = T_new
                break
            candidate = mixer.update(T, T_new)
            plain = T_new
            T = candidate if np.all(candidate > 0) else T_new
            if T is T_new:
                plain = None
        else:
            raise NewtonError(f"inner multigroup/grey cycle did not converge in {max_inner} iterations")
        return LowOrderState(Eg=Eg, Fg=Fg, E=E, F=F_new, T=T), s


ANDERSON_DEPTH = 5


class AndersonMixer:
    """Anderson acceleration of a fixed-point iteration ``x -> g(x)``.

    ``update(x, gx)`` returns the next input from the last ``depth + 1``
    pairs by minimizing the linearized residual in least squares.
    """

    def __init__(self, depth: int):
        self.depth = int(depth)
        self.reset()

    def reset(self):
        self._g, self._r = [], []

    def update(self, x, gx):
        if self.depth == 0:
            return gx
        self._g.append(gx)
        self._r.append(gx - x)
        del self._g[:-(self.depth + 1)]
        del self._r[:-(self.depth + 1)]
        if len(self._r) < 2:
            return gx
        dR = np.diff(np.array(self._r), axis=0).T
        dG = np.diff(np.array(self._g), axis=0).T
        gamma = np.linalg.lstsq(dR, self._r[-1], rcond=None)[0]
        return gx - dG @ gamma
