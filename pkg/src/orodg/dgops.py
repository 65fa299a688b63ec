"""Matrix-free DG operators: volume kernels, face fluxes, mortar coupling.

All operators return either a "dual" vector (integrals against every test
function, shape (n_el, K, n_nodes)) or its mass-inverted nodal form.  No
global matrix is ever assembled; element loops run over a fixed chunk grid
(see parallel.py) with cross-element face scatter done sequentially in a
fixed batch order, so results are bitwise independent of the worker count.

Face normals are oriented minus -> plus side; the minus element receives
+lift, the plus element -lift.  Hanging faces integrate on the fine
sub-faces with the coarse trace evaluated through the mortar interpolation
matrices, and lift back with their transposes: conservation across the
interface is exact by construction.
"""

import numpy as np

from .boundary import BoundaryCondition
from .field import StateField
from .errors import UsageError
from .parallel import WorkerPool
from .physics import conserved_to_primitive, inviscid_flux
from .timing import NullTimer

_SERIAL = WorkerPool(1)


def _mm(A, B):
    """Batched matmul (n, K, m) @ (m, p) -> (n, K, p) as one GEMM."""
    n, K, m = A.shape
    return (A.reshape(n * K, m) @ B).reshape(n, K, B.shape[1])


class DGOperators:
    def __init__(self, geometry, pool=None, timer=None):
        self.geometry = geometry
        self.mesh = geometry.mesh
        self.basis = geometry.basis
        self.pool = pool or _SERIAL
        self.timer = timer or NullTimer()
        basis = self.basis
        d = self.mesh.dim
        self.dim = d
        self._BT = basis.vol_interp.T.copy()
        self._D = [m.copy() for m in basis.vol_diff]
        self._wq = basis.vol_w
        self._BfT = basis.face_interp.T.copy()
        self._Bf = basis.face_interp.copy()
        self._mortar = [m.copy() for m in basis.mortar_interp]
        self._n_sub = basis.n_subfaces
        # structurally nonzero adjugate entries, to skip zero metric products
        self._ctrv_nz = [
            (b, a) for b in range(d) for a in range(d)
            if np.any(geometry.ctrv[..., b, a] != 0.0)]
        self._ixcache = {}

    # ------------------------------------------------------------------ util

    def _check_field(self, field):
        if field.mesh_id != self.mesh.fingerprint \
                or field.degree != self.basis.degree:
            raise UsageError("field does not belong to this mesh/degree")

    def _face_vals(self, data, els, axis, side):
        fidx = self.basis.face_nodes[axis][side]
        K = data.shape[1]
        return data[np.ix_(els, np.arange(K), fidx)]

    def _face_ix(self, key, els, axis, side, K):
        """Cached open-mesh index tuple selecting (els, :K, face nodes);
        batches are immutable for the life of the mesh, so these persist."""
        ck = (key, axis, side, K)
        t = self._ixcache.get(ck)
        if t is None:
            t = np.ix_(els, np.arange(K), self.basis.face_nodes[axis][side])
            self._ixcache[ck] = t
        return t

    def _bcs_or_default(self, bcs):
        if bcs is None:
            return [BoundaryCondition("wall")
                    for _ in self.mesh.topology.boundary]
        return bcs

    # --------------------------------------------------------------- engine

    def weak_form(self, data, k_out, vol_flux, face_flux, bc_ghost, pool=None):
        """Generic weak divergence: returns the dual vector of

            -int F : grad(phi) dV + oint Fhat . n phi dS

        vol_flux(Uq, elements_slice) -> (nc, k_out, d, n_q) physical flux at
        volume quadrature points; face_flux(TL, TR, normal) -> (nf, k_out,
        n_qf) numerical normal flux; bc_ghost(i_batch, T_int, normal) ->
        exterior trace.
        """
        pool = pool or self.pool
        geom = self.geometry
        basis = self.basis
        d = self.dim
        ne, K, nn = data.shape
        dual = np.zeros((ne, k_out, nn))
        wq = self._wq

        def vol_chunk(a, b):
            Uq = _mm(data[a:b], self._BT)
            F = vol_flux(Uq, slice(a, b))
            acc = dual[a:b]
            for bx in range(d):
                tmp = None
                for ax in range(d):
                    if (bx, ax) not in self._ctrv_nz:
                        continue
                    term = F[:, :, ax, :] * geom.ctrv[a:b, None, :, bx, ax]
                    tmp = term if tmp is None else tmp + term
                if tmp is None:
                    continue
                tmp *= wq[None, None, :]
                acc -= _mm(tmp, self._D[bx])

        if vol_flux is not None:
            pool.run(vol_chunk, ne)

        topo = self.mesh.topology
        timer = self.timer
        K = data.shape[1]
        nqf = self.basis.n_face_quad
        nfn = (self.basis.degree + 1) ** (d - 1)
        ar_k = np.arange(k_out)

        # conforming faces (same-level, includes periodic wraps)
        for ic, (batch, fg) in enumerate(zip(topo.conforming, geom.conforming)):
            nf = len(batch.left)
            axis = batch.axis
            TL = np.empty((nf, K, nqf))
            TR = np.empty((nf, K, nqf))
            ixL = self._face_ix(("c", ic, "l"), batch.left, axis, 1, K)
            ixR = self._face_ix(("c", ic, "r"), batch.right, axis, 0, K)

            def gather(a, b, TL=TL, TR=TR, ixL=ixL, ixR=ixR):
                TL[a:b] = _mm(data[ixL[0][a:b], ixL[1], ixL[2]], self._BfT)
                TR[a:b] = _mm(data[ixR[0][a:b], ixR[1], ixR[2]], self._BfT)

            with timer.block("ghost_exchange"):
                pool.run(gather, nf)
            lifts = np.empty((nf, k_out, nfn))

            def conf_chunk(a, b, fg=fg, TL=TL, TR=TR, lifts=lifts, ic=ic):
                flux = face_flux(TL[a:b], TR[a:b], fg.normal[a:b],
                                 ("c", ic, a, b))
                lifts[a:b] = _mm(flux * fg.ws[a:b, None, :], self._Bf)

            pool.run(conf_chunk, nf)
            fl = self.basis.face_nodes[axis][1]
            fr = self.basis.face_nodes[axis][0]
            dual[np.ix_(batch.left, ar_k, fl)] += lifts
            dual[np.ix_(batch.right, ar_k, fr)] -= lifts

        # hanging faces: quadrature on the fine sub-faces, the coarse trace
        # seen through the mortar interpolation
        for ih, (batch, fg) in enumerate(zip(topo.hanging, geom.hanging)):
            axis, orient = batch.axis, batch.orient
            n_sub = self._n_sub
            n_rows = len(batch.fine)
            n_groups = n_rows // n_sub
            fine_side = 0 if orient == 1 else 1
            TF = np.empty((n_rows, K, nqf))
            TC = np.empty((n_rows, K, nqf))
            ixF = self._face_ix(("h", ih, "f"), batch.fine, axis, fine_side, K)
            ixC = self._face_ix(("h", ih, "c"), batch.coarse, axis, orient, K)

            def hgather(ga, gb, TF=TF, TC=TC, ixF=ixF, ixC=ixC, n_sub=n_sub):
                a, b = ga * n_sub, gb * n_sub
                TF[a:b] = _mm(data[ixF[0][a:b], ixF[1], ixF[2]], self._BfT)
                cvals = data[ixC[0][a:b], ixC[1], ixC[2]]
                for sf in range(n_sub):
                    rows = slice(a + sf, b, n_sub)
                    TC[rows] = _mm(cvals[sf::n_sub], self._mortar[sf].T)

            with timer.block("ghost_exchange"):
                pool.run(hgather, n_groups)
            lift_f = np.empty((n_rows, k_out, nfn))
            lift_c = np.empty((n_rows, k_out, nfn))

            def hang_chunk(ga, gb, fg=fg, TF=TF, TC=TC, lift_f=lift_f,
                           lift_c=lift_c, orient=orient, n_sub=n_sub, ih=ih):
                a, b = ga * n_sub, gb * n_sub
                if orient == 1:
                    flux = face_flux(TC[a:b], TF[a:b], fg.normal[a:b],
                                     ("h", ih, a, b))
                else:
                    flux = face_flux(TF[a:b], TC[a:b], fg.normal[a:b],
                                     ("h", ih, a, b))
                wf = flux * fg.ws[a:b, None, :]
                lift_f[a:b] = _mm(wf, self._Bf)
                for sf in range(n_sub):
                    lift_c[a + sf:b:n_sub] = _mm(wf[sf::n_sub], self._mortar[sf])

            pool.run(hang_chunk, n_groups)
            coarse_ids = batch.coarse[::n_sub]
            lc = lift_c.reshape(n_groups, n_sub, k_out, nfn).sum(axis=1)
            sgn_c = 1.0 if orient == 1 else -1.0
            fc = self.basis.face_nodes[axis][orient]
            ff = self.basis.face_nodes[axis][fine_side]
            dual[np.ix_(coarse_ids, ar_k, fc)] += sgn_c * lc
            dual[np.ix_(batch.fine, ar_k, ff)] -= sgn_c * lift_f

        # boundary faces
        for ib, (batch, fg) in enumerate(zip(topo.boundary, geom.boundary)):
            nf = len(batch.leaves)
            axis, side = batch.axis, batch.side
            T = np.empty((nf, K, nqf))
            ixB = self._face_ix(("b", ib, "i"), batch.leaves, axis, side, K)

            def bgather(a, b, T=T, ixB=ixB):
                T[a:b] = _mm(data[ixB[0][a:b], ixB[1], ixB[2]], self._BfT)

            with timer.block("ghost_exchange"):
                pool.run(bgather, nf)
            lifts = np.empty((nf, k_out, nfn))

            def bdry_chunk(a, b, fg=fg, T=T, lifts=lifts, ib=ib):
                G = bc_ghost(ib, (a, b), T[a:b], fg.normal[a:b])
                flux = face_flux(T[a:b], G, fg.normal[a:b], ("b", ib, a, b))
                lifts[a:b] = _mm(flux * fg.ws[a:b, None, :], self._Bf)

            pool.run(bdry_chunk, nf)
            fi = self.basis.face_nodes[axis][side]
            dual[np.ix_(batch.leaves, ar_k, fi)] += lifts
        return dual

    # ----------------------------------------------------- nonlinear fluxes

    def _advective_volume_flux(self, model):
        d = self.dim

        def vol_flux(Uq, sl):
            nc, nv, nq = Uq.shape
            rho = Uq[:, 0]
            F = np.empty((nc, nv, d, nq))
            u = np.empty((nc, d, nq))
            k = np.zeros((nc, nq))
            for a in range(d):
                u[:, a] = Uq[:, 1 + a] / rho
                k += u[:, a] ** 2
            k *= 0.5
            for a in range(d):
                F[:, 0, a] = Uq[:, 1 + a]
                for b in range(d):
                    F[:, 1 + b, a] = Uq[:, 1 + b] * u[:, a]
                F[:, 1 + d, a] = model.kinetic_factor * rho * k * u[:, a]
            return F

        return vol_flux

    def _rusanov_advective(self, model):
        d = self.dim
        kf = model.kinetic_factor

        def face_flux(TL, TR, normal, ctx=None):
            nf, nv, nq = TL.shape
            out = np.empty((nf, nv, nq))
            mnL = np.zeros((nf, nq))
            mnR = np.zeros((nf, nq))
            for a in range(d):
                mnL += TL[:, 1 + a] * normal[:, :, a]
                mnR += TR[:, 1 + a] * normal[:, :, a]
            rhoL, rhoR = TL[:, 0], TR[:, 0]
            unL, unR = mnL / rhoL, mnR / rhoR
            lam = np.maximum(np.abs(unL), np.abs(unR))
            kL = np.zeros((nf, nq))
            kR = np.zeros((nf, nq))
            for a in range(d):
                kL += (TL[:, 1 + a] / rhoL) ** 2
                kR += (TR[:, 1 + a] / rhoR) ** 2
            out[:, 0] = 0.5 * (mnL + mnR)
            for a in range(d):
                out[:, 1 + a] = 0.5 * (TL[:, 1 + a] * unL + TR[:, 1 + a] * unR)
            out[:, 1 + d] = 0.25 * kf * (rhoL * kL * unL + rhoR * kR * unR)
            out -= 0.5 * lam[:, None, :] * (TR - TL)
            return out

        return face_flux

    def divergence_advective(self, data, model, bcs=None, pool=None):
        """Dual of the explicit (advective) flux divergence, Rusanov flux
        with the local flow speed as dissipation speed (the acoustic part of
        the system is handled implicitly, so sound speed does not enter)."""
        bcs = self._bcs_or_default(bcs)

        def bc_ghost(ib, rng, T, normal):
            return bcs[ib].conserved_ghost(T, normal, rng)

        return self.weak_form(data, data.shape[1],
                              self._advective_volume_flux(model),
                              self._rusanov_advective(model), bc_ghost, pool)

    def divergence_full(self, data, model, bcs=None, flux="rusanov", pool=None):
        """Dual of the full Euler flux divergence (used by tests and the
        monolithic-residual checks; the time integrator uses the split
        operators).  flux: 'rusanov' (local max |u.n| + c) or 'centered'."""
        bcs = self._bcs_or_default(bcs)
        d = self.dim

        def vol_flux(Uq, sl):
            W = conserved_to_primitive(Uq, model, var_axis=1, check=False)
            F = inviscid_flux(W)                     # (nv, d, nc, nq)
            return np.moveaxis(F, (0, 1, 2), (1, 2, 0))

        def face_flux(TL, TR, normal, ctx=None):
            WL = conserved_to_primitive(TL, model, var_axis=1, check=False)
            WR = conserved_to_primitive(TR, model, var_axis=1, check=False)
            FL = inviscid_flux(WL)                   # (nv, d, nf, nq)
            FR = inviscid_flux(WR)
            out = 0.5 * np.einsum('vafq,fqa->fvq', FL + FR, normal)
            if flux == "rusanov":
                unL = np.einsum('afq,fqa->fq', WL.u, normal)
                unR = np.einsum('afq,fqa->fq', WR.u, normal)
                lam = np.maximum(np.abs(unL) + WL.sound_speed,
                                 np.abs(unR) + WR.sound_speed)
                out -= 0.5 * lam[:, None, :] * (TR - TL)
            return out

        def bc_ghost(ib, rng, T, normal):
            return bcs[ib].conserved_ghost(T, normal, rng)

        return self.weak_form(data, data.shape[1], vol_flux, face_flux,
                              bc_ghost, pool)

    # ----------------------------------------------------- linear operators

    def gradient_scalar(self, p, model, bcs=None, pool=None):
        """Dual of the weak gradient of a scalar (centered interface value).

        p: (n_el, n_nodes) -> (n_el, d, n_nodes).
        """
        bcs = self._bcs_or_default(bcs)
        d = self.dim
        data = p[:, None, :]
        geom = self.geometry
        wq = self._wq

        def face_flux(TL, TR, normal, ctx=None):
            phat = 0.5 * (TL[:, 0] + TR[:, 0])
            out = np.empty((TL.shape[0], d, TL.shape[2]))
            for a in range(d):
                out[:, a] = phat * normal[:, :, a]
            return out

        def bc_ghost(ib, rng, T, normal):
            return bcs[ib].scalar_ghost(T, model, rng)

        dual = self.weak_form(data, d, None, face_flux, bc_ghost, pool)

        # volume pass, exploiting that the flux tensor is p * identity
        def vol_chunk(a, b):
            wpq = _mm(data[a:b], self._BT)[:, 0] * wq[None, :]
            acc = dual[a:b]
            for k in range(d):
                for bx in range(d):
                    if (bx, k) not in self._ctrv_nz:
                        continue
                    acc[:, k] -= (wpq * geom.ctrv[a:b, :, bx, k]) @ self._D[bx]

        (pool or self.pool).run(vol_chunk, data.shape[0])
        return dual

    def divergence_hv(self, V, h, model, bcs=None, pool=None):
        """Dual of div(h V) with centered interface flux.

        V: (n_el, d, n_nodes) vector field (momentum-like), h: (n_el,
        n_nodes) scalar multiplier (frozen specific enthalpy).
        """
        bcs = self._bcs_or_default(bcs)
        d = self.dim
        data = np.concatenate([V, h[:, None, :]], axis=1)

        def vol_flux(Uq, sl):
            nc, _, nq = Uq.shape
            F = np.empty((nc, 1, d, nq))
            hq = Uq[:, d]
            for a in range(d):
                F[:, 0, a] = hq * Uq[:, a]
            return F

        def face_flux(TL, TR, normal, ctx=None):
            vnL = np.zeros((TL.shape[0], TL.shape[2]))
            vnR = np.zeros_like(vnL)
            for a in range(d):
                vnL += TL[:, a] * normal[:, :, a]
                vnR += TR[:, a] * normal[:, :, a]
            return (0.5 * (TL[:, d] * vnL + TR[:, d] * vnR))[:, None, :]

        def bc_ghost(ib, rng, T, normal):
            return bcs[ib].hv_ghost(T, normal, model, rng)

        return self.weak_form(data, 1, vol_flux, face_flux, bc_ghost, pool)

    def prepare_divergence_hv(self, h, model, bcs=None, pool=None):
        """Like divergence_hv with the scalar multiplier frozen: h's volume
        values and face traces are cached once, so the returned closure only
        moves the vector field.  This is the inner loop of the implicit
        stage solve (h changes per fixed-point iterate, not per matvec)."""
        bcs = self._bcs_or_default(bcs)
        pool = pool or self.pool
        d = self.dim
        geom = self.geometry
        topo = self.mesh.topology
        hq = _mm(h[:, None, :], self._BT)[:, 0, :]          # (ne, nq)
        h2 = h[:, None, :]

        htr = {}
        for ic, batch in enumerate(topo.conforming):
            ixL = self._face_ix(("c", ic, "l"), batch.left, batch.axis, 1, 1)
            ixR = self._face_ix(("c", ic, "r"), batch.right, batch.axis, 0, 1)
            htr[("c", ic)] = (_mm(h2[ixL[0], ixL[1], ixL[2]], self._BfT)[:, 0],
                              _mm(h2[ixR[0], ixR[1], ixR[2]], self._BfT)[:, 0])
        for ih, batch in enumerate(topo.hanging):
            n_sub = self._n_sub
            fine_side = 0 if batch.orient == 1 else 1
            ixF = self._face_ix(("h", ih, "f"), batch.fine, batch.axis,
                                fine_side, 1)
            ixC = self._face_ix(("h", ih, "c"), batch.coarse, batch.axis,
                                batch.orient, 1)
            hF = _mm(h2[ixF[0], ixF[1], ixF[2]], self._BfT)[:, 0]
            cv = h2[ixC[0], ixC[1], ixC[2]]
            hC = np.empty_like(hF)
            for sf in range(n_sub):
                hC[sf::n_sub] = _mm(cv[sf::n_sub], self._mortar[sf].T)[:, 0]
            htr[("h", ih)] = (hC, hF) if batch.orient == 1 else (hF, hC)
        for ib, (batch, fg) in enumerate(zip(topo.boundary, geom.boundary)):
            ixB = self._face_ix(("b", ib, "i"), batch.leaves, batch.axis,
                                batch.side, 1)
            hT = _mm(h2[ixB[0], ixB[1], ixB[2]], self._BfT)[:, 0]
            if bcs[ib].kind == "wall":
                htr[("b", ib)] = (hT, hT)
            else:
                dummy = np.zeros((len(batch.leaves), d + 1,
                                  self.basis.n_face_quad))
                gh = bcs[ib].hv_ghost(dummy, fg.normal, model,
                                      (0, len(batch.leaves)))
                htr[("b", ib)] = (hT, gh[:, d])

        def vol_flux(Vq, sl):
            nc, _, nq = Vq.shape
            F = np.empty((nc, 1, d, nq))
            hs = hq[sl]
            for a in range(d):
                F[:, 0, a] = hs * Vq[:, a]
            return F

        def face_flux(TL, TR, normal, ctx):
            kind, index, a, b = ctx
            hL, hR = htr[(kind, index)]
            vnL = np.zeros((TL.shape[0], TL.shape[2]))
            vnR = np.zeros_like(vnL)
            for ax in range(d):
                vnL += TL[:, ax] * normal[:, :, ax]
                vnR += TR[:, ax] * normal[:, :, ax]
            return (0.5 * (hL[a:b] * vnL + hR[a:b] * vnR))[:, None, :]

        def bc_ghost(ib, rng, T, normal):
            bc = bcs[ib]
            if bc.kind == "wall":
                ghost = T.copy()
                vn = np.zeros((T.shape[0], T.shape[2]))
                for a in range(d):
                    vn += T[:, a, :] * normal[:, :, a]
                for a in range(d):
                    ghost[:, a, :] -= 2.0 * vn * normal[:, :, a]
                return ghost
            gh = bc.hv_ghost(np.zeros((rng[1] - rng[0], d + 1, T.shape[2])),
                             normal, model, rng)
            return gh[:, :d]

        def apply(V, pool=pool):
            return self.weak_form(V, 1, vol_flux, face_flux, bc_ghost, pool)

        return apply

    # ------------------------------------------------------------ reductions

    def apply_divergence(self, field, model, bcs=None, flux="rusanov",
                         pool=None, mass_inverse=True):
        """Spec-level entry: divergence residual of the full flux for a
        StateField, optionally mass-inverted to nodal (dU/dt = -result)."""
        self._check_field(field)
        dual = self.divergence_full(field.data, model, bcs, flux, pool)
        return self.geometry.apply_mass_inverse(dual) if mass_inverse else dual

    def global_inner_product(self, a, b):
        """Deterministic quadrature-weighted inner product of two fields."""
        if isinstance(a, StateField):
            self._check_field(a)
            a.check_compatible(b)
            a, b = a.data, b.data
        if a.shape != b.shape:
            raise UsageError(f"shape mismatch {a.shape} vs {b.shape}")
        aq = _mm(a, self._BT)
        bq = _mm(b, self._BT)
        per_el = np.einsum('ekq,ekq,q,eq->e', aq, bq, self._wq,
                           self.geometry.det_j)
        return float(np.sum(per_el))

    def integrate_conserved(self, field_or_data):
        """Per-variable domain integrals (total mass, momentum, energy)."""
        data = (field_or_data.data if isinstance(field_or_data, StateField)
                else field_or_data)
        Uq = _mm(data, self._BT)
        per_el = np.einsum('evq,q,eq->ev', Uq, self._wq, self.geometry.det_j)
        return per_el.sum(axis=0)
