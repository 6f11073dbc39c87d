"""BDM1-P0 mixed assembly of the Robin porous-medium subproblem.

The velocity space is the lowest-order Brezzi-Douglas-Marini space: on each
triangle the local space is the full set of linear vector fields, and the
two dofs per edge are the values of the normal trace at the edge endpoints,
taken against a globally oriented edge normal (edge direction runs from the
lower to the higher vertex index) so shared edges are single-valued and the
normal trace is continuous.  The divergence of every discrete velocity is
piecewise constant, exactly.

The subdomain matrix uses ensemble means only (mean inverse conductivity in
the mass term, mean minimal eigenvalue in the grad-div term), so it is
shared by all samples; per-sample deviations are lagged into the right-hand
side as volume terms against the previous iterate.

As in the free-flow module, the stored saddle matrix carries the negated
head so the matrix is symmetric; solve helpers restore the sign.
"""

import time

import numpy as np
import scipy.sparse as sp

from . import quadrature
from .sparsela import SparseMatrix, factorize
from .stokes_fem import edge_mass


class DarcySpace:
    """Dof bookkeeping and precomputed BDM1 element data."""

    def __init__(self, mesh, essential_tags=None, head_multiplier=False):
        self.mesh = mesh
        ne, nt = mesh.n_edges, mesh.n_tris
        self.n_velocity = 2 * ne
        self.n_head = nt
        self.head_multiplier = bool(head_multiplier)
        self.n_dofs = self.n_velocity + self.n_head + (1 if head_multiplier else 0)

        present = set(mesh.boundary_tags) - {""}
        if essential_tags is None:
            essential_tags = present - {"INTERFACE"}
        self.essential_tags = frozenset(essential_tags)

        ess_edges = []
        for tag in self.essential_tags:
            ess_edges.extend(mesh.boundary_edges(tag))
        self.essential_edges = np.array(sorted(ess_edges), dtype=np.int64)

        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[2 * self.essential_edges] = True
        mask[2 * self.essential_edges + 1] = True
        self.essential_mask = mask
        self.free = np.where(~mask)[0]
        self.fixed = np.where(mask)[0]

        iface = mesh.boundary_edges("INTERFACE")
        self.interface_edges = iface
        self.interface_dofs = np.sort(np.concatenate([2 * iface, 2 * iface + 1]))

        self._build_basis()
        self._precompute_quadrature()
        self.velocity_mass = self._velocity_mass()

    @property
    def head_slice(self):
        return slice(self.n_velocity, self.n_velocity + self.n_head)

    def _build_basis(self):
        """Per-triangle linear basis with unit normal-trace endpoint dofs.

        vertex_values[t, ldof, m, :] is the field value of local dof `ldof`
        at local vertex m; local dof 2k+p lives on the edge opposite local
        vertex k (p = 0 for the lower-index endpoint).
        """
        mesh = self.mesh
        nt = mesh.n_tris
        verts, edges, tris = mesh.verts, mesh.edges, mesh.tris

        ev = verts[edges]
        tvec = ev[:, 1] - ev[:, 0]
        tvec = tvec / np.linalg.norm(tvec, axis=1)[:, None]
        self.edge_normal = np.column_stack([tvec[:, 1], -tvec[:, 0]])

        self.elem_dofs = np.empty((nt, 6), dtype=np.int64)
        eot = mesh.edge_of_tri
        self.elem_dofs[:, 0::2] = 2 * eot
        self.elem_dofs[:, 1::2] = 2 * eot + 1

        vv = np.zeros((nt, 6, 3, 2))
        for m in range(3):
            gm = tris[:, m]
            # the two local edges incident to vertex m
            inc = [k for k in range(3) if k != m]
            n1 = self.edge_normal[eot[:, inc[0]]]
            n2 = self.edge_normal[eot[:, inc[1]]]
            det = n1[:, 0] * n2[:, 1] - n1[:, 1] * n2[:, 0]
            inv = np.empty((nt, 2, 2))
            inv[:, 0, 0] = n2[:, 1] / det
            inv[:, 0, 1] = -n1[:, 1] / det
            inv[:, 1, 0] = -n2[:, 0] / det
            inv[:, 1, 1] = n1[:, 0] / det
            for which, k in enumerate(inc):
                e = eot[:, k]
                endpoint = (edges[e, 1] == gm).astype(np.float64)  # 0 if gm is lower endpoint
                rhs = np.zeros((nt, 2))
                rhs[:, which] = 1.0
                val = np.einsum("tij,tj->ti", inv, rhs)
                # dof (k, p) is nonzero at vertex m only when p matches
                ldof_lower = 2 * k
                sel = endpoint == 0.0
                vv[sel, ldof_lower, m, :] = val[sel]
                vv[~sel, ldof_lower + 1, m, :] = val[~sel]
        self.vertex_values = vv

        g = mesh.tri_grads  # (nt, 3, 2)
        self.div = np.einsum("tmd,tlmd->tl", g, vv)

    def _precompute_quadrature(self):
        mesh = self.mesh
        bary, w = quadrature.triangle_rule(2)
        self.qw = w
        self.qpoints = quadrature.physical_points(mesh.verts, mesh.tris, bary)
        # phi[t, q, ldof, comp]
        self.phi = np.einsum("qm,tlmc->tqlc", bary, self.vertex_values)

    def _velocity_mass(self):
        A = self.mesh.tri_area
        Mel = np.einsum("q,tqic,tqjc->tij", self.qw, self.phi, self.phi) * A[:, None, None]
        rows = np.repeat(self.elem_dofs, 6, axis=1).ravel()
        cols = np.tile(self.elem_dofs, (1, 6)).ravel()
        return sp.csr_matrix((Mel.ravel(), (rows, cols)),
                             shape=(self.n_velocity, self.n_velocity))

    def velocity_l2(self, vec):
        u = vec[:self.n_velocity]
        return float(np.sqrt(u @ (self.velocity_mass @ u)))

    def elementwise_div(self, vec):
        """Exact per-triangle divergence of a velocity dof vector."""
        coeffs = vec[self.elem_dofs]
        return np.einsum("tl,tl->t", self.div, coeffs)


def build_darcy_space(mesh, essential_tags=None, head_multiplier=False):
    """Construct the BDM1-P0 space; edges tagged `essential_tags` carry
    strongly imposed normal-flux values (default: every tagged side except
    the interface)."""
    return DarcySpace(mesh, essential_tags=essential_tags, head_multiplier=head_multiplier)


class DarcyInterfaceInfo:
    """Darcy-side view of the interface pairing: x-ordered edge dofs, the
    sign relating the global edge normal to the outward normal n_D, and the
    element-sided tangential trace map."""

    def __init__(self, space, pairing):
        mesh = space.mesh
        n_p = pairing.n_pairs
        self.dofs_x = np.empty((n_p, 2), dtype=np.int64)
        self.sign = np.empty(n_p)
        self.tri = np.empty(n_p, dtype=np.int64)
        self.tau_mat = np.empty((n_p, 2, 6))
        self.loc_dofs = np.empty((n_p, 6), dtype=np.int64)
        n_d = pairing.n_d
        for p in range(n_p):
            e = pairing.pairs[p, 1]
            a, b = mesh.edges[e]
            nA, nB = pairing.nodes_d[p]
            self.dofs_x[p] = (2 * e, 2 * e + 1) if a == nA else (2 * e + 1, 2 * e)
            self.sign[p] = float(space.edge_normal[e] @ n_d)
            t = mesh.edge_tris[e, 0]
            self.tri[p] = t
            self.loc_dofs[p] = space.elem_dofs[t]
            for i, node in enumerate((nA, nB)):
                m = int(np.where(mesh.tris[t] == node)[0][0])
                self.tau_mat[p, i] = space.vertex_values[t, :, m, :] @ pairing.tau

    def normal_trace(self, vec):
        """u . n_D at the x-sorted endpoints of every pair, (n_pairs, 2)."""
        return self.sign[:, None] * vec[self.dofs_x]

    def tangential_trace(self, vec):
        """Element-sided u . tau at the x-sorted endpoints, (n_pairs, 2)."""
        return np.einsum("pil,pl->pi", self.tau_mat, vec[self.loc_dofs])


class DarcyOperator:
    """Assembled, reduced, and factorized porous-medium subdomain matrix."""

    def __init__(self, space, matrix, delta_d, g, iface):
        self.space = space
        self.matrix = matrix
        self.delta_d = delta_d
        self.g = g
        self.iface = iface
        free, fixed = space.free, space.fixed
        csr = matrix.csr
        self.A_ff = csr[free][:, free].tocsc()
        self.A_fd = csr[free][:, fixed].tocsr()
        t0 = time.perf_counter()
        self.factorization = factorize(SparseMatrix(self.A_ff))
        self.factor_seconds = time.perf_counter() - t0

    def lift(self, essential_values):
        return self.A_fd @ essential_values[self.space.fixed]

    def reduce_rhs(self, rhs_full, lift_vec=None):
        b = rhs_full[self.space.free]
        if lift_vec is not None:
            b = b - lift_vec
        return b

    def expand(self, x_free, essential_values=None):
        full = np.zeros(self.space.n_dofs)
        if essential_values is not None:
            full[self.space.fixed] = essential_values[self.space.fixed]
        full[self.space.free] = x_free
        full[self.space.head_slice] *= -1.0
        return full

    def split(self, full):
        s = self.space
        return (full[:s.n_velocity], full[s.head_slice],
                full[-1] if s.head_multiplier else 0.0)


def mass_divdiv_elements(space, g, coeff, k_min):
    """Element matrices of g (W u, v) + g k_min (div u, div v), where the
    weight tensor W comes from coeff.inv_tensor(points)."""
    mesh = space.mesh
    A = mesh.tri_area
    pts = space.qpoints.reshape(-1, 2)
    W = coeff.inv_tensor(pts).reshape(mesh.n_tris, len(space.qw), 2, 2)
    if np.any(W[:, :, 0, 0] <= 0) or np.any(W[:, :, 1, 1] <= 0):
        raise ValueError("coefficient tensor not SPD at a quadrature point")
    Mel = g * np.einsum("q,tqcd,tqid,tqjc->tij", space.qw, W, space.phi, space.phi) * A[:, None, None]
    Mel += g * k_min * np.einsum("ti,tj->tij", space.div, space.div) * A[:, None, None]
    return Mel


def assemble_darcy_operator(space, g, kbar, kbar_min, delta_d, pairing):
    """Assemble and factorize the shared porous-medium matrix.

    `kbar` supplies the mass-term coefficient tensor via
    kbar.inv_tensor(points) (for an ensemble this is the mean of the sample
    inverse tensors); `kbar_min` weights the grad-div augmentation.
    """
    if g <= 0:
        raise ValueError("gravity constant g must be positive")
    if delta_d <= 0:
        raise ValueError("delta_d must be positive")
    if kbar_min <= 0:
        raise ValueError("kbar_min must be positive")

    mesh = space.mesh
    A = mesh.tri_area
    Mel = mass_divdiv_elements(space, g, kbar, kbar_min)

    builder = SparseMatrix.builder(space.n_dofs, space.n_dofs)
    ed = space.elem_dofs
    rows = np.repeat(ed, 6, axis=1).ravel()
    cols = np.tile(ed, (1, 6)).ravel()
    builder.add(rows, cols, Mel.ravel())

    # divergence coupling (negated-head convention keeps this symmetric)
    Bel = g * space.div * A[:, None]
    hd = space.n_velocity + np.arange(space.n_head)
    rows = np.repeat(hd, 6)
    cols = ed.ravel()
    builder.add(rows, cols, Bel.ravel())
    builder.add(cols, rows, Bel.ravel())

    iface = DarcyInterfaceInfo(space, pairing)
    for p in range(pairing.n_pairs):
        Me = edge_mass(pairing.lengths[p])
        d = iface.dofs_x[p]
        rows = np.repeat(d, 2)
        cols = np.tile(d, 2)
        builder.add(rows, cols, delta_d * Me.ravel())

    if space.head_multiplier:
        mdof = space.n_dofs - 1
        builder.add(hd, np.full_like(hd, mdof), A)
        builder.add(np.full_like(hd, mdof), hd, A)

    matrix = builder.finalize()
    return DarcyOperator(space, matrix, delta_d, g, iface)


def assemble_darcy_volume_rhs(space, f_D, k_min, g):
    """k_min g (f_D, div v) momentum rows plus g (f_D, psi) continuity rows."""
    mesh = space.mesh
    pts = space.qpoints.reshape(-1, 2)
    fvals = np.asarray(f_D(pts)).reshape(mesh.n_tris, len(space.qw))
    f_int = np.einsum("q,tq->t", space.qw, fvals) * mesh.tri_area
    rhs = np.zeros(space.n_dofs)
    np.add.at(rhs, space.elem_dofs, k_min * g * space.div * f_int[:, None])
    rhs[space.head_slice] += g * f_int
    return rhs


def add_darcy_interface_rhs(rhs, iface, pairing, g_D):
    """Accumulate -<g_D, v.n_D> for per-pair linear traces (n_pairs, 2)."""
    for p in range(pairing.n_pairs):
        Me = edge_mass(pairing.lengths[p])
        v = Me @ g_D[p]
        d = iface.dofs_x[p]
        rhs[d[0]] -= iface.sign[p] * v[0]
        rhs[d[1]] -= iface.sign[p] * v[1]
    return rhs


def add_darcy_natural_head_rhs(rhs, space, tags, head_fn, g):
    """Accumulate -g <head, v.n_out> over the edges carrying the given tags.

    Prescribing the head on an exterior side is the natural boundary
    condition of the mixed form; it pins the head level through the data.
    Edge integrals use 3-point Gauss against the analytic head values.
    """
    from .quadrature import EDGE_GAUSS_PTS, EDGE_GAUSS_W

    mesh = space.mesh
    edges = np.concatenate([mesh.boundary_edges(t) for t in tags]) if tags else []
    for e in edges:
        a, b = mesh.edges[e]
        pa, pb = mesh.verts[a], mesh.verts[b]
        t = mesh.edge_tris[e, 0]
        centroid = mesh.verts[mesh.tris[t]].mean(axis=0)
        mid = 0.5 * (pa + pb)
        s_out = np.sign((mid - centroid) @ space.edge_normal[e])
        pts = pa[None, :] + EDGE_GAUSS_PTS[:, None] * (pb - pa)[None, :]
        head = np.asarray(head_fn(pts))
        ell = mesh.edge_length[e]
        # linear normal-trace basis on the edge: (1 - s) at a, s at b
        w0 = ell * np.sum(EDGE_GAUSS_W * head * (1.0 - EDGE_GAUSS_PTS))
        w1 = ell * np.sum(EDGE_GAUSS_W * head * EDGE_GAUSS_PTS)
        rhs[2 * e] -= g * s_out * w0
        rhs[2 * e + 1] -= g * s_out * w1
    return rhs


def add_darcy_lag_rhs(rhs, space, dW, dk_min, u_prev, g):
    """Accumulate the lagged sample-deviation volume terms against the
    previous iterate: g (dW u_prev, v) + g dk_min (div u_prev, div v).

    dW is the deviation weight tensor at the quadrature points,
    (nt, nq, 2, 2), and dk_min the matching grad-div weight; with the
    mean-minus-sample orientation the stationary iterate solves the
    per-sample equations.
    """
    A = space.mesh.tri_area
    coeffs = u_prev[space.elem_dofs]                       # (nt, 6)
    uq = np.einsum("tqlc,tl->tqc", space.phi, coeffs)      # (nt, nq, 2)
    Wu = np.einsum("tqcd,tqd->tqc", dW, uq)
    vol = g * np.einsum("q,tqc,tqlc->tl", space.qw, Wu, space.phi) * A[:, None]
    div_prev = np.einsum("tl,tl->t", space.div, coeffs)
    vol += g * dk_min * (div_prev * A)[:, None] * space.div
    np.add.at(rhs, space.elem_dofs, vol)
    return rhs


def assemble_darcy_rhs(space, j, ctx, state, iface=None):
    """Full iteration right-hand side for sample j: volume source, Robin
    interface data, and the lagged deviation terms."""
    if j >= len(state.g_D):
        raise KeyError(f"sample {j} missing from interface state")
    sample = ctx.samples[j]
    rhs = assemble_darcy_volume_rhs(space, sample.f_D, sample.k_min, ctx.g)
    if iface is None:
        iface = DarcyInterfaceInfo(space, state.pairing)
    add_darcy_interface_rhs(rhs, iface, state.pairing, state.g_D[j])
    pts = space.qpoints.reshape(-1, 2)
    nq = len(space.qw)
    dW = (ctx.kbar_field.inv_tensor(pts) - sample.K.inv_tensor(pts)).reshape(
        space.mesh.n_tris, nq, 2, 2)
    add_darcy_lag_rhs(rhs, space, dW, ctx.kbar_min - sample.k_min,
                      state.ud_prev[j], ctx.g)
    return rhs
