"""MINI-element (P1+bubble velocity, P1 pressure) assembly of the Robin
free-flow subproblem.

The subdomain matrix couples velocity, pressure, and (optionally) a scalar
multiplier that pins the pressure mean; it depends only on the viscosity,
the Robin weight delta_S, and the ensemble-mean slip coefficient, so it is
identical for every sample and iteration.  Per-sample data (forcing, Robin
traces, lagged slip term, Dirichlet values) enters through the right-hand
side only.

Internally the assembled saddle system stores the negative of the pressure
so that the matrix is symmetric with an un-negated continuity block; the
solve helpers flip the sign back.
"""

import time

import numpy as np
import scipy.sparse as sp

from . import quadrature
from .sparsela import SparseMatrix, factorize


def edge_mass(length):
    """Exact P1 x P1 mass matrix on an edge of given length."""
    return (length / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])


class StokesSpace:
    """Dof bookkeeping and precomputed element data for the MINI pair.

    Velocity dofs: per component, nodal values then one interior bubble per
    triangle (the cubic bubble vanishes on all edges, so bubbles never enter
    boundary or interface integrals).  Pressure dofs: nodal P1.  A trailing
    multiplier dof enforces zero pressure mean when requested.
    """

    def __init__(self, mesh, dirichlet_tags=None, pressure_multiplier=True):
        self.mesh = mesh
        nv, nt = mesh.n_verts, mesh.n_tris
        self.n_comp = nv + nt                     # dofs per velocity component
        self.n_velocity = 2 * self.n_comp
        self.n_pressure = nv
        self.pressure_multiplier = bool(pressure_multiplier)
        self.n_dofs = self.n_velocity + self.n_pressure + (1 if pressure_multiplier else 0)

        present = set(mesh.boundary_tags) - {""}
        if dirichlet_tags is None:
            dirichlet_tags = present - {"INTERFACE"}
        self.dirichlet_tags = frozenset(dirichlet_tags)

        dir_nodes = set()
        for tag in self.dirichlet_tags:
            for e in mesh.boundary_edges(tag):
                dir_nodes.update(mesh.edges[e])
        self.dirichlet_nodes = np.array(sorted(dir_nodes), dtype=np.int64)

        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.dirichlet_nodes] = True
        mask[self.n_comp + self.dirichlet_nodes] = True
        self.dirichlet_mask = mask
        self.free = np.where(~mask)[0]
        self.fixed = np.where(mask)[0]

        iface_nodes = set()
        for e in mesh.boundary_edges("INTERFACE"):
            iface_nodes.update(mesh.edges[e])
        self.interface_nodes = np.array(sorted(iface_nodes), dtype=np.int64)
        self.interface_dofs = np.concatenate([self.interface_nodes,
                                              self.n_comp + self.interface_nodes])

        self._precompute()
        self.component_mass = self._component_mass()

    # dof helpers --------------------------------------------------------

    def vel_dof(self, comp, node):
        return comp * self.n_comp + node

    def bubble_dof(self, comp, tri):
        return comp * self.n_comp + self.mesh.n_verts + tri

    @property
    def pressure_slice(self):
        return slice(self.n_velocity, self.n_velocity + self.n_pressure)

    def _precompute(self):
        mesh = self.mesh
        nt = mesh.n_tris
        bary, w = quadrature.triangle_rule(4)
        nq = len(w)
        self.qw = w
        self.qpoints = quadrature.physical_points(mesh.verts, mesh.tris, bary)

        # basis values: [l0, l1, l2, 27 l0 l1 l2], constant across triangles
        N = np.empty((nq, 4))
        N[:, :3] = bary
        N[:, 3] = 27.0 * bary[:, 0] * bary[:, 1] * bary[:, 2]
        self.N = N

        # basis gradients per triangle and quad point
        g = mesh.tri_grads                                    # (nt, 3, 2)
        dN = np.empty((nt, nq, 4, 2))
        dN[:, :, :3, :] = g[:, None, :, :]
        l = bary                                              # (nq, 3)
        bub = (l[None, :, 1] * l[None, :, 2])[:, :, None] * g[:, None, 0, :] \
            + (l[None, :, 0] * l[None, :, 2])[:, :, None] * g[:, None, 1, :] \
            + (l[None, :, 0] * l[None, :, 1])[:, :, None] * g[:, None, 2, :]
        dN[:, :, 3, :] = 27.0 * bub
        self.dN = dN

        vd = np.empty((nt, 8), dtype=np.int64)
        vd[:, :3] = mesh.tris
        vd[:, 3] = mesh.n_verts + np.arange(nt)
        vd[:, 4:7] = self.n_comp + mesh.tris
        vd[:, 7] = self.n_comp + mesh.n_verts + np.arange(nt)
        self.vel_elem_dofs = vd
        self.p_elem_dofs = self.n_velocity + mesh.tris

    def _component_mass(self):
        """Single-component L2 mass over nodal+bubble dofs (nvt x nvt)."""
        mesh = self.mesh
        A = mesh.tri_area
        Mloc = np.einsum("q,qi,qj->ij", self.qw, self.N, self.N)   # reference
        Mel = Mloc[None, :, :] * A[:, None, None]
        dofs = np.empty((mesh.n_tris, 4), dtype=np.int64)
        dofs[:, :3] = mesh.tris
        dofs[:, 3] = mesh.n_verts + np.arange(mesh.n_tris)
        rows = np.repeat(dofs, 4, axis=1).ravel()
        cols = np.tile(dofs, (1, 4)).ravel()
        return sp.csr_matrix((Mel.ravel(), (rows, cols)), shape=(self.n_comp, self.n_comp))

    def velocity_l2(self, vec):
        """L2 norm of the velocity part of a full dof vector."""
        ux = vec[:self.n_comp]
        uy = vec[self.n_comp:self.n_velocity]
        return float(np.sqrt(ux @ (self.component_mass @ ux) + uy @ (self.component_mass @ uy)))


def build_stokes_space(mesh, dirichlet_tags=None, pressure_multiplier=True):
    """Construct the MINI space on a tagged mesh.

    By default every tagged side except the interface carries (strongly
    imposed) Dirichlet velocity data; pass `dirichlet_tags` to leave e.g. an
    outflow side natural.
    """
    return StokesSpace(mesh, dirichlet_tags=dirichlet_tags, pressure_multiplier=pressure_multiplier)


class StokesOperator:
    """Assembled, reduced, and factorized free-flow subdomain matrix."""

    def __init__(self, space, matrix, delta_s, xi_bar, nu):
        self.space = space
        self.matrix = matrix
        self.delta_s = delta_s
        self.xi_bar = xi_bar
        self.nu = nu
        free, fixed = space.free, space.fixed
        csr = matrix.csr
        self.A_ff = csr[free][:, free].tocsc()
        self.A_fd = csr[free][:, fixed].tocsr()
        t0 = time.perf_counter()
        self.factorization = factorize(SparseMatrix(self.A_ff))
        self.factor_seconds = time.perf_counter() - t0

    def lift(self, dirichlet_values):
        """Free-dof RHS correction for inhomogeneous Dirichlet data
        (full-length vector; only fixed entries are read)."""
        return self.A_fd @ dirichlet_values[self.space.fixed]

    def reduce_rhs(self, rhs_full, lift_vec=None):
        b = rhs_full[self.space.free]
        if lift_vec is not None:
            b = b - lift_vec
        return b

    def expand(self, x_free, dirichlet_values=None):
        """Scatter a reduced solution to a full dof vector (pressure sign
        restored to the physical convention)."""
        full = np.zeros(self.space.n_dofs)
        if dirichlet_values is not None:
            full[self.space.fixed] = dirichlet_values[self.space.fixed]
        full[self.space.free] = x_free
        full[self.space.pressure_slice] *= -1.0
        return full

    def split(self, full):
        s = self.space
        return (full[:s.n_velocity], full[s.pressure_slice],
                full[-1] if s.pressure_multiplier else 0.0)


def deformation_element_matrices(space, nu):
    """Element matrices of 2 nu (D(u), D(v)) over the 8 local velocity dofs."""
    A = space.mesh.tri_area
    w, dN = space.qw, space.dN
    # P[t, i, j, a, b] = int d_a phi_i d_b phi_j
    P = np.einsum("q,tqia,tqjb->tijab", w, dN, dN) * A[:, None, None, None, None]
    K = np.empty((space.mesh.n_tris, 8, 8))
    trace = P[..., 0, 0] + P[..., 1, 1]
    for c in range(2):
        for d in range(2):
            blk = nu * P[:, :, :, d, c]
            if c == d:
                blk = blk + nu * trace
            K[:, 4 * c:4 * c + 4, 4 * d:4 * d + 4] = blk
    return K


def div_element_matrices(space):
    """Element matrices of (q, div v): shape (nt, 3 pressure, 8 velocity)."""
    A = space.mesh.tri_area
    Np = space.N[:, :3]
    Bloc = np.einsum("q,qi,tqjc->tijc", space.qw, Np, space.dN) * A[:, None, None, None]
    return np.concatenate([Bloc[:, :, :, 0], Bloc[:, :, :, 1]], axis=2)


def assemble_stokes_operator(space, nu, delta_s, xi_bar, pairing):
    """Assemble and factorize the Robin free-flow matrix.

    Matrix = viscous deformation block + delta_s <u.n, v.n>_Gamma
    + xi_bar <u.tau, v.tau>_Gamma, with the discrete divergence coupling and
    the optional pressure-mean multiplier.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    if xi_bar < 0:
        raise ValueError("xi_bar must be nonnegative")

    mesh = space.mesh
    A = mesh.tri_area
    K = deformation_element_matrices(space, nu)

    builder = SparseMatrix.builder(space.n_dofs, space.n_dofs)
    vd = space.vel_elem_dofs
    rows = np.repeat(vd, 8, axis=1).ravel()
    cols = np.tile(vd, (1, 8)).ravel()
    builder.add(rows, cols, K.ravel())

    Bflat = div_element_matrices(space)  # (nt, 3, 8)
    pd = space.p_elem_dofs
    rows = np.repeat(pd, 8, axis=1).ravel()
    cols = np.tile(vd, (1, 3)).ravel()
    builder.add(rows, cols, Bflat.ravel())
    builder.add(cols, rows, Bflat.ravel())

    # interface Robin and tangential-slip terms (P1 traces only)
    n, tau = pairing.n_s, pairing.tau
    for p in range(pairing.n_pairs):
        Me = edge_mass(pairing.lengths[p])
        nodes = pairing.nodes_s[p]
        for c in range(2):
            for d in range(2):
                coef = delta_s * n[c] * n[d] + xi_bar * tau[c] * tau[d]
                if coef == 0.0:
                    continue
                r = np.repeat([space.vel_dof(c, nodes[0]), space.vel_dof(c, nodes[1])], 2)
                s = np.tile([space.vel_dof(d, nodes[0]), space.vel_dof(d, nodes[1])], 2)
                builder.add(r, s, coef * Me.ravel())

    if space.pressure_multiplier:
        mdof = space.n_dofs - 1
        mvals = np.repeat(A / 3.0, 3)
        prow = space.p_elem_dofs.ravel()
        builder.add(prow, np.full_like(prow, mdof), mvals)
        builder.add(np.full_like(prow, mdof), prow, mvals)

    matrix = builder.finalize()
    return StokesOperator(space, matrix, delta_s, xi_bar, nu)


def assemble_stokes_volume_rhs(space, f_S):
    """(f_S, v) over all momentum rows; f_S maps (n, 2) points -> (n, 2)."""
    mesh = space.mesh
    pts = space.qpoints.reshape(-1, 2)
    fvals = np.asarray(f_S(pts)).reshape(mesh.n_tris, len(space.qw), 2)
    contrib = np.einsum("q,tqc,qi->tic", space.qw, fvals, space.N) * mesh.tri_area[:, None, None]
    rhs = np.zeros(space.n_dofs)
    np.add.at(rhs, space.vel_elem_dofs[:, :4], contrib[:, :, 0])
    np.add.at(rhs, space.vel_elem_dofs[:, 4:], contrib[:, :, 1])
    return rhs


def add_interface_rhs(rhs, space, pairing, g_n=None, g_tau=None):
    """Accumulate -<g_n, v.n_S> - <g_tau, v.tau> for per-pair linear traces
    given by endpoint values (n_pairs, 2)."""
    n, tau = pairing.n_s, pairing.tau
    for p in range(pairing.n_pairs):
        Me = edge_mass(pairing.lengths[p])
        nodes = pairing.nodes_s[p]
        for c in range(2):
            dofs = (space.vel_dof(c, nodes[0]), space.vel_dof(c, nodes[1]))
            if g_n is not None and n[c] != 0.0:
                v = Me @ g_n[p]
                rhs[dofs[0]] -= n[c] * v[0]
                rhs[dofs[1]] -= n[c] * v[1]
            if g_tau is not None and tau[c] != 0.0:
                v = Me @ g_tau[p]
                rhs[dofs[0]] -= tau[c] * v[0]
                rhs[dofs[1]] -= tau[c] * v[1]
    return rhs


def assemble_stokes_rhs(space, j, ctx, state):
    """Full iteration right-hand side for sample j.

    Volume forcing plus interface terms: -<g_S, v.n> - <g_S_tau, v.tau>
    + (xi_bar - xi_j) <u_S^{prev}.tau, v.tau>.  Bubble rows receive only the
    volume contribution.
    """
    if j >= len(state.g_S):
        raise KeyError(f"sample {j} missing from interface state")
    sample = ctx.samples[j]
    rhs = assemble_stokes_volume_rhs(space, sample.f_S)
    lag = (ctx.xi_bar - sample.xi) * state.us_tau[j]
    add_interface_rhs(rhs, space, state.pairing,
                      g_n=state.g_S[j], g_tau=state.g_S_tau[j] - lag)
    return rhs
