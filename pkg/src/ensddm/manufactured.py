"""Closed-form benchmark solution on the stacked rectangles
[0, pi] x [0, 1] (free flow) over [0, pi] x [-1, 0] (porous medium),
interface at y = 0, and the forcing that manufactures it.

With k11 = k22 the pair is incompressible and satisfies all three interface
conditions; the divergence residual scales with k22 - k11.
"""

import numpy as np


def _split(points):
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return pts[:, 0], pts[:, 1]


class ManufacturedSolution:
    """Evaluators for the exact fields, their derivatives, forcing terms,
    and interface Robin data for one diagonal conductivity sample."""

    def __init__(self, k11, k22, nu=1.0, g=1.0):
        self.k11 = float(k11)
        self.k22 = float(k22)
        self.nu = float(nu)
        self.g = float(g)

    # free-flow fields -------------------------------------------------

    def u_S(self, points):
        x, y = _split(points)
        ux = (self.k11 / np.pi) * np.sin(2 * np.pi * y) * np.cos(x)
        uy = (-2 * self.k22 + (self.k22 / np.pi**2) * np.sin(np.pi * y) ** 2) * np.sin(x)
        return np.column_stack([ux, uy])

    def grad_u_S(self, points):
        """Row i of the result is grad of component i: out[:, i, j] = d u_i / d x_j."""
        x, y = _split(points)
        c1 = self.k11 / np.pi
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = -c1 * np.sin(2 * np.pi * y) * np.sin(x)
        out[:, 0, 1] = 2 * np.pi * c1 * np.cos(2 * np.pi * y) * np.cos(x)
        out[:, 1, 0] = (-2 * self.k22 + (self.k22 / np.pi**2) * np.sin(np.pi * y) ** 2) * np.cos(x)
        out[:, 1, 1] = (self.k22 / np.pi) * np.sin(2 * np.pi * y) * np.sin(x)
        return out

    def p_S(self, points):
        x, _ = _split(points)
        return np.zeros_like(x)

    def f_S(self, points):
        """Forcing -div T(u_S, p_S), derived symbolically from the fields."""
        x, y = _split(points)
        k11, k22, nu = self.k11, self.k22, self.nu
        fx = (nu / np.pi) * np.sin(2 * np.pi * y) * np.cos(x) * ((2 + 4 * np.pi**2) * k11 - k22)
        fy = -nu * np.sin(x) * (2 * k22 - (k22 / np.pi**2) * np.sin(np.pi * y) ** 2
                                + (4 * k22 - 2 * k11) * np.cos(2 * np.pi * y))
        return np.column_stack([fx, fy])

    # porous-medium fields ----------------------------------------------

    def phi_D(self, points):
        x, y = _split(points)
        return (np.exp(y) - np.exp(-y)) * np.sin(x)

    def grad_phi_D(self, points):
        x, y = _split(points)
        gx = (np.exp(y) - np.exp(-y)) * np.cos(x)
        gy = (np.exp(y) + np.exp(-y)) * np.sin(x)
        return np.column_stack([gx, gy])

    def u_D(self, points):
        grad = self.grad_phi_D(points)
        return np.column_stack([-self.k11 * grad[:, 0], -self.k22 * grad[:, 1]])

    def div_u_D(self, points):
        x, y = _split(points)
        return (self.k11 - self.k22) * (np.exp(y) - np.exp(-y)) * np.sin(x)

    def f_D(self, points):
        return self.div_u_D(points)

    # interface data at y = 0 (Stokes above, n_S = (0, -1)) -------------

    def us_n_interface(self, x):
        """u_S . n_S along the interface."""
        x = np.asarray(x, dtype=np.float64)
        return 2 * self.k22 * np.sin(x)

    def ud_n_interface(self, x):
        """u_D . n_D along the interface."""
        x = np.asarray(x, dtype=np.float64)
        return -2 * self.k22 * np.sin(x)

    def normal_stress_interface(self, x):
        """-n_S . T(u_S, p_S) . n_S at y = 0 (vanishes for these fields)."""
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def shear_stress_interface(self, x):
        """tau . T(u_S, p_S) . n_S at y = 0."""
        x = np.asarray(x, dtype=np.float64)
        return -2 * self.nu * (self.k11 - self.k22) * np.cos(x)

    def g_S_interface(self, x, delta_s):
        """Robin trace -n.T.n - delta_s u_S.n_S."""
        return self.normal_stress_interface(x) - delta_s * self.us_n_interface(x)

    def g_D_interface(self, x, delta_d, z=0.0):
        """Robin trace g (phi - z) ... gz handled by caller; returns
        g*phi - delta_d u_D.n_D at y = 0."""
        x = np.asarray(x, dtype=np.float64)
        return self.g * self.phi_D(np.column_stack([x, np.zeros_like(x)])) \
            - delta_d * self.ud_n_interface(x)

    def g_S_tau_interface(self, x, xi):
        """Robin trace -tau.T.n - xi u_S.tau at y = 0."""
        x = np.asarray(x, dtype=np.float64)
        # u_S.tau vanishes on y = 0 for these fields
        return -self.shear_stress_interface(x)


def exact_solution(k11, k22, point):
    """Exact (u_S, p_S, u_D, phi_D) at one point; the caller knows which
    subdomain the point belongs to and which fields are meaningful there."""
    ms = ManufacturedSolution(k11, k22)
    pt = np.asarray(point, dtype=np.float64).reshape(1, 2)
    return (ms.u_S(pt)[0], float(ms.p_S(pt)[0]), ms.u_D(pt)[0], float(ms.phi_D(pt)[0]))


def manufactured_forcing(k11, k22, nu, point):
    """Forcing pair (f_S, f_D) at one point."""
    ms = ManufacturedSolution(k11, k22, nu=nu)
    pt = np.asarray(point, dtype=np.float64).reshape(1, 2)
    return ms.f_S(pt)[0], float(ms.f_D(pt)[0])
