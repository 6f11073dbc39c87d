"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are given in barycentric coordinates with weights summing to
one; multiply by the physical triangle area.  Edge rules are Gauss-Legendre
on [0, 1] with weights summing to one; multiply by the edge length.
"""

import numpy as np

# degree-2 rule (3 interior points)
_TRI_D2_PTS = np.array([
    [2 / 3, 1 / 6, 1 / 6],
    [1 / 6, 2 / 3, 1 / 6],
    [1 / 6, 1 / 6, 2 / 3],
])
_TRI_D2_W = np.full(3, 1 / 3)

# degree-4 Dunavant rule (6 points, two 3-orbits)
_a1, _w1 = 0.445948490915965, 0.223381589678011
_a2, _w2 = 0.091576213509771, 0.109951743655322
_TRI_D4_PTS = np.array([
    [1 - 2 * _a1, _a1, _a1], [_a1, 1 - 2 * _a1, _a1], [_a1, _a1, 1 - 2 * _a1],
    [1 - 2 * _a2, _a2, _a2], [_a2, 1 - 2 * _a2, _a2], [_a2, _a2, 1 - 2 * _a2],
])
_TRI_D4_W = np.array([_w1, _w1, _w1, _w2, _w2, _w2])

# degree-6 Dunavant rule (12 points: two 3-orbits and one 6-orbit)
_b1, _v1 = 0.249286745170910, 0.116786275726379
_b2, _v2 = 0.063089014491502, 0.050844906370207
_c1, _c2, _v3 = 0.310352451033785, 0.053145049844816, 0.082851075618374
_TRI_D6_PTS = np.array([
    [1 - 2 * _b1, _b1, _b1], [_b1, 1 - 2 * _b1, _b1], [_b1, _b1, 1 - 2 * _b1],
    [1 - 2 * _b2, _b2, _b2], [_b2, 1 - 2 * _b2, _b2], [_b2, _b2, 1 - 2 * _b2],
    [_c1, _c2, 1 - _c1 - _c2], [_c2, _c1, 1 - _c1 - _c2],
    [_c1, 1 - _c1 - _c2, _c2], [_c2, 1 - _c1 - _c2, _c1],
    [1 - _c1 - _c2, _c1, _c2], [1 - _c1 - _c2, _c2, _c1],
])
_TRI_D6_W = np.array([_v1] * 3 + [_v2] * 3 + [_v3] * 6)

_TRI_RULES = {2: (_TRI_D2_PTS, _TRI_D2_W), 4: (_TRI_D4_PTS, _TRI_D4_W), 6: (_TRI_D6_PTS, _TRI_D6_W)}

# 3-point Gauss on [0, 1], exact through degree 5
_s = np.sqrt(0.6)
EDGE_GAUSS_PTS = np.array([(1 - _s) / 2, 0.5, (1 + _s) / 2])
EDGE_GAUSS_W = np.array([5 / 18, 8 / 18, 5 / 18])


def triangle_rule(degree):
    """Return (barycentric points (q,3), weights (q,)) exact to `degree`."""
    for d in sorted(_TRI_RULES):
        if d >= degree:
            return _TRI_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


def physical_points(verts, tris, bary):
    """Map barycentric points to physical coordinates, all triangles at once.

    Returns array of shape (n_tris, n_qp, 2).
    """
    corners = verts[tris]  # (nt, 3, 2)
    return np.einsum("qk,tkd->tqd", bary, corners)
