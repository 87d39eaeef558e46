"""Hot loops for the grid density-matrix solver.

The right-hand side of the evolution acts on rho(x, x') stored as a
complex array with a two-cell zero frame on every side: the fourth-order
stencils then read straight through the frame instead of branching at the
edges, which is also the physically correct closure for a density that
vanishes at the box boundary.  Callers own the padded array and must
never write to the frame.

All terms are fused into one pass:

    drho = (i/2M) (d2_x - d2_x') rho
         - (i M/2) W2 (x^2 - x'^2) rho
         - gamma (x - x') (d_x - d_x') rho
         - M D (x - x')^2 rho
         + i f (x - x') (d_x + d_x') rho

A numba build is used when available; set QBM_NO_NUMBA=1 to force the
sliced numpy twin (same arithmetic, same padding contract).
"""

import os

import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not os.environ.get("QBM_NO_NUMBA")

PAD = 2


def padded_zeros(n):
    return np.zeros((n + 2 * PAD, n + 2 * PAD), dtype=np.complex128)


def grid_rhs_numpy(rho_p, out_p, x, dx, inv_2m, m_om2, gam, m_dd, ff):
    """Sliced twin of the jitted kernel; fills the interior of out_p."""
    n = x.size
    c = rho_p[2:-2, 2:-2]
    a1 = rho_p[3:-1, 2:-2]
    am1 = rho_p[1:-3, 2:-2]
    a2 = rho_p[4:, 2:-2]
    am2 = rho_p[:-4, 2:-2]
    b1 = rho_p[2:-2, 3:-1]
    bm1 = rho_p[2:-2, 1:-3]
    b2 = rho_p[2:-2, 4:]
    bm2 = rho_p[2:-2, :-4]

    inv12dx = 1.0 / (12.0 * dx)
    inv12dx2 = 1.0 / (12.0 * dx * dx)
    lap_a = (-(a2 + am2) + 16.0 * (a1 + am1) - 30.0 * c) * inv12dx2
    lap_b = (-(b2 + bm2) + 16.0 * (b1 + bm1) - 30.0 * c) * inv12dx2
    d_a = (-a2 + 8.0 * a1 - 8.0 * am1 + am2) * inv12dx
    d_b = (-b2 + 8.0 * b1 - 8.0 * bm1 + bm2) * inv12dx

    xi = x.reshape(n, 1)
    xj = x.reshape(1, n)
    diff = xi - xj
    ssum = xi * xi - xj * xj

    out_p[2:-2, 2:-2] = (
        1j * inv_2m * (lap_a - lap_b)
        - 0.5j * m_om2 * ssum * c
        - gam * diff * (d_a - d_b)
        - m_dd * diff * diff * c
        + 1j * ff * diff * (d_a + d_b)
    )


if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def grid_rhs_numba(rho_p, out_p, x, dx, inv_2m, m_om2, gam, m_dd, ff):
        n = x.size
        inv12dx = 1.0 / (12.0 * dx)
        inv12dx2 = 1.0 / (12.0 * dx * dx)
        for ip in prange(2, n + 2):
            xi = x[ip - 2]
            for jp in range(2, n + 2):
                xj = x[jp - 2]
                c = rho_p[ip, jp]
                lap_a = (-(rho_p[ip + 2, jp] + rho_p[ip - 2, jp])
                         + 16.0 * (rho_p[ip + 1, jp] + rho_p[ip - 1, jp])
                         - 30.0 * c) * inv12dx2
                lap_b = (-(rho_p[ip, jp + 2] + rho_p[ip, jp - 2])
                         + 16.0 * (rho_p[ip, jp + 1] + rho_p[ip, jp - 1])
                         - 30.0 * c) * inv12dx2
                d_a = (-rho_p[ip + 2, jp] + 8.0 * rho_p[ip + 1, jp]
                       - 8.0 * rho_p[ip - 1, jp] + rho_p[ip - 2, jp]) * inv12dx
                d_b = (-rho_p[ip, jp + 2] + 8.0 * rho_p[ip, jp + 1]
                       - 8.0 * rho_p[ip, jp - 1] + rho_p[ip, jp - 2]) * inv12dx
                diff = xi - xj
                ssum = xi * xi - xj * xj
                out_p[ip, jp] = (
                    1j * inv_2m * (lap_a - lap_b)
                    - 0.5j * m_om2 * ssum * c
                    - gam * diff * (d_a - d_b)
                    - m_dd * diff * diff * c
                    + 1j * ff * diff * (d_a + d_b)
                )

    grid_rhs = grid_rhs_numba if USE_NUMBA else grid_rhs_numpy
else:
    grid_rhs = grid_rhs_numpy
