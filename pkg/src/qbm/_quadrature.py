"""Panel quadrature shared by the bath-integral routines.

Every integral in this package reduces to one of two shapes on a finite
window: a static integral of a smooth function, or a Fourier-type integral
int f(w) exp(i w t) dw whose phase may wind thousands of times across the
window.  Both are handled by the same device: f is sampled at panel edges
and midpoints, fitted by a parabola per panel, and the parabola is
integrated against exp(i w t) in closed form.  The f-samples can then be
reused for every t, which is what makes sweeping t cheap.  At t = 0 the
rule collapses to composite Simpson.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "QuadratureError",
    "gauss_legendre_panels",
    "geometric_edges",
    "filon_nodes",
    "filon_quadratic",
    "simpson_quadratic",
    "refine_edges",
    "refine_to_tolerance",
]

# Below this phase-per-half-panel the closed-form moments lose digits to
# cancellation, so a Taylor series takes over.  Both branches are accurate
# to ~1e-12 relative at the switch point.
_THETA_SMALL = 0.05


class QuadratureError(RuntimeError):
    """Panel refinement ran out of budget above the requested tolerance."""

    def __init__(self, achieved, requested, context=""):
        self.achieved = float(achieved)
        self.requested = float(requested)
        self.context = context
        msg = (f"quadrature stalled at error {self.achieved:.3e}"
               f" (requested {self.requested:.3e})")
        if context:
            msg += f" while evaluating {context}"
        super().__init__(msg)


def gauss_legendre_panels(edges, npts):
    """Gauss-Legendre nodes and weights on every panel of an edge grid.

    Returns (x, w) flattened across panels; npts points per panel is exact
    through polynomial degree 2*npts - 1 on each.
    """
    edges = np.asarray(edges, dtype=float)
    xg, wg = np.polynomial.legendre.leggauss(npts)
    c = 0.5 * (edges[1:] + edges[:-1])
    h = 0.5 * np.diff(edges)
    x = (c[:, None] + h[:, None] * xg[None, :]).ravel()
    w = (h[:, None] * wg[None, :]).ravel()
    return x, w


def geometric_edges(a, b, n, ratio):
    """Edges of n panels on [a, b] with widths in geometric progression.

    ratio > 1 packs the narrow panels against a, ratio < 1 against b,
    ratio == 1 is uniform.
    """
    if n < 1:
        raise ValueError("need at least one panel")
    r = float(ratio)
    if r == 1.0:
        return np.linspace(a, b, n + 1)
    widths = r ** np.arange(n)
    rel = np.concatenate(([0.0], np.cumsum(widths)))
    return a + (b - a) * rel / rel[-1]


def _interleave(edges):
    edges = np.asarray(edges, dtype=float)
    out = np.empty(2 * len(edges) - 1)
    out[::2] = edges
    out[1::2] = 0.5 * (edges[1:] + edges[:-1])
    return out


def filon_nodes(edges):
    """Evaluation grid for filon_quadratic: edges interleaved with midpoints."""
    return _interleave(edges)


def refine_edges(edges):
    """Split every panel at its midpoint, doubling the panel count."""
    return _interleave(edges)


def _filon_moments(h, t):
    """Moments S_k = int_{-h}^{h} u**k exp(i u t) du for k = 0, 1, 2.

    With theta = h t:

        S0 = 2 sin(theta) / t
        S1 = 2i (sin(theta) - theta cos(theta)) / t**2
        S2 = 2 (theta**2 sin(theta) - 2 sin(theta) + 2 theta cos(theta)) / t**3

    For |theta| < 0.05 the closed forms cancel and a Taylor expansion in
    theta**2 is used instead; t = 0 gives the Simpson weights.
    """
    h = np.asarray(h, dtype=float)
    if t == 0.0:
        return 2.0 * h, np.zeros(h.shape, dtype=complex), (2.0 / 3.0) * h ** 3
    th = h * t
    s = np.sin(th)
    c = np.cos(th)
    S0 = 2.0 * s / t
    S1 = 2.0j * (s - th * c) / t ** 2
    S2 = 2.0 * (th * th * s - 2.0 * s + 2.0 * th * c) / t ** 3
    small = np.abs(th) < _THETA_SMALL
    if np.any(small):
        th2 = th[small] ** 2
        hs = h[small]
        S0[small] = 2.0 * hs * (1.0 - th2 / 6.0 + th2 ** 2 / 120.0
                                - th2 ** 3 / 5040.0 + th2 ** 4 / 362880.0)
        S1[small] = 2.0j * hs ** 2 * th[small] * (1.0 / 3.0 - th2 / 30.0 + th2 ** 2 / 840.0
                                                  - th2 ** 3 / 45360.0)
        S2[small] = 2.0 * hs ** 3 * (1.0 / 3.0 - th2 / 10.0 + th2 ** 2 / 168.0
                                     - th2 ** 3 / 6480.0)
    return S0, S1, S2


def filon_quadratic(fvals, edges, t):
    """int f(x) exp(i x t) dx from a quadratic fit of f on each panel.

    fvals must be f evaluated at filon_nodes(edges).  The rule is exact for
    panelwise-quadratic f at every t, and for smooth f the error falls off
    as h**4 uniformly in t, so one panel grid serves slow and fast phases
    alike.  Returns a complex scalar (real part only is meaningful when
    t = 0 and f is real).
    """
    fvals = np.asarray(fvals)
    edges = np.asarray(edges, dtype=float)
    if fvals.shape != (2 * len(edges) - 1,):
        raise ValueError(f"expected {2 * len(edges) - 1} samples at "
                         f"filon_nodes(edges), got shape {fvals.shape}")
    t = float(t)
    c = 0.5 * (edges[1:] + edges[:-1])
    h = 0.5 * np.diff(edges)
    f0 = fvals[:-2:2]
    f1 = fvals[1::2]
    f2 = fvals[2::2]
    d1 = (f2 - f0) / (2.0 * h)
    d2 = (f0 - 2.0 * f1 + f2) / (2.0 * h * h)
    S0, S1, S2 = _filon_moments(h, t)
    panels = f1 * S0 + d1 * S1 + d2 * S2
    if t == 0.0:
        return complex(np.sum(panels))
    return complex(np.sum(np.exp(1j * t * c) * panels))


def simpson_quadratic(fvals, edges):
    """int f(x) dx reusing the filon_quadratic fit (its t = 0 limit)."""
    return filon_quadratic(fvals, edges, 0.0).real


def refine_to_tolerance(evaluate, edges, rtol=1e-9, atol=0.0,
                        max_doublings=12, context=""):
    """Halve every panel until the estimate stops moving.

    evaluate(edges) may return a scalar or an ndarray of simultaneous
    estimates built on the same panel grid.  The change produced by one
    doubling (sup norm) is the error estimate; it is only trusted against
    tol = atol + rtol * max|value| once it is also decaying (below half
    the previous change), which guards against coincidentally small
    changes on a pre-asymptotic grid.  Changes below 0.01 * tol are
    accepted outright (roundoff floor).  Raises QuadratureError when
    max_doublings is exhausted.
    """
    edges = np.asarray(edges, dtype=float)
    prev = np.asarray(evaluate(edges))
    err = np.inf
    tol = atol
    prev_err = None
    for _ in range(max_doublings):
        edges = refine_edges(edges)
        cur = np.asarray(evaluate(edges))
        err = float(np.max(np.abs(cur - prev)))
        tol = atol + rtol * float(np.max(np.abs(cur)))
        decaying = prev_err is not None and err <= 0.5 * prev_err
        if err <= 0.01 * tol or (err <= tol and decaying):
            return cur, err
        prev = cur
        prev_err = err
    raise QuadratureError(err, tol, context)
