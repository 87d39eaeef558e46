"""Oracle tests for the shared panel-quadrature kernels.

Expected values come from closed forms or from brute-force
scipy.integrate.quad (with weight='cos'/'sin' for the oscillatory cases),
never from the code under test.
"""

import numpy as np
import pytest
from scipy.integrate import quad

from qbm._quadrature import (
    QuadratureError,
    filon_nodes,
    filon_quadratic,
    gauss_legendre_panels,
    geometric_edges,
    refine_edges,
    refine_to_tolerance,
    simpson_quadratic,
)


def filon(f, edges, t):
    return filon_quadratic(f(filon_nodes(edges)), edges, t)


def quad_oscillatory(f, a, b, t):
    """Reference int_a^b f(x) exp(i x t) dx via scipy's weighted quad."""
    re, _ = quad(f, a, b, weight="cos", wvar=t, limit=400)
    im, _ = quad(f, a, b, weight="sin", wvar=t, limit=400)
    return re + 1j * im


class TestFilonQuadratic:
    def test_constant_integrand_matches_closed_form(self):
        # int_0^1 exp(i w t) dw = (exp(it) - 1) / (it); a constant is fitted
        # exactly, so only roundoff remains.
        t = 3.7
        edges = np.linspace(0.0, 1.0, 9)
        got = filon(lambda w: np.ones_like(w), edges, t)
        want = (np.exp(1j * t) - 1.0) / (1j * t)
        assert got == pytest.approx(want, abs=1e-14)

    def test_quadratic_integrand_is_exact(self):
        t = 1.3
        edges = np.linspace(0.0, 2.0, 5)
        got = filon(lambda w: w ** 2, edges, t)
        want = quad_oscillatory(lambda w: w * w, 0.0, 2.0, t)
        assert got == pytest.approx(want, abs=1e-12)

    def test_gaussian_slow_phase(self):
        t = 2.0
        edges = np.linspace(0.0, 6.0, 257)
        got = filon(lambda w: np.exp(-w * w), edges, t)
        want = quad_oscillatory(lambda w: np.exp(-w * w), 0.0, 6.0, t)
        assert got == pytest.approx(want, rel=1e-7)

    def test_gaussian_fast_phase_same_grid(self):
        # The selling point: h**4 accuracy uniform in t, so the grid that
        # resolves f (not the phase) is enough even at 40 rad per unit.
        t = 40.0
        edges = np.linspace(0.0, 8.0, 257)
        got = filon(lambda w: np.exp(-w * w / 4.0), edges, t)
        want = quad_oscillatory(lambda w: np.exp(-w * w / 4.0), 0.0, 8.0, t)
        assert got == pytest.approx(want, rel=1e-6, abs=1e-12)

    def test_negative_t_conjugates_real_integrand(self):
        edges = np.linspace(0.0, 5.0, 33)
        f = lambda w: np.exp(-w)
        assert filon(f, edges, -2.5) == pytest.approx(np.conj(filon(f, edges, 2.5)), rel=1e-14)

    def test_moment_branches_agree_across_switch(self):
        # The moments swap from closed form to series at theta = h*t = 0.05;
        # check both sides of the seam against brute-force quad.
        from qbm._quadrature import _filon_moments
        h = 0.5
        for t in (0.0999, 0.1001):  # theta = 0.04995 / 0.05005
            S0, S1, S2 = (m[0] for m in _filon_moments(np.array([h]), t))
            for k, got in enumerate((S0, S1, S2)):
                re, _ = quad(lambda u: u ** k * np.cos(u * t), -h, h)
                im, _ = quad(lambda u: u ** k * np.sin(u * t), -h, h)
                assert complex(got) == pytest.approx(re + 1j * im, abs=1e-13)

    def test_zero_t_reduces_to_simpson(self):
        edges = np.linspace(0.0, 1.0, 33)
        fvals = np.exp(-filon_nodes(edges))
        got = simpson_quadratic(fvals, edges)
        assert got == pytest.approx(1.0 - np.exp(-1.0), rel=1e-9)

    def test_sample_count_mismatch_raises(self):
        edges = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError, match="samples"):
            filon_quadratic(np.ones(7), edges, 1.0)


class TestGaussLegendre:
    def test_exact_for_matching_degree(self):
        # npts = 4 integrates degree 7 exactly on one panel.
        x, w = gauss_legendre_panels([0.0, 2.0], 4)
        assert np.sum(w * x ** 7) == pytest.approx(2.0 ** 8 / 8.0, rel=1e-14)

    def test_gaussian_tail_window(self):
        from scipy.special import erf
        x, w = gauss_legendre_panels(np.linspace(0.0, 3.0, 7), 12)
        got = np.sum(w * np.exp(-x * x))
        assert got == pytest.approx(0.5 * np.sqrt(np.pi) * erf(3.0), rel=1e-13)

    def test_weights_sum_to_length(self):
        edges = geometric_edges(1.0, 9.0, 6, 1.3)
        _, w = gauss_legendre_panels(edges, 5)
        assert np.sum(w) == pytest.approx(8.0, rel=1e-14)


class TestEdgeHelpers:
    def test_geometric_edges_span_and_ratio(self):
        edges = geometric_edges(2.0, 10.0, 8, 1.5)
        widths = np.diff(edges)
        assert edges[0] == 2.0 and edges[-1] == pytest.approx(10.0)
        assert np.allclose(widths[1:] / widths[:-1], 1.5)

    def test_geometric_edges_uniform_limit(self):
        assert np.allclose(geometric_edges(0.0, 1.0, 4, 1.0), np.linspace(0.0, 1.0, 5))

    def test_refine_edges_preserves_old_points(self):
        edges = geometric_edges(0.0, 1.0, 3, 2.0)
        fine = refine_edges(edges)
        assert len(fine) == 2 * len(edges) - 1
        assert np.allclose(fine[::2], edges)


class TestRefineToTolerance:
    def test_converges_to_arctan(self):
        f = lambda x: 1.0 / (1.0 + x * x)
        evaluate = lambda e: simpson_quadratic(f(filon_nodes(e)), e)
        val, err = refine_to_tolerance(evaluate, np.linspace(0.0, 10.0, 5), rtol=1e-10)
        assert val == pytest.approx(np.arctan(10.0), rel=1e-9)
        assert err <= 1e-10 * abs(val)

    def test_vector_estimates_refine_together(self):
        def evaluate(e):
            x = filon_nodes(e)
            return np.array([
                simpson_quadratic(np.exp(-x), e),
                simpson_quadratic(np.sin(x) ** 2, e),
            ])
        val, _ = refine_to_tolerance(evaluate, np.linspace(0.0, np.pi, 5), rtol=1e-10)
        assert val[0] == pytest.approx(1.0 - np.exp(-np.pi), rel=1e-9)
        assert val[1] == pytest.approx(np.pi / 2.0, rel=1e-9)

    def test_exhausted_budget_raises_with_record(self):
        rng = np.random.default_rng(7)
        noisy = lambda e: float(rng.standard_normal())
        with pytest.raises(QuadratureError) as exc:
            refine_to_tolerance(noisy, np.linspace(0.0, 1.0, 3),
                                rtol=1e-15, max_doublings=3, context="noise test")
        assert exc.value.achieved > exc.value.requested
        assert "noise test" in str(exc.value)
