"""Time-dependent master-equation coefficients from the bath kernels.

The four coefficients are second-order perturbative integrals of the
kernels against the system's oscillation,

    dOmega2(t) = -(2/M)      int_0^t ds cos(Om s) eta(s)
    gamma(t)   =  (1/(M Om)) int_0^t ds sin(Om s) eta(s)
    D(t)       =  (1/M)      int_0^t ds cos(Om s) nu(s)
    f(t)       =  (1/(M Om)) int_0^t ds sin(Om s) nu(s)

with Om the bare (default) or renormalized frequency.  The signs are
locked by three anchors: the high-temperature ohmic pair must reproduce
the energy-growth law dE/dt = 2 gamma0 kT - 2 gamma <p^2>/M, the
supraohmic zero-temperature f must settle below zero, and the resulting
exponent 4 L0^2 int D - 2 int f must attenuate interference fringes for
an ohmic high-temperature bath.

Numerically each coefficient is a double integral; integrating over s
first in closed form turns it into a single frequency integral

    C(t) = int_0^inf dw g(w) S(w, t),       g in {I, I*th},

where S is a combination of (1 - cos(a t))/a and sin(b t)/b with
a = w + Om, b = w - Om.  S is smooth through the resonance w = Om but
oscillates on the scale 1/t, so the window is split per output time:
full-kernel panels around the origin and the resonance (width ~ 2/t),
and everywhere else the static 1/a, 1/b parts are integrated directly
while the oscillatory parts become Fourier integrals of smooth
amplitudes, handled by the Filon rule.  Grids are deterministic for a
given refinement level; the series is verified by recomputing a probe
subset one level finer and refined wholesale if the probes move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from scipy.special import sici

from ._quadrature import (
    QuadratureError,
    filon_nodes,
    filon_quadratic,
    gauss_legendre_panels,
    refine_edges,
)
from .spectral import EnvironmentSpec, Finite, HighT, spectral_density

__all__ = [
    "OscillatorSpec",
    "CoefficientSeries",
    "UnsupportedRegimeError",
    "compute_coefficients",
    "hight_constants",
    "interpolate",
    "write_coefficient_csv",
]

_GL_PTS = 12
_DEFAULT_RTOL = 1e-5
_RAISE_RTOL = 1e-3  # tables worse than this would corrupt the physics
_TAIL_EPS = 1e-12  # sets the Gaussian-tail cut w_max = L * max(6, sqrt(ln 1/eps))


class UnsupportedRegimeError(ValueError):
    """A fast-path formula was requested outside its regime of validity."""


@dataclass(frozen=True)
class OscillatorSpec:
    """System oscillator: mass M and bare frequency Omega (units anchor)."""

    mass: float = 1.0
    omega_bare: float = 1.0

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if self.omega_bare <= 0.0:
            raise ValueError(f"omega_bare must be > 0, got {self.omega_bare}")


@dataclass
class CoefficientSeries:
    """Tabulated coefficients on a shared time grid.

    Treat instances as immutable once returned; evolution code
    interpolates from the arrays and never mutates them.  omega_eff is
    the frequency actually used inside the integrals; saturation_warning
    flags a grid reaching past the weak-coupling validity window
    t_sat ~ 1/gamma0; quadrature_error is the relative probe-level error
    estimate from the verification pass.
    """

    times: np.ndarray
    delta_omega_sq: np.ndarray
    gamma: np.ndarray
    d_normal: np.ndarray
    f_anomalous: np.ndarray
    env: EnvironmentSpec
    sys: OscillatorSpec
    omega_eff: float
    frequency_mode: str = "bare"
    saturation_warning: bool = False
    quadrature_error: float = 0.0
    _interpolants: dict = field(default_factory=dict, repr=False)

    def channels(self):
        return {
            "delta_omega_sq": self.delta_omega_sq,
            "gamma": self.gamma,
            "d_normal": self.d_normal,
            "f_anomalous": self.f_anomalous,
        }


# ---------------------------------------------------------------------------
# closed s-integrals
#
# With a = w + Om, b = w - Om and 1 - cos x = 2 sin^2(x/2):
#   S_cs = int cos(Om s) sin(w s) = [ (1-cos at)/a + (1-cos bt)/b ] / 2
#   S_ss = int sin(Om s) sin(w s) = [ sin(bt)/b - sin(at)/a ] / 2
#   S_cc = int cos(Om s) cos(w s) = [ sin(at)/a + sin(bt)/b ] / 2
#   S_sc = int sin(Om s) cos(w s) = [ (1-cos at)/a - (1-cos bt)/b ] / 2
# All four are regular at b = 0; the forms below stay accurate there.

def _s_kernels(w, t, om):
    a = w + om
    b = w - om
    b_safe = np.where(b == 0.0, 1.0, b)
    cosm_a = 2.0 * np.sin(0.5 * a * t) ** 2 / a
    cosm_b = np.where(b == 0.0, 0.0, 2.0 * np.sin(0.5 * b_safe * t) ** 2 / b_safe)
    sinc_a = np.sin(a * t) / a
    sinc_b = np.where(b == 0.0, t, np.sin(b_safe * t) / b_safe)
    s_cs = 0.5 * (cosm_a + cosm_b)
    s_ss = 0.5 * (sinc_b - sinc_a)
    s_cc = 0.5 * (sinc_a + sinc_b)
    s_sc = 0.5 * (cosm_a - cosm_b)
    return s_cs, s_ss, s_cc, s_sc


# ---------------------------------------------------------------------------
# window geometry

def _omega_max(env):
    return env.cutoff * max(6.0, math.sqrt(math.log(1.0 / _TAIL_EPS)))


def _graded_edges(a, b, h_a, h_b, growth=1.4, cap=None):
    """Edges on [a, b] with end panels ~h_a, ~h_b growing inward.

    The log-like growth keeps every panel width below ~half its distance
    to the nearer end, which resolves power-law amplitudes (1/b poles
    just outside the window, w**(n-1) shapes, coth knees) at all scales.
    Panels that reach the cap take widths cap * (0.85 + 0.3 frac(k phi))
    with phi the golden ratio: a uniform stretch would phase-lock the
    Filon fit error across panels whenever t * cap is near a multiple of
    2 pi, and the locked sum survives both refinement (halving lands on
    the next multiple down) and any periodic width pattern (whose sums
    re-lock at the period).  The low-discrepancy sequence never locks.
    """
    span = b - a
    if cap is None:
        cap = span / 4.0
    phi = 0.6180339887498949

    def half(start, sgn, h0):
        edges = [start]
        h = min(h0, cap)
        k = 0
        while (mid - (edges[-1] + sgn * h)) * sgn > 0.0:
            edges.append(edges[-1] + sgn * h)
            k += 1
            h = h * growth
            if h >= cap:
                h = cap * (0.85 + 0.3 * math.modf(k * phi)[0])
        return edges

    mid = a + 0.5 * span
    left = half(a, 1.0, h_a)
    right = half(b, -1.0, h_b)
    return np.array(left + right[::-1])


def _origin_edges(env, w_hi, base):
    """Edges (in the working coordinate) for a window touching w = 0.

    Subohmic shapes traverse the window in u = sqrt(w); cold finite-beta
    baths get panels packed into the coth knee at w ~ 2/beta.
    """
    sub = env.n < 1.0
    q_hi = math.sqrt(w_hi) if sub else w_hi
    knee = None
    if isinstance(env.temperature, Finite):
        knee = 2.0 / env.temperature.beta
        if sub:
            knee = math.sqrt(knee)
    if knee is not None and knee < q_hi / 20.0:
        s = knee / 8.0
        m = base + 3 * int(np.ceil(np.log10(q_hi / s)))
        return np.concatenate(([0.0], np.geomspace(s, q_hi, m)))
    return np.linspace(0.0, q_hi, base + 1)


# ---------------------------------------------------------------------------
# per-time evaluation

def _full_kernel_region(env, om, t, edges, from_origin):
    """GL integral of all four g*S kernels on one window, shared nodes."""
    x, wts = gauss_legendre_panels(edges, _GL_PTS)
    if from_origin and env.n < 1.0:
        wts = wts * 2.0 * x
        x = x * x
    g_eta = spectral_density(x, env)
    g_nu = g_eta * env.thermal_factor(x)
    s_cs, s_ss, s_cc, s_sc = _s_kernels(x, t, om)
    return np.array([
        np.sum(wts * g_eta * s_cs),
        np.sum(wts * g_eta * s_ss),
        np.sum(wts * g_nu * s_cc),
        np.sum(wts * g_nu * s_sc),
    ])


def _osc_integral(u1, u2):
    """int_{u1}^{u2} exp(i u)/u du for u1, u2 of the same sign."""
    sgn = 1.0 if u1 > 0.0 else -1.0
    si1, ci1 = sici(abs(u1))
    si2, ci2 = sici(abs(u2))
    return (ci2 - ci1) + 1j * sgn * (si2 - si1)


def _osc_cap(t, structural):
    """Panel-width cap for a piece integrated against exp(i w t).

    The Filon fit error couples to the oscillation through a factor that
    is ~1 for panel half-phase theta = t h / 2 below 1, peaks ~50x
    around theta ~ 2-5, and dies off above ~20.  Panels are kept out of
    the peak: full width at either t h <= 2 or t h >= 50.  The shrunken
    branch is affordable exactly because it only triggers for
    t < 50 / structural, bounding the panel count by 25 span/structural.
    """
    th2 = t * structural
    if th2 <= 2.0 or th2 >= 50.0:
        return structural
    return 2.0 / t


def _split_piece(env, om, t, edges):
    """Static + Filon contributions of one off-resonance piece.

    The oscillatory parts reassemble cos/sin of (w +- Om) t from the
    complex transforms F = int amp(w) exp(i w t) dw by the phase shifts
    exp(+- i Om t), using that the amplitudes are real.  The value of
    each amplitude at the resonance is subtracted before quadrature and
    restored through the exact 1/(w -+ Om) transforms (log and Si/Ci);
    otherwise the 1/(w - Om) weight leaks quadrature error scaled by
    g(Om), ruinous for the anomalous channel when th(Om) is large.
    """
    x = filon_nodes(edges)
    g_eta = spectral_density(x, env)
    g_nu = g_eta * env.thermal_factor(x)
    inv_a = 1.0 / (x + om)
    inv_b = 1.0 / (x - om)
    ph_a = np.exp(1j * om * t)
    ph_b = np.conj(ph_a)
    lo, hi = edges[0], edges[-1]
    log_a = math.log((hi + om) / (lo + om))
    log_b = math.log((hi - om) / (lo - om))  # lo, hi on one side of om
    osc_a = _osc_integral(t * (lo + om), t * (hi + om))
    osc_b = _osc_integral(t * (lo - om), t * (hi - om))
    g_eta_res = float(spectral_density(om, env))
    g_nu_res = g_eta_res * float(env.thermal_factor(om))

    def transforms(g, g_res):
        d = g - g_res
        fa = ph_a * filon_quadratic(d * inv_a, edges, t) + g_res * osc_a
        fb = ph_b * filon_quadratic(d * inv_b, edges, t) + g_res * osc_b
        pa = filon_quadratic(d * inv_a, edges, 0.0).real + g_res * log_a
        pb = filon_quadratic(d * inv_b, edges, 0.0).real + g_res * log_b
        return fa, fb, pa, pb

    out = np.zeros(4)
    fa, fb, pa, pb = transforms(g_eta, g_eta_res)
    out[0] = 0.5 * (pa + pb) - 0.5 * (fa.real + fb.real)
    out[1] = 0.5 * (fb.imag - fa.imag)
    fa, fb, pa, pb = transforms(g_nu, g_nu_res)
    out[2] = 0.5 * (fa.imag + fb.imag)
    out[3] = 0.5 * (pa - pb) - 0.5 * (fa.real - fb.real)
    return out


def _raw_kernel_integrals(env, om, t, level):
    """The four integrals int g S dw at one time, before prefactors."""
    if t == 0.0:
        return np.zeros(4)
    w_max = _omega_max(env)
    L = env.cutoff

    def leveled(edges):
        for _ in range(level):
            edges = refine_edges(edges)
        return edges

    if t * w_max <= 60.0:
        edges = leveled(_origin_edges(env, w_max, 24))
        return _full_kernel_region(env, om, t, edges, from_origin=True)

    w_res = min(2.0 / t, 0.5 * om)
    w_org = min(2.0 / t, L / 8.0)
    total = np.zeros(4)
    if om - w_res <= 1.5 * w_org:
        # resonance sits against the origin window: one merged region
        hi = min(om + w_res, w_max)
        edges = leveled(_origin_edges(env, hi, 16))
        total += _full_kernel_region(env, om, t, edges, from_origin=True)
        lo_tail = hi
    else:
        edges = leveled(_origin_edges(env, w_org, 8))
        total += _full_kernel_region(env, om, t, edges, from_origin=True)
        if om - w_res > w_org:
            span = om - w_res - w_org
            total += _split_piece(env, om, t, leveled(
                _graded_edges(w_org, om - w_res, 0.5 * w_org, 0.5 * w_res,
                              cap=_osc_cap(t, span / 4.0))))
        if om - w_res < w_max:
            lo = max(0.0, om - w_res)
            hi = min(om + w_res, w_max)
            res_edges = leveled(np.linspace(lo, hi, 9))
            total += _full_kernel_region(env, om, t, res_edges,
                                         from_origin=False)
            lo_tail = hi
        else:
            lo_tail = w_org
    if lo_tail < w_max:
        cap = _osc_cap(t, L / 4.0)
        tail_edges = leveled(_graded_edges(lo_tail, w_max,
                                           h_a=0.5 * min(2.0 / t, 0.5 * om, L / 8.0),
                                           h_b=cap, cap=cap))
        total += _split_piece(env, om, t, tail_edges)
    return total


def _assemble(env, sys_, om, t, level):
    raw = _raw_kernel_integrals(env, om, t, level)
    m = sys_.mass
    return np.array([
        -(2.0 / m) * raw[0],
        raw[1] / (m * om),
        raw[2] / m,
        raw[3] / (m * om),
    ])


# ---------------------------------------------------------------------------
# time grid and series assembly

def _time_grid(t_max, samples, cutoff):
    """samples points on [0, t_max], log-dense through the jolt t < 10/L."""
    t_jolt = 10.0 / cutoff
    if t_max <= t_jolt * 1.5:
        n_log = samples - 1
        grid = np.concatenate(([0.0], np.geomspace(t_max / 10.0 ** 3, t_max, n_log)))
    else:
        n_log = max(2, samples // 4)
        n_lin = samples - n_log - 1
        grid = np.concatenate((
            [0.0],
            np.geomspace(t_jolt / 10.0 ** 3, t_jolt, n_log),
            np.linspace(t_jolt, t_max, n_lin + 1)[1:],
        ))
    return grid


def _compute_series(env, sys_, om, times, level):
    vals = np.empty((len(times), 4))
    for i, t in enumerate(times):
        vals[i] = _assemble(env, sys_, om, float(t), level)
    return vals


_SERIES_CACHE = {}


def compute_coefficients(env, sys_, t_max, samples=2000, frequency="bare",
                         rtol=_DEFAULT_RTOL):
    """Tabulate all four coefficients on [0, t_max].

    The grid is log-dense below 10/cutoff (to resolve the initial jolt)
    and uniform after.  frequency selects the oscillation used inside
    the integrals: "bare" (default, consistent with the second-order
    truncation) or "renormalized" (one self-consistency pass through the
    late-time frequency shift, for sensitivity studies).  Results are
    cached per argument tuple; a verification pass recomputes every
    ~30th point one refinement level higher and escalates the whole
    series until the probes move less than rtol of each channel's peak.
    The probes share the grid family with the series, so treat the
    recorded quadrature_error as an estimate rather than a bound; a
    series that stalls above rtol is still returned (with the achieved
    error recorded) as long as it clears the 1e-3 gross-failure ceiling.
    """
    if t_max <= 0.0:
        raise ValueError(f"t_max must be > 0, got {t_max}")
    if samples < 2:
        raise ValueError(f"need at least 2 samples, got {samples}")
    if frequency not in ("bare", "renormalized"):
        raise ValueError(f"unknown frequency mode {frequency!r}")
    key = (env, sys_, float(t_max), int(samples), frequency, float(rtol))
    if key in _SERIES_CACHE:
        return _SERIES_CACHE[key]

    om = sys_.omega_bare
    if frequency == "renormalized":
        probe = compute_coefficients(env, sys_, t_max, samples=min(samples, 200),
                                     frequency="bare", rtol=rtol)
        shift = float(np.median(probe.delta_omega_sq[-len(probe.times) // 4:]))
        om_sq = sys_.omega_bare ** 2 + shift
        if om_sq <= 0.0:
            raise ValueError(
                f"renormalized frequency is imaginary (Omega^2 shift {shift:g}"
                f" overwhelms the bare {sys_.omega_bare ** 2:g}); use bare mode")
        om = math.sqrt(om_sq)

    times = _time_grid(float(t_max), int(samples), env.cutoff)
    if env.gamma0 == 0.0:
        vals = np.zeros((len(times), 4))
        err = 0.0
    else:
        level = 0
        vals = _compute_series(env, sys_, om, times, level)
        probe_idx = np.unique(np.r_[1:len(times):max(1, len(times) // 30),
                                    len(times) - 1])
        for _ in range(3):
            fine = np.array([_assemble(env, sys_, om, float(times[i]), level + 1)
                             for i in probe_idx])
            scale = np.maximum(np.max(np.abs(vals), axis=0), 1e-300)
            err = float(np.max(np.abs(fine - vals[probe_idx]) / scale))
            if err <= rtol:
                break
            level += 1
            vals = _compute_series(env, sys_, om, times, level)
        if err > max(_RAISE_RTOL, rtol):
            raise QuadratureError(err, rtol, "coefficient series refinement")

    series = CoefficientSeries(
        times=times,
        delta_omega_sq=vals[:, 0],
        gamma=vals[:, 1],
        d_normal=vals[:, 2],
        f_anomalous=vals[:, 3],
        env=env,
        sys=sys_,
        omega_eff=om,
        frequency_mode=frequency,
        saturation_warning=(env.gamma0 > 0.0 and t_max > 1.0 / env.gamma0),
        quadrature_error=err,
    )
    _SERIES_CACHE[key] = series
    return series


# ---------------------------------------------------------------------------
# constant high-temperature pair

def hight_constants(env, sys_):
    """(gamma0, D_const) for the constant-coefficient high-T ohmic path.

    D_const = 2 gamma0 kT M.  Only meaningful for an ohmic bath in the
    high-temperature regime; anything else must use the full series
    (away from those limits neither is f negligible nor D constant).
    """
    if not isinstance(env.temperature, HighT):
        raise UnsupportedRegimeError(
            "constant coefficients need the high-temperature regime")
    if env.n != 1.0:
        raise UnsupportedRegimeError(
            f"constant coefficients are ohmic-only, got n = {env.n}")
    return env.gamma0, 2.0 * env.gamma0 * env.temperature.value * sys_.mass


# ---------------------------------------------------------------------------
# interpolation and export

def interpolate(series, t):
    """Monotone-cubic values (dOmega2, gamma, D, f) at time(s) t.

    Exact at grid nodes; raises for t outside the tabulated range.
    """
    from scipy.interpolate import PchipInterpolator

    t_arr = np.asarray(t, dtype=float)
    lo, hi = series.times[0], series.times[-1]
    if np.any(t_arr < lo) or np.any(t_arr > hi):
        raise ValueError(f"t outside tabulated range [{lo:g}, {hi:g}]")
    out = []
    for name, values in series.channels().items():
        if name not in series._interpolants:
            series._interpolants[name] = PchipInterpolator(series.times, values)
        val = series._interpolants[name](t_arr)
        out.append(float(val) if t_arr.ndim == 0 else val)
    return tuple(out)


def write_coefficient_csv(series, path):
    """Dump the table as CSV with the defining parameters in # comments."""
    env, osc = series.env, series.sys
    temp = env.temperature
    with open(path, "w") as fh:
        fh.write(f"# n={env.n:g} gamma0={env.gamma0:.17g} cutoff={env.cutoff:.17g}"
                 f" temperature={temp!r} mass_ref={env.mass_ref:g}\n")
        fh.write(f"# mass={osc.mass:g} omega_bare={osc.omega_bare:g}"
                 f" omega_eff={series.omega_eff:.17g}"
                 f" mode={series.frequency_mode}\n")
        fh.write("t,delta_omega_sq,gamma,D,f\n")
        for i in range(len(series.times)):
            fh.write(f"{series.times[i]:.17g},{series.delta_omega_sq[i]:.17g},"
                     f"{series.gamma[i]:.17g},{series.d_normal[i]:.17g},"
                     f"{series.f_anomalous[i]:.17g}\n")
