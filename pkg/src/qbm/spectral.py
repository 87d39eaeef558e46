"""Bath spectral densities and the dissipation/noise kernels built on them.

The bath family is a power-law density with a Gaussian cutoff,

    I(w) = (2/pi) M gamma0 w (w/L)**(n-1) exp(-w**2/L**2),

with ohmicity exponent n > 0 (named shapes: subohmic 1/2, ohmic 1,
supraohmic 3).  The two memory kernels are its sine and thermally weighted
cosine transforms,

    eta(t) = int_0^inf I(w) sin(wt) dw
    nu(t)  = int_0^inf I(w) th(w) cos(wt) dw,

where the thermal factor th is coth(beta w / 2) at inverse temperature
beta, 1 at zero temperature, 2 k_B T / w in the high-temperature limit,
and 2 T(w) / w for a classical bath with frequency-dependent temperature.
Units are hbar = k_B = 1 with frequencies measured against the system's
bare frequency.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._quadrature import (
    QuadratureError,
    filon_nodes,
    filon_quadratic,
    gauss_legendre_panels,
    refine_to_tolerance,
)

__all__ = [
    "Zero",
    "Finite",
    "HighT",
    "Mimic",
    "EnvironmentSpec",
    "KernelSample",
    "QuadratureError",
    "spectral_density",
    "dissipation_kernel",
    "noise_kernel",
    "classical_noise_kernel",
    "kernel_samples",
]

OHMICITY_PRESETS = {"subohmic": 0.5, "ohmic": 1.0, "supraohmic": 3.0}

_DEFAULT_RTOL = 1e-10
# Beyond this many phase radians across the cutoff, plain panels waste
# nodes fighting cancellation and the Filon rule takes over.
_FILON_PHASE = 50.0


# ---------------------------------------------------------------------------
# temperature regimes

@dataclass(frozen=True)
class Zero:
    """Zero-temperature bath: thermal factor identically 1."""

    def thermal_factor(self, omega):
        return np.ones_like(np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class Finite:
    """Finite temperature, thermal factor coth(beta * omega / 2)."""

    beta: float

    def thermal_factor(self, omega):
        return 1.0 / np.tanh(0.5 * self.beta * np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class HighT:
    """High-temperature limit k_B T >> cutoff: coth -> 2 k_B T / omega."""

    value: float

    def thermal_factor(self, omega):
        return 2.0 * self.value / np.asarray(omega, dtype=float)


@dataclass(frozen=True)
class Mimic:
    """Classical bath at frequency-dependent temperature: 2 T(omega) / omega.

    T(omega) = omega / 2 reproduces the zero-temperature quantum factor
    identically; a constant profile reproduces HighT.
    """

    profile: Callable

    def thermal_factor(self, omega):
        omega = np.asarray(omega, dtype=float)
        temp = np.asarray(self.profile(omega), dtype=float)
        if np.any(temp < 0.0):
            raise ValueError("temperature profile must be >= 0 on the "
                             "quadrature range")
        return 2.0 * temp / omega


# ---------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class EnvironmentSpec:
    """Bath definition; all rates in units of the system's bare frequency.

    mass_ref is the system mass appearing in I(w); it cancels against the
    1/M prefactors of the drift and diffusion coefficients downstream.
    """

    n: float
    gamma0: float
    cutoff: float
    temperature: object = Zero()
    mass_ref: float = 1.0

    def __post_init__(self):
        if self.n <= 0.0:
            raise ValueError(f"ohmicity exponent must be > 0, got {self.n}")
        # gamma0 = 0 is tolerated (decoupled system) even though the model
        # is only meant for gamma0 > 0.
        if self.gamma0 < 0.0:
            raise ValueError(f"coupling gamma0 must be >= 0, got {self.gamma0}")
        if self.cutoff <= 0.0:
            raise ValueError(f"cutoff must be > 0, got {self.cutoff}")
        if isinstance(self.temperature, Finite) and self.temperature.beta <= 0.0:
            raise ValueError("Finite temperature needs beta > 0")
        if isinstance(self.temperature, HighT) and self.temperature.value <= 0.0:
            raise ValueError("HighT temperature needs k_B T > 0")
        if self.mass_ref <= 0.0:
            raise ValueError(f"mass_ref must be > 0, got {self.mass_ref}")

    @property
    def validity_warnings(self):
        """Weak-interaction caveats recorded at construction time.

        The time-local coefficients are derived to second order in the
        coupling, so gamma0 is expected to sit well below the bare
        frequency (= 1 in these units).
        """
        notes = []
        if self.gamma0 >= 1.0:
            notes.append("gamma0 >= bare frequency: outside the"
                         " weak-interaction regime")
        elif self.gamma0 >= 0.1:
            notes.append("gamma0 is not small against the bare frequency;"
                         " second-order coefficients may be inaccurate")
        return tuple(notes)

    def thermal_factor(self, omega):
        return self.temperature.thermal_factor(omega)


@dataclass(frozen=True)
class KernelSample:
    """One row of a kernel table: eta(t) and nu(t) at a common time."""

    t: float
    eta: float
    nu: float


# ---------------------------------------------------------------------------
# spectral density

def spectral_density(omega, env):
    """I(omega) = (2/pi) M gamma0 omega (omega/L)**(n-1) exp(-omega**2/L**2).

    Vanishes at omega = 0 for every n > 0 (the n < 1 shapes have infinite
    slope there, not a divergence).  Rejects negative frequencies.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("spectral density is defined for omega >= 0")
    L = env.cutoff
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = np.where(w > 0.0, w * (w / L) ** (env.n - 1.0), 0.0)
    out = (2.0 / np.pi) * env.mass_ref * env.gamma0 * shape * np.exp(-((w / L) ** 2))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# kernel quadrature
#
# Everything below integrates amp(w) * trig(w t) over [0, w_max] with
# w_max = L * max(6, sqrt(ln 1/eps)).  The amplitude is smooth except at
# the origin, where n < 1 shapes and thermal factors ~ 1/w put an
# integrable kink; substituting w = u**2 for n < 1 removes it, and
# finite-beta baths get panels graded into the coth knee at w ~ 2/beta.

def _omega_max(env, rtol):
    return env.cutoff * max(6.0, np.sqrt(np.log(1.0 / rtol)))


def _slow_edges(env, q_lo, q_hi, base, knee_q=None):
    """Panel edges in the working coordinate for a non-oscillatory window."""
    if knee_q is not None and q_lo == 0.0 and knee_q < (q_hi - q_lo) / 20.0:
        s = knee_q / 8.0
        m = base + 3 * int(np.ceil(np.log10(q_hi / s)))
        return np.concatenate(([0.0], np.geomspace(s, q_hi, m)))
    return np.linspace(q_lo, q_hi, base + 1)


def _knee_scale(env):
    """Frequency below which the thermal factor varies faster than I(w)."""
    if isinstance(env.temperature, Finite):
        return 2.0 / env.temperature.beta
    return None


def _integrate_slow(amp, trig, t, env, q_hi, atol, base, context):
    """Full-integrand panel quadrature on [0, q_hi**2 or q_hi].

    Used whenever the phase across the window stays modest; for n < 1 the
    window is traversed in u = sqrt(w).
    """
    sub = env.n < 1.0
    knee = _knee_scale(env)
    knee_q = np.sqrt(knee) if (sub and knee is not None) else knee

    def evaluate(edges):
        x, wts = gauss_legendre_panels(edges, 10)
        if sub:
            f = amp(x * x) * trig(x * x * t) * 2.0 * x
        else:
            f = amp(x) * trig(x * t)
        return float(np.sum(wts * f))

    edges0 = _slow_edges(env, 0.0, np.sqrt(q_hi) if sub else q_hi, base, knee_q)
    return refine_to_tolerance(evaluate, edges0, rtol=0.0, atol=atol,
                               context=context)


def _integrate_filon(amp, part, t, w_lo, w_hi, atol, context):
    """Oscillatory tail via the Filon rule, log-graded toward w_lo."""
    n0 = 24
    ratio = (w_hi / w_lo) ** (1.0 / n0)

    def evaluate(edges):
        val = filon_quadratic(amp(filon_nodes(edges)), edges, t)
        return val.imag if part == "sin" else val.real

    edges0 = w_lo * ratio ** np.arange(n0 + 1)
    edges0[-1] = w_hi
    return refine_to_tolerance(evaluate, edges0, rtol=0.0, atol=atol,
                               context=context)


def _amp_scale(amp, env, w_max):
    """Cheap upper-bound scale int |amp| for absolute tolerances."""
    sub = env.n < 1.0
    knee = _knee_scale(env)
    knee_q = np.sqrt(knee) if (sub and knee is not None) else knee
    edges = _slow_edges(env, 0.0, np.sqrt(w_max) if sub else w_max, 16, knee_q)
    x, wts = gauss_legendre_panels(edges, 8)
    f = np.abs(amp(x * x)) * 2.0 * x if sub else np.abs(amp(x))
    return float(np.sum(wts * f))


def _kernel_value(t, env, amp, part, rtol):
    t = float(t)
    w_max = _omega_max(env, rtol)
    scale = _amp_scale(amp, env, w_max)
    if scale == 0.0:
        return 0.0, 0.0
    trig = np.sin if part == "sin" else np.cos
    context = f"{part}-kernel at t={t:g}"
    if abs(t) * env.cutoff <= _FILON_PHASE:
        val, err = _integrate_slow(amp, trig, t, env, w_max,
                                   rtol * scale, 24, context)
        return val, err
    w_b = 2.0 / abs(t)
    inner, err_in = _integrate_slow(amp, trig, t, env, w_b,
                                    0.5 * rtol * scale, 8, context)
    outer, err_out = _integrate_filon(amp, part, t, w_b, w_max,
                                      0.5 * rtol * scale, context)
    return inner + outer, err_in + err_out


def _eval_kernel(t, env, amp, part, rtol, return_error):
    ts = np.asarray(t, dtype=float)
    vals = np.empty(ts.shape)
    errs = np.empty(ts.shape)
    for idx in np.ndindex(ts.shape):
        vals[idx], errs[idx] = _kernel_value(ts[idx], env, amp, part, rtol)
    if ts.ndim == 0:
        vals, errs = float(vals), float(errs)
    return (vals, errs) if return_error else vals


# ---------------------------------------------------------------------------
# public kernels

def dissipation_kernel(t, env, rtol=_DEFAULT_RTOL, return_error=False):
    """eta(t) = int_0^inf I(w) sin(wt) dw.

    Odd in t; eta(0) = 0 exactly.  t may be a scalar or array, signed.
    With return_error=True also returns the quadrature error estimate.
    """
    amp = lambda w: spectral_density(w, env)
    return _eval_kernel(t, env, amp, "sin", rtol, return_error)


def noise_kernel(t, env, rtol=_DEFAULT_RTOL, return_error=False):
    """nu(t) = int_0^inf I(w) th(w) cos(wt) dw with th set by the regime.

    Even in t.  The integrand stays integrable at the origin for every
    n > 0 in every regime (the high-temperature factor 2kT/w is the worst
    case, leaving w**(n-1)).
    """
    amp = lambda w: spectral_density(w, env) * env.thermal_factor(w)
    return _eval_kernel(t, env, amp, "cos", rtol, return_error)


def classical_noise_kernel(t, env, temperature_profile, rtol=_DEFAULT_RTOL,
                           return_error=False):
    """Noise kernel of a classical bath at temperature T(omega).

    Computes int_0^inf I(w) (2 T(w)/w) cos(wt) dw; T(w) = w/2 makes this
    identical to the zero-temperature quantum kernel, which is the mimic
    used by the classical comparison runs.  Profiles must be nonnegative.
    """
    mimic_env = dataclasses.replace(env, temperature=Mimic(temperature_profile))
    return noise_kernel(t, mimic_env, rtol=rtol, return_error=return_error)


def kernel_samples(times, env, rtol=_DEFAULT_RTOL):
    """Tabulate both kernels on a common time grid as KernelSample rows."""
    etas = dissipation_kernel(times, env, rtol=rtol)
    nus = noise_kernel(times, env, rtol=rtol)
    return [KernelSample(float(t), float(e), float(v))
            for t, e, v in zip(np.asarray(times, dtype=float), etas, nus)]
