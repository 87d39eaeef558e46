"""Decoherence and activation diagnostics.

The interference term between two packets centered at +-L0 is
attenuated by Gamma(t) = exp(-A(t)) with

    dA/dt = 4 L0^2 D(t) - 2 f(t)

accumulated with the same monotone cubic interpolant the evolution
engines use, so both views of a coefficient table agree.  The normal
diffusion suppresses coherence at a rate set by the squared separation;
the anomalous coefficient enters with the opposite sign and dominates
for supraohmic baths at zero temperature, where D dies off after the
initial transient.

Timescale estimators return the order-of-magnitude decoherence time for
each bath class and temperature regime; activation detection reads an
energy record and reports when heating visibly starts.  Everything here
is pure post-processing over immutable series and trajectories.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .coefficients import UnsupportedRegimeError
from .spectral import Finite, HighT, Zero

DECOHERENCE_THRESHOLD = 1.0 / math.e

REGIMES = ("OhmicHighT", "SupraohmicHighT", "SubohmicHighT",
           "OhmicZeroT", "SupraohmicZeroT", "SubohmicZeroT")


@dataclass
class DecoherenceTrace:
    """Fringe-visibility exponent and decay factor on the series grid."""

    times: np.ndarray
    a_int: np.ndarray
    gamma_factor: np.ndarray
    t_dec_measured: Optional[float]
    half_separation: float


def fringe_visibility(series, l0):
    """Integrates dA/dt = 4 L0^2 D - 2 f; Gamma = exp(-A).

    t_dec_measured is the first root of A(t) = 1 (Gamma = 1/e), located
    on the smooth antiderivative, or None if the grid never reaches it.
    """
    if l0 < 0.0:
        raise ValueError(f"half-separation must be >= 0, got {l0}")
    t = series.times
    rate = 4.0 * l0 * l0 * series.d_normal - 2.0 * series.f_anomalous
    if np.all(rate == 0.0):
        return DecoherenceTrace(t, np.zeros_like(t), np.ones_like(t),
                                None, l0)
    accum = PchipInterpolator(t, rate).antiderivative()
    a = accum(t)
    a[0] = 0.0
    t_dec = None
    hit = np.nonzero(a >= 1.0)[0]
    if hit.size:
        k = hit[0]
        t_dec = float(brentq(lambda s: accum(s) - 1.0, t[k - 1], t[k]))
    return DecoherenceTrace(t, a, np.exp(-a), t_dec, l0)


@dataclass(frozen=True)
class TimescaleEstimate:
    """Order-of-magnitude decoherence time: a value, an upper bound, or
    a statement that the regime does not decohere."""

    value: Optional[float]
    kind: str  # "estimate" | "upper_bound" | "none"
    regime: str
    validity_warning: bool = False


def _temperature_class(env):
    """(label, kt): 'high' with the temperature, or 'zero'.

    A finite-beta bath counts as hot once kT reaches the cutoff (the
    thermal factor is then 2kT/w over the whole support); below that it
    is treated as the zero-temperature regime with a validity warning.
    """
    th = env.temperature
    if isinstance(th, Zero):
        return "zero", 0.0, False
    if isinstance(th, HighT):
        return "high", th.value, False
    if isinstance(th, Finite):
        kt = 1.0 / th.beta
        if kt >= env.cutoff:
            return "high", kt, False
        return "zero", kt, True
    raise UnsupportedRegimeError(
        "no thermodynamic temperature for an engineered bath profile")


def decoherence_time_estimate(env, sys_, l0):
    """Regime formula for the decoherence time at half-separation l0.

    High temperature: ohmic 1/(2 M gamma0 kT L0^2), supraohmic
    (Lam M kT L0^2 gamma0)^(-1/2), subohmic 1/(M gamma0 L0^2 kT).
    Zero temperature: ohmic bounded by 1/gamma0, subohmic bounded by
    Omega/(gamma0 Lam) (only meaningful for Omega/gamma0 > 1),
    supraohmic none unless M L0^2 >= 1/gamma0, in which case the loss
    completes within the initial transient.
    """
    if l0 <= 0.0:
        raise ValueError(f"half-separation must be > 0, got {l0}")
    label, kt, approx = _temperature_class(env)
    mass = sys_.mass
    g0, lam = env.gamma0, env.cutoff
    if label == "high":
        if env.n == 1:
            return TimescaleEstimate(1.0 / (2.0 * mass * g0 * kt * l0 * l0),
                                     "estimate", "OhmicHighT", approx)
        if env.n > 1:
            return TimescaleEstimate((lam * mass * kt * l0 * l0 * g0) ** -0.5,
                                     "estimate", "SupraohmicHighT", approx)
        return TimescaleEstimate(1.0 / (mass * g0 * l0 * l0 * kt),
                                 "estimate", "SubohmicHighT", approx)
    if env.n == 1:
        return TimescaleEstimate(1.0 / g0, "upper_bound", "OhmicZeroT", approx)
    if env.n > 1:
        if mass * l0 * l0 >= 1.0 / g0:
            return TimescaleEstimate(20.0 / lam, "upper_bound",
                                     "SupraohmicZeroT", approx)
        return TimescaleEstimate(None, "none", "SupraohmicZeroT", approx)
    omega = sys_.omega_bare
    return TimescaleEstimate(omega / (g0 * lam), "upper_bound",
                             "SubohmicZeroT",
                             approx or omega / g0 <= 1.0)


def activation_onset(traj, isolated_e=None, window=10):
    """First time, past the jolt window t > 10/cutoff, at which the
    energy exceeds its post-jolt running minimum by 5% while having
    increased over the last `window` samples; None if never.

    isolated_e, when given, raises the reference floor to the isolated
    system's energy so transient dips cannot fake an onset.
    """
    t = np.asarray(traj.times)
    e = np.asarray(traj.energy)
    t_jolt = 10.0 / traj.series.env.cutoff
    mask = t > t_jolt
    if not mask.any():
        raise ValueError(f"trajectory ends at {t[-1]:.3g}, inside the "
                         f"jolt window {t_jolt:.3g}")
    idx = np.nonzero(mask)[0]
    floor = np.minimum.accumulate(e[idx])
    if isolated_e is not None:
        floor = np.maximum(floor, isolated_e)
    rising = np.diff(e) > 0.0
    for j, i in enumerate(idx):
        if i < window - 1:
            continue
        if e[i] >= 1.05 * floor[j] and np.all(rising[i - window + 1:i]):
            return float(t[i])
    return None


def thermal_activation_time(e_target, e0, gamma0, kt):
    """t_th = (E_target - E0) / (2 gamma0 kT), the time the asymptotic
    heating rate needs to supply the energy difference."""
    if gamma0 <= 0.0:
        raise ValueError(f"gamma0 must be > 0, got {gamma0}")
    if kt <= 0.0:
        raise ValueError(f"kt must be > 0, got {kt}")
    return (e_target - e0) / (2.0 * gamma0 * kt)


@dataclass
class TimescaleReport:
    """Every timescale of a run in one place, JSON-ready."""

    regime: str
    t_dec_estimate: Optional[float]
    estimate_kind: str
    t_dec_measured: Optional[float]
    t_act_measured: Optional[float]
    t_th: Optional[float]
    t_sat: float
    validity_warning: bool
    parameters: dict

    def as_dict(self):
        return {
            "regime": self.regime,
            "t_dec_estimate": self.t_dec_estimate,
            "estimate_kind": self.estimate_kind,
            "t_dec_measured": self.t_dec_measured,
            "t_act_measured": self.t_act_measured,
            "t_th": self.t_th,
            "t_sat": self.t_sat,
            "validity_warning": self.validity_warning,
            "parameters": dict(self.parameters),
        }


def timescale_report(series, traj, l0, isolated_e=None):
    """Assembles estimate, measured decoherence, onset, and thermal
    activation time for one run."""
    env, sys_ = series.env, series.sys
    est = decoherence_time_estimate(env, sys_, l0)
    trace = fringe_visibility(series, l0)
    t_act = activation_onset(traj, isolated_e)
    label, kt, _ = _temperature_class(env)
    t_th = None
    if label == "high" and env.gamma0 > 0.0:
        t_th = thermal_activation_time(float(traj.energy[-1]),
                                       float(traj.energy[0]),
                                       env.gamma0, kt)
    t_sat = math.inf if env.gamma0 == 0.0 else 1.0 / env.gamma0
    params = {
        "n": env.n, "gamma0": env.gamma0, "cutoff": env.cutoff,
        "mass": sys_.mass, "omega_bare": sys_.omega_bare,
        "half_separation": l0, "kt": kt if label == "high" else 0.0,
        "shift_mode": traj.shift_mode,
    }
    return TimescaleReport(est.regime, est.value, est.kind,
                           trace.t_dec_measured, t_act, t_th, t_sat,
                           est.validity_warning, params)


# ---------------------------------------------------------------------------
# grid-side validation

def fringe_contrast(rho, x, l0):
    """Off-diagonal contrast |rho(L0, -L0)| / sqrt(rho(L0, L0) rho(-L0, -L0))
    at the grid points nearest +-L0; equals 1 for any pure state."""
    ip = int(np.argmin(np.abs(x - l0)))
    im = int(np.argmin(np.abs(x + l0)))
    den = math.sqrt(abs(rho[ip, ip].real) * abs(rho[im, im].real))
    if den == 0.0:
        return 0.0
    return float(abs(rho[ip, im])) / den


def snapshot_visibility(traj, l0):
    """Approximate Gamma(t) from stored grid snapshots, normalized to
    the first one.  Validation-only: the coefficient path is the fast,
    authoritative route; this one measures the actual density matrix.
    """
    if not traj.snapshots:
        raise ValueError("trajectory carries no snapshots")
    times = np.array([t for t, _ in traj.snapshots])
    c = np.array([fringe_contrast(r, traj.x, l0) for _, r in traj.snapshots])
    if c[0] <= 0.0:
        raise ValueError("no interference term at the first snapshot")
    g = c / c[0]
    t_dec = None
    hit = np.nonzero(g <= DECOHERENCE_THRESHOLD)[0]
    if hit.size:
        k = hit[0]
        if k == 0:
            t_dec = float(times[0])
        else:
            # linear crossing between the bracketing samples
            g0, g1 = g[k - 1], g[k]
            w = (g0 - DECOHERENCE_THRESHOLD) / (g0 - g1)
            t_dec = float(times[k - 1] + w * (times[k] - times[k - 1]))
    return DecoherenceTrace(times, -np.log(np.maximum(g, 1e-300)), g,
                            t_dec, l0)


def write_decoherence_csv(trace, path, header_note=None):
    """t, A, Gamma rows at full float64 precision."""
    with open(path, "w") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        fh.write(f"# half_separation={trace.half_separation:.17g}\n")
        fh.write("t,A,Gamma\n")
        for i in range(trace.times.size):
            fh.write(f"{trace.times[i]:.17g},{trace.a_int[i]:.17g},"
                     f"{trace.gamma_factor[i]:.17g}\n")
