"""Evolution of the open oscillator: Gaussian moments and direct grid.

Two engines solve the same master equation

    drho/dt = (i/2M)(d2_x - d2_x') rho - (iM/2) W2(t) (x^2 - x'^2) rho
              - gamma(t) (x - x') (d_x - d_x') rho
              - M D(t) (x - x')^2 rho
              + i f(t) (x - x') (d_x + d_x') rho

with the coefficient table supplied by a CoefficientSeries.

The moment engine integrates the closed set of first and second moments
(exact for Gaussian states, and exact for the second moments of any
state since the generator is quadratic):

    d<x>/dt   = <p>/M
    d<p>/dt   = -M W2 <x> - 2 gamma <p>
    d<x2>/dt  = 2 <xp>/M
    d<xp>/dt  = <p2>/M - M W2 <x2> - 2 gamma <xp> - f
    d<p2>/dt  = -2 M W2 <xp> - 4 gamma <p2> + 2 M D

The grid engine steps rho(x, x') itself with fourth-order stencils and
classical RK4, which is the only way to follow interference fringes.

W2(t) depends on shift_mode: "full" uses omega_bare^2 + dOmega2(t) (the
bare oscillator plus the environment-induced shift), "off" uses
omega_eff^2 alone, i.e. a counterterm is assumed to cancel the induced
shift and the series frequency is taken as the physical one.  Energies
reported by either engine use the same W2 as the dynamics.
"""

import math
import struct
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .coefficients import CoefficientSeries, OscillatorSpec, interpolate

_DET_SLACK = 1e-9  # roundoff slack on the det sigma >= 1/4 monitor


class UncertaintyViolation(ValueError):
    """Second moments fell below the uncertainty floor det sigma >= 1/4."""


# ---------------------------------------------------------------------------
# initial states

@dataclass(frozen=True)
class SingleGaussian:
    """Gaussian wave packet centered at (x0, p0) with position variance
    sigma_sq; None picks the ground-state width 1/(2 M Omega)."""
    x0: float = 0.0
    p0: float = 0.0
    sigma_sq: Optional[float] = None


@dataclass(frozen=True)
class SymmetricSuperposition:
    """Even superposition of two packets at +-half_separation, both at
    rest, each with position variance sigma_sq (None: ground width)."""
    half_separation: float
    sigma_sq: Optional[float] = None


def packet_width_sq(state, sys_):
    if state.sigma_sq is not None:
        if state.sigma_sq <= 0.0:
            raise ValueError(f"sigma_sq must be positive, got {state.sigma_sq}")
        return float(state.sigma_sq)
    return 1.0 / (2.0 * sys_.mass * sys_.omega_bare)


def initial_moments(state, sys_):
    """(mean_x, mean_p, <x2>, <xp>_sym, <p2>) for the given state.

    For the superposition the cross terms raise <x2> by L0^2/(1+lam) and
    pull <p2> down by lam L0^2 / (4 s^2 (1+lam)), lam = e^{-L0^2/2s}.
    """
    if not isinstance(state, (SingleGaussian, SymmetricSuperposition)):
        raise TypeError(f"unknown state {state!r}")
    s = packet_width_sq(state, sys_)
    if isinstance(state, SingleGaussian):
        return np.array([state.x0, state.p0,
                         s + state.x0 ** 2,
                         state.x0 * state.p0,
                         1.0 / (4.0 * s) + state.p0 ** 2])
    l0 = state.half_separation
    lam = math.exp(-l0 * l0 / (2.0 * s))
    return np.array([0.0, 0.0,
                     s + l0 * l0 / (1.0 + lam),
                     0.0,
                     1.0 / (4.0 * s) - lam * l0 * l0 / (4.0 * s * s * (1.0 + lam))])


def initial_density(state, sys_, x):
    """rho(x, x') = psi(x) psi*(x') on the grid, unit trace on the grid."""
    if not isinstance(state, (SingleGaussian, SymmetricSuperposition)):
        raise TypeError(f"unknown state {state!r}")
    s = packet_width_sq(state, sys_)
    norm = (2.0 * math.pi * s) ** -0.25
    if isinstance(state, SingleGaussian):
        psi = norm * np.exp(-(x - state.x0) ** 2 / (4.0 * s)
                            + 1j * state.p0 * x)
    else:
        l0 = state.half_separation
        psi = norm * (np.exp(-(x - l0) ** 2 / (4.0 * s))
                      + np.exp(-(x + l0) ** 2 / (4.0 * s))).astype(complex)
    dx = x[1] - x[0]
    psi = psi / math.sqrt(float(np.sum(np.abs(psi) ** 2)) * dx)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# moment engine

def moment_flow(m, om2, gam, dd, ff, mass):
    """Right-hand side of the five-moment system at one instant."""
    x, p, xx, xp, pp = m
    return np.array([
        p / mass,
        -mass * om2 * x - 2.0 * gam * p,
        2.0 * xp / mass,
        pp / mass - mass * om2 * xx - 2.0 * gam * xp - ff,
        -2.0 * mass * om2 * xp - 4.0 * gam * pp + 2.0 * mass * dd,
    ])


@dataclass
class MomentTrajectory:
    times: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    xx: np.ndarray
    xp: np.ndarray
    pp: np.ndarray
    omega_sq_eff: np.ndarray
    energy: np.ndarray
    denergy: np.ndarray
    linear_entropy: np.ndarray
    min_det_sigma: float
    uncertainty_time: Optional[float]
    shift_mode: str
    series: CoefficientSeries = field(repr=False)


def _step_grid_times(t_end, cutoff, dt, dt_jolt_cap):
    """Step starts and widths: a fine jolt phase to 20/cutoff, then dt."""
    t_jolt = min(20.0 / cutoff, t_end)
    n_a = max(1, math.ceil(t_jolt / dt_jolt_cap))
    starts = [np.linspace(0.0, t_jolt, n_a, endpoint=False)]
    widths = [np.full(n_a, t_jolt / n_a)]
    if t_end > t_jolt:
        n_b = max(1, math.ceil((t_end - t_jolt) / dt))
        starts.append(np.linspace(t_jolt, t_end, n_b, endpoint=False))
        widths.append(np.full(n_b, (t_end - t_jolt) / n_b))
    return np.concatenate(starts), np.concatenate(widths)


def _stage_coefficients(series, starts, widths, shift_mode):
    """Coefficient channels at the three RK4 stage times of every step,
    shaped (n_steps, 3), plus W2 already assembled per shift_mode."""
    stage_t = np.concatenate([starts, starts + 0.5 * widths, starts + widths])
    stage_t = np.minimum(stage_t, series.times[-1])  # end-point roundoff
    delta, gam, dd, ff = interpolate(series, stage_t)
    if shift_mode == "full":
        om2 = series.sys.omega_bare ** 2 + delta
    elif shift_mode == "off":
        om2 = np.full_like(delta, series.omega_eff ** 2)
    else:
        raise ValueError(f"shift_mode must be 'full' or 'off', got {shift_mode!r}")
    n = starts.size
    reshape = lambda a: a.reshape(3, n).T
    return reshape(om2), reshape(gam), reshape(dd), reshape(ff)


def gaussian_denergy(xx, xp, pp, om2, mass):
    """Energy spread of a zero-mean Gaussian state.

    dE^2 = pp^2/(2 M^2) + M^2 W2^2 xx^2 / 2 + W2 xp^2 - W2/4
    (the -W2/4 is the quantum part of the x2-p2 covariance).
    """
    var = (pp * pp / (2.0 * mass * mass) + mass * mass * om2 * om2 * xx * xx / 2.0
           + om2 * xp * xp - om2 / 4.0)
    return np.sqrt(np.maximum(var, 0.0))


def evolve_moments(series, state, t_end=None, dt=None, shift_mode="full",
                   uncertainty_action="warn", sample_every=1):
    """Integrate the moment system with RK4 on a fixed step grid.

    The first 20/cutoff of the evolution is resolved with steps of at
    most 0.1/cutoff regardless of dt (the coefficient jolt lives there).
    uncertainty_action: "warn", "raise" or "ignore" when det sigma drops
    below 1/4 (a real feature of the weak-coupling master equation at
    strong coupling, not an integration failure).
    """
    sys_ = series.sys
    mass = sys_.mass
    if t_end is None:
        t_end = float(series.times[-1])
    if t_end <= 0.0 or t_end > series.times[-1] * (1.0 + 1e-12):
        raise ValueError(f"t_end {t_end} outside the series range "
                         f"(0, {series.times[-1]}]")
    if uncertainty_action not in ("warn", "raise", "ignore"):
        raise ValueError(f"bad uncertainty_action {uncertainty_action!r}")
    if dt is None:
        scale = max(series.omega_eff, 4.0 * float(np.max(np.abs(series.gamma))))
        dt = min(0.05 / scale, t_end / 400.0)
    starts, widths = _step_grid_times(t_end, series.env.cutoff, dt,
                                      0.1 / series.env.cutoff)
    om2_s, gam_s, dd_s, ff_s = _stage_coefficients(series, starts, widths,
                                                   shift_mode)

    n_steps = starts.size
    m = initial_moments(state, sys_)
    rows = [(0.0, *m, om2_s[0, 0])]
    min_det = np.inf
    t_viol = None
    for k in range(n_steps):
        h = widths[k]
        c1 = (om2_s[k, 1], gam_s[k, 1], dd_s[k, 1], ff_s[k, 1])
        k1 = moment_flow(m, om2_s[k, 0], gam_s[k, 0], dd_s[k, 0], ff_s[k, 0],
                         mass)
        k2 = moment_flow(m + 0.5 * h * k1, *c1, mass)
        k3 = moment_flow(m + 0.5 * h * k2, *c1, mass)
        k4 = moment_flow(m + h * k3, om2_s[k, 2], gam_s[k, 2], dd_s[k, 2],
                         ff_s[k, 2], mass)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        det = ((m[2] - m[0] ** 2) * (m[4] - m[1] ** 2)
               - (m[3] - m[0] * m[1]) ** 2)
        if det < min_det:
            min_det = det
            if det < 0.25 * (1.0 - _DET_SLACK) and t_viol is None:
                t_viol = starts[k] + h
        if (k + 1) % sample_every == 0 or k == n_steps - 1:
            rows.append((starts[k] + h, *m, om2_s[k, 2]))
    arr = np.array(rows)
    out = arr[:, :6]
    om2_kept = arr[:, 6]

    if t_viol is not None and uncertainty_action != "ignore":
        msg = (f"det sigma fell to {min_det:.6g} < 1/4 (first at "
               f"t = {t_viol:.6g}): moments left the physical cone")
        if uncertainty_action == "raise":
            raise UncertaintyViolation(msg)
        warnings.warn(msg)

    t_arr, mx, mp, xx, xp, pp = out.T
    energy = pp / (2.0 * mass) + mass * om2_kept * xx / 2.0
    cxx = xx - mx * mx
    cpp = pp - mp * mp
    cxp = xp - mx * mp
    det_arr = cxx * cpp - cxp * cxp
    with np.errstate(invalid="ignore"):
        lin_ent = np.where(det_arr > 0.0,
                           1.0 - 1.0 / (2.0 * np.sqrt(np.abs(det_arr))),
                           np.nan)
    zero_mean = (isinstance(state, SingleGaussian)
                 and state.x0 == 0.0 and state.p0 == 0.0)
    if zero_mean:
        denergy = gaussian_denergy(xx, xp, pp, om2_kept, mass)
    else:
        denergy = np.full_like(energy, np.nan)
    return MomentTrajectory(t_arr, mx, mp, xx, xp, pp, om2_kept, energy,
                            denergy, lin_ent, float(min_det), t_viol,
                            shift_mode, series)


# ---------------------------------------------------------------------------
# grid engine

@dataclass
class GridTrajectory:
    times: np.ndarray
    trace: np.ndarray
    xx: np.ndarray
    xp: np.ndarray
    pp: np.ndarray
    omega_sq_eff: np.ndarray
    energy: np.ndarray
    denergy: np.ndarray
    purity: np.ndarray
    boundary_mass: np.ndarray
    herm_error: float
    x: np.ndarray
    l_box: float
    dt: float
    shift_mode: str
    snapshots: list
    series: CoefficientSeries = field(repr=False)

    @property
    def linear_entropy(self):
        return 1.0 - self.purity

    @property
    def trace_drift(self):
        return np.max(np.abs(self.trace - self.trace[0]))


def _grid_observables(r, x, dx, om2, mass):
    """trace, <x2>, <xp>, <p2>, dE, purity, edge mass from rho(x, x').

    Derivatives across the x = x' diagonal use the anti-diagonal samples
    a_k = rho(x_i + k dx, x_i - k dx), which step the relative coordinate
    by 2 dx at fixed center; hermiticity folds a_{-k} into conj(a_k).
    """
    n = x.size
    diag = np.real(np.einsum("ii->i", r))
    trace = float(np.sum(diag)) * dx
    xx = float(np.sum(x * x * diag)) * dx
    x4 = float(np.sum(x ** 4 * diag)) * dx

    idx = np.arange(3, n - 3)
    a0 = diag[idx]
    a1 = r[idx + 1, idx - 1]
    a2 = r[idx + 2, idx - 2]
    a3 = r[idx + 3, idx - 3]
    # <p2> = -sum d2_rel rho|diag dx, 5-point stencil with h = 2 dx
    d2rel = (-2.0 * a2.real + 32.0 * a1.real - 30.0 * a0) / (48.0 * dx * dx)
    pp = -float(np.sum(d2rel)) * dx
    # <xp>_sym = sum x Im(d_rel rho)|diag dx)
    xp = float(np.sum(x[idx] * (8.0 * a1.imag - a2.imag))) / 12.0
    # <p4> = +sum d4_rel rho|diag dx, 7-point stencil with h = 2 dx
    d4rel = ((56.0 * a0 - 78.0 * a1.real + 24.0 * a2.real - 2.0 * a3.real)
             / (6.0 * 16.0 * dx ** 4))
    p4 = float(np.sum(d4rel)) * dx
    # Re<x2 p2> = -Re sum x^2 d2_first rho|diag dx (cyclic ordering)
    b0 = a0
    bp1 = r[idx + 1, idx]
    bm1 = r[idx - 1, idx]
    bp2 = r[idx + 2, idx]
    bm2 = r[idx - 2, idx]
    d2first = (-(bp2 + bm2) + 16.0 * (bp1 + bm1) - 30.0 * b0) / (12.0 * dx * dx)
    x2p2 = -float(np.sum(x[idx] ** 2 * d2first.real)) * dx

    energy = pp / (2.0 * mass) + mass * om2 * xx / 2.0
    h2 = (p4 / (4.0 * mass * mass) + 0.5 * om2 * x2p2
          + mass * mass * om2 * om2 * x4 / 4.0)
    de2 = h2 - energy * energy
    denergy = math.sqrt(de2) if de2 > 0.0 else 0.0
    purity = float(np.sum(np.abs(r) ** 2)) * dx * dx
    edge = float(np.sum(diag[:3]) + np.sum(diag[-3:])) * dx
    return trace, xx, xp, pp, energy, denergy, purity, edge


def evolve_grid(series, state, t_end=None, n_points=256, l_box=None, dt=None,
                shift_mode="full", sample_every=None, snapshot_times=()):
    """Step rho(x, x') with RK4 and fourth-order space stencils.

    dt defaults to 0.45x the tightest of the RK4 stability bounds:
    2.8/|imag| for the kinetic + potential spectrum (|eig D2| <= 16/(3 dx^2))
    and 2.79/|real| for decoherence + drift, evaluated with the worst
    coefficients in the window.  snapshot_times are snapped to the
    nearest step end and the full complex64 matrix is kept for each.
    """
    sys_ = series.sys
    mass = sys_.mass
    if t_end is None:
        t_end = float(series.times[-1])
    if t_end <= 0.0 or t_end > series.times[-1] * (1.0 + 1e-12):
        raise ValueError(f"t_end {t_end} outside the series range "
                         f"(0, {series.times[-1]}]")
    s = packet_width_sq(state, sys_)
    if l_box is None:
        l0 = getattr(state, "half_separation", None)
        if l0 is None:
            l0 = abs(state.x0)
        l_box = max(8.0 * math.sqrt(s), l0 + 6.0 * math.sqrt(s))
    x = np.linspace(-l_box, l_box, n_points)
    dx = x[1] - x[0]

    in_window = series.times <= t_end * (1.0 + 1e-12)
    delta_w = series.delta_omega_sq[in_window]
    if shift_mode == "full":
        om2_max = float(np.max(np.abs(sys_.omega_bare ** 2 + delta_w)))
    else:
        om2_max = series.omega_eff ** 2
    gam_max = float(np.max(np.abs(series.gamma[in_window])))
    dd_max = float(np.max(series.d_normal[in_window]))
    ff_max = float(np.max(np.abs(series.f_anomalous[in_window])))
    lam_imag = (16.0 / 3.0) / (mass * dx * dx) + 0.5 * mass * om2_max * l_box ** 2
    lam_real = (mass * dd_max * (2.0 * l_box) ** 2
                + (gam_max + ff_max) * (2.0 * l_box) * 2.0 / dx)
    dt_stable = 0.45 * min(2.8 / lam_imag,
                           2.79 / lam_real if lam_real > 0.0 else np.inf)
    if dt is None:
        dt = dt_stable
    elif dt > dt_stable:
        raise ValueError(f"dt {dt:.3g} exceeds the stability bound "
                         f"{dt_stable:.3g} for this grid")
    starts, widths = _step_grid_times(t_end, series.env.cutoff, dt,
                                      min(dt, 0.1 / series.env.cutoff))
    om2_s, gam_s, dd_s, ff_s = _stage_coefficients(series, starts, widths,
                                                   shift_mode)
    n_steps = starts.size
    if sample_every is None:
        sample_every = max(1, n_steps // 200)

    rho_p = _kernels.padded_zeros(n_points)
    rho_p[2:-2, 2:-2] = initial_density(state, sys_, x)
    k1 = _kernels.padded_zeros(n_points)
    k2 = _kernels.padded_zeros(n_points)
    k3 = _kernels.padded_zeros(n_points)
    k4 = _kernels.padded_zeros(n_points)
    tmp = _kernels.padded_zeros(n_points)
    rhs = _kernels.grid_rhs
    inv_2m = 1.0 / (2.0 * mass)

    snap_req = sorted(set(float(t) for t in snapshot_times))
    step_ends = starts + widths
    snap_steps = {int(np.argmin(np.abs(step_ends - t))): t
                  for t in snap_req if t > 0.0}

    rows = [(0.0, *_grid_observables(rho_p[2:-2, 2:-2], x, dx,
                                     om2_s[0, 0], mass), om2_s[0, 0])]
    snapshots = []
    if snap_req and snap_req[0] == 0.0:
        snapshots.append((0.0, rho_p[2:-2, 2:-2].astype(np.complex64)))
    herm_err = 0.0
    for k in range(n_steps):
        h = widths[k]
        rhs(rho_p, k1, x, dx, inv_2m, om2_s[k, 0], gam_s[k, 0], dd_s[k, 0], ff_s[k, 0])
        np.multiply(k1, 0.5 * h, out=tmp)
        tmp += rho_p
        rhs(tmp, k2, x, dx, inv_2m, om2_s[k, 1], gam_s[k, 1], dd_s[k, 1], ff_s[k, 1])
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += rho_p
        rhs(tmp, k3, x, dx, inv_2m, om2_s[k, 1], gam_s[k, 1], dd_s[k, 1], ff_s[k, 1])
        np.multiply(k3, h, out=tmp)
        tmp += rho_p
        rhs(tmp, k4, x, dx, inv_2m, om2_s[k, 2], gam_s[k, 2], dd_s[k, 2], ff_s[k, 2])
        k2 += k3
        k1 += k4
        k1 += 2.0 * k2
        k1 *= h / 6.0
        rho_p += k1
        at_end = k == n_steps - 1
        if (k + 1) % sample_every == 0 or at_end or k in snap_steps:
            r = rho_p[2:-2, 2:-2]
            t_now = step_ends[k]
            if k in snap_steps or (at_end and snap_req
                                   and abs(snap_req[-1] - t_now) < 1e-12):
                snapshots.append((t_now, r.astype(np.complex64)))
            if (k + 1) % sample_every == 0 or at_end:
                rows.append((t_now, *_grid_observables(r, x, dx, om2_s[k, 2],
                                                       mass), om2_s[k, 2]))
                he = float(np.max(np.abs(r - r.conj().T)))
                herm_err = max(herm_err, he / max(float(np.max(np.abs(r))), 1e-300))

    arr = np.array(rows)
    t_arr, trace, xx, xp, pp, energy, denergy, purity, edge, om2_kept = arr.T
    traj = GridTrajectory(t_arr, trace, xx, xp, pp, om2_kept, energy, denergy,
                          purity, edge, herm_err, x, float(l_box), float(dt),
                          shift_mode, snapshots, series)
    if traj.trace_drift > 1e-4:
        warnings.warn(f"trace drifted by {traj.trace_drift:.3g}; "
                      "grid or step too coarse")
    if float(np.max(edge)) > 1e-4:
        warnings.warn(f"boundary mass reached {float(np.max(edge)):.3g}; "
                      "box too small for this run")
    if herm_err > 1e-8:
        warnings.warn(f"hermiticity error reached {herm_err:.3g}")
    return traj


# ---------------------------------------------------------------------------
# snapshot and trajectory output

_SNAP_MAGIC = b"QBMG"
_SNAP_HEADER = struct.Struct("<4sIdd8x")  # magic, N, l_box, t, pad to 32


def write_snapshot(path, rho, l_box, t):
    """Binary snapshot: 32-byte header then complex64 row-major data."""
    rho = np.ascontiguousarray(rho, dtype=np.complex64)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"snapshot needs a square matrix, got {rho.shape}")
    with open(path, "wb") as fh:
        fh.write(_SNAP_HEADER.pack(_SNAP_MAGIC, rho.shape[0], float(l_box),
                                   float(t)))
        fh.write(rho.tobytes(order="C"))


def read_snapshot(path):
    """Inverse of write_snapshot: (rho, l_box, t)."""
    with open(path, "rb") as fh:
        head = fh.read(_SNAP_HEADER.size)
        magic, n, l_box, t = _SNAP_HEADER.unpack(head)
        if magic != _SNAP_MAGIC:
            raise ValueError(f"not a snapshot file: magic {magic!r}")
        data = np.frombuffer(fh.read(8 * n * n), dtype=np.complex64)
    return data.reshape(n, n).copy(), l_box, t


def write_trajectory_csv(traj, path, header_note=None):
    """t, xx, pp, xp, E, dE, Sl rows at full float64 precision."""
    with open(path, "w") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        fh.write("t,xx,pp,xp,E,dE,Sl\n")
        sl = traj.linear_entropy
        for i in range(traj.times.size):
            fh.write(f"{traj.times[i]:.17g},{traj.xx[i]:.17g},"
                     f"{traj.pp[i]:.17g},{traj.xp[i]:.17g},"
                     f"{traj.energy[i]:.17g},{traj.denergy[i]:.17g},"
                     f"{sl[i]:.17g}\n")
