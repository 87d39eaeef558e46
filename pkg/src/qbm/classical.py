"""Classical comparator: Fokker-Planck evolution in phase space.

The classical twin of the master equation, with constant coefficients,
is

    dW/dt = -(p/M) dW/dx + M W2 x dW/dp + 2 gamma d(p W)/dp
            + M D d2W/dp2 - f d2W/dxdp

where the mixed term is the image of the quantum anomalous-diffusion
channel and is off by default: a classical bath has no counterpart for
it, and dropping it is exactly what distinguishes the classical
comparator from the quantum moment flow.

The matching moment system (classical_moment_flow) is the quantum one
with f = 0; evolving it is cheap and is also used to size the phase
space box before the grid run.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

_PAD = 2


@dataclass(frozen=True)
class PhaseSpaceState:
    """Gaussian phase-space density with independent widths.

    var_x = var_p = 1/2 reproduces the quantum ground state's second
    moments (units hbar = 1, M Omega = 1).
    """
    x0: float = 0.0
    p0: float = 0.0
    var_x: float = 0.5
    var_p: float = 0.5
    cov: float = 0.0

    def __post_init__(self):
        if self.var_x <= 0.0 or self.var_p <= 0.0:
            raise ValueError("variances must be positive")
        if self.cov ** 2 >= self.var_x * self.var_p:
            raise ValueError("covariance exceeds the variance ellipse")

    def moments(self):
        return np.array([self.x0, self.p0,
                         self.var_x + self.x0 ** 2,
                         self.cov + self.x0 * self.p0,
                         self.var_p + self.p0 ** 2])

    def density(self, x, p):
        det = self.var_x * self.var_p - self.cov ** 2
        a = self.var_p / det
        b = self.var_x / det
        c = -self.cov / det
        dx = (x - self.x0).reshape(-1, 1)
        dp = (p - self.p0).reshape(1, -1)
        w = np.exp(-0.5 * (a * dx * dx + 2.0 * c * dx * dp + b * dp * dp))
        return w / (2.0 * math.pi * math.sqrt(det))


def classical_moment_flow(m, om2, gam, dd, mass):
    """Moment derivatives of the Fokker-Planck equation; the quantum
    flow with the anomalous channel removed."""
    x, p, xx, xp, pp = m
    return np.array([
        p / mass,
        -mass * om2 * x - 2.0 * gam * p,
        2.0 * xp / mass,
        pp / mass - mass * om2 * xx - 2.0 * gam * xp,
        -2.0 * mass * om2 * xp - 4.0 * gam * pp + 2.0 * mass * dd,
    ])


@dataclass
class ClassicalMomentTrajectory:
    times: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    xx: np.ndarray
    xp: np.ndarray
    pp: np.ndarray
    energy: np.ndarray


def evolve_classical_moments(state, om2, gam, dd, t_end, mass=1.0, dt=None):
    """RK4 on the five classical moments with constant coefficients."""
    if dt is None:
        scale = max(math.sqrt(abs(om2)), 4.0 * gam, 1.0 / t_end)
        dt = min(0.02 / scale, t_end / 400.0)
    n = max(1, math.ceil(t_end / dt))
    h = t_end / n
    m = state.moments()
    rows = [(0.0, *m)]
    for k in range(n):
        k1 = classical_moment_flow(m, om2, gam, dd, mass)
        k2 = classical_moment_flow(m + 0.5 * h * k1, om2, gam, dd, mass)
        k3 = classical_moment_flow(m + 0.5 * h * k2, om2, gam, dd, mass)
        k4 = classical_moment_flow(m + h * k3, om2, gam, dd, mass)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rows.append(((k + 1) * h, *m))
    t, mx, mp, xx, xp, pp = np.array(rows).T
    energy = pp / (2.0 * mass) + mass * om2 * xx / 2.0
    return ClassicalMomentTrajectory(t, mx, mp, xx, xp, pp, energy)


# ---------------------------------------------------------------------------
# grid engine

@dataclass
class FokkerPlanckTrajectory:
    times: np.ndarray
    mean_x: np.ndarray
    mean_p: np.ndarray
    xx: np.ndarray
    xp: np.ndarray
    pp: np.ndarray
    energy: np.ndarray
    norm: np.ndarray
    w_min: float
    x: np.ndarray
    p: np.ndarray
    w_final: np.ndarray
    dt: float


def _fp_rhs(w_p, out_p, x, p_ext, dx, dp, mass, om2, gam, dd, ff):
    """Fills the interior of out_p; w_p carries a two-cell zero frame."""
    c = w_p[2:-2, 2:-2]
    d1x = (-w_p[4:, 2:-2] + 8.0 * w_p[3:-1, 2:-2]
           - 8.0 * w_p[1:-3, 2:-2] + w_p[:-4, 2:-2]) / (12.0 * dx)
    d1p = (-w_p[2:-2, 4:] + 8.0 * w_p[2:-2, 3:-1]
           - 8.0 * w_p[2:-2, 1:-3] + w_p[2:-2, :-4]) / (12.0 * dp)
    d2p = (-(w_p[2:-2, 4:] + w_p[2:-2, :-4])
           + 16.0 * (w_p[2:-2, 3:-1] + w_p[2:-2, 1:-3])
           - 30.0 * c) / (12.0 * dp * dp)
    pw = p_ext.reshape(1, -1) * w_p
    d1p_pw = (-pw[2:-2, 4:] + 8.0 * pw[2:-2, 3:-1]
              - 8.0 * pw[2:-2, 1:-3] + pw[2:-2, :-4]) / (12.0 * dp)
    out = (-(p_ext[2:-2].reshape(1, -1) / mass) * d1x
           + mass * om2 * x.reshape(-1, 1) * d1p
           + 2.0 * gam * d1p_pw
           + mass * dd * d2p)
    if ff != 0.0:
        d1p_wide = (-w_p[:, 4:] + 8.0 * w_p[:, 3:-1]
                    - 8.0 * w_p[:, 1:-3] + w_p[:, :-4]) / (12.0 * dp)
        out -= ff * (-d1p_wide[4:, :] + 8.0 * d1p_wide[3:-1, :]
                     - 8.0 * d1p_wide[1:-3, :] + d1p_wide[:-4, :]) / (12.0 * dx)
    out_p[2:-2, 2:-2] = out


def evolve_fokker_planck(state, om2, gamma, d_const, t_end, mass=1.0,
                         f_const=0.0, include_anomalous=False,
                         n_x=128, n_p=128, x_box=None, p_box=None,
                         dt=None, sample_every=None):
    """Step W(x, p) with RK4 and fourth-order central differences.

    Boxes default to the moment trajectory's own excursion plus six
    standard deviations, so the density never reaches the zero frame.
    Normalization and pointwise negativity (a pure discretization
    artifact for this equation) are monitored, not corrected.
    """
    if t_end <= 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    ff = f_const if include_anomalous else 0.0
    ref = evolve_classical_moments(state, om2, gamma, d_const, t_end, mass)
    if x_box is None:
        cxx = ref.xx - ref.mean_x ** 2
        x_box = float(np.max(np.abs(ref.mean_x)) + 6.0 * math.sqrt(np.max(cxx)))
    if p_box is None:
        cpp = ref.pp - ref.mean_p ** 2
        p_box = float(np.max(np.abs(ref.mean_p)) + 6.0 * math.sqrt(np.max(cpp)))
    x = np.linspace(-x_box, x_box, n_x)
    p = np.linspace(-p_box, p_box, n_p)
    dx = x[1] - x[0]
    dp = p[1] - p[0]
    p_ext = np.concatenate(([p[0] - 2 * dp, p[0] - dp], p,
                            [p[-1] + dp, p[-1] + 2 * dp]))

    lam = (p_box / mass * 1.4 / dx
           + (mass * abs(om2) * x_box + 2.0 * gamma * p_box) * 1.4 / dp
           + 2.0 * gamma
           + mass * d_const * (16.0 / 3.0) / (dp * dp)
           + abs(ff) * 2.0 / (dx * dp))
    dt_stable = 0.4 * 2.79 / lam
    if dt is None:
        dt = dt_stable
    elif dt > dt_stable:
        raise ValueError(f"dt {dt:.3g} exceeds the stability bound "
                         f"{dt_stable:.3g} for this grid")
    n_steps = max(1, math.ceil(t_end / dt))
    h = t_end / n_steps
    if sample_every is None:
        sample_every = max(1, n_steps // 200)

    shape = (n_x + 2 * _PAD, n_p + 2 * _PAD)
    w_p = np.zeros(shape)
    w_p[2:-2, 2:-2] = state.density(x, p)
    k1 = np.zeros(shape)
    k2 = np.zeros(shape)
    k3 = np.zeros(shape)
    k4 = np.zeros(shape)
    tmp = np.zeros(shape)
    args = (x, p_ext, dx, dp, mass, om2, gamma, d_const, ff)

    xi = x.reshape(-1, 1)
    pj = p.reshape(1, -1)

    def observe(t_now, w):
        norm = float(np.sum(w)) * dx * dp
        mx = float(np.sum(xi * w)) * dx * dp / norm
        mp_ = float(np.sum(pj * w)) * dx * dp / norm
        xx = float(np.sum(xi * xi * w)) * dx * dp / norm
        xp_ = float(np.sum(xi * pj * w)) * dx * dp / norm
        pp = float(np.sum(pj * pj * w)) * dx * dp / norm
        e = pp / (2.0 * mass) + mass * om2 * xx / 2.0
        return (t_now, mx, mp_, xx, xp_, pp, e, norm)

    rows = [observe(0.0, w_p[2:-2, 2:-2])]
    w_min = float(np.min(w_p))
    for k in range(n_steps):
        _fp_rhs(w_p, k1, *args)
        np.multiply(k1, 0.5 * h, out=tmp)
        tmp += w_p
        _fp_rhs(tmp, k2, *args)
        np.multiply(k2, 0.5 * h, out=tmp)
        tmp += w_p
        _fp_rhs(tmp, k3, *args)
        np.multiply(k3, h, out=tmp)
        tmp += w_p
        _fp_rhs(tmp, k4, *args)
        k2 += k3
        k1 += k4
        k1 += 2.0 * k2
        k1 *= h / 6.0
        w_p += k1
        if (k + 1) % sample_every == 0 or k == n_steps - 1:
            w = w_p[2:-2, 2:-2]
            rows.append(observe((k + 1) * h, w))
            w_min = min(w_min, float(np.min(w)))

    arr = np.array(rows)
    t, mx, mp_, xx, xp_, pp, e, norm = arr.T
    w_max = float(np.max(w_p))
    if w_min < -1e-6 * w_max:
        warnings.warn(f"negative density reached {w_min:.3g} "
                      f"({abs(w_min) / w_max:.2e} of the peak)")
    drift = float(np.max(np.abs(norm - norm[0])))
    if drift > 1e-4:
        warnings.warn(f"normalization drifted by {drift:.3g}")
    return FokkerPlanckTrajectory(t, mx, mp_, xx, xp_, pp, e, norm, w_min,
                                  x, p, w_p[2:-2, 2:-2].copy(), float(h))


def write_phase_space_csv(traj, path, header_note=None):
    """t, x, p, xx, xp, pp, E, norm rows at full float64 precision."""
    with open(path, "w") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        fh.write("t,x,p,xx,xp,pp,E,norm\n")
        for i in range(traj.times.size):
            fh.write(f"{traj.times[i]:.17g},{traj.mean_x[i]:.17g},"
                     f"{traj.mean_p[i]:.17g},{traj.xx[i]:.17g},"
                     f"{traj.xp[i]:.17g},{traj.pp[i]:.17g},"
                     f"{traj.energy[i]:.17g},{traj.norm[i]:.17g}\n")
