"""Two-body kernel: Kepler propagation, single-revolution Lambert, two-impulse cost.

All quantities are canonical (DU, TU, mu = 1) except ``transfer_dv`` and
``mass_ratio`` which speak km/s at their boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .units import DEFAULT_UNITS, CanonicalUnits

TWO_PI = 2.0 * math.pi
KEPLER_TOL = 1e-14
KEPLER_MAX_ITER = 50
# sin of the transfer angle below which r1 and r2 are treated as collinear
COLLINEAR_TOL = 1e-10


class GeometryDegenerate(ValueError):
    """Transfer plane is undefined (r1, r2 collinear with the origin)."""


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class OrbitalElements:
    """Keplerian elements; ``a`` in DU, angles in radians, ``M0`` at t = 0."""

    a: float
    e: float
    i: float
    raan: float
    argp: float
    M0: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"semimajor axis must be positive, got {self.a}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"eccentricity must be in [0, 1), got {self.e}")
        if not 0.0 <= self.i <= math.pi:
            raise ValueError(f"inclination must be in [0, pi], got {self.i}")
        for name in ("raan", "argp", "M0"):
            object.__setattr__(self, name, getattr(self, name) % TWO_PI)

    @classmethod
    def from_degrees(cls, a_km, e, i_deg, raan_deg, argp_deg, M_deg, units: CanonicalUnits = DEFAULT_UNITS):
        return cls(
            a=a_km / units.du,
            e=e,
            i=math.radians(i_deg),
            raan=math.radians(raan_deg),
            argp=math.radians(argp_deg),
            M0=math.radians(M_deg),
        )

    @property
    def mean_motion(self) -> float:
        return 1.0 / math.sqrt(self.a**3)

    @property
    def period(self) -> float:
        return TWO_PI * math.sqrt(self.a**3)


@dataclass(frozen=True)
class StateVector:
    r: np.ndarray
    v: np.ndarray
    t: float


def solve_kepler(M: float, e: float) -> float:
    """Eccentric anomaly E with E - e sin E = M, on the same 2*pi branch as M."""
    if not 0.0 <= e < 1.0:
        raise ValueError(f"eccentricity must be in [0, 1), got {e}")
    turns = math.floor(M / TWO_PI)
    Mr = M - turns * TWO_PI
    if e == 0.0:
        return M
    E = Mr if e < 0.8 else math.pi
    for _ in range(KEPLER_MAX_ITER):
        f = E - e * math.sin(E) - Mr
        step = f / (1.0 - e * math.cos(E))
        E -= step
        if abs(step) < KEPLER_TOL:
            break
    else:
        E = _kepler_bisect(Mr, e)
    residual = E - e * math.sin(E) - Mr
    if abs(residual) > 1e-12:
        E = _kepler_bisect(Mr, e)
    return E + turns * TWO_PI


def _kepler_bisect(M: float, e: float) -> float:
    # f(E) = E - e sin E - M is increasing; root lies in [M - e, M + e]
    lo, hi = M - e, M + e
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid - e * math.sin(mid) - M > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


def _perifocal_rotation(el: OrbitalElements) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
    cO, sO = math.cos(el.raan), math.sin(el.raan)
    cw, sw = math.cos(el.argp), math.sin(el.argp)
    ci, si = math.cos(el.i), math.sin(el.i)
    p_hat = (cO * cw - sO * sw * ci, sO * cw + cO * sw * ci, sw * si)
    q_hat = (-cO * sw - sO * cw * ci, -sO * sw + cO * cw * ci, cw * si)
    return p_hat, q_hat


def _propagate_tuple(el: OrbitalElements, t: float):
    M = el.M0 + el.mean_motion * t
    E = solve_kepler(M, el.e)
    cE, sE = math.cos(E), math.sin(E)
    a, e = el.a, el.e
    b = a * math.sqrt(1.0 - e * e)
    xp = a * (cE - e)
    yp = b * sE
    vscale = math.sqrt(1.0 / a) / (1.0 - e * cE)
    vxp = -vscale * sE
    vyp = vscale * math.sqrt(1.0 - e * e) * cE
    P, Q = _perifocal_rotation(el)
    rv = (xp * P[0] + yp * Q[0], xp * P[1] + yp * Q[1], xp * P[2] + yp * Q[2])
    vv = (vxp * P[0] + vyp * Q[0], vxp * P[1] + vyp * Q[1], vxp * P[2] + vyp * Q[2])
    return rv, vv


def propagate(el: OrbitalElements, t: float) -> StateVector:
    """Inertial state of ``el`` at epoch ``t`` [TU]."""
    r, v = _propagate_tuple(el, t)
    return StateVector(np.array(r), np.array(v), float(t))


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _norm(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def _hypergeometric_f(z: float, tol: float = 1e-14) -> float:
    s, c, j = 1.0, 1.0, 0
    while True:
        c = c * (3.0 + j) * (1.0 + j) / (2.5 + j) * z / (j + 1.0)
        s += c
        j += 1
        if abs(c) < tol or j > 1000:
            return s


class _LambertTof:
    """Non-dimensional time of flight T(x) and its derivatives for a given lambda."""

    def __init__(self, lam: float):
        self.lam = lam
        self.lam2 = lam * lam
        self.lam3 = lam * self.lam2

    def tof(self, x: float) -> float:
        lam = self.lam
        dist = abs(x - 1.0)
        if 0.01 < dist < 0.2:
            a = 1.0 / (1.0 - x * x)
            if a > 0:
                alfa = 2.0 * math.acos(x)
                beta = 2.0 * math.asin(math.sqrt(self.lam2 / a))
                if lam < 0.0:
                    beta = -beta
                return a * math.sqrt(a) * ((alfa - math.sin(alfa)) - (beta - math.sin(beta))) / 2.0
            alfa = 2.0 * math.acosh(x)
            beta = 2.0 * math.asinh(math.sqrt(-self.lam2 / a))
            if lam < 0.0:
                beta = -beta
            return -a * math.sqrt(-a) * ((beta - math.sinh(beta)) - (alfa - math.sinh(alfa))) / 2.0
        E = x * x - 1.0
        rho = abs(E)
        z = math.sqrt(1.0 + self.lam2 * E)
        if dist <= 0.01:
            eta = z - lam * x
            s1 = 0.5 * (1.0 - lam - x * eta)
            q = 4.0 / 3.0 * _hypergeometric_f(s1)
            return (eta**3 * q + 4.0 * lam * eta) / 2.0
        y = math.sqrt(rho)
        g = x * z - lam * E
        if E < 0:
            d = math.acos(max(-1.0, min(1.0, g)))
        else:
            d = math.log(y * (z - lam * x) + g)
        return (x - lam * z - d / y) / E

    def derivatives(self, x: float, T: float):
        l2, l3 = self.lam2, self.lam3
        umx2 = 1.0 - x * x
        y = math.sqrt(1.0 - l2 * umx2)
        y2 = y * y
        y3 = y2 * y
        d1 = (3.0 * T * x - 2.0 + 2.0 * l3 * x / y) / umx2
        d2 = (3.0 * T + 5.0 * x * d1 + 2.0 * (1.0 - l2) * l3 / y3) / umx2
        d3 = (7.0 * x * d2 + 8.0 * d1 - 6.0 * (1.0 - l2) * l2 * l3 * x / y3 / y2) / umx2
        return d1, d2, d3


def _lambert_tuple(r1, r2, tof: float):
    R1, R2 = _norm(r1), _norm(r2)
    cvec = (r2[0] - r1[0], r2[1] - r1[1], r2[2] - r1[2])
    c = _norm(cvec)
    s = 0.5 * (R1 + R2 + c)
    ir1 = (r1[0] / R1, r1[1] / R1, r1[2] / R1)
    ir2 = (r2[0] / R2, r2[1] / R2, r2[2] / R2)
    h = _cross(ir1, ir2)
    hn = _norm(h)
    if hn < COLLINEAR_TOL:
        raise GeometryDegenerate("transfer angle is 0 or pi; plane undefined")
    ih = (h[0] / hn, h[1] / hn, h[2] / hn)
    lam = math.sqrt(max(0.0, 1.0 - c / s))
    if ih[2] < 0.0:
        # prograde motion requires the long way around
        lam = -lam
        it1 = _cross(ir1, ih)
        it2 = _cross(ir2, ih)
    else:
        it1 = _cross(ih, ir1)
        it2 = _cross(ih, ir2)
    T = math.sqrt(2.0 / s**3) * tof
    tf = _LambertTof(lam)

    T00 = math.acos(lam) + lam * math.sqrt(1.0 - lam * lam)
    T1 = 2.0 / 3.0 * (1.0 - lam * lam * lam)
    if T >= T00:
        x = -(T - T00) / (T - T00 + 4.0)
    elif T <= T1:
        x = T1 * (T1 - T) / (2.0 / 5.0 * (1.0 - tf.lam2 * tf.lam3) * T) + 1.0
    else:
        x = (T / T00) ** (math.log(2.0) / math.log(T1 / T00)) - 1.0

    for _ in range(50):
        t_x = tf.tof(x)
        d1, d2, d3 = tf.derivatives(x, t_x)
        delta = t_x - T
        d12 = d1 * d1
        denom = d1 * (d12 - delta * d2) + d3 * delta * delta / 6.0
        step = delta * (d12 - delta * d2 / 2.0) / denom
        x -= step
        if abs(step) < 1e-13:
            break
    else:
        raise NoConvergence(f"Householder iteration stalled (tof={tof})")
    if not math.isfinite(x):
        raise NoConvergence(f"non-finite Lambert iterate (tof={tof})")

    gamma = math.sqrt(s / 2.0)
    rho = (R1 - R2) / c
    sigma = math.sqrt(max(0.0, 1.0 - rho * rho))
    y = math.sqrt(1.0 - tf.lam2 + tf.lam2 * x * x)
    vr1 = gamma * ((lam * y - x) - rho * (lam * y + x)) / R1
    vr2 = -gamma * ((lam * y - x) + rho * (lam * y + x)) / R2
    vt = gamma * sigma * (y + lam * x)
    vt1, vt2 = vt / R1, vt / R2
    v1 = tuple(vr1 * ir1[k] + vt1 * it1[k] for k in range(3))
    v2 = tuple(vr2 * ir2[k] + vt2 * it2[k] for k in range(3))
    return v1, v2


def lambert(r1, r2, tof: float) -> tuple[np.ndarray, np.ndarray]:
    """Prograde, zero-revolution Lambert arc from ``r1`` to ``r2`` in ``tof`` TU.

    Prograde means the transfer angular momentum has a non-negative z
    component; when r1 x r2 points south the long way is taken.

    Raises ``GeometryDegenerate`` when r1 and r2 are collinear with the origin.
    """
    if tof <= 0:
        raise ValueError(f"time of flight must be positive, got {tof}")
    v1, v2 = _lambert_tuple(tuple(map(float, r1)), tuple(map(float, r2)), float(tof))
    return np.array(v1), np.array(v2)


def _coincident_arc(r1, v_dep, tof: float):
    """Full-revolution arc when departure and arrival positions coincide.

    The orbit through r1 whose period is ``tof`` and whose velocity is
    aligned with the departure velocity; it returns to r1 with the same
    velocity after one revolution.
    """
    R = _norm(r1)
    a = (tof / TWO_PI) ** (2.0 / 3.0)
    speed2 = 2.0 / R - 1.0 / a
    if speed2 <= 0.0:
        raise GeometryDegenerate("no bound orbit through r1 with the requested period")
    vn = _norm(v_dep)
    scale = math.sqrt(speed2) / vn
    v = (v_dep[0] * scale, v_dep[1] * scale, v_dep[2] * scale)
    return v, v


def transfer_dv_canonical(el_i: OrbitalElements, el_j: OrbitalElements, t_dep: float, t_tr: float) -> float:
    """Two-impulse cost in DU/TU; raises ``GeometryDegenerate`` on a pi transfer."""
    r1, vd = _propagate_tuple(el_i, t_dep)
    r2, va = _propagate_tuple(el_j, t_dep + t_tr)
    try:
        v1, v2 = _lambert_tuple(r1, r2, t_tr)
    except GeometryDegenerate:
        dot = r1[0] * r2[0] + r1[1] * r2[1] + r1[2] * r2[2]
        if dot <= 0.0:
            raise
        v1, v2 = _coincident_arc(r1, vd, t_tr)
    dv1 = _norm((v1[0] - vd[0], v1[1] - vd[1], v1[2] - vd[2]))
    dv2 = _norm((va[0] - v2[0], va[1] - v2[1], va[2] - v2[2]))
    return dv1 + dv2


def transfer_dv(el_i: OrbitalElements, el_j: OrbitalElements, t_dep: float, t_tr: float,
                units: CanonicalUnits = DEFAULT_UNITS) -> float:
    """Two-impulse transfer cost in km/s from node i at ``t_dep`` to node j after ``t_tr``."""
    if t_tr <= 0:
        raise ValueError(f"transfer time must be positive, got {t_tr}")
    return units.speed_to_kms(transfer_dv_canonical(el_i, el_j, t_dep, t_tr))


def mass_ratio(dv_kms: float, isp: float, g0: float = 9.81) -> float:
    """Final-to-initial mass fraction exp(-dv / (g0 * isp)), dv in km/s, g0 in m/s^2."""
    if dv_kms < 0:
        raise ValueError(f"delta-v must be non-negative, got {dv_kms}")
    return math.exp(-dv_kms * 1000.0 / (g0 * isp))
