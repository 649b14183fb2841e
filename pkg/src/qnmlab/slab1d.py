"""Analytic quasinormal modes of a symmetric dielectric slab in vacuum.

The slab occupies ``|x| < L/2`` with refractive index ``n``; the field is
``E_y(x)``, ``H_z(x)`` with ``dE/dx = i omega mu0 H`` and
``dH/dx = i omega eps E - J``. Modes are indexed by any integer ``m``:

* ``m >= 1`` are the Fabry-Perot resonances,
* ``m = 0`` is the purely damped mode on the negative imaginary axis,
* ``m <= -1`` are the Hermitian twins ``omega_{-m} = -conj(omega_m)``.

Interior fields have unit amplitude (``cos(q x)`` for even ``m``,
``sin(q x)`` for odd ``m``); exterior fields are outgoing exponentials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .constants import C0, EPS0, MU0, Z0
from .errors import (
    OutsideCompletenessRegion,
    RegularizationAngleTooSmall,
    SourceOnNodalPoint,
)
from .specfun import gauss_legendre


@dataclass(frozen=True)
class SlabGeometry:
    """Symmetric slab of index ``n`` and thickness ``L`` (m) in vacuum."""

    n: float
    L: float

    def __post_init__(self):
        if not self.n > 1:
            raise ValueError("slab index must exceed the background index 1")
        if not self.L > 0:
            raise ValueError("slab thickness must be positive")

    @property
    def log_rho(self) -> float:
        """``ln((n + 1) / (n - 1))``, the round-trip loss exponent."""
        return math.log((self.n + 1) / (self.n - 1))


@dataclass(frozen=True)
class SlabMode:
    """One slab QNM (unnormalised unless ``norm`` is set)."""

    m: int
    omega_t: complex
    parity: str
    interior_amp: complex
    exterior_amp: complex
    norm: Optional[complex] = None

    @property
    def Q(self) -> float:
        return -self.omega_t.real / (2 * self.omega_t.imag)

    def with_norm(self, value: complex) -> "SlabMode":
        return replace(self, norm=complex(value))


def slab_quality_factor(geom: SlabGeometry, m: int) -> float:
    """Closed-form ``Q_m = m pi / (2 ln((n + 1)/(n - 1)))``."""
    return abs(m) * math.pi / (2 * geom.log_rho)


def _omega(geom: SlabGeometry, m: int) -> complex:
    return C0 / (geom.n * geom.L) * complex(m * math.pi, -geom.log_rho)


def _transfer(omega, n, d):
    """Transfer matrix of ``(E, Z0 H)`` across a homogeneous layer of index ``n``."""
    phi = n * omega / C0 * d
    return np.array([[np.cos(phi), 1j * np.sin(phi) / n],
                     [1j * n * np.sin(phi), np.cos(phi)]])


def tmm_determinant(geom: SlabGeometry, omega: complex) -> complex:
    """Outgoing-wave determinant, zero exactly at the slab QNMs.

    The left outgoing state ``(1, -1)`` (in ``(E, Z0 H)`` units) is carried
    across the slab and compared with the right outgoing state ``(1, 1)``.
    The determinant is scaled to be dimensionless and of order one.
    """
    v = _transfer(omega, geom.n, geom.L) @ np.array([1.0, -1.0])
    return complex((v[0] - v[1]) / (abs(v[0]) + abs(v[1])))


def dispersion_residual(geom: SlabGeometry, omega: complex) -> float:
    """``|r^2 exp(2 i n omega L / c) - 1|`` with ``r = (n - 1)/(n + 1)``."""
    r = (geom.n - 1) / (geom.n + 1)
    return abs(r * r * np.exp(2j * geom.n * omega * geom.L / C0) - 1)


def slab_mode(geom: SlabGeometry, m: int) -> SlabMode:
    """Mode of integer index ``m`` (``m <= 0`` included, see module notes)."""
    # the closed form already yields omega_{-m} = -conj(omega_m)
    w = _omega(geom, m)
    q = geom.n * w / C0
    even = m % 2 == 0
    edge = np.cos(q * geom.L / 2) if even else np.sin(q * geom.L / 2)
    return SlabMode(int(m), complex(w), "even" if even else "odd", 1.0 + 0j, complex(edge))


def slab_qnm_frequencies(geom: SlabGeometry, m_max: int) -> list[SlabMode]:
    """Modes ``m = 1..m_max`` from the Fabry-Perot closed form.

    Every returned frequency is checked against the transfer-matrix
    determinant; an ``AssertionError`` would signal an internal bug.
    """
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    modes = []
    for m in range(1, m_max + 1):
        mode = slab_mode(geom, m)
        det = abs(tmm_determinant(geom, mode.omega_t))
        assert det < 1e-12 and dispersion_residual(geom, mode.omega_t) < 1e-12, det
        modes.append(mode)
    return modes


def slab_qnm_field(mode: SlabMode, geom: SlabGeometry, x):
    """Fields ``(E, H)`` of ``mode`` at real or complex positions ``x``.

    Complex ``x`` outside the slab evaluates the analytically continued
    exterior wave, which is how mapped (PML) coordinates are handled.
    """
    x = np.asarray(x)
    w = mode.omega_t
    q = geom.n * w / C0
    k = w / C0
    half = geom.L / 2
    xr = x.real
    inside = np.abs(xr) < half
    sgn = np.where(xr >= 0, 1.0, -1.0)
    even = mode.parity == "even"
    if even:
        e_in, de_in = np.cos(q * x), -q * np.sin(q * x)
        side_amp = mode.exterior_amp + 0 * sgn
    else:
        e_in, de_in = np.sin(q * x), q * np.cos(q * x)
        side_amp = mode.exterior_amp * sgn
    dist = sgn * x - half
    e_out = side_amp * np.exp(1j * k * dist)
    de_out = sgn * 1j * k * e_out
    E = mode.interior_amp * np.where(inside, e_in, e_out)
    dE = mode.interior_amp * np.where(inside, de_in, de_out)
    H = dE / (1j * w * MU0)
    if E.ndim == 0:
        return complex(E), complex(H)
    return E, H


def _check_path(mode: SlabMode, slope: complex):
    slope = complex(slope)
    tan_theta = slope.imag / slope.real if slope.real > 0 else math.inf
    # twins (Re omega < 0) and the m = 0 mode are not revealed by a path in
    # the first quadrant; their norms are obtained by analytic continuation
    if not (slope.imag > 0 and mode.Q > 0 and tan_theta > 1 / (2 * mode.Q)):
        raise RegularizationAngleTooSmall(
            f"path slope {slope} does not reveal a mode with Q = {mode.Q:.4g}"
        )


def slab_norm_exact(mode: SlabMode, geom: SlabGeometry, slope: complex = 1 + 1j) -> complex:
    """``int (eps E^2 - mu H^2) dx`` over the regularised line.

    Inside the slab ``eps E^2 - mu H^2 = eps0 n^2`` pointwise for unit
    interior amplitude; outside, the outgoing exterior wave makes the
    integrand vanish identically along any path that decays at infinity.
    The only role of ``slope`` is to certify that such a path exists.
    """
    _check_path(mode, slope)
    return _norm_value(mode, geom)


def _norm_value(mode: SlabMode, geom: SlabGeometry) -> complex:
    amp = mode.interior_amp
    return complex(EPS0 * geom.n**2 * geom.L * amp * amp)


def slab_norm_energy_form(mode: SlabMode, geom: SlabGeometry) -> complex:
    """Equivalent closed form ``2 int eps E^2 dx`` along the regularised line.

    The exterior tails integrate to the end-point term
    ``2 i eps0 c E(L/2)^2 / omega``. Agreement with
    :func:`slab_norm_exact` holds only through the dispersion relation,
    which makes it a useful independent check.
    """
    w = mode.omega_t
    q = geom.n * w / C0
    sign = 1.0 if mode.parity == "even" else -1.0
    interior = geom.L / 2 + sign * np.sin(q * geom.L) / (2 * q)
    amp2 = mode.interior_amp**2
    return complex(amp2 * (2 * EPS0 * geom.n**2 * interior
                           + 2j * EPS0 * C0 * mode.exterior_amp**2 / w))


def slab_pairing(mode_a: SlabMode, mode_b: SlabMode, geom: SlabGeometry,
                 slope: complex = 1 + 1j, depth: Optional[float] = None) -> complex:
    """Quadrature of ``int (eps E_a E_b - mu H_a H_b) dx`` on the mapped line.

    The tails run along ``x = +-(L/2 + slope s)``; ``depth`` defaults to a
    length after which both exterior waves have decayed by ``e^-40``.
    """
    for m in (mode_a, mode_b):
        _check_path(m, slope)
    slope = complex(slope)
    decay = min((m.omega_t / C0 * slope).imag for m in (mode_a, mode_b))
    depth = 40.0 / decay if depth is None else depth
    kmax = max(abs(mode_a.omega_t), abs(mode_b.omega_t)) * geom.n / C0
    half = geom.L / 2

    def integrand(x):
        Ea, Ha = slab_qnm_field(mode_a, geom, x)
        Eb, Hb = slab_qnm_field(mode_b, geom, x)
        eps = np.where(np.abs(np.real(x)) < half, EPS0 * geom.n**2, EPS0)
        return eps * Ea * Eb - MU0 * Ha * Hb

    # the left tail is the mirror image of the right one, traversed inward
    rule = gauss_legendre(32)
    lam = 2 * np.pi / kmax

    def segment(a, b):
        n_panels = max(2, math.ceil(abs(b - a) / lam) * 2)
        edges = a + (b - a) * np.linspace(0, 1, n_panels + 1)
        return sum(rule.integrate(integrand, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))

    total = segment(complex(-half - slope * depth), complex(-half))
    total += segment(complex(-half), complex(half))
    total += segment(complex(half), complex(half + slope * depth))
    return complex(total)


def slab_norm_quadrature(mode: SlabMode, geom: SlabGeometry, slope: complex = 1 + 1j) -> complex:
    """Norm by direct quadrature along the mapped path (oracle)."""
    return slab_pairing(mode, mode, geom, slope)


def truncated_energy_integral(mode: SlabMode, geom: SlabGeometry, R: float,
                              nodes: int = 32) -> complex:
    """``2 int_{-R}^{R} eps E^2 dx`` on the real axis, without regularisation.

    The exterior wave grows like ``exp(|Im omega| |x| / c)``, so the value
    oscillates about the true norm with an envelope growing as
    ``exp(2 |Im omega| R / c)``.
    """
    if R < geom.L / 2:
        raise ValueError("R must enclose the slab")
    half = geom.L / 2
    rule = gauss_legendre(nodes)
    lam = 2 * np.pi * C0 / abs(mode.omega_t) / geom.n

    def integrand(x):
        E, _ = slab_qnm_field(mode, geom, x)
        eps = np.where(np.abs(x) < half, EPS0 * geom.n**2, EPS0)
        return 2 * eps * E * E

    total = 0.0
    for a, b in ((-R, -half), (-half, half), (half, R)):
        if b - a <= 0:
            continue
        n_panels = max(1, math.ceil((b - a) / lam) * 2)
        edges = np.linspace(a, b, n_panels + 1)
        total += sum(rule.integrate(integrand, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))
    return complex(total)


# --- Green function --------------------------------------------------------


def slab_green_tmm(geom: SlabGeometry, x: float, x_src: float, omega: complex,
                   J: complex = 1.0) -> complex:
    """Field ``E(x)`` radiated by the sheet current ``J delta(x - x_src)``.

    Transfer-matrix direct solution with outgoing waves on both sides; the
    current imposes ``[Z0 H] = -Z0 J`` at ``x_src``. Valid for complex
    ``omega`` (used by the pole-response extraction).
    """
    half = geom.L / 2
    n = geom.n

    def carry(x_to, x_from, state):
        """Propagate ``state`` from ``x_from`` to ``x_to`` through the layers."""
        pts = sorted({x_from, x_to, *[p for p in (-half, half)
                                      if min(x_from, x_to) < p < max(x_from, x_to)]})
        if x_to < x_from:
            pts = pts[::-1]
        for a, b in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (a + b)
            idx = n if abs(mid) < half else 1.0
            state = _transfer(omega, idx, b - a) @ state
        return state

    left = carry(x_src, -half, np.array([1.0, -1.0], dtype=complex))
    right = carry(x_src, half, np.array([1.0, 1.0], dtype=complex))
    # b * right - a * left = (0, -Z0 J)
    a, b = np.linalg.solve(np.column_stack([-left, right]),
                           np.array([0.0, -Z0 * J], dtype=complex))
    if x < x_src:
        return complex(carry(x, -half, a * np.array([1.0, -1.0], dtype=complex))[0])
    return complex(carry(x, half, b * np.array([1.0, 1.0], dtype=complex))[0])


def _residue(geom, m, x, x_src, J):
    mode = slab_mode(geom, m)
    Ex, _ = slab_qnm_field(mode, geom, x)
    Es, _ = slab_qnm_field(mode, geom, x_src)
    return mode.omega_t, -1j * J * Ex * Es / _norm_value(mode, geom)


def slab_green_expansion(geom: SlabGeometry, x: float, x_src: float, omega: float,
                         M: int, J: complex = 1.0, static_subtracted: bool = False) -> complex:
    """Pole expansion ``sum Res_m / (omega - omega_m)`` of the slab response.

    The sum runs over ``m = -M..M``: the ``M`` pole pairs ``(m, -m)``
    with their Hermitian twins plus the purely damped ``m = 0`` pole.

    Parameters
    ----------
    static_subtracted : bool
        If true, return ``G(0) + omega sum Res_m / (omega_m (omega - omega_m))``
        instead, where ``G(0) = -Z0 J / 2`` is the static response. This
        variant converges faster but is not the plain expansion.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    half = geom.L / 2
    if abs(x) >= half or abs(x_src) >= half:
        warnings.warn(
            "the pole expansion is only complete inside the slab",
            OutsideCompletenessRegion,
            stacklevel=2,
        )
    total = 0.0 + 0.0j
    for m in range(-M, M + 1):
        w_m, res = _residue(geom, m, x, x_src, J)
        if static_subtracted:
            total += res * omega / (w_m * (omega - w_m))
        else:
            total += res / (omega - w_m)
    if static_subtracted:
        total += -Z0 * J / 2
    return complex(total)


def slab_pole_response_norm(geom: SlabGeometry, mode: SlabMode, x_src: float,
                            rel_delta: float = 1e-6, J: complex = 1.0,
                            x_eval: Optional[float] = None,
                            directions=(1, 1j, -1, -1j)) -> complex:
    """Norm from the residue of the slab driven near ``omega_m``.

    ``gamma`` is the average of ``delta E_s(x_eval, omega_m + delta)`` over
    ``delta = rel_delta |omega_m| u`` for the unit ``directions`` ``u``,
    divided by ``E_m(x_eval)``; the norm follows from
    ``N = -i J E_m(x_src) / gamma``.
    """
    half = geom.L / 2
    if abs(x_src) >= half:
        raise ValueError("the source must lie inside the slab")
    xs_grid = np.linspace(-half, half, 201)
    scale = np.max(np.abs(slab_qnm_field(mode, geom, xs_grid)[0]))
    Es, _ = slab_qnm_field(mode, geom, x_src)
    if abs(Es) < 1e-8 * scale:
        raise SourceOnNodalPoint(f"mode {mode.m} vanishes at x_src = {x_src}")
    if x_eval is None:
        x_eval = x_src
    Ee, _ = slab_qnm_field(mode, geom, x_eval)
    d0 = rel_delta * abs(mode.omega_t)
    acc = 0.0 + 0.0j
    for u in directions:
        d = d0 * u
        acc += d * slab_green_tmm(geom, x_eval, x_src, mode.omega_t + d, J)
    gamma = acc / len(directions) / Ee
    return complex(-1j * J * Es / gamma)
