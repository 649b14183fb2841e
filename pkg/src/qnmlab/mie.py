"""Quasinormal modes of a homogeneous sphere.

Resonances are the complex zeros of the denominator of the Mie
coefficients. For the TM (electric) family with angular order ``l`` and
radial derivatives taken with respect to ``r``,

    D(omega) = [eps_in k_out psi(x_in) xi'(x_out)
                - eps_out k_in xi(x_out) psi'(x_in)] / k0,

where ``x = k a``, ``psi(x) = x j_l(x)``, ``xi(x) = x h_l^(1)(x)`` and the
primes on ``psi``/``xi`` denote derivatives with respect to the argument.
TE replaces the permittivities by permeabilities.

Field representation (l = 1, azimuthal order 0, TM)::

    H = u(r) sin(theta) phi_hat,
    E_r = 2i u cos(theta) / (omega eps r),
    E_theta = -i (r u)' sin(theta) / (omega eps r),

with ``u = A_in j_1(k_in r)`` inside and ``A_out h_1^(1)(k_out r)`` outside,
``eps`` being the absolute permittivity. TE is the dual construction with
``E = u sin(theta) phi_hat``. All routines accept complex ``r`` in the
exterior so that fields can be continued onto complex radial paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .constants import C0, EPS0, MU0
from .errors import (
    EvaluationAtMaterialPole,
    InvalidBackground,
    NoConvergence,
    RootAtMaterialPole,
)
from .materials import VACUUM, MaterialModel
from .specfun import riccati_bessel, sph_bessel_derivatives, sph_hn1_table, sph_jn_table

TM = "TM"
TE = "TE"


@dataclass(frozen=True)
class SphereGeometry:
    """Homogeneous sphere of radius ``a`` (m) in a uniform background."""

    a: float
    interior: MaterialModel
    exterior: MaterialModel = VACUUM

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("sphere radius must be positive")
        if getattr(self.exterior, "is_dispersive", False):
            raise InvalidBackground("the exterior medium must be non-dispersive")


@dataclass(frozen=True)
class MieMode:
    """One resonance of a sphere.

    Attributes
    ----------
    l : int
        Angular order.
    pol : str
        ``"TM"`` or ``"TE"``.
    omega_t : complex
        Complex eigenfrequency (rad/s), ``Im < 0``.
    k_in, k_out : complex
        Wavenumbers inside and outside at ``omega_t``.
    A_in, A_out : complex
        Radial amplitudes of ``u`` (see module docstring).
    norm : complex or None
        Normalisation constant once computed.
    """

    l: int
    pol: str
    omega_t: complex
    k_in: complex
    k_out: complex
    A_in: complex
    A_out: complex
    norm: Optional[complex] = None
    iterations: int = field(default=0, compare=False)

    @property
    def wavelength(self) -> complex:
        """Complex vacuum wavelength ``2 pi c / omega_t`` (m)."""
        return 2 * np.pi * C0 / self.omega_t

    @property
    def Q(self) -> float:
        return -self.omega_t.real / (2 * self.omega_t.imag)

    def with_norm(self, value: complex) -> "MieMode":
        return replace(self, norm=complex(value))


def _indices(geom: SphereGeometry, omega):
    eps_in = geom.interior.permittivity(omega)
    mu_in = geom.interior.permeability(omega)
    eps_out = geom.exterior.permittivity(omega)
    mu_out = geom.exterior.permeability(omega)
    n_in = np.sqrt(eps_in * mu_in)
    n_out = np.sqrt(eps_out * mu_out)
    return eps_in, mu_in, eps_out, mu_out, n_in, n_out


def mie_dispersion(geom: SphereGeometry, l: int, pol: str, omega) -> complex:
    """Resonance function whose zeros are the sphere QNM frequencies.

    Parameters
    ----------
    geom : SphereGeometry
    l : int
        Angular order (``l >= 1``).
    pol : {"TM", "TE"}
    omega : complex
        Angular frequency (rad/s).

    Returns
    -------
    complex
        Dimensionless ``D(omega)``; holomorphic wherever the materials are.
    """
    eps_in, mu_in, eps_out, mu_out, n_in, n_out = _indices(geom, omega)
    k0 = omega / C0
    x_in = n_in * k0 * geom.a
    x_out = n_out * k0 * geom.a
    psi, dpsi, _, _ = riccati_bessel(l, x_in)
    _, _, xi, dxi = riccati_bessel(l, x_out)
    if pol == TM:
        p_in, p_out = eps_in, eps_out
    elif pol == TE:
        p_in, p_out = mu_in, mu_out
    else:
        raise ValueError(f"unknown polarisation {pol!r}")
    return complex(p_in * n_out * psi * dxi - p_out * n_in * xi * dpsi)


def _newton(func, guess: complex, tol: float, max_iter: int):
    w = complex(guess)
    for it in range(1, max_iter + 1):
        h = 1e-7 * abs(w)
        f = func(w)
        df = (func(w + h) - func(w - h)) / (2 * h)
        step = f / df
        w = w - step
        if abs(step) < tol * abs(w):
            return w, it
    raise NoConvergence(f"Newton did not converge from {guess!r}")


def find_mie_qnm(
    geom: SphereGeometry,
    l: int,
    pol: str,
    guess: complex,
    tol: float = 1e-13,
    max_iter: int = 100,
) -> MieMode:
    """Refine a resonance with Newton's method and build the mode record.

    The derivative of ``D`` is a central difference with step
    ``1e-7 |omega|``. Convergence is declared when the relative update
    falls below ``tol``.
    """

    def f(w):
        try:
            return mie_dispersion(geom, l, pol, w)
        except EvaluationAtMaterialPole as exc:
            raise RootAtMaterialPole(str(exc)) from exc

    # a few extra polishing steps beyond the tolerance are harmless
    w, it = _newton(f, guess, tol, max_iter)
    return _build_mode(geom, l, pol, w, it)


def _build_mode(geom, l, pol, w, iterations=0) -> MieMode:
    eps_in, mu_in, eps_out, mu_out, n_in, n_out = _indices(geom, w)
    k_in = complex(n_in * w / C0)
    k_out = complex(n_out * w / C0)
    j = sph_jn_table(l, k_in * geom.a)[l]
    h = sph_hn1_table(l, k_out * geom.a)[l]
    # u continuous at r = a with A_in = 1
    return MieMode(l, pol, complex(w), k_in, k_out, 1.0 + 0j, complex(j / h),
                   iterations=iterations)


def scan_mie_roots(
    geom: SphereGeometry,
    l: int,
    pol: str,
    lambda_target: float,
    n_re: int = 60,
    n_im: int = 40,
    re_span=(0.3, 1.2),
    im_span=(-0.5, 0.0),
) -> list[MieMode]:
    """Locate resonances in a rectangle around ``2 pi c / lambda_target``.

    ``|D|`` is tabulated on an ``n_re x n_im`` grid spanning
    ``Re omega in re_span * omega_target`` and
    ``Im omega in im_span * Re omega``. Interior local minima seed Newton;
    duplicates are merged. Results are sorted by ``Re omega``.
    """
    w0 = 2 * np.pi * C0 / lambda_target
    re = np.linspace(re_span[0], re_span[1], n_re) * w0
    frac = np.linspace(im_span[0], im_span[1], n_im + 1)[:-1]
    grid = re[:, None] * (1 + 1j * frac[None, :])
    vals = np.full(grid.shape, np.inf)
    for idx, w in np.ndenumerate(grid):
        try:
            vals[idx] = abs(mie_dispersion(geom, l, pol, w))
        except EvaluationAtMaterialPole:
            pass
    modes: list[MieMode] = []
    for i in range(1, n_re - 1):
        for k in range(1, n_im - 1):
            v = vals[i, k]
            if v <= vals[i - 1 : i + 2, k - 1 : k + 2].min():
                try:
                    m = find_mie_qnm(geom, l, pol, grid[i, k])
                except (NoConvergence, RootAtMaterialPole):
                    continue
                if m.omega_t.imag >= 0:
                    continue
                if all(abs(m.omega_t - o.omega_t) > 1e-9 * abs(o.omega_t) for o in modes):
                    modes.append(m)
    return sorted(modes, key=lambda m: m.omega_t.real)


def count_roots_in_contour(geom, l, pol, corners, n_per_side=400) -> float:
    """Argument-principle winding number of ``D`` around a rectangle.

    ``corners = (w_lo, w_hi)`` are opposite corners. Returns the (real)
    winding number; it is close to an integer when the contour is well
    resolved.
    """
    w_lo, w_hi = complex(corners[0]), complex(corners[1])
    path = [
        w_lo,
        complex(w_hi.real, w_lo.imag),
        w_hi,
        complex(w_lo.real, w_hi.imag),
        w_lo,
    ]
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        t = np.linspace(0.0, 1.0, n_per_side + 1)
        vals = np.array([mie_dispersion(geom, l, pol, a + (b - a) * s) for s in t])
        total += np.sum(np.angle(vals[1:] / vals[:-1]))
    return total / (2 * np.pi)


# --- radial profiles -------------------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Radial factors of an l = 1 mode at given radii.

    For TM: ``E_r = Er0 cos(theta)``, ``E_theta = Et0 sin(theta)``,
    ``H_phi = u sin(theta)`` (H in A/m, E in V/m for unit amplitude).
    For TE the roles of E and H swap: ``E_phi = u sin(theta)``,
    ``H_r = Er0 cos(theta)``, ``H_theta = Et0 sin(theta)``.
    ``d*`` entries are exact radial derivatives.
    """

    u: np.ndarray
    Er0: np.ndarray
    Et0: np.ndarray
    du: np.ndarray
    dEr0: np.ndarray
    dEt0: np.ndarray


def _inside(r, geom) -> np.ndarray:
    r = np.asarray(r)
    if np.iscomplexobj(r):
        return (np.abs(r.imag) == 0) & (r.real < geom.a)
    return r < geom.a


def radial_profile(mode: MieMode, geom: SphereGeometry, r, omega=None,
                   side: Optional[str] = None) -> RadialProfile:
    """Evaluate the l = 1 radial factors at radii ``r`` (may be complex).

    Parameters
    ----------
    omega : complex, optional
        Frequency used for the wavenumbers and prefactors. Defaults to
        ``mode.omega_t``; other values give the analytic continuation of
        the exterior field with frozen amplitudes (used to check that the
        exterior field depends on ``omega r`` only).
    side : {"in", "out"}, optional
        Force the interior or exterior expression regardless of ``r``.
    """
    if mode.l != 1:
        raise NotImplementedError("field evaluation is implemented for l = 1")
    w = mode.omega_t if omega is None else complex(omega)
    r = np.asarray(r, dtype=complex)
    shape = r.shape
    r = r.reshape(-1)
    if side is None:
        inside = _inside(r.real if np.all(r.imag == 0) else r, geom)
    else:
        inside = np.full(r.shape, side == "in")
    out = {k: np.empty(r.shape, dtype=complex) for k in ("u", "Er0", "Et0", "du", "dEr0", "dEt0")}
    for mask, med, amp, is_in in (
        (inside, geom.interior, mode.A_in, True),
        (~inside, geom.exterior, mode.A_out, False),
    ):
        if not np.any(mask):
            continue
        rr = r[mask]
        eps = complex(med.permittivity(w)) * EPS0
        mu = complex(med.permeability(w)) * MU0
        k = complex(np.sqrt(med.permittivity(w) * med.permeability(w))) * w / C0
        x = k * rr
        if is_in:
            f = sph_jn_table(1, x)[1]
            df = sph_bessel_derivatives(1, x)[0]
        else:
            f = sph_hn1_table(1, x)[1]
            df = sph_bessel_derivatives(1, x)[1]
        u = amp * f
        du = amp * k * df
        d2u = -(2 / rr) * du - (k * k - 2 / (rr * rr)) * u
        # TM: E from curl H / (-i w eps); TE: H from curl E / (i w mu)
        pref = 1j / (w * eps) if mode.pol == TM else -1j / (w * mu)
        Er0 = pref * 2 * u / rr
        Et0 = -pref * (u / rr + du)
        dEr0 = pref * 2 * (du / rr - u / (rr * rr))
        dEt0 = -pref * (du / rr - u / (rr * rr) + d2u)
        for key, val in (("u", u), ("Er0", Er0), ("Et0", Et0), ("du", du),
                         ("dEr0", dEr0), ("dEt0", dEt0)):
            out[key][mask] = val
    return RadialProfile(**{k: v.reshape(shape) for k, v in out.items()})


def _assemble(mode, prof, theta, radial_deriv=False):
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    if radial_deriv:
        u, Er0, Et0 = prof.du, prof.dEr0, prof.dEt0
    else:
        u, Er0, Et0 = prof.u, prof.Er0, prof.Et0
    zero = np.zeros(np.broadcast(u, c).shape, dtype=complex)
    a = np.stack([Er0 * c, Et0 * s, zero])
    b = np.stack([zero, zero, u * s + zero])
    # spherical components (r, theta, phi)
    return (a, b) if mode.pol == TM else (b, a)


def mie_field(mode: MieMode, geom: SphereGeometry, r, theta, phi=0.0):
    """Fields of an l = 1 mode in spherical components ``(r, theta, phi)``.

    Returns
    -------
    E, H : ndarray
        Complex arrays of shape ``(3,) + broadcast(r, theta).shape``.
        The m = 0 mode is independent of ``phi``.
    """
    prof = radial_profile(mode, geom, r)
    return _assemble(mode, prof, theta)


def mie_radial_derivative(mode: MieMode, geom: SphereGeometry, r, theta, phi=0.0):
    """Exact radial derivatives ``(dE/dr, dH/dr)`` of the spherical components.

    The unit vectors of spherical coordinates do not depend on ``r``, so
    the result is also ``(r . grad)`` of the field divided by ``r``.
    At ``r = a`` the one-sided value from the exterior is returned.
    """
    prof = radial_profile(mode, geom, r)
    return _assemble(mode, prof, theta, radial_deriv=True)


def continuity_residual(mode: MieMode, geom: SphereGeometry, n_theta: int = 20) -> float:
    """Max jump of tangential E and H across ``r = a`` over ``n_theta`` angles."""
    theta = np.linspace(0.05, np.pi - 0.05, n_theta)
    pin = radial_profile(mode, geom, np.array([geom.a]), side="in")
    pout = radial_profile(mode, geom, np.array([geom.a]), side="out")
    Ei, Hi = _assemble(mode, pin, theta)
    Eo, Ho = _assemble(mode, pout, theta)
    dE = np.max(np.abs(Ei[1:] - Eo[1:])) / np.max(np.abs(Ei))
    dH = np.max(np.abs(Hi[1:] - Ho[1:])) / np.max(np.abs(Hi))
    return float(max(dE, dH))


def spherical_to_cartesian(vec, theta, phi):
    """Rotate spherical components ``(v_r, v_theta, v_phi)`` to Cartesian."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    vr, vt, vp = vec
    return np.stack([
        vr * st * cp + vt * ct * cp - vp * sp,
        vr * st * sp + vt * ct * sp + vp * cp,
        vr * ct - vt * st,
    ])
