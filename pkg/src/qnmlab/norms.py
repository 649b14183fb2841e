"""Normalisation of sphere quasinormal modes.

Four engines are implemented for the l = 1 modes of :mod:`qnmlab.mie`:

``LK``
    Volume integral of ``E.(eps + d(omega eps)/d omega)E`` over a ball of
    radius ``R`` plus the surface term ``(i eps0 n c / omega) oint E^2 dS``.
    It depends on ``R`` and has no limit; it is evaluated and reported at
    finite ``R`` only.
``M_exact`` / ``M_fd``
    Volume integral of ``E.d(omega eps)E - H.d(omega mu)H`` plus the
    surface term built on ``(r . grad)`` of the fields, with exact radial
    derivatives or centred finite differences of step ``h``.
``PML``
    The same volume integral continued along the complex radial path
    ``r(s) = R + alpha (s - R)``, ``R <= s <= R + T``.
``PoleResponse``
    Residue of the field radiated by a spherical current shell driven at
    complex frequencies around the eigenfrequency.

Angular integrals are analytic (``int cos^2 dOmega = 4 pi / 3`` and
``int sin^2 dOmega = 8 pi / 3``); radial integrals use Gauss-Legendre
panels with a fixed number of nodes per local wavelength.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .constants import C0, EPS0, MU0
from .errors import (
    InvalidBackground,
    QnmLabError,
    RegularizationAngleTooSmall,
    SourceOnNodalPoint,
    TailNotConverged,
)
from .mie import TM, MieMode, SphereGeometry, radial_profile
from .specfun import gauss_legendre, sph_bessel_derivatives, sph_hn1_table, sph_jn_table

FOUR_PI_3 = 4.0 * np.pi / 3.0
EIGHT_PI_3 = 8.0 * np.pi / 3.0

METHODS = ("LK", "M_exact", "M_fd", "PML", "PoleResponse")


@dataclass(frozen=True)
class NormResult:
    """One norm evaluation.

    Attributes
    ----------
    method : str
        One of :data:`METHODS`.
    R : float
        Radius of the integration ball (m).
    value : complex
        Norm (SI units, J s / m^... for unit field amplitude).
    meta : dict
        Every tunable that influenced the value.
    """

    method: str
    R: float
    value: complex
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PmlMap:
    """Complex radial map ``r -> R + alpha (r - R)`` on ``[R, R + T]``."""

    R: float
    alpha: complex = 1 + 0.5j
    T: float = 4e-6

    def __post_init__(self):
        if not complex(self.alpha).imag > 0:
            raise ValueError("the PML slope must have a positive imaginary part")

    @property
    def tan_theta(self) -> float:
        a = complex(self.alpha)
        return a.imag / a.real

    def reveals(self, mode) -> bool:
        """Revelation predicate ``tan(theta) > 1 / (2 Q)``."""
        return self.tan_theta > 1.0 / (2.0 * mode.Q)


# --- quadrature helpers ----------------------------------------------------


def _local_wavelength(k: complex) -> float:
    return 2 * np.pi / abs(k)


def _panel_integral(func, a, b, wavelength, nodes_per_wavelength):
    """Integrate ``func`` on the straight segment ``[a, b]`` (complex allowed)."""
    length = abs(b - a)
    if length == 0:
        return 0.0
    n_panels = max(1, math.ceil(length / wavelength))
    rule = gauss_legendre(nodes_per_wavelength)
    edges = a + (b - a) * np.linspace(0.0, 1.0, n_panels + 1)
    total = 0.0 + 0.0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += rule.integrate(func, lo, hi)
    return total


def _weights(mode: MieMode, geom: SphereGeometry, medium):
    w = mode.omega_t
    deps = EPS0 * complex(medium.d_omega_eps(w))
    dmu = complex(medium.d_omega_mu(w))
    eps = EPS0 * complex(medium.permittivity(w))
    mu = MU0 * complex(medium.permeability(w))
    return deps, dmu, eps, mu


def _quadratic_parts(mode, prof):
    """Angle-integrated ``E.E`` and ``H.H`` (without r^2)."""
    vec = FOUR_PI_3 * prof.Er0**2 + EIGHT_PI_3 * prof.Et0**2
    scal = EIGHT_PI_3 * prof.u**2
    if mode.pol == TM:
        return vec, scal
    return scal, vec


def _density(mode, geom, medium, side, kind):
    deps, dmu, eps, mu = _weights(mode, geom, medium)

    def f(r):
        prof = radial_profile(mode, geom, r, side=side)
        ee, hh = _quadratic_parts(mode, prof)
        if kind == "spectral":
            val = deps * ee - dmu * hh
        elif kind == "lk":
            val = (eps + deps) * ee
        elif kind == "poynting":
            val = eps * ee + mu * hh
        else:  # pragma: no cover - internal misuse
            raise ValueError(kind)
        return r * r * val

    return f


def _ball_integral(mode, geom, R, kind, nodes_per_wavelength=32):
    if R <= geom.a:
        raise ValueError("the integration radius must exceed the sphere radius")
    w = mode.omega_t
    lam_in = _local_wavelength(mode.k_in)
    lam_out = _local_wavelength(mode.k_out)
    inner = _panel_integral(
        _density(mode, geom, geom.interior, "in", kind), 0.0, geom.a, lam_in,
        nodes_per_wavelength,
    )
    outer = _panel_integral(
        _density(mode, geom, geom.exterior, "out", kind), geom.a, R, lam_out,
        nodes_per_wavelength,
    )
    return inner + outer


def _require_uniform_background(geom):
    if getattr(geom.exterior, "is_dispersive", False):
        raise InvalidBackground("surface-term norms need a non-dispersive background")


# --- the engines -----------------------------------------------------------


def volume_term(mode: MieMode, geom: SphereGeometry, R: float,
                nodes_per_wavelength: int = 32) -> complex:
    """``int_ball(R) E.d(omega eps)E - H.d(omega mu)H dV``."""
    return complex(_ball_integral(mode, geom, R, "spectral", nodes_per_wavelength))


def _surface_lk(mode, geom, R):
    n = complex(geom.exterior.refractive_index(mode.omega_t))
    prof = radial_profile(mode, geom, np.array([R]), side="out")
    ee, _ = _quadratic_parts(mode, prof)
    return complex(1j * EPS0 * n * C0 / mode.omega_t * R * R * ee[0])


def lk_norm(mode: MieMode, geom: SphereGeometry, R: float,
            nodes_per_wavelength: int = 32) -> NormResult:
    """Volume-plus-surface norm with the plane-wave surface term.

    The value depends on ``R`` (it diverges exponentially); no limit is
    attempted.
    """
    _require_uniform_background(geom)
    vol = _ball_integral(mode, geom, R, "lk", nodes_per_wavelength)
    value = complex(vol) + _surface_lk(mode, geom, R)
    return NormResult("LK", float(R), value,
                      {"nodes_per_wavelength": nodes_per_wavelength})


def surface_term_m(mode: MieMode, geom: SphereGeometry, R: float,
                   scheme: str = "exact", h: Optional[float] = None) -> complex:
    """Surface term ``(i/omega) oint [E x (r.grad)H - (r.grad)E x H].dS``.

    With ``scheme="fd"`` the radial derivatives are centred differences of
    step ``h`` (default ``1e-4 a``).
    """
    _require_uniform_background(geom)
    if scheme == "exact":
        prof = radial_profile(mode, geom, np.array([R]), side="out")
        du, dEt0 = prof.du[0], prof.dEt0[0]
    elif scheme == "fd":
        h = 1e-4 * geom.a if h is None else h
        p = radial_profile(mode, geom, np.array([R - h, R, R + h]), side="out")
        prof = radial_profile(mode, geom, np.array([R]), side="out")
        du = (p.u[2] - p.u[0]) / (2 * h)
        dEt0 = (p.Et0[2] - p.Et0[0]) / (2 * h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    u, Et0 = prof.u[0], prof.Et0[0]
    bracket = Et0 * du - dEt0 * u
    return complex(1j / mode.omega_t * R**3 * EIGHT_PI_3 * bracket)


def m_norm(mode: MieMode, geom: SphereGeometry, R: float, scheme: str = "exact",
           h: Optional[float] = None, nodes_per_wavelength: int = 32) -> NormResult:
    """Volume integral plus the ``(r . grad)`` surface term.

    Parameters
    ----------
    scheme : {"exact", "fd"}
        Exact radial derivatives, or centred differences of step ``h``.
    h : float, optional
        Finite-difference step (default ``1e-4 a``).
    """
    _require_uniform_background(geom)
    vol = volume_term(mode, geom, R, nodes_per_wavelength)
    surf = surface_term_m(mode, geom, R, scheme, h)
    meta = {"scheme": scheme, "nodes_per_wavelength": nodes_per_wavelength}
    if scheme == "fd":
        meta["h"] = 1e-4 * geom.a if h is None else h
    method = "M_exact" if scheme == "exact" else "M_fd"
    return NormResult(method, float(R), vol + surf, meta)


def _check_revelation(mode, pmap: PmlMap, geom):
    n = complex(geom.exterior.refractive_index(mode.omega_t))
    # decay of exp(i k r) along the path requires Im(k alpha) > 0
    if not pmap.reveals(mode) or (mode.k_out * pmap.alpha).imag <= 0:
        raise RegularizationAngleTooSmall(
            f"tan(theta)={pmap.tan_theta:.4g} does not exceed 1/(2Q)={1/(2*mode.Q):.4g}"
        )
    return n


def pml_integral(mode: MieMode, geom: SphereGeometry, pmap: PmlMap,
                 nodes_per_wavelength: int = 32, tail_tol: float = 1e-12,
                 max_doublings: int = 3, _kind: str = "spectral") -> tuple[complex, dict]:
    """Volume integral over the complex-mapped shell ``[R, R + T]``.

    Returns the integral and a metadata dict (the thickness actually used).
    The tail beyond ``T`` is estimated from the end-point integrand and
    its exponential decay rate; ``T`` is doubled up to ``max_doublings``
    times before :class:`TailNotConverged` is raised.
    """
    _check_revelation(mode, pmap, geom)
    alpha = complex(pmap.alpha)
    dens = _density(mode, geom, geom.exterior, "out", _kind)
    lam = _local_wavelength(mode.k_out * alpha)
    decay = 2 * (mode.k_out * alpha).imag
    T = pmap.T
    for attempt in range(max_doublings + 1):
        a = complex(pmap.R)
        b = pmap.R + alpha * T
        # integrating along the straight segment [R, R + alpha T] in the
        # complex r plane builds the Jacobian alpha into dr
        value = _panel_integral(dens, a, b, lam, nodes_per_wavelength)
        end = abs(dens(np.array([b]))[0]) / decay
        if end <= tail_tol * abs(value):
            return complex(value), {"alpha": alpha, "T": T, "tail": end,
                                    "nodes_per_wavelength": nodes_per_wavelength}
        T *= 2
    raise TailNotConverged(f"tail {end:.3e} vs value {abs(value):.3e}")


def pml_norm(mode: MieMode, geom: SphereGeometry, pmap: PmlMap,
             nodes_per_wavelength: int = 32) -> NormResult:
    """Volume term over the ball of radius ``pmap.R`` plus the PML integral."""
    vol = volume_term(mode, geom, pmap.R, nodes_per_wavelength)
    ipml, meta = pml_integral(mode, geom, pmap, nodes_per_wavelength)
    return NormResult("PML", float(pmap.R), vol + ipml, meta)


def m_pml_surface_equiv(mode: MieMode, geom: SphereGeometry, R: float,
                        pmap: Optional[PmlMap] = None, surface: str = "M"):
    """Compare the PML shell integral with a surface term on the sphere ``R``.

    Returns ``(I_PML, I_surf, rel_diff)`` with ``rel_diff`` measured
    against ``|I_PML|``. ``surface="LK"`` substitutes the plane-wave
    surface term combined with the LK volume correction (a deliberately
    wrong pairing used as a negative control).
    """
    _require_uniform_background(geom)
    pmap = PmlMap(R) if pmap is None else PmlMap(R, pmap.alpha, pmap.T)
    ipml, _ = pml_integral(mode, geom, pmap)
    if surface == "M":
        isurf = surface_term_m(mode, geom, R)
    elif surface == "LK":
        # LK = V_lk + S_lk; the equivalent "surface" is LK - V_spectral
        isurf = lk_norm(mode, geom, R).value - volume_term(mode, geom, R)
    else:
        raise ValueError(surface)
    return ipml, isurf, abs(ipml - isurf) / abs(ipml)


# --- identities ------------------------------------------------------------


def poynting_flux(mode: MieMode, geom: SphereGeometry, R: float) -> complex:
    """``oint E x H . u dS`` on the sphere of radius ``R`` (unconjugated)."""
    prof = radial_profile(mode, geom, np.array([R]), side="out" if R >= geom.a else "in")
    sign = 1.0 if mode.pol == TM else -1.0
    return complex(sign * R * R * EIGHT_PI_3 * prof.Et0[0] * prof.u[0])


def poynting_identity_residual(mode: MieMode, geom: SphereGeometry, R: float,
                               nodes_per_wavelength: int = 32) -> float:
    """Relative residual of ``oint E x H.dS = i omega int(E.eps E + H.mu H) dV``."""
    flux = poynting_flux(mode, geom, R)
    vol = _ball_integral(mode, geom, R, "poynting", nodes_per_wavelength)
    rhs = 1j * mode.omega_t * vol
    return float(abs(flux - rhs) / abs(flux))


def lk_identity_check(mode: MieMode, geom: SphereGeometry, R: float,
                      nodes_per_wavelength: int = 32):
    """Far-field identity ``I_surf^LK + int(E.eps E + H.mu H) dV ~ 0``.

    Returns ``(residual, relative)`` where ``relative`` divides the
    residual by ``|I_surf^LK|``.
    """
    surf = _surface_lk(mode, geom, R)
    vol = complex(_ball_integral(mode, geom, R, "poynting", nodes_per_wavelength))
    res = surf + vol
    return res, abs(res) / abs(surf)


# --- pole response ---------------------------------------------------------


def _shell_response(geom: SphereGeometry, omega: complex, r_s: float, J0: complex,
                    r_eval: np.ndarray) -> np.ndarray:
    """``H_phi / sin(theta)`` radiated by a TM l = 1 current shell.

    The source is ``J = J0 delta(r - r_s) sin(theta) theta_hat``. It
    imposes ``[u] = -J0`` and ``[(r u)'] = 0`` at ``r_s``; at ``r = a``
    ``u`` and ``(r u)' / eps`` are continuous.
    """
    eps_in = complex(geom.interior.permittivity(omega))
    eps_out = complex(geom.exterior.permittivity(omega))
    n_in = np.sqrt(eps_in * complex(geom.interior.permeability(omega)))
    n_out = np.sqrt(eps_out * complex(geom.exterior.permeability(omega)))
    k_in, k_out = n_in * omega / C0, n_out * omega / C0
    a = geom.a

    def basis(k, r, kind):
        x = np.asarray(k * r, dtype=complex)
        if kind == "j":
            f = sph_jn_table(1, x)[1]
            df = sph_bessel_derivatives(1, x)[0]
        else:
            f = sph_hn1_table(1, x)[1]
            df = sph_bessel_derivatives(1, x)[1]
        # value and (r u)' = u + r u'
        return f, f + r * k * df

    if r_s > a:
        # regions: [0,a] A j(k_in); [a,r_s] B j(k_o) + C h(k_o); [r_s,inf) D h(k_o)
        ja, dja = basis(k_in, a, "j")
        jo, djo = basis(k_out, a, "j")
        ho, dho = basis(k_out, a, "h")
        js, djs = basis(k_out, r_s, "j")
        hs, dhs = basis(k_out, r_s, "h")
        M = np.array([
            [ja, -jo, -ho, 0],
            [dja / eps_in, -djo / eps_out, -dho / eps_out, 0],
            [0, -js, -hs, hs],
            [0, -djs, -dhs, dhs],
        ], dtype=complex)
        rhs = np.array([0, 0, -J0, 0], dtype=complex)
        A, B, C, D = np.linalg.solve(M, rhs)
        r = np.asarray(r_eval, dtype=float)
        out = np.empty(r.shape, dtype=complex)
        m1, m3 = r < a, r >= r_s
        m2 = ~m1 & ~m3
        out[m1] = A * basis(k_in, r[m1], "j")[0]
        out[m2] = B * basis(k_out, r[m2], "j")[0] + C * basis(k_out, r[m2], "h")[0]
        out[m3] = D * basis(k_out, r[m3], "h")[0]
        return out
    # source inside the sphere
    js, djs = basis(k_in, r_s, "j")
    hs, dhs = basis(k_in, r_s, "h")
    ja, dja = basis(k_in, a, "j")
    ha, dha = basis(k_in, a, "h")
    hoa, dhoa = basis(k_out, a, "h")
    M = np.array([
        [-js, js, hs, 0],
        [-djs, djs, dhs, 0],
        [0, ja, ha, -hoa],
        [0, dja / eps_in, dha / eps_in, -dhoa / eps_out],
    ], dtype=complex)
    rhs = np.array([-J0, 0, 0, 0], dtype=complex)
    A, B, C, D = np.linalg.solve(M, rhs)
    r = np.asarray(r_eval, dtype=float)
    out = np.empty(r.shape, dtype=complex)
    m1, m3 = r < r_s, r >= a
    m2 = ~m1 & ~m3
    out[m1] = A * basis(k_in, r[m1], "j")[0]
    out[m2] = B * basis(k_in, r[m2], "j")[0] + C * basis(k_in, r[m2], "h")[0]
    out[m3] = D * basis(k_out, r[m3], "h")[0]
    return out


def residue_gamma_sphere(mode: MieMode, geom: SphereGeometry, r_s: float,
                         J0: complex = 1.0, rel_delta: float = 1e-6,
                         r_eval: Optional[float] = None) -> complex:
    """Residue coefficient ``gamma`` of the shell-driven response.

    ``lim (omega - omega_m) u_s(r) = gamma u_m(r)`` is estimated by
    averaging ``delta u_s(r, omega_m + delta)`` over
    ``delta in {d, i d, -d, -i d}`` with ``|d| = rel_delta |omega_m|``;
    the first three Taylor corrections cancel in the average.
    """
    if mode.pol != TM or mode.l != 1:
        raise NotImplementedError("pole response is implemented for l = 1 TM")
    r_eval = 1.5 * geom.a if r_eval is None else r_eval
    if abs(r_eval - r_s) < 1e-3 * geom.a:
        r_eval = r_s + 0.25 * geom.a
    d0 = rel_delta * abs(mode.omega_t)
    acc = 0.0 + 0.0j
    for d in (d0, 1j * d0, -d0, -1j * d0):
        acc += d * _shell_response(geom, mode.omega_t + d, r_s, J0, np.array([r_eval]))[0]
    gu = acc / 4
    um = radial_profile(mode, geom, np.array([r_eval]))
    return complex(gu / um.u[0])


def pole_response_norm_sphere(mode: MieMode, geom: SphereGeometry, r_s: float,
                              J0: complex = 1.0, rel_delta: float = 1e-6) -> NormResult:
    """Norm from the residue of the field radiated by a current shell at ``r_s``."""
    prof = radial_profile(mode, geom, np.array([r_s]))
    full = radial_profile(mode, geom, np.linspace(0.05, 3.0, 60) * geom.a)
    if abs(prof.Et0[0]) < 1e-8 * np.max(np.abs(full.Et0)):
        raise SourceOnNodalPoint(f"E_theta of the mode vanishes at r_s={r_s}")
    gamma = residue_gamma_sphere(mode, geom, r_s, J0, rel_delta)
    overlap = J0 * r_s * r_s * EIGHT_PI_3 * prof.Et0[0]
    value = -1j * overlap / gamma
    return NormResult("PoleResponse", float(r_s), complex(value),
                      {"r_s": r_s, "J0": J0, "rel_delta": rel_delta, "gamma": gamma})


def gamma_from_norm(mode: MieMode, geom: SphereGeometry, r_s: float, norm: complex,
                    J0: complex = 1.0) -> complex:
    """``gamma = -i int J.E_m dV / N`` for the current shell at ``r_s``."""
    prof = radial_profile(mode, geom, np.array([r_s]))
    return complex(-1j * J0 * r_s * r_s * EIGHT_PI_3 * prof.Et0[0] / norm)


# --- orthogonality ---------------------------------------------------------


def cross_pairing(mode_a: MieMode, mode_b: MieMode, geom: SphereGeometry,
                  pmap: PmlMap, nodes_per_wavelength: int = 48,
                  tail_tol: float = 1e-12, max_doublings: int = 3) -> complex:
    """``int (E_a.eps E_b - H_a.mu H_b) dV`` over the ball and the PML shell.

    Only defined for non-dispersive spheres (the bilinear form is then
    frequency independent). Both modes must be l = 1 and of the same
    polarisation; both must be revealed by ``pmap``.
    """
    for m in (mode_a, mode_b):
        _check_revelation(m, pmap, geom)
    if getattr(geom.interior, "is_dispersive", False):
        raise ValueError("cross pairing needs non-dispersive materials")
    if mode_a.pol != mode_b.pol:
        return 0.0 + 0.0j

    def dens(medium, side):
        eps = EPS0 * complex(medium.permittivity(0.0))
        mu = MU0 * complex(medium.permeability(0.0))

        def f(r):
            pa = radial_profile(mode_a, geom, r, side=side)
            pb = radial_profile(mode_b, geom, r, side=side)
            ev = FOUR_PI_3 * pa.Er0 * pb.Er0 + EIGHT_PI_3 * pa.Et0 * pb.Et0
            sc = EIGHT_PI_3 * pa.u * pb.u
            ee, hh = (ev, sc) if mode_a.pol == TM else (sc, ev)
            return r * r * (eps * ee - mu * hh)

        return f

    kmax_in = max(abs(mode_a.k_in), abs(mode_b.k_in))
    kmax_out = max(abs(mode_a.k_out), abs(mode_b.k_out))
    alpha = complex(pmap.alpha)
    total = _panel_integral(dens(geom.interior, "in"), 0.0, geom.a,
                            2 * np.pi / kmax_in, nodes_per_wavelength)
    total += _panel_integral(dens(geom.exterior, "out"), geom.a, pmap.R,
                             2 * np.pi / kmax_out, nodes_per_wavelength)
    shell = dens(geom.exterior, "out")
    # the product decays at the sum of the two rates; extend T as pml_integral does
    decay = 2 * min((mode_a.k_out * alpha).imag, (mode_b.k_out * alpha).imag)
    T = pmap.T
    for _ in range(max_doublings + 1):
        b = pmap.R + alpha * T
        tail_value = _panel_integral(shell, complex(pmap.R), b,
                                     2 * np.pi / (kmax_out * abs(alpha)), nodes_per_wavelength)
        end = abs(shell(np.array([b]))[0]) / decay
        if end <= tail_tol * abs(total + tail_value):
            return complex(total + tail_value)
        T *= 2
    raise TailNotConverged(f"tail {end:.3e} vs value {abs(total + tail_value):.3e}")


# --- sweeps ----------------------------------------------------------------


def relative_error(value: complex, reference: complex, part: str = "real") -> float:
    """Signed relative error on the real part (default) or modulus error."""
    if part == "real":
        return float((value - reference).real / reference.real)
    return float(abs(value - reference) / abs(reference))


def _one(mode, geom, R, method, pml_alpha, pml_T, fd_h, r_s):
    if method == "LK":
        return lk_norm(mode, geom, R)
    if method == "M_exact":
        return m_norm(mode, geom, R, "exact")
    if method == "M_fd":
        return m_norm(mode, geom, R, "fd", fd_h)
    if method == "PML":
        return pml_norm(mode, geom, PmlMap(R, pml_alpha, pml_T))
    if method == "PoleResponse":
        return pole_response_norm_sphere(mode, geom, r_s if r_s is not None else R)
    raise ValueError(f"unknown method {method!r}")


def norm_sweep(mode: MieMode, geom: SphereGeometry, R_list: Sequence[float],
               methods: Iterable[str], pml_alpha: complex = 1 + 0.5j,
               pml_T: float = 4e-6, fd_h: Optional[float] = None,
               r_s: Optional[float] = None, threads: int = 1) -> list[NormResult]:
    """Evaluate every ``(R, method)`` pair.

    Results come back in ``R``-major, method-minor order regardless of
    ``threads``. A failing point yields a result with ``value = nan`` and
    the error name in ``meta["error"]``; the sweep continues.
    """
    methods = list(methods)
    jobs = [(R, m) for R in R_list for m in methods]
    if not jobs:
        return []

    def run(job):
        R, m = job
        try:
            return _one(mode, geom, R, m, pml_alpha, pml_T, fd_h, r_s)
        except (QnmLabError, ValueError, ArithmeticError) as exc:
            return NormResult(m, float(R), complex("nan+nanj"),
                              {"error": type(exc).__name__, "message": str(exc)})

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]
