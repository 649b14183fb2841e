import numpy as np
import pytest

from qnmlab.constants import C0
from qnmlab.errors import InvalidBackground, NoConvergence, RootAtMaterialPole
from qnmlab.materials import Drude, NonDispersive
from qnmlab.mie import (
    TE,
    TM,
    SphereGeometry,
    continuity_residual,
    count_roots_in_contour,
    find_mie_qnm,
    mie_dispersion,
    mie_field,
    mie_radial_derivative,
    radial_profile,
    scan_mie_roots,
    spherical_to_cartesian,
)


def _local_scale(geom, mode):
    w = mode.omega_t
    h = 1e-3 * abs(w)
    return max(abs(mie_dispersion(geom, mode.l, mode.pol, w + h * d)) for d in (1, 1j, -1, -1j))


class TestRoots:
    def test_silver_calibration(self, silver):
        geom, mode = silver
        lam = mode.wavelength
        assert abs(lam - (390e-9 + 32e-9j)) < 1e-3 * abs(lam)
        assert mode.omega_t.imag < 0 and mode.Q == pytest.approx(6.09, rel=1e-2)

    @pytest.mark.parametrize("which", ["silver", "dielectric"])
    def test_root_residual_and_continuity(self, which, request):
        geom, mode = request.getfixturevalue(which)
        assert abs(mie_dispersion(geom, 1, TM, mode.omega_t)) < 1e-12 * _local_scale(geom, mode)
        assert continuity_residual(mode, geom) < 1e-10

    def test_dielectric_lowest_root_against_contour_count(self, dielectric, dielectric_second):
        geom, mode = dielectric
        w1, w2 = mode.omega_t, dielectric_second.omega_t
        # exactly one root in a box around the lowest one, none below it
        box = (0.3 * w1.real - 1.2j * abs(w1.imag), 1.5 * w1.real - 0.2j * abs(w1.imag))
        assert round(count_roots_in_contour(geom, 1, TM, box)) == 1
        low = (0.05 * w1.real - 1.2j * w1.real, 0.3 * w1.real - 1e-3j * w1.real)
        assert round(count_roots_in_contour(geom, 1, TM, low)) == 0
        assert w2.real > w1.real
        # the frozen root reached from a nearby guess to 1e-13
        again = find_mie_qnm(geom, 1, TM, w1 * (1 + 1e-3 - 2e-3j))
        assert abs(again.omega_t - w1) < 1e-13 * abs(w1)

    def test_scan_finds_the_dielectric_roots(self, dielectric, dielectric_second):
        geom, mode = dielectric
        found = scan_mie_roots(geom, 1, TM, 3000e-9, im_span=(-0.8, 0.0))
        assert any(abs(m.omega_t - mode.omega_t) < 1e-10 * abs(mode.omega_t) for m in found)
        found = scan_mie_roots(geom, 1, TM, 1500e-9)
        w2 = dielectric_second.omega_t
        assert any(abs(m.omega_t - w2) < 1e-10 * abs(w2) for m in found)

    @pytest.mark.parametrize("which", ["silver", "dielectric"])
    def test_hermitian_twin(self, which, request):
        geom, mode = request.getfixturevalue(which)
        twin = -np.conj(mode.omega_t)
        assert abs(mie_dispersion(geom, 1, TM, twin)) < 1e-12 * _local_scale(geom, mode)
        found = find_mie_qnm(geom, 1, TM, twin * (1 + 1e-4))
        assert abs(found.omega_t - twin) < 1e-12 * abs(twin)

    def test_te_smoke(self):
        geom = SphereGeometry(500e-9, NonDispersive(4.0))
        modes = scan_mie_roots(geom, 1, TE, 1500e-9)
        assert modes
        for m in modes:
            assert m.pol == TE and m.omega_t.imag < 0
            assert continuity_residual(m, geom) < 1e-10

    def test_no_convergence(self, dielectric):
        geom, _ = dielectric
        with pytest.raises(NoConvergence):
            find_mie_qnm(geom, 1, TM, 1e15 - 1e14j, max_iter=1)

    def test_root_at_material_pole(self):
        geom = SphereGeometry(40e-9, Drude(1.0, 1e16, 0.0))
        with pytest.raises(RootAtMaterialPole):
            find_mie_qnm(geom, 1, TM, 0.0)

    def test_invalid_geometry(self):
        with pytest.raises(InvalidBackground):
            SphereGeometry(1e-7, NonDispersive(4.0), Drude(1.0, 1e16, 1e14))
        with pytest.raises(ValueError):
            SphereGeometry(0.0, NonDispersive(4.0))
        with pytest.raises(ValueError):
            mie_dispersion(SphereGeometry(1e-7, NonDispersive(4.0)), 1, "TEM", 1e15)


class TestFields:
    @pytest.mark.parametrize("which", ["silver", "dielectric"])
    def test_radial_derivative_matches_finite_difference(self, which, request):
        geom, mode = request.getfixturevalue(which)
        theta = np.array([0.3, 1.1, 2.0])
        for r in (0.5 * geom.a, 1.7 * geom.a, 4.0 * geom.a):
            h = 1e-6 * geom.a
            Ep, Hp = mie_field(mode, geom, r + h, theta)
            Em, Hm = mie_field(mode, geom, r - h, theta)
            dE, dH = mie_radial_derivative(mode, geom, r, theta)
            for d, p, m in ((dE, Ep, Em), (dH, Hp, Hm)):
                fd = (p - m) / (2 * h)
                assert np.max(np.abs(d - fd)) < 1e-7 * np.max(np.abs(d))

    @pytest.mark.parametrize("which", ["silver", "dielectric"])
    def test_divergence_free(self, which, request):
        geom, mode = request.getfixturevalue(which)
        # div(eps E) = cos(theta) [ (r^2 Er0)'/r^2 + 2 Et0 / r ] for the l = 1 mode
        for r in (0.6 * geom.a, 2.5 * geom.a):
            h = 1e-5 * geom.a
            p = radial_profile(mode, geom, np.array([r - h, r, r + h]))
            d_r2E = (p.Er0[2] * (r + h) ** 2 - p.Er0[0] * (r - h) ** 2) / (2 * h)
            div = d_r2E / r**2 + 2 * p.Et0[1] / r
            scale = abs(p.Er0[1]) / r + abs(p.Et0[1]) / r
            assert abs(div) < 1e-6 * scale

    def test_exterior_depends_on_omega_r(self, silver):
        # r d/dr of the exterior field equals omega d/domega with frozen amplitudes
        geom, mode = silver
        r = 2 * geom.a
        w = mode.omega_t
        dw = 1e-6 * abs(w)
        up = radial_profile(mode, geom, np.array([r]), omega=w + dw, side="out")
        um = radial_profile(mode, geom, np.array([r]), omega=w - dw, side="out")
        p0 = radial_profile(mode, geom, np.array([r]), side="out")
        lhs = r * p0.du[0]
        rhs = w * (up.u[0] - um.u[0]) / (2 * dw)
        assert abs(lhs - rhs) < 1e-8 * abs(lhs)
        # so is r omega E_theta
        lhs = r * w * (p0.Et0[0] + r * p0.dEt0[0])
        rhs = w * r * ((w + dw) * up.Et0[0] - (w - dw) * um.Et0[0]) / (2 * dw)
        assert abs(lhs - rhs) < 1e-8 * abs(lhs)

    def test_far_field_divergence(self, dielectric):
        geom, mode = dielectric
        r = np.array([50e-6, 60e-6])
        H = np.abs(radial_profile(mode, geom, r).u)
        growth = np.log(H[1] * r[1] / (H[0] * r[0])) / (r[1] - r[0])
        assert growth == pytest.approx(abs(mode.omega_t.imag) / C0, rel=1e-3)

    def test_parity_on_axis(self, silver):
        geom, mode = silver
        E, H = mie_field(mode, geom, 1.5 * geom.a, np.array([0.0, np.pi]))
        dE, _ = mie_radial_derivative(mode, geom, 1.5 * geom.a, np.array([0.0, np.pi]))
        # only the radial component survives on the axis, odd under theta -> pi - theta
        assert np.all(np.abs(E[1:]) < 1e-12 * np.abs(E[0, 0]))
        assert abs(E[0, 0] + E[0, 1]) < 1e-12 * abs(E[0, 0])
        assert abs(dE[0, 0] + dE[0, 1]) < 1e-12 * abs(dE[0, 0])
        assert np.all(np.abs(H) < 1e-12 * np.abs(E[0, 0]) / 376.73)

    def test_complex_radius_continuation(self, dielectric):
        geom, mode = dielectric
        r = 2 * geom.a + 1e-9j
        p = radial_profile(mode, geom, np.array([r]))
        q = radial_profile(mode, geom, np.array([2 * geom.a]))
        assert abs(p.u[0] - (q.u[0] + 1e-9j * q.du[0])) < 1e-5 * abs(q.u[0])

    def test_cartesian_rotation_is_orthogonal(self):
        v = np.array([1.0 + 1j, -0.5, 2.0j])
        for theta, phi in ((0.3, 0.1), (2.0, 4.0)):
            c = spherical_to_cartesian(v, theta, phi)
            assert abs(np.linalg.norm(c) - np.linalg.norm(v)) < 1e-15
