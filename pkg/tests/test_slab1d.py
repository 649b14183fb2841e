import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnmlab.constants import C0, EPS0, Z0
from qnmlab.errors import OutsideCompletenessRegion, RegularizationAngleTooSmall, SourceOnNodalPoint
from qnmlab.slab1d import (
    SlabGeometry,
    dispersion_residual,
    slab_green_expansion,
    slab_green_tmm,
    slab_mode,
    slab_norm_energy_form,
    slab_norm_exact,
    slab_norm_quadrature,
    slab_pairing,
    slab_pole_response_norm,
    slab_qnm_field,
    slab_qnm_frequencies,
    slab_quality_factor,
    tmm_determinant,
    truncated_energy_integral,
)

GEOM = SlabGeometry(2.0, 600e-9)


def test_geometry_validation():
    with pytest.raises(ValueError):
        SlabGeometry(1.0, 1e-6)
    with pytest.raises(ValueError):
        SlabGeometry(2.0, 0.0)


class TestFrequencies:
    def test_closed_form_m3(self):
        # n = 2: ln 3 loss exponent
        w = slab_mode(GEOM, 3).omega_t
        expected = C0 / (2.0 * 600e-9) * (3 * math.pi - 1j * math.log(3.0))
        assert abs(w - expected) < 1e-14 * abs(expected)

    def test_all_listed_modes_are_tmm_roots(self):
        modes = slab_qnm_frequencies(GEOM, 20)
        assert [m.m for m in modes] == list(range(1, 21))
        for m in modes:
            assert abs(tmm_determinant(GEOM, m.omega_t)) < 1e-12
            assert m.omega_t.imag < 0
        # a point between two roots is not one
        mid = 0.5 * (modes[3].omega_t + modes[4].omega_t)
        assert abs(tmm_determinant(GEOM, mid)) > 1e-2
        with pytest.raises(ValueError):
            slab_qnm_frequencies(GEOM, 0)

    def test_quality_factor(self):
        for m in (1, 4, 11):
            assert slab_mode(GEOM, m).Q == pytest.approx(slab_quality_factor(GEOM, m), rel=1e-13)
        # Q grows linearly with m and the damping is the same for every mode
        ims = {round(slab_mode(GEOM, m).omega_t.imag, 3) for m in range(1, 8)}
        assert len(ims) == 1

    @settings(max_examples=30, deadline=None)
    @given(n=st.floats(1.05, 6.0), m=st.integers(-15, 15))
    def test_dispersion_holds_for_all_indices(self, n, m):
        geom = SlabGeometry(n, 1e-6)
        mode = slab_mode(geom, m)
        assert dispersion_residual(geom, mode.omega_t) < 1e-11
        twin = slab_mode(geom, -m).omega_t
        assert abs(twin + np.conj(mode.omega_t)) < 1e-13 * abs(mode.omega_t)

    def test_damped_mode_on_imaginary_axis(self):
        w0 = slab_mode(GEOM, 0).omega_t
        assert w0.real == 0 and w0.imag < 0


class TestFields:
    @pytest.mark.parametrize("m", [1, 2, 5])
    def test_continuity_at_interfaces(self, m):
        mode = slab_mode(GEOM, m)
        eps = 1e-15
        for edge in (-GEOM.L / 2, GEOM.L / 2):
            Ei, Hi = slab_qnm_field(mode, GEOM, edge - math.copysign(eps, edge))
            Eo, Ho = slab_qnm_field(mode, GEOM, edge + math.copysign(eps, edge))
            assert abs(Ei - Eo) < 1e-7 * abs(Ei)
            assert abs(Hi - Ho) < 1e-7 * abs(Hi)

    def test_parity(self):
        x = np.array([0.1, 0.25, 0.9]) * GEOM.L
        even, odd = slab_mode(GEOM, 2), slab_mode(GEOM, 3)
        Ep, Hp = slab_qnm_field(even, GEOM, x)
        Em, Hm = slab_qnm_field(even, GEOM, -x)
        np.testing.assert_allclose(Ep, Em, rtol=1e-13)
        np.testing.assert_allclose(Hp, -Hm, rtol=1e-13)
        assert abs(slab_qnm_field(even, GEOM, 0.0)[1]) == 0.0
        Ep, _ = slab_qnm_field(odd, GEOM, x)
        Em, _ = slab_qnm_field(odd, GEOM, -x)
        np.testing.assert_allclose(Ep, -Em, rtol=1e-13)

    def test_exterior_grows(self):
        mode = slab_mode(GEOM, 2)
        x1, x2 = 3e-6, 5e-6
        E1, _ = slab_qnm_field(mode, GEOM, x1)
        E2, _ = slab_qnm_field(mode, GEOM, x2)
        rate = math.log(abs(E2) / abs(E1)) / (x2 - x1)
        assert rate == pytest.approx(abs(mode.omega_t.imag) / C0, rel=1e-12)

    def test_faraday_relation(self):
        mode = slab_mode(GEOM, 3)
        x, h = 0.2 * GEOM.L, 1e-12
        Ep, _ = slab_qnm_field(mode, GEOM, x + h)
        Em, _ = slab_qnm_field(mode, GEOM, x - h)
        _, H = slab_qnm_field(mode, GEOM, x)
        dE = (Ep - Em) / (2 * h)
        assert abs(dE - 1j * mode.omega_t * 4e-7 * math.pi * H) < 1e-5 * abs(dE)


class TestNorms:
    @pytest.mark.parametrize("m", [1, 2, 3, 7])
    def test_exact_matches_quadrature_and_energy_form(self, m):
        mode = slab_mode(GEOM, m)
        exact = slab_norm_exact(mode, GEOM)
        assert exact == pytest.approx(EPS0 * 4.0 * GEOM.L, rel=1e-15)
        quad = slab_norm_quadrature(mode, GEOM)
        assert abs(quad - exact) < 1e-10 * abs(exact)
        energy = slab_norm_energy_form(mode, GEOM)
        assert abs(energy - exact) < 1e-12 * abs(exact)

    def test_slope_invariance(self):
        mode = slab_mode(GEOM, 2)
        a = slab_norm_quadrature(mode, GEOM, 1 + 2j)
        b = slab_norm_quadrature(mode, GEOM, 0.5 + 0.3j)
        assert abs(a - b) < 1e-10 * abs(a)

    def test_path_must_reveal(self):
        mode = slab_mode(GEOM, 1)  # Q = 1.43, needs tan > 0.35
        with pytest.raises(RegularizationAngleTooSmall):
            slab_norm_exact(mode, GEOM, 1 + 0.3j)
        slab_norm_exact(mode, GEOM, 1 + 0.4j)
        with pytest.raises(RegularizationAngleTooSmall):
            slab_norm_exact(slab_mode(GEOM, -2), GEOM)

    def test_twin_norm_is_conjugate(self):
        a = slab_norm_energy_form(slab_mode(GEOM, 4), GEOM)
        b = slab_norm_energy_form(slab_mode(GEOM, -4), GEOM)
        assert abs(b - np.conj(a)) < 1e-12 * abs(a)

    def test_biorthogonality(self):
        modes = [slab_mode(GEOM, m) for m in (2, 3, 4, 6)]
        for i, a in enumerate(modes):
            for b in modes[i + 1:]:
                cross = slab_pairing(a, b, GEOM)
                ref = math.sqrt(abs(slab_norm_exact(a, GEOM) * slab_norm_exact(b, GEOM)))
                assert abs(cross) < 1e-8 * ref

    def test_truncated_integral_diverges(self):
        mode = slab_mode(GEOM, 3)
        exact = slab_norm_exact(mode, GEOM)
        lam = 2 * math.pi * C0 / mode.omega_t.real
        R = GEOM.L / 2 + np.linspace(0.5, 8, 120) * lam
        err = np.array([abs(truncated_energy_integral(mode, GEOM, r) - exact) for r in R])
        # envelope exp(2 |Im omega| R / c): compare the maxima of two windows
        rate = 2 * abs(mode.omega_t.imag) / C0
        w1, w2 = err[:40].max(), err[-40:].max()
        r1, r2 = R[:40][err[:40].argmax()], R[-40:][err[-40:].argmax()]
        assert math.log(w2 / w1) / (r2 - r1) == pytest.approx(rate, rel=0.05)
        with pytest.raises(ValueError):
            truncated_energy_integral(mode, GEOM, 0.1 * GEOM.L)


class TestGreen:
    def test_tmm_solution_jump(self):
        w = 1.5 * math.pi * C0 / (2.0 * GEOM.L)
        xs, h = 0.1 * GEOM.L, 1e-14
        # E is continuous across the sheet current, its derivative jumps
        a = slab_green_tmm(GEOM, xs - h, xs, w)
        b = slab_green_tmm(GEOM, xs + h, xs, w)
        assert abs(a - b) < 1e-6 * abs(a)

    def test_expansion_converges_inside(self):
        w = 1.5 * math.pi * C0 / (2.0 * GEOM.L)
        x, xs = 0.2 * GEOM.L, 0.1 * GEOM.L
        ref = slab_green_tmm(GEOM, x, xs, w)
        errs = [abs(slab_green_expansion(GEOM, x, xs, w, M) - ref) / abs(ref)
                for M in (15, 60, 240)]
        assert errs[0] > errs[1] > errs[2]
        fast = slab_green_expansion(GEOM, x, xs, w, 60, static_subtracted=True)
        assert abs(fast - ref) < errs[1] * abs(ref)
        with pytest.raises(ValueError):
            slab_green_expansion(GEOM, x, xs, w, 0)

    def test_static_limit(self):
        assert slab_green_tmm(GEOM, 0.1 * GEOM.L, 0.0, 1e-3) == pytest.approx(-Z0 / 2, rel=1e-6)

    def test_outside_warns(self):
        w = 1e15
        with pytest.warns(OutsideCompletenessRegion):
            slab_green_expansion(GEOM, 2 * GEOM.L, 0.0, w, 5)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            slab_green_expansion(GEOM, 0.1 * GEOM.L, 0.0, w, 5)


class TestPoleResponse:
    @pytest.mark.parametrize("m", [1, 2, 5])
    @pytest.mark.parametrize("xs", [0.07, 0.21, 0.33])
    def test_matches_exact_norm(self, m, xs):
        mode = slab_mode(GEOM, m)
        x_src = xs * GEOM.L
        val = slab_pole_response_norm(GEOM, mode, x_src)
        exact = slab_norm_exact(mode, GEOM, 1 + 2j)
        assert abs(val - exact) < 1e-6 * abs(exact)

    def test_independent_of_evaluation_point_and_directions(self):
        mode = slab_mode(GEOM, 3)
        a = slab_pole_response_norm(GEOM, mode, 0.1 * GEOM.L, x_eval=0.3 * GEOM.L)
        b = slab_pole_response_norm(GEOM, mode, 0.1 * GEOM.L, directions=(1, -1))
        exact = slab_norm_exact(mode, GEOM)
        assert abs(a - exact) < 1e-6 * abs(exact) and abs(b - exact) < 1e-6 * abs(exact)

    def test_nodal_point(self):
        with pytest.raises(SourceOnNodalPoint):
            slab_pole_response_norm(GEOM, slab_mode(GEOM, 3), 0.0)
        with pytest.raises(ValueError):
            slab_pole_response_norm(GEOM, slab_mode(GEOM, 2), GEOM.L)
