import math

import numpy as np
import pytest

from qnmlab.constants import C0
from qnmlab.errors import GridMismatch, GridTooCoarse, SingularAtEigenvalue, SourceOnNodalPoint
from qnmlab.fdfd1d import (
    NUMERICAL,
    QNM,
    UNPHYSICAL,
    DiscreteEigenMode,
    Grid1D,
    LineSource,
    LorentzSlab,
    PmlProfile1D,
    assemble,
    biorthonormalize,
    classify_modes,
    direct_solve,
    eigen_residuals,
    eigensolve,
    eigenvalues,
    excitation_and_reconstruct,
    greedy_convergence,
    match_analytic_qnms,
    pairing_matrix,
    residue_gamma,
    weights_without_auxiliary,
)
from qnmlab.slab1d import SlabGeometry, slab_mode

L = 600e-9
SLAB = SlabGeometry(2.0, L)


def _open_system(N=200, f=3 + 3j, right=None, grading=0.0):
    grid = Grid1D(-2 * L, 2 * L, N)
    pml = PmlProfile1D(L, f, grading, right)
    return assemble(SLAB, grid, pml)


def _mode_m(modes, m):
    target = slab_mode(SLAB, m).omega_t
    return min(modes, key=lambda md: abs(md.omega_t - target))


@pytest.fixture(scope="module")
def open_modes():
    system = _open_system(right=1.1 * (3 + 3j))
    return system, biorthonormalize(eigensolve(system), system)


class TestAssembly:
    def test_dimension_and_symmetry(self):
        system = _open_system()
        assert system.dim == 2 * 200 - 1
        assert np.allclose(system.A, system.A.T)
        lor = assemble(LorentzSlab(L, 2.0, 1e15, 2e15, 1e14), Grid1D(-2 * L, 2 * L, 200),
                       PmlProfile1D(L))
        ns = lor.slab_nodes.size
        assert lor.dim == 2 * 200 - 1 + 2 * ns
        assert np.allclose(lor.A, lor.A.T)
        drude = assemble(LorentzSlab(L, 2.0, 1e15, 0.0, 1e14), Grid1D(-2 * L, 2 * L, 200),
                         PmlProfile1D(L))
        assert drude.dim == 2 * 200 - 1 + ns and "P" not in drude.blocks

    def test_grid_checks(self):
        with pytest.raises(GridTooCoarse):
            Grid1D(-L, L, 20)
        with pytest.raises(GridTooCoarse):
            assemble(SLAB, Grid1D(-10 * L, 10 * L, 100), PmlProfile1D(L))
        with pytest.raises(ValueError):
            Grid1D(L, -L, 100)
        with pytest.raises(ValueError):
            PmlProfile1D(L, 3 - 1j)
        with pytest.raises(ValueError):
            assemble(SLAB, Grid1D(-0.8 * L, 0.8 * L, 200), PmlProfile1D(0.5 * L))

    def test_graded_profile_has_the_stated_mean(self):
        grid = Grid1D(-2 * L, 2 * L, 4000)
        pml = PmlProfile1D(L, 3 + 3j, 2.0)
        x = grid.h_nodes[grid.h_nodes > L]
        assert np.mean(pml.stretch_at(x, grid)) == pytest.approx(3 + 3j, rel=1e-4)


class TestClosedCavity:
    def test_real_spectrum_with_second_order_ladder(self):
        W = 4 * L
        errs = []
        for N in (100, 200, 400):
            system = assemble(None, Grid1D(-2 * L, 2 * L, N), PmlProfile1D(0.0, 1.0))
            w = eigenvalues(system)
            assert np.max(np.abs(w.imag)) < 1e-9 * np.max(np.abs(w))
            pos = np.sort(w.real[w.real > 1.0])
            exact = np.pi * C0 / W * np.arange(1, 4)
            errs.append(np.max(np.abs(pos[:3] - exact) / exact))
            # discrete dispersion of the staggered grid
            dx = W / N
            disc = 2 * C0 / dx * np.sin(np.arange(1, 4) * np.pi * dx / (2 * W))
            np.testing.assert_allclose(pos[:3], disc, rtol=1e-10)
        assert errs[0] / errs[1] == pytest.approx(4, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4, rel=0.02)

    def test_parity_of_modes(self):
        system = assemble(SLAB, Grid1D(-2 * L, 2 * L, 200), PmlProfile1D(0.0, 1.0))
        modes = eigensolve(system)
        E = system.blocks["E"]
        # near the grid cutoff even and odd modes become quasi-degenerate
        for m in modes:
            if abs(m.omega_reduced) < 1e-9 or abs(m.omega_reduced) > 20:
                continue
            e = m.right_vec[E]
            even = np.linalg.norm(e - e[::-1]) < 1e-8 * np.linalg.norm(e)
            odd = np.linalg.norm(e + e[::-1]) < 1e-8 * np.linalg.norm(e)
            assert even or odd


class TestEigensolve:
    def test_residuals_and_count(self, open_modes):
        system, modes = open_modes
        assert len(modes) == system.dim
        assert np.max(eigen_residuals(system, modes)) < 1e-10
        full = eigensolve(system, method="full")
        a = np.sort_complex(np.array([m.omega_t for m in modes]))
        b = np.sort_complex(np.array([m.omega_t for m in full]))
        assert np.max(np.abs(a - b)) < 1e-8 * np.max(np.abs(a))

    def test_method_validation(self):
        lor = assemble(LorentzSlab(L, 2.0, 1e15, 2e15, 1e14), Grid1D(-2 * L, 2 * L, 100),
                       PmlProfile1D(L))
        with pytest.raises(ValueError):
            eigensolve(lor, method="reduced")
        with pytest.raises(ValueError):
            eigensolve(_open_system(100), method="arnoldi")

    def test_mirror_spectrum(self, open_modes):
        # a frequency-independent stretch absorbs only for Re(omega) > 0; the
        # pencil is symmetric under omega -> -omega, so the mirror images lie
        # in the upper half plane
        system, modes = open_modes
        w = np.array([m.omega_reduced for m in modes])
        scale = np.max(np.abs(w))
        assert np.all(w[w.real > 1e-9 * scale].imag <= 1e-12 * scale)
        for wi in w[:50]:
            assert np.min(np.abs(w + wi)) < 1e-9 * scale

    def test_biorthonormal_and_left_equals_right(self, open_modes):
        system, modes = open_modes
        P = pairing_matrix(modes, system)
        assert np.max(np.abs(P - np.eye(len(modes)))) < 1e-8
        assert all(np.array_equal(m.left_vec, m.right_vec) for m in modes)

    def test_qnms_match_analytic_frequencies(self, open_modes):
        system, modes = open_modes
        idx = match_analytic_qnms(modes, SLAB)
        assert len(idx) >= 3
        for m in range(1, 4):
            ref = slab_mode(SLAB, m).omega_t
            found = _mode_m([modes[i] for i in idx], m).omega_t
            # 50 cells per slab width; the constant-stretch entrance
            # reflection mostly perturbs the damping
            assert abs(found - ref) < 1e-2 * abs(ref)
        # and the discrepancy shrinks under refinement
        fine = _open_system(800, right=1.1 * (3 + 3j))
        wf = eigenvalues(fine)
        ref = slab_mode(SLAB, 3).omega_t
        coarse_err = abs(_mode_m(modes, 3).omega_t - ref)
        assert np.min(np.abs(wf - ref)) < coarse_err / 4


class TestClassification:
    def test_identical_stretch_gives_all_qnm(self):
        system = _open_system(100)
        modes = eigensolve(system)
        labelled = classify_modes(modes, modes, system1=system, system2=system)
        labels = [m.classification for m in labelled]
        n_up = sum(m.omega_reduced.imag > 1e-12 for m in modes)
        assert labels.count(NUMERICAL) == 1  # the static mode
        assert labels.count(UNPHYSICAL) == n_up > 0
        assert labels.count(QNM) == len(modes) - 1 - n_up

    def test_different_stretch_separates(self):
        s1 = _open_system(200, 3 + 3j, grading=2.0)
        s2 = _open_system(200, 5 + 2j, grading=2.0)
        lab = classify_modes(eigensolve(s1), eigensolve(s2), system1=s1, system2=s2)
        labels = [m.classification for m in lab]
        assert labels.count(QNM) >= 4
        assert labels.count(NUMERICAL) > labels.count(QNM)
        for m in lab:
            if m.classification == QNM:
                assert m.omega_t.imag <= 0

    def test_grid_mismatch(self):
        s1, s2 = _open_system(100), _open_system(120)
        with pytest.raises(GridMismatch):
            classify_modes(eigensolve(s1), eigensolve(s2))
        s3 = assemble(SLAB, Grid1D(-2.2 * L, 1.8 * L, 100), PmlProfile1D(L))
        with pytest.raises(GridMismatch):
            classify_modes(eigensolve(s1), eigensolve(s3), system1=s1, system2=s3)

    def test_growing_eigenvalue_is_unphysical(self):
        v = np.ones(3, dtype=complex)
        good = DiscreteEigenMode(1.0 - 0.1j, 1.0 - 0.1j, v, v)
        bad = DiscreteEigenMode(2.0 + 0.5j, 2.0 + 0.5j, v, v)
        lab = classify_modes([good, bad], [good, bad])
        assert [m.classification for m in lab] == [QNM, UNPHYSICAL]


class TestDrivenProblem:
    def test_direct_solve_residual_and_reciprocity(self):
        system = _open_system(200)
        w = 1.3 * math.pi * C0 / (2 * L)
        a, b = LineSource(0.1 * L), LineSource(-0.3 * L)
        va = direct_solve(system, a, w)
        vb = direct_solve(system, b, w)
        from qnmlab.fdfd1d import source_vector
        M = system.A - w / system.omega_unit * np.diag(system.b)
        assert np.linalg.norm(M @ va - source_vector(system, a)) < 1e-12 * np.linalg.norm(M) * np.linalg.norm(va)
        E = system.blocks["E"]
        ja, jb = system.e_index(a.x_src), system.e_index(b.x_src)
        assert abs(va[E][jb] - vb[E][ja]) < 1e-12 * abs(va[E][jb])

    def test_singular_at_eigenvalue(self, open_modes):
        system, modes = open_modes
        m = _mode_m(modes, 2)
        with pytest.raises(SingularAtEigenvalue):
            direct_solve(system, LineSource(0.1 * L), m.omega_t)
        direct_solve(system, LineSource(0.1 * L), m.omega_t * (1 + 1e-9))

    def test_source_outside_grid_or_in_pml(self):
        system = _open_system(100)
        with pytest.raises(ValueError):
            direct_solve(system, LineSource(5 * L), 1e15)
        with pytest.raises(ValueError):
            direct_solve(system, LineSource(1.8 * L), 1e15)

    def test_full_reconstruction_and_greedy(self, open_modes):
        system, modes = open_modes
        w = 1.37 * math.pi * C0 / (2 * L)
        src = LineSource(0.13 * L)
        _, _, err = excitation_and_reconstruct(modes, system, src, w)
        assert err < 1e-10
        errs = greedy_convergence(modes, system, src, w, [10, 100, len(modes)])
        assert errs[-1] < 1e-10 and errs[0] > errs[-1]

    def test_gamma_linear_and_nodal(self, open_modes):
        system, modes = open_modes
        m = _mode_m(modes, 2)
        g1 = residue_gamma(system, m, LineSource(0.1 * L, 1.0))
        g2 = residue_gamma(system, m, LineSource(0.1 * L, 2 - 3j))
        assert abs(g2 - (2 - 3j) * g1) < 1e-12 * abs(g2)
        # with symmetric layers an odd mode vanishes on the centre node
        sym = _open_system(200)
        odd = _mode_m(eigensolve(sym), 3)
        with pytest.raises(SourceOnNodalPoint):
            residue_gamma(sym, odd, LineSource(0.0))


class TestLorentz:
    def test_pairing_needs_auxiliary_weights(self):
        u = C0 / L
        system = assemble(LorentzSlab(L, 2.0, 2.0 * u, 3.0 * u, 0.4 * u),
                          Grid1D(-2 * L, 2 * L, 160), PmlProfile1D(L, 3 + 3j, 0.0, 3.3 + 3.3j))
        modes = biorthonormalize(eigensolve(system), system)
        assert len(modes) == system.dim
        P = pairing_matrix(modes, system)
        assert np.max(np.abs(P - np.eye(len(modes)))) < 1e-8
        bad = pairing_matrix(modes, system, weights_without_auxiliary(system))
        assert np.max(np.abs(bad - np.eye(len(modes)))) > 1e-2
