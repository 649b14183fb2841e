"""Finite-difference frequency-domain eigenproblem of a 1D slab.

Discretisation
--------------
The computational window ``[x_min, x_max]`` is split into ``N`` cells of
width ``dx``. ``E`` lives on the ``N - 1`` interior nodes (hard walls
``E = 0`` on both ends) and ``H`` on the ``N`` cell centres, so the
non-dispersive system has dimension ``2N - 1``. With the coordinate
stretch ``s(x)`` of the PML the source-free equations read::

    i D^T H = omega  eps s dx E
    i D E   = -omega s dx H

i.e. ``A v = omega B v`` with ``A = i [[0, D^T], [D, 0]]`` real-skew times
``i`` (complex symmetric) and ``B`` diagonal. A Lorentz slab adds the
polarisation ``P`` and current ``J`` on the slab nodes; the auxiliary rows
are weighted so that ``A`` stays complex symmetric, which makes left and
right eigenvectors identical and turns ``v_n^T B v_m`` into the
biorthogonality pairing.

Units
-----
Inputs are SI (lengths in m, rates in rad/s) and eigenfrequencies are
returned in rad/s. Internally lengths are divided by ``length_unit``
(``ell``), ``eps0 = mu0 = c = 1``, and ``omega = omega_reduced * c / ell``.
Eigenvectors, pairings and ``gamma`` coefficients are reported in these
reduced units.

PML
---
The stretch inside each PML is ``s(u) = 1 + (f - 1)(p + 1) u^p`` with
``u`` the normalised depth; its mean over the layer is ``f`` for every
grading order ``p``. The default ``p = 0`` is a constant stretch; it keeps
the eigenvector basis well conditioned but reflects ``O((k dx)^2)`` at the
PML entrance, which shifts QNM eigenvalues slightly with ``f``. ``p = 2``
removes that reflection (eigenvalues then move by ~1e-10 when ``f``
changes) at the price of nearly self-orthogonal numerical modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from .constants import C0
from .errors import (
    DefectiveMatrix,
    GridMismatch,
    GridTooCoarse,
    SingularAtEigenvalue,
    SourceOnNodalPoint,
)
from .slab1d import SlabGeometry, slab_mode

QNM = "QNM"
NUMERICAL = "Numerical"
UNPHYSICAL = "Unphysical"


# --- geometry, grid and PML ------------------------------------------------


@dataclass(frozen=True)
class LorentzSlab:
    """Slab of thickness ``L`` (m) described by a single Lorentz pole.

    ``eps(omega) = eps_inf - eps_inf omega_p^2 / (omega^2 - omega_0^2 + i omega gamma)``
    """

    L: float
    eps_inf: float
    omega_p: float
    omega_0: float
    gamma: float

    def permittivity(self, omega):
        w = np.asarray(omega, dtype=complex)
        return self.eps_inf - self.eps_inf * self.omega_p**2 / (
            w * w - self.omega_0**2 + 1j * w * self.gamma
        )


SlabLike = Union[SlabGeometry, LorentzSlab, None]


@dataclass(frozen=True)
class Grid1D:
    """Uniform primal grid of ``N`` cells on ``[x_min, x_max]`` (m)."""

    x_min: float
    x_max: float
    N: int

    def __post_init__(self):
        if self.N < 50:
            raise GridTooCoarse("the grid needs at least 50 cells")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.N

    @property
    def nodes(self) -> np.ndarray:
        """All ``N + 1`` primal nodes, walls included."""
        return self.x_min + self.dx * np.arange(self.N + 1)

    @property
    def e_nodes(self) -> np.ndarray:
        """The ``N - 1`` interior nodes carrying ``E``."""
        return self.nodes[1:-1]

    @property
    def h_nodes(self) -> np.ndarray:
        """The ``N`` cell centres carrying ``H``."""
        return self.nodes[:-1] + 0.5 * self.dx


@dataclass(frozen=True)
class PmlProfile1D:
    """PMLs of width ``thickness`` (m) at both ends of the grid.

    Parameters
    ----------
    thickness : float
        Width of each layer.
    stretch : complex
        Mean complex stretch ``f`` (``Im f > 0``). ``f = 1`` disables the
        layers and yields a closed lossless cavity.
    grading : float
        Polynomial order ``p`` of the profile, 0 for a constant stretch.
    stretch_right : complex, optional
        Stretch of the right layer if it differs from the left one. A
        slightly different value lifts the left/right degeneracy of the
        numerical modes, which otherwise come in near-coalescent pairs
        whose eigenvectors are ill-determined.
    """

    thickness: float
    stretch: complex = 3 + 3j
    grading: float = 0.0
    stretch_right: Optional[complex] = None

    def __post_init__(self):
        for f in (self.stretch, self.right):
            f = complex(f)
            if f != 1 and not f.imag > 0:
                raise ValueError("the PML stretch needs a positive imaginary part")
        if self.thickness < 0 or self.grading < 0:
            raise ValueError("thickness and grading must be non-negative")

    @property
    def right(self) -> complex:
        return complex(self.stretch if self.stretch_right is None else self.stretch_right)

    def depth(self, x, grid: Grid1D) -> np.ndarray:
        """Normalised depth ``u`` in ``[0, 1]``; negative outside the PML."""
        x = np.asarray(x, dtype=float)
        left = grid.x_min + self.thickness
        right = grid.x_max - self.thickness
        d = np.maximum(left - x, x - right)
        return d / self.thickness if self.thickness > 0 else np.full_like(x, -1.0)

    def stretch_at(self, x, grid: Grid1D) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = self.depth(x, grid)
        mid = 0.5 * (grid.x_min + grid.x_max)
        f = np.where(x > mid, self.right, complex(self.stretch))
        tol = 1e-9
        uc = np.clip(u, 0.0, 1.0)
        if self.grading == 0:
            s = np.where(u > tol, f, 1.0 + 0j)
            # a node sitting on the PML entrance takes the mean value
            return np.where(np.abs(u) <= tol, 0.5 * (1 + f), s)
        s = 1 + (f - 1) * (self.grading + 1) * uc**self.grading
        return np.where(u > 0, s, 1.0 + 0j)

    @property
    def tan_theta(self) -> float:
        f = complex(self.stretch)
        return f.imag / f.real


# --- assembly ---------------------------------------------------------------


@dataclass
class DiscreteSystem:
    """Assembled pencil ``(A, B)`` in reduced units.

    Attributes
    ----------
    A : ndarray
        Complex symmetric system matrix.
    b : ndarray
        Diagonal of ``B``.
    blocks : dict
        Slices of the ``E``, ``H`` and (Lorentz) ``P``, ``J`` blocks.
    omega_unit : float
        Conversion factor ``c / ell`` from reduced to rad/s.
    """

    A: np.ndarray
    b: np.ndarray
    blocks: dict
    grid: Grid1D
    pml: PmlProfile1D
    geom: SlabLike
    length_unit: float
    omega_unit: float
    slab_nodes: np.ndarray
    slab_weight: np.ndarray
    aux_weights: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.b)

    @property
    def unmapped(self) -> np.ndarray:
        """Mask of the ``E`` nodes outside both PMLs."""
        return self.pml.depth(self.grid.e_nodes, self.grid) <= 0

    def e_index(self, x: float) -> int:
        """Index of the ``E`` node closest to ``x``."""
        j = int(round((x - self.grid.x_min) / self.grid.dx)) - 1
        if not 0 <= j < self.grid.N - 1:
            raise ValueError("position outside the interior of the grid")
        return j


def _slab_fraction(x, dx, L):
    """Length fraction of ``[x - dx/2, x + dx/2]`` inside ``|x| < L/2``."""
    lo = np.maximum(x - dx / 2, -L / 2)
    hi = np.minimum(x + dx / 2, L / 2)
    return np.clip(hi - lo, 0, None) / dx


def assemble(geom: SlabLike, grid: Grid1D, pml: PmlProfile1D,
             length_unit: Optional[float] = None) -> DiscreteSystem:
    """Assemble the linear eigenproblem ``A v = omega B v``.

    Parameters
    ----------
    geom : SlabGeometry, LorentzSlab or None
        Slab centred at ``x = 0``; ``None`` gives an empty cavity.
    grid : Grid1D
    pml : PmlProfile1D
    length_unit : float, optional
        Reduced length unit (default: slab thickness, or grid span).

    Raises
    ------
    GridTooCoarse
        Fewer than 20 cells across the slab.
    """
    dx_si = grid.dx
    if geom is not None and geom.L / dx_si < 20 - 1e-9:
        raise GridTooCoarse(f"only {geom.L / dx_si:.1f} cells across the slab")
    ell = length_unit or (geom.L if geom is not None else grid.x_max - grid.x_min)
    N = grid.N
    dx = dx_si / ell
    xe = grid.e_nodes
    frac = (_slab_fraction(xe, dx_si, geom.L) if geom is not None
            else np.zeros(N - 1))
    se = pml.stretch_at(xe, grid)
    sh = pml.stretch_at(grid.h_nodes, grid)
    if np.any((np.abs(se - 1) > 0) & (frac > 0)):
        raise ValueError("the PML must not overlap the slab")

    if isinstance(geom, SlabGeometry):
        eps_node = frac * geom.n**2 + (1 - frac)
    elif isinstance(geom, LorentzSlab):
        eps_node = frac * geom.eps_inf + (1 - frac)
    else:
        eps_node = np.ones(N - 1)

    D = np.zeros((N, N - 1))
    idx = np.arange(N - 1)
    D[idx, idx] = 1.0
    D[idx + 1, idx] = -1.0
    nE, nH = N - 1, N
    be = eps_node * se * dx
    bh = -sh * dx
    blocks = {"E": slice(0, nE), "H": slice(nE, nE + nH)}
    slab_nodes = np.flatnonzero(frac > 0)
    aux = None

    if isinstance(geom, LorentzSlab):
        wp = geom.omega_p * ell / C0
        w0 = geom.omega_0 * ell / C0
        g = geom.gamma * ell / C0
        ns = slab_nodes.size
        fr = frac[slab_nodes]
        use_p = w0 != 0.0
        naux = 2 * ns if use_p else ns
        dim = nE + nH + naux
        A = np.zeros((dim, dim), dtype=complex)
        A[:nE, nE:nE + nH] = 1j * D.T
        A[nE:nE + nH, :nE] = 1j * D
        wJ = -fr * dx / (geom.eps_inf * wp**2)
        j0 = nE + nH + (ns if use_p else 0)
        Jsl = slice(j0, j0 + ns)
        rows_E = slab_nodes
        rows_J = j0 + np.arange(ns)
        # E row: eps dx omega E = i D^T H - i frac dx J
        A[rows_E, rows_J] = -1j * fr * dx
        # J row (times wJ): wJ omega J = -i wJ w0^2 P - i wJ g J + i wJ eps_inf wp^2 E
        A[rows_J, rows_E] = 1j * wJ * geom.eps_inf * wp**2
        A[rows_J, rows_J] = -1j * wJ * g
        b = np.concatenate([be, bh, np.zeros(naux)]).astype(complex)
        b[Jsl] = wJ
        if use_p:
            wP = fr * dx * w0**2 / (geom.eps_inf * wp**2)
            rows_P = nE + nH + np.arange(ns)
            # P row (times wP): wP omega P = i wP J
            A[rows_P, rows_J] = 1j * wP
            A[rows_J, rows_P] = -1j * wJ * w0**2
            b[rows_P] = wP
            blocks["P"] = slice(nE + nH, nE + nH + ns)
        blocks["J"] = Jsl
        aux = (wp, w0, g)
    else:
        A = np.zeros((nE + nH, nE + nH), dtype=complex)
        A[:nE, nE:] = 1j * D.T
        A[nE:, :nE] = 1j * D
        b = np.concatenate([be, bh]).astype(complex)

    return DiscreteSystem(
        A=A, b=b, blocks=blocks, grid=grid, pml=pml, geom=geom,
        length_unit=ell, omega_unit=C0 / ell, slab_nodes=slab_nodes,
        slab_weight=frac, aux_weights=aux,
        meta={"N": N, "dx_m": dx_si, "stretch": complex(pml.stretch),
              "grading": pml.grading, "pml_thickness_m": pml.thickness},
    )


# --- eigensolution ----------------------------------------------------------


@dataclass
class DiscreteEigenMode:
    """Eigenpair of a :class:`DiscreteSystem`.

    ``omega_t`` is in rad/s, ``omega_reduced`` in reduced units. The left
    vector equals the right vector because the pencil is complex
    symmetric.
    """

    omega_t: complex
    omega_reduced: complex
    right_vec: np.ndarray
    left_vec: np.ndarray
    classification: Optional[str] = None
    excitation: Optional[complex] = None

    @property
    def Q(self) -> float:
        return -self.omega_t.real / (2 * self.omega_t.imag) if self.omega_t.imag else math.inf


MAX_DENSE_DIM = 4000


def _reduced_eig(system: DiscreteSystem):
    """Eigenpairs of a non-dispersive system from the ``E``-only problem.

    Eliminating ``H`` gives ``omega^2 b_E E = D^T diag(-1/b_H) D E``, a
    tridiagonal pencil of size ``N - 1``. Each eigenvalue ``lambda`` yields
    the pair ``omega = +-sqrt(lambda)``; the static mode ``omega = 0`` with
    uniform ``H`` completes the ``2N - 1`` basis.
    """
    N = system.grid.N
    be = system.b[system.blocks["E"]]
    hh = -system.b[system.blocks["H"]]
    d = 1.0 / hh
    K = (np.diag(d[:-1] + d[1:]) - np.diag(d[1:-1], 1) - np.diag(d[1:-1], -1))
    lam, V = sla.eig(K / be[:, None])
    w = np.sqrt(lam.astype(complex))
    D = np.zeros((N, N - 1))
    idx = np.arange(N - 1)
    D[idx, idx] = 1.0
    D[idx + 1, idx] = -1.0
    DE = D @ V
    omegas, vecs = [], []
    for sign in (1.0, -1.0):
        ws = sign * w
        H = -1j * DE / (ws[None, :] * hh[:, None])
        omegas.append(ws)
        vecs.append(np.vstack([V, H]))
    static = np.concatenate([np.zeros(N - 1), np.ones(N)])[:, None]
    omegas.append(np.zeros(1, dtype=complex))
    vecs.append(static.astype(complex))
    return np.concatenate(omegas), np.hstack(vecs)


def eigensolve(system: DiscreteSystem, method: str = "auto",
               degeneracy_tol: float = 1e-8) -> list[DiscreteEigenMode]:
    """Full dense eigendecomposition of the pencil.

    Parameters
    ----------
    method : {"auto", "reduced", "full"}
        ``reduced`` uses the tridiagonal ``E``-only problem (non-dispersive
        systems only); ``full`` diagonalises ``B^-1 A``. ``auto`` picks
        ``reduced`` when possible.
    degeneracy_tol : float
        Relative distance under which eigenvalues form a cluster that is
        checked for rank deficiency and re-orthogonalised.

    Raises
    ------
    DefectiveMatrix
        A cluster lacks a full set of independent, non-self-orthogonal
        eigenvectors.
    """
    if system.dim > MAX_DENSE_DIM:
        raise ValueError(f"dimension {system.dim} exceeds the dense cap {MAX_DENSE_DIM}")
    dispersive = "J" in system.blocks
    if method == "auto":
        method = "full" if dispersive else "reduced"
    if method == "reduced":
        if dispersive:
            raise ValueError("the reduced path needs a non-dispersive system")
        w, V = _reduced_eig(system)
    elif method == "full":
        b = system.b
        if np.any(b == 0):
            raise DefectiveMatrix("singular B: auxiliary weights vanish")
        w, V = sla.eig(system.A / b[:, None])
    else:
        raise ValueError(f"unknown method {method!r}")
    V = V / np.linalg.norm(V, axis=0)
    V = _orthogonalise_clusters(w, V, system.b, degeneracy_tol)
    modes = [DiscreteEigenMode(complex(wi * system.omega_unit), complex(wi), V[:, i], V[:, i])
             for i, wi in enumerate(w)]
    return modes


def _orthogonalise_clusters(w, V, b, tol, residual_guard=1e-12):
    """Rank-check eigenvalue clusters and B-orthogonalise within them.

    A cluster chains eigenvalues closer than ``tol`` times the spectral
    radius. Rank deficiency of its eigenvectors at ``tol`` means the
    matrix is defective. Otherwise the vectors are made mutually
    orthogonal for the unconjugated pairing by Gram-Schmidt; a projection
    ``v_j -= c u_i`` perturbs the eigen-residual by about
    ``|c (omega_i - omega_j)|``, so it is skipped when that product
    exceeds ``residual_guard`` times the spectral radius.
    """
    scale = max(np.max(np.abs(w)), 1e-300)
    order = np.argsort(w.real)
    ws = w[order]
    i = 0
    while i < len(ws):
        j = i + 1
        while j < len(ws) and abs(ws[j] - ws[j - 1]) <= tol * scale:
            j += 1
        if j - i > 1:
            cols = order[i:j]
            sv = np.linalg.svd(V[:, cols], compute_uv=False)
            if sv[-1] < tol * sv[0]:
                raise DefectiveMatrix(
                    f"eigenvalue cluster near {ws[i]} has deficient eigenvector rank"
                )
            done = []
            for c in cols:
                v = V[:, c].copy()
                for u in done:
                    uu = V[:, u]
                    coef = (uu @ (b * v)) / (uu @ (b * uu))
                    if abs(coef * (w[c] - w[u])) <= residual_guard * scale:
                        v -= coef * uu
                V[:, c] = v / np.linalg.norm(v)
                done.append(c)
        i = j
    return V


def eigen_residuals(system: DiscreteSystem, modes: Sequence[DiscreteEigenMode]) -> np.ndarray:
    """``||A v - omega B v|| / (||A|| ||v||)`` for every mode."""
    normA = np.linalg.norm(system.A, 2) if system.dim <= 600 else np.linalg.norm(system.A)
    out = np.empty(len(modes))
    for i, m in enumerate(modes):
        v = m.right_vec
        r = system.A @ v - m.omega_reduced * system.b * v
        out[i] = np.linalg.norm(r) / (normA * np.linalg.norm(v))
    return out


# --- classification ---------------------------------------------------------


def classify_modes(modes1: Sequence[DiscreteEigenMode], modes2: Sequence[DiscreteEigenMode],
                   tol: float = 1e-6, system1: Optional[DiscreteSystem] = None,
                   system2: Optional[DiscreteSystem] = None,
                   candidates: int = 6) -> list[DiscreteEigenMode]:
    """Label ``modes1`` by comparison with a run using another PML stretch.

    Eigenvalues are matched greedily (closest pairs first, at most one
    partner each). A relative shift below ``tol`` marks a QNM, anything
    else is Numerical, and ``Im omega > 0`` overrides both as Unphysical.
    The exactly static mode of the hard-wall cavity is Numerical.

    Raises
    ------
    GridMismatch
        The two systems have different grids or spectrum sizes.
    """
    if len(modes1) != len(modes2):
        raise GridMismatch("the two spectra have different sizes")
    if system1 is not None and system2 is not None and system1.grid != system2.grid:
        raise GridMismatch("the two systems use different grids")
    w1 = np.array([m.omega_reduced for m in modes1])
    w2 = np.array([m.omega_reduced for m in modes2])
    scale = np.max(np.abs(w1))
    k = min(candidates, len(w2))
    dist = np.abs(w1[:, None] - w2[None, :])
    near = np.argpartition(dist, k - 1, axis=1)[:, :k]
    pairs = sorted(
        (dist[i, j], i, j) for i in range(len(w1)) for j in near[i]
    )
    partner = {}
    used = set()
    for d, i, j in pairs:
        if i in partner or j in used:
            continue
        partner[i] = (j, d)
        used.add(j)
    out = []
    for i, m in enumerate(modes1):
        if abs(w1[i]) <= 1e-12 * scale:
            label = NUMERICAL
        else:
            j, d = partner.get(i, (None, math.inf))
            label = QNM if d <= tol * abs(w1[i]) else NUMERICAL
        if w1[i].imag > 1e-12 * scale:
            label = UNPHYSICAL
        out.append(replace(m, classification=label))
    return out


def match_analytic_qnms(modes: Sequence[DiscreteEigenMode], geom: SlabGeometry,
                        tol: float = 1e-2) -> list[int]:
    """Indices of the eigenmodes that discretise analytic slab QNMs.

    Every analytic ``omega_m`` with ``m >= 0`` below the largest computed
    ``|Re omega|`` is paired with its nearest eigenvalue; pairs closer
    than ``tol`` (relative) are kept. This identification does not depend
    on a second PML run, so it also works for constant-stretch layers
    whose QNM eigenvalues drift slightly with ``f``.
    """
    w = np.array([m.omega_t for m in modes])
    top = np.max(np.abs(w.real))
    out = []
    m = 0
    while True:
        target = slab_mode(geom, m).omega_t
        if target.real > top:
            break
        k = int(np.argmin(np.abs(w - target)))
        if abs(w[k] - target) <= tol * abs(target) and k not in out:
            out.append(k)
        m += 1
    return sorted(out)


# --- biorthonormalisation, excitation, reconstruction -----------------------


def pairing(u: np.ndarray, v: np.ndarray, b: np.ndarray) -> complex:
    """Unconjugated pairing ``u^T B v``."""
    return complex(u @ (b * v))


def biorthonormalize(modes: Sequence[DiscreteEigenMode], system: DiscreteSystem
                     ) -> list[DiscreteEigenMode]:
    """Scale every mode so that ``left^T B right = 1``.

    Raises
    ------
    DefectiveMatrix
        A mode is (numerically) self-orthogonal.
    """
    b = system.b
    out = []
    for m in modes:
        p = m.left_vec @ (b * m.right_vec)
        # strongly absorbed PML modes legitimately have tiny pairings;
        # only an exactly vanishing one is a defect
        if not np.isfinite(p) or p == 0:
            raise DefectiveMatrix(f"self-orthogonal mode at {m.omega_t}")
        r = np.sqrt(p)
        out.append(replace(m, right_vec=m.right_vec / r, left_vec=m.left_vec / r))
    return out


def pairing_matrix(modes: Sequence[DiscreteEigenMode], system: DiscreteSystem,
                   weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix of ``left_n^T B right_m`` (optionally with modified weights)."""
    b = system.b if weights is None else weights
    L = np.column_stack([m.left_vec for m in modes])
    R = np.column_stack([m.right_vec for m in modes])
    return L.T @ (b[:, None] * R)


def weights_without_auxiliary(system: DiscreteSystem) -> np.ndarray:
    """``B`` with the ``P`` and ``J`` weights set to zero."""
    b = system.b.copy()
    for key in ("P", "J"):
        if key in system.blocks:
            b[system.blocks[key]] = 0
    return b


@dataclass(frozen=True)
class LineSource:
    """Current sheet ``J delta(x - x_src)`` (A/m), snapped to an ``E`` node."""

    x_src: float
    amplitude: complex = 1.0


def source_vector(system: DiscreteSystem, source: LineSource) -> np.ndarray:
    """Right-hand side ``(i J, 0, ...)`` of ``(A - omega B) v = s``.

    ``J`` enters as a sheet: the discrete current density is ``J / dx``
    on one node, times the cell width ``dx``.
    """
    j = system.e_index(source.x_src)
    if system.pml.depth(system.grid.e_nodes[j], system.grid) > 0:
        raise ValueError("the source must lie outside the PML")
    s = np.zeros(system.dim, dtype=complex)
    s[j] = 1j * source.amplitude
    return s


def direct_solve(system: DiscreteSystem, source: LineSource, omega: complex) -> np.ndarray:
    """Solve ``(A - omega B) v = s`` by dense LU factorisation.

    ``omega`` is in rad/s (complex values are accepted for residue
    extraction). Returns the full state vector.

    Raises
    ------
    SingularAtEigenvalue
        The pivots signal that ``omega`` coincides with an eigenvalue.
    """
    w = omega / system.omega_unit
    M = system.A - w * np.diag(system.b)
    lu, piv = sla.lu_factor(M, check_finite=False)
    # partial pivoting hides near-singularity from the pivots; the LAPACK
    # condition estimate measures the relative distance to a singular matrix
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, np.linalg.norm(M, 1), norm="1")
    if info != 0 or rcond <= 1e-12:
        raise SingularAtEigenvalue(f"omega = {omega} is (numerically) an eigenvalue")
    return sla.lu_solve((lu, piv), source_vector(system, source), check_finite=False)


def excitation_coefficients(modes: Sequence[DiscreteEigenMode], system: DiscreteSystem,
                            source: LineSource, omega: float) -> np.ndarray:
    """``alpha_m = left_m^T s / ((omega_m - omega) left_m^T B right_m)``."""
    s = source_vector(system, source)
    w = omega / system.omega_unit
    L = np.column_stack([m.left_vec for m in modes])
    R = np.column_stack([m.right_vec for m in modes])
    norms = np.einsum("ij,ij->j", L, system.b[:, None] * R)
    wm = np.array([m.omega_reduced for m in modes])
    return (L.T @ s) / ((wm - w) * norms)


def excitation_and_reconstruct(modes: Sequence[DiscreteEigenMode], system: DiscreteSystem,
                               source: LineSource, omega: float,
                               subset: Optional[Sequence[int]] = None):
    """Modal reconstruction of the driven field and its error.

    Returns ``(alphas, E, error)`` where ``E`` is the reconstructed field
    on the ``E`` nodes using the modes in ``subset`` (default: all) and
    ``error`` the maximum relative deviation from :func:`direct_solve`
    over the unmapped nodes, scaled by the largest direct-field value there.
    """
    alphas = excitation_coefficients(modes, system, source, omega)
    idx = np.arange(len(modes)) if subset is None else np.asarray(subset)
    R = np.column_stack([modes[i].right_vec for i in idx])
    field_vec = R @ alphas[idx]
    direct = direct_solve(system, source, omega)
    sl = system.blocks["E"]
    mask = system.unmapped
    ref = direct[sl][mask]
    err = np.max(np.abs(field_vec[sl][mask] - ref)) / np.max(np.abs(ref))
    return alphas, field_vec[sl], float(err)


def greedy_convergence(modes, system, source, omega, counts: Sequence[int]):
    """Reconstruction error when the ``M`` largest ``|alpha_m|`` are kept."""
    alphas = excitation_coefficients(modes, system, source, omega)
    norms_ = np.array([np.linalg.norm(m.right_vec[system.blocks["E"]]) for m in modes])
    order = np.argsort(-np.abs(alphas) * norms_)
    direct = direct_solve(system, source, omega)
    sl = system.blocks["E"]
    mask = system.unmapped
    R = np.column_stack([m.right_vec[sl] for m in modes])
    ref = direct[sl][mask]
    out = []
    for M in counts:
        keep = order[:M]
        rec = R[:, keep] @ alphas[keep]
        out.append(float(np.max(np.abs(rec[mask] - ref)) / np.max(np.abs(ref))))
    return out


# --- residues ---------------------------------------------------------------


def residue_gamma(system: DiscreteSystem, mode: DiscreteEigenMode, source: LineSource,
                  x_ref: Optional[float] = None) -> complex:
    """``gamma_m = -i int J E_m / pairing(E_m, E_m)`` for a scale-fixed mode.

    The mode is first scaled so that ``E_m(x_ref) = 1`` (default: the
    source node), which makes ``gamma`` a property of the physical pole
    that can be compared across PML choices.

    Raises
    ------
    SourceOnNodalPoint
        ``|E_m(x_src)| < 1e-8 max |E_m|`` over the unmapped nodes.
    """
    sl = system.blocks["E"]
    E = mode.right_vec[sl]
    js = system.e_index(source.x_src)
    jr = js if x_ref is None else system.e_index(x_ref)
    if abs(E[js]) < 1e-8 * np.max(np.abs(E[system.unmapped])):
        raise SourceOnNodalPoint(f"mode vanishes at x_src = {source.x_src}")
    v = mode.right_vec / E[jr]
    N = v @ (system.b * v)
    s = source_vector(system, source)
    return complex(-(v @ s) / N)


def pole_limit(system: DiscreteSystem, mode: DiscreteEigenMode, source: LineSource,
               rel_delta: float = 1e-6) -> np.ndarray:
    """``lim (omega - omega_m) v_s(omega)`` from four complex offsets."""
    d0 = rel_delta * abs(mode.omega_t)
    acc = 0
    for u in (1, 1j, -1, -1j):
        d = d0 * u
        acc = acc + d / system.omega_unit * direct_solve(system, source, mode.omega_t + d)
    return acc / 4


# --- revelation -------------------------------------------------------------


@dataclass(frozen=True)
class RevelationRow:
    tan_theta: float
    m: int
    Q: float
    predicted: bool
    revealed: bool
    shift: float
    error: float


def revelation_study(geom: SlabGeometry, grid: Grid1D, pml_thickness: float,
                     theta_list: Sequence[float], stretch_abs: float,
                     m_max: int = 8, scales=(1.0, 1.5), grading: float = 2.0,
                     stable_tol: float = 1e-6, match_tol: float = 1e-2
                     ) -> list[RevelationRow]:
    """Which analytic slab QNMs appear as stable eigenvalues for each angle.

    For every ``theta`` the spectrum is computed with ``f = |f| e^{i theta}``
    for the two moduli ``stretch_abs * scales``. Mode ``m`` is revealed
    when the eigenvalues nearest to its analytic frequency agree across
    the two runs to ``stable_tol`` and lie within ``match_tol`` of it.
    """
    rows = []
    targets = [slab_mode(geom, m) for m in range(1, m_max + 1)]
    for theta in theta_list:
        if not 0 < theta < math.pi / 2:
            raise ValueError("theta must lie in (0, pi/2)")
        spectra = []
        for sc in scales:
            f = stretch_abs * sc * complex(math.cos(theta), math.sin(theta))
            system = assemble(geom, grid, PmlProfile1D(pml_thickness, f, grading))
            w, _ = _reduced_eig_values(system)
            spectra.append(w * system.omega_unit)
        for t in targets:
            a = spectra[0][np.argmin(np.abs(spectra[0] - t.omega_t))]
            b = spectra[1][np.argmin(np.abs(spectra[1] - t.omega_t))]
            shift = abs(a - b) / abs(t.omega_t)
            err = abs(a - t.omega_t) / abs(t.omega_t)
            rows.append(RevelationRow(
                float(math.tan(theta)), t.m, t.Q,
                math.tan(theta) > 1 / (2 * t.Q),
                bool(shift < stable_tol and err < match_tol), float(shift), float(err),
            ))
    return rows


def _reduced_eig_values(system: DiscreteSystem):
    be = system.b[system.blocks["E"]]
    hh = -system.b[system.blocks["H"]]
    d = 1.0 / hh
    K = (np.diag(d[:-1] + d[1:]) - np.diag(d[1:-1], 1) - np.diag(d[1:-1], -1))
    lam = sla.eigvals(K / be[:, None])
    w = np.sqrt(lam.astype(complex))
    return np.concatenate([w, -w, [0.0]]), None


def eigenvalues(system: DiscreteSystem) -> np.ndarray:
    """Eigenvalues only (rad/s); cheaper than :func:`eigensolve`."""
    if "J" in system.blocks:
        return sla.eigvals(system.A / system.b[:, None]) * system.omega_unit
    return _reduced_eig_values(system)[0] * system.omega_unit
