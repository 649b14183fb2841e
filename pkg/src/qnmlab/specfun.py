"""Spherical Bessel/Hankel functions of complex argument and Gauss-Legendre rules.

The Bessel routines are vectorised over ``z`` and support orders
``0 <= l <= 10`` (higher orders work, but are not part of the accuracy
contract). Stability strategy:

* ``h_l^(1)`` is the dominant solution of the three-term recurrence and is
  generated upward from its closed-form ``l = 0, 1`` members.
* ``j_l`` is generated upward only where every requested order satisfies
  ``l < |z|``. Elsewhere the ratios ``j_l / j_{l-1}`` are produced by a
  backward (continued-fraction) sweep started well above ``max(l, |z|)``
  and the sequence is anchored on whichever of ``j_0`` or ``j_1`` is larger
  in modulus. For ``|z| < 1`` those anchors come from their power series,
  which avoids the cancellation in ``(sin z - z cos z) / z**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import Overflow

# exp(709.78) is the largest representable binary64 value; keep headroom.
_MAX_IMAG = 700.0


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of an ``n``-point rule on ``[-1, 1]``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, func, a=-1.0, b=1.0):
        """Apply the rule to ``func`` on ``[a, b]`` (``a``, ``b`` may be complex)."""
        half = 0.5 * (b - a)
        x = 0.5 * (a + b) + half * self.nodes
        return half * np.dot(self.weights, func(x))


@lru_cache(maxsize=64)
def _gauss_legendre_cached(n: int):
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    # derivative at the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    nodes = np.concatenate([-x, x[::-1][n % 2:]])
    weights = np.concatenate([w, w[::-1][n % 2:]])
    if n % 2:
        nodes[m - 1] = 0.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``n`` nodes.

    Nodes are the roots of ``P_n`` found by Newton iteration from the
    Tricomi initial guesses; the rule is exact for polynomials of degree
    ``2n - 1``.

    Parameters
    ----------
    n : int
        Number of nodes, ``1 <= n <= 10000``.

    Returns
    -------
    QuadratureRule
        Nodes sorted increasingly with their (positive) weights.
    """
    n = int(n)
    if not 1 <= n <= 10_000:
        raise ValueError("gauss_legendre needs 1 <= n <= 10000")
    nodes, weights = _gauss_legendre_cached(n)
    return QuadratureRule(nodes, weights)


def _check_overflow(z: np.ndarray) -> None:
    if z.size and np.max(np.abs(z.imag)) > _MAX_IMAG:
        raise Overflow("|Im z| too large: exp(|Im z|) is not representable")


def _series_j01(z):
    """Power series of j_0 and j_1, accurate for |z| <= 1."""
    z2 = -0.5 * z * z
    t0 = np.ones_like(z)
    t1 = np.ones_like(z)
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, 25):
        t0 = t0 * z2 / (k * (2 * k + 1))
        t1 = t1 * z2 / (k * (2 * k + 3))
        s0 = s0 + t0
        s1 = s1 + t1
    return s0, z * s1 / 3.0


def sph_jn_table(lmax: int, z) -> np.ndarray:
    """All ``j_l(z)`` for ``l = 0..lmax``; result shape ``(lmax + 1,) + z.shape``."""
    z = np.asarray(z, dtype=complex)
    _check_overflow(z)
    shape = z.shape
    z = z.reshape(-1)
    out = np.zeros((lmax + 1, z.size), dtype=complex)
    az = np.abs(z)
    zero = az == 0
    safe = np.where(zero, 1.0, z)

    small = az < 1.0
    j0 = np.where(small, 0, np.sin(safe) / safe)
    j1 = np.where(small, 0, np.sin(safe) / safe**2 - np.cos(safe) / safe)
    if np.any(small):
        s0, s1 = _series_j01(z[small])
        j0[small] = s0
        j1[small] = s1

    up = az > max(lmax, 1) + 1.0
    if np.any(up):
        zu = safe[up]
        f0, f1 = j0[up], j1[up]
        out[0][up] = f0
        if lmax >= 1:
            out[1][up] = f1
        for l in range(1, lmax):
            f0, f1 = f1, (2 * l + 1) / zu * f1 - f0
            out[l + 1][up] = f1

    down = ~up & ~zero
    if np.any(down):
        zd = z[down]
        start = int(np.ceil(np.max(np.abs(zd)))) + lmax + 40
        ratio = np.zeros_like(zd)
        ratios = np.empty((lmax + 1,) + zd.shape, dtype=complex)
        for l in range(start, 0, -1):
            # r_l = j_l / j_{l-1} = z / (2l + 1 - z r_{l+1})
            ratio = zd / (2 * l + 1 - zd * ratio)
            if l <= lmax:
                ratios[l] = ratio
        a0 = j0[down]
        a1 = j1[down]
        # chain j_l = anchor * prod(ratios) from the larger anchor
        use_j1 = np.abs(a1) > np.abs(a0)
        chain = np.where(use_j1, a1, a0 * ratios[1]) if lmax >= 1 else a0
        out[0][down] = a0
        if lmax >= 1:
            out[1][down] = a1
        for l in range(2, lmax + 1):
            chain = chain * ratios[l]
            out[l][down] = chain

    if np.any(zero):
        out[0][zero] = 1.0
    return out.reshape((lmax + 1,) + shape)


def _hn1_upward(lmax: int, z: np.ndarray) -> np.ndarray:
    out = np.empty((lmax + 1,) + z.shape, dtype=complex)
    e = np.exp(1j * z)
    out[0] = -1j * e / z
    if lmax >= 1:
        out[1] = -e * (z + 1j) / (z * z)
    for l in range(1, lmax):
        out[l + 1] = (2 * l + 1) / z * out[l] - out[l - 1]
    return out


def sph_hn1_table(lmax: int, z) -> np.ndarray:
    """All ``h_l^(1)(z)`` for ``l = 0..lmax``.

    Upward recurrence is stable for ``h^(1)`` only where it is the dominant
    solution, i.e. ``Im z >= 0``. Below the real axis ``h^(1)`` decays with
    ``l`` while ``h^(2)`` grows, so there we use ``h^(1) = 2 j - h^(2)``
    with ``h^(2)(z) = conj(h^(1)(conj z))`` recurred upwards.
    """
    z = np.asarray(z, dtype=complex)
    _check_overflow(z)
    if np.any(z == 0):
        raise ZeroDivisionError("h_l^(1) is singular at z = 0")
    lower = z.imag < 0
    if not np.any(lower):
        return _hn1_upward(lmax, z)
    zf = np.where(lower, np.conj(z), z)
    up = _hn1_upward(lmax, zf)
    alt = 2 * sph_jn_table(lmax, z) - np.conj(up)
    return np.where(lower, alt, up)


def _finish(values):
    return complex(values) if np.ndim(values) == 0 else values


def sph_bessel_j(l: int, z):
    """Spherical Bessel function ``j_l(z)`` of complex argument."""
    if l < 0:
        raise ValueError("order must be non-negative")
    return _finish(sph_jn_table(l, z)[l])


def sph_hankel1(l: int, z):
    """Spherical Hankel function of the first kind ``h_l^(1)(z)``."""
    if l < 0:
        raise ValueError("order must be non-negative")
    return _finish(sph_hn1_table(l, z)[l])


def sph_bessel_y(l: int, z):
    """Spherical Neumann function ``y_l(z) = -i (h_l^(1) - j_l)``."""
    return _finish(-1j * (sph_hn1_table(l, z)[l] - sph_jn_table(l, z)[l]))


def sph_bessel_derivatives(l: int, z):
    """Derivatives ``(j_l'(z), h_l^(1)'(z))``.

    Uses ``f_l' = f_{l-1} - (l + 1) f_l / z`` (and ``f_0' = -f_1``).
    """
    if l < 0:
        raise ValueError("order must be non-negative")
    z = np.asarray(z, dtype=complex)
    jt = sph_jn_table(l + 1, z)
    ht = sph_hn1_table(l + 1, z)
    if l == 0:
        dj, dh = -jt[1], -ht[1]
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            dj = jt[l - 1] - (l + 1) / z * jt[l]
        # j_l'(0) vanishes except for l = 1 where it equals 1/3
        dj = np.where(z == 0, 1.0 / 3.0 if l == 1 else 0.0, dj)
        dh = ht[l - 1] - (l + 1) / z * ht[l]
    return _finish(dj), _finish(dh)


def riccati_bessel(l: int, z):
    """Riccati-Bessel functions and derivatives ``(psi, psi', xi, xi')``.

    ``psi(z) = z j_l(z)`` and ``xi(z) = z h_l^(1)(z)``.
    """
    z = np.asarray(z, dtype=complex)
    jt = sph_jn_table(l + 1, z)
    ht = sph_hn1_table(l + 1, z)
    j, h = jt[l], ht[l]
    # (z f_l)' = z f_{l-1} - l f_l  (l >= 1);  (z f_0)' = f_0 - z f_1
    if l == 0:
        dpsi = j - z * jt[1]
        dxi = h - z * ht[1]
    else:
        dpsi = z * jt[l - 1] - l * j
        dxi = z * ht[l - 1] - l * h
    return tuple(_finish(v) for v in (z * j, dpsi, z * h, dxi))
