"""Physical constants in SI units (CODATA values shipped with scipy)."""

from scipy import constants as _sc

C0 = _sc.c
MU0 = _sc.mu_0
# derived rather than taken from the table: the tabulated pair satisfies
# eps0 mu0 c^2 = 1 only to ~1e-12, which breaks exterior identities at large R
EPS0 = 1.0 / (MU0 * C0**2)
Z0 = MU0 * C0

__all__ = ["C0", "MU0", "EPS0", "Z0"]
