"""Dispersive material laws evaluated at complex frequency.

Three models are provided. :class:`NonDispersive` holds constant relative
permittivity and permeability. :class:`Lorentz` is a single-pole
oscillator

.. math:: \\varepsilon(\\omega) = \\varepsilon_\\infty
          - \\frac{\\varepsilon_\\infty\\omega_p^2}{\\omega^2-\\omega_0^2+i\\omega\\gamma},

and :class:`Drude` is its ``omega_0 = 0`` specialisation. The time
convention is ``exp(-i omega t)`` everywhere in the package, so passive
media have ``Im eps > 0`` on the real axis and the laws satisfy
``eps(omega)* = eps(-omega*)``.

Frequencies are angular frequencies in rad/s. Permittivities are
relative. :func:`d_omega_mu` returns an absolute value (H/m) because the
norm integrands use it directly next to ``MU0``.
"""

from __future__ import annotations

import configparser
import functools
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Union

import numpy as np

from .constants import MU0
from .errors import ConfigError, EvaluationAtMaterialPole

#: Denominators with modulus below this value (SI units) count as a pole.
POLE_TOLERANCE = 1e-30


def _scalar_aware(func):
    """Return a Python complex for scalar input, an array otherwise."""

    @functools.wraps(func)
    def wrapper(self, omega):
        out = func(self, omega)
        return complex(out) if np.ndim(out) == 0 else out

    return wrapper


@dataclass(frozen=True)
class NonDispersive:
    """Frequency-independent medium.

    Parameters
    ----------
    eps_r : complex
        Relative permittivity.
    mu_r : complex
        Relative permeability.
    """

    eps_r: complex = 1.0
    mu_r: complex = 1.0

    @_scalar_aware
    def permittivity(self, omega):
        return np.full_like(np.asarray(omega, dtype=complex), self.eps_r)

    @_scalar_aware
    def d_omega_eps(self, omega):
        return self.permittivity(omega)

    @_scalar_aware
    def permeability(self, omega):
        return np.full_like(np.asarray(omega, dtype=complex), self.mu_r)

    @_scalar_aware
    def d_omega_mu(self, omega):
        return MU0 * self.permeability(omega)

    @property
    def is_dispersive(self) -> bool:
        return False

    def refractive_index(self, omega=0.0):
        """Principal square root of ``eps_r * mu_r``."""
        return np.sqrt(complex(self.eps_r) * complex(self.mu_r))


class _Oscillator:
    """Shared evaluation code of the Lorentz and Drude laws."""

    def _denominator(self, omega):
        w = np.asarray(omega, dtype=complex)
        den = w * w - self.omega_0**2 + 1j * w * self.gamma
        if self.omega_p != 0.0 and np.any(np.abs(den) < POLE_TOLERANCE):
            raise EvaluationAtMaterialPole(
                f"material pole hit at omega={omega!r}"
            )
        return w, den

    @_scalar_aware
    def permittivity(self, omega):
        w, den = self._denominator(omega)
        if self.omega_p == 0.0:
            return np.full_like(w, self.eps_inf)
        return self.eps_inf - self.eps_inf * self.omega_p**2 / den

    @_scalar_aware
    def d_omega_eps(self, omega):
        # d(w eps)/dw = eps_inf + eps_inf wp^2 (w^2 + w0^2) / D^2
        w, den = self._denominator(omega)
        if self.omega_p == 0.0:
            return np.full_like(w, self.eps_inf)
        return self.eps_inf + self.eps_inf * self.omega_p**2 * (
            w * w + self.omega_0**2
        ) / (den * den)

    @_scalar_aware
    def permeability(self, omega):
        return np.ones_like(np.asarray(omega, dtype=complex))

    @_scalar_aware
    def d_omega_mu(self, omega):
        return MU0 * self.permeability(omega)

    @property
    def is_dispersive(self) -> bool:
        return self.omega_p != 0.0

    def refractive_index(self, omega):
        return np.sqrt(self.permittivity(omega))


@dataclass(frozen=True)
class Lorentz(_Oscillator):
    """Single-pole Lorentz oscillator (non-magnetic).

    Parameters
    ----------
    eps_inf : float
        High-frequency permittivity.
    omega_p : float
        Plasma frequency in rad/s.
    omega_0 : float
        Resonance frequency in rad/s.
    gamma : float
        Damping rate in rad/s.
    """

    eps_inf: float
    omega_p: float
    omega_0: float
    gamma: float


@dataclass(frozen=True)
class Drude(_Oscillator):
    """Free-electron metal: the Lorentz law with ``omega_0 = 0``.

    Parameters
    ----------
    eps_inf : float
        High-frequency permittivity.
    omega_p : float
        Plasma frequency in rad/s.
    gamma : float
        Damping rate in rad/s.
    """

    eps_inf: float
    omega_p: float
    gamma: float

    @property
    def omega_0(self) -> float:
        return 0.0


MaterialModel = Union[NonDispersive, Lorentz, Drude]

VACUUM = NonDispersive(1.0, 1.0)


def permittivity(model: MaterialModel, omega):
    """Relative permittivity of ``model`` at (complex) ``omega``."""
    return model.permittivity(omega)


def d_omega_eps(model: MaterialModel, omega):
    """Spectral derivative ``d(omega eps_r)/d omega`` (relative units)."""
    return model.d_omega_eps(omega)


def permeability(model: MaterialModel, omega):
    """Relative permeability of ``model``."""
    return model.permeability(omega)


def d_omega_mu(model: MaterialModel, omega):
    """Spectral derivative ``d(omega mu)/d omega`` in H/m."""
    return model.d_omega_mu(omega)


def check_physical(model: MaterialModel) -> None:
    """Raise ``ValueError`` unless the parameters describe a passive medium."""
    if isinstance(model, _Oscillator):
        if model.eps_inf < 1 or model.gamma < 0 or model.omega_p < 0:
            raise ValueError(f"unphysical parameters: {model}")


_FIELDS = {
    "nondispersive": ("eps_r", "mu_r"),
    "drude": ("eps_inf", "omega_p_rad_s", "gamma_rad_s"),
    "lorentz": ("eps_inf", "omega_p_rad_s", "omega_0_rad_s", "gamma_rad_s"),
}


def _number(text: str, key: str):
    try:
        value = complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {text!r}") from exc
    return value.real if value.imag == 0 else value


def material_from_mapping(section: Mapping[str, str]) -> MaterialModel:
    """Build a material from a config section.

    Recognised layouts (unknown keys raise :class:`ConfigError`)::

        model = nondispersive   eps_r, mu_r (mu_r optional)
        model = drude           eps_inf, omega_p_rad_s, gamma_rad_s
        model = lorentz         eps_inf, omega_p_rad_s, omega_0_rad_s, gamma_rad_s
        preset = <name>         a parameter set from the bundled presets
    """
    data = dict(section)
    if "preset" in data:
        if len(data) != 1:
            raise ConfigError("'preset' cannot be combined with other keys")
        return load_preset(data["preset"])
    kind = data.pop("model", None)
    if kind not in _FIELDS:
        raise ConfigError(f"unknown material model {kind!r}")
    allowed = _FIELDS[kind]
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {sorted(unknown)}")
    vals = {k: _number(v, k) for k, v in data.items()}
    try:
        if kind == "nondispersive":
            return NonDispersive(vals["eps_r"], vals.get("mu_r", 1.0))
        if kind == "drude":
            return Drude(
                vals["eps_inf"], vals["omega_p_rad_s"], vals["gamma_rad_s"]
            )
        return Lorentz(
            vals["eps_inf"],
            vals["omega_p_rad_s"],
            vals["omega_0_rad_s"],
            vals["gamma_rad_s"],
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r} for {kind}") from exc


def _presets() -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    text = resources.files("qnmlab").joinpath("data/materials.ini").read_text()
    parser.read_string(text)
    return parser


def preset_names() -> list[str]:
    """Names of the bundled material parameter sets."""
    return sorted(s.split(".", 1)[1] for s in _presets().sections())


def load_preset(name: str) -> MaterialModel:
    """Load a named parameter set, e.g. ``"silver-arc10"``."""
    parser = _presets()
    section = f"material.{name}"
    if not parser.has_section(section):
        raise ConfigError(f"unknown material preset {name!r}")
    return material_from_mapping(parser[section])
