"""Material models: group Planck functions, group opacities and the linear
material energy law of the Fleck-Cummings problem.

Units throughout: cm, ns, keV, and GJ for energy (so ``a_R`` is in
GJ / (cm^3 keV^4) and intensities in GJ / (cm^2 ns sr)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc
from scipy.special import bernoulli, factorial

from .grid import FrequencyGroups

#: speed of light, cm/ns
C_LIGHT = _sc.c * 1e2 * 1e-9
_KELVIN_PER_KEV = 1e3 * _sc.e / _sc.k
#: radiation constant, GJ / (cm^3 keV^4)
A_RAD = (4.0 * _sc.Stefan_Boltzmann / _sc.c) * _KELVIN_PER_KEV**4 * 1e-6 * 1e-9

_PI4_15 = np.pi**4 / 15.0
_SERIES_SWITCH = 2.0
_NB = 40
_BN = bernoulli(_NB)
_BN[1] = -0.5
_LOWER_COEF = np.array([_BN[n] / (factorial(n, exact=True) * (n + 3)) for n in range(_NB + 1)])
# odd Bernoulli numbers beyond B_1 vanish
_LOWER_EVEN = _LOWER_COEF[0::2]


class DomainError(ValueError):
    """Raised when a material function is evaluated outside its domain."""


def _check_positive(name, v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError(f"{name} must be positive")
    return v


def _planck_lower(x):
    """``int_0^x t^3/(e^t - 1) dt`` for ``0 <= x <= 2`` by the Bernoulli series."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    acc = np.zeros_like(x)
    for c in _LOWER_EVEN[::-1]:
        acc = acc * x2 + c
    return x**3 * (acc + _LOWER_COEF[1] * x)


def _tail_poly(x, k):
    return x**3 / k + 3.0 * x**2 / k**2 + 6.0 * x / k**3 + 6.0 / k**4


def _planck_band_scaled(xlo, xhi):
    """``exp(xlo) * int_xlo^xhi t^3/(e^t - 1) dt`` for ``0 <= xlo < xhi <= inf``.

    The exponential scaling keeps bands deep in the Wien tail representable.
    """
    xlo, xhi = np.broadcast_arrays(np.asarray(xlo, float), np.asarray(xhi, float))
    out = np.empty(xlo.shape)

    lo_small = xlo < _SERIES_SWITCH
    both = lo_small & (xhi <= _SERIES_SWITCH)
    if np.any(both):
        a, b = xlo[both], xhi[both]
        out[both] = (_planck_lower(b) - _planck_lower(a)) * np.exp(a)

    mixed = lo_small & ~both
    if np.any(mixed):
        a, b = xlo[mixed], xhi[mixed]
        out[mixed] = np.exp(a) * (_PI4_15 - _planck_lower(a) - _tail_scaled(b, np.zeros_like(b)))

    big = ~lo_small
    if np.any(big):
        a, b = xlo[big], xhi[big]
        out[big] = _tail_scaled(a, a) - _tail_scaled(b, a)
    return out


def _tail_scaled(x, s):
    """``exp(s) * int_x^inf t^3/(e^t - 1) dt`` for ``x >= 2`` (or inf), ``s <= x``."""
    x = np.asarray(x, float)
    s = np.asarray(s, float)
    out = np.zeros(x.shape)
    fin = np.isfinite(x)
    if not np.any(fin):
        return out
    xf, sf = x[fin], s[fin]
    kmax = int(np.ceil(40.0 / max(float(xf.min()), 1.0))) + 1
    k = np.arange(kmax, 0, -1, dtype=float)[:, None]
    with np.errstate(under="ignore"):
        terms = np.exp(sf - k * xf) * _tail_poly(xf, k)
    out[fin] = terms.sum(axis=0)
    return out


def _scaled_bands(T, groups: FrequencyGroups):
    """``(xlo, xhi, band)`` with ``band = exp(xlo) * int_xlo^xhi t^3/(e^t-1) dt``."""
    x = groups.edges / T[..., None]
    xlo, xhi = x[..., :-1], x[..., 1:]
    return xlo, xhi, _planck_band_scaled(xlo, xhi)


def _fractions_from_bands(xlo, band):
    with np.errstate(under="ignore"):
        return band * np.exp(-xlo) / _PI4_15


def planck_fractions(T, groups: FrequencyGroups):
    """Fraction of the Planck spectrum falling in each group.

    Returns an array of shape ``T.shape + (G,)``.  With folded tails the
    fractions sum to one.
    """
    T = _check_positive("temperature", T)
    xlo, _, band = _scaled_bands(T, groups)
    return _fractions_from_bands(xlo, band)


def planck_total(T):
    """``int_0^inf B_nu dnu = a_R c T^4 / (4 pi)``."""
    T = _check_positive("temperature", T)
    return A_RAD * C_LIGHT * T**4 / (4.0 * np.pi)


def planck_group(T, groups: FrequencyGroups, group=None):
    """Group-integrated Planck intensity ``B_g(T)``.

    With ``group`` given, only that group's value is returned; otherwise the
    trailing axis runs over all groups.
    """
    T = _check_positive("temperature", T)
    B = planck_total(T)[..., None] * planck_fractions(T, groups)
    return B if group is None else B[..., group]


def _x4_bose(x):
    """``x^4 / (e^x - 1)``, continuous at 0 and vanishing at infinity."""
    x = np.asarray(x, float)
    fin = np.isfinite(x) & (x > 0)
    xs = np.where(fin, x, 1.0)
    with np.errstate(under="ignore"):
        val = xs**4 * np.exp(-xs) / -np.expm1(-xs)
    return np.where(fin, val, 0.0)


def planck_group_derivative(T, groups: FrequencyGroups):
    """``dB_g/dT`` with the trailing axis over groups.

    Differentiating ``B_g = a_R c T^4 / (4 pi) * frac_g(T)`` under the band
    integral gives ``a_R c T^3 / (4 pi) * (4 frac_g + (phi(x_lo) - phi(x_hi))
    / (pi^4/15))`` with ``phi(x) = x^4 / (e^x - 1)`` and ``x = nu / T``.
    """
    T = _check_positive("temperature", T)
    xlo, xhi, band = _scaled_bands(T, groups)
    frac = _fractions_from_bands(xlo, band)
    edge = (_x4_bose(xlo) - _x4_bose(xhi)) / _PI4_15
    return (A_RAD * C_LIGHT * T**3 / (4.0 * np.pi))[..., None] * (4.0 * frac + edge)


class FleckCummingsOpacity:
    """``kappa_nu = coefficient / nu^3 * (1 - exp(-nu/T))``, Planck-averaged per group.

    With Planck weighting the product ``kappa_nu B_nu`` reduces to
    ``coefficient * exp(-nu/T)`` up to a factor, so the numerator of the
    group average is closed-form.
    """

    def __init__(self, coefficient: float = 27.0):
        if not coefficient > 0:
            raise DomainError("opacity coefficient must be positive")
        self.coefficient = float(coefficient)

    def spectral(self, nu, T):
        nu = np.asarray(nu, float)
        return self.coefficient / nu**3 * -np.expm1(-nu / T)

    def group_mean(self, T, groups: FrequencyGroups, bands=None):
        T = _check_positive("temperature", T)
        xlo, xhi, den = _scaled_bands(T, groups) if bands is None else bands
        num = -np.expm1(-(xhi - xlo))
        return self.coefficient / T[..., None] ** 3 * num / den


class ConstantOpacity:
    """Grey opacity, identical for every frequency."""

    def __init__(self, value: float):
        if not value > 0:
            raise DomainError("opacity must be positive")
        self.value = float(value)

    def spectral(self, nu, T):
        return np.full(np.broadcast(np.asarray(nu), np.asarray(T)).shape, self.value)

    def group_mean(self, T, groups: FrequencyGroups, bands=None):
        T = _check_positive("temperature", T)
        return np.full(T.shape + (groups.count,), self.value)


@dataclass
class MaterialModel:
    """Linear-heat-capacity material with a spectral opacity law.

    Parameters
    ----------
    cv : float
        Heat capacity per unit volume, GJ / (cm^3 keV).
    opacity : object
        Provides ``group_mean(T, groups, bands=None)`` returning
        ``T.shape + (G,)``; ``bands`` passes precomputed scaled Planck band
        integrals for models that can reuse them.
    """

    cv: float
    opacity: object

    def __post_init__(self):
        if not self.cv > 0:
            raise DomainError("heat capacity must be positive")

    @classmethod
    def fleck_cummings(cls, t_in: float = 1.0, cv_factor: float = 0.5917,
                       coefficient: float = 27.0) -> "MaterialModel":
        """Material of the Fleck-Cummings test, ``c_v = cv_factor * a_R * t_in``."""
        return cls(cv=cv_factor * A_RAD * t_in, opacity=FleckCummingsOpacity(coefficient))

    def material_energy(self, T):
        T = _check_positive("temperature", T)
        return self.cv * T

    def temperature_of(self, energy):
        energy = _check_positive("material energy", energy)
        return energy / self.cv

    def group_opacity(self, T, groups: FrequencyGroups, group=None):
        k = self.opacity.group_mean(T, groups)
        return k if group is None else k[..., group]

    def group_data(self, T, groups: FrequencyGroups):
        """Opacities and Planck functions with the group axis leading.

        Returns ``(kappa, B)``, each of shape ``(G,) + T.shape``.
        """
        T = _check_positive("temperature", T)
        bands = _scaled_bands(T, groups)
        kappa = self.opacity.group_mean(T, groups, bands=bands)
        B = planck_total(T)[..., None] * _fractions_from_bands(bands[0], bands[2])
        return np.moveaxis(kappa, -1, 0), np.moveaxis(B, -1, 0)
