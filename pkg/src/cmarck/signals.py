"""Constellations, symbol generation and exact constellation moments."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np


class ConfigurationError(ValueError):
    """Raised for unsupported or inconsistent configuration values."""


class ModClass(str, enum.Enum):
    QAM = "qam"
    PSK = "psk"


SUPPORTED_ORDERS = {
    ModClass.QAM: (4, 16, 64),
    ModClass.PSK: (2, 4, 8),
}


@dataclass(frozen=True)
class Constellation:
    """Unit-power symbol alphabet of one modulation level.

    Attributes
    ----------
    mod_class : ModClass
        QAM or PSK.
    order : int
        Number of points.
    points : ndarray of complex
        The alphabet, mean zero and average power one.
    moments : dict
        Exact even absolute moments ``{2: E|s|^2, 4: E|s|^4, 6: E|s|^6}``
        as :class:`fractions.Fraction` for QAM and exact ones for PSK.
    """

    mod_class: ModClass
    order: int
    points: np.ndarray = field(repr=False)
    moments: dict = field(repr=False)

    @property
    def name(self) -> str:
        return f"{self.order}-{self.mod_class.value.upper()}"

    def moment(self, p: int) -> float:
        """Return ``E|s|^p`` for even ``p`` as a float."""
        return float(self.moments[p])

    @property
    def constant_modulus(self) -> bool:
        return self.moments[4] == 1


def _gray(n: int) -> int:
    return n ^ (n >> 1)


def _qam_levels(order: int) -> tuple[np.ndarray, np.ndarray]:
    side = int(round(np.sqrt(order)))
    # odd-integer amplitudes in Gray order along each axis
    amps = np.array([2 * _gray(i) - side + 1 for i in range(side)])
    re, im = np.meshgrid(amps, amps, indexing="ij")
    return re.ravel(), im.ravel()


@lru_cache(maxsize=None)
def build_constellation(mod_class: ModClass | str, order: int) -> Constellation:
    """Build a unit-power QAM or PSK constellation with exact moments.

    Parameters
    ----------
    mod_class : ModClass or str
        ``"qam"`` or ``"psk"``.
    order : int
        Modulation order. QAM supports square grids 4/16/64, PSK 2/4/8.

    Raises
    ------
    ConfigurationError
        If the ``(mod_class, order)`` pair is unsupported.
    """
    try:
        mod_class = ModClass(mod_class)
    except ValueError as exc:
        raise ConfigurationError(f"unknown modulation class {mod_class!r}") from exc
    if order not in SUPPORTED_ORDERS[mod_class]:
        raise ConfigurationError(
            f"unsupported order {order} for {mod_class.value}; "
            f"expected one of {SUPPORTED_ORDERS[mod_class]}"
        )

    if mod_class is ModClass.PSK:
        points = np.exp(2j * np.pi * np.arange(order) / order)
        moments = {p: Fraction(1) for p in (2, 4, 6)}
    else:
        re, im = _qam_levels(order)
        sq = re.astype(np.int64) ** 2 + im.astype(np.int64) ** 2
        energy = Fraction(int(sq.sum()), order)
        points = (re + 1j * im) / np.sqrt(float(energy))
        moments = {
            p: Fraction(int((sq ** (p // 2)).sum()), order) / energy ** (p // 2)
            for p in (2, 4, 6)
        }
    points.setflags(write=False)
    return Constellation(mod_class, order, points, moments)


def draw_symbols(c: Constellation, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. equiprobable symbols from ``c``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return c.points[rng.integers(0, c.order, size=n)]
