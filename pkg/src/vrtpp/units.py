"""Canonical unit system (mu = 1) used for all internal orbital computation."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CanonicalUnits:
    mu_e: float = 3.986e5  # km^3/s^2
    du: float = 42164.0  # km
    tu: float = 3.809  # hours
    g0: float = 9.81  # m/s^2

    @property
    def tu_s(self) -> float:
        return self.tu * 3600.0

    @property
    def vu_kms(self) -> float:
        """One DU/TU expressed in km/s."""
        return self.du / self.tu_s

    @property
    def mu_canonical(self) -> float:
        """Gravitational parameter expressed in DU^3/TU^2 (close to 1 by construction)."""
        return self.mu_e * self.tu_s**2 / self.du**3

    def speed_to_kms(self, v: float) -> float:
        return v * self.vu_kms

    def speed_to_canonical(self, v_kms: float) -> float:
        return v_kms / self.vu_kms

    def days_to_tu(self, days: float) -> float:
        return days * 24.0 / self.tu

    def km_to_du(self, km: float) -> float:
        return km / self.du


DEFAULT_UNITS = CanonicalUnits()


def circular_period(a: float) -> float:
    """Orbital period in TU of an orbit with semimajor axis ``a`` in DU."""
    return 2.0 * math.pi * math.sqrt(a**3)
