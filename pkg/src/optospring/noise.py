"""Noise quantities expressed over independent white channels.

A :class:`NoiseVector` stores the complex coefficient of every channel a
fluctuating quantity depends on at a given frequency. Spectral densities are
always derived from the coefficients, never stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

QUADRATURE_TAGS = ("V1", "V2", "V1p", "V2p", "N")
TAGS = QUADRATURE_TAGS + ("FTH",)


@dataclass(frozen=True)
class NoiseChannel:
    """One independent white noise source.

    ``owner`` is the field label (quadratures) or detector name (``N``).
    Quadrature channels have unit single-sided density unless ``density``
    says otherwise (excess classical amplitude noise); ``FTH`` carries the
    thermal force density ``4 m gamma_m k_B T``.
    """

    tag: str
    owner: str = ""
    density: float = 1.0

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown noise channel tag {self.tag!r}")
        if self.density < 0:
            raise ValueError("channel density must be non-negative")

    def __str__(self):
        return f"{self.tag}({self.owner})" if self.owner else self.tag


@dataclass(frozen=True)
class NoiseVector:
    omega: object
    coeffs: Mapping[NoiseChannel, object] = field(default_factory=dict)

    def spectral_density(self):
        """``sum |c|^2 S_channel``; broadcasts over array-valued omega."""
        total = np.zeros(np.shape(self.omega))
        for ch, c in self.coeffs.items():
            total = total + np.abs(c) ** 2 * ch.density
        return total[()] if np.ndim(total) == 0 else total

    def contributions(self) -> dict:
        return {ch: np.abs(c) ** 2 * ch.density for ch, c in self.coeffs.items()}

    def coefficient(self, channel: NoiseChannel):
        return self.coeffs.get(channel, 0.0)

    def by_tag(self, tag: str, owner: str = ""):
        for ch, c in self.coeffs.items():
            if ch.tag == tag and ch.owner == owner:
                return c
        return 0.0

    def __add__(self, other: "NoiseVector") -> "NoiseVector":
        coeffs = dict(self.coeffs)
        for ch, c in other.coeffs.items():
            coeffs[ch] = coeffs[ch] + c if ch in coeffs else c
        return NoiseVector(self.omega, coeffs)

    def scaled(self, factor) -> "NoiseVector":
        return NoiseVector(self.omega, {ch: factor * c for ch, c in self.coeffs.items()})


def sum_vectors(vectors, omega) -> NoiseVector:
    out = NoiseVector(omega, {})
    for v in vectors:
        out = out + v
    return out
