"""Measurement settings: linear-polarizer pairs and labelled projector pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ValidationError

_S = 1 / math.sqrt(2)

# single-qubit kets in the (H, V) basis; R/L follow the (H -/+ iV)/sqrt(2) convention
KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}


def polarizer_projector(theta: float) -> np.ndarray:
    """|theta><theta| with |theta> = cos(theta)|H> + sin(theta)|V>."""
    v = np.array([math.cos(theta), math.sin(theta)], dtype=complex)
    return np.outer(v, v.conj())


def ket_projector(label: str) -> np.ndarray:
    v = KETS[label]
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class AnalyzerSetting:
    """Polarizer angles (radians) at site A and site B."""

    theta1: float
    theta2: float

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        return polarizer_projector(self.theta1), polarizer_projector(self.theta2)

    def operator(self) -> np.ndarray:
        p1, p2 = self.projectors()
        return np.kron(p1, p2)

    def same_as(self, other, tol: float = 1e-9) -> bool:
        return (
            isinstance(other, AnalyzerSetting)
            and same_polarizer_angle(self.theta1, other.theta1, tol)
            and same_polarizer_angle(self.theta2, other.theta2, tol)
        )


@dataclass(frozen=True)
class ProjectorSetting:
    """Labelled product projector, e.g. ``ProjectorSetting("H", "D")``."""

    label1: str
    label2: str

    def __post_init__(self):
        for name in ("label1", "label2"):
            lab = str(getattr(self, name)).upper()
            if lab not in KETS:
                raise ValidationError(f"unknown projector label {lab!r}; expected one of {sorted(KETS)}")
            object.__setattr__(self, name, lab)

    @property
    def label(self) -> str:
        return self.label1 + self.label2

    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        return ket_projector(self.label1), ket_projector(self.label2)

    def operator(self) -> np.ndarray:
        p1, p2 = self.projectors()
        return np.kron(p1, p2)

    def same_as(self, other, tol: float = 1e-9) -> bool:
        return isinstance(other, ProjectorSetting) and self.label == other.label


def same_polarizer_angle(a: float, b: float, tol: float = 1e-9) -> bool:
    """Polarizer angles are equivalent modulo pi."""
    d = (a - b) % math.pi
    return min(d, math.pi - d) < tol
