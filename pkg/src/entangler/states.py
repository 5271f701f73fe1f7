"""Constructors for the two-qubit state families produced by the entangler source.

Besides the closed-form matrices this module carries a sector model of the
entanglement ring: each ring sector contributes either the coherent singlet
or a decohered (diagonal) mixture, and the weights of the sectors fix the
resulting mixed state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BASIS,
    PAULI_X,
    DensityMatrix,
    PureState,
    ValidationError,
    as_density_matrix,
    from_pure,
)

_SQRT_HALF = 1 / math.sqrt(2)


def _check_probability(p, name="p") -> float:
    p = float(p)
    if not math.isfinite(p) or p < 0.0 or p > 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def _diag_projector(*labels) -> np.ndarray:
    m = np.zeros((4, 4), dtype=complex)
    for lab in labels:
        i = BASIS.index(lab)
        m[i, i] = 1.0
    return m


def bell_phi(phi: float) -> PureState:
    """(|HH> + exp(i phi)|VV>)/sqrt(2), the state emitted by the bare source."""
    phi = float(phi)
    if not math.isfinite(phi):
        raise ValidationError(f"phase must be finite, got {phi!r}")
    return PureState([_SQRT_HALF, 0, 0, np.exp(1j * phi) * _SQRT_HALF])


def singlet() -> PureState:
    return PureState([0, _SQRT_HALF, -_SQRT_HALF, 0])


def singlet_density() -> DensityMatrix:
    return from_pure(singlet())


def maximally_mixed() -> DensityMatrix:
    return DensityMatrix.maximally_mixed()


_FLIP = {
    "A": np.kron(PAULI_X, np.eye(2)),
    "B": np.kron(np.eye(2), PAULI_X),
}


def apply_halfwave_flip(state, arm: str = "B"):
    """Swap H and V on one arm, as a half-wave plate at 45 degrees does.

    Works on both pure states and density matrices and returns the same type.
    """
    try:
        u = _FLIP[str(arm).upper()]
    except KeyError:
        raise ValidationError(f"arm must be 'A' or 'B', got {arm!r}") from None
    if isinstance(state, PureState):
        return PureState(u @ state.amplitudes)
    rho = as_density_matrix(state).entries
    return DensityMatrix(u @ rho @ u)


def depolarize(state, visibility: float) -> DensityMatrix:
    """Mix a state with white noise: V rho + (1 - V) I/4."""
    v = _check_probability(visibility, "visibility")
    rho = as_density_matrix(state).entries
    return DensityMatrix(v * rho + (1 - v) * np.eye(4) / 4)


def _x_state(a, b, c, d) -> DensityMatrix:
    m = np.diag([a, b, b, d]).astype(complex)
    m[1, 2] = m[2, 1] = c
    return DensityMatrix(m)


def werner(p: float) -> DensityMatrix:
    p = _check_probability(p)
    return _x_state((1 - p) / 4, (1 + p) / 4, -p / 2, (1 - p) / 4)


def mems_g(p: float) -> float:
    p = _check_probability(p)
    return p / 2 if p >= 2 / 3 else 1 / 3


def mems(p: float) -> DensityMatrix:
    """Maximally entangled mixed state with concurrence ``p``."""
    g = mems_g(p)
    return _x_state(1 - 2 * g, g, -p / 2, 0.0)


@dataclass(frozen=True)
class SectorWeights:
    """Fractions of the ring in each sector.

    singlet_frac: coherent sector (pure singlet).
    mixed_hv_frac: decohered sector left unflipped, contributes HV/VH.
    mixed_hhvv_frac: decohered sector flipped by the half-wave plate, contributes HH/VV.
    """

    singlet_frac: float
    mixed_hv_frac: float
    mixed_hhvv_frac: float

    def __post_init__(self):
        for name in ("singlet_frac", "mixed_hv_frac", "mixed_hhvv_frac"):
            _check_probability(getattr(self, name), name)
        total = self.singlet_frac + self.mixed_hv_frac + self.mixed_hhvv_frac
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"sector weights sum to {total!r}, expected 1")

    @classmethod
    def for_werner(cls, p: float) -> "SectorWeights":
        p = _check_probability(p)
        return cls(p, (1 - p) / 2, (1 - p) / 2)


def sector_mixture(w: SectorWeights) -> DensityMatrix:
    if not isinstance(w, SectorWeights):
        w = SectorWeights(*w)
    m = (
        w.singlet_frac * singlet_density().entries
        + w.mixed_hv_frac * 0.5 * _diag_projector("HV", "VH")
        + w.mixed_hhvv_frac * 0.5 * _diag_projector("HH", "VV")
    )
    return DensityMatrix(m)


def mems_sector_weights(p: float) -> tuple[float, float, float]:
    """Weights of (singlet, HV+VH pair, HH) terms that build ``mems(p)``."""
    g = mems_g(p)
    return (p, g - p / 2, 1 - 2 * g)


def mems_sector_mixture(p: float) -> DensityMatrix:
    w_s, w_hv, w_hh = mems_sector_weights(p)
    m = (
        w_s * singlet_density().entries
        + w_hv * _diag_projector("HV", "VH")
        + w_hh * _diag_projector("HH")
    )
    return DensityMatrix(m)


def p_from_displacement(dx: float, x0: float = 1.0) -> float:
    """Singlet weight for a glass-plate displacement ``dx`` (same units as ``x0``).

    Saturating model p = 1 - exp(-dx/x0): zero at dx=0, slope 1/x0 there.
    """
    dx, x0 = float(dx), float(x0)
    if not (math.isfinite(dx) and dx >= 0):
        raise ValidationError(f"displacement must be >= 0, got {dx!r}")
    if not (math.isfinite(x0) and x0 > 0):
        raise ValidationError(f"calibration scale must be > 0, got {x0!r}")
    return -math.expm1(-dx / x0)


_FAMILY_KEYS = {
    "bell": {"phi"},
    "singlet": set(),
    "mixed": set(),
    "werner": {"p"},
    "mems": {"p"},
    "mems_sectors": {"p"},
    "sectors": {"wA", "wB", "wC"},
    "displacement": {"dx", "x0"},
}
_OPTIONAL_KEYS = {"displacement": {"x0"}, "bell": {"phi"}}


def state_from_config(params: dict) -> DensityMatrix:
    """Build a state from a JSON-style recipe such as ``{"family": "werner", "p": 0.42}``."""
    params = dict(params)
    family = params.pop("family", None)
    if family not in _FAMILY_KEYS:
        raise ValidationError(f"unknown state family {family!r}; expected one of {sorted(_FAMILY_KEYS)}")
    allowed = _FAMILY_KEYS[family]
    unknown = set(params) - allowed
    if unknown:
        raise ValidationError(f"unexpected keys for {family!r}: {sorted(unknown)}")
    missing = allowed - set(params) - _OPTIONAL_KEYS.get(family, set())
    if missing:
        raise ValidationError(f"missing keys for {family!r}: {sorted(missing)}")

    if family == "bell":
        return from_pure(bell_phi(params.get("phi", 0.0)))
    if family == "singlet":
        return singlet_density()
    if family == "mixed":
        return maximally_mixed()
    if family == "werner":
        return werner(params["p"])
    if family == "mems":
        return mems(params["p"])
    if family == "mems_sectors":
        return mems_sector_mixture(params["p"])
    if family == "sectors":
        return sector_mixture(SectorWeights(params["wA"], params["wB"], params["wC"]))
    return werner(p_from_displacement(params["dx"], params.get("x0", 1.0)))
