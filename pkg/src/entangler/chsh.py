"""CHSH Bell tests: ideal values from a density matrix and estimates from coincidence counts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import ValidationError, as_density_matrix
from .settings import AnalyzerSetting, polarizer_projector

HALF_PI = math.pi / 2
LOCAL_BOUND = 2.0


@dataclass(frozen=True)
class ChshAngles:
    """Analyzer angles (radians): ``a``/``a_prime`` at site A, ``b``/``b_prime`` at site B."""

    a: float
    a_prime: float
    b: float
    b_prime: float

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"angle {name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)

    @classmethod
    def from_degrees(cls, a, a_prime, b, b_prime) -> "ChshAngles":
        return cls(*(math.radians(x) for x in (a, a_prime, b, b_prime)))

    def terms(self) -> list[tuple[int, float, float]]:
        """(sign, theta1, theta2) for the four correlation terms of S."""
        return [
            (+1, self.a, self.b),
            (-1, self.a, self.b_prime),
            (+1, self.a_prime, self.b),
            (+1, self.a_prime, self.b_prime),
        ]

    def settings(self) -> list[AnalyzerSetting]:
        """The 16 analyzer settings needed to estimate S from counts."""
        out = []
        for _, t1, t2 in self.terms():
            out.extend(AnalyzerSetting(x, y) for x, y in _quadruple(t1, t2))
        return out

    def unique_settings(self) -> list[AnalyzerSetting]:
        """``settings()`` with physically identical settings (angles mod pi) merged."""
        unique: list[AnalyzerSetting] = []
        for s in self.settings():
            if not any(s.same_as(u) for u in unique):
                unique.append(s)
        return unique


# maximizes |S| for the singlet under the polarizer model
OPTIMAL_ANGLES = ChshAngles(0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)
# the set as printed alongside the reported measurement; gives S = 0 for a singlet
PRINTED_ANGLES = ChshAngles(0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)

ANGLE_SETS = {"optimal": OPTIMAL_ANGLES, "printed": PRINTED_ANGLES}


def _quadruple(t1: float, t2: float):
    # order: (t1,t2), (t1+,t2+), (t1,t2+), (t1+,t2); first two enter the numerator with +
    return [(t1, t2), (t1 + HALF_PI, t2 + HALF_PI), (t1, t2 + HALF_PI), (t1 + HALF_PI, t2)]


def coincidence_probability(rho, theta1: float, theta2: float) -> float:
    r = as_density_matrix(rho).entries
    op = np.kron(polarizer_projector(theta1), polarizer_projector(theta2))
    p = float(np.real(np.trace(r @ op)))
    return min(max(p, 0.0), 1.0)


def _ratio(c_same_a, c_same_b, c_diff_a, c_diff_b) -> float:
    num = c_same_a + c_same_b - c_diff_a - c_diff_b
    den = c_same_a + c_same_b + c_diff_a + c_diff_b
    if den <= 0:
        raise ValidationError("zero denominator: all four coincidence values vanish")
    return num / den


def correlation(rho, theta1: float, theta2: float) -> float:
    """Normalized polarization correlation built from the four coincidence combinations."""
    rho = as_density_matrix(rho)
    c = [coincidence_probability(rho, x, y) for x, y in _quadruple(theta1, theta2)]
    return _ratio(*c)


def chsh_S(rho, angles: ChshAngles = OPTIMAL_ANGLES) -> float:
    rho = as_density_matrix(rho)
    return abs(sum(sign * correlation(rho, t1, t2) for sign, t1, t2 in angles.terms()))


@dataclass(frozen=True)
class ChshEstimate:
    S: float
    sigma_S: float
    significance: float
    correlations: tuple[float, float, float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["correlations"] = list(self.correlations)
        return d


def _match_counts(records, angles: ChshAngles):
    """Distinct counts and durations, plus a 4x4 index map (one row per CHSH term, columns in _quadruple order).

    Settings repeated across terms map to the same distinct record, so their
    counts are shared rather than treated as independent.
    """
    unique = angles.unique_settings()
    found: dict[int, object] = {}
    for rec in records:
        idx = [i for i, u in enumerate(unique) if u.same_as(rec.setting)]
        if not idx:
            raise ValidationError(f"record setting {rec.setting} is not part of the CHSH angle set")
        if idx[0] in found:
            raise ValidationError(f"duplicated setting {rec.setting}")
        found[idx[0]] = rec
    missing = [unique[i] for i in range(len(unique)) if i not in found]
    if missing:
        raise ValidationError(f"missing settings: {missing}")

    counts = np.array([float(found[i].coincidences) for i in range(len(unique))])
    durations = np.array([float(found[i].duration) for i in range(len(unique))])
    index = np.array([next(i for i, u in enumerate(unique) if u.same_as(s)) for s in angles.settings()]).reshape(4, 4)
    return counts, durations, index


def _S_from_rates(rates: np.ndarray, angles: ChshAngles):
    signs = np.array([sign for sign, _, _ in angles.terms()], dtype=float)
    corr = np.array([_ratio(*row) for row in rates])
    return float(abs(signs @ corr)), corr


def estimate_S_from_counts(
    records,
    angles: ChshAngles = OPTIMAL_ANGLES,
    method: str = "delta",
    n_boot: int = 2000,
    seed: int = 0,
) -> ChshEstimate:
    """Estimate S and its standard error from 16 coincidence records.

    ``method="delta"`` propagates Poisson variances to first order;
    ``method="bootstrap"`` redraws every count from Poisson(observed) instead.
    """
    counts, durations, index = _match_counts(records, angles)
    rates = counts / durations
    S, corr = _S_from_rates(rates[index], angles)

    if method == "delta":
        # dS/d(rate) for each of the 16 slots, summed onto the distinct records they read
        signs = np.array([sign for sign, _, _ in angles.terms()], dtype=float)
        outer = math.copysign(1.0, float(signs @ np.array(corr)))
        r = rates[index]
        plus, minus = r[:, 0] + r[:, 1], r[:, 2] + r[:, 3]
        total = plus + minus
        d_plus, d_minus = 2.0 * minus / total**2, -2.0 * plus / total**2
        slot_grad = outer * signs[:, None] * np.stack([d_plus, d_plus, d_minus, d_minus], axis=1)
        grad = np.bincount(index.ravel(), weights=slot_grad.ravel(), minlength=counts.size)
        sigma = math.sqrt(float(np.sum(grad**2 * counts / durations**2)))
    elif method == "bootstrap":
        rng = np.random.default_rng(seed)
        draws = rng.poisson(counts, size=(n_boot, counts.size)) / durations
        values = []
        for d in draws:
            try:
                values.append(_S_from_rates(d[index], angles)[0])
            except ValidationError:
                continue
        sigma = float(np.std(values, ddof=1))
    else:
        raise ValidationError(f"unknown error method {method!r}")

    significance = (S - LOCAL_BOUND) / sigma if sigma > 0 else math.copysign(math.inf, S - LOCAL_BOUND)
    return ChshEstimate(S=S, sigma_S=sigma, significance=significance, correlations=tuple(float(c) for c in corr))


def fringe(rho, theta2: float, theta1_values: Sequence[float]) -> list[tuple[float, float]]:
    """Coincidence probability versus the site-A analyzer angle, site B fixed."""
    rho = as_density_matrix(rho)
    return [(float(t), coincidence_probability(rho, t, theta2)) for t in theta1_values]


def raw_visibility(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    hi, lo = v.max(), v.min()
    return float((hi - lo) / (hi + lo))


def fit_visibility(theta1_values: Sequence[float], values: Sequence[float]) -> float:
    """Visibility from a least-squares fit of ``a + b sin^2(theta - theta0)``.

    The model is linear in (1, cos 2theta, sin 2theta), so the fit is a plain lstsq.
    """
    t = np.asarray(theta1_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 3:
        raise ValidationError("need at least 3 fringe points to fit a visibility")
    design = np.column_stack([np.ones_like(t), np.cos(2 * t), np.sin(2 * t)])
    (c0, c1, c2), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = math.hypot(c1, c2)
    if c0 <= 0:
        raise ValidationError("fitted fringe offset is not positive")
    return float(amp / c0)
