"""Entanglement and mixedness measures for two-qubit states."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import PAULI_Y, PAULIS, ValidationError, psd_sqrt, as_density_matrix, eigvalsh_desc

_SPIN_FLIP = np.kron(PAULI_Y, PAULI_Y)
_WOOTTERS_CLAMP = 1e-12
DIM = 4


def concurrence(rho) -> float:
    """Wootters concurrence."""
    r = as_density_matrix(rho).entries
    r_tilde = _SPIN_FLIP @ r.conj() @ _SPIN_FLIP
    # sqrt(rho) rho~ sqrt(rho) shares its spectrum with rho rho~ but is Hermitian,
    # which keeps near-zero eigenvalues accurate for rank-deficient states
    s = psd_sqrt(r)
    ev = eigvalsh_desc(s @ r_tilde @ s)
    ev = np.where(ev < _WOOTTERS_CLAMP, 0.0, ev)
    lam = np.sort(np.sqrt(ev))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(rho) -> float:
    return concurrence(rho) ** 2


def purity(rho) -> float:
    return as_density_matrix(rho).purity


def linear_entropy(rho) -> float:
    """Normalized linear entropy d(1 - Tr rho^2)/(d - 1), clamped to [0, 1]."""
    s = DIM * (1.0 - purity(rho)) / (DIM - 1)
    return min(max(s, 0.0), 1.0)


def werner_tangle_of_entropy(s_l: float) -> float:
    """Tangle of the Werner state with linear entropy ``s_l``; zero beyond 8/9."""
    s_l = float(s_l)
    if not math.isfinite(s_l) or s_l < 0 or s_l > 1:
        raise ValidationError(f"linear entropy must lie in [0, 1], got {s_l!r}")
    if s_l >= 8 / 9:
        return 0.0
    return 0.25 * (1 - 3 * math.sqrt(1 - s_l)) ** 2


def partial_transpose(rho, qubit: int = 1) -> np.ndarray:
    """Partial transpose over ``qubit`` (0 = site A, 1 = site B)."""
    r = np.asarray(as_density_matrix(rho).entries).reshape(2, 2, 2, 2)
    if qubit == 1:
        r = r.transpose(0, 3, 2, 1)
    elif qubit == 0:
        r = r.transpose(2, 1, 0, 3)
    else:
        raise ValidationError("qubit must be 0 or 1")
    return r.reshape(4, 4)


def ppt_min_eigenvalue(rho) -> float:
    """Smallest eigenvalue of the partial transpose; negative means entangled."""
    return float(eigvalsh_desc(partial_transpose(rho))[-1])


def correlation_matrix(rho) -> np.ndarray:
    """T_ij = Tr[rho (sigma_i x sigma_j)] for i, j over (x, y, z)."""
    r = as_density_matrix(rho).entries
    t = np.empty((3, 3))
    for i, si in enumerate(PAULIS):
        for j, sj in enumerate(PAULIS):
            t[i, j] = np.real(np.trace(r @ np.kron(si, sj)))
    return t


def chsh_max(rho) -> float:
    """Largest CHSH value over all measurement settings (Horodecki criterion)."""
    t = correlation_matrix(rho)
    u = np.sort(np.linalg.eigvalsh(t.T @ t))[::-1]
    return float(2.0 * math.sqrt(max(u[0] + u[1], 0.0)))


def singlet_fraction_estimate(rho) -> float:
    """Werner weight p estimated from the singlet overlap: (4<Psi-|rho|Psi-> - 1)/3."""
    r = as_density_matrix(rho).entries
    f = np.real(0.5 * (r[1, 1] + r[2, 2] - r[1, 2] - r[2, 1]))
    return float((4 * f - 1) / 3)


@dataclass(frozen=True)
class StateReport:
    tangle: float
    concurrence: float
    linear_entropy: float
    purity: float
    ppt_min_eigenvalue: float
    chsh_max: float
    singlet_fraction_estimate: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def report(rho) -> StateReport:
    rho = as_density_matrix(rho)
    c = concurrence(rho)
    pur = purity(rho)
    return StateReport(
        tangle=c * c,
        concurrence=c,
        linear_entropy=min(max(DIM * (1.0 - pur) / (DIM - 1), 0.0), 1.0),
        purity=pur,
        ppt_min_eigenvalue=ppt_min_eigenvalue(rho),
        chsh_max=chsh_max(rho),
        singlet_fraction_estimate=singlet_fraction_estimate(rho),
    )
