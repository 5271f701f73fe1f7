"""Two-qubit state types and the linear algebra they rest on.

All matrices live in the ordered polarization basis (HH, HV, VH, VV); the
first letter is the photon at site A, the second at site B.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BASIS = ("HH", "HV", "VH", "VV")

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
NORM_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a state or parameter contract."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


def eigvalsh_desc(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, sorted in descending order."""
    m = np.asarray(matrix)
    m = 0.5 * (m + m.conj().T)
    return np.linalg.eigvalsh(m)[::-1]


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape != (4,):
            raise ValidationError(f"pure state needs 4 amplitudes, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("amplitudes must be finite")
        norm = float(np.sum(np.abs(a) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state is not normalized (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        a = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = np.linalg.norm(a)
        if n == 0 or not np.isfinite(n):
            raise ValidationError("cannot normalize a zero or non-finite vector")
        return cls(a / n)

    @classmethod
    def basis(cls, label: str) -> "PureState":
        a = np.zeros(4, dtype=complex)
        a[BASIS.index(label)] = 1.0
        return cls(a)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)

    def allclose(self, other: "PureState", atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.amplitudes, other.amplitudes, atol=atol, rtol=0))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated 4x4 density matrix (Hermitian, unit trace, PSD)."""

    entries: np.ndarray
    _eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.shape != (4, 4):
            raise ValidationError(f"density matrix must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("density matrix has non-finite entries")
        herm_err = np.max(np.abs(m - m.conj().T))
        if herm_err > HERMITIAN_TOL:
            raise ValidationError(f"matrix is not Hermitian (max deviation {herm_err:.3g})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace is {tr.real:.15g}, expected 1")
        evals = eigvalsh_desc(m)
        if evals[-1] < -PSD_TOL:
            raise ValidationError(f"matrix is not positive semidefinite (min eigenvalue {evals[-1]:.3g})")
        object.__setattr__(self, "entries", _frozen(m))
        evals = np.where(evals < 0, 0.0, evals)
        evals.setflags(write=False)
        object.__setattr__(self, "_eigenvalues", evals)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __getitem__(self, idx):
        return self.entries[idx]

    @property
    def eigenvalues(self) -> np.ndarray:
        """Descending eigenvalues, tiny negatives clamped to zero."""
        return self._eigenvalues

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.entries, np.asarray(other), atol=atol, rtol=0))

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(4) / 4)

    def to_dict(self) -> dict:
        return {
            "basis": list(BASIS),
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityMatrix":
        basis = tuple(data.get("basis", BASIS))
        if basis != BASIS:
            raise ValidationError(f"unsupported basis order {basis}")
        pairs = np.asarray(data["entries"], dtype=float)
        if pairs.shape != (4, 4, 2):
            raise ValidationError("entries must be a 4x4 array of [re, im] pairs")
        return cls(pairs[..., 0] + 1j * pairs[..., 1])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        return cls.from_dict(json.loads(text))


def as_density_matrix(rho) -> DensityMatrix:
    """Coerce arrays, pure states and density matrices to a validated DensityMatrix."""
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, PureState):
        return from_pure(rho)
    return DensityMatrix(np.asarray(rho, dtype=complex))


def from_pure(psi: PureState) -> DensityMatrix:
    if not isinstance(psi, PureState):
        psi = PureState(psi)
    a = psi.amplitudes
    m = np.outer(a, a.conj())
    return DensityMatrix(0.5 * (m + m.conj().T))


def mix(terms: Iterable[tuple[float, object]]) -> DensityMatrix:
    """Convex combination of states given as (weight, state) pairs."""
    terms = list(terms)
    if not terms:
        raise ValidationError("mix needs at least one term")
    weights = np.array([float(w) for w, _ in terms])
    if np.any(~np.isfinite(weights)) or np.any(weights < 0):
        raise ValidationError("mixture weights must be finite and nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValidationError(f"mixture weights sum to {weights.sum()!r}, expected 1")
    out = np.zeros((4, 4), dtype=complex)
    for w, state in zip(weights, (s for _, s in terms)):
        out += w * as_density_matrix(state).entries
    # absorb the <=1e-9 slack in the weights so the trace contract holds
    out /= np.trace(out).real
    return DensityMatrix(0.5 * (out + out.conj().T))


def psd_sqrt(m: np.ndarray, cutoff: float = 1e-14) -> np.ndarray:
    """Square root of a PSD matrix; eigenvalues below ``cutoff`` are treated as zero."""
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    w = np.where(w < cutoff, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    r = as_density_matrix(rho).entries
    s = as_density_matrix(sigma).entries
    # trace norm of sqrt(rho) sqrt(sigma); singular values avoid the sqrt of
    # eigenvalue round-off that the textbook form suffers on pure states
    sv = np.linalg.svd(psd_sqrt(r) @ psd_sqrt(s), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(max(f, 0.0), 1.0)


def kron_all(ops: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)
