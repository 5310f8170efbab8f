"""Dense complex linear algebra for small quantum systems.

States, Hermitian generators and unitaries are immutable wrappers around
numpy arrays. Composite systems use big-endian ordering: the left tensor
factor is the most significant digit of the flat index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from math import prod

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12


@dataclass(frozen=True)
class Units:
    """Physical constants used by continuum experiments (internal units by default)."""

    hbar: float = 1.0
    mass: float = 1.0


@dataclass(frozen=True)
class Basis:
    """Basis descriptor: subsystem dimensions plus a quadrature weight.

    ``weight`` is 1 for discrete registers and the grid spacing for sampled
    wavefunctions, so that inner products approximate integrals.
    """

    dims: tuple[int, ...]
    weight: float = 1.0
    label: str = "register"

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def __mul__(self, other: Basis) -> Basis:
        return Basis(self.dims + other.dims, self.weight * other.weight,
                     f"{self.label}*{other.label}")


def register(*dims: int) -> Basis:
    return Basis(tuple(int(d) for d in dims))


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def max_abs(m) -> float:
    """Largest entry modulus; the ``||.||_inf`` used for tolerance checks."""
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def op_norm(m) -> float:
    """Spectral norm, used for operator defects."""
    return float(np.linalg.norm(np.asarray(m), 2))


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis: Basis = None  # type: ignore[assignment]
    branch: str | None = None

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if self.basis is None:
            object.__setattr__(self, "basis", register(amps.size))
        if self.basis.dim != amps.size:
            raise ValueError(
                f"amplitude count {amps.size} does not match basis dimension {self.basis.dim}")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.basis.weight))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def normalized(self) -> StateVector:
        return StateVector(self.amplitudes / self.norm(), self.basis, self.branch)

    def with_branch(self, label: str | None) -> StateVector:
        return StateVector(self.amplitudes, self.basis, label)

    @classmethod
    def basis_state(cls, index: int, basis: Basis | int) -> StateVector:
        if isinstance(basis, int):
            basis = register(basis)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps, basis)


def _check_square(matrix: np.ndarray) -> np.ndarray:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
    return matrix


@dataclass(frozen=True)
class HermitianGenerator:
    matrix: np.ndarray
    tol: float = field(default=HERMITIAN_TOL, compare=False)

    def __post_init__(self):
        m = _check_square(_frozen(self.matrix))
        # scale-aware: generators built from grid kinetic terms have large entries
        dev = max_abs(m - m.conj().T)
        if dev > self.tol * max(1.0, max_abs(m)):
            raise ValueError(f"matrix is not Hermitian (max |M - M^+| = {dev:.3e})")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __add__(self, other: HermitianGenerator) -> HermitianGenerator:
        return HermitianGenerator(self.matrix + other.matrix)

    def __rmul__(self, scalar: float) -> HermitianGenerator:
        return HermitianGenerator(float(scalar) * self.matrix)

    def __mul__(self, scalar: float) -> HermitianGenerator:
        return HermitianGenerator(float(scalar) * self.matrix)


@dataclass(frozen=True)
class UnitaryMatrix:
    matrix: np.ndarray
    tol: float = field(default=UNITARY_TOL, compare=False)

    def __post_init__(self):
        m = _check_square(_frozen(self.matrix))
        dev = max_abs(m.conj().T @ m - np.eye(m.shape[0]))
        if dev > self.tol:
            raise ValueError(f"matrix is not unitary (max |U^+U - I| = {dev:.3e})")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> UnitaryMatrix:
        return cls(np.eye(dim))

    def __matmul__(self, other: UnitaryMatrix) -> UnitaryMatrix:
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return UnitaryMatrix(self.matrix @ other.matrix, tol=max(self.tol, other.tol))

    def dagger(self) -> UnitaryMatrix:
        return UnitaryMatrix(self.matrix.conj().T, tol=self.tol)

    def power(self, k: int) -> UnitaryMatrix:
        return UnitaryMatrix(np.linalg.matrix_power(self.matrix, k), tol=self.tol)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """Return <a|b>, weighted by the grid spacing for sampled bases."""
    if a.basis != b.basis:
        raise ValueError(f"basis mismatch: {a.basis} vs {b.basis}")
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.basis.weight)


def apply_unitary(u: UnitaryMatrix, s: StateVector) -> StateVector:
    if u.dim != s.dim:
        raise ValueError(f"dimension mismatch: operator {u.dim}, state {s.dim}")
    return StateVector(u.matrix @ s.amplitudes, s.basis, s.branch)


def expm_generator(h: HermitianGenerator, t: float, hbar: float = 1.0) -> UnitaryMatrix:
    """exp(-i h t / hbar) through the Hermitian eigendecomposition."""
    w, v = np.linalg.eigh(h.matrix)
    return UnitaryMatrix((v * np.exp(-1j * w * (t / hbar))) @ v.conj().T)


def tensor(*factors):
    """Kronecker product of states or operators, left factor most significant."""
    if not factors:
        raise ValueError("tensor() needs at least one factor")
    first = factors[0]
    if isinstance(first, StateVector):
        amps = reduce(np.kron, (f.amplitudes for f in factors))
        basis = reduce(lambda x, y: x * y, (f.basis for f in factors))
        return StateVector(amps, basis)
    mats = reduce(np.kron, (f.matrix for f in factors))
    return type(first)(mats)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


# Spin operators ------------------------------------------------------------

def spin_operators(dim: int) -> dict[str, np.ndarray]:
    """Spin-j matrices for a (2j+1)-level site, basis ordered m = j, j-1, ..., -j.

    For dim 2 these are I = sigma/2 with I_z|0> = +1/2|0>.
    """
    j = (dim - 1) / 2
    m = j - np.arange(dim)
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        # J+ |j, m> = sqrt(j(j+1) - m(m+1)) |j, m+1>
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    return {
        "x": (jp + jm) / 2,
        "y": (jp - jm) / 2j,
        "z": np.diag(m).astype(complex),
    }


def embed(op: np.ndarray, site: int, dims: tuple[int, ...]) -> np.ndarray:
    """Place a single-site operator on ``site`` of a register with identities elsewhere."""
    mats = [op if k == site else np.eye(d) for k, d in enumerate(dims)]
    return reduce(np.kron, mats)


# Random fixtures -----------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) so fixtures replay across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def random_state(dim: int, rng: np.random.Generator, basis: Basis | None = None) -> StateVector:
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    basis = basis or register(dim)
    z = z / np.sqrt(np.sum(np.abs(z) ** 2) * basis.weight)
    return StateVector(z, basis)


def random_unitary(dim: int, rng: np.random.Generator) -> UnitaryMatrix:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return UnitaryMatrix(q * (d / np.abs(d)))


def random_hermitian(dim: int, rng: np.random.Generator, norm: float | None = None) -> HermitianGenerator:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = (z + z.conj().T) / 2
    if norm is not None:
        h = h * (norm / op_norm(h))
    return HermitianGenerator(h)
