"""Selective diagonal operators, candidate solution states and basic IC unitaries.

A candidate solution of an unstructured search over ``arity**n`` items is
encoded by a vector of logical numbers: +1/-1 per qubit, or +1/0/-1 per
qutrit. Qubit ``k`` (0-based, most significant first) contributes the
factor ``E/2 + a_k I_z``; a qutrit contributes
``(1-|a|) E + a I_z / 2 + (-1 + 3|a|/2) I_z^2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from math import prod

import numpy as np

from .hilbert import (
    HermitianGenerator,
    StateVector,
    UnitaryMatrix,
    embed,
    expm_generator,
    register,
    spin_operators,
)

LEGAL_VALUES = {2: (1, -1), 3: (1, 0, -1)}


@dataclass(frozen=True)
class LogicalVector:
    values: tuple[int, ...]
    arity: int = 2

    def __post_init__(self):
        if self.arity not in LEGAL_VALUES:
            raise ValueError(f"arity must be 2 or 3, got {self.arity}")
        values = tuple(int(v) for v in self.values)
        if not values:
            raise ValueError("a logical vector needs at least one component")
        legal = LEGAL_VALUES[self.arity]
        for v in values:
            if v not in legal:
                raise ValueError(f"logical value {v} not allowed for arity {self.arity}")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def dim(self) -> int:
        return self.arity ** self.n

    def index(self) -> int:
        """Index of the candidate basis state, most significant site first."""
        n = self.n
        if self.arity == 2:
            return sum((1 - a) // 2 * 2 ** (n - 1 - k) for k, a in enumerate(self.values))
        return sum((1 - a) * 3 ** (n - 1 - k) for k, a in enumerate(self.values))

    @classmethod
    def from_index(cls, index: int, n: int, arity: int = 2) -> LogicalVector:
        if not 0 <= index < arity ** n:
            raise ValueError(f"index {index} out of range for {n} sites of arity {arity}")
        digits = []
        for _ in range(n):
            index, d = divmod(index, arity)
            digits.append(d)
        digits.reverse()
        return cls(tuple(1 - 2 * d if arity == 2 else 1 - d for d in digits), arity)

    def __str__(self) -> str:
        return ",".join(f"{v:+d}" if v else "0" for v in self.values)


def parse_logical(text: str, arity: int = 2) -> LogicalVector:
    """Parse the comma-separated form, e.g. ``"+1,-1,+1"``."""
    values = []
    for token in text.split(","):
        tok = token.strip()
        try:
            v = int(tok)
        except ValueError:
            raise ValueError(f"bad logical value {tok!r} in {text!r}") from None
        if v == 0 and arity != 3:
            raise ValueError(f"logical value 0 requires arity 3 (token {tok!r})")
        values.append(v)
    return LogicalVector(tuple(values), arity)


def all_logical_vectors(n: int, arity: int = 2):
    for s in range(arity ** n):
        yield LogicalVector.from_index(s, n, arity)


# single-site factors -------------------------------------------------------

def _projector_factor(a: int, arity: int) -> np.ndarray:
    if arity == 2:
        return 0.5 * np.eye(2) + a * spin_operators(2)["z"]
    iz = spin_operators(3)["z"]
    return (1 - abs(a)) * np.eye(3) + 0.5 * a * iz + (-1 + 1.5 * abs(a)) * (iz @ iz)


def _state_factor(a: int, arity: int) -> np.ndarray:
    if arity == 2:
        t = np.array([1.0, 1.0])            # |0> + |1>, deliberately unnormalized
        s = 0.5 * np.array([1.0, -1.0])     # (|0> - |1>)/2
        return 0.5 * t + a * s
    t_plus = np.array([1.0, 1.0, 1.0])
    t_zero = np.array([1.0, 0.0, -1.0])
    t_minus = np.array([1.0, 0.0, 1.0])
    return (1 - abs(a)) * t_plus + 0.5 * a * t_zero + (-1 + 1.5 * abs(a)) * t_minus


def oracle_projector(l: LogicalVector) -> HermitianGenerator:
    """Rank-1 diagonal projector D_S built as a tensor product of site factors."""
    return HermitianGenerator(reduce(np.kron, (_projector_factor(a, l.arity) for a in l.values)))


def selective_phase(l: LogicalVector, theta: float) -> UnitaryMatrix:
    """C_S(theta) = exp(-i theta D_S): a phase e^{-i theta} on the candidate index only."""
    diag = np.ones(l.dim, dtype=complex)
    diag[l.index()] = np.exp(-1j * theta)
    return UnitaryMatrix(np.diag(diag))


@dataclass(frozen=True)
class CandidateState:
    logical: LogicalVector
    state: StateVector
    index: int


def candidate_state(l: LogicalVector) -> CandidateState:
    """Evaluate the tensor-product expression for |S> and check it collapses to a basis vector."""
    amps = reduce(np.kron, (_state_factor(a, l.arity) for a in l.values))
    s = l.index()
    expected = np.zeros(l.dim)
    expected[s] = 1.0
    if np.max(np.abs(amps - expected)) > 1e-14:
        raise RuntimeError(f"candidate state for {l} did not collapse onto basis index {s}")
    return CandidateState(l, StateVector(amps, register(*([l.arity] * l.n))), s)


# basic IC unitary ----------------------------------------------------------

@dataclass(frozen=True)
class BasicIcUnitary:
    """exp(-i a theta I_{m,axis}) acting on site ``target`` (0-based).

    ``embedding="spin"`` rotates the whole target site; ``"pseudospin"``
    restricts the rotation to the subspace where every other site is |0>.
    """

    axis: str
    angle: float
    logical_value: int = 1
    target: int = 0
    embedding: str = "spin"

    def __post_init__(self):
        if self.axis not in ("x", "y", "z"):
            raise ValueError(f"invalid axis {self.axis!r}; expected x, y or z")
        if self.embedding not in ("spin", "pseudospin"):
            raise ValueError(f"invalid embedding {self.embedding!r}")

    def with_value(self, a: int) -> BasicIcUnitary:
        return BasicIcUnitary(self.axis, self.angle, a, self.target, self.embedding)


def ic_generator(spec: BasicIcUnitary, dims: tuple[int, ...]) -> HermitianGenerator:
    """The Hermitian operator I_{m,axis} in the requested embedding."""
    if not 0 <= spec.target < len(dims):
        raise ValueError(f"target {spec.target} out of range for {len(dims)} sites")
    op = spin_operators(dims[spec.target])[spec.axis]
    if spec.embedding == "spin":
        return HermitianGenerator(embed(op, spec.target, dims))
    mats = []
    for k, d in enumerate(dims):
        if k == spec.target:
            mats.append(op)
        else:
            p0 = np.zeros((d, d))
            p0[0, 0] = 1.0
            mats.append(p0)
    return HermitianGenerator(reduce(np.kron, mats))


def basic_ic_unitary(spec: BasicIcUnitary, dims: tuple[int, ...] | int = (2,)) -> UnitaryMatrix:
    if isinstance(dims, int):
        dims = (dims,)
    g = ic_generator(spec, tuple(dims))
    return expm_generator(g, spec.logical_value * spec.angle)


def ic_step(spec: BasicIcUnitary, dims: tuple[int, ...] | int = (2,)):
    """Factory a -> basic IC unitary, for use as a schedule step."""
    if isinstance(dims, int):
        dims = (dims,)
    dims = tuple(dims)
    g = ic_generator(spec, dims)
    cache: dict[int, UnitaryMatrix] = {}

    def step(a: int) -> UnitaryMatrix:
        if a not in cache:
            cache[a] = expm_generator(g, a * spec.angle)
        return cache[a]

    step.spec = spec  # type: ignore[attr-defined]
    return step


def default_angle(n: int, c: float = 1.0) -> float:
    """Rotation angle c / 2**n; the proportionality constant is not fixed, default c = 1."""
    return c / 2 ** n


def register_dim(dims: tuple[int, ...]) -> int:
    return prod(dims)
