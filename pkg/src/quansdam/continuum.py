"""Single-atom continuum machinery: box plane waves, phase-based state
difference, energy-eigenbasis expansions, truncation errors and unitary
sequences (USEQ) built from basic IC rotations.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import (
    Basis,
    HermitianGenerator,
    StateVector,
    UnitaryMatrix,
    Units,
    embed,
    expm_generator,
    max_abs,
    spin_operators,
)
from .oracle import BasicIcUnitary, basic_ic_unitary

GRID_NORM_TOL = 1e-8
MIN_GRID_POINTS = 16
DEFAULT_LEVELS = 128
DEFICIT_FLOOR = 64 * np.finfo(float).eps

ZERO_INTERNAL = np.array([1.0, 0.0], dtype=complex)


def box_grid(L: float, n_points: int) -> np.ndarray:
    """Uniform periodic grid on (-L/2, L/2]."""
    dx = L / n_points
    return -L / 2 + dx * np.arange(1, n_points + 1)


@dataclass(frozen=True)
class GridWavefunction:
    box_length: float
    amplitudes: np.ndarray
    internal: np.ndarray | None = None
    units: Units = Units()

    def __post_init__(self):
        if not self.box_length > 0:
            raise ValueError(f"box length must be positive, got {self.box_length}")
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if self.internal is not None:
            internal = np.array(self.internal, dtype=complex).reshape(-1)
            if internal.size != 2:
                raise ValueError("internal state must be a qubit")
            internal.setflags(write=False)
            object.__setattr__(self, "internal", internal)

    @property
    def n_points(self) -> int:
        return self.amplitudes.size

    @property
    def dx(self) -> float:
        return self.box_length / self.n_points

    @property
    def x(self) -> np.ndarray:
        return box_grid(self.box_length, self.n_points)

    @property
    def basis(self) -> Basis:
        return Basis((self.n_points,), weight=self.dx, label="grid")

    def state(self) -> StateVector:
        return StateVector(self.amplitudes, self.basis)

    def norm(self) -> float:
        return self.state().norm()

    def overlap(self, other: GridWavefunction) -> complex:
        if other.n_points != self.n_points or other.box_length != self.box_length:
            raise ValueError("grid mismatch")
        ip = np.vdot(self.amplitudes, other.amplitudes) * self.dx
        if self.internal is not None and other.internal is not None:
            ip *= np.vdot(self.internal, other.internal)
        return complex(ip)

    def with_amplitudes(self, amps) -> GridWavefunction:
        return GridWavefunction(self.box_length, amps, self.internal, self.units)


def momentum_eigenfunction(L: float, k: int, n_points: int = 256, units: Units = Units(),
                           internal=ZERO_INTERNAL) -> GridWavefunction:
    """(1/sqrt(L)) exp(i p_k x / hbar) with p_k = 2 pi hbar k / L."""
    if n_points < MIN_GRID_POINTS:
        raise ValueError(f"need at least {MIN_GRID_POINTS} grid points, got {n_points}")
    if abs(k) >= n_points / 2:
        raise ValueError(f"|k| = {abs(k)} violates the Nyquist bound {n_points / 2}")
    p = 2 * np.pi * units.hbar * k / L
    x = box_grid(L, n_points)
    return GridWavefunction(L, np.exp(1j * p * x / units.hbar) / np.sqrt(L), internal, units)


def internal_mz(internal: np.ndarray, tol: float = 1e-12) -> float:
    """S_z eigenvalue of a qubit internal state; raises if it is not an eigenstate."""
    iz = spin_operators(2)["z"]
    v = np.asarray(internal, dtype=complex)
    v = v / np.linalg.norm(v)
    mz = float(np.real(np.vdot(v, iz @ v)))
    if np.linalg.norm(iz @ v - mz * v) > tol:
        raise ValueError("internal state is not an S_z eigenstate")
    return mz


def phase_quansdam_step(psi: GridWavefunction, p0_prime: float, a: int,
                        m_z: float | None = None) -> GridWavefunction:
    """Multiply by exp(-i a p0' m_z x / hbar); shifts momentum by -a m_z p0'."""
    if m_z is None:
        if psi.internal is None:
            raise ValueError("need m_z or an internal state")
        m_z = internal_mz(psi.internal)
    if m_z == 0:
        raise ValueError("internal S_z eigenvalue m_z must be nonzero")
    phase = np.exp(-1j * a * p0_prime * m_z * psi.x / psi.units.hbar)
    return psi.with_amplitudes(psi.amplitudes * phase)


def phase_branch_overlap(psi: GridWavefunction, p0_prime: float, m_z: float | None = None) -> complex:
    return phase_quansdam_step(psi, p0_prime, 1, m_z).overlap(phase_quansdam_step(psi, p0_prime, -1, m_z))


def plane_wave_overlap_sum(kappa: float, L: float, n_points: int) -> complex:
    """Closed-form (dx/L) sum_j exp(i kappa x_j) on the periodic grid (geometric series)."""
    dx = L / n_points
    r = np.exp(1j * kappa * dx)
    lead = np.exp(1j * kappa * (-L / 2 + dx)) / n_points
    if abs(1 - r) < 1e-14:
        return complex(lead * n_points)
    return complex(lead * (1 - r ** n_points) / (1 - r))


def plane_wave_overlap_continuum(kappa: float, L: float) -> float:
    """(1/L) integral of exp(i kappa x) over the box: sin(kappa L/2) / (kappa L/2)."""
    return float(np.sinc(kappa * L / (2 * np.pi)))


# eigenbasis expansions -----------------------------------------------------

@dataclass(frozen=True)
class EigenBasis:
    """Real or complex eigenfunctions sampled on a grid (rows), with energies."""

    energies: np.ndarray
    functions: np.ndarray
    dx: float
    units: Units = Units()

    @property
    def size(self) -> int:
        return self.energies.size

    def gram(self) -> np.ndarray:
        return self.functions.conj() @ self.functions.T * self.dx

    def orthonormality_error(self) -> float:
        return max_abs(self.gram() - np.eye(self.size))


def oscillator_functions(x: np.ndarray, n_levels: int, omega: float = 1.0,
                         units: Units = Units()) -> np.ndarray:
    """Oscillator eigenfunctions u_0..u_{n-1} on x by the normalized Hermite recurrence."""
    xi = x * np.sqrt(units.mass * omega / units.hbar)
    out = np.empty((n_levels, x.size))
    out[0] = (units.mass * omega / (np.pi * units.hbar)) ** 0.25 * np.exp(-xi ** 2 / 2)
    if n_levels > 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for k in range(1, n_levels - 1):
        out[k + 1] = np.sqrt(2.0 / (k + 1)) * xi * out[k] - np.sqrt(k / (k + 1)) * out[k - 1]
    return out


def oscillator_basis(L: float, n_points: int, n_levels: int = DEFAULT_LEVELS, omega: float = 1.0,
                     units: Units = Units(), tol: float = GRID_NORM_TOL) -> EigenBasis:
    x = box_grid(L, n_points)
    funcs = oscillator_functions(x, n_levels, omega, units)
    basis = EigenBasis(units.hbar * omega * (np.arange(n_levels) + 0.5), funcs, L / n_points, units)
    err = basis.orthonormality_error()
    if err > tol:
        raise ValueError(f"oscillator basis not orthonormal on this grid (error {err:.2e}); "
                         "widen the box or refine the grid")
    return basis


def oscillator_operators(n_levels: int, omega: float = 1.0, units: Units = Units()):
    """Position and momentum matrices in the truncated number basis."""
    a = np.diag(np.sqrt(np.arange(1, n_levels)), 1).astype(complex)
    length = np.sqrt(units.hbar / (units.mass * omega))
    x = length / np.sqrt(2) * (a + a.conj().T)
    p = 1j * units.hbar / (length * np.sqrt(2)) * (a.conj().T - a)
    return x, p


def kinetic_matrix(L: float, n_points: int, units: Units = Units()) -> np.ndarray:
    """p^2/2m on the periodic grid, exact for the grid's Fourier modes."""
    k = 2 * np.pi * np.fft.fftfreq(n_points, d=L / n_points)
    f = np.fft.fft(np.eye(n_points), axis=0)
    t = np.fft.ifft(((units.hbar * k) ** 2 / (2 * units.mass))[:, None] * f, axis=0)
    return (t + t.conj().T) / 2


def grid_eigenbasis(h: HermitianGenerator, L: float, units: Units = Units()) -> EigenBasis:
    """Complete eigenbasis of a grid Hamiltonian, normalized under the grid weight."""
    w, v = np.linalg.eigh(h.matrix)
    dx = L / h.dim
    return EigenBasis(w, v.T / np.sqrt(dx), dx, units)


@dataclass(frozen=True)
class EigenbasisExpansion:
    energies: np.ndarray
    coefficients: np.ndarray
    state_norm_sq: float = 1.0
    basis: EigenBasis | None = field(default=None, repr=False)
    units: Units = Units()

    def __post_init__(self):
        e = np.array(self.energies, dtype=float).reshape(-1)
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if e.size != c.size:
            raise ValueError(f"{e.size} energies but {c.size} coefficients")
        weight = float(np.sum(np.abs(c) ** 2))
        if weight > self.state_norm_sq + 1e-8:
            raise ValueError(f"coefficient weight {weight} exceeds the state norm {self.state_norm_sq}")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "coefficients", c)

    @property
    def M(self) -> int:
        return self.coefficients.size

    @property
    def norm_deficit(self) -> float:
        # deficits at summation-rounding level are zero, not a sqrt(eps) tail
        d = self.state_norm_sq - float(np.sum(np.abs(self.coefficients) ** 2))
        return d if d > DEFICIT_FLOOR * max(self.state_norm_sq, 1.0) else 0.0

    def with_coefficients(self, c) -> EigenbasisExpansion:
        return EigenbasisExpansion(self.energies, c, self.state_norm_sq, self.basis, self.units)

    def synthesize(self, window: slice = slice(None)) -> np.ndarray:
        if self.basis is None:
            raise ValueError("expansion has no sampled basis")
        return self.coefficients[window] @ self.basis.functions[window]

    def overlap(self, other: EigenbasisExpansion) -> complex:
        if other.M != self.M:
            raise ValueError("expansions have different truncations")
        return complex(np.vdot(self.coefficients, other.coefficients))


def analyze(amplitudes: np.ndarray, basis: EigenBasis, n_terms: int | None = None,
            state_norm_sq: float | None = None) -> EigenbasisExpansion:
    """Project a grid state onto the first ``n_terms`` basis functions by quadrature."""
    n = basis.size if n_terms is None else n_terms
    amps = np.asarray(amplitudes, dtype=complex)
    coeff = basis.functions[:n].conj() @ amps * basis.dx
    if state_norm_sq is None:
        state_norm_sq = float(np.sum(np.abs(amps) ** 2) * basis.dx)
    sub = EigenBasis(basis.energies[:n], basis.functions[:n], basis.dx, basis.units)
    return EigenbasisExpansion(basis.energies[:n], coeff, state_norm_sq, sub, basis.units)


def expansion_from_coefficients(coefficients, energies=None, omega: float = 1.0,
                                units: Units = Units()) -> EigenbasisExpansion:
    c = np.asarray(coefficients, dtype=complex)
    if energies is None:
        energies = units.hbar * omega * (np.arange(c.size) + 0.5)
    return EigenbasisExpansion(energies, c, 1.0, None, units)


def propagate_by_expansion(exp: EigenbasisExpansion, t: float) -> EigenbasisExpansion:
    return exp.with_coefficients(exp.coefficients * np.exp(-1j * exp.energies * t / exp.units.hbar))


@dataclass(frozen=True)
class IcPropagatorSpec:
    """exp(-i a H t_m / hbar); ``generator`` None means the expansion's own energies."""

    generator: HermitianGenerator | None
    t_m: float
    logical_value: int = 1

    def realize(self, a: int | None = None, hbar: float = 1.0) -> UnitaryMatrix:
        if self.generator is None:
            raise ValueError("no explicit generator to exponentiate")
        a = self.logical_value if a is None else a
        return expm_generator(self.generator, a * self.t_m, hbar)


def ic_propagate(exp: EigenbasisExpansion, spec: IcPropagatorSpec,
                 logical_values: Sequence[int] = (1, -1)) -> dict[int, EigenbasisExpansion]:
    """A_k -> A_k exp(-i a E_k t_m / hbar) per logical value."""
    energies = exp.energies
    if spec.generator is not None:
        g = spec.generator.matrix
        if g.shape[0] != exp.M:
            raise ValueError(f"generator dimension {g.shape[0]} does not match expansion size {exp.M}")
        if max_abs(g - np.diag(np.diag(g))) > 1e-12:
            raise ValueError("generator is not diagonal in the expansion basis")
        energies = np.real(np.diag(g))
    hbar = exp.units.hbar
    return {a: exp.with_coefficients(exp.coefficients * np.exp(-1j * a * energies * spec.t_m / hbar))
            for a in logical_values}


def truncation_error(exp: EigenbasisExpansion, L_idx: int, M: int) -> float:
    """Weight outside the window [L, L+M); missing tail coefficients count via the norm deficit."""
    if L_idx < 0:
        raise ValueError(f"L must be >= 0, got {L_idx}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    w = np.abs(exp.coefficients) ** 2
    outside = float(np.sum(w[:L_idx]) + np.sum(w[L_idx + M:]))
    return float(np.sqrt(outside + exp.norm_deficit))


def direct_residual(exp: EigenbasisExpansion, amplitudes: np.ndarray, L_idx: int, M: int) -> float:
    """||sum_{window} A_k u_k - Psi|| evaluated on the grid."""
    diff = exp.synthesize(slice(L_idx, L_idx + M)) - np.asarray(amplitudes)
    return float(np.sqrt(np.sum(np.abs(diff) ** 2) * exp.basis.dx))


def fast_convergence_check(exp: EigenbasisExpansion, eps: float, poly_bound: int):
    """Smallest window (M first, then L) with error below eps; returns (ok, (L, M) or None)."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    w = np.abs(exp.coefficients) ** 2
    total = float(np.sum(w)) + exp.norm_deficit
    csum = np.concatenate([[0.0], np.cumsum(w)])
    n = w.size
    for m in range(1, poly_bound + 1):
        for start in range(0, max(n - m, 0) + 1):
            inside = csum[min(start + m, n)] - csum[min(start, n)]
            if np.sqrt(max(total - inside, 0.0)) < eps:
                return True, (start, m)
    return False, None


def minimal_terms(exp: EigenbasisExpansion, eps: float) -> int | None:
    """Smallest M with truncation_error(exp, 0, M) < eps."""
    for m in range(1, exp.M + 1):
        if truncation_error(exp, 0, m) < eps:
            return m
    return None


# USEQ ------------------------------------------------------------------------

def useq_assemble(ic_factors: Sequence[UnitaryMatrix], qm_factors: Sequence[UnitaryMatrix]) -> UnitaryMatrix:
    """V_K U_K V_{K-1} ... U_1 V_0 for IC factors U_1..U_K and ordinary factors V_0..V_K."""
    if len(qm_factors) != len(ic_factors) + 1:
        raise ValueError(f"need K+1 ordinary factors for K IC factors, got {len(qm_factors)} and {len(ic_factors)}")
    out = qm_factors[0]
    for u, v in zip(ic_factors, qm_factors[1:]):
        if u.dim != out.dim or v.dim != out.dim:
            raise ValueError("dimension mismatch in sequence")
        out = v @ (u @ out)
    return out


@dataclass(frozen=True)
class UseqReport:
    defects: dict          # logical value -> max-entry defect
    phase_aligned: dict    # same after removing the best global phase

    @property
    def worst(self) -> float:
        return max(self.defects.values())


def _phase_aligned_defect(u: np.ndarray, v: np.ndarray) -> float:
    z = np.vdot(v, u)
    phase = z / abs(z) if abs(z) > 0 else 1.0
    return max_abs(u - phase * v)


def useq_defect(useq_by_value: dict, target: IcPropagatorSpec, hbar: float = 1.0) -> UseqReport:
    defects, aligned = {}, {}
    for a, u in useq_by_value.items():
        ref = target.realize(a, hbar).matrix
        defects[a] = max_abs(u.matrix - ref)
        aligned[a] = _phase_aligned_defect(u.matrix, ref)
    return UseqReport(defects, aligned)


def _cnot() -> UnitaryMatrix:
    m = np.eye(4)
    m[[2, 3]] = m[[3, 2]]
    return UnitaryMatrix(m)


def diagonal_two_qubit_useq(h_diag, t_m: float, a: int) -> tuple[list[UnitaryMatrix], list[UnitaryMatrix], complex]:
    """Factors realizing exp(-i a diag(h) t_m) on two qubits from basic z rotations.

    h = c0 + c1 I_1z + c2 I_2z + c12 I_1z I_2z; the two-body term uses
    CNOT I_2z CNOT = 2 I_1z I_2z. The c0 part is returned as a global phase.
    """
    h = np.asarray(h_diag, dtype=float)
    if h.size != 4:
        raise ValueError("diagonal generator must have 4 entries")
    z = np.array([0.5, -0.5])
    design = np.array([[1, z[b1], z[b2], z[b1] * z[b2]] for b1 in (0, 1) for b2 in (0, 1)])
    c0, c1, c2, c12 = np.linalg.solve(design, h)
    dims = (2, 2)
    ic = [basic_ic_unitary(BasicIcUnitary("z", c1 * t_m, a, 0), dims),
          basic_ic_unitary(BasicIcUnitary("z", c2 * t_m, a, 1), dims),
          basic_ic_unitary(BasicIcUnitary("z", c12 * t_m / 2, a, 1), dims)]
    eye = UnitaryMatrix.identity(4)
    qm = [eye, eye, _cnot(), _cnot()]
    return ic, qm, complex(np.exp(-1j * a * c0 * t_m))


def diagonal_useq(h_diag, t_m: float, a: int) -> UnitaryMatrix:
    ic, qm, phase = diagonal_two_qubit_useq(h_diag, t_m, a)
    return UnitaryMatrix(phase * useq_assemble(ic, qm).matrix)


# export -----------------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def grid_csv(psi: GridWavefunction) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "re", "im"])
    for x, v in zip(psi.x, psi.amplitudes):
        w.writerow([_fmt(x), _fmt(v.real), _fmt(v.imag)])
    return buf.getvalue()


def expansion_csv(exp: EigenbasisExpansion) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "E_k", "re_A", "im_A"])
    for k, (e, c) in enumerate(zip(exp.energies, exp.coefficients)):
        w.writerow([str(k), _fmt(e), _fmt(c.real), _fmt(c.imag)])
    return buf.getvalue()


def embed_internal(op: np.ndarray, n_motional: int) -> np.ndarray:
    """Internal-qubit operator on the motional (x) internal product space."""
    return embed(op, 1, (n_motional, 2))
