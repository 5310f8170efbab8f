"""Group-commutator synthesis of information-carrying momentum kicks.

exp(-iA t) exp(-iB t) exp(iA t) exp(iB t) approximates exp(-t^2 [A, B]) with
a third-order defect. Repeating the commutator at step tau/n, n^2 times,
reduces the defect like 1/n. With A = a theta I_y / tau acting on the
internal qubit and B the atom Hamiltonian with coupling -K x I_x, the
target is exp(-i a theta tau K x I_z / hbar): a momentum kick of -a K tau
theta / 2 on the internal |0> sector.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .continuum import (
    GridWavefunction,
    IcPropagatorSpec,
    box_grid,
    kinetic_matrix,
    oscillator_operators,
)
from .engine import BranchPairTrace, QuansdamSchedule, run_branches
from .hilbert import (
    Basis,
    HermitianGenerator,
    StateVector,
    UnitaryMatrix,
    Units,
    commutator,
    expm_generator,
    max_abs,
    op_norm,
    spin_operators,
)
from .oracle import BasicIcUnitary, basic_ic_unitary

CASES = ("free_atom", "harmonic_trap")
M_Z_ZERO = 0.5  # I_z eigenvalue of internal |0>
ZERO = np.array([1.0, 0.0], dtype=complex)


def _defect(u: np.ndarray, v: np.ndarray, norm: str) -> float:
    if norm == "spectral":
        return op_norm(u - v)
    if norm == "max":
        return max_abs(u - v)
    raise ValueError(f"unknown norm {norm!r}; use 'spectral' or 'max'")


def commutator_target(a: HermitianGenerator, b: HermitianGenerator, tau: float) -> UnitaryMatrix:
    """exp(-tau^2 [A, B]); i[A, B] is Hermitian so this is exp(i tau^2 (i[A, B]))."""
    g = HermitianGenerator(1j * commutator(a.matrix, b.matrix), tol=1e-10)
    return expm_generator(g, -tau ** 2)


@dataclass(frozen=True)
class CommutatorResult:
    lhs: UnitaryMatrix
    target: UnitaryMatrix
    defect: float


def _group_commutator(ea: UnitaryMatrix, eb: UnitaryMatrix) -> UnitaryMatrix:
    """exp(-iA t) exp(-iB t) exp(iA t) exp(iB t) from the forward factors."""
    return ea @ eb @ ea.dagger() @ eb.dagger()


def bch_group_commutator(a: HermitianGenerator, b: HermitianGenerator, tau: float,
                         norm: str = "spectral") -> CommutatorResult:
    lhs = _group_commutator(expm_generator(a, tau), expm_generator(b, tau))
    target = commutator_target(a, b, tau)
    return CommutatorResult(lhs, target, _defect(lhs.matrix, target.matrix, norm))


def trotter_repeat(a: HermitianGenerator, b: HermitianGenerator, tau: float, n: int,
                   norm: str = "spectral") -> CommutatorResult:
    """(group commutator at tau/n)^(n^2) against exp(-tau^2 [A, B])."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    g = _group_commutator(expm_generator(a, tau / n), expm_generator(b, tau / n))
    approx = UnitaryMatrix(np.linalg.matrix_power(g.matrix, n * n), tol=1e-9)
    target = commutator_target(a, b, tau)
    return CommutatorResult(approx, target, _defect(approx.matrix, target.matrix, norm))


def fit_exponent(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


# single-atom scenarios --------------------------------------------------------

@dataclass(frozen=True)
class CommutatorScenario:
    """Free atom on a periodic grid, or a trapped atom in a truncated oscillator basis,
    each tensored with a two-level internal state (motional factor first)."""

    case: str = "harmonic_trap"
    coupling: float = 1.0
    theta_m: float = 0.1
    tau: float = 0.1
    omega: float = 1.0
    units: Units = Units()
    levels: int = 32
    box_length: float = 20.0
    grid_points: int = 128

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.tau == 0:
            raise ValueError("tau must be nonzero")
        if self.case == "harmonic_trap" and self.levels < 2:
            raise ValueError("need at least 2 oscillator levels")
        if self.case == "free_atom" and self.grid_points < 16:
            raise ValueError("need at least 16 grid points")

    @property
    def motional_dim(self) -> int:
        return self.levels if self.case == "harmonic_trap" else self.grid_points

    @property
    def dims(self) -> tuple[int, int]:
        return (self.motional_dim, 2)

    @property
    def p0(self) -> float:
        """Momentum kick on the |0> sector: K tau theta / 2."""
        return 0.5 * self.coupling * self.tau * self.theta_m

    @property
    def sector_shift(self) -> float:
        """m_z K tau theta with m_z = 1/2, the same kick written in the S_z form."""
        return M_Z_ZERO * self.coupling * self.tau * self.theta_m

    def position(self) -> np.ndarray:
        if self.case == "free_atom":
            return np.diag(box_grid(self.box_length, self.grid_points)).astype(complex)
        return oscillator_operators(self.levels, self.omega, self.units)[0]

    def motional_hamiltonian(self) -> np.ndarray:
        u = self.units
        if self.case == "free_atom":
            return kinetic_matrix(self.box_length, self.grid_points, u)
        x, p = oscillator_operators(self.levels + 1, self.omega, u)
        h = p @ p / (2 * u.mass) + 0.5 * u.mass * self.omega ** 2 * x @ x
        return h[:self.levels, :self.levels]

    def b_generator(self) -> HermitianGenerator:
        """H_A / hbar with the internal Hamiltonian zero in the rotating frame."""
        s = spin_operators(2)
        h = (np.kron(self.motional_hamiltonian(), np.eye(2))
             - self.coupling * np.kron(self.position(), s["x"]))
        return HermitianGenerator(h / self.units.hbar)

    def a_generator(self, a: int) -> HermitianGenerator:
        s = spin_operators(2)
        return HermitianGenerator(a * self.theta_m / self.tau * np.kron(np.eye(self.motional_dim), s["y"]))

    def analytic_commutator(self, a: int) -> np.ndarray:
        s = spin_operators(2)
        return (1j * a * self.theta_m / self.tau) * (self.coupling / self.units.hbar) * np.kron(self.position(), s["z"])

    def kick_generator(self) -> HermitianGenerator:
        """K x I_z / hbar; the target is exp(-i a (theta tau) K x I_z / hbar)."""
        s = spin_operators(2)
        return HermitianGenerator(self.coupling / self.units.hbar * np.kron(self.position(), s["z"]))

    def target_spec(self) -> IcPropagatorSpec:
        return IcPropagatorSpec(self.kick_generator(), self.theta_m * self.tau)

    def target(self, a: int) -> UnitaryMatrix:
        return self.target_spec().realize(a)


@dataclass(frozen=True)
class SynthesisResult:
    scenario: CommutatorScenario
    n: int
    products: dict          # logical value -> UnitaryMatrix
    targets: dict           # logical value -> UnitaryMatrix
    defects: dict           # full-space spectral defect
    sector_defects: dict    # restricted to internal |0> inputs

    @property
    def worst(self) -> float:
        return max(self.defects.values())


def _ic_factors(sc: CommutatorScenario, n: int, a: int):
    """exp(-iA tau/n) and its inverse as basic IC rotations about y by a theta / n."""
    fwd = basic_ic_unitary(BasicIcUnitary("y", sc.theta_m / n, a, target=1), sc.dims)
    return fwd, fwd.dagger()


def _qm_factors(sc: CommutatorScenario, n: int):
    fwd = expm_generator(sc.b_generator(), sc.tau / n)
    return fwd, fwd.dagger()


def trotter_useq_factors(sc: CommutatorScenario, n: int, a: int):
    """IC and ordinary factors whose alternating product is the repeated commutator.

    Each group is exp(-iA) exp(-iB) exp(iA) exp(iB) (rightmost first), so the
    sequence starts with exp(iB), ends with exp(-iA) followed by the identity.
    """
    ic_fwd, ic_back = _ic_factors(sc, n, a)
    qm_fwd, qm_back = _qm_factors(sc, n)
    groups = n * n
    ic, qm = [], [qm_back]
    for g in range(groups):
        ic += [ic_back, ic_fwd]
        qm += [qm_fwd, qm_back if g < groups - 1 else UnitaryMatrix.identity(qm_fwd.dim)]
    return ic, qm


def synthesize_ic_momentum_propagator(sc: CommutatorScenario, n: int,
                                      logical_values=(1, -1)) -> SynthesisResult:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    qm_fwd, qm_back = _qm_factors(sc, n)
    products, targets, defects, sector = {}, {}, {}, {}
    for a in logical_values:
        ic_fwd, ic_back = _ic_factors(sc, n, a)
        group = ic_fwd @ qm_fwd @ ic_back @ qm_back
        prod = UnitaryMatrix(np.linalg.matrix_power(group.matrix, n * n), tol=1e-9)
        tgt = sc.target(a)
        diff = prod.matrix - tgt.matrix
        products[a], targets[a] = prod, tgt
        defects[a] = op_norm(diff)
        sector[a] = op_norm(diff[:, ::2])
    return SynthesisResult(sc, n, products, targets, defects, sector)


def trotter_scaling(sc: CommutatorScenario, ns=(1, 2, 4, 8, 16), a: int = 1):
    """Defect of the repeated commutator for each n, and the fitted exponent in n."""
    defects = [synthesize_ic_momentum_propagator(sc, n, (a,)).defects[a] for n in ns]
    return list(ns), defects, fit_exponent(ns, defects)


# runs on the single-atom state ---------------------------------------------------

def _product_state(sc: CommutatorScenario, initial) -> StateVector:
    if isinstance(initial, GridWavefunction):
        if sc.case != "free_atom":
            raise ValueError("grid initial state needs the free_atom case")
        if initial.n_points != sc.grid_points or initial.box_length != sc.box_length:
            raise ValueError("initial grid does not match the scenario grid")
        internal = ZERO if initial.internal is None else np.asarray(initial.internal)
        amps, weight = initial.amplitudes, initial.dx
    else:
        amps = np.asarray(initial.amplitudes if isinstance(initial, StateVector) else initial, dtype=complex)
        internal, weight = ZERO, 1.0
        if sc.case == "free_atom":
            weight = sc.box_length / sc.grid_points
    if max_abs(np.asarray(internal) - ZERO) > 1e-12:
        raise ValueError("internal state must be |0>")
    if amps.size != sc.motional_dim:
        raise ValueError(f"motional state has {amps.size} entries, scenario needs {sc.motional_dim}")
    return StateVector(np.kron(amps, ZERO), Basis(sc.dims, weight=weight, label="atom"))



def kicked_quansdam_run(sc: CommutatorScenario, n: int, initial, exact: bool = False,
                          logical_values=(1, -1)) -> BranchPairTrace:
    """One synthesized (or exact) kick per branch, starting from motional state x |0>."""
    state = _product_state(sc, initial)
    if exact:
        ops = {a: sc.target(a) for a in logical_values}
    else:
        ops = synthesize_ic_momentum_propagator(sc, n, logical_values).products
    eye = UnitaryMatrix.identity(state.dim)
    sched = QuansdamSchedule((eye, eye), (lambda a: ops[a],), state)
    return run_branches(sched, logical_values)


def momentum_centroid(state: StateVector, sc: CommutatorScenario) -> float:
    """Mean momentum from the discrete Fourier transform of a free-atom grid state."""
    n = sc.grid_points
    amps = np.asarray(state.amplitudes).reshape(n, 2)
    phat = np.fft.fft(amps, axis=0)
    p = 2 * np.pi * sc.units.hbar * np.fft.fftfreq(n, d=sc.box_length / n)
    w = np.sum(np.abs(phat) ** 2, axis=1)
    return float(np.sum(p * w) / np.sum(w))


def scaling_csv(rows) -> str:
    """rows of (tau, n, defect, fitted_slope)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "n", "defect", "fitted_slope"])
    for tau, n, d, s in rows:
        w.writerow([format(float(tau), ".17g"), str(int(n)), format(float(d), ".17g"),
                    format(float(s), ".17g")])
    return buf.getvalue()
