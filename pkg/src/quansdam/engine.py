"""Two-branch (and N-branch) state-difference processes and their rate metrics.

A schedule ``U_K V_K U_{K-1} ... U_1 V_1 U_0`` is run once per logical
value. The information-carrying steps ``V_k`` depend on the logical value.
The ordinary steps ``U_k`` are shared by every branch. The overlap
``rho(k) = <Psi_+^k|Psi_-^k>`` between the first two branches is the quantity
whose decay the rate metrics describe.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hilbert import (
    Basis,
    HermitianGenerator,
    StateVector,
    UnitaryMatrix,
    Units,
    apply_unitary,
    inner_product,
)
from .oracle import BasicIcUnitary, ic_step

IcStep = Callable[[int], UnitaryMatrix]
InitialState = StateVector | Callable[[int], StateVector]

STATE_NORM_TOL = 1e-10
CLASS_BAND = 0.15
APPROPRIATE_SLOPE = 2 - CLASS_BAND


def generator_step(h: HermitianGenerator, t: float, hbar: float = 1.0) -> IcStep:
    """IC step a -> exp(-i a h t / hbar), cached per logical value."""
    w, v = np.linalg.eigh(h.matrix)
    cache: dict[int, UnitaryMatrix] = {}

    def step(a: int) -> UnitaryMatrix:
        if a not in cache:
            cache[a] = UnitaryMatrix((v * np.exp(-1j * w * (a * t / hbar))) @ v.conj().T)
        return cache[a]

    return step


@dataclass(frozen=True)
class QuansdamSchedule:
    """``qm_unitaries`` holds U_0..U_K and ``ic_steps`` holds V_1..V_K."""

    qm_unitaries: tuple[UnitaryMatrix, ...]
    ic_steps: tuple[IcStep, ...]
    initial_state: InitialState

    def __post_init__(self):
        qm = tuple(self.qm_unitaries)
        ic = tuple(self.ic_steps)
        object.__setattr__(self, "qm_unitaries", qm)
        object.__setattr__(self, "ic_steps", ic)
        if len(qm) != len(ic) + 1:
            raise ValueError(f"need K+1 ordinary steps for K IC steps, got {len(qm)} and {len(ic)}")
        dim = self.initial(1).dim if callable(self.initial_state) else self.initial_state.dim
        for k, u in enumerate(qm):
            if not isinstance(u, UnitaryMatrix):
                raise TypeError(f"U_{k} is not a UnitaryMatrix")
            if u.dim != dim:
                raise ValueError(f"U_{k} has dimension {u.dim}, state has {dim}")
        for k, v in enumerate(ic, start=1):
            d = v(1).dim
            if d != dim:
                raise ValueError(f"V_{k} has dimension {d}, state has {dim}")

    @property
    def K(self) -> int:
        return len(self.ic_steps)

    @property
    def dim(self) -> int:
        return self.qm_unitaries[0].dim

    def initial(self, a: int) -> StateVector:
        s = self.initial_state
        return s(a) if callable(s) else s

    @classmethod
    def alternating(cls, ic: IcStep, K: int, initial: InitialState,
                    qm: Sequence[UnitaryMatrix] | UnitaryMatrix | None = None) -> QuansdamSchedule:
        """Repeat one IC step K times; ``qm`` is a single shared U, a list of K+1, or identity."""
        if K < 0:
            raise ValueError(f"K must be >= 0, got {K}")
        dim = initial(1).dim if callable(initial) else initial.dim
        if qm is None:
            qm = [UnitaryMatrix.identity(dim)] * (K + 1)
        elif isinstance(qm, UnitaryMatrix):
            qm = [qm] * (K + 1)
        return cls(tuple(qm), (ic,) * K, initial)

    def inverted(self) -> QuansdamSchedule:
        """Time-reversed schedule U_0^+ V_1^+ ... V_K^+ U_K^+; initial state is supplied per run."""
        qm = tuple(u.dagger() for u in reversed(self.qm_unitaries))
        ic = tuple(_dagger_step(v) for v in reversed(self.ic_steps))
        return QuansdamSchedule(qm, ic, self.initial_state)

    def gate_counts(self) -> dict[str, int]:
        identity_count = sum(
            1 for u in self.qm_unitaries if np.array_equal(u.matrix, np.eye(u.dim)))
        return {"ic": self.K, "qm": len(self.qm_unitaries) - identity_count}


def _dagger_step(v: IcStep) -> IcStep:
    return lambda a: v(a).dagger()


@dataclass(frozen=True)
class BranchPairTrace:
    """State histories per logical value and the overlap series of the first two branches.

    ``overlaps[k]`` is taken after U_k; ``ic_overlaps[k-1]`` right after V_k.
    """

    logical_values: tuple[int, ...]
    branch_states: dict = field(repr=False)
    overlaps: np.ndarray = field(repr=False)
    ic_overlaps: np.ndarray = field(repr=False)
    physical: int | None = None

    @property
    def K(self) -> int:
        return len(self.overlaps) - 1

    def states(self, a: int) -> tuple[StateVector, ...]:
        return self.branch_states[a]

    def final(self, a: int) -> StateVector:
        return self.branch_states[a][-1]

    def branch_label(self, a: int) -> str:
        return "physical" if a == self.physical else "mathematical"

    def overlap_matrix(self, k: int | None = None) -> np.ndarray:
        """Gram matrix of all branches at step k (default final)."""
        k = self.K if k is None else k
        vs = np.array([self.branch_states[a][k].amplitudes for a in self.logical_values])
        return vs.conj() @ vs.T

    @classmethod
    def from_overlaps(cls, overlaps) -> BranchPairTrace:
        rho = np.asarray(overlaps, dtype=complex)
        return cls((), {}, rho, rho[1:].copy())


def _order_values(values) -> tuple[int, ...]:
    vals = tuple(sorted({int(a) for a in values}, reverse=True))
    if not vals:
        raise ValueError("need at least one logical value")
    return vals


def run_branches(s: QuansdamSchedule, logical_values=(1, -1),
                 physical: int | None = None) -> BranchPairTrace:
    """Evolve one history per logical value; branches ordered +1, 0, -1."""
    values = _order_values(logical_values)
    if physical is not None and physical not in values:
        raise ValueError(f"physical branch {physical} not among {values}")
    histories: dict[int, tuple[StateVector, ...]] = {}
    after_ic: dict[int, list[StateVector]] = {}
    for a in values:
        label = "physical" if a == physical else "mathematical"
        psi = apply_unitary(s.qm_unitaries[0], s.initial(a).with_branch(label))
        hist = [psi]
        phis = []
        for k in range(1, s.K + 1):
            phi = apply_unitary(s.ic_steps[k - 1](a), psi)
            psi = apply_unitary(s.qm_unitaries[k], phi)
            phis.append(phi)
            hist.append(psi)
        for k, st in enumerate(hist):
            if abs(st.norm() - 1) > STATE_NORM_TOL:
                raise ValueError(f"branch {a} lost normalization at step {k}: {st.norm()}")
        histories[a] = tuple(hist)
        after_ic[a] = phis
    first, second = (values[0], values[1]) if len(values) > 1 else (values[0], values[0])
    rho = np.array([inner_product(x, y) for x, y in zip(histories[first], histories[second])])
    rho_ic = np.array([inner_product(x, y) for x, y in zip(after_ic[first], after_ic[second])],
                      dtype=complex)
    return BranchPairTrace(values, histories, rho, rho_ic, physical)


# rate metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class QsdRateReport:
    """Series indexed by k = 0..K-1 for delta_rho / delta_rho_sq / per_step_rate
    (each refers to the step k -> k+1) and by k = 1..K for avg_rate."""

    overlaps: np.ndarray
    delta_rho: np.ndarray
    delta_rho_sq: np.ndarray
    avg_rate: np.ndarray
    per_step_rate: np.ndarray
    classification: str
    slope: float

    @property
    def K(self) -> int:
        return len(self.overlaps) - 1


def _middle(n: int, frac: float = 0.6) -> slice:
    cut = int(round(n * (1 - frac) / 2))
    return slice(cut, n - cut)


def _loglog_slope(ks: np.ndarray, values: np.ndarray):
    """Least-squares slope of log|values| vs log k on the middle 60% of positive k."""
    mask = (ks > 0) & (np.abs(values) > 0)
    ks, values = ks[mask], np.abs(values[mask])
    sel = _middle(len(ks))
    ks, values = ks[sel], values[sel]
    if len(ks) < 3:
        return None
    x, y = np.log(ks), np.log(values)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return float(coef[0]), ks, values, float(res[0]) if len(res) else 0.0


def classify(delta_rho, band: float = CLASS_BAND, zero_tol: float = 1e-15) -> tuple[str, float]:
    """Label the growth of |delta_rho(k+1)| with k by a log-log slope fit."""
    d = np.asarray(delta_rho, dtype=float)
    if d.size == 0 or np.all(np.abs(d) <= zero_tol):
        return "indeterminate", float("nan")
    ks = np.arange(d.size, dtype=float)
    fit = _loglog_slope(ks, np.where(np.abs(d) > zero_tol, d, 0.0))
    if fit is None:
        return "indeterminate", float("nan")
    slope, kk, vv, res_poly = fit
    for order, name in ((1, "linear"), (2, "square"), (3, "cubic")):
        if abs(slope - order) <= band:
            return name, slope
    _, res_exp, *_ = np.polyfit(kk, np.log(vv), 1, full=True)
    res_exp = float(res_exp[0]) if len(res_exp) else 0.0
    return ("exponential" if res_exp < res_poly else "polynomial"), slope


def qsd_rates(t: BranchPairTrace | Sequence[complex]) -> QsdRateReport:
    rho = t.overlaps if isinstance(t, BranchPairTrace) else np.asarray(t, dtype=complex)
    if len(rho) < 2:
        raise ValueError("rate metrics need at least two overlap points (K >= 1)")
    mag = np.abs(rho)
    delta = np.diff(mag)
    delta_sq = np.diff(mag ** 2)
    ks = np.arange(1, len(rho))
    avg = (mag[1:] - mag[0]) / ks
    per_step = delta / np.maximum(np.arange(len(delta)), 1)
    label, slope = classify(delta)
    return QsdRateReport(rho, delta, delta_sq, avg, per_step, label, slope)


def appropriate_check(report: QsdRateReport, threshold: float = APPROPRIATE_SLOPE) -> tuple[bool, float]:
    """Does |delta_rho(k+1)/k| grow at least quadratically in k (slope >= threshold)?"""
    ks = np.arange(len(report.per_step_rate), dtype=float)
    fit = _loglog_slope(ks, report.per_step_rate)
    if fit is None:
        return False, float("nan")
    return fit[0] >= threshold, fit[0]


def loglog_slope(ks, values) -> float:
    fit = _loglog_slope(np.asarray(ks, dtype=float), np.asarray(values, dtype=float))
    return float("nan") if fit is None else fit[0]


# reference process ----------------------------------------------------------

def reference_process(theta_m: float, K: int, initial: InitialState | None = None,
                      axis: str = "x", dims: tuple[int, ...] = (2,), target: int = 0,
                      embedding: str = "spin", logical_values=(1, -1)) -> BranchPairTrace:
    """Repeated basic IC rotation with every ordinary step the identity."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if initial is None:
        initial = StateVector.basis_state(0, Basis(tuple(dims)))
    step = ic_step(BasicIcUnitary(axis, theta_m, 1, target, embedding), dims)
    return run_branches(QuansdamSchedule.alternating(step, K, initial), logical_values)


def reference_overlap(theta_m: float, k):
    return np.cos(np.asarray(k) * theta_m)


def reference_delta(theta_m: float, k):
    """Closed-form |rho(k+1)| - |rho(k)| for the reference process, valid while (k+1)|theta| <= pi/2."""
    k = np.asarray(k, dtype=float)
    return -2 * np.sin((k + 0.5) * theta_m) * np.sin(0.5 * theta_m)


def reference_delta_small_angle(theta_m: float, k, K: int):
    """Small-angle form with K|theta| = pi/2 substituted."""
    return -0.25 * np.pi * abs(theta_m) * (2 * np.asarray(k, dtype=float) + 1) / K


# amplitude split ------------------------------------------------------------

@dataclass(frozen=True)
class AmplitudeDecomposition:
    psi_a: np.ndarray
    psi_b: np.ndarray
    norm_split: float       # ||psi_a||^2 + ||psi_b||^2
    cross_term: complex     # <psi_a|psi_b> + <psi_b|psi_a>
    orthogonality: complex  # 1 - 2||psi_b||^2 - 2<psi_a|psi_b>

    def checks_pass(self, tol: float = 1e-10) -> bool:
        return abs(self.norm_split - 1) <= tol and abs(self.cross_term) <= tol


def amplitude_decomposition(plus: StateVector, minus: StateVector) -> AmplitudeDecomposition:
    if plus.dim != minus.dim:
        raise ValueError(f"branch dimensions differ: {plus.dim} vs {minus.dim}")
    w = plus.basis.weight
    a = 0.5 * (plus.amplitudes + minus.amplitudes)
    b = 0.5 * (plus.amplitudes - minus.amplitudes)
    na = float(np.sum(np.abs(a) ** 2) * w)
    nb = float(np.sum(np.abs(b) ** 2) * w)
    ab = complex(np.vdot(a, b) * w)
    ba = complex(np.vdot(b, a) * w)
    return AmplitudeDecomposition(a, b, na + nb, ab + ba, 1 - 2 * nb - 2 * ab)


def discrimination_probability(overlap: complex) -> float:
    m = abs(overlap)
    if m > 1 + 1e-10:
        raise ValueError(f"|overlap| = {m} exceeds 1")
    return float(min(1.0, max(0.0, 1 - m)))


# Gaussian packets -----------------------------------------------------------

@dataclass(frozen=True)
class GaussianPacketParams:
    x: float
    p: float
    variance: float   # (Delta x)^2
    T: float = 0.0
    units: Units = Units()

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance}")

    @property
    def beta(self) -> float:
        return self.units.hbar * self.T / (2 * self.units.mass)


def gaussian_packet(params: GaussianPacketParams, x: np.ndarray) -> np.ndarray:
    """Normalized packet exp(-(x-x0)^2 / (4(Delta^2 + i beta)) + i p x / hbar) sampled on x."""
    d2, b, hbar = params.variance, params.beta, params.units.hbar
    norm = (2 * np.pi * (d2 ** 2 + b ** 2) / d2) ** -0.25
    return norm * np.exp(-(x - params.x) ** 2 / (4 * (d2 + 1j * b)) + 1j * params.p * x / hbar)


def gaussian_overlap(p1: GaussianPacketParams, p2: GaussianPacketParams) -> float:
    """Closed-form |<phi_1|phi_2>| for two packets."""
    if p1.units != p2.units:
        raise ValueError("packets use different units")
    hbar = p1.units.hbar
    d1, d2 = p1.variance, p2.variance
    b1, b2 = p1.beta, p2.beta
    p12, x12, b12 = p1.p - p2.p, p1.x - p2.x, b1 - b2
    den = (d1 + d2) ** 2 + b12 ** 2
    exponent = (-(p12 ** 2) * d1 * d2 * (d1 + d2) / hbar ** 2
                - 0.25 * d1 * (x12 - 2 * p12 * b2 / hbar) ** 2
                - 0.25 * d2 * (x12 - 2 * p12 * b1 / hbar) ** 2)
    return float((4 * d1 * d2 / den) ** 0.25 * np.exp(exponent / den))


# export ---------------------------------------------------------------------

TRACE_COLUMNS = ("k", "re_rho", "im_rho", "abs_rho",
                 "delta_rho=|rho(k)|-|rho(k-1)|",
                 "delta_rho_sq=|rho(k)|^2-|rho(k-1)|^2",
                 "avg_rate=(|rho(k)|-|rho(0)|)/k")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def trace_rows(report: QsdRateReport) -> list[list[str]]:
    rows = []
    for k, r in enumerate(report.overlaps):
        tail = ["", "", ""] if k == 0 else [
            fmt(report.delta_rho[k - 1]), fmt(report.delta_rho_sq[k - 1]), fmt(report.avg_rate[k - 1])]
        rows.append([str(k), fmt(r.real), fmt(r.imag), fmt(abs(r)), *tail])
    return rows


def trace_csv(report: QsdRateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    w.writerows(trace_rows(report))
    return buf.getvalue()
