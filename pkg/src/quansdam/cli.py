"""Command-line experiment runner.

Each subcommand reads an optional config (``key=value`` lines or a JSON
object), runs one sweep and writes a table as CSV or JSON. Exit status is 0
on success, 2 for configuration errors and 3 when a computed quantity misses
its tolerance (the table is still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .bch import M_Z_ZERO, CommutatorScenario, bch_group_commutator, fit_exponent, synthesize_ic_momentum_propagator
from .boolean import SearchOracleSpec, parallel_decomposition_check, parse_oracle_spec
from .config import ConfigError, ExperimentConfig, Param, build_config, read_raw
from .continuum import (
    IcPropagatorSpec,
    analyze,
    box_grid,
    diagonal_useq,
    direct_residual,
    fast_convergence_check,
    minimal_terms,
    momentum_eigenfunction,
    oscillator_basis,
    phase_branch_overlap,
    phase_quansdam_step,
    plane_wave_overlap_continuum,
    plane_wave_overlap_sum,
    truncation_error,
    useq_defect,
)
from .engine import (
    GaussianPacketParams,
    QuansdamSchedule,
    amplitude_decomposition,
    appropriate_check,
    gaussian_overlap,
    gaussian_packet,
    qsd_rates,
    reference_delta,
    reference_process,
    run_branches,
)
from .hilbert import Basis, HermitianGenerator, StateVector, make_rng, random_hermitian, random_state, random_unitary
from .oracle import BasicIcUnitary, default_angle, ic_step

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE = 0, 2, 3
ZERO_DEFECT = 1e-13  # defects at or below this count as exact zeros in slope fits


@dataclass
class Table:
    columns: list[str]
    rows: list[list]
    summary: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    name: str
    help: str
    schema: dict
    run: Callable[[ExperimentConfig], Table]
    default_format: str = "csv"


def _at_least(lo, label=None):
    def check(v):
        values = v if isinstance(v, list) else [v]
        if any(x < lo for x in values):
            return f"{label or 'value'} must be ≥ {lo}"
        return None
    return check


def _positive(v):
    values = v if isinstance(v, list) else [v]
    return None if all(x > 0 for x in values) else "must be positive"


def _seed_param() -> Param:
    return Param("int", 0, check=_at_least(0, "seed"))


# reference-sweep ---------------------------------------------------------------

REFERENCE_SCHEMA = {
    "theta": Param("float", math.pi / 64),
    "K": Param("int", 32, check=_at_least(1, "K")),
    "axis": Param("str", "x", choices=("x", "y")),
    "tol": Param("float", 1e-12, check=_positive),
    "seed": _seed_param(),
}


def run_reference_sweep(cfg: ExperimentConfig) -> Table:
    theta, K, tol = cfg["theta"], cfg["K"], cfg["tol"]
    trace = reference_process(theta, K, axis=cfg["axis"])
    rho = trace.overlaps
    mag = np.abs(rho)
    rows, failures = [], []
    for k in range(K + 1):
        row = [k, rho[k].real, rho[k].imag, mag[k], None, None, None]
        # the closed form holds while the rotation has not passed a quarter turn
        if k < K:
            delta = mag[k + 1] - mag[k]
            row[4] = delta
            if (k + 1) * abs(theta) <= math.pi / 2 + 1e-12:
                analytic = float(reference_delta(theta, k))
                row[5], row[6] = analytic, abs(delta - analytic)
                if row[6] > tol:
                    failures.append(f"k={k}: delta deviation {row[6]:.3e} > {tol:g}")
        rows.append(row)
    report = qsd_rates(trace)
    summary = {"final_abs_rho": float(mag[-1]), "average_rate": float(report.avg_rate[-1]),
               "classification": report.classification, "slope": report.slope}
    if K * abs(theta) <= math.pi / 2 + 1e-12:
        cos_dev = float(np.max(np.abs(rho - np.cos(np.arange(K + 1) * theta))))
        summary["cos_law_deviation"] = cos_dev
        if cos_dev > tol:
            failures.append(f"overlap deviates from cos(k theta) by {cos_dev:.3e}")
    columns = ["k", "re_rho=Re<Psi+(k)|Psi-(k)>", "im_rho=Im<Psi+(k)|Psi-(k)>", "abs_rho=|rho(k)|",
               "delta_rho=|rho(k+1)|-|rho(k)|", "analytic=-2sin((k+1/2)theta)sin(theta/2)",
               "deviation=|delta_rho-analytic|"]
    return Table(columns, rows, summary, failures)


# qsd-sweep -----------------------------------------------------------------

QSD_SCHEMA = {
    "n": Param("int", 1, check=_at_least(1, "n")),
    "arity": Param("int", 2, choices=(2, 3)),
    "c": Param("float", 1.0),
    "theta": Param("float", None),
    "K": Param("int", 16, check=_at_least(1, "K")),
    "axis": Param("str", "x", choices=("x", "y", "z")),
    "target": Param("int", 0, check=_at_least(0, "target")),
    "embedding": Param("str", "spin", choices=("spin", "pseudospin")),
    "qm": Param("str", "identity", choices=("identity", "random")),
    "initial": Param("str", "zero", choices=("zero", "random")),
    "tol": Param("float", 1e-10, check=_positive),
    "seed": _seed_param(),
}


def run_qsd_sweep(cfg: ExperimentConfig) -> Table:
    n, K = cfg["n"], cfg["K"]
    if cfg["target"] >= n:
        raise ConfigError(f"key 'target': site {cfg['target']} outside a register of {n} sites")
    theta = default_angle(n, cfg["c"]) if cfg["theta"] is None else cfg["theta"]
    dims = (cfg["arity"],) * n
    basis = Basis(dims)
    rng = make_rng(cfg["seed"])
    initial = (StateVector.basis_state(0, basis) if cfg["initial"] == "zero"
               else random_state(basis.dim, rng, basis))
    qm = None if cfg["qm"] == "identity" else [random_unitary(basis.dim, rng) for _ in range(K + 1)]
    step = ic_step(BasicIcUnitary(cfg["axis"], theta, 1, cfg["target"], cfg["embedding"]), dims)
    trace = run_branches(QuansdamSchedule.alternating(step, K, initial, qm))
    report = qsd_rates(trace)
    rows = []
    for k, r in enumerate(report.overlaps):
        tail = [None, None, None] if k == 0 else [
            report.delta_rho[k - 1], report.delta_rho_sq[k - 1], report.avg_rate[k - 1]]
        rows.append([k, r.real, r.imag, abs(r), *tail])
    dec = amplitude_decomposition(trace.final(1), trace.final(-1))
    ok, app_slope = appropriate_check(report)
    summary = {"theta": theta, "classification": report.classification, "slope": report.slope,
               "appropriate": ok, "appropriate_slope": app_slope,
               "norm_split": dec.norm_split, "cross_term_abs": abs(dec.cross_term)}
    failures = [] if dec.checks_pass(cfg["tol"]) else [
        f"amplitude split fails: norm {dec.norm_split!r}, cross term {abs(dec.cross_term):.3e}"]
    columns = ["k", "re_rho=Re<Psi+(k)|Psi-(k)>", "im_rho=Im<Psi+(k)|Psi-(k)>", "abs_rho=|rho(k)|",
               "delta_rho=|rho(k)|-|rho(k-1)|", "delta_rho_sq=|rho(k)|^2-|rho(k-1)|^2",
               "avg_rate=(|rho(k)|-|rho(0)|)/k"]
    return Table(columns, rows, summary, failures)


# oracle-equiv ----------------------------------------------------------------

ORACLE_MAX_N = 5

ORACLE_SCHEMA = {
    "n": Param("int", 3, check=_at_least(1, "n")),
    "theta": Param("float", math.pi / 3),
    "x0": Param("int", None, check=_at_least(0, "x0")),
    "spec": Param("str", None),
    "tol": Param("float", 1e-12, check=_positive),
    "seed": _seed_param(),
}

ORACLE_FIELDS = (
    ("selective_vs_reduced", "max|BFSEQ(x0,theta)-<00|BFSEQ|00>|"),
    ("reduced_vs_usual", "max|<00|BFSEQ|00>-U_o|"),
    ("usual_vs_selective_phase", "max|U_o-C_S(theta)|"),
    ("selective_vs_selective_phase", "max|BFSEQ(x0,theta)-C_S(theta)|"),
    ("product_vs_reduced", "max|prod_y BFSEQ(y)-<00|BFSEQ|00>|"),
    ("product_reversed_vs_reduced", "max|reversed prod_y BFSEQ(y)-<00|BFSEQ|00>|"),
    ("uf_product_vs_uf", "max|prod_x U_f(x)-U_f|"),
    ("ancilla_leakage", "max amplitude outside ancilla |0>|0>"),
)


def run_oracle_equiv(cfg: ExperimentConfig) -> Table:
    n, x0s = cfg["n"], None
    if cfg["spec"] is not None:
        try:
            spec = parse_oracle_spec(cfg["spec"])
        except ValueError as exc:
            raise ConfigError(f"key 'spec': {exc}") from None
        n, x0s = spec.n, [spec.x0]
    if n > ORACLE_MAX_N:
        raise ConfigError(f"n too large: exhaustive mode supports n ≤ {ORACLE_MAX_N}, got {n}")
    if x0s is None:
        if cfg["x0"] is not None and cfg["x0"] >= 2 ** n:
            raise ConfigError(f"key 'x0': {cfg['x0']} out of range for n={n}")
        x0s = list(range(2 ** n)) if cfg["x0"] is None else [cfg["x0"]]
    theta, tol = cfg["theta"], cfg["tol"]
    rows, failures = [], []
    for x0 in sorted(x0s):
        rep = parallel_decomposition_check(SearchOracleSpec(n, x0), theta)
        d = rep.to_dict()
        rows.append([n, x0, theta, *(d[f] for f, _ in ORACLE_FIELDS),
                     rep.nontrivial_selective_factors, rep.max_deviation])
        if rep.max_deviation > tol:
            failures.append(f"x0={x0}: max deviation {rep.max_deviation:.3e} > {tol:g}")
        if rep.nontrivial_selective_factors > 1:
            failures.append(f"x0={x0}: {rep.nontrivial_selective_factors} nontrivial selective factors")
    columns = ["n", "x0", "theta", *(f"{f}={label}" for f, label in ORACLE_FIELDS),
               "nontrivial_selective_factors", "max_deviation"]
    worst = max(r[-1] for r in rows)
    return Table(columns, rows, {"worst_deviation": worst, "x0_count": len(rows)}, failures)


# phase-quansdam --------------------------------------------------------------

PHASE_SCHEMA = {
    "sweep": Param("str", "shift", choices=("shift", "box")),
    "L": Param("float", 8.0, check=_positive),
    "points": Param("int", 256, check=_at_least(16, "points")),
    "k": Param("int", 0),
    "step": Param("float", 0.25, check=_positive),
    "steps": Param("int", 8, check=_at_least(1, "steps")),
    "p0_prime": Param("float", 0.3),
    "box_lengths": Param("floats", [10.0, 20.0, 40.0, 80.0], check=_positive),
    "tol": Param("float", 1e-10, check=_positive),
    "seed": _seed_param(),
}


def _phase_point(L, points, k, p0_prime):
    psi = momentum_eigenfunction(L, k, points)
    ov = phase_branch_overlap(psi, p0_prime)
    kappa = 2 * M_Z_ZERO * p0_prime / psi.units.hbar
    closed = plane_wave_overlap_sum(kappa, L, points)
    plus = phase_quansdam_step(psi, p0_prime, 1)
    modulus = float(np.max(np.abs(np.abs(plus.amplitudes) - np.abs(psi.amplitudes))))
    return ov, closed, abs(plane_wave_overlap_continuum(kappa, L)), modulus


def run_phase_quansdam(cfg: ExperimentConfig) -> Table:
    L, points, k, tol = cfg["L"], cfg["points"], cfg["k"], cfg["tol"]
    rows, failures = [], []
    if cfg["sweep"] == "shift":
        quantum = 2 * np.pi / L  # momentum lattice spacing with hbar = 1
        for j in range(cfg["steps"] + 1):
            shift = j * cfg["step"]
            p0_prime = shift * quantum / M_Z_ZERO
            ov, closed, cont, modulus = _phase_point(L, points, k, p0_prime)
            rows.append([j, shift, p0_prime, ov.real, ov.imag, abs(ov), abs(closed), cont, modulus])
            separation = 2 * shift
            if j > 0 and abs(separation - round(separation)) < 1e-12 and abs(ov) > tol:
                failures.append(f"on-lattice shift {shift:g}: |overlap| {abs(ov):.3e} > {tol:g}")
            if abs(ov - closed) > tol:
                failures.append(f"shift {shift:g}: grid overlap differs from geometric sum by {abs(ov - closed):.3e}")
            if modulus > 1e-12:
                failures.append(f"shift {shift:g}: amplitude moduli changed by {modulus:.3e}")
        columns = ["j", "shift=m_z p0'/(2 pi hbar/L)", "p0_prime",
                   "re_overlap=Re<Psi+|Psi->", "im_overlap=Im<Psi+|Psi->", "abs_overlap=|<Psi+|Psi->|",
                   "grid_closed_form=|(dx/L) sum_j exp(i kappa x_j)|", "continuum=|sinc(kappa L/2)|",
                   "modulus_change=max||Psi+(x)|-|Psi(x)||"]
        summary = {"L": L, "points": points}
    else:
        p0_prime = cfg["p0_prime"]
        for box in sorted(cfg["box_lengths"]):
            ov, closed, cont, modulus = _phase_point(box, points, k, p0_prime)
            rows.append([box, p0_prime, abs(ov), abs(closed), cont, modulus])
        mags = [r[2] for r in rows]
        if any(b >= a for a, b in zip(mags, mags[1:])):
            failures.append("|overlap| does not decay monotonically with the box length")
        columns = ["L", "p0_prime", "abs_overlap=|<Psi+|Psi->|",
                   "grid_closed_form=|(dx/L) sum_j exp(i kappa x_j)|", "continuum=|sinc(kappa L/2)|",
                   "modulus_change=max||Psi+(x)|-|Psi(x)||"]
        summary = {"p0_prime": p0_prime, "points": points}
    return Table(columns, rows, summary, failures)


# truncation ------------------------------------------------------------------

TRUNCATION_SCHEMA = {
    "state": Param("str", "displaced", choices=("displaced", "eigen")),
    "eigen_index": Param("int", 0, check=_at_least(0, "eigen_index")),
    "displacement": Param("float", 1.0),
    "momentum": Param("float", 0.0),
    "L": Param("float", 40.0, check=_positive),
    "points": Param("int", 1024, check=_at_least(16, "points")),
    "levels": Param("int", 64, check=_at_least(1, "levels")),
    "omega": Param("float", 1.0, check=_positive),
    "window_start": Param("int", 0, check=_at_least(0, "window_start")),
    "max_terms": Param("int", 32, check=_at_least(1, "max_terms")),
    "eps": Param("float", 1e-3, check=_positive),
    "tol": Param("float", 1e-10, check=_positive),
    "seed": _seed_param(),
}


def run_truncation(cfg: ExperimentConfig) -> Table:
    L, points, levels, omega = cfg["L"], cfg["points"], cfg["levels"], cfg["omega"]
    start, tol = cfg["window_start"], cfg["tol"]
    if start + cfg["max_terms"] > levels:
        raise ConfigError(f"key 'max_terms': window_start + max_terms exceeds levels={levels}")
    basis = oscillator_basis(L, points, levels, omega)
    if cfg["state"] == "eigen":
        if cfg["eigen_index"] >= levels:
            raise ConfigError(f"key 'eigen_index': must be < levels={levels}")
        psi = basis.functions[cfg["eigen_index"]].astype(complex)
    else:
        psi = _displaced_ground(box_grid(L, points), cfg["displacement"], cfg["momentum"], omega)
    exp = analyze(psi, basis)
    rows, failures = [], []
    for m in range(1, cfg["max_terms"] + 1):
        eps = truncation_error(exp, start, m)
        direct = direct_residual(exp, psi, start, m)
        rows.append([m, eps, direct, abs(eps - direct)])
        if abs(eps - direct) > tol:
            failures.append(f"M={m}: eps differs from direct residual by {abs(eps - direct):.3e}")
    errs = [r[1] for r in rows]
    if any(b > a for a, b in zip(errs, errs[1:])):
        failures.append("eps(L,M) is not monotone in M")
    ok, window = fast_convergence_check(exp, cfg["eps"], cfg["max_terms"])
    summary = {"minimal_terms": minimal_terms(exp, cfg["eps"]), "fast_convergent": ok,
               "window": list(window) if window else None, "eps": cfg["eps"],
               "window_start": start}
    columns = ["M", "eps=sqrt(sum_{k<L}|A_k|^2+sum_{k>=L+M}|A_k|^2)",
               "direct=||sum_{L<=k<L+M} A_k u_k-Psi||", "deviation=|eps-direct|"]
    return Table(columns, rows, summary, failures)


def _displaced_ground(x, displacement, momentum, omega):
    """Oscillator ground state moved by ``displacement`` and boosted by ``momentum`` (hbar = m = 1)."""
    return ((omega / np.pi) ** 0.25 * np.exp(-omega * (x - displacement) ** 2 / 2 + 1j * momentum * x))


# bch-scaling -----------------------------------------------------------------

BCH_SCHEMA = {
    "mode": Param("str", "random", choices=("random", "commuting", "harmonic_trap", "free_atom")),
    "dim": Param("int", 4, check=_at_least(2, "dim")),
    "pairs": Param("int", 5, check=_at_least(1, "pairs")),
    "taus": Param("floats", [0.2, 0.1, 0.05, 0.025], check=_positive),
    "norm": Param("str", "spectral", choices=("spectral", "max")),
    "ns": Param("ints", [1, 2, 4, 8, 16], check=_at_least(1, "n")),
    "tau": Param("float", 0.1, check=_positive),
    "theta": Param("float", 0.1),
    "coupling": Param("float", 1.0),
    "levels": Param("int", 32, check=_at_least(2, "levels")),
    "L": Param("float", 20.0, check=_positive),
    "points": Param("int", 128, check=_at_least(16, "points")),
    "seed": _seed_param(),
}
BCH_ORDER, BCH_ORDER_TOL = 3.0, 0.3
TROTTER_ORDER, TROTTER_ORDER_TOL = -1.0, 0.2
COMMUTING_TOL = 1e-12


def _fitted(xs, defects) -> float:
    if min(defects) <= ZERO_DEFECT:
        return float("nan")
    return fit_exponent(xs, defects)


def run_bch_scaling(cfg: ExperimentConfig) -> Table:
    mode = cfg["mode"]
    rows, failures = [], []
    if mode in ("random", "commuting"):
        rng = make_rng(cfg["seed"])
        taus = sorted(cfg["taus"], reverse=True)
        for pair in range(cfg["pairs"]):
            a = random_hermitian(cfg["dim"], rng, norm=1.0)
            if mode == "random":
                b = random_hermitian(cfg["dim"], rng, norm=1.0)
            else:
                # a polynomial in A commutes with A exactly
                b = HermitianGenerator(0.5 * a.matrix + 0.3 * a.matrix @ a.matrix)
            defects = [bch_group_commutator(a, b, t, cfg["norm"]).defect for t in taus]
            slope = _fitted(taus, defects)
            rows += [[pair, t, 1, d, slope] for t, d in zip(taus, defects)]
            if mode == "random" and not abs(slope - BCH_ORDER) <= BCH_ORDER_TOL:
                failures.append(f"pair {pair}: fitted slope {slope:.4f} outside {BCH_ORDER} ± {BCH_ORDER_TOL}")
            if mode == "commuting" and max(defects) > COMMUTING_TOL:
                failures.append(f"pair {pair}: commuting defect {max(defects):.3e} > {COMMUTING_TOL:g}")
        slope_label = "fitted_slope=dlog(defect)/dlog(tau)"
    else:
        sc = CommutatorScenario(case=mode, coupling=cfg["coupling"], theta_m=cfg["theta"], tau=cfg["tau"],
                                levels=cfg["levels"], box_length=cfg["L"], grid_points=cfg["points"])
        ns = sorted(set(cfg["ns"]))
        defects = [synthesize_ic_momentum_propagator(sc, n, (1,)).defects[1] for n in ns]
        slope = _fitted(ns, defects) if len(ns) > 1 else float("nan")
        rows = [[0, cfg["tau"], n, d, slope] for n, d in zip(ns, defects)]
        if len(ns) > 1 and not abs(slope - TROTTER_ORDER) <= TROTTER_ORDER_TOL:
            failures.append(f"fitted exponent {slope:.4f} outside {TROTTER_ORDER} ± {TROTTER_ORDER_TOL}")
        slope_label = "fitted_slope=dlog(defect)/dlog(n)"
    columns = ["pair", "tau", "n", "defect=||(e^{-iAt}e^{-iBt}e^{iAt}e^{iBt})^{n^2}-e^{-tau^2[A,B]}||, t=tau/n",
               slope_label]
    return Table(columns, rows, {"mode": mode, "norm": cfg["norm"]}, failures)


# gaussian-overlap-check ------------------------------------------------------

GAUSSIAN_SCHEMA = {
    "pairs": Param("int", 10, check=_at_least(1, "pairs")),
    "x_range": Param("float", 1.0, check=_positive),
    "p_range": Param("float", 1.0, check=_positive),
    "variance_min": Param("float", 0.3, check=_positive),
    "variance_max": Param("float", 2.0, check=_positive),
    "T_max": Param("float", 3.0, check=_at_least(0, "T_max")),
    "points": Param("int", 40001, check=_at_least(101, "points")),
    "tol": Param("float", 1e-6, check=_positive),
    "seed": _seed_param(),
}


def quadrature_overlap(p1: GaussianPacketParams, p2: GaussianPacketParams, points: int = 40001) -> float:
    """|<phi_1|phi_2>| by the trapezoid rule over eight packet widths around both centres."""
    width = 8 * max(np.sqrt(p.variance + p.beta ** 2 / p.variance) for p in (p1, p2))
    x = np.linspace(min(p1.x, p2.x) - width, max(p1.x, p2.x) + width, points)
    return float(abs(np.trapezoid(np.conj(gaussian_packet(p1, x)) * gaussian_packet(p2, x), x)))


def run_gaussian_overlap(cfg: ExperimentConfig) -> Table:
    if cfg["variance_min"] > cfg["variance_max"]:
        raise ConfigError("key 'variance_min': exceeds variance_max")
    rng = make_rng(cfg["seed"])
    rows, failures = [], []
    for i in range(cfg["pairs"]):
        params = [GaussianPacketParams(rng.uniform(-cfg["x_range"], cfg["x_range"]),
                                       rng.uniform(-cfg["p_range"], cfg["p_range"]),
                                       rng.uniform(cfg["variance_min"], cfg["variance_max"]),
                                       rng.uniform(0, cfg["T_max"])) for _ in range(2)]
        closed = gaussian_overlap(*params)
        quad = quadrature_overlap(*params, points=cfg["points"])
        rows.append([i, *(v for p in params for v in (p.x, p.p, p.variance, p.T)), closed, quad,
                     abs(closed - quad)])
        if abs(closed - quad) > cfg["tol"]:
            failures.append(f"pair {i}: closed form vs quadrature {abs(closed - quad):.3e} > {cfg['tol']:g}")
    columns = ["pair", "x1", "p1", "variance1", "T1", "x2", "p2", "variance2", "T2",
               "closed_form=|<phi1|phi2>| closed form", "quadrature=|trapezoid of conj(phi1) phi2|",
               "deviation=|closed_form-quadrature|"]
    return Table(columns, rows, {"worst_deviation": max(r[-1] for r in rows)}, failures)


# useq-defect -----------------------------------------------------------------

USEQ_SCHEMA = {
    "mode": Param("str", "diagonal", choices=("diagonal", "harmonic_trap", "free_atom")),
    "trials": Param("int", 5, check=_at_least(1, "trials")),
    "t_m": Param("float", 0.7),
    "scale": Param("float", 1.0, check=_positive),
    "ns": Param("ints", [1, 2, 4, 8], check=_at_least(1, "n")),
    "tau": Param("float", 0.1, check=_positive),
    "theta": Param("float", 0.1),
    "coupling": Param("float", 1.0),
    "levels": Param("int", 32, check=_at_least(2, "levels")),
    "L": Param("float", 20.0, check=_positive),
    "points": Param("int", 128, check=_at_least(16, "points")),
    "tol": Param("float", 1e-12, check=_positive),
    "seed": _seed_param(),
}


def run_useq_defect(cfg: ExperimentConfig) -> Table:
    rows, failures = [], []
    if cfg["mode"] == "diagonal":
        rng = make_rng(cfg["seed"])
        for trial in range(cfg["trials"]):
            h = rng.uniform(-cfg["scale"], cfg["scale"], 4)
            spec = IcPropagatorSpec(HermitianGenerator(np.diag(h)), cfg["t_m"])
            rep = useq_defect({a: diagonal_useq(h, cfg["t_m"], a) for a in (1, -1)}, spec)
            for a in (1, -1):
                rows.append([trial, a, *h, rep.defects[a], rep.phase_aligned[a]])
            if rep.worst > cfg["tol"]:
                failures.append(f"trial {trial}: defect {rep.worst:.3e} > {cfg['tol']:g}")
        columns = ["trial", "a", "h00", "h01", "h10", "h11",
                   "defect=max|USEQ(a)-exp(-i a H t_m)|", "phase_aligned=min_phi max|USEQ(a)-e^{i phi}exp(-i a H t_m)|"]
        return Table(columns, rows, {"mode": "diagonal"}, failures)
    sc = CommutatorScenario(case=cfg["mode"], coupling=cfg["coupling"], theta_m=cfg["theta"], tau=cfg["tau"],
                            levels=cfg["levels"], box_length=cfg["L"], grid_points=cfg["points"])
    ns = sorted(set(cfg["ns"]))
    worst = []
    for n in ns:
        res = synthesize_ic_momentum_propagator(sc, n, (1, -1))
        for a in (1, -1):
            rows.append([n, a, res.defects[a], res.sector_defects[a]])
        worst.append(res.worst)
    if len(ns) > 1 and not worst[-1] < worst[0]:
        failures.append("synthesis defect does not shrink with n")
    columns = ["n", "a", "defect=||USEQ_n(a)-exp(-i a theta tau K x I_z/hbar)||",
               "sector_defect=same restricted to internal |0> inputs"]
    return Table(columns, rows, {"mode": cfg["mode"]}, failures)


EXPERIMENTS = {e.name: e for e in (
    Experiment("reference-sweep", "repeated basic rotation: overlap, per-step change and closed form",
               REFERENCE_SCHEMA, run_reference_sweep),
    Experiment("qsd-sweep", "general two-branch process with rate metrics", QSD_SCHEMA, run_qsd_sweep),
    Experiment("oracle-equiv", "exhaustive search-oracle equivalence report", ORACLE_SCHEMA,
               run_oracle_equiv, "json"),
    Experiment("phase-quansdam", "momentum-displacement branch overlaps on a periodic box",
               PHASE_SCHEMA, run_phase_quansdam),
    Experiment("truncation", "oscillator-basis truncation error curves", TRUNCATION_SCHEMA, run_truncation),
    Experiment("bch-scaling", "group-commutator and repeated-commutator defect scaling",
               BCH_SCHEMA, run_bch_scaling),
    Experiment("gaussian-overlap-check", "Gaussian packet overlap closed form against quadrature",
               GAUSSIAN_SCHEMA, run_gaussian_overlap),
    Experiment("useq-defect", "assembled unitary sequences against their target propagators",
               USEQ_SCHEMA, run_useq_defect),
)}


# output ----------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if not math.isfinite(v) else float(v)
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    return v


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    w.writerows([_cell(v) for v in row] for row in table.rows)
    return buf.getvalue()


def render_json(name: str, cfg: ExperimentConfig, table: Table) -> str:
    doc = {
        "experiment": name,
        "parameters": _json_value(cfg.parameters),
        "columns": table.columns,
        "rows": [dict(zip(table.columns, _json_value(list(r)))) for r in table.rows],
        "summary": _json_value(table.summary),
        "failures": table.failures,
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# entry point -----------------------------------------------------------------

def _schema_help(schema: dict) -> str:
    lines = ["config keys:"]
    for key, p in schema.items():
        default = "unset" if p.default is None else (
            ",".join(_cell(v) for v in p.default) if isinstance(p.default, list) else _cell(p.default))
        choices = f" one of {'|'.join(map(str, p.choices))}" if p.choices else ""
        lines.append(f"  {key:<14} {p.kind:<6} default {default}{choices}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quansdam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for exp in EXPERIMENTS.values():
        p = sub.add_parser(exp.name, help=exp.help, description=exp.help, epilog=_schema_help(exp.schema),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="key=value or JSON parameter file")
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=exp.default_format)
        p.add_argument("--seed", type=int, help="PRNG seed (overrides the config value)")
    return parser


def load_config(name: str, path: str | None, seed: int | None) -> ExperimentConfig:
    raw, where = {}, {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw, where = read_raw(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    if seed is not None:
        raw["seed"], where["seed"] = seed, "--seed"
    return build_config(name, EXPERIMENTS[name].schema, raw, where)


def run(name: str, cfg: ExperimentConfig, fmt: str) -> tuple[str, Table]:
    table = EXPERIMENTS[name].run(cfg)
    text = render_csv(table) if fmt == "csv" else render_json(name, cfg, table)
    return text, table


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.experiment, args.config, args.seed)
        text, table = run(args.experiment, cfg, args.format)
    except ConfigError as exc:
        print(f"quansdam {args.experiment}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"quansdam {args.experiment}: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for msg in table.failures:
        print(f"quansdam {args.experiment}: tolerance failure: {msg}", file=sys.stderr)
    return EXIT_TOLERANCE if table.failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
