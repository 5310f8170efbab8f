"""Reversible Boolean oracle for single-item search and its decompositions.

Register layout is ``main (n qubits) x func x aux`` with flat index
``4 x + 2 f + aux``. The phase sequence V0 U_f V(theta) U_f V0 kicks a phase
onto the marked item and restores both ancillas to |0>|0>.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass

import numpy as np

from .hilbert import HermitianGenerator, UnitaryMatrix, expm_generator, max_abs, spin_operators
from .oracle import LogicalVector, selective_phase

MAX_EXHAUSTIVE_QUBITS = 6
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass(frozen=True)
class SearchOracleSpec:
    n: int
    x0: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.x0 < 2 ** self.n:
            raise ValueError(f"x0 = {self.x0} out of range [0, {2 ** self.n})")

    @property
    def size(self) -> int:
        return 2 ** self.n

    def f(self, x: int) -> int:
        return int(x == self.x0)

    def logical(self) -> LogicalVector:
        return LogicalVector.from_index(self.x0, self.n, 2)

    def __str__(self) -> str:
        return f"n={self.n},x0={self.x0}"


_TOKEN_RE = re.compile(r"^\s*(n|x0)\s*=\s*(\d+)\s*$")


def parse_oracle_spec(text: str) -> SearchOracleSpec:
    """Parse ``n=<int>,x0=<int>``; errors name the offending token."""
    tokens = text.split(",")
    values = {}
    for tok, key in zip(tokens, ("n", "x0")):
        m = _TOKEN_RE.match(tok)
        if not m or m.group(1) != key:
            raise ValueError(f"malformed token {tok.strip()!r} in oracle spec {text!r}; "
                             f"expected '{key}=<int>'")
        values[key] = int(m.group(2))
    if len(tokens) != 2:
        bad = tokens[2].strip() if len(tokens) > 2 else "<end>"
        raise ValueError(f"malformed token {bad!r} in oracle spec {text!r}; expected 'n=<int>,x0=<int>'")
    return SearchOracleSpec(values["n"], values["x0"])


def _index(x: int, f: int, aux: int) -> int:
    return 4 * x + 2 * f + aux


def u_f(spec: SearchOracleSpec) -> UnitaryMatrix:
    """|x, b> -> |x, b xor f(x)> on main x func."""
    dim = 2 * spec.size
    m = np.zeros((dim, dim))
    for x in range(spec.size):
        for b in (0, 1):
            m[2 * x + (b ^ spec.f(x)), 2 * x + b] = 1.0
    return UnitaryMatrix(m)


def v0_literal() -> np.ndarray:
    """exp(-i pi/2) exp(i pi I_x) evaluated numerically."""
    ix = HermitianGenerator(spin_operators(2)["x"])
    return np.exp(-0.5j * np.pi) * expm_generator(ix, -np.pi).matrix


def v0() -> UnitaryMatrix:
    # the literal product equals sigma_x up to rounding; use the exact permutation
    if max_abs(v0_literal() - SIGMA_X) > 1e-15:
        raise RuntimeError("aux flip does not reduce to sigma_x")
    return UnitaryMatrix(SIGMA_X)


def v_theta(theta: float) -> UnitaryMatrix:
    """Diag(1, 1, 1, e^{-i theta}) on func x aux."""
    return UnitaryMatrix(np.diag([1, 1, 1, np.exp(-1j * theta)]))


def bfseq(spec: SearchOracleSpec, theta: float) -> UnitaryMatrix:
    """V0 U_f V(theta) U_f V0 on main x func x aux (rightmost factor acts first)."""
    main = np.eye(spec.size)
    v0_full = UnitaryMatrix(np.kron(np.kron(main, np.eye(2)), v0().matrix))
    uf_full = UnitaryMatrix(np.kron(u_f(spec).matrix, np.eye(2)))
    v_full = UnitaryMatrix(np.kron(main, v_theta(theta).matrix))
    return v0_full @ uf_full @ v_full @ uf_full @ v0_full


def reduce_main(u: UnitaryMatrix, n: int) -> np.ndarray:
    """Main-register block <x', 0, 0| U |x, 0, 0>."""
    idx = [_index(x, 0, 0) for x in range(2 ** n)]
    return u.matrix[np.ix_(idx, idx)]


def ancilla_leakage(u: UnitaryMatrix, n: int) -> float:
    """Largest amplitude outside the ancilla |0>|0> sector for any |x,0,0> input."""
    idx = [_index(x, 0, 0) for x in range(2 ** n)]
    cols = u.matrix[:, idx]
    mask = np.ones(u.dim, dtype=bool)
    mask[idx] = False
    return max_abs(cols[mask])


def usual_oracle(spec: SearchOracleSpec, theta: float) -> UnitaryMatrix:
    d = np.ones(spec.size, dtype=complex)
    d[spec.x0] = np.exp(-1j * theta)
    return UnitaryMatrix(np.diag(d))


def selective_bfseq(spec: SearchOracleSpec, theta: float, y: int,
                    full: UnitaryMatrix | None = None) -> UnitaryMatrix:
    """The black-box sequence acting only on input |y>: identity on every other basis state."""
    full = bfseq(spec, theta) if full is None else full
    d = np.ones(spec.size, dtype=complex)
    d[y] = full.matrix[_index(y, 0, 0), _index(y, 0, 0)]
    return UnitaryMatrix(np.diag(d))


def selective_u_f(spec: SearchOracleSpec, x1: int, full: UnitaryMatrix | None = None) -> UnitaryMatrix:
    """U_f restricted to main input |x1>, identity elsewhere (on main x func)."""
    full = u_f(spec) if full is None else full
    m = np.eye(2 * spec.size, dtype=complex)
    sl = slice(2 * x1, 2 * x1 + 2)
    m[sl, sl] = full.matrix[sl, sl]
    return UnitaryMatrix(m)


def _product(factors, dim: int) -> np.ndarray:
    out = np.eye(dim, dtype=complex)
    for f in factors:
        out = f.matrix @ out
    return out


@dataclass(frozen=True)
class EquivalenceReport:
    n: int
    x0: int
    theta: float
    selective_vs_reduced: float
    reduced_vs_usual: float
    usual_vs_selective_phase: float
    selective_vs_selective_phase: float
    product_vs_reduced: float
    product_reversed_vs_reduced: float
    uf_product_vs_uf: float
    ancilla_leakage: float
    nontrivial_selective_factors: int

    @property
    def max_deviation(self) -> float:
        return max(self.selective_vs_reduced, self.reduced_vs_usual, self.usual_vs_selective_phase,
                   self.selective_vs_selective_phase, self.product_vs_reduced,
                   self.product_reversed_vs_reduced, self.uf_product_vs_uf, self.ancilla_leakage)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_deviation"] = self.max_deviation
        return d


def parallel_decomposition_check(spec: SearchOracleSpec, theta: float) -> EquivalenceReport:
    """Compare the selective, reduced, usual and diagonal-phase oracles and both decompositions."""
    if spec.n > MAX_EXHAUSTIVE_QUBITS:
        raise ValueError(f"exhaustive products limited to n <= {MAX_EXHAUSTIVE_QUBITS}, got {spec.n}")
    full = bfseq(spec, theta)
    reduced = reduce_main(full, spec.n)
    usual = usual_oracle(spec, theta).matrix
    c_s = selective_phase(spec.logical(), theta).matrix
    selective = [selective_bfseq(spec, theta, y, full) for y in range(spec.size)]
    at_x0 = selective[spec.x0].matrix
    nontrivial = sum(1 for s in selective if max_abs(s.matrix - np.eye(spec.size)) > 0)
    prod = _product(selective, spec.size)
    prod_rev = _product(reversed(selective), spec.size)
    uf = u_f(spec)
    uf_prod = _product([selective_u_f(spec, x, uf) for x in range(spec.size)], 2 * spec.size)
    return EquivalenceReport(
        n=spec.n, x0=spec.x0, theta=float(theta),
        selective_vs_reduced=max_abs(at_x0 - reduced),
        reduced_vs_usual=max_abs(reduced - usual),
        usual_vs_selective_phase=max_abs(usual - c_s),
        selective_vs_selective_phase=max_abs(at_x0 - c_s),
        product_vs_reduced=max_abs(prod - reduced),
        product_reversed_vs_reduced=max_abs(prod_rev - reduced),
        uf_product_vs_uf=max_abs(uf_prod - uf.matrix),
        ancilla_leakage=ancilla_leakage(full, spec.n),
        nontrivial_selective_factors=nontrivial,
    )


def report_json(reports) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True)
