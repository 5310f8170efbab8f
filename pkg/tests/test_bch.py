from __future__ import annotations

import numpy as np
import pytest

from quansdam.bch import (
    CommutatorScenario,
    kicked_quansdam_run,
    bch_group_commutator,
    commutator_target,
    fit_exponent,
    momentum_centroid,
    scaling_csv,
    synthesize_ic_momentum_propagator,
    trotter_repeat,
    trotter_scaling,
    trotter_useq_factors,
)
from quansdam.continuum import GridWavefunction, box_grid, momentum_eigenfunction, useq_assemble, useq_defect
from quansdam.engine import GaussianPacketParams, gaussian_overlap
from quansdam.hilbert import HermitianGenerator, commutator, make_rng, random_hermitian


def _random_pair(seed, dim=4):
    rng = make_rng(seed)
    return random_hermitian(dim, rng, norm=1.0), random_hermitian(dim, rng, norm=1.0)


def test_commuting_pair_is_exact():
    a = HermitianGenerator(np.diag([1.0, -0.5, 2.0]))
    b = HermitianGenerator(np.diag([0.3, 0.1, -1.0]))
    for tau in (0.0, 0.3, 1.0):
        assert bch_group_commutator(a, b, tau).defect <= 1e-12
    assert trotter_repeat(a, b, 0.7, 5).defect <= 1e-12


def test_zero_tau_identity():
    a, b = _random_pair(1)
    r = bch_group_commutator(a, b, 0.0)
    assert np.max(np.abs(r.lhs.matrix - np.eye(4))) <= 1e-14
    assert np.max(np.abs(r.target.matrix - np.eye(4))) <= 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_third_order_defect(seed):
    a, b = _random_pair(seed)
    taus = [0.2, 0.1, 0.05]
    d = [bch_group_commutator(a, b, t).defect for t in taus]
    assert all(7 <= d[i] / d[i + 1] <= 9 for i in range(2))
    assert abs(fit_exponent(taus, d) - 3) <= 0.3


def test_max_entry_norm_gives_same_order():
    a, b = _random_pair(7)
    taus = [0.2, 0.1, 0.05]
    d = [bch_group_commutator(a, b, t, norm="max").defect for t in taus]
    assert abs(fit_exponent(taus, d) - 3) <= 0.3
    with pytest.raises(ValueError):
        bch_group_commutator(a, b, 0.1, norm="frobenius")


def test_target_unitary():
    a, b = _random_pair(8, 6)
    u = commutator_target(a, b, 0.9).matrix
    assert np.max(np.abs(u.conj().T @ u - np.eye(6))) <= 1e-12


def test_trotter_n_one_is_single_commutator():
    a, b = _random_pair(9)
    assert np.array_equal(trotter_repeat(a, b, 0.3, 1).lhs.matrix, bch_group_commutator(a, b, 0.3).lhs.matrix)


def test_trotter_rejects_bad_n():
    a, b = _random_pair(9)
    with pytest.raises(ValueError):
        trotter_repeat(a, b, 0.3, 0)


def test_trotter_random_pair_scaling():
    a, b = _random_pair(10)
    ns = [1, 2, 4, 8, 16]
    d = [trotter_repeat(a, b, 0.3, n).defect for n in ns]
    assert abs(fit_exponent(ns, d) + 1) <= 0.2


@pytest.mark.parametrize("case", ["free_atom", "harmonic_trap"])
def test_analytic_commutator(case):
    sc = CommutatorScenario(case=case, coupling=1.3, theta_m=0.2, tau=0.3, levels=16, grid_points=32,
                            box_length=8.0)
    for a in (1, -1):
        num = commutator(sc.a_generator(a).matrix, sc.b_generator().matrix)
        assert np.max(np.abs(num - sc.analytic_commutator(a))) <= 1e-8


def test_scenario_validation():
    with pytest.raises(ValueError):
        CommutatorScenario(case="box")
    with pytest.raises(ValueError):
        CommutatorScenario(tau=0.0)


def test_kick_constants():
    sc = CommutatorScenario(coupling=2.0, theta_m=0.1, tau=0.5)
    assert sc.p0 == pytest.approx(0.05, abs=1e-15)
    assert sc.sector_shift == sc.p0


def test_harmonic_trotter_exponent():
    ns, d, slope = trotter_scaling(CommutatorScenario())
    assert abs(slope + 1) <= 0.2
    assert all(b <= a for a, b in zip(d, d[1:]))
    assert 1 / 16 <= d[3] / d[0] <= 1 / 4


def test_zero_angle_synthesis_is_identity():
    res = synthesize_ic_momentum_propagator(CommutatorScenario(theta_m=0.0, levels=8), 2)
    assert res.worst <= 1e-12
    assert np.max(np.abs(res.targets[1].matrix - np.eye(16))) <= 1e-15


def test_trotter_factors_form_a_useq():
    sc = CommutatorScenario(levels=12)
    n = 3
    res = synthesize_ic_momentum_propagator(sc, n)
    seqs = {}
    for a in (1, -1):
        ic, qm = trotter_useq_factors(sc, n, a)
        assert len(ic) == 2 * n * n and len(qm) == 2 * n * n + 1
        seqs[a] = useq_assemble(ic, qm)
        assert np.max(np.abs(seqs[a].matrix - res.products[a].matrix)) <= 1e-10
    rep = useq_defect(seqs, sc.target_spec())
    assert rep.worst <= 2 * res.worst


def test_useq_defect_decreases_with_n():
    sc = CommutatorScenario(levels=16)
    worst = []
    for n in (1, 2, 4):
        seqs = {a: useq_assemble(*trotter_useq_factors(sc, n, a)) for a in (1, -1)}
        worst.append(useq_defect(seqs, sc.target_spec()).worst)
    assert worst[0] > worst[1] > worst[2]


FREE = dict(case="free_atom", coupling=5.0, theta_m=0.1, tau=0.1, box_length=20.0, grid_points=128)


def _gaussian(sc, width=1.0):
    x = box_grid(sc.box_length, sc.grid_points)
    psi = (2 * np.pi * width ** 2) ** -0.25 * np.exp(-x ** 2 / (4 * width ** 2))
    return GridWavefunction(sc.box_length, psi, np.array([1, 0]))


def test_free_atom_momentum_shift():
    sc = CommutatorScenario(**FREE)
    psi = _gaussian(sc)
    exact = kicked_quansdam_run(sc, 16, psi, exact=True)
    synth = kicked_quansdam_run(sc, 16, psi)
    res = synthesize_ic_momentum_propagator(sc, 16)
    for a in (1, -1):
        want = -a * 0.5 * sc.coupling * sc.tau * sc.theta_m
        assert abs(momentum_centroid(exact.final(a), sc) / want - 1) <= 1e-6
        assert abs(momentum_centroid(synth.final(a), sc) / want - 1) <= 0.02
    assert abs(synth.overlaps[-1] - exact.overlaps[-1]) <= 2 * res.worst


def test_gaussian_kick_matches_closed_form():
    sc = CommutatorScenario(**FREE)
    width = 1.2
    tr = kicked_quansdam_run(sc, 1, _gaussian(sc, width), exact=True)
    p1 = GaussianPacketParams(0.0, -sc.p0, width ** 2)
    p2 = GaussianPacketParams(0.0, sc.p0, width ** 2)
    assert abs(abs(tr.overlaps[-1]) - gaussian_overlap(p1, p2)) <= 1e-10


def test_zero_kick_overlap_one():
    sc = CommutatorScenario(**{**FREE, "theta_m": 0.0})
    tr = kicked_quansdam_run(sc, 2, _gaussian(sc))
    assert abs(tr.overlaps[-1] - 1) <= 1e-12


def test_on_lattice_kick_orthogonalizes_plane_wave():
    L = 20.0
    # choose K so the branches sit one box quantum apart: 2 p0 = 2 pi / L
    sc = CommutatorScenario(**{**FREE, "coupling": 2 * np.pi / (L * 0.1 * 0.1)})
    assert abs(2 * sc.p0 - 2 * np.pi / L) <= 1e-14
    tr = kicked_quansdam_run(sc, 1, momentum_eigenfunction(L, 2, 128), exact=True)
    assert abs(tr.overlaps[-1]) <= 1e-10


def test_internal_state_must_be_zero():
    sc = CommutatorScenario(**FREE)
    bad = GridWavefunction(sc.box_length, _gaussian(sc).amplitudes, np.array([0, 1]))
    with pytest.raises(ValueError):
        kicked_quansdam_run(sc, 1, bad)


def test_harmonic_run_from_ground_state():
    sc = CommutatorScenario(levels=32)
    ground = np.zeros(32)
    ground[0] = 1
    exact = kicked_quansdam_run(sc, 1, ground, exact=True)
    synth = kicked_quansdam_run(sc, 8, ground)
    # a kick of +-p0 on the oscillator ground state: |overlap| = exp(-(2 p0)^2 / 4)
    assert abs(abs(exact.overlaps[-1]) - np.exp(-sc.p0 ** 2)) <= 1e-12
    res = synthesize_ic_momentum_propagator(sc, 8)
    assert abs(synth.overlaps[-1] - exact.overlaps[-1]) <= 2 * res.worst


def test_scaling_csv():
    text = scaling_csv([(0.1, 1, 0.5, -1.0), (0.1, 2, 0.25, -1.0)])
    assert text.split("\n")[0] == "tau,n,defect,fitted_slope"
    assert text.split("\n")[2] == "0.10000000000000001,2,0.25,-1"
