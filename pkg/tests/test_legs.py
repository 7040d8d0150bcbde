import math

import numpy as np
import pytest

from oracles import hohmann_dv
from vrtpp.astro import OrbitalElements
from vrtpp.legs import (EPS_TOF, SENTINEL_DV, CostMatrix, InfeasibleWindow, LegTimes, dv_grid, hohmann_time, leg_dv,
                        leg_window, optimize_leg, refine_sequence, write_grid_csv)
from vrtpp.scenario import build_index_sets
from vrtpp.units import DEFAULT_UNITS


def test_hohmann_time():
    assert hohmann_time(1.0, 1.0) == pytest.approx(math.pi)
    assert hohmann_time(1.0, 3.0) == pytest.approx(math.pi * 8**0.5)


def test_leg_window():
    assert leg_window(10.0, 2.0, 3.0, 100.0) == (12.0, 97.0)
    with pytest.raises(InfeasibleWindow):
        leg_window(95.0, 2.0, 3.0, 100.0)
    with pytest.raises(InfeasibleWindow):
        leg_window(0.0, 0.0, 100.0, 100.0)


def test_optimize_leg_never_worse_than_guess_and_in_window(case):
    rng = np.random.default_rng(4)
    nodes = case.nodes
    for _ in range(15):
        a, b = rng.choice(len(nodes), 2, replace=False)
        t_arr = float(rng.uniform(0, 40))
        t_svc_i, t_svc_j = float(case.t_svc[a]), float(case.t_svc[b])
        guess = (float(rng.uniform(0, 80)), float(rng.uniform(0.5, 10)))
        leg = optimize_leg(nodes[a], nodes[b], t_arr, t_svc_i, t_svc_j, case.t_max, guess)
        lo, hi = leg_window(t_arr, t_svc_i, t_svc_j, case.t_max)
        assert lo - 1e-9 <= leg.t_dep
        assert leg.t_tr >= EPS_TOF - 1e-12
        assert leg.t_dep + leg.t_tr <= hi + 1e-9
        g_dep = min(max(guess[0], lo), hi - EPS_TOF)
        g_tr = min(max(guess[1], EPS_TOF), hi - g_dep)
        assert leg.dv <= leg_dv(nodes[a], nodes[b], g_dep, g_tr) + 1e-12
        assert leg.dv == pytest.approx(leg_dv(nodes[a], nodes[b], leg.t_dep, leg.t_tr))
        assert leg.mu == pytest.approx(math.exp(-leg.dv * 1000 / (9.81 * 320)))


def test_optimize_leg_coplanar_circular_reaches_hohmann():
    # free phasing over a long window: the optimum cannot beat the Hohmann cost and should get close
    dep = OrbitalElements(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    arr = OrbitalElements(1.3, 0.0, 0.0, 0.0, 0.0, 1.0)
    t_h = hohmann_time(1.0, 1.3)
    n1, n2 = 1.0, 1.3**-1.5
    # departure when the target leads by pi - n2 t_h
    t0 = ((1.0 - (math.pi - n2 * t_h)) % (2 * math.pi)) / (n1 - n2)
    leg = optimize_leg(dep, arr, 0.0, 0.0, 0.0, 200.0, (t0 + 0.05, t_h * 0.98))
    d1, d2 = hohmann_dv(1.0, 1.3)
    hoh = DEFAULT_UNITS.speed_to_kms(d1 + d2)
    assert leg.dv >= hoh - 1e-6
    assert leg.dv == pytest.approx(hoh, abs=2e-3)


def test_cost_matrix_expand_sentinels():
    sets = build_index_sets(2, 2, 1, 2)  # depots 0,1 | 2,3 ; station copies 4,5 ; targets 6,7
    cm = CostMatrix.empty(4)
    cm.dv[:] = 1.0
    dv, mu = cm.expand(sets)
    assert dv.shape == (8, 8)
    assert np.all(dv[:, [0, 1]] == SENTINEL_DV)  # nothing enters a start depot
    assert np.all(dv[[2, 3], :] == SENTINEL_DV)  # nothing leaves an end depot
    assert dv[0, 2] == SENTINEL_DV  # no empty route
    assert dv[4, 5] == SENTINEL_DV and dv[5, 4] == SENTINEL_DV
    assert dv[0, 6] == 1.0 and dv[6, 4] == 1.0 and dv[7, 3] == 1.0 and dv[4, 7] == 1.0
    np.testing.assert_allclose(mu, np.exp(-dv * 1000 / (9.81 * 320)))


def test_cost_matrix_set_and_read_leg():
    cm = CostMatrix.empty(3)
    cm.set_leg(0, 2, LegTimes(1.0, 2.0, 0.5, 0.85))
    assert cm.status[0, 2] == 1
    back = cm.leg(0, 2)
    assert (back.t_dep, back.t_tr, back.dv) == (1.0, 2.0, 0.5)
    assert back.mu == pytest.approx(math.exp(-500 / (9.81 * 320)))
    cm.set_leg(1, 2, LegTimes(0.0, 1.0, SENTINEL_DV, 0.0))
    assert cm.status[1, 2] == 0
    cp = cm.copy()
    cp.dv[0, 2] = 9.0
    assert cm.dv[0, 2] == 0.5


def test_init_matrix_shape_and_diagonal(case, case_matrix):
    n = case.n_orig
    assert case_matrix.dv.shape == (n, n)
    assert np.all(np.diag(case_matrix.dv) == SENTINEL_DV)
    off = case_matrix.dv[~np.eye(n, dtype=bool)]
    assert np.all(off < SENTINEL_DV)
    assert np.all(off > 0)
    assert np.all(case_matrix.t_dep[~np.eye(n, dtype=bool)] >= 0)


def test_refine_sequence_chains_times(case, case_matrix):
    s = case.sets
    seq = [0, s.S_T.start + 4, s.S_T.start + 2, 3]  # depot -> T5 -> T3 -> depot
    new, legs = refine_sequence(seq, case, case_matrix)
    assert [(lg.src, lg.dst) for lg in legs] == list(zip(seq[:-1], seq[1:]))
    t = 0.0
    for lg in legs:
        assert lg.times.t_dep >= t + case.service_time(lg.src) - 1e-9
        t = lg.times.t_arr_next
    assert t <= case.t_max + 1e-9
    a, b = s.original(seq[1]), s.original(seq[2])
    assert new.dv[a, b] == legs[1].times.dv


def test_refine_sequence_too_long_raises(case, case_matrix):
    s = case.sets
    seq = [0] + list(s.S_T) + list(s.S_R) + [3]  # 11 stops x 12.6 TU service > t_max
    with pytest.raises(InfeasibleWindow):
        refine_sequence(seq, case, case_matrix)


def test_dv_grid_and_csv(tmp_path, case):
    deps, tofs, grid = dv_grid(case.nodes[0], case.nodes[3], (0.0, 5.0), (1.0, 4.0), 4, 3)
    assert grid.shape == (4, 3)
    np.testing.assert_allclose(deps, [0, 5 / 3, 10 / 3, 5])
    assert grid[2, 1] == pytest.approx(leg_dv(case.nodes[0], case.nodes[3], deps[2], tofs[1]))
    path = tmp_path / "g.csv"
    write_grid_csv(path, deps, tofs, grid)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_dep_tu,t_tr_tu,dv_kms"
    assert len(lines) == 13
    with pytest.raises(ValueError):
        dv_grid(case.nodes[0], case.nodes[3], (0, 1), (0.0, 1.0), 2, 2)


def test_leg_dv_degenerate_gives_sentinel():
    # arrival point exactly opposite the departure point: transfer plane undefined
    a = OrbitalElements(1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    tof = 3.0
    b = OrbitalElements(1.2, 0.0, 0.0, 0.0, 0.0, math.pi - 1.2**-1.5 * tof)
    assert leg_dv(a, b, 0.0, tof) == SENTINEL_DV
