import numpy as np
import pytest

from instances import frozen_instance, random_duals
from oracles import enumerate_pricing, sequence_lp
from vrtpp.legs import LegTimes
from vrtpp.optkernel import solve_lp, solve_mip
from vrtpp.path import (Column, Duals, _dominates, build_master, label_search, make_column, master_duals,
                        refuel_amount)


def label_value(lab, sc):
    return 0.0 if lab is None else lab.phi - sc.lam * (lab.u - sc.m_dry - lab.payload)


def test_refuel_amount_examples():
    # deficit: 600 / 0.8 - 500 - 164.47 = 85.53
    assert refuel_amount(1000.0, 600.0, 0.8, 500.0, 164.47) == pytest.approx(85.53)
    assert refuel_amount(50.0, 600.0, 0.8, 500.0, 164.47) == 50.0
    assert refuel_amount(0.0, 600.0, 0.8, 500.0, 164.47) == 0.0
    assert refuel_amount(1000.0, 500.0, 1.0, 500.0, 10.0) == pytest.approx(-10.0)  # caller prunes


def test_dominance_rules():
    sets = frozen_instance(0, 2, 2)[0].sets
    free = {s: False for s in sets.S_R0}
    priced = {s: True for s in sets.S_R0}
    assert _dominates((1.0, 600.0, (0.0, 0.0)), 0.5, 700.0, (10.0, 0.0), free, sets)
    assert not _dominates((1.0, 600.0, (20.0, 0.0)), 0.5, 700.0, (10.0, 0.0), free, sets)
    assert not _dominates((1.0, 600.0, (0.0, 0.0)), 0.5, 700.0, (10.0, 0.0), priced, sets)
    assert _dominates((1.0, 600.0, (10.0, 0.0)), 0.5, 700.0, (10.0, 0.0), priced, sets)
    assert not _dominates((0.4, 600.0, (0.0, 0.0)), 0.5, 700.0, (0.0, 0.0), free, sets)
    assert not _dominates((1.0, 800.0, (0.0, 0.0)), 0.5, 700.0, (0.0, 0.0), free, sets)


@pytest.mark.parametrize("k", range(12))
def test_label_search_matches_enumeration(k):
    rng = np.random.default_rng(500 + k)
    n_t, n_r, n_rv = 2 + k % 5, 1 + k % 2, 1 + (k // 2) % 2
    sc, cm = frozen_instance(500 + k, n_r, n_t, n_rv=n_rv, dv_range=(0.02, 0.5))
    if k % 3 == 1:
        sc = sc.with_overrides(q_max=400.0, m_max=2500.0)
    duals = random_duals(rng, sc, priced_capacity=k % 2 == 0)
    omega_m = set(int(v) for v in rng.choice(np.arange(1, 2**n_t), size=min(2, 2**n_t - 1), replace=False))
    ref, _ = enumerate_pricing(cm.mu, sc, duals, omega_m)
    lab = label_search(duals, omega_m, cm.expand(sc.sets)[1], sc)
    assert label_value(lab, sc) == pytest.approx(ref, abs=1e-9)
    if lab is not None:
        seq = lab.sequence()
        assert seq[0] == 0 and seq[-1] == sc.sets.end_depot(0)
        tg = [j for j in seq if sc.sets.is_target(j)]
        assert len(tg) == len(set(tg)) > 0


def test_label_search_unprofitable_duals_give_none():
    sc, cm = frozen_instance(3, 1, 3)
    duals = Duals(np.asarray(sc.profit, float) + 1.0, np.zeros(1), 0.0, np.zeros(1))
    assert label_search(duals, set(), cm.expand(sc.sets)[1], sc) is None


def test_label_search_require_and_targets():
    sc, cm = frozen_instance(4, 1, 4, dv_range=(0.02, 0.3))
    mu_hat = cm.expand(sc.sets)[1]
    lab = label_search(Duals.zeros(4, 1), set(), mu_hat, sc, targets=[sc.sets.S_T.start + 1, sc.sets.S_T.start + 3],
                       require=0b1010)
    tg = sorted(j - sc.sets.S_T.start for j in lab.sequence() if sc.sets.is_target(j))
    assert tg == [1, 3]


def test_label_search_forbidden_sequence():
    sc, cm = frozen_instance(5, 1, 3, dv_range=(0.02, 0.3))
    mu_hat = cm.expand(sc.sets)[1]
    d = Duals.zeros(3, 1)
    first = label_search(d, set(), mu_hat, sc)
    second = label_search(d, set(), mu_hat, sc, forbidden={tuple(first.sequence())})
    assert second.sequence() != first.sequence()
    assert label_value(second, sc) <= label_value(first, sc) + 1e-12


def _frozen_column(sc, cm, seq):
    orig = sc.sets.original
    legs = [cm.leg(orig(a), orig(b)) for a, b in zip(seq[:-1], seq[1:])]
    return make_column(seq, legs, sc)


def test_make_column_matches_sequence_lp():
    sc, cm = frozen_instance(6, 1, 3, dv_range=(0.05, 0.6))
    s = sc.sets
    seq = [0, s.S_T.start, s.S_R.start, s.S_T.start + 2, s.end_depot(0)]
    col = _frozen_column(sc, cm, seq)
    c_ref, refuel_ref = sequence_lp([s.original(j) for j in seq], cm.mu, sc)
    assert col.c == pytest.approx(c_ref, abs=1e-6)
    np.testing.assert_allclose(col.r0, refuel_ref, atol=1e-6)
    assert col.omega == 0b101
    np.testing.assert_array_equal(col.a_t, [1, 0, 1])
    np.testing.assert_array_equal(col.a_r, [1])
    assert col.departure[0] == pytest.approx(sc.m_dry + col.m_p + sc.payload[0] + sc.payload[2])


def _toy_column(omega, a_t, a_r, r0, c):
    return Column(omega, [], np.array(a_t, float), np.array(a_r, float), np.array(r0, float), 0.0, c, [])


def test_build_master_rows():
    sc = frozen_instance(7, 1, 2)[0].with_overrides(n_dv=2, n_rv=1)
    cols = [_toy_column(1, [1, 0], [1], [300.0], 1.5), _toy_column(2, [0, 1], [1], [300.0], 1.2),
            _toy_column(3, [1, 1], [0], [0.0], 2.0)]
    m = build_master(cols, sc)
    names = [c.name for c in m.constraints]
    assert names == ["target_0", "target_1", "visits_0", "vehicles", "capacity_0"]
    assert m.constraints[3].rhs == 2.0 and m.constraints[2].rhs == 1.0
    assert sc.r_max[0] >= 600.0
    out = solve_lp(m)
    # the three pairwise rows admit z = (1/2, 1/2, 1/2): 0.75 + 0.6 + 1.0
    assert out.objective == pytest.approx(2.35)
    np.testing.assert_allclose(out.x, [0.5, 0.5, 0.5], atol=1e-9)
    assert solve_mip(build_master(cols, sc, relaxed=False)).objective == pytest.approx(2.0)
    d = master_duals(out, sc)
    assert d.w1.shape == (2,) and d.w4.shape == (1,)
    for col in cols:
        assert col.reduced_cost(d) <= 1e-9
    with pytest.raises(ValueError):
        build_master([], sc)


def test_build_master_integer_version():
    sc = frozen_instance(7, 1, 2)[0].with_overrides(n_dv=1)
    cols = [_toy_column(1, [1, 0], [0], [0.0], 0.7), _toy_column(2, [0, 1], [0], [0.0], 0.6)]
    m = build_master(cols, sc, relaxed=False)
    assert m.binaries == [0, 1]
    assert m.sense == "max"


def test_column_reduced_cost():
    col = _toy_column(3, [1, 1], [2], [100.0], 5.0)
    d = Duals(np.array([1.0, 0.5]), np.array([0.25]), 0.75, np.array([0.001]))
    assert col.reduced_cost(d) == pytest.approx(5.0 - 1.5 - 0.5 - 0.75 - 0.1)


def test_leg_times_unchanged_by_frozen_column():
    sc, cm = frozen_instance(8, 1, 2)
    s = sc.sets
    seq = [0, s.S_T.start, s.end_depot(0)]
    col = _frozen_column(sc, cm, seq)
    assert all(isinstance(lt, LegTimes) for lt in col.leg_times)
    assert col.leg_times[0].dv == cm.dv[0, s.original(s.S_T.start)]
