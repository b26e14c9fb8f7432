import pytest

from cbfsim import phy
from cbfsim import spatial_reuse as sr
from cbfsim.spatial_reuse import CoordinationSet, CsiCache, PsrField

TABLE = phy.default_mcs_table()
NOISE = -87.969


def test_psr_field_single_sta():
    f = sr.compute_psr_field(24.0, [(-60.0, TABLE[7])], phy.array_gain_db(8, 2, 4), NOISE, 3.0)
    assert f.acceptable_interference == pytest.approx(-75.59, abs=0.01)
    assert f.donor_tx_power == 24.0


def test_psr_field_min_rule_and_floor():
    a = sr.compute_psr_field(24.0, [(-60.0, TABLE[7])], 0.0, NOISE)
    b = sr.compute_psr_field(24.0, [(-50.0, TABLE[7])], 0.0, NOISE)
    both = sr.compute_psr_field(24.0, [(-60.0, TABLE[7]), (-50.0, TABLE[7])], 0.0, NOISE)
    assert both.acceptable_interference == min(a.acceptable_interference, b.acceptable_interference)
    weak = sr.compute_psr_field(24.0, [(-95.0, TABLE[11])], 0.0, NOISE)
    assert weak.acceptable_interference == pytest.approx(NOISE - 10.0)


def test_psr_field_needs_schedule():
    with pytest.raises(ValueError):
        sr.compute_psr_field(24.0, [], 0.0, NOISE)


def test_evaluate_opportunity_examples():
    f = PsrField(24.0, -68.0)
    assert sr.evaluate_opportunity(1, -60.0, f, 15.0) == 15.0
    assert sr.evaluate_opportunity(1, -30.0, f, 15.0) is None
    relaxed = PsrField(24.0, -68.0, {1: -58.0})
    low = PsrField(24.0, -80.0)
    boosted = PsrField(24.0, -80.0, {1: -70.0})
    assert sr.evaluate_opportunity(1, -55.0, boosted, 30.0) - sr.evaluate_opportunity(1, -55.0, low, 30.0) == \
        pytest.approx(10.0)
    assert sr.evaluate_opportunity(2, -60.0, relaxed, 15.0) == 15.0


def test_evaluate_opportunity_monotone_in_rpl():
    f = PsrField(24.0, -75.0)
    assert sr.evaluate_opportunity(0, -70.0, f, 99.0) - sr.evaluate_opportunity(0, -67.0, f, 99.0) == \
        pytest.approx(3.0)


def _rx(table):
    return lambda sta, ap: table[(sta, ap)]


def test_coordination_set_membership():
    powers = {(10, 1): -70.0, (11, 1): -90.0, (20, 0): -60.0, (10, 0): -40.0, (11, 0): -45.0, (20, 1): -50.0}
    cs = sr.establish_coordination_set(0, [0, 1], {10: 0, 11: 0, 20: 1}, _rx(powers), -75.0)
    assert cs.member_sta_ids == frozenset({10, 20})
    assert cs.shared_ap_ids == (1,)
    assert 0 not in cs.shared_ap_ids


def test_coordination_single_ap():
    assert sr.establish_coordination_set(0, [0], {5: 0}, lambda s, a: 0.0) is None
    assert sr.dynamic_coordination(None, [(5, -40.0)]) == ()


def test_coordination_refresh_schedule():
    cs = CoordinationSet(0, (1,), frozenset(), established_at=100, refresh_period=100)
    assert not cs.due(150)
    assert cs.due(200)


def test_coordination_donor_not_shared():
    with pytest.raises(ValueError):
        CoordinationSet(0, (0, 1), frozenset())


def test_dynamic_coordination_picks_strongest():
    cs = CoordinationSet(0, (1,), frozenset(range(20, 28)))
    cands = [(20 + i, -80.0 + 3 * i) for i in range(8)]
    assert sr.dynamic_coordination(cs, cands, 4) == (27, 26, 25, 24)
    assert cs.protected_sta_ids == (27, 26, 25, 24)
    assert sr.dynamic_coordination(cs, cands[:2], 4) == (21, 20)
    assert sr.dynamic_coordination(cs, [], 4) == ()


def test_dynamic_coordination_ignores_non_members():
    cs = CoordinationSet(0, (1,), frozenset({20}))
    assert sr.dynamic_coordination(cs, [(20, -70.0), (21, -40.0)]) == (20,)


def test_sounding_cache():
    cache = CsiCache(validity=0.020, overhead=300e-6)
    assert cache.sequential_sounding(0, [5, 6], 0.0) == pytest.approx(300e-6)
    assert cache.sequential_sounding(0, [5, 6], 0.010) == 0.0
    # one new target makes the batch stale; everyone is refreshed at the same time
    assert cache.sequential_sounding(0, [5, 6, 7], 0.015) == pytest.approx(300e-6)
    assert cache.records[(0, 5)].acquired_at == 0.015
    assert cache.sequential_sounding(0, [5, 6, 7], 0.030) == 0.0
    assert cache.sequential_sounding(0, [5], 0.036) == pytest.approx(300e-6)


def test_csi_record_staleness():
    rec = sr.CsiRecord(0, 5, -60.0, 0.0, 0.020)
    assert rec.stale(0.025)
    assert not rec.stale(0.020)


def test_sounding_charged_once_per_txop():
    cache = CsiCache(0.020, 300e-6)
    assert sr.sequential_sounding(cache, [(0, [5]), (1, [5, 6])], 0.0) == pytest.approx(300e-6)
    assert sr.sequential_sounding(cache, [(0, [5]), (1, [5, 6])], 0.001) == 0.0


def test_configure_cbf_budget():
    base = PsrField(24.0, -75.0)
    out = sr.configure_cbf_txop(8, 2, [30, 31, 32, 33], base, 10.0, donor_scheduled=[40, 41])
    assert out.donor_cfg.nulls == 4 and out.donor_cfg.served_streams == 2
    assert phy.zf_feasible(8, 2, 4)
    for s in (30, 31, 32, 33):
        assert out.relaxed.acceptable_for(s) == pytest.approx(-65.0)
    assert out.relaxed.acceptable_for(99) == -75.0
    assert out.shared_cfg.nulled_device_ids == frozenset({40, 41})
    assert out.shared_cfg.nulls == 2 and out.shared_cfg.served_streams == 4


def test_configure_cbf_trims_to_budget():
    base = PsrField(24.0, -75.0)
    out = sr.configure_cbf_txop(8, 6, [30, 31, 32, 33], base, 10.0)
    assert out.protected == (30, 31)
    assert out.donor_cfg.nulls == 2


def test_configure_cbf_empty_is_psr():
    base = PsrField(24.0, -75.0)
    out = sr.configure_cbf_txop(8, 3, [], base, 10.0, donor_scheduled=[1, 2])
    assert out.relaxed == base
    assert out.shared_cfg is None
    assert out.donor_cfg == phy.ReceiveConfig(8, 3, 0)


def test_donor_protection_identity():
    # protected STA at its relaxed allowed power, after suppression, lands on the base acceptable level
    base = PsrField(24.0, -72.0)
    out = sr.configure_cbf_txop(8, 2, [7], base, 10.0)
    rpl = -50.0
    allowed = sr.evaluate_opportunity(7, rpl, out.relaxed, 99.0)
    # reciprocal channel: path gain donor<->sta is rpl - donor_tx
    at_donor = allowed + (rpl - base.donor_tx_power) - 10.0
    assert at_donor <= base.acceptable_interference + 1e-6
