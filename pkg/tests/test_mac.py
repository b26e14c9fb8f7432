import numpy as np
import pytest

from cbfsim import mac, phy
from cbfsim.mac import (
    Candidate,
    ContentionState,
    MacTiming,
    MediumState,
    Transmission,
    ack_and_retry,
    build_trigger,
    cca_busy,
    contend,
    us,
)
from cbfsim.traffic import AR, BROADBAND, Packet

TABLE = phy.default_mcs_table()
T = MacTiming()
NOISE = -87.969


def _tx(power_at_node_dbm, node=0, n=2, start=0, end=1000):
    rx = [0.0] * n
    rx[node] = 10 ** (power_at_node_dbm / 10)
    return Transmission(1, None, 0, 0.0, start, end, rx, 1)


def test_cca_examples():
    m = MediumState()
    assert not cca_busy(0, m)
    m.add(1, _tx(-70.0))
    assert cca_busy(0, m)
    m2 = MediumState()
    m2.add(1, _tx(-85.0))
    m2.add(2, _tx(-85.0))
    assert cca_busy(0, m2)
    m3 = MediumState()
    m3.add(1, _tx(-85.0))
    assert not cca_busy(0, m3)


def test_transmission_must_have_positive_length():
    with pytest.raises(ValueError):
        Transmission(0, 1, 0, 0.0, 5, 5, [0.0], 1)


def test_contend_idle_zero_backoff():
    assert contend(ContentionState(backoff=0), [], 0, T) == T.aifs


def test_cw_doubling():
    s = ContentionState()
    s.on_failure()
    s.on_failure()
    assert s.cw == 63
    for _ in range(10):
        s.on_failure()
    assert s.cw == 1023
    s.on_success()
    assert s.cw == 15


def oracle_contend(backoff, busy, now, timing):
    """Step through time 1 us at a time and count idle slots."""
    step = 1000
    busy_at = lambda t: any(b0 <= t < b1 for b0, b1 in busy)
    t = now
    rem = backoff
    idle_start = None if busy_at(t) else t
    while True:
        if idle_start is not None:
            if t - idle_start - timing.aifs == rem * timing.slot:
                return t
        if busy_at(t):
            if idle_start is not None:
                waited = t - idle_start - timing.aifs
                if waited > 0:
                    rem -= min(waited // timing.slot, rem)
                idle_start = None
        elif idle_start is None:
            idle_start = t
        t += step


def test_contend_matches_stepping_oracle():
    rng = np.random.default_rng(5)
    for _ in range(300):
        busy, t = [], int(rng.integers(0, 50)) * 1000
        for _ in range(int(rng.integers(0, 5))):
            t += int(rng.integers(0, 120)) * 1000
            d = int(rng.integers(1, 200)) * 1000
            busy.append((t, t + d))
            t += d
        state = ContentionState(backoff=int(rng.integers(0, 32)))
        now = int(rng.integers(0, 100)) * 1000
        assert contend(state, busy, now, T) == oracle_contend(state.backoff, busy, now, T)


def test_contend_freezes_while_busy():
    # 5 slots needed; medium busy after 2 full slots
    s = ContentionState(backoff=5)
    busy_start = T.aifs + 2 * T.slot + 3000
    grant = contend(s, [(busy_start, busy_start + 100_000)], 0, T)
    assert grant == busy_start + 100_000 + T.aifs + 3 * T.slot


def _cands():
    return [
        Candidate(10, BROADBAND, 400_000, -55.0),
        Candidate(11, BROADBAND, 300_000, -58.0),
        Candidate(12, BROADBAND, 200_000, -60.0),
        Candidate(20, AR, 32, -57.0),
    ]


def test_build_trigger_same_class():
    trig = build_trigger(0, _cands(), BROADBAND, 8, 0, NOISE, TABLE, T)
    assert trig.cls == BROADBAND
    assert trig.sta_ids == (10, 11, 12)
    assert trig.txop_duration <= T.txop
    for e in trig.schedule:
        assert e.duration <= trig.data_duration


def test_build_trigger_round_robin_skips_empty_class():
    only_bb = [c for c in _cands() if c.cls == BROADBAND]
    assert build_trigger(0, only_bb, AR, 8, 0, NOISE, TABLE, T).cls == BROADBAND
    assert build_trigger(0, _cands(), AR, 8, 0, NOISE, TABLE, T).sta_ids == (20,)


def test_build_trigger_stream_budget():
    cands = [Candidate(i, BROADBAND, 1000 + i, -55.0) for i in range(9)]
    trig = build_trigger(0, cands, BROADBAND, 8, 4, NOISE, TABLE, T)
    assert len(trig.schedule) == 4
    # longest queue first
    assert trig.sta_ids == (8, 7, 6, 5)


def test_build_trigger_trims_short_txop():
    trig = build_trigger(0, [Candidate(5, AR, 32, -60.0)], AR, 8, 0, NOISE, TABLE, T)
    (e,) = trig.schedule
    assert e.duration == int(round(phy.tx_duration(32, e.mcs) * 1e9))
    assert trig.txop_duration == T.trigger + 2 * T.sifs + e.duration + T.ack
    assert trig.txop_duration < T.txop


def test_build_trigger_nothing_queued():
    assert build_trigger(0, [], BROADBAND, 8, 0, NOISE, TABLE, T) is None


def test_big_file_fragments():
    trig = build_trigger(0, [Candidate(5, BROADBAND, 500_000, -50.0)], BROADBAND, 8, 0, NOISE, TABLE, T)
    assert trig.schedule[0].nbytes < 500_000
    assert trig.txop_duration <= T.txop


def test_ack_success_sets_latency():
    p = Packet(1, 5, AR, 32, 1.000)
    st = ContentionState(cw=63)
    assert ack_and_retry(p, True, st, 1.003) == mac.DELIVERED
    assert p.latency == pytest.approx(0.003)
    assert st.cw == 15


def test_ack_partial_delivery():
    p = Packet(1, 5, BROADBAND, 1000, 0.0)
    assert ack_and_retry(p, True, None, 0.1, nbytes=400) == mac.PARTIAL
    assert p.remaining == 600 and p.delivered_time is None


def test_retry_limit_drop():
    p = Packet(1, 5, AR, 32, 0.0)
    outcomes = [ack_and_retry(p, False, None, 0.0, retry_limit=10) for _ in range(11)]
    assert outcomes[:10] == [mac.RETRY] * 10
    assert outcomes[10] == mac.DROPPED


def test_failure_then_success_latency_spans_both_rounds():
    p = Packet(1, 5, AR, 32, 2.0)
    st = ContentionState()
    ack_and_retry(p, False, st, 2.004)
    assert st.cw == 31
    ack_and_retry(p, True, st, 2.011)
    assert p.latency == pytest.approx(0.011)
    assert p.retries == 1


def test_us_helper():
    assert us(9) == 9000
    assert us(0.5) == 500
