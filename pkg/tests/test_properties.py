"""Randomized property suites. Every suite checks at least 1000 cases."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfsim import default_config, phy, run
from cbfsim import spatial_reuse as sr
from cbfsim.engine import MODES, Simulation
from cbfsim.spatial_reuse import PsrField
from cbfsim.traffic import AR, ftp3_arrivals, ftp3_rate
from cbfsim.units import POWER_TOL_DB, dbm_to_mw, mw_to_dbm, sum_powers

N_CASES = 1000
TABLE = phy.default_mcs_table()
NOISE = -87.969
SETTINGS = settings(max_examples=N_CASES, deadline=None, derandomize=True)

dbm = st.floats(-150.0, 40.0, allow_nan=False)
finite_db = st.floats(-30.0, 30.0, allow_nan=False)


@SETTINGS
@given(dbm)
def test_power_round_trip(p):
    assert abs(mw_to_dbm(dbm_to_mw(p)) - p) <= POWER_TOL_DB


@SETTINGS
@given(dbm, st.floats(1e-6, 50.0))
def test_power_monotone(p, d):
    assert dbm_to_mw(p + d) > dbm_to_mw(p)
    assert mw_to_dbm(dbm_to_mw(p + d)) > mw_to_dbm(dbm_to_mw(p))


@SETTINGS
@given(st.lists(dbm, min_size=1, max_size=12))
def test_sum_powers_dominates_max(ps):
    total = sum_powers(ps)
    assert total >= max(ps) - POWER_TOL_DB
    assert total <= max(ps) + 10 * math.log10(len(ps)) + POWER_TOL_DB


cbf_case = st.tuples(
    st.floats(-95.0, -40.0),          # base acceptable interference
    st.floats(0.0, 20.0),             # suppression
    st.integers(1, 6),                # donor streams
    st.lists(st.integers(10, 40), min_size=1, max_size=8, unique=True),
    st.floats(-90.0, -20.0),          # rpl of the device
)


@SETTINGS
@given(cbf_case)
def test_donor_protection(case):
    acceptable, supp, k, protected, rpl = case
    base = PsrField(24.0, acceptable)
    out = sr.configure_cbf_txop(8, k, protected, base, supp)
    for s in out.protected:
        allowed = sr.evaluate_opportunity(s, rpl, out.relaxed, 1e9, -1e9)
        at_donor = allowed + (rpl - base.donor_tx_power) - supp
        assert at_donor <= base.acceptable_interference + 1e-6


@SETTINGS
@given(cbf_case, st.integers(0, 8))
def test_configure_cbf_is_feasible(case, n_sched):
    acceptable, supp, k, protected, _ = case
    out = sr.configure_cbf_txop(8, k, protected, PsrField(24.0, acceptable), supp, list(range(100, 100 + n_sched)))
    d = out.donor_cfg
    assert phy.zf_feasible(d.antennas, d.served_streams, d.nulls)
    assert len(out.protected) <= phy.MAX_NULLS
    if out.shared_cfg is not None:
        c = out.shared_cfg
        assert phy.zf_feasible(c.antennas, c.served_streams, c.nulls)


@SETTINGS
@given(st.integers(0, 40), st.floats(-90.0, -20.0), st.floats(-90.0, -50.0), st.floats(0.0, 30.0))
def test_opportunity_shift(device, rpl, acceptable, delta):
    f = PsrField(24.0, acceptable)
    a = sr.evaluate_opportunity(device, rpl, f, 1e9, -1e9)
    b = sr.evaluate_opportunity(device, rpl + delta, f, 1e9, -1e9)
    assert abs((a - b) - delta) < 1e-9


@SETTINGS
@given(st.floats(-90.0, -20.0), st.floats(0.0, 20.0),
       st.lists(st.tuples(st.floats(-110.0, -30.0), st.booleans()), max_size=6), st.integers(1, 4))
def test_post_filter_sinr_monotone(signal, bump, interferers, k):
    cfg = phy.ReceiveConfig(8, k, sum(1 for _, n in interferers if n) and min(4, 8 - k))
    lo = phy.post_filter_sinr(signal, interferers, NOISE, cfg, 10.0)
    hi = phy.post_filter_sinr(signal + bump, interferers, NOISE, cfg, 10.0)
    assert hi >= lo - 1e-12
    louder = [(p + bump, n) for p, n in interferers]
    assert phy.post_filter_sinr(signal, louder, NOISE, cfg, 10.0) <= lo + 1e-12


def opportunity_superset_cases(n_cases=N_CASES):
    """Paired seeds: PSR and CBF see the same geometry, fading and trigger.

    Returns (cases checked, violations). A violation is a device that has a
    PSR opportunity but none, or a lower power, under CBF.
    """
    cfg = default_config()
    supp = cfg["sr.suppression_db"]
    violations = 0
    checked = 0
    for seed in range(n_cases):
        sim = Simulation(cfg, "cbf", seed)
        rng = np.random.default_rng(seed)
        sim.channel.redraw_fading(sim.rng["fading"])
        g = sim.channel.gain_db
        donor = sim.aps[int(rng.integers(len(sim.aps)))]
        own = [sid for sid in donor.sta_ids]
        k = int(rng.integers(1, min(4, len(own)) + 1))
        sched = [int(s) for s in rng.choice(own, size=k, replace=False)]
        obss = [s for s in sim.stas if s.bss != donor.bss]
        ar = sorted((s for s in obss if s.cls == AR), key=lambda s: -g[s.id][donor.id])
        protected = [s.id for s in ar[:int(rng.integers(0, 5))]]
        cfg_rx = phy.ReceiveConfig(sim.M, k, len(protected))
        gain = phy.array_gain_db(sim.M, k, len(protected))
        scheduled = []
        for sid in sched:
            sig = sim.nodes[sid].tx_power + g[sid][donor.id]
            mcs = phy.select_mcs(phy.post_filter_sinr(sig, [], donor.noise, cfg_rx, supp), TABLE) or TABLE[0]
            scheduled.append((sig, mcs))
        base = sr.compute_psr_field(donor.tx_power, scheduled, gain, donor.noise)
        cbf = sr.configure_cbf_txop(sim.M, k, protected, base, supp)
        for s in obss:
            rpl = donor.tx_power + g[donor.id][s.id]
            p_psr = sr.evaluate_opportunity(s.id, rpl, base, s.tx_power)
            p_cbf = sr.evaluate_opportunity(s.id, rpl, cbf.relaxed, s.tx_power)
            if p_psr is not None and (p_cbf is None or p_cbf < p_psr):
                violations += 1
        checked += 1
    return checked, violations


def test_cbf_opportunities_superset_of_psr():
    checked, violations = opportunity_superset_cases()
    assert checked >= N_CASES and violations == 0


def _tiny_config(rng):
    return default_config().replace(
        sim__duration_s=float(rng.uniform(0.005, 0.03)),
        sim__warmup_s=0.0,
        deployment__n_broadband=int(rng.integers(0, 9)),
        deployment__n_ar=int(rng.integers(1, 9)),
    )


def conservation_cases(n_cases=N_CASES):
    """Short random runs; counts STAs (or classes) whose books do not balance."""
    rng = np.random.default_rng(2024)
    bad = 0
    for i in range(n_cases):
        r = run(_tiny_config(rng), MODES[i % 3], int(rng.integers(0, 2**31)))
        gen, dlv, drp, q = (dict(x) for x in (r.generated, r.delivered, r.dropped, r.queued))
        per_cls = {}
        for sta, cls in r.sta_class:
            if gen[sta] != dlv[sta] + drp[sta] + q[sta]:
                bad += 1
            tot = per_cls.setdefault(cls, [0, 0])
            tot[0] += gen[sta]
            tot[1] += dlv[sta] + drp[sta] + q[sta]
        bad += sum(1 for a, b in per_cls.values() if a != b)
    return n_cases, bad


def determinism_cases(n_cases=N_CASES):
    rng = np.random.default_rng(7)
    bad = 0
    for i in range(n_cases):
        cfg, seed = _tiny_config(rng), int(rng.integers(0, 2**31))
        if run(cfg, MODES[i % 3], seed) != run(cfg, MODES[i % 3], seed):
            bad += 1
    return n_cases, bad


def test_conservation():
    n, bad = conservation_cases()
    assert n >= N_CASES and bad == 0


def test_determinism():
    n, bad = determinism_cases()
    assert n >= N_CASES and bad == 0


def ftp3_pooled_rate(n_cases=N_CASES, horizon=10.0):
    """Pooled arrival rate over ``n_cases`` independent streams and its standard error."""
    lam = ftp3_rate(100e6, 500_000)
    counts = [len(ftp3_arrivals(lam, 500_000, horizon, np.random.default_rng([11, i]))) for i in range(n_cases)]
    rate = sum(counts) / (n_cases * horizon)
    se = math.sqrt(lam / (n_cases * horizon))
    return lam, rate, se


def test_ftp3_rate_within_three_se():
    lam, rate, se = ftp3_pooled_rate()
    assert lam == 25.0
    assert abs(rate - lam) <= 3 * se
