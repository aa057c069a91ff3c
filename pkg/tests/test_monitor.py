import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wwblowup.dynamics import SurfaceState, TraceFields
from wwblowup.monitor import (COLUMNS, CRITERIA, INTEGRAL_KEYS, SUP_KEYS, BlowupMonitor, CriterionAccumulators,
                              MonitorSettings, energy_functionals, gronwall_ratio, growth_polynomial, instantaneous,
                              verdict)
from wwblowup.spectral import SpectralGrid, holder_norm

G = 9.81


def rest(grid, t=0.0):
    z = np.zeros(grid.shape)
    st_ = SurfaceState(z, z, t)
    tr = TraceFields(V=z[None].copy(), B=z, zeta=z[None].copy(), a=np.full(grid.shape, G), Da=z)
    return st_, tr


def test_growth_polynomial():
    assert growth_polynomial(0, 0) == 0
    assert growth_polynomial(1.0, 2.0) == 1 + 2 + 1 + 8


def test_rest_record_and_accumulators():
    g = SpectralGrid(32)
    mon = BlowupMonitor(g, 1.0, G)
    for t in (0.0, 0.5, 1.0):
        s, tr = rest(g, t)
        rec = mon.record(s, tr, np.zeros(32))
    assert rec.accepted
    assert rec.h_margin == 1.0 and rec.c_min == G
    assert rec.hamiltonian == 0 and rec.energy_A == 0
    assert len(rec.row()) == len(COLUMNS)
    acc = rec.accumulators
    for k in INTEGRAL_KEYS:
        if k != "int_a_half":
            assert acc[k] == pytest.approx(0.0, abs=1e-12)
    # a = g is a nonzero constant, so its W^{1/2,inf} norm integrates linearly
    assert acc["int_a_half"] == pytest.approx(holder_norm(g, np.full(32, G), 0.5) * 1.0)
    assert acc["int_a_half"] == pytest.approx(G * (1 + 2**-0.5))
    assert not mon.crossed
    assert mon.verdict().verdict == "no breakdown observed"


def test_energy_aggregate_closed_form():
    g = SpectralGrid(64)
    x = g.x[0]
    s = 2.0
    for k in (1, 3):
        psi = np.cos(k * x)
        tk = math.tanh(k)
        tr = TraceFields(V=(-k * np.sin(k * x))[None], B=k * tk * np.cos(k * x), zeta=np.zeros((1, 64)),
                         a=np.full(64, G), Da=np.zeros(64))
        A, B = energy_functionals(g, SurfaceState(np.zeros(64), psi), tr, s, 0.1)
        jk = math.sqrt(1 + k * k)
        rp = math.sqrt(math.pi)
        expected = jk**s * k * rp + rp + jk ** (s - 0.5) * (k + k * tk) * rp
        assert A == pytest.approx(expected, rel=1e-10)
        assert B >= G * 2**-0.5


def test_trapezoid_accumulation():
    acc = CriterionAccumulators()
    base = {k: 0.0 for k in INTEGRAL_KEYS}
    for t in (0.0, 0.5, 1.5, 2.0):
        acc.push(t, {**base, "int_da": 3.0, "int_vb": 2 * t}, {})
    assert acc.integrals["int_da"] == pytest.approx(6.0)
    # trapezoid is exact for linear integrands
    assert acc.integrals["int_vb"] == pytest.approx(4.0)
    assert acc.elapsed == 2.0
    with pytest.raises(ValueError):
        acc.push(1.0, base, {})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1e3), st.floats(0, 1e7)), min_size=1, max_size=30))
def test_accumulators_monotone_and_crossings_stable(steps):
    acc = CriterionAccumulators(sup_threshold=1e6, int_threshold=1e3)
    t = 0.0
    prev_i, prev_s, prev_c = dict(acc.integrals), dict(acc.sups), {}
    for dt, q, sv in steps:
        t += dt
        acc.push(t, {k: q for k in INTEGRAL_KEYS}, {k: sv for k in SUP_KEYS})
        for k in INTEGRAL_KEYS:
            assert acc.integrals[k] >= prev_i[k]
        for k in SUP_KEYS:
            assert acc.sups[k] >= prev_s[k]
        for k, tc in prev_c.items():
            assert acc.crossed[k] == tc
        for k in INTEGRAL_KEYS + SUP_KEYS:
            assert (k in acc.crossed) == (acc.value(k) > acc.threshold(k))
        prev_i, prev_s, prev_c = dict(acc.integrals), dict(acc.sups), dict(acc.crossed)


def test_vanishing_taylor_coefficient_leads():
    # c(t) = 1 - t reaches zero at t = 1; every other quantity stays bounded
    g = SpectralGrid(16)
    mon = BlowupMonitor(g, 1.0, G)
    for t in np.linspace(0, 1 - 1e-8, 200):
        mon.push_quantities(float(t), {k: 1.0 for k in INTEGRAL_KEYS},
                            {"sup_inv_c": 1.0 / (1.0 - t), "sup_inv_h": 1.0})
    rep = mon.verdict()
    assert rep.overall_leading == "sup_inv_c"
    assert all(rep.leading[n] == "sup_inv_c" for n in CRITERIA)
    assert rep.verdict.startswith("breakdown indicated by holder, sobolev, sobolev_reduced")


def test_ties_break_by_criterion_then_item_order():
    acc = CriterionAccumulators()
    acc.push(0.0, {k: 0.0 for k in INTEGRAL_KEYS}, {"sup_sobolev_r": 2e6, "sup_a_weps": 2e6})
    rep = verdict(acc, 0.0)
    # sup_a_weps belongs to holder, which precedes sobolev_reduced
    assert rep.overall_leading == "sup_a_weps"
    assert rep.leading["sobolev_reduced"] == "sup_sobolev_r"


def test_split_verdict_when_only_cubed_integral_crosses():
    acc = CriterionAccumulators()
    base = {k: 0.0 for k in INTEGRAL_KEYS}
    acc.push(0.0, {**base, "int_grad_eta": 200.0, "int_grad_eta_cubed": 8e6}, {})
    acc.push(1.0, {**base, "int_grad_eta": 200.0, "int_grad_eta_cubed": 8e6}, {})
    rep = verdict(acc, 1.0)
    assert rep.leading == {"holder": "int_grad_eta_cubed", "sobolev": None, "sobolev_reduced": None}
    assert rep.verdict == ("breakdown indicated by holder criteria (leading: int_grad_eta_cubed); "
                           "sobolev, sobolev_reduced criteria finite")


def test_state_dict_and_report_serialization():
    acc = CriterionAccumulators(10.0, 5.0)
    acc.push(0.0, {k: 1.0 for k in INTEGRAL_KEYS}, {"sup_inv_c": math.inf})
    acc.push(2.0, {k: 4.0 for k in INTEGRAL_KEYS}, {})
    back = CriterionAccumulators.from_state_dict(json.loads(json.dumps(acc.state_dict())))
    assert back.state_dict() == acc.state_dict()
    payload = json.loads(verdict(acc, 2.0).to_json())
    assert payload["overall_leading"] == "sup_inv_c"
    assert payload["termination"] == "time limit"


def test_rejected_record_when_taylor_sign_fails():
    g = SpectralGrid(32)
    s, tr = rest(g)
    bad = TraceFields(V=tr.V, B=tr.B, zeta=tr.zeta, a=np.full(32, -1.0), Da=tr.Da)
    rec = instantaneous(g, 1.0, G, s, bad, np.zeros(32), MonitorSettings())
    assert not rec.accepted
    assert rec.c_min == -1.0


def test_record_is_reproducible():
    g = SpectralGrid(32)
    x = g.x[0]
    s = SurfaceState(0.1 * np.cos(x), 0.2 * np.sin(x), 0.3)
    tr = TraceFields(V=(0.2 * np.cos(x))[None], B=0.1 * np.sin(x), zeta=(-0.1 * np.sin(x))[None],
                     a=G + 0.1 * np.cos(x), Da=0.05 * np.sin(x))
    r1 = instantaneous(g, 1.0, G, s, tr, 0.2 * np.sin(x), MonitorSettings())
    r2 = instantaneous(g, 1.0, G, s, tr, 0.2 * np.sin(x), MonitorSettings())
    assert r1.row()[:-len(INTEGRAL_KEYS)] == r2.row()[:-len(INTEGRAL_KEYS)]
    # the reduced Sobolev level sits between s0 and s
    sb = r1.sobolev
    assert sb["eta_s0"] <= sb["eta_r"] <= sb["eta_s"]


def test_gronwall_ratio_undefined_at_rest():
    g = SpectralGrid(16)
    mon = BlowupMonitor(g, 1.0, G)
    for t in (0.0, 0.1, 0.2, 0.3):
        s, tr = rest(g, t)
        mon.record(s, tr, np.zeros(16))
    r = gronwall_ratio(mon.records)
    assert r.shape == (2,) and np.all(np.isnan(r))
    assert gronwall_ratio(mon.records[:2]).size == 0
