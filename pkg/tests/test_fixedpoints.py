from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifconj.catalog import CATALOG_NAMES, get_map
from bifconj.fixedpoints import (BracketError, classify_bifurcation, find_fixed_points,
                                 pf_negative_fixed_point, stability_of, tc_nonzero_fixed_point,
                                 trace_branches, verify_asymmetric_pf_branches)
from bifconj.maps import Tail, catalog_pair, make_pf_normal_form, make_tc_normal_form


def quad(h, x, a):
    return (1 + h * a) * x + h * x * x


# ---------------------------------------------------------------- scanning

def test_find_fixed_points_quadratic():
    pts = find_fixed_points(quad, 0.1, 0.3, (-1, 1))
    assert [p.x for p in pts] == [pytest.approx(-0.3, abs=1e-13), pytest.approx(0.0, abs=1e-13)]
    assert pts[0].stability == "attracting" and pts[1].stability == "repelling"
    for p in pts:
        assert p.residual <= 1e-12 * max(1.0, abs(p.x))


def test_identity_reports_continuum():
    pts = find_fixed_points(lambda h, x, a: x, 0.1, 0.0)
    assert len(pts) == 0 and pts.continuum


def test_example21_has_no_fixed_points_in_gap():
    f = get_map("example21", 1).func
    assert len(find_fixed_points(f, 0.1, 0.001)) == 0


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("h", [0.1, 0.05])
def test_example21_gap_law(p, h):
    f = get_map("example21", p).func
    for a in np.linspace(-3 * h**p, 3 * h**p, 25):
        disc = a * a - 4 * h ** (2 * p)
        if abs(disc) < 1e-6 * h ** (2 * p):
            continue
        pts = find_fixed_points(f, h, float(a))
        assert (len(pts) == 0) == (disc < 0)
        if disc > 0:
            roots = sorted([(-a - math.sqrt(disc)) / 2, (-a + math.sqrt(disc)) / 2])
            assert [q.x for q in pts] == [pytest.approx(r, abs=1e-12) for r in roots]


def test_fixed_points_bracket_sign_change():
    f = lambda h, x, a: (1 + h * a) * x - h * x**3 + h * 0.3 * x**4
    for p in find_fixed_points(f, 0.1, 0.04, (-0.5, 0.5)):
        d = 1e-6
        assert (f(0.1, p.x - d, 0.04) - (p.x - d)) * (f(0.1, p.x + d, 0.04) - (p.x + d)) < 0


@pytest.mark.parametrize("m,label", [(0.5, "attracting"), (-0.99, "attracting"), (1.0, "neutral"),
                                     (1 + 1e-11, "neutral"), (1.01, "repelling"), (-1.5, "repelling")])
def test_stability_labels(m, label):
    assert stability_of(m) == label


# ---------------------------------------------------------------- nontrivial fixed points

def test_tc_zero_tail_root_is_minus_alpha():
    nf = make_tc_normal_form(Tail("zero"))
    fp = tc_nonzero_fixed_point(nf, 0.1, 0.01)
    assert fp.x == pytest.approx(-0.01, rel=1e-14)


@pytest.mark.parametrize("p", [1, 2])
def test_tc_hp_tail_closed_form(p):
    nf = make_tc_normal_form(Tail("hp_power", 1.0, p))
    h, a = 0.1, 0.01
    want = (-1 + math.sqrt(1 - 4 * h**p * a)) / (2 * h**p)
    fp = tc_nonzero_fixed_point(nf, h, a)
    assert fp.x == pytest.approx(want, rel=1e-12)
    assert fp.residual <= 1e-13


def test_pf_zero_tail_root_is_minus_sqrt_alpha():
    nf = make_pf_normal_form(Tail("zero"))
    fp = pf_negative_fixed_point(nf, 0.1, 0.003)
    assert fp.x == pytest.approx(-math.sqrt(0.003), rel=1e-14)


@pytest.mark.parametrize("p", [1, 2])
def test_pf_hp_tail_interval(p):
    nf = make_pf_normal_form(Tail("hp_power", 1.0, p))
    h, a = 0.1, 0.003
    x = pf_negative_fixed_point(nf, h, a).x
    lo = -math.sqrt(a / (1 + h**p * 0.8 * math.sqrt(a)))
    hi = -math.sqrt(a / (1 + h**p * math.sqrt(2 * a)))
    assert lo < x < hi


def _tails():
    return st.one_of(
        st.just(Tail("zero")),
        st.builds(lambda c, p: Tail("hp_power", c, p), st.floats(-1, 1), st.integers(1, 3)),
        st.builds(lambda c: Tail("sin", c), st.floats(-1, 1)),
        st.builds(lambda c: Tail("const", c), st.floats(-1, 1)),
    )


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 0.2), st.floats(1e-6, 1 / 51), _tails())
def test_tc_root_localisation(h, a, tail):
    nf = make_tc_normal_form(tail, check=False)
    x = tc_nonzero_fixed_point(nf, h, a).x
    assert -1.5 * a < x < -6 / 7 * a


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 0.1), st.floats(1e-7, 1 / 288), _tails())
def test_pf_root_localisation(h, a, tail):
    nf = make_pf_normal_form(tail, check=False)
    x = pf_negative_fixed_point(nf, h, a).x
    assert -math.sqrt(2 * a) < x < -0.8 * math.sqrt(a)


def test_bracket_failure_names_bound():
    nf = make_tc_normal_form(Tail("const", 1.0), check=False)
    with pytest.raises(BracketError, match="alpha"):
        tc_nonzero_fixed_point(nf, 0.1, 0.5)


# ---------------------------------------------------------------- branches

def test_branches_of_cubic_pitchfork():
    f = lambda h, x, a: (1 + h * a) * x + h * x**3
    d = trace_branches(f, 0.1, (-0.04, 0.04), 17, (-0.5, 0.5))
    counts = dict(zip(np.round(d.alpha_grid, 12), d.counts))
    assert all(c == 3 for a, c in counts.items() if a < 0)
    assert all(c == 1 for a, c in counts.items() if a >= 0)
    for b in d.branches:                      # each branch is a function of alpha
        assert len(set(b.alphas)) == len(b.alphas)


def test_branch_through_origin_flags_crossing():
    d = trace_branches(quad, 0.1, (-0.1, 0.1), 21, (-0.5, 0.5))
    zero = [b for b in d.branches if all(abs(x) < 1e-12 for x in b.xs)]
    assert zero and zero[0].crossings()


def test_example26_is_not_a_pitchfork():
    # fixed points solve x (x^2 + h^p x + alpha) = 0: three of them persist up to
    # alpha = h^(2p)/4, where two merge in a fold away from the origin
    f = get_map("example26", 1).func
    Phi = lambda h, x, a: (1 + h * a) * x + h * x**3
    h = 0.1
    fold = h**2 / 4
    for a in (0.2 * fold, 0.8 * fold):
        assert len(find_fixed_points(f, h, a, (-0.5, 0.5))) == 3
        assert len(find_fixed_points(Phi, h, a, (-0.5, 0.5))) == 1
    assert len(find_fixed_points(f, h, 1.2 * fold, (-0.5, 0.5))) == 1
    d = trace_branches(f, h, (-0.01, 0.01), 21, (-0.5, 0.5))
    zero = [b for b in d.branches if all(abs(x) < 1e-12 for x in b.xs)]
    assert zero and zero[0].crossings()      # exchange of stability at the origin
    assert classify_bifurcation(f, h).verdict != "PF"


def test_example27_has_no_branch_through_origin():
    f = get_map("example27", 1).func
    d = trace_branches(f, 0.1, (-0.02, 0.02), 21, (-0.5, 0.5))
    for b in d.branches:
        for a, x in zip(b.alphas, b.xs):
            assert not (abs(a) < 1e-12 and abs(x) < 1e-3) or abs(x) < 1e-12
    # the trivial fixed point persists but its multiplier never equals 1
    i0 = int(np.argmin(np.abs(d.alpha_grid)))
    zero = [b for b in d.branches if 0.0 in b.xs]
    assert all(abs(m - 1) > 1e-4 for b in zero for m in b.multipliers)
    assert d.alpha_grid[i0] == pytest.approx(0.0, abs=1e-15)


def test_trace_branches_needs_three_alphas():
    with pytest.raises(ValueError):
        trace_branches(quad, 0.1, (-0.1, 0.1), 2)


# ---------------------------------------------------------------- classification

@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_catalog_classification_expected(name):
    e = get_map(name)
    assert classify_bifurcation(e.func, 0.1).verdict == e.expected


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_classification_stable_under_tolerance_halving(name):
    f = get_map(name).func
    assert classify_bifurcation(f, 0.1, 1e-7).verdict == classify_bifurcation(f, 0.1, 5e-8).verdict


def test_counterexample_passes_point_conditions_but_fails_discriminant():
    c = classify_bifurcation(get_map("wiggins-counterexample").func)
    ev = c.evidence
    assert ev["g=0"] and ev["g_alpha=0"] and ev["g_x=1"] and ev["g_xx!=0"] and ev["g_xalpha!=0"]
    assert not ev["discriminant>0"]
    assert c.discriminant == pytest.approx(1 - 4, abs=1e-6)
    assert c.verdict == "none"


def test_classify_odd_cubic_is_pf():
    assert classify_bifurcation(lambda h, x, a: (1 + h * a) * x - h * x**3, 0.1).verdict == "PF"
    assert classify_bifurcation(quad, 0.1).verdict == "TC"


def test_classify_to_dict_shape():
    d = classify_bifurcation(quad).to_dict()
    assert set(d) >= {"verdict", "conditions", "discriminant"}


# ---------------------------------------------------------------- asymmetric pitchfork

def test_symmetric_pf_branch_constants():
    f = lambda h, x, a: (1 + h * a) * x - h * x**3
    rep = verify_asymmetric_pf_branches(f, 0.1, 0.01)
    assert rep.passed
    assert rep.details["c0"] == 0.0
    assert rep.details["c1"] == pytest.approx(1.0, abs=1e-6)
    assert rep.details["c2"] == pytest.approx(1.0, abs=1e-6)
    assert rep.context["side"] == 1.0


def test_asymmetric_pf_sqrt_scaling():
    f = lambda h, x, a: (1 + h * a) * x - h * x**3 + h * x**4
    rep = verify_asymmetric_pf_branches(f, 0.1, 0.01)
    assert rep.passed
    assert rep.details["slope"] == pytest.approx(0.5, abs=0.02)


def test_asymmetric_pf_requires_pf():
    with pytest.raises(ValueError):
        verify_asymmetric_pf_branches(quad, 0.1, 0.01)


def test_catalog_pf_phi_branches():
    _, nf = catalog_pair("pf", 1)
    rep = verify_asymmetric_pf_branches(nf, 0.1, 0.003)
    assert rep.passed and rep.details["slope"] == pytest.approx(0.5, abs=0.02)
