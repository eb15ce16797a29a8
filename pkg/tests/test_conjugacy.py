from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bifconj import _kernels as K
from bifconj.conjugacy import (all_regions, build_conjugacy, conjugacy_residual, eval_conjugacy,
                               inner_sequences, monotone_inverse, outer_sequence, region_grid)
from bifconj.fixedpoints import BracketError, nontrivial_fixed_point
from bifconj.maps import BoxViolation, Tail, catalog_pair, make_pf_normal_form, make_tc_normal_form


# ---------------------------------------------------------------- sequences

def test_tc_inner_first_step():
    nf = make_tc_normal_form(Tail("zero"))
    seq = inner_sequences(nf, 0.1, 0.3, enforce_box=False)
    assert seq.x0 == pytest.approx(-0.1)
    assert seq.x_seq[1] == pytest.approx(-0.102, abs=1e-15)
    assert seq.y_seq[0] == seq.x0


@pytest.mark.parametrize("tail", [Tail("zero"), Tail("hp_power", 1.0, 1), Tail("sin", -0.5)])
def test_pf_inner_start(tail):
    nf = make_pf_normal_form(tail)
    seq = inner_sequences(nf, 0.1, 0.003)
    assert seq.x0 == pytest.approx(-math.sqrt(0.003 / 8), rel=1e-15)


@pytest.mark.parametrize("kind", ["tc", "pf"])
def test_inner_sequences_monotone_and_compatible(kind):
    _, nf = catalog_pair(kind, 1)
    a = 0.003
    seq = inner_sequences(nf, 0.1, a)
    assert np.all(np.diff(seq.x_seq) < 0)
    assert np.all(np.diff(seq.y_seq) > 0)
    # y_{-1} = x_1: one forward step of y_0 lands on x_1
    assert nf(0.1, seq.y_seq[0], a) == seq.x_seq[1]
    w = nontrivial_fixed_point(nf, 0.1, a, -1).x
    assert abs(seq.x_seq[-1] - w) < 1e-10 or seq.truncated


def test_outer_first_step_and_limits():
    nf = make_tc_normal_form(Tail("zero"))
    seq = outer_sequence(nf, 0.1, 0.0, z0=-0.04)
    assert seq.z_seq[1] == pytest.approx(-0.03984, abs=1e-15)
    assert np.all(np.diff(seq.z_seq) > 0)
    pos = outer_sequence(nf, 0.1, 0.01)
    assert abs(pos.z_seq[-1] - (-0.01)) <= 1e-10


def test_outer_z0_checked():
    nf = make_tc_normal_form(Tail("zero"))
    with pytest.raises(BoxViolation, match="z0"):
        outer_sequence(nf, 0.1, 0.0, z0=-0.9)


# ---------------------------------------------------------------- inverse

@settings(max_examples=100, deadline=None)
@given(st.floats(-0.04, 0.04), st.floats(0.01, 0.2), st.floats(-0.019, 0.019))
def test_monotone_inverse_round_trip(x, h, a):
    nf = make_tc_normal_form(Tail("sin", 0.8))
    assert monotone_inverse(nf, h, a, nf(h, x, a)) == pytest.approx(x, abs=1e-12)


def test_monotone_inverse_zero_and_quadratic():
    nf = make_tc_normal_form(Tail("zero"))
    assert monotone_inverse(nf, 0.1, 0.01, 0.0) == 0.0
    h, a, y = 0.1, 0.01, -0.02
    # h x^2 + (1+h a) x - y = 0, root on the increasing branch
    want = (-(1 + h * a) + math.sqrt((1 + h * a) ** 2 + 4 * h * y)) / (2 * h)
    assert monotone_inverse(nf, h, a, y) == pytest.approx(want, rel=1e-13)


def test_monotone_inverse_outside_image():
    nf = make_tc_normal_form(Tail("zero"))
    with pytest.raises(BracketError):
        monotone_inverse(nf, 0.1, 0.01, -50.0)


def test_kernel_inverse_matches_python():
    nf = make_pf_normal_form(Tail("hp_power", 1.0, 2))
    pr = K.pack(nf, 0.05)
    for y in np.linspace(-0.09, 0.09, 19):
        assert K.nf_inverse(pr, 0.05, 0.002, float(y)) == pytest.approx(
            monotone_inverse(nf, 0.05, 0.002, float(y)), abs=1e-15)


# ---------------------------------------------------------------- the conjugacy

@pytest.mark.parametrize("kind", ["tc", "pf"])
def test_identity_when_forms_coincide(kind):
    nF, _ = catalog_pair(kind, 1)
    for a in (0.002, -0.002):
        for region, hp in all_regions(kind, a):
            J = build_conjugacy(nF, nF, 0.1, a, region, hp)
            xs = region_grid(J, 1024)
            assert np.max(np.abs(xs - J(xs))) <= 1e-12
            assert conjugacy_residual(J) <= 1e-15


def _tc_inner():
    nF, nf = catalog_pair("tc", 1)
    return build_conjugacy(nF, nf, 0.1, 0.01, "inner"), nF, nf


def test_anchor_values():
    J, nF, nf = _tc_inner()
    x0 = -0.01 / 3
    x1 = nf(0.1, x0, 0.01)
    assert eval_conjugacy(J, x0) == x0
    assert eval_conjugacy(J, x1) == nF(0.1, x0, 0.01)
    mid = 0.5 * (x0 + x1)
    assert eval_conjugacy(J, mid) == pytest.approx(0.5 * (x0 + nF(0.1, x0, 0.01)), rel=1e-14)


def test_endpoint_images():
    J, nF, nf = _tc_inner()
    wf = nontrivial_fixed_point(nf, 0.1, 0.01, -1).x
    wF = nontrivial_fixed_point(nF, 0.1, 0.01, -1).x
    assert eval_conjugacy(J, wf) == pytest.approx(wF, abs=1e-10)
    assert eval_conjugacy(J, 0.0) == 0.0


def test_near_fixed_point_snaps_or_converges():
    J, nF, nf = _tc_inner()
    wf = nontrivial_fixed_point(nf, 0.1, 0.01, -1).x
    wF = nontrivial_fixed_point(nF, 0.1, 0.01, -1).x
    v, snapped, depth = eval_conjugacy(J, wf + 1e-13, with_flags=True)
    assert abs(v - wF) <= 1e-12


def test_tc_catalog_residual():
    J, _, _ = _tc_inner()
    assert conjugacy_residual(J, 1024) <= 1e-10


def test_residual_grid_refinement_stable():
    J, _, _ = _tc_inner()
    r256, r1024 = conjugacy_residual(J, 256), conjugacy_residual(J, 1024)
    assert r1024 <= 1e-10 and r256 <= 1e-10
    assert r1024 <= 2 * max(r256, 1e-16) or r1024 <= 1e-14


@pytest.mark.parametrize("kind", ["tc", "pf"])
@pytest.mark.parametrize("a", [0.002, -0.002])
def test_all_regions_residual_and_monotone(kind, a):
    nF, nf = catalog_pair(kind, 2)
    for region, hp in all_regions(kind, a):
        J = build_conjugacy(nF, nf, 0.05, a, region, hp)
        xs = region_grid(J, 1024)
        vals, snapped, _ = J.evaluate(xs)
        assert np.all(np.diff(vals) > 0), (region, hp)
        assert conjugacy_residual(J, 1024) <= 1e-10, (region, hp)
        assert not snapped.any()


@pytest.mark.parametrize("kind", ["tc", "pf"])
def test_outer_at_zero_alpha(kind):
    # algebraic convergence to 0: points very close to 0 may exceed the depth cap
    # and snap to J(0) = 0; every other point keeps strict ordering
    nF, nf = catalog_pair(kind, 1)
    for hp in ("lower", "upper"):
        J = build_conjugacy(nF, nf, 0.1, 0.0, "outer", hp)
        xs = region_grid(J, 256)
        vals, snapped, _ = J.evaluate(xs)
        live = ~snapped
        assert np.all(np.diff(vals[live]) > 0)
        assert np.all(vals[snapped] == 0.0)
        # depth n reaches |x| ~ 1/(n h) (TC) or 1/sqrt(2 n h) (PF)
        assert np.all(np.abs(xs[snapped]) < 3 / math.sqrt(2 * 0.1 * J.n_max))
        assert conjugacy_residual(J, 256) <= 1e-10


def test_domain_abutment():
    J, nF, nf = _tc_inner()
    x = -0.01 / 3
    for _ in range(30):
        nxt = nf(0.1, x, 0.01)
        # J(x_{n+1}) from the conjugacy equation on domain n vs direct evaluation
        assert abs(nF(0.1, eval_conjugacy(J, x), 0.01) - eval_conjugacy(J, nxt)) <= 1e-12
        x = nxt


def test_mirror_construction_flagged():
    nF, nf = catalog_pair("tc", 1)
    J = build_conjugacy(nF, nf, 0.1, 0.002, "outer", "upper")
    assert J.metadata["construction"] == "mirror"
    assert J.half_plane == "upper"


def test_inner_at_zero_alpha_rejected():
    nF, nf = catalog_pair("tc", 1)
    with pytest.raises(ValueError):
        build_conjugacy(nF, nf, 0.1, 0.0, "inner")


def test_box_enforced():
    nF, nf = catalog_pair("pf", 1)
    with pytest.raises(BoxViolation):
        build_conjugacy(nF, nf, 0.1, 0.005, "inner")


def test_kernel_paths_agree():
    J, _, _ = _tc_inner()
    xs = region_grid(J, 257)
    pF, pG = K.pack(J.nf_phi, J.h), K.pack(J.nf_Phi, J.h)
    args = (pF, pG, J.h, J.alpha, J.anchor, J.anchor_F, J.anchor_image, J.anchor_GJ, J.direction,
            J.attracting[0], J.attracting[1], J.repelling[0], J.repelling[1], J.n_max)
    out1, s1, d1 = np.empty_like(xs), np.zeros(len(xs), np.bool_), np.zeros(len(xs), np.int64)
    out2, s2, d2 = np.empty_like(xs), np.zeros(len(xs), np.bool_), np.zeros(len(xs), np.int64)
    K.conj_eval(xs, *args, out1, s1, d1)
    K.conj_eval_serial(xs, *args, out2, s2, d2)
    assert np.array_equal(out1, out2)


def test_custom_tail_python_path():
    t = Tail.custom(lambda h, x, a: 0.5 * np.cos(x), "half-cos")
    nF = make_tc_normal_form(Tail("zero"))
    nf = make_tc_normal_form(t)
    J = build_conjugacy(nF, nf, 0.1, 0.015, "inner")
    assert not J.compiled
    assert conjugacy_residual(J, 16) <= 1e-10
