from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest

from bifconj.experiments import (SweepConfig, compute_alignment, delta_sequence, exact_c2, h_sweep,
                                 model_rk4_map, orbit_closeness_experiment, portrait_orbits, rk4_c2,
                                 worker_count)


# ---------------------------------------------------------------- alignment

def test_alignment_trivial_at_zero_alpha():
    al = compute_alignment(0.01, 0.0)
    assert al.rho == 1.0 and al.alpha_tilde == 0.0


@pytest.mark.parametrize("h,a", [(1e-3, -0.5), (1e-2, -0.5), (1e-2, 0.8), (0.05, -1.0)])
def test_alignment_matches_series(h, a):
    al = compute_alignment(h, a)
    sc = al.series_check
    assert sc["alpha_tilde"] <= sc["tolerance"]
    assert sc["rho"] <= sc["tolerance"]
    assert sc["linear_multiplier"] <= 1e-30
    assert sc["quadratic_coefficient"] <= 1e-30


def test_alignment_defining_equations():
    h, a = 0.02, -0.5
    al = compute_alignment(h, a)
    with mpmath.workdps(40):
        # float inputs enter mp arithmetic through their shortest decimal repr
        H, A = mpmath.mpf(repr(h)), mpmath.mpf(repr(a))
        s = al.alpha_tilde_mp * H
        assert abs(1 + s + s**2 / 2 + s**3 / 6 + s**4 / 24 - mpmath.exp(A * H)) < 1e-35
        assert abs(exact_c2(H, A) / rk4_c2(H, al.alpha_tilde_mp) - al.rho_mp) < 1e-30


def test_alignment_rejects_large_step():
    with pytest.raises(ValueError):
        compute_alignment(1.0, 0.6)


def test_rk4_c2_zero_alpha():
    # at alpha = 0 the RK4 map of x' = x^2 has quadratic coefficient h
    with mpmath.workdps(30):
        assert abs(rk4_c2(mpmath.mpf("0.1"), mpmath.mpf(0)) - mpmath.mpf("0.1")) < 1e-25


def test_model_rk4_map_fixed_points():
    assert model_rk4_map(0.1, 0.0, -0.5) == 0.0
    assert model_rk4_map(0.1, 0.5, -0.5) == pytest.approx(0.5, abs=1e-15)


# ---------------------------------------------------------------- orbit differences

def test_delta_zero_steps_and_zero_start():
    assert delta_sequence(1e-3, -1.0, -0.5, 0).values.tolist() == [0.0]
    d = delta_sequence(1e-2, 0.0, -0.5, 50)
    assert np.all(d.values == 0.0)


def test_delta_rejects_positive_start():
    with pytest.raises(ValueError):
        delta_sequence(1e-2, 0.5, -0.5, 10)


def test_delta_uniform_in_h():
    sups = [delta_sequence(h, -1.0, -0.5, int(2 / h)).sup for h in (8e-3, 4e-3, 2e-3)]
    assert max(sups) < 4 * min(sups)
    assert min(sups) > 0


def test_aligned_orbits_plateau():
    base = orbit_closeness_experiment(1e-3, -1.0, -0.5, 1500)
    assert base.values[0] == 0.0
    assert math.isfinite(base.sup) and base.sup > 0
    assert abs(base.plateau_ratio() - 1) <= 0.05


def test_perturbation_breaks_closeness():
    base = orbit_closeness_experiment(1e-3, -1.0, -0.5, 1500)
    pert = orbit_closeness_experiment(1e-3, -1.0, -0.5, 1500, 1e-7)
    assert pert.sup / base.sup >= 10


def test_orbit_diff_context():
    d = orbit_closeness_experiment(1e-2, -1.0, -0.5, 20)
    assert d.context["p"] == 4 and "series_residuals" in d.context
    assert len(d.values) == 21 and 0 <= d.argmax <= 20


# ---------------------------------------------------------------- sweeps

def test_config_parse_round_trip():
    cfg = SweepConfig.parse("kind = pf  # comment\np=2\nh=0.1, 0.05,0.025,0.0125\nalpha=0.002\ngrid=256\n")
    assert cfg.kind == "pf" and cfg.p == 2 and cfg.h == (0.1, 0.05, 0.025, 0.0125)
    assert cfg.alpha == (0.002,) and cfg.grid == 256


@pytest.mark.parametrize("text", ["colour=red", "kind=xx", "region=middle", "h=-0.1", "p=0", "novalue"])
def test_config_parse_rejects(text):
    with pytest.raises(ValueError):
        SweepConfig.parse(text)


@pytest.mark.parametrize("p", [1, 2])
def test_sweep_recovers_order(p):
    res = h_sweep(SweepConfig(kind="tc", p=p, grid=512), enforce_box=False)
    fit = res.fits[0.005]
    assert not fit["degenerate"] and abs(fit["slope"] - p) <= 0.15
    assert [r["h"] for r in res.rows] == list(res.config.h)
    assert math.isnan(res.rows[0]["slope_so_far"])
    assert not res.failures


def test_sweep_degenerate_when_forms_coincide():
    res = h_sweep(SweepConfig(kind="tc", tail="zero", tail_Phi="zero", grid=256))
    assert res.fits[0.005] == {"degenerate": True}


def test_sweep_records_failures_and_continues():
    # the inner region does not exist at alpha = 0: every cell fails, none aborts the sweep
    res = h_sweep(SweepConfig(kind="tc", alpha=(0.0, 0.005), grid=256))
    assert len(res.failures) == 4
    assert all(f["alpha"] == 0.0 for f in res.failures)
    assert len(res.rows) == 8 and len(res.csv_rows()) == 8


def test_sweep_threads_agree():
    cfg = SweepConfig(kind="pf", alpha=(0.002,), grid=256)
    a = h_sweep(cfg, enforce_box=False, workers=1)
    b = h_sweep(cfg, enforce_box=False, workers=2)
    assert a.csv_rows() == b.csv_rows()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("BIFCONJ_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("BIFCONJ_THREADS", "junk")
    assert worker_count() == 1


# ---------------------------------------------------------------- portrait

def test_portrait_converges_and_decouples():
    rows = portrait_orbits(0.05, 1.0, [(-0.5, 0.5), (0.0, 0.0)], 600)
    first = [r for r in rows if r[0] == 0]
    assert abs(first[-1][2] + 1) <= 1e-3
    for k, n, x, y in first:
        assert y == pytest.approx(0.5 * math.exp(-0.05 * n), rel=1e-14)
    assert all(r[2] == 0.0 and r[3] == 0.0 for r in rows if r[0] == 1)
    assert len(rows) == 2 * 601
