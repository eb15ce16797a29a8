"""Named verification suites; each returns a list of EstimateReports."""
from __future__ import annotations

import math

import numpy as np

from .catalog import get_map
from .conjugacy import all_regions, build_conjugacy, conjugacy_residual_detail
from .estimates import (alpha_monotonicity_check, envelope_sandwich_inner, envelope_sandwich_outer,
                        fixed_point_gap, recursion_closed_form, recursion_iterate, optimality_lower_bound,
                        region_bound_reports, tc_zn_zero_decay_check)
from .experiments import SweepConfig, h_sweep, compute_alignment, orbit_closeness_experiment
from .fixedpoints import classify_bifurcation, find_fixed_points
from .maps import (PreconditionError, catalog_pair, classical_rk4, explicit_euler, implicit_midpoint,
                   rk_check_pf_conditions)
from .reports import EstimateReport

H_GRID = (0.1, 0.05)
ALPHA_GRID = (0.005, 0.002, -0.005, -0.002)
SANDWICH_SAMPLES = 500


def recursion_suite(seed: int = 0) -> list:
    """Closed form vs iteration of the rational recursion z -> z / (1 + a q z^q)^(1/q) over the full lattice."""
    reps = []
    for a in (1.0, 2.0):
        for q in (1, 2, 3):
            for z0 in (0.1, 0.01):
                it = recursion_iterate(z0, a, q, 10_000)
                cf = np.asarray(recursion_closed_form(z0, a, q, np.arange(10_001)))
                rel = float(np.max(np.abs(cf - it) / np.abs(it)))
                reps.append(EstimateReport("recursion-closed-form", rel, 1e-12, 1e-12,
                                           {"a": a, "q": q, "z0": z0, "n_max": 10_000}))
    return reps


def conjugacy_residual_suite(seed: int = 0, p_values=(1,), grid_size: int = 1024) -> list:
    """Residual of the conjugacy equation and strict monotonicity of J on every region."""
    reps = []
    for kind in ("tc", "pf"):
        for p in p_values:
            nF, nf = catalog_pair(kind, p)
            for h in H_GRID:
                for a in ALPHA_GRID:
                    for region, hp in all_regions(kind, a):
                        J = build_conjugacy(nF, nf, h, a, region, hp, enforce_box=False)
                        det = conjugacy_residual_detail(J, grid_size)
                        res, vals, snapped = det["residual"], det["Jx"], det["snapped"]
                        non_inc = int(np.sum(vals[1:] <= vals[:-1]))
                        ctx = {"kind": kind, "p": p, "h": h, "alpha": a, "region": region,
                               "half_plane": hp, "mirrored": J.mirrored}
                        reps.append(EstimateReport("conjugacy-residual", res, 1e-10, 1e-10, ctx,
                                                   {"snapped": int(snapped.sum())}))
                        reps.append(EstimateReport("conjugacy-monotone", float(non_inc), 0.0, 0.0, ctx))
    return reps


def envelope_suite(kind: str, seed: int = 0, n_samples: int = SANDWICH_SAMPLES) -> list:
    return [envelope_sandwich_inner(kind, n_samples, seed),
            envelope_sandwich_outer(kind, n_samples, seed + 1)]


def bounds_suite(kind: str, seed: int = 0, p_values=(1, 2)) -> list:
    """Every explicit-constant bound on the standard (h, alpha) grid."""
    reps = []
    for p in p_values:
        nF, nf = catalog_pair(kind, p)
        for h in H_GRID:
            for a in ALPHA_GRID:
                reps += region_bound_reports(nF, nf, h, a, p=p, enforce_box=False)
    return reps


OPTIMALITY_TC_EXTRA = ((1.0, 0.125), (0.5, 0.125), (1.0, 0.05), (0.5, 0.01))


def optimality_suite(seed: int = 0, p_values=(1, 2)) -> list:
    """Fixed-point gap of the catalog pair between its lower and upper bounds."""
    reps = []
    for kind in ("tc", "pf"):
        for p in p_values:
            nF, nf = catalog_pair(kind, p)
            cells = [(h, a) for h in H_GRID for a in ALPHA_GRID if a > 0]
            for h, a in cells:
                reps.append(optimality_lower_bound(nF, nf, h, a, p))
                reps.append(fixed_point_gap(nF, nf, h, a, c=1.0, p=p))
            if kind == "tc":
                for h, a in OPTIMALITY_TC_EXTRA:
                    reps.append(optimality_lower_bound(nF, nf, h, a, p))
    return reps


def order_fit_suite(seed: int = 0, p_values=(1, 2)) -> list:
    """Log-log slope of sup |id - J| against h for the TC inner region."""
    reps = []
    for p in p_values:
        res = h_sweep(SweepConfig(kind="tc", p=p), enforce_box=False)
        fit = res.fits[0.005]
        slope = fit.get("slope", math.nan)
        ctx = {"kind": "tc", "p": p, "alpha": 0.005, "region": "inner", "h": list(res.config.h)}
        det = dict(fit, failures=res.failures, sups=[r["sup"] for r in res.rows])
        reps.append(EstimateReport("order-fit-slope", abs(slope - p), 0.15, 0.15, ctx, det))
    return reps


def _cubic(x, a):
    return a * x + x**3


def _quadratic(x, a):
    return a * x + x * x


def rk_preservation_suite(seed: int = 0) -> list:
    reps = [rk_check_pf_conditions(classical_rk4(_cubic)),
            rk_check_pf_conditions(implicit_midpoint(_cubic))]
    # explicit Euler on a quadratic rhs must be rejected at f_xx^B
    try:
        rk_check_pf_conditions(explicit_euler(_quadratic))
        rejected, cond = False, None
    except PreconditionError as exc:
        rejected, cond = exc.condition == "f_xx^B", exc.condition
    reps.append(EstimateReport("rk-euler-rejected", 0.0 if rejected else 1.0, 0.0, 0.0,
                               {"method": "euler", "rhs": "a x + x^2"}, {"failed_condition": cond}))
    return reps


def classification_suite(seed: int = 0) -> list:
    reps = []
    # example21: no fixed points exactly when alpha^2 < 4 h^(2p)
    mism = 0
    cells = 0
    for p in (1, 2):
        f = get_map("example21", p).func
        for h in (0.1, 0.05):
            gap = 2 * h**p
            for a in np.linspace(-2.5 * gap, 2.5 * gap, 41):
                a = float(a)
                disc = a * a - 4 * h ** (2 * p)
                if abs(disc) < 1e-6 * h ** (2 * p):
                    continue        # tangency: double root, not a sign change
                none = len(find_fixed_points(f, h, a, (-1.0, 1.0))) == 0
                mism += none != (disc < 0)
                cells += 1
    reps.append(EstimateReport("example21-gap-law", float(mism), 0.0, 0.0,
                               {"p": [1, 2], "h": [0.1, 0.05]}, {"cells": cells}))
    wants = {"example25": "not-PF", "example26": "not-PF", "example27": "not-PF",
             "wiggins-counterexample": "none", "tc-phi": "TC", "pf-phi": "PF"}
    for name, want in wants.items():
        got = {classify_bifurcation(get_map(name).func, 0.1, tol).verdict for tol in (1e-7, 5e-8)}
        ok = len(got) == 1 and (("PF" not in got) if want == "not-PF" else got == {want})
        reps.append(EstimateReport(f"classify:{name}", 0.0 if ok else 1.0, 0.0, 0.0,
                                   {"map": name, "expected": want}, {"verdicts": sorted(got)}))
    return reps


def section5_suite(seed: int = 0) -> list:
    h, a = 1e-3, -0.5
    al = compute_alignment(h, a)
    sc = al.series_check
    reps = [EstimateReport("alpha-tilde-series", sc["alpha_tilde"], sc["tolerance"], 1 / 120,
                           {"h": h, "alpha": a}),
            EstimateReport("rho-series", sc["rho"], sc["tolerance"], 1 / 20, {"h": h, "alpha": a})]
    base = orbit_closeness_experiment(h, -1.0, a, 3000)
    pert = orbit_closeness_experiment(h, -1.0, a, 3000, 1e-7)
    ctx = {"h": h, "alpha": a, "x0": -1.0, "N": 3000}
    reps.append(EstimateReport("orbit-plateau", abs(base.plateau_ratio() - 1), 0.05, 0.05, ctx,
                               {"sup": base.sup, "argmax": base.argmax}))
    reps.append(EstimateReport("perturbation-sensitivity", pert.sup / base.sup, 10.0, 10.0,
                               dict(ctx, perturbation=1e-7), {"aligned_sup": base.sup,
                                                              "perturbed_sup": pert.sup},
                               sense="lower"))
    return reps


def zn_decay_suite(seed: int = 0, n_pairs: int = 10) -> list:
    reps = []
    rng = np.random.default_rng(seed)
    for kind in ("tc", "pf"):
        for p in (1, 2):
            for nf in catalog_pair(kind, p):
                for h in H_GRID:
                    reps.append(tc_zn_zero_decay_check(nf, h, 100_000))
        nF, nf = catalog_pair(kind, 1)
        a0 = nf.box.alpha0
        for _ in range(n_pairs):
            u, v = sorted(rng.uniform(-a0, 0.0, 2))
            for target in (nF, nf):
                for h in H_GRID:
                    reps.append(alpha_monotonicity_check(target, h, float(u), float(v), 100_000))
    return reps


SUITES = {
    "recursion": recursion_suite,
    "conjugacy-residual": conjugacy_residual_suite,
    "tc-envelopes": lambda seed=0: envelope_suite("tc", seed),
    "pf-envelopes": lambda seed=0: envelope_suite("pf", seed),
    "tc-bounds": lambda seed=0: bounds_suite("tc", seed),
    "pf-bounds": lambda seed=0: bounds_suite("pf", seed),
    "optimality": optimality_suite,
    "order-fit": order_fit_suite,
    "rk-preservation": rk_preservation_suite,
    "classification": classification_suite,
    "section5": section5_suite,
    "zn-decay": zn_decay_suite,
}


def run_suite(name: str, seed: int = 0) -> list:
    try:
        fn = SUITES[name]
    except KeyError:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}") from None
    return fn(seed=seed)
