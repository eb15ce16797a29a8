"""Bounding sequences, closeness measurements and the explicit-constant checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .conjugacy import ConjugacyMap, build_conjugacy, inner_start, outer_start, region_grid
from .fixedpoints import nontrivial_fixed_point
from .maps import NormalForm
from .reports import EstimateReport

GOLDEN = (math.sqrt(5) - 1) / 2


# --------------------------------------------------------------------------
# envelopes
# --------------------------------------------------------------------------

def _growth(h, alpha, n):
    """(1 + h alpha)^n computed as exp(n log1p(h alpha))."""
    with np.errstate(over="ignore"):     # inf is the correct limit for the envelopes
        return np.exp(np.asarray(n, dtype=float) * np.log1p(h * alpha))


def _ret(v):
    return float(v) if np.ndim(v) == 0 else v


def tc_envelope_a(h, alpha, n):
    """-(3/4) alpha (1+h alpha)^(n+1) / (2 + (1+h alpha)^n)."""
    r = _growth(h, alpha, n)
    return _ret(-0.75 * alpha * (1 + h * alpha) / (1 + 2 / r))


def tc_envelope_b(h, alpha, n):
    """-2 alpha (1+h alpha)^(n+1) / (-1 + alpha + (1+h alpha)^n)."""
    r = _growth(h, alpha, n)
    return _ret(-2 * alpha * (1 + h * alpha) / (1 + (alpha - 1) / r))


def pf_envelope_a(h, alpha, n):
    """-(4/5) sqrt(alpha) (1+h alpha)^n / sqrt(5 + (1+h alpha)^(2n))."""
    r = _growth(h, alpha, n)
    return _ret(-0.8 * math.sqrt(alpha) / np.sqrt(1 + 5 / r**2))


def pf_envelope_b(h, alpha, n):
    """-2 sqrt(alpha) (1+h alpha)^n / sqrt(alpha - 1 + (1+h alpha)^(2n))."""
    r = _growth(h, alpha, n)
    return _ret(-2 * math.sqrt(alpha) / np.sqrt(1 + (alpha - 1) / r**2))


ENVELOPES = {"a_TC": tc_envelope_a, "b_TC": tc_envelope_b, "a_PF": pf_envelope_a, "b_PF": pf_envelope_b}


@dataclass(frozen=True)
class EnvelopeSeq:
    kind: str
    values: np.ndarray
    params: tuple

    @classmethod
    def build(cls, kind: str, h: float, alpha: float, n_max: int) -> "EnvelopeSeq":
        return cls(kind, np.asarray(ENVELOPES[kind](h, alpha, np.arange(n_max + 1))), (h, alpha))


# --------------------------------------------------------------------------
# the rational recursion z -> z / (1 + a q z^q)^(1/q)
# --------------------------------------------------------------------------

def recursion_closed_form(z0, a, q, n):
    """z0 / (1 + n a q z0^q)^(1/q)."""
    n = np.asarray(n, dtype=float)
    return _ret(z0 / (1 + n * a * q * z0**q) ** (1.0 / q))


def recursion_iterate(z0: float, a: float, q: int, n: int) -> np.ndarray:
    """z_0..z_n of z_{k+1} = z_k / (1 + a q z_k^q)^(1/q)."""
    out = np.empty(n + 1)
    z = out[0] = z0
    for k in range(n):
        z = z / (1 + a * q * z**q) ** (1.0 / q)
        out[k + 1] = z
    return out


# --------------------------------------------------------------------------
# Gronwall-type sums
# --------------------------------------------------------------------------

def gronwall_series(nf_Phi: NormalForm, seq, h: float, alpha: float, omega_exponent: int) -> np.ndarray:
    """S_n = h sum_{k<=n} |x_k|^w prod_{j=k..n} (N_Phi)_x(x_j), for every n."""
    seq = np.ascontiguousarray(np.asarray(seq, dtype=float))
    if nf_Phi.tail.compiled:
        return K.gronwall(K.pack(nf_Phi, h), float(h), float(alpha), seq, float(omega_exponent))
    out = np.empty(len(seq))
    s = 0.0
    for i, x in enumerate(seq):
        s = float(nf_Phi.dx(h, x, alpha)) * (s + h * abs(x) ** omega_exponent)
        out[i] = s
    return out


def gronwall_sum(nf_Phi: NormalForm, seq, h: float, alpha: float, n: int, omega_exponent: int) -> float:
    return float(gronwall_series(nf_Phi, np.asarray(seq)[: n + 1], h, alpha, omega_exponent)[n])


# --------------------------------------------------------------------------
# sup |id - J|
# --------------------------------------------------------------------------

def _golden_max(f, a, b, iters=60):
    """Maximize a unimodal f on [a, b] by golden-section search."""
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= 1e-15 * max(1.0, abs(a)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return max(fc, fd)


def sup_id_minus_J_detail(J: ConjugacyMap, grid_size: int = 4096, interval=None) -> dict:
    """Grid maximum of |x - J(x)| refined by golden section around the best node."""
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    xs = region_grid(J, grid_size, interval)
    vals, snapped, _ = J.evaluate(xs)
    diff = np.abs(xs - vals)
    i = int(np.argmax(diff))
    best = float(diff[i])
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    f = lambda x: abs(x - J(x))
    refined = _golden_max(f, float(lo), float(hi))
    return {"sup": max(best, refined), "grid_max": best, "argmax": float(xs[i]),
            "snapped": int(snapped.sum()), "grid_size": grid_size}


def sup_id_minus_J(J: ConjugacyMap, grid_size: int = 4096, interval=None) -> float:
    return sup_id_minus_J_detail(J, grid_size, interval)["sup"]


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------

def tail_difference_constant(nf_Phi: NormalForm, nf_phi: NormalForm, p: int, n: int = 41) -> float:
    """Empirical c: max of |N_Phi - N_phi| / (h^(p+1) |x|^(d+1)) on a box grid.

    Equivalent to max |eta_Phi - eta_phi| / h^p, which is evaluated
    directly to avoid cancellation in the difference of the maps.
    """
    box = nf_phi.box
    hs = np.linspace(box.h0, 0, n, endpoint=False)[::-1]
    xs = np.linspace(-box.eps0, box.eps0, n)
    als = np.linspace(-box.alpha0, box.alpha0, n)
    H, X, A = np.meshgrid(hs, xs, als, indexing="ij")
    d = np.abs(np.asarray(nf_Phi.tail(H, X, A), dtype=float) - np.asarray(nf_phi.tail(H, X, A), dtype=float))
    return float(np.max(d / H**p))


def infer_p(nf_phi: NormalForm, default: int = 1) -> int:
    return nf_phi.tail.p if nf_phi.tail.kind == "hp_power" else default


def _ctx(nf, h, alpha, p, region=None, **extra):
    ctx = {"kind": nf.kind, "h": h, "alpha": alpha, "p": p}
    if region is not None:
        ctx["region"] = region
    ctx.update(extra)
    return ctx


def _omegas(nf_Phi, nf_phi, h, alpha):
    side = -1
    return (nontrivial_fixed_point(nf_phi, h, alpha, side).x,
            nontrivial_fixed_point(nf_Phi, h, alpha, side).x)


def fixed_point_gap(nf_Phi: NormalForm, nf_phi: NormalForm, h: float, alpha: float,
                    c: float | None = None, p: int | None = None) -> EstimateReport:
    """|omega_phi,- - omega_Phi,-| against (27/4) c h^p alpha^2 (TC) or 8 c h^p alpha (PF)."""
    p = infer_p(nf_phi) if p is None else p
    c = tail_difference_constant(nf_Phi, nf_phi, p) if c is None else c
    wf, wF = _omegas(nf_Phi, nf_phi, h, alpha)
    gap = abs(wf - wF)
    if nf_phi.kind == "tc":
        const, bound = 27 / 4, 27 / 4 * c * h**p * alpha**2
    else:
        const, bound = 8.0, 8 * c * h**p * alpha
    return EstimateReport(f"{nf_phi.kind}-fixed-point-gap", gap, bound, const,
                          _ctx(nf_phi, h, alpha, p, c=c), {"omega_phi": wf, "omega_Phi": wF})


def optimality_lower_bound(nf_Phi: NormalForm, nf_phi: NormalForm, h: float, alpha: float,
                           p: int | None = None) -> EstimateReport:
    """Gap of the catalog pair >= h^p alpha^2 (TC) or (1/5) h^p alpha (PF)."""
    p = infer_p(nf_phi) if p is None else p
    wf, wF = _omegas(nf_Phi, nf_phi, h, alpha)
    gap = abs(wf - wF)
    if nf_phi.kind == "tc":
        const, floor = 1.0, h**p * alpha**2
    else:
        const, floor = 0.2, 0.2 * h**p * alpha
    return EstimateReport(f"{nf_phi.kind}-fixed-point-gap-lower", gap, floor, const,
                          _ctx(nf_phi, h, alpha, p), {"omega_phi": wf, "omega_Phi": wF}, sense="lower")


def region_bound_reports(nf_Phi: NormalForm, nf_phi: NormalForm, h: float, alpha: float,
                         p: int | None = None, c: float | None = None, grid_size: int = 4096,
                         enforce_box: bool = True, include_outer_positive: bool = True) -> list:
    """Every explicit-constant bound that applies at (h, alpha) on x <= 0."""
    p = infer_p(nf_phi) if p is None else p
    c = tail_difference_constant(nf_Phi, nf_phi, p) if c is None else c
    kind, Kb = nf_phi.kind, nf_phi.K
    hp = h**p
    reps = []

    def rep(name, meas, bound, const, region, det):
        reps.append(EstimateReport(name, meas, bound, const, _ctx(nf_phi, h, alpha, p, region, c=c), det))

    if alpha > 0:
        J = build_conjugacy(nf_Phi, nf_phi, h, alpha, "inner", "lower", enforce_box=enforce_box)
        x0 = inner_start(kind, alpha, -1)
        lo, hi = J.interval
        far = sup_id_minus_J_detail(J, grid_size, (lo, x0))
        near = sup_id_minus_J_detail(J, grid_size, (x0, hi))
        if kind == "tc":
            rep("tc-inner", far["sup"], 350 * c * hp * alpha**2, 350.0, "inner:(omega,x0]", far)
            rep("tc-inner-near-zero", near["sup"], c / 3 * hp * alpha**2, 1 / 3, "inner:(x0,0)", near)
        else:
            rep("pf-inner", far["sup"], 1988 * c * hp * alpha, 1988.0, "inner:(omega,x0]", far)
            rep("pf-inner-near-zero", near["sup"], c / 8 * hp * alpha, 1 / 8, "inner:(x0,0)", near)
        reps.append(fixed_point_gap(nf_Phi, nf_phi, h, alpha, c, p))
        if include_outer_positive:
            Jo = build_conjugacy(nf_Phi, nf_phi, h, alpha, "outer", "lower", enforce_box=enforce_box)
            d = sup_id_minus_J_detail(Jo, grid_size)
            const = 130.0 if kind == "tc" else 3841.0
            rep(f"{kind}-outer-positive", d["sup"], const * c * hp, const, "outer", d)
    else:
        Jo = build_conjugacy(nf_Phi, nf_phi, h, alpha, "outer", "lower", enforce_box=enforce_box)
        d = sup_id_minus_J_detail(Jo, grid_size)
        const = 12.0 if kind == "tc" else 2 + 3 / Kb**2
        rep(f"{kind}-outer", d["sup"], const * c * hp, const, "outer", d)
    return reps


# --------------------------------------------------------------------------
# z_n(0) decay and alpha monotonicity
# --------------------------------------------------------------------------

def _z_orbit(nf, h, alpha, z0, n):
    if nf.tail.compiled:
        return K.orbit(K.pack(nf, h), float(h), float(alpha), float(z0), int(n))
    out = np.empty(n + 1)
    z = out[0] = z0
    for i in range(n):
        z = float(nf(h, z, alpha))
        out[i + 1] = z
    return out


def tc_zn_zero_decay_check(nf_phi: NormalForm, h: float, n_max: int, z0: float | None = None) -> EstimateReport:
    """z_n(0) >= -2/(nh) (TC, n > 1/h) or >= -2/sqrt(nh) (PF, n >= 16K^2/h); also z_n >= z_0.

    measured = max over checked n of (bound_n - z_n) clipped below at the
    monotonicity slack; passes iff every z_n lies above its bound.
    """
    z0 = outer_start(nf_phi, -1) if z0 is None else z0
    if nf_phi.kind == "tc":
        n0 = math.floor(1 / h) + 1
    else:
        n0 = math.floor(16 * nf_phi.K**2 / h)
    if n_max < n0:
        raise ValueError(f"n_max must be at least {n0}")
    z = _z_orbit(nf_phi, h, 0.0, z0, n_max)
    n = np.arange(n0, n_max + 1)
    bound = -2 / (n * h) if nf_phi.kind == "tc" else -2 / np.sqrt(n * h)
    excess = bound - z[n0:]          # must be <= 0
    mono = z0 - z                    # must be <= 0
    bad = np.nonzero(excess > 0)[0]
    first = int(n[bad[0]]) if len(bad) else None
    measured = float(max(np.max(excess), np.max(mono)))
    return EstimateReport(f"{nf_phi.kind}-zn-zero-decay", measured, 0.0, 2.0,
                          {"kind": nf_phi.kind, "h": h, "n_max": n_max, "n_start": n0},
                          {"first_failure": first, "z_final": float(z[-1]),
                           "monotone_above_z0": bool(np.all(mono <= 0))})


def alpha_monotonicity_check(nf_phi: NormalForm, h: float, alpha: float, beta: float,
                             n_max: int, z0: float | None = None) -> EstimateReport:
    """0 > z_n(alpha) >= z_n(beta) for n <= n_max, where alpha <= beta <= 0."""
    if not alpha <= beta <= 0:
        raise ValueError("need alpha <= beta <= 0")
    z0 = outer_start(nf_phi, -1) if z0 is None else z0
    za = _z_orbit(nf_phi, h, alpha, z0, n_max)
    zb = _z_orbit(nf_phi, h, beta, z0, n_max)
    # violations: za >= 0 or za < zb
    measured = float(max(np.max(za), np.max(zb - za)))
    bad = np.nonzero((za >= 0) | (za < zb))[0]
    return EstimateReport(f"{nf_phi.kind}-alpha-monotonicity", measured, 0.0, 0.0,
                          {"kind": nf_phi.kind, "h": h, "alpha": alpha, "beta": beta, "n_max": n_max},
                          {"first_failure": int(bad[0]) if len(bad) else None,
                           "strict_after_0": bool(np.all(za[1:] < zb[1:])) if alpha < beta else None})


# --------------------------------------------------------------------------
# order fitting
# --------------------------------------------------------------------------

def order_fit(h_values, sup_values):
    """Least-squares slope/intercept of log(sup) against log(h), with r^2."""
    h = np.asarray(h_values, dtype=float)
    s = np.asarray(sup_values, dtype=float)
    if len(h) < 4 or len(h) != len(s):
        raise ValueError("order_fit needs at least 4 (h, sup) pairs")
    if np.any(h <= 0) or np.any(s <= 0):
        raise ValueError("order_fit needs positive h and sup values")
    lx, ly = np.log(h), np.log(s)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), r2


# --------------------------------------------------------------------------
# envelope sandwich suites
# --------------------------------------------------------------------------

SANDWICH_N_MAX = 2_000_000
SANDWICH_TOL = 1e-13


def random_catalog_tail(rng: np.random.Generator):
    """A tail drawn from the built-in catalog, scaled so that K = 1 holds."""
    from .maps import Tail
    kind = rng.choice(["zero", "hp_power", "sin", "const"])
    coef = float(rng.uniform(-1.0, 1.0))
    if kind == "hp_power":
        return Tail("hp_power", coef, int(rng.integers(1, 4)))
    if kind == "zero":
        return Tail("zero")
    return Tail(str(kind), coef)


def sample_box_params(kind: str, n: int, seed: int):
    """n draws of (h, alpha, tail_Phi, tail_phi), log-uniform over the top decade of the box."""
    from .maps import make_pf_normal_form, make_tc_normal_form
    rng = np.random.default_rng(seed)
    make = make_tc_normal_form if kind == "tc" else make_pf_normal_form
    out = []
    for _ in range(n):
        tF, tf = random_catalog_tail(rng), random_catalog_tail(rng)
        nF, nf = make(tF, check=False), make(tf, check=False)
        box = nf.box
        h = float(box.h0 * 10 ** rng.uniform(-1.0, 0.0))
        a = float(box.alpha0 * 10 ** rng.uniform(-1.0, 0.0))
        out.append((h, a, nF, nf))
    return out


def _pack_samples(samples):
    hs = np.array([s[0] for s in samples])
    als = np.array([s[1] for s in samples])
    pFs = np.array([K.pack(s[3], s[0]) for s in samples])   # source: N_phi
    pGs = np.array([K.pack(s[2], s[0]) for s in samples])   # target: N_Phi
    wF = np.array([nontrivial_fixed_point(s[3], s[0], s[1], -1).x for s in samples])
    wG = np.array([nontrivial_fixed_point(s[2], s[0], s[1], -1).x for s in samples])
    return hs, als, pFs, pGs, wF, wG


def _suite_report(name, kind, res, seed, n_samples, extra_col=None):
    viol = int(res[:, 0].sum() + res[:, 3].sum())
    bad = np.nonzero(res[:, 0] + res[:, 3] > 0)[0]
    det = {"samples": n_samples, "violating_samples": int(len(bad)),
           "envelope_violations": int(res[:, 0].sum()), "split_violations": int(res[:, 3].sum()),
           "worst_margin": float(res[:, 2].max()), "max_steps": int(res[:, 1].max()),
           "truncated_at_n_max": int(np.sum(res[:, 1] >= SANDWICH_N_MAX))}
    if len(bad):
        det["first_bad_sample"] = int(bad[0])
    return EstimateReport(name, float(viol), 0.0, 0.0, {"kind": kind, "seed": seed}, det)


def envelope_sandwich_inner(kind: str, n_samples: int = 500, seed: int = 0) -> EstimateReport:
    """max(x_n, J(x_n)) < a_n for all n, and the split-index bound, on random box samples.

    J(x_n) is N_Phi^n(x0) because the anchor fixes x0.  measured is the
    total number of violations (bound 0).
    """
    samples = sample_box_params(kind, n_samples, seed)
    hs, als, pFs, pGs, wF, wG = _pack_samples(samples)
    res = np.zeros((n_samples, 5))
    K.sandwich_inner(pFs, pGs, hs, als, wF, wG, kind == "tc", SANDWICH_N_MAX, SANDWICH_TOL, res)
    return _suite_report(f"{kind}-envelope-a", kind, res, seed, n_samples)


def envelope_sandwich_outer(kind: str, n_samples: int = 500, seed: int = 0) -> EstimateReport:
    """b_n <= min(z_n, J(z_n)) for all n with z0 = -eps0, on random box samples (alpha > 0)."""
    samples = sample_box_params(kind, n_samples, seed)
    hs, als, pFs, pGs, wF, wG = _pack_samples(samples)
    z0s = np.array([outer_start(s[3], -1) for s in samples])
    res = np.zeros((n_samples, 5))
    K.sandwich_outer(pFs, pGs, hs, als, z0s, wF, wG, kind == "tc", SANDWICH_N_MAX, SANDWICH_TOL, res)
    return _suite_report(f"{kind}-envelope-b", kind, res, seed, n_samples)
