"""Fixed points, branch diagrams and bifurcation classification of 1-D maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .maps import NormalForm, map_derivative, partial_derivative, DerivativeAccuracyError
from .reports import EstimateReport


class BracketError(ValueError):
    """A root was not bracketed by the interval the localization estimate guarantees."""


@dataclass(frozen=True)
class FixedPoint:
    x: float
    multiplier: float
    stability: str
    residual: float


class FixedPointList(list):
    """Sorted list of fixed points; ``continuum`` is set when map(x) - x vanishes identically."""

    continuum: bool = False


def stability_of(multiplier: float) -> str:
    if abs(multiplier) < 1 - 1e-10:
        return "attracting"
    if abs(multiplier) > 1 + 1e-10:
        return "repelling"
    return "neutral"


def _multiplier(fmap, h, x, alpha) -> float:
    try:
        return map_derivative(fmap, 1, h, x, alpha)
    except DerivativeAccuracyError:
        d = 1e-6 * max(1.0, abs(x))
        return (fmap(h, x + d, alpha) - fmap(h, x - d, alpha)) / (2 * d)


def make_fixed_point(fmap, h, x, alpha, multiplier=None) -> FixedPoint:
    m = _multiplier(fmap, h, x, alpha) if multiplier is None else multiplier
    return FixedPoint(float(x), float(m), stability_of(m), abs(float(fmap(h, x, alpha)) - float(x)))


def bisect_root(g: Callable[[float], float], lo: float, hi: float, glo=None, ghi=None) -> float:
    """Bisection down to adjacent doubles; returns the endpoint with smaller |g|."""
    glo = g(lo) if glo is None else glo
    ghi = g(hi) if ghi is None else ghi
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    if glo * ghi > 0:
        raise BracketError(f"no sign change on [{lo!r}, {hi!r}]")
    for _ in range(1100):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm < 0) == (glo < 0):
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    return lo if abs(glo) <= abs(ghi) else hi


def _newton_polish(g, x, lo, hi, steps=3):
    """A few secant-derivative Newton steps, kept only if they reduce |g| inside [lo, hi]."""
    gx = g(x)
    for _ in range(steps):
        d = 1e-7 * max(1.0, abs(x))
        slope = (g(x + d) - g(x - d)) / (2 * d)
        if slope == 0 or not math.isfinite(slope):
            break
        xn = x - gx / slope
        if not (lo <= xn <= hi):
            break
        gn = g(xn)
        if abs(gn) >= abs(gx):
            break
        x, gx = xn, gn
    return x


def _scan_values(fmap, h, alpha, xs):
    try:
        v = np.asarray(fmap(h, xs, alpha), dtype=float)
        if v.shape == xs.shape:
            return v - xs
    except Exception:
        pass
    return np.array([float(fmap(h, float(x), alpha)) - float(x) for x in xs])


def find_fixed_points(fmap, h: float, alpha: float, interval=(-1.0, 1.0),
                      n_scan: int = 2048, merge_tol: float = 1e-10) -> FixedPointList:
    """All sign changes of map(x) - x on an n_scan-subinterval grid, refined."""
    a, b = map(float, interval)
    xs = np.linspace(a, b, n_scan + 1)
    gv = _scan_values(fmap, h, alpha, xs)
    out = FixedPointList()
    scale = max(1.0, float(np.max(np.abs(xs))))
    if np.all(np.abs(gv) <= 1e-14 * scale):
        out.continuum = True
        return out

    g = lambda x: float(fmap(h, x, alpha)) - x
    roots = []
    for i in range(n_scan + 1):
        if gv[i] == 0.0:
            roots.append(float(xs[i]))
        if i < n_scan and gv[i] * gv[i + 1] < 0:
            r = bisect_root(g, float(xs[i]), float(xs[i + 1]), float(gv[i]), float(gv[i + 1]))
            roots.append(_newton_polish(g, r, float(xs[i]), float(xs[i + 1])))
    roots.sort()
    merged = []
    for r in roots:
        if merged and abs(r - merged[-1]) <= merge_tol:
            continue
        merged.append(r)
    out.extend(make_fixed_point(fmap, h, r, alpha) for r in merged)
    return out


# --------------------------------------------------------------------------
# nontrivial fixed points of normal forms
# --------------------------------------------------------------------------

def _reduced(nf: NormalForm, h, alpha):
    """(N(x) - x)/(h x): alpha + s x + x^2 eta (TC) or alpha + s x^2 + x^3 eta (PF)."""
    d = nf.degree
    return lambda x: alpha + nf.s * x ** (d - 1) + x**d * float(nf.tail(h, x, alpha))


def nontrivial_fixed_point(nf: NormalForm, h: float, alpha: float, side: int = -1) -> FixedPoint:
    """Nonzero fixed point of a normal form on the half-line sign(x) = side.

    TC: the root lies between -s(3/2)alpha and -s(6/7)alpha (which must
    have sign ``side``).  PF: requires s*alpha < 0 and the root lies in
    side*((4/5) sqrt|alpha|, sqrt(2|alpha|)).
    """
    q = _reduced(nf, h, alpha)
    if nf.kind == "tc":
        e1, e2 = -nf.s * 1.5 * alpha, -nf.s * (6 / 7) * alpha
        if alpha == 0 or np.sign(e1) != side:
            raise BracketError(f"no nonzero TC fixed point on side {side:+d} for alpha = {alpha!r}")
        names = ("-(3/2)alpha", "-(6/7)alpha")
    else:
        if not nf.s * alpha < 0:
            raise BracketError(f"no nonzero PF fixed point for s*alpha = {nf.s * alpha!r} >= 0")
        r = math.sqrt(abs(alpha))
        e1, e2 = side * math.sqrt(2) * r, side * 0.8 * r
        names = ("-sqrt(2 alpha)", "-(4/5)sqrt(alpha)") if side < 0 else ("sqrt(2 alpha)", "(4/5)sqrt(alpha)")
    lo, hi = sorted((e1, e2))
    qlo, qhi = q(lo), q(hi)
    if qlo * qhi > 0:
        raise BracketError(f"root not bracketed by ({names[0]}, {names[1]}) = ({e1:.6g}, {e2:.6g}); "
                           f"parameters lie outside the localization estimate's range")
    x = bisect_root(q, lo, hi, qlo, qhi)
    return make_fixed_point(nf, h, x, alpha, multiplier=float(nf.dx(h, x, alpha)))


def tc_nonzero_fixed_point(nf: NormalForm, h: float, alpha: float) -> FixedPoint:
    """The fixed point omega_- of a TC normal form for 0 < alpha <= alpha0."""
    if nf.kind != "tc":
        raise ValueError("expected a TC normal form")
    return nontrivial_fixed_point(nf, h, alpha, side=-1 if nf.s * alpha > 0 else 1)


def pf_negative_fixed_point(nf: NormalForm, h: float, alpha: float) -> FixedPoint:
    """The negative fixed point omega_- of a PF normal form."""
    if nf.kind != "pf":
        raise ValueError("expected a PF normal form")
    return nontrivial_fixed_point(nf, h, alpha, side=-1)


# --------------------------------------------------------------------------
# branch diagrams
# --------------------------------------------------------------------------

@dataclass
class Branch:
    branch_id: int
    alphas: list = field(default_factory=list)
    xs: list = field(default_factory=list)
    multipliers: list = field(default_factory=list)
    stabilities: list = field(default_factory=list)

    def crossings(self):
        """(alpha, x) where the multiplier crosses 1 along the branch."""
        out = []
        m = np.asarray(self.multipliers) - 1.0
        for i in range(len(m) - 1):
            if m[i] == 0 or m[i] * m[i + 1] < 0:
                out.append((self.alphas[i], self.xs[i]))
        return out


@dataclass
class BranchDiagram:
    alpha_grid: np.ndarray
    branches: list
    window: tuple
    counts: list = field(default_factory=list)
    continuum_alphas: list = field(default_factory=list)

    def branch_points(self):
        return [(b.branch_id, a, x) for b in self.branches for a, x in b.crossings()]

    def points_at(self, i: int):
        a = self.alpha_grid[i]
        return sorted(x for b in self.branches for aa, x in zip(b.alphas, b.xs) if aa == a)

    def to_rows(self):
        rows = []
        for b in self.branches:
            for a, x, m, s in zip(b.alphas, b.xs, b.multipliers, b.stabilities):
                rows.append((a, x, m, s, b.branch_id))
        rows.sort(key=lambda r: (r[4], r[0]))
        return rows


def trace_branches(fmap, h: float, alpha_range, n_alpha: int, x_window=(-1.0, 1.0),
                   n_scan: int = 2048) -> BranchDiagram:
    """Fixed points on an alpha grid, linked greedily by nearest x.

    A point joins a branch only if it is within the jump cap
    10*max(dx_scan, dalpha) of the branch's last point.
    """
    if n_alpha < 3:
        raise ValueError("n_alpha must be at least 3")
    grid = np.linspace(alpha_range[0], alpha_range[1], n_alpha)
    dx = (x_window[1] - x_window[0]) / n_scan
    cap = 10 * max(dx, abs(grid[1] - grid[0]))
    branches: list[Branch] = []
    active: list[Branch] = []
    counts = []
    cont = []
    for a in grid:
        pts = find_fixed_points(fmap, h, float(a), x_window, n_scan)
        if pts.continuum:
            cont.append(float(a))
        counts.append(len(pts))
        pairs = sorted((abs(b.xs[-1] - p.x), bi, pi) for bi, b in enumerate(active)
                       for pi, p in enumerate(pts) if abs(b.xs[-1] - p.x) <= cap)
        used_b, used_p = set(), set()
        for _, bi, pi in pairs:
            if bi in used_b or pi in used_p:
                continue
            used_b.add(bi)
            used_p.add(pi)
            b, p = active[bi], pts[pi]
            b.alphas.append(float(a)); b.xs.append(p.x)
            b.multipliers.append(p.multiplier); b.stabilities.append(p.stability)
        new_active = [b for bi, b in enumerate(active) if bi in used_b]
        for pi, p in enumerate(pts):
            if pi not in used_p:
                b = Branch(len(branches), [float(a)], [p.x], [p.multiplier], [p.stability])
                branches.append(b)
                new_active.append(b)
        active = new_active
    return BranchDiagram(grid, branches, tuple(x_window), counts, cont)


# --------------------------------------------------------------------------
# classification at the origin
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BifClass:
    verdict: str
    evidence: dict
    derivatives: dict
    discriminant: float

    def to_dict(self):
        return {"verdict": self.verdict, "conditions": dict(self.evidence),
                "derivatives": dict(self.derivatives), "discriminant": self.discriminant}


def point_derivatives(fmap, h) -> dict:
    g = lambda x, a: fmap(h, x, a)
    pd = lambda nx, na: partial_derivative(g, 0.0, 0.0, nx, na)
    return {"g": float(g(0.0, 0.0)), "g_alpha": pd(0, 1), "g_x": pd(1, 0), "g_xx": pd(2, 0),
            "g_xalpha": pd(1, 1), "g_alphaalpha": pd(0, 2), "g_xxx": pd(3, 0)}


def classify_bifurcation(fmap, h: float = 0.1, tol: float = 1e-7) -> BifClass:
    """TC / PF / fold / none at (x, alpha) = (0, 0) from point conditions."""
    D = point_derivatives(fmap, h)
    zero = lambda v: abs(v) <= tol
    disc = D["g_xalpha"] ** 2 - D["g_xx"] * D["g_alphaalpha"]
    ev = {
        "g=0": zero(D["g"]),
        "g_alpha=0": zero(D["g_alpha"]),
        "g_x=1": zero(D["g_x"] - 1),
        "g_xx!=0": not zero(D["g_xx"]),
        "g_xx=0": zero(D["g_xx"]),
        "g_xxx!=0": not zero(D["g_xxx"]),
        "g_xalpha!=0": not zero(D["g_xalpha"]),
        "discriminant>0": disc > tol,
    }
    base = ev["g=0"] and ev["g_x=1"]
    if base and ev["g_alpha=0"] and ev["g_xx=0"] and ev["g_xxx!=0"] and ev["g_xalpha!=0"]:
        verdict = "PF"
    elif base and ev["g_alpha=0"] and ev["g_xx!=0"] and ev["discriminant>0"]:
        verdict = "TC"
    elif base and not ev["g_alpha=0"] and ev["g_xx!=0"]:
        verdict = "fold"
    else:
        verdict = "none"
    return BifClass(verdict, ev, D, disc)


def verify_asymmetric_pf_branches(fmap, h: float, alpha0_probe: float, n_alpha: int = 40,
                                  window_factor: float = 3.0) -> EstimateReport:
    """Fit the three fixed-point branches on the side predicted by sign(g_xxx g_xalpha).

    Reports c0 = max |rho_0|/|alpha|, c1 = min |rho_pm|/sqrt|alpha|,
    c2 = max |rho_pm|/sqrt|alpha| and the log-log slope of |rho_pm|.
    measured = number of alphas whose branch count differs from 3.
    """
    cls = classify_bifurcation(fmap, h)
    if cls.verdict != "PF":
        raise ValueError(f"map is not a PF point (verdict {cls.verdict})")
    D = cls.derivatives
    side = -1.0 if D["g_xxx"] * D["g_xalpha"] > 0 else 1.0
    # |rho_pm| ~ sqrt(6 |g_xalpha| alpha / |g_xxx|)
    w = window_factor * math.sqrt(6 * abs(D["g_xalpha"]) * alpha0_probe / abs(D["g_xxx"]))
    alphas = side * np.geomspace(alpha0_probe * 1e-2, alpha0_probe, n_alpha)
    c0, c1, c2 = 0.0, math.inf, 0.0
    bad = 0
    la, lr = [], []
    for a in alphas:
        pts = find_fixed_points(fmap, h, float(a), (-w, w), 4096)
        if len(pts) != 3:
            bad += 1
            continue
        xs = sorted((p.x for p in pts), key=abs)
        r0, rp = xs[0], xs[1:]
        c0 = max(c0, abs(r0) / abs(a))
        for r in rp:
            c1 = min(c1, abs(r) / math.sqrt(abs(a)))
            c2 = max(c2, abs(r) / math.sqrt(abs(a)))
            la.append(math.log(abs(a)))
            lr.append(math.log(abs(r)))
    slope = float(np.polyfit(la, lr, 1)[0]) if len(la) >= 2 else float("nan")
    return EstimateReport("asymmetric-pf-branches", float(bad), 0.0, 0.0,
                          context={"h": h, "alpha0_probe": alpha0_probe, "side": side},
                          details={"c0": c0, "c1": c1, "c2": c2, "slope": slope,
                                   "n_alpha": n_alpha})
