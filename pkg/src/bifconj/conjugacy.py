"""Fundamental-domain construction of the conjugacy J between two normal forms.

``F = N_phi`` is the source map and ``G = N_Phi`` the target; J solves
J(F(x)) = G(J(x)).  J is prescribed linearly on one fundamental domain
[a, F(a)] (the anchor) and extended to every other domain by the
conjugacy equation itself: x is moved into the anchor domain by k
applications of F^{-1} (or -k of F), then the anchor image is carried
back with G^k (or G^{-1}).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .fixedpoints import BracketError, bisect_root, nontrivial_fixed_point
from .maps import BoxViolation, NormalForm

N_MAX = 10**6


def monotone_inverse(nf: NormalForm, h: float, alpha: float, y: float, bracket=None) -> float:
    """The unique x with nf(h, x, alpha) = y, by bisection on the increasing branch."""
    y = float(y)
    if y == 0.0:
        return 0.0
    if bracket is None:
        L = max(2 * nf.box.eps0, 2 * abs(y))
        bracket = (-L, L)
    lo, hi = map(float, bracket)
    g = lambda x: float(nf(h, x, alpha)) - y
    glo, ghi = g(lo), g(hi)
    if glo > 0 or ghi < 0:
        raise BracketError(f"y = {y!r} is outside the image of the map on [{lo:.6g}, {hi:.6g}]")
    # Newton from y is fast near the identity; bisection keeps it honest
    x = y
    for _ in range(60):
        gx = g(x)
        if gx == 0.0:
            return x
        if gx < 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        dx = float(nf.dx(h, x, alpha))
        xn = x - gx / dx if dx > 0 else 0.5 * (lo + hi)
        if not (lo <= xn <= hi):
            xn = 0.5 * (lo + hi)
        if xn == x:
            break
        x = xn
    glo, ghi = g(lo), g(hi)
    if glo * ghi < 0 and abs(g(x)) > 1e-14:
        x = bisect_root(g, lo, hi, glo, ghi)
    return x


# --------------------------------------------------------------------------
# sequences
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FundamentalSequences:
    """Orbit sequences delimiting fundamental domains.

    ``x_seq`` is the forward orbit of x0, ``y_seq`` the backward orbit
    (y_0 = x0, y_{-1} = x_1 by construction), ``z_seq`` the outer orbit
    of z0 toward the inner fixed point.
    """

    x_seq: np.ndarray
    y_seq: np.ndarray
    z_seq: np.ndarray
    x0: float
    z0: float
    limits: tuple
    truncated: bool = False

    @property
    def y_minus1(self) -> float:
        return float(self.x_seq[1])


def _side(half_plane) -> int:
    if half_plane in ("lower", "x<=0", -1, "-"):
        return -1
    if half_plane in ("upper", "x>0", 1, "+"):
        return 1
    raise ValueError(f"half_plane must be 'lower' or 'upper', got {half_plane!r}")


def _orbit(nf, h, alpha, x0, limit, tol, n_max, forward) -> np.ndarray:
    if nf.tail.compiled:
        return K.orbit_until(K.pack(nf, h), h, alpha, x0, limit, tol, n_max, forward)
    out = [x0]
    x = x0
    while len(out) <= n_max and abs(x - limit) >= tol:
        x = float(nf(h, x, alpha)) if forward else monotone_inverse(nf, h, alpha, x)
        out.append(x)
    return np.array(out)


def _omega(nf, h, alpha, side):
    try:
        return nontrivial_fixed_point(nf, h, alpha, side).x
    except BracketError:
        return None


def inner_start(kind: str, alpha: float, side: int = -1) -> float:
    return side * (abs(alpha) / 3 if kind == "tc" else math.sqrt(abs(alpha) / 8))


def inner_sequences(nf_phi: NormalForm, h: float, alpha: float, kind: str | None = None,
                    half_plane="lower", n_max: int = N_MAX, tol: float = 1e-14,
                    enforce_box: bool = True) -> FundamentalSequences:
    """x_n = N_phi^n(x0) and y_n = N_phi^{-n}(x0) between 0 and the nonzero fixed point."""
    kind = kind or nf_phi.kind
    if kind != nf_phi.kind:
        raise ValueError(f"kind {kind!r} does not match normal form kind {nf_phi.kind!r}")
    if enforce_box:
        nf_phi.check_params(h, alpha)
    side = _side(half_plane)
    w = _omega(nf_phi, h, alpha, side)
    if w is None:
        raise ValueError(f"inner region is empty for alpha = {alpha!r} on the {half_plane} half-plane")
    x0 = inner_start(kind, alpha, side)
    x1 = float(nf_phi(h, x0, alpha))
    towards_w = (x1 - x0) * (w - x0) > 0
    if x1 == x0 or (side < 0 and alpha > 0 and not x1 < x0):
        raise BoxViolation("x1 < x0", "monotonicity of the inner sequence fails; parameters outside the box")
    lim_f, lim_b = (w, 0.0) if towards_w else (0.0, w)
    xs = _orbit(nf_phi, h, alpha, x0, lim_f, tol, n_max, True)
    ys = _orbit(nf_phi, h, alpha, x0, lim_b, tol, n_max, False)
    trunc = len(xs) > n_max or len(ys) > n_max
    return FundamentalSequences(xs, ys, np.empty(0), x0, float("nan"), (lim_f, lim_b), trunc)


def outer_start(nf: NormalForm, side: int = -1) -> float:
    return side * nf.box.eps0


def _check_z0(nf, z0):
    K_ = nf.K
    lo = 2 * nf.box.alpha0 if nf.kind == "tc" else math.sqrt(2 * nf.box.alpha0)
    if not (lo < abs(z0) < 1 / (2 * K_)):
        name = "2*alpha0 < |z0| < 1/(2K)" if nf.kind == "tc" else "sqrt(2*alpha0) < |z0| < 1/(2K)"
        raise BoxViolation(name, f"z0 = {z0!r}")


def outer_sequence(nf_phi: NormalForm, h: float, alpha: float, z0: float | None = None,
                   half_plane="lower", n_max: int = N_MAX, tol: float = 1e-14,
                   enforce_box: bool = True) -> FundamentalSequences:
    """Orbit of z0 toward the inner fixed point (the nonzero one if present, else 0).

    When the map pushes z0 outward (repelling inner end, only possible on
    the upper half-plane) the backward orbit is returned instead.
    """
    side = _side(half_plane)
    z0 = outer_start(nf_phi, side) if z0 is None else float(z0)
    if enforce_box:
        nf_phi.check_params(h, alpha)
        _check_z0(nf_phi, z0)
    w = _omega(nf_phi, h, alpha, side)
    e = 0.0 if w is None else w
    z1 = float(nf_phi(h, z0, alpha))
    inward = (z1 - z0) * (e - z0) > 0
    if side < 0 and not z1 > z0:
        raise BoxViolation("z0 < z1", "outer sequence is not increasing; parameters outside the box")
    zs = _orbit(nf_phi, h, alpha, z0, e, tol, n_max, inward)
    return FundamentalSequences(np.empty(0), np.empty(0), zs, float("nan"), z0, (e,), len(zs) > n_max)


# --------------------------------------------------------------------------
# the conjugacy
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConjugacyMap:
    nf_Phi: NormalForm
    nf_phi: NormalForm
    h: float
    alpha: float
    region: str
    half_plane: str
    interval: tuple          # nominal region [lo, hi]
    anchor: float            # a; anchor domain is between a and F(a)
    anchor_image: float      # J(a)
    anchor_F: float          # F(a)
    anchor_GJ: float         # G(J(a)) = J(F(a))
    direction: int           # F moves points in this direction
    attracting: tuple        # (fixed point of F, of G) in `direction`, NaN if none
    repelling: tuple         # (fixed point of F, of G) opposite `direction`, NaN if none
    n_max: int = N_MAX
    mirrored: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def compiled(self) -> bool:
        return self.nf_Phi.tail.compiled and self.nf_phi.tail.compiled

    @property
    def domain(self) -> tuple:
        """Closed interval on which J may be evaluated (may extend past the region)."""
        ends = [v for v in (self.attracting[0], self.repelling[0]) if not math.isnan(v)]
        lo, hi = self.interval
        if self.region == "outer":
            side = 1 if self.half_plane == "upper" else -1
            return (-math.inf, hi) if side < 0 else (lo, math.inf)
        return (min(ends + [lo]), max(ends + [hi]))

    def _check(self, xs):
        lo, hi = self.domain
        tol = 1e-12
        if np.any(xs < lo - tol) or np.any(xs > hi + tol):
            raise ValueError(f"x outside the conjugacy domain [{lo:.6g}, {hi:.6g}]")

    def evaluate(self, xs, check: bool = True):
        """J on an array; returns (values, snapped flags, domain depth)."""
        xs = np.ascontiguousarray(np.atleast_1d(np.asarray(xs, dtype=float)))
        if check:
            self._check(xs)
        out = np.empty_like(xs)
        snapped = np.zeros(xs.shape, dtype=np.bool_)
        depth = np.zeros(xs.shape, dtype=np.int64)
        if self.compiled:
            K.conj_eval(xs, K.pack(self.nf_phi, self.h), K.pack(self.nf_Phi, self.h), float(self.h), float(self.alpha),
                        self.anchor, self.anchor_F, self.anchor_image, self.anchor_GJ,
                        float(self.direction), self.attracting[0], self.attracting[1],
                        self.repelling[0], self.repelling[1], int(self.n_max), out, snapped, depth)
        else:
            for i, x in enumerate(xs):
                out[i], snapped[i], depth[i] = _eval_python(self, float(x))
        return out, snapped, depth

    def __call__(self, x):
        vals, _, _ = self.evaluate(x)
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def source(self, xs):
        return _apply(self.nf_phi, self.h, self.alpha, xs)

    def target(self, xs):
        return _apply(self.nf_Phi, self.h, self.alpha, xs)


def _apply(nf, h, alpha, xs):
    xs = np.ascontiguousarray(np.atleast_1d(np.asarray(xs, dtype=float)))
    if nf.tail.compiled:
        return K.map_many(K.pack(nf, h), float(h), float(alpha), xs)
    return np.array([float(nf(h, x, alpha)) for x in xs])


def _eval_python(J: ConjugacyMap, x: float):
    """Reference implementation of the compiled evaluator (used for custom tails)."""
    F, G, h, al = J.nf_phi, J.nf_Phi, J.h, J.alpha
    a, Fa, Ja, GJa, d = J.anchor, J.anchor_F, J.anchor_image, J.anchor_GJ, J.direction
    if x == J.attracting[0]:
        return J.attracting[1], False, 0
    if x == J.repelling[0]:
        return J.repelling[1], False, 0
    lo, hi = min(a, Fa), max(a, Fa)
    u, k = x, 0
    if (u - Fa) * d > 0 and not lo <= u <= hi:
        while (u - hi if d > 0 else lo - u) > 0:
            prev, u = u, monotone_inverse(F, h, al, u)
            k += 1
            # a stalled iterate sits on a floating-point fixed point: same outcome as the cap
            if k > J.n_max or u == prev:
                return J.attracting[1], True, k
    elif not lo <= u <= hi:
        while (lo - u if d > 0 else u - hi) > 0:
            prev, u = u, float(F(h, u, al))
            k -= 1
            if -k > J.n_max or u == prev:
                return J.repelling[1], True, k
    u = min(max(u, lo), hi)
    v = Ja if u == a else GJa if u == Fa else Ja + (u - a) * (GJa - Ja) / (Fa - a)
    for _ in range(abs(k)):
        v = float(G(h, v, al)) if k > 0 else monotone_inverse(G, h, al, v)
    return v, False, k


def build_conjugacy(nf_Phi: NormalForm, nf_phi: NormalForm, h: float, alpha: float,
                    region: str = "inner", half_plane="lower", z0: float | None = None,
                    n_max: int = N_MAX, enforce_box: bool = True) -> ConjugacyMap:
    """Construct J with J o N_phi = N_Phi o J on one region at fixed (h, alpha).

    Regions: ``inner`` lies between 0 and the nonzero fixed point on the
    chosen half-plane; ``outer`` between that fixed point (or 0) and z0.
    On the upper half-plane the construction mirrors the lower one; if the
    source map pushes z0 outward, the anchor is moved to [F^{-1}(z0), z0]
    with J(z0) = z0 (recorded as ``mirrored``).
    """
    if nf_Phi.kind != nf_phi.kind:
        raise ValueError("normal forms must have the same kind")
    if region not in ("inner", "outer"):
        raise ValueError("region must be 'inner' or 'outer'")
    side = _side(half_plane)
    hp = "lower" if side < 0 else "upper"
    h, alpha = float(h), float(alpha)
    if enforce_box:
        nf_Phi.check_params(h, alpha)
        nf_phi.check_params(h, alpha)
    F, G = nf_phi, nf_Phi
    wF, wG = _omega(F, h, alpha, side), _omega(G, h, alpha, side)
    if (wF is None) != (wG is None):
        raise ValueError("the two normal forms disagree on the existence of a nonzero fixed point")
    meta = {"construction": "direct" if side < 0 else "mirror", "half_plane": hp}

    if region == "inner":
        if wF is None:
            raise ValueError(f"inner region is empty at alpha = {alpha!r} on the {hp} half-plane")
        a = inner_start(F.kind, alpha, side)
        Ja = a
        Fa, GJa = float(F(h, a, alpha)), float(G(h, a, alpha))
        d = 1 if Fa > a else -1
        toward_w = (wF - a) * d > 0
        att = (wF, wG) if toward_w else (0.0, 0.0)
        rep = (0.0, 0.0) if toward_w else (wF, wG)
        interval = tuple(sorted((0.0, wF)))
        mirrored = False
    else:
        zz = outer_start(F, side) if z0 is None else float(z0)
        if enforce_box:
            _check_z0(F, zz)
        e, eG = (0.0, 0.0) if wF is None else (wF, wG)
        Fz = float(F(h, zz, alpha))
        d = 1 if Fz > zz else -1
        interval = tuple(sorted((e, zz)))
        if (e - zz) * d > 0:                     # z0 flows inward: anchor starts at z0
            a, Ja, Fa, GJa = zz, zz, Fz, float(G(h, zz, alpha))
            att, rep = (e, eG), (math.nan, math.nan)
            mirrored = False
        else:                                    # z0 flows outward: anchor ends at z0
            a = monotone_inverse(F, h, alpha, zz)
            Ja = monotone_inverse(G, h, alpha, zz)
            Fa, GJa = zz, zz
            att, rep = (math.nan, math.nan), (e, eG)
            mirrored = True
        meta["z0"] = zz
    meta["mirrored"] = mirrored
    return ConjugacyMap(G, F, h, alpha, region, hp, interval, float(a), float(Ja), float(Fa),
                        float(GJa), d, att, rep, n_max, mirrored, meta)


def eval_conjugacy(J: ConjugacyMap, x: float, with_flags: bool = False):
    vals, snapped, depth = J.evaluate(np.array([float(x)]))
    if with_flags:
        return float(vals[0]), bool(snapped[0]), int(depth[0])
    return float(vals[0])


def region_grid(J: ConjugacyMap, n: int, interval=None) -> np.ndarray:
    lo, hi = J.interval if interval is None else interval
    return np.linspace(lo, hi, n)


def conjugacy_residual_detail(J: ConjugacyMap, grid_size: int = 1024, interval=None) -> dict:
    """Residual of the conjugacy equation on a uniform grid, with the grid and J values."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    xs = region_grid(J, grid_size, interval)
    Jx, snapped, _ = J.evaluate(xs)
    JFx, _, _ = J.evaluate(J.source(xs), check=False)
    return {"residual": float(np.max(np.abs(JFx - J.target(Jx)))), "x": xs, "Jx": Jx,
            "snapped": snapped}


def conjugacy_residual(J: ConjugacyMap, grid_size: int = 1024, interval=None) -> float:
    """max over a uniform grid of |J(N_phi(x)) - N_Phi(J(x))|."""
    return conjugacy_residual_detail(J, grid_size, interval)["residual"]


def all_regions(kind: str, alpha: float) -> list:
    """(region, half_plane) pairs that are nonempty for the catalog signs."""
    out = [("outer", "lower"), ("outer", "upper")]
    if kind == "tc":
        if alpha > 0:
            out.append(("inner", "lower"))
        elif alpha < 0:
            out.append(("inner", "upper"))
    elif alpha > 0:
        out += [("inner", "lower"), ("inner", "upper")]
    return out
