"""One-step maps: normal forms, exact model flows, Runge-Kutta maps, derivatives.

Every map in this package is a callable ``f(h, x, alpha)``.  Normal forms
additionally know their tail function, the tail bound ``K`` and the
parameter box on which the bound is guaranteed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence

import mpmath
import numpy as np


class BoxViolation(ValueError):
    """Raised when (h, alpha) or a box constant violates a stated constraint."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = f"constraint violated: {constraint}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class TailBoundError(ValueError):
    """The tail (or one of its derivatives) exceeds K on the sampled box."""


class PoleError(ZeroDivisionError):
    """Exact flow evaluated at (or numerically next to) its pole."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, iterations: int = 0):
        super().__init__(msg)
        self.iterations = iterations


class DerivativeAccuracyError(ArithmeticError):
    """Richardson extrapolation could not reach the requested accuracy."""


class PreconditionError(ValueError):
    def __init__(self, condition: str, value: float):
        self.condition = condition
        self.value = value
        super().__init__(f"precondition {condition} = 0 fails (value {value:.3e})")


# --------------------------------------------------------------------------
# tails
# --------------------------------------------------------------------------

TAIL_CODES = {"zero": 0, "hp_power": 1, "sin": 2, "const": 3}


@dataclass(frozen=True)
class Tail:
    """Tail function ``eta(h, x, alpha)`` of a normal form.

    The named kinds (``zero``, ``hp_power``, ``sin``, ``const``) have
    analytic derivatives and a compiled fast path; ``custom`` wraps an
    arbitrary Python callable.
    """

    kind: str = "zero"
    coef: float = 1.0
    p: int = 1
    func: Optional[Callable] = field(default=None, compare=False, hash=False)
    label: str = ""

    def __post_init__(self):
        if self.kind not in TAIL_CODES and self.kind != "custom":
            raise ValueError(f"unknown tail kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom tail needs func")

    @property
    def code(self) -> int:
        return TAIL_CODES.get(self.kind, -1)

    @property
    def compiled(self) -> bool:
        return self.kind != "custom"

    @property
    def name(self) -> str:
        if self.kind == "custom":
            return self.label or "custom"
        if self.kind == "hp_power":
            return f"hp_power:{self.p}" if self.coef == 1.0 else f"{self.coef:g}*hp_power:{self.p}"
        if self.kind == "sin":
            return "sin" if self.coef == 1.0 else f"{self.coef:g}*sin"
        if self.kind == "const":
            return f"const:{self.coef:g}"
        return "zero"

    def __call__(self, h, x, alpha):
        k = self.kind
        if k == "zero":
            return 0.0 * x
        if k == "hp_power":
            return self.coef * h ** self.p + 0.0 * x
        if k == "sin":
            return self.coef * np.sin(x)
        if k == "const":
            return self.coef + 0.0 * x
        return self.func(h, x, alpha)

    def dx(self, h, x, alpha):
        if self.kind == "sin":
            return self.coef * np.cos(x)
        if self.kind == "custom":
            d = 1e-6
            return (self.func(h, x + d, alpha) - self.func(h, x - d, alpha)) / (2 * d)
        return 0.0 * x

    @classmethod
    def parse(cls, text: str, p: int | None = None) -> "Tail":
        """Parse catalog names: ``zero``, ``hp_power[:p]``, ``sin``, ``const:c``."""
        text = text.strip()
        coef = 1.0
        if "*" in text:
            c, text = text.split("*", 1)
            coef = float(c)
        name, _, arg = text.partition(":")
        if name == "zero":
            return cls("zero")
        if name == "hp_power":
            pp = int(arg) if arg else (p if p is not None else 1)
            if pp < 1:
                raise ValueError("hp_power needs p >= 1")
            return cls("hp_power", coef=coef, p=pp)
        if name == "sin":
            return cls("sin", coef=coef)
        if name == "const":
            return cls("const", coef=float(arg) if arg else coef)
        raise ValueError(f"unknown tail {text!r}; expected zero, hp_power:p, sin or const:c")

    @classmethod
    def custom(cls, func: Callable, label: str = "custom") -> "Tail":
        return cls("custom", func=func, label=label)


def _vector_call(func, H, X, A):
    try:
        out = np.asarray(func(H, X, A), dtype=float)
        if out.shape != np.broadcast(H, X, A).shape:
            out = np.broadcast_to(out, np.broadcast(H, X, A).shape)
        return out
    except Exception:
        return np.vectorize(lambda a, b, c: float(func(a, b, c)))(H, X, A)


def _tail_sup(tail: Tail, box: "Box", n: int = 201) -> dict:
    """Sampled sup of |eta|, |eta_x|, |eta_xx|, |eta_alpha| on the box."""
    hs = np.linspace(box.h0, 0.0, n, endpoint=False)[::-1]   # (0, h0]
    xs = np.linspace(-box.eps0, box.eps0, n)
    als = np.linspace(-box.alpha0, box.alpha0, n)
    X, A = np.meshgrid(xs, als, indexing="ij")
    dx = 1e-4 * box.eps0
    da = 1e-4 * box.alpha0
    sup = dict(value=0.0, dx=0.0, dxx=0.0, dalpha=0.0)
    f = (lambda H, X, A: tail(H, X, A)) if tail.compiled else tail.func
    for hval in hs:
        H = np.full_like(X, hval)
        v0 = _vector_call(f, H, X, A)
        vp = _vector_call(f, H, X + dx, A)
        vm = _vector_call(f, H, X - dx, A)
        ap = _vector_call(f, H, X, A + da)
        am = _vector_call(f, H, X, A - da)
        if not np.all(np.isfinite(v0)):
            raise TailBoundError("tail is not finite on the box")
        sup["value"] = max(sup["value"], float(np.max(np.abs(v0))))
        sup["dx"] = max(sup["dx"], float(np.max(np.abs(vp - vm))) / (2 * dx))
        sup["dxx"] = max(sup["dxx"], float(np.max(np.abs(vp - 2 * v0 + vm))) / dx**2)
        sup["dalpha"] = max(sup["dalpha"], float(np.max(np.abs(ap - am))) / (2 * da))
    return sup


@lru_cache(maxsize=256)
def _tail_sup_cached(tail: Tail, box: "Box") -> tuple:
    s = _tail_sup(tail, box)
    return tuple(sorted(s.items()))


def check_tail_bound(tail: Tail, K: float, box: "Box") -> dict:
    """Sample the tail on a 201-point grid per axis; raise if any sup exceeds K."""
    if tail.compiled:
        sup = dict(_tail_sup_cached(tail, box))
    else:
        sup = _tail_sup(tail, box)
    # finite-difference slack for the sampled second derivative
    for key, val in sup.items():
        if val > K * (1 + 1e-6) + 1e-9:
            raise TailBoundError(f"sup |tail {key}| = {val:.6g} exceeds K = {K:g}")
    return sup


# --------------------------------------------------------------------------
# boxes and normal forms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    h0: float
    eps0: float
    alpha0: float


def tc_box(K: float) -> Box:
    return Box(h0=1 / 5, eps0=min(1 / 25, 1 / (25 * K)), alpha0=min(1 / 51, 1 / (51 * K)))


def pf_box(K: float) -> Box:
    return Box(h0=min(1 / 10, 8 * K**2), eps0=min(1 / 10, 1 / (5 * K)),
               alpha0=min(1 / 288, 1 / (72 * K**2)))


def box_constraints(kind: str, K: float, box: Box) -> list[tuple[str, bool]]:
    """Normal-form box constraints as (message, satisfied) pairs."""
    tol = 1 + 1e-12
    if kind == "tc":
        return [
            ("h0 <= 1/5", box.h0 <= tol / 5),
            ("eps0 <= min(1/25, 1/(25K))", box.eps0 <= tol * min(1 / 25, 1 / (25 * K))),
            ("alpha0 <= min(1/51, 1/(51K))", box.alpha0 <= tol * min(1 / 51, 1 / (51 * K))),
        ]
    return [
        ("h0 <= min(1/10, 8K^2)", box.h0 <= tol * min(1 / 10, 8 * K**2)),
        ("eps0 <= min(1/10, 1/(5K))", box.eps0 <= tol * min(1 / 10, 1 / (5 * K))),
        ("alpha0 <= min(1/288, 1/(72K^2))", box.alpha0 <= tol * min(1 / 288, 1 / (72 * K**2))),
    ]


@dataclass(frozen=True)
class ParamMap:
    """A one-step map ``(h, x, alpha) -> x'`` with a nominal domain box."""

    func: Callable
    domain_box: tuple = (1.0, 1.0, 1.0)
    monotone: bool = False
    name: str = "map"

    def __call__(self, h, x, alpha):
        return self.func(h, x, alpha)


@dataclass(frozen=True)
class NormalForm:
    """TC: (1+h a)x + s h x^2 + h x^3 eta;  PF: (1+h a)x + s h x^3 + h x^4 eta."""

    kind: str
    s: int
    tail: Tail
    K: float
    box: Box

    @property
    def degree(self) -> int:
        return 2 if self.kind == "tc" else 3

    def __call__(self, h, x, alpha):
        # same operation order as the compiled evaluator
        xd = x * x if self.degree == 2 else x * x * x
        return (1 + h * alpha) * x + h * xd * (self.s + x * self.tail(h, x, alpha))

    def dx(self, h, x, alpha):
        d = self.degree
        t = self.tail(h, x, alpha)
        return (1 + h * alpha + self.s * d * h * x ** (d - 1)
                + (d + 1) * h * x**d * t + h * x ** (d + 1) * self.tail.dx(h, x, alpha))

    @property
    def domain_box(self):
        return (self.box.h0, self.box.eps0, self.box.alpha0)

    @property
    def param_map(self) -> ParamMap:
        return ParamMap(self, self.domain_box, monotone=True, name=f"{self.kind}:{self.tail.name}")

    def check_params(self, h: float, alpha: float) -> None:
        """Reject (h, alpha) outside the validity box, naming the constraint."""
        if not h > 0:
            raise BoxViolation("h > 0", f"h = {h!r}")
        if h > self.box.h0 * (1 + 1e-12):
            name = "h0 <= 1/5" if self.kind == "tc" else "h0 <= min(1/10, 8K^2)"
            raise BoxViolation(name, f"h = {h!r} > h0 = {self.box.h0:.6g}")
        if abs(alpha) > self.box.alpha0 * (1 + 1e-12):
            name = ("alpha0 <= min(1/51, 1/(51K))" if self.kind == "tc"
                    else "alpha0 <= min(1/288, 1/(72K^2))")
            raise BoxViolation(name, f"|alpha| = {abs(alpha)!r} > alpha0 = {self.box.alpha0:.6g}")

    def describe(self) -> str:
        return f"{self.kind.upper()}(s={self.s:+d}, tail={self.tail.name}, K={self.K:g})"


def _make_normal_form(kind, tail, K, s, domain, check):
    if not K > 0:
        raise ValueError(f"tail bound K must be positive, got {K!r}")
    if s not in (1, -1):
        raise ValueError("s must be +1 or -1")
    if isinstance(tail, str):
        tail = Tail.parse(tail)
    elif callable(tail) and not isinstance(tail, Tail):
        tail = Tail.custom(tail)
    box = tc_box(K) if kind == "tc" else pf_box(K)
    if domain is not None:
        hm, xm, am = domain
        box = Box(min(box.h0, hm), min(box.eps0, xm), min(box.alpha0, am))
    for msg, ok in box_constraints(kind, K, box):
        if not ok:
            raise BoxViolation(msg)
    if check:
        check_tail_bound(tail, K, box)
    return NormalForm(kind, s, tail, float(K), box)


def make_tc_normal_form(tail=None, K: float = 1.0, s: int = 1, domain=None, check=True) -> NormalForm:
    """Transcritical normal form with its validity-box constants."""
    return _make_normal_form("tc", tail if tail is not None else Tail(), K, s, domain, check)


def make_pf_normal_form(tail=None, K: float = 1.0, s: int = -1, domain=None, check=True) -> NormalForm:
    """Pitchfork normal form; s = -1 is the supercritical choice."""
    return _make_normal_form("pf", tail if tail is not None else Tail(), K, s, domain, check)


def catalog_pair(kind: str, p: int, K: float = 1.0, coef: float = 1.0):
    """(N_Phi, N_phi) = (tail 0, tail coef*h^p) for the given kind."""
    make = make_tc_normal_form if kind == "tc" else make_pf_normal_form
    return make(Tail("zero"), K), make(Tail("hp_power", coef=coef, p=p), K)


# --------------------------------------------------------------------------
# model flows
# --------------------------------------------------------------------------

def _is_mp(*vals) -> bool:
    return any(isinstance(v, (mpmath.mpf, mpmath.mpc)) for v in vals)


def tc_model_exact_flow(h, x0, alpha):
    """Time-h map of x' = alpha x + x^2 started at x0."""
    if _is_mp(h, x0, alpha):
        expm1, zero_cut = mpmath.expm1, mpmath.mpf("1e-12")
    else:
        expm1, zero_cut = math.expm1, 1e-12
    if abs(alpha) < zero_cut:
        den = 1 - h * x0
        if abs(den) <= 1e-14:
            raise PoleError(f"pole of the exact flow: 1 - h*x0 = {float(den):.3e}")
        return x0 / den
    em = expm1(alpha * h)          # e^{alpha h} - 1
    den = alpha - x0 * em
    if abs(den) <= 1e-14:
        raise PoleError(f"pole of the exact flow: denominator = {float(den):.3e}")
    return x0 * alpha * (em + 1) / den


def model_y_flow(h, y0):
    if _is_mp(h, y0):
        return y0 * mpmath.exp(-h)
    return y0 * math.exp(-h)


# --------------------------------------------------------------------------
# Runge-Kutta maps
# --------------------------------------------------------------------------

def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v).limit_denominator(10**12)


@dataclass(frozen=True)
class RKMethod:
    """Butcher tableau (``A`` = beta_ij, ``b`` = gamma_i) with right-hand side f(x, alpha)."""

    A: tuple
    b: tuple
    rhs: Callable = field(compare=False)
    solver_tol: float = 1e-14
    max_iter: int = 100
    name: str = "rk"

    def __post_init__(self):
        A = tuple(tuple(_frac(v) for v in row) for row in self.A)
        b = tuple(_frac(v) for v in self.b)
        if len(A) != len(b) or any(len(r) != len(b) for r in A):
            raise ValueError("tableau shape mismatch")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def stages(self) -> int:
        return len(self.b)

    @property
    def explicit(self) -> bool:
        return all(self.A[i][j] == 0 for i in range(self.stages) for j in range(i, self.stages))

    def __call__(self, h, x, alpha):
        return rk_apply(self, h, x, alpha)

    def as_map(self) -> ParamMap:
        return ParamMap(self, (1.0, 1.0, 1.0), name=self.name)


def _coefs(method: RKMethod, mp: bool):
    conv = (lambda q: mpmath.mpf(q.numerator) / q.denominator) if mp else float
    return [[conv(v) for v in row] for row in method.A], [conv(v) for v in method.b]


def rk_apply(method: RKMethod, h, x, alpha):
    """One RK step x + h sum_i gamma_i k_i."""
    mp = _is_mp(h, x, alpha)
    A, b = _coefs(method, mp)
    f = method.rhs
    s = method.stages
    k = [0 * x] * s
    if method.explicit:
        for i in range(s):
            k[i] = f(x + h * sum(A[i][j] * k[j] for j in range(i)), alpha)
        return x + h * sum(b[i] * k[i] for i in range(s))

    # implicit: damped fixed-point iteration on the stage equations
    k = [f(x, alpha)] * s
    omega = 1.0
    last = None
    for it in range(1, method.max_iter + 1):
        new = [f(x + h * sum(A[i][j] * k[j] for j in range(s)), alpha) for i in range(s)]
        res = max(abs(new[i] - k[i]) for i in range(s))
        if res <= method.solver_tol:
            k = new
            return x + h * sum(b[i] * k[i] for i in range(s))
        if last is not None and res > last:
            omega *= 0.5
        last = res
        k = [k[i] + omega * (new[i] - k[i]) for i in range(s)]
    raise ConvergenceError(f"implicit stage iteration did not converge in {method.max_iter} "
                           f"iterations (residual {float(last):.3e})", iterations=method.max_iter)


def explicit_euler(rhs, **kw) -> RKMethod:
    return RKMethod(((0,),), (1,), rhs, name="euler", **kw)


def classical_rk4(rhs, **kw) -> RKMethod:
    h = Fraction(1, 2)
    A = ((0, 0, 0, 0), (h, 0, 0, 0), (0, h, 0, 0), (0, 0, 1, 0))
    b = (Fraction(1, 6), Fraction(1, 3), Fraction(1, 3), Fraction(1, 6))
    return RKMethod(A, b, rhs, name="rk4", **kw)


def implicit_midpoint(rhs, **kw) -> RKMethod:
    return RKMethod(((Fraction(1, 2),),), (1,), rhs, name="implicit-midpoint", **kw)


# --------------------------------------------------------------------------
# derivatives
# --------------------------------------------------------------------------

_STENCILS = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def richardson_derivative(g: Callable[[float], float], x: float, order: int,
                          rtol: float = 1e-7, step0: float = 1e-2, levels: int = 12) -> float:
    """order-th derivative of a scalar function by extrapolated central differences.

    Steps are step0 * 2**-k; the tableau eliminates the h^2, h^4, ...
    error terms (Ridders' variant, with its stagnation stop).
    """
    if order not in _STENCILS:
        raise ValueError("order must be 1, 2 or 3")
    sten = _STENCILS[order]

    def D(d):
        return sum(c * g(x + j * d) for j, c in sten) / d**order

    T = [[D(step0)]]
    best, err = T[0][0], math.inf
    for i in range(1, levels):
        d = step0 * 2.0**-i
        row = [D(d)]
        for j in range(1, i + 1):
            f = 4.0**j
            row.append(row[j - 1] + (row[j - 1] - T[i - 1][j - 1]) / (f - 1))
            e = max(abs(row[j] - row[j - 1]), abs(row[j] - T[i - 1][j - 1]))
            if e <= err:
                err, best = e, row[j]
        T.append(row)
        if abs(row[i] - T[i - 1][i - 1]) >= 2 * err and i >= 3:
            break
    if not (err <= rtol * max(1.0, abs(best))):
        raise DerivativeAccuracyError(
            f"derivative of order {order} stagnated at error {err:.3e} (value {best:.6g})")
    return best


def map_derivative(fmap: Callable, order: int, h: float, x: float, alpha: float,
                   rtol: float = 1e-7) -> float:
    """d^order/dx^order of fmap(h, x, alpha)."""
    return richardson_derivative(lambda u: float(fmap(h, u, alpha)), x, order, rtol=rtol)


def partial_derivative(g: Callable[[float, float], float], x: float, a: float,
                       nx: int, na: int, rtol: float = 1e-7) -> float:
    """Mixed partial d^(nx+na) g / dx^nx da^na by nested extrapolation."""
    if na == 0 and nx == 0:
        return float(g(x, a))
    if na == 0:
        return richardson_derivative(lambda u: float(g(u, a)), x, nx, rtol=rtol)
    if nx == 0:
        return richardson_derivative(lambda b: float(g(x, b)), a, na, rtol=rtol)
    inner = lambda b: richardson_derivative(lambda u: float(g(u, b)), x, nx, rtol=rtol * 1e-3)
    return richardson_derivative(inner, a, na, rtol=rtol)


def taylor_coefficients(fmap, h, alpha, orders: Sequence[int] = (1, 2)) -> dict:
    return {k: map_derivative(fmap, k, h, 0.0, alpha) / math.factorial(k) for k in orders}


__all__ = [
    "BoxViolation", "TailBoundError", "PoleError", "ConvergenceError",
    "DerivativeAccuracyError", "PreconditionError", "Tail", "Box", "ParamMap",
    "NormalForm", "RKMethod", "tc_box", "pf_box", "make_tc_normal_form",
    "make_pf_normal_form", "catalog_pair", "tc_model_exact_flow", "model_y_flow",
    "rk_apply", "explicit_euler", "classical_rk4", "implicit_midpoint",
    "map_derivative", "partial_derivative", "richardson_derivative", "check_tail_bound",
    "rk_check_pf_conditions",
]


def rk_check_pf_conditions(method: RKMethod, h_values=(0.1, 0.01), alphas=(-0.1, -0.01, 0.0, 0.01, 0.1),
                           tol: float = 1e-8):
    """Check that an RK map inherits the pitchfork point conditions of its rhs.

    The rhs must satisfy f(0,0) = f_x(0,0) = f_xx(0,0) = 0; otherwise a
    PreconditionError names the failing condition.  The report's measured
    value is the largest deviation among phi(h,0,alpha) (must be exactly 0),
    phi_x(h,0,0) - 1 and phi_xx(h,0,0).
    """
    from .reports import EstimateReport

    f = method.rhs
    checks = (("f^B", lambda: float(f(0.0, 0.0))),
              ("f_x^B", lambda: richardson_derivative(lambda u: float(f(u, 0.0)), 0.0, 1)),
              ("f_xx^B", lambda: richardson_derivative(lambda u: float(f(u, 0.0)), 0.0, 2)))
    for name, ev in checks:
        val = ev()
        if abs(val) > tol:
            raise PreconditionError(name, val)

    worst = 0.0
    rows = []
    for h in h_values:
        fixed = max(abs(float(rk_apply(method, h, 0.0, a))) for a in alphas)
        d1 = map_derivative(method, 1, h, 0.0, 0.0) - 1.0
        d2 = map_derivative(method, 2, h, 0.0, 0.0)
        rows.append({"h": h, "phi_0": fixed, "phi_x_minus_1": d1, "phi_xx": d2})
        if fixed != 0.0:
            worst = math.inf
        worst = max(worst, abs(d1), abs(d2))
    return EstimateReport(f"rk-pf-conditions:{method.name}", worst, tol, tol,
                          context={"method": method.name, "h_values": list(h_values)},
                          details={"rows": rows})
