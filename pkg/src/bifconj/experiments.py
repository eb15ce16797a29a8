"""The decoupled 2-D model problem, its RK4 discretization, orbit comparisons and h-sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .conjugacy import build_conjugacy
from .estimates import order_fit, sup_id_minus_J
from .maps import (Tail, classical_rk4, make_pf_normal_form, make_tc_normal_form, model_y_flow,
                   rk_apply, tc_model_exact_flow)

MODEL_P = 4
DEFAULT_DPS = 30


def model_rhs(x, alpha):
    """x' = alpha x + x^2."""
    return alpha * x + x * x


MODEL_RK4 = classical_rk4(model_rhs)


def model_rk4_map(h, x, alpha):
    return rk_apply(MODEL_RK4, h, x, alpha)


def worker_count() -> int:
    """Worker threads for sweeps, capped by BIFCONJ_THREADS (default 1)."""
    try:
        n = int(os.environ.get("BIFCONJ_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _mp(v):
    return v if isinstance(v, mpmath.mpf) else mpmath.mpf(repr(float(v)))


# --------------------------------------------------------------------------
# alignment
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentPair:
    rho: float
    alpha_tilde: float
    h: float
    alpha: float
    series_check: dict
    rho_mp: object = field(default=None, repr=False, compare=False)
    alpha_tilde_mp: object = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"rho": self.rho, "alpha_tilde": self.alpha_tilde, "h": self.h,
                "alpha": self.alpha, "series_residuals": self.series_check}


def _p4(s):
    return 1 + s + s**2 / 2 + s**3 / 6 + s**4 / 24


def exact_c2(h, alpha):
    """Quadratic Taylor coefficient in x of the exact time-h map at x = 0."""
    if alpha == 0:
        return h
    e = mpmath.exp(alpha * h)
    return e * mpmath.expm1(alpha * h) / alpha


def rk4_c2(h, alpha):
    """Quadratic Taylor coefficient in x of the RK4 map at x = 0."""
    return mpmath.diff(lambda x: model_rk4_map(h, x, alpha), 0, 2) / 2


def compute_alignment(h: float, alpha: float, dps: int = 40) -> AlignmentPair:
    """Align the RK4 map with the exact flow: match multipliers at 0, then quadratic coefficients.

    alpha_tilde solves P4(alpha_tilde h) = e^(alpha h); rho = c2_exact(alpha) / c2_rk4(alpha_tilde).
    """
    if abs(alpha * h) >= 0.5:
        raise ValueError("alignment needs |alpha h| < 1/2")
    with mpmath.workdps(dps):
        H, A = _mp(h), _mp(alpha)
        if A == 0:
            at, rho = mpmath.mpf(0), mpmath.mpf(1)
        else:
            target = mpmath.exp(A * H)
            try:
                at = mpmath.findroot(lambda b: _p4(b * H) - target, A, tol=mpmath.mpf(10) ** (-dps + 5))
            except (ValueError, ZeroDivisionError) as exc:
                raise ArithmeticError(f"alpha_tilde Newton solve failed: {exc}") from exc
            rho = exact_c2(H, A) / rk4_c2(H, at)
        t = A * H
        at_series = A * (1 + t**4 / 120 - t**5 / 144)
        rho_series = 1 + t**4 / 20 - 5 * t**5 / 96
        lin_mismatch = abs(_p4(at * H) - mpmath.exp(t))
        quad_mismatch = abs(exact_c2(H, A) - rho * rk4_c2(H, at)) if A != 0 else mpmath.mpf(0)
        check = {"alpha_tilde": float(abs(at - at_series)), "rho": float(abs(rho - rho_series)),
                 "tolerance": float(abs(t) ** 6), "linear_multiplier": float(lin_mismatch),
                 "quadratic_coefficient": float(quad_mismatch)}
        return AlignmentPair(float(rho), float(at), float(h), float(alpha), check, +rho, +at)


# --------------------------------------------------------------------------
# orbit differences
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitDiff:
    values: np.ndarray
    context: dict

    @property
    def sup(self) -> float:
        return float(np.max(self.values)) if len(self.values) else 0.0

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values)) if len(self.values) else 0

    def plateau_ratio(self) -> float:
        """sup over n <= N divided by sup over n <= N/2."""
        half = self.values[: len(self.values) // 2 + 1]
        m = float(np.max(half))
        return self.sup / m if m > 0 else (1.0 if self.sup == 0 else math.inf)


def _orbit_pair(h, x0, alpha, N, perturb, scale_Phi, scale_phi, dps):
    """h^-4 |Phi(nh, x0/sP) sP - phi^n(x0/sp; at+perturb) sp| for n = 0..N (mp arithmetic)."""
    with mpmath.workdps(dps):
        al = compute_alignment(h, alpha, dps=dps + 10)
        H, A, X0 = _mp(h), _mp(alpha), _mp(x0)
        at = al.alpha_tilde_mp + _mp(perturb)
        sP, sp = scale_Phi(H, A, al), scale_phi(H, A, al)
        hp = H**MODEL_P
        out = np.empty(N + 1)
        u = X0 / sp
        for n in range(N + 1):
            exact = tc_model_exact_flow(n * H, X0 / sP, A) * sP
            out[n] = float(abs(exact - u * sp) / hp)
            if n < N:
                u = model_rk4_map(H, u, at)
        return out, al


def delta_sequence(h: float, x0: float, alpha: float, N: int, dps: int = DEFAULT_DPS) -> OrbitDiff:
    """Normalized difference of the two normal-form orbits started at x0.

    Normal-form coordinates rescale each map so that its quadratic
    coefficient at 0 equals h (u = c2 x / h); the RK4 map is iterated at the
    aligned parameter alpha_tilde, so both normal forms share the linear
    multiplier e^(alpha h).
    """
    if x0 > 0:
        raise ValueError("delta_sequence needs x0 <= 0")
    sP = lambda H, A, al: H / exact_c2(H, A)
    sp = lambda H, A, al: H / rk4_c2(H, al.alpha_tilde_mp)
    vals, al = _orbit_pair(h, x0, alpha, N, 0.0, sP, sp, dps)
    return OrbitDiff(vals, {"h": h, "x0": x0, "alpha": alpha, "N": N, "p": MODEL_P,
                            "rho": al.rho, "alpha_tilde": al.alpha_tilde, "perturbation": 0.0})


def orbit_closeness_experiment(h: float, x0: float, alpha: float, N: int,
                               perturb_alpha_tilde: float = 0.0, dps: int = DEFAULT_DPS) -> OrbitDiff:
    """h^-p |Phi(nh, x0, alpha) - phi^n(rho x0; alpha_tilde + perturb) / rho| for n = 0..N."""
    one = lambda H, A, al: mpmath.mpf(1)
    rho_inv = lambda H, A, al: 1 / al.rho_mp
    vals, al = _orbit_pair(h, x0, alpha, N, perturb_alpha_tilde, one, rho_inv, dps)
    return OrbitDiff(vals, {"h": h, "x0": x0, "alpha": alpha, "N": N, "p": MODEL_P,
                            "rho": al.rho, "alpha_tilde": al.alpha_tilde,
                            "perturbation": perturb_alpha_tilde,
                            "series_residuals": al.series_check})


# --------------------------------------------------------------------------
# h sweeps
# --------------------------------------------------------------------------

SWEEP_KEYS = {"kind", "p", "h", "alpha", "region", "tail", "tail_Phi", "half_plane", "grid", "K"}


@dataclass(frozen=True)
class SweepConfig:
    kind: str = "tc"
    p: int = 1
    h: tuple = (0.1, 0.05, 0.025, 0.0125)
    alpha: tuple = (0.005,)
    region: str = "inner"
    tail: str = "hp_power"
    tail_Phi: str = "zero"
    half_plane: str = "lower"
    grid: int = 4096
    K: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "SweepConfig":
        """Flat ``key=value`` lines; ``#`` starts a comment; lists are comma separated."""
        kw = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in SWEEP_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            if key in ("h", "alpha"):
                kw[key] = tuple(float(v) for v in val.split(",") if v.strip())
            elif key in ("p", "grid"):
                kw[key] = int(val)
            elif key == "K":
                kw[key] = float(val)
            else:
                kw[key] = val
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind not in ("tc", "pf"):
            raise ValueError(f"kind must be tc or pf, not {self.kind!r}")
        if self.region not in ("inner", "outer"):
            raise ValueError(f"region must be inner or outer, not {self.region!r}")
        if self.p < 1:
            raise ValueError("p must be a positive integer")
        if not self.h or not self.alpha:
            raise ValueError("h and alpha lists must be nonempty")
        if any(v <= 0 for v in self.h):
            raise ValueError("h values must be positive")

    def tail_objects(self):
        def mk(spec):
            if spec == "hp_power":
                return Tail("hp_power", 1.0, self.p)
            return Tail.parse(spec)
        return mk(self.tail_Phi), mk(self.tail)

    def normal_forms(self):
        tF, tf = self.tail_objects()
        make = make_tc_normal_form if self.kind == "tc" else make_pf_normal_form
        return make(tF, K=self.K), make(tf, K=self.K)


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list
    fits: dict
    failures: list

    def csv_rows(self):
        return [(r["h"], r["alpha"], r["sup"], r["slope_so_far"]) for r in self.rows]


DEGENERATE_SUP = 1e-12


def _slope(hs, sups):
    if len(hs) < 2 or any(s <= 0 for s in sups):
        return math.nan
    return float(np.polyfit(np.log(hs), np.log(sups), 1)[0])


def h_sweep(config: SweepConfig, enforce_box: bool = True, workers: int | None = None) -> SweepResult:
    """sup |id - J| over the (h, alpha) grid of ``config`` and a log-log fit per alpha."""
    config.validate()
    nF, nf = config.normal_forms()
    cells = [(a, h) for a in config.alpha for h in config.h]

    def run(cell):
        a, h = cell
        try:
            J = build_conjugacy(nF, nf, h, a, config.region, config.half_plane, enforce_box=enforce_box)
            return sup_id_minus_J(J, config.grid), None
        except Exception as exc:  # record and continue with the remaining cells
            return math.nan, f"{type(exc).__name__}: {exc}"

    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, cells))
    else:
        results = [run(c) for c in cells]

    rows, failures, fits = [], [], {}
    for a in config.alpha:
        hs, sups = [], []
        for (ca, h), (sup, err) in zip(cells, results):
            if ca != a:
                continue
            if err is not None:
                failures.append({"h": h, "alpha": a, "error": err})
            else:
                hs.append(h)
                sups.append(sup)
            rows.append({"h": h, "alpha": a, "sup": sup, "slope_so_far": _slope(hs, sups)})
        if sups and max(sups) <= DEGENERATE_SUP:
            fits[a] = {"degenerate": True}
        elif len(hs) >= 4:
            slope, intercept, r2 = order_fit(hs, sups)
            fits[a] = {"degenerate": False, "slope": slope, "intercept": intercept, "r2": r2}
        else:
            fits[a] = {"degenerate": False, "slope": _slope(hs, sups), "insufficient_points": True}
    return SweepResult(config, rows, fits, failures)


# --------------------------------------------------------------------------
# phase portrait data
# --------------------------------------------------------------------------

def portrait_orbits(h: float, alpha: float, initial_points, N: int) -> list:
    """Rows (point, n, x_n, y_n) of the exact 2-D flow sampled at t = n h."""
    rows = []
    for k, (x0, y0) in enumerate(initial_points):
        for n in range(N + 1):
            rows.append((k, n, tc_model_exact_flow(n * h, x0, alpha), model_y_flow(n * h, y0)))
    return rows
