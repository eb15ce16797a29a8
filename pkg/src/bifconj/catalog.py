"""Built-in maps referenced by stable names from the CLI and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .experiments import model_rk4_map
from .maps import catalog_pair, tc_model_exact_flow


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    func: Callable
    description: str
    expected: str          # the classification verdict the map is expected to get


def _example21(p):
    return lambda h, x, a: h ** (2 * p + 1) + (1 + h * a) * x + h * x * x


def _example25(p):
    return lambda h, x, a: h ** (3 * p + 1) + (1 + h * a) * x + h * x**3


def _example26(p):
    return lambda h, x, a: (1 + h * a) * x + h ** (p + 1) * x * x + h * x**3


def _example27(p):
    return lambda h, x, a: (1 + h * a - h ** (p + 1)) * x + h * a * x * x + h * x**3


def _point_conditions_only(p):
    return lambda h, x, a: a * a + (1 + a) * x + x * x


def _tc_phi(p):
    return catalog_pair("tc", p)[1]


def _pf_phi(p):
    return catalog_pair("pf", p)[1]


def _section5_phi(p):
    return tc_model_exact_flow


def _section5_rk4(p):
    return model_rk4_map


_BUILDERS = {
    "example21": (_example21, "h^(2p+1) + (1+h a) x + h x^2: constant offset destroys the trivial branch", "none"),
    "example25": (_example25, "h^(3p+1) + (1+h a) x + h x^3: constant offset, cubic", "none"),
    "example26": (_example26, "(1+h a) x + h^(p+1) x^2 + h x^3: nonzero quadratic term", "TC"),
    "example27": (_example27, "(1+h a - h^(p+1)) x + h a x^2 + h x^3: multiplier at the origin is not 1", "none"),
    "wiggins-counterexample": (_point_conditions_only, "a^2 + (1+a) x + x^2 (h ignored): point conditions without a TC", "none"),
    "tc-phi": (_tc_phi, "TC normal form (1+h a) x + h x^2 + h^(p+1) x^3", "TC"),
    "pf-phi": (_pf_phi, "PF normal form (1+h a) x - h x^3 + h^(p+1) x^4", "PF"),
    "section5-phi": (_section5_phi, "exact time-h map of x' = a x + x^2", "TC"),
    "section5-rk4": (_section5_rk4, "classical RK4 step for x' = a x + x^2", "TC"),
}

CATALOG_NAMES = tuple(_BUILDERS)


def get_map(name: str, p: int = 1) -> CatalogEntry:
    try:
        build, desc, expected = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown map {name!r}; choose from {', '.join(CATALOG_NAMES)}") from None
    return CatalogEntry(name, build(p), desc, expected)
