"""Macroscopic coefficients D, chi, H and the KPZ coupling lambda.

For product (Bernoulli) measures every static average is a polynomial in
the density and is handled exactly. Interacting measures go through the
transfer-matrix expectations and Richardson-extrapolated central
differences in ``rho``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .ensembles import at_density, compressibility, grand_canonical_expectation, product_polynomial
from .lattice import GibbsSpec, LocalFunction, RateTable

EXACT = "exact-polynomial"
FINITE_DIFFERENCE = "finite-difference"
FD_STEP = 1e-3


@dataclass(frozen=True)
class DensityPolynomial:
    """``rho -> int f d nu_rho`` for a product measure, as an exact polynomial."""

    poly: Polynomial

    @classmethod
    def of(cls, f: LocalFunction) -> "DensityPolynomial":
        return cls(Polynomial(product_polynomial(f)))

    def __call__(self, rho):
        return self.poly(rho)

    def deriv(self, n: int = 1) -> "DensityPolynomial":
        return DensityPolynomial(self.poly.deriv(n))

    def __mul__(self, other: "DensityPolynomial") -> "DensityPolynomial":
        return DensityPolynomial(self.poly * other.poly)


COMPRESSIBILITY_PRODUCT = DensityPolynomial(Polynomial([0.0, 1.0, -1.0]))


@dataclass
class StaticAverage:
    value: float
    d1: float
    d2: float
    method: str
    error: float = 0.0


def _richardson(g, rho: float, h: float):
    def d1(step):
        return (g(rho + step) - g(rho - step)) / (2 * step)

    def d2(step):
        return (g(rho + step) - 2 * g(rho) + g(rho - step)) / step ** 2

    a1, b1 = d1(h), d1(h / 2)
    a2, b2 = d2(h), d2(h / 2)
    r1 = (4 * b1 - a1) / 3
    r2 = (4 * b2 - a2) / 3
    return r1, r2, max(abs(r1 - b1), abs(r2 - b2))


def _step_for(rho: float, h: float) -> float:
    margin = min(rho, 1 - rho)
    if margin <= 0:
        raise ValueError(f"density {rho} outside (0, 1)")
    while h >= margin / 2:
        h /= 2
        if h < 1e-6:
            raise ValueError(f"density {rho} too close to the boundary for differentiation")
    return h


def static_average(f: LocalFunction, spec: GibbsSpec, rho: float, h: float = FD_STEP) -> StaticAverage:
    """``f~(rho) = int f d nu_rho`` and its first two derivatives in ``rho``."""
    if spec.is_product:
        p = DensityPolynomial.of(f)
        return StaticAverage(float(p(rho)), float(p.deriv(1)(rho)), float(p.deriv(2)(rho)), EXACT)
    if not np.any(f.coefficients[1:]):
        return StaticAverage(float(f.coefficients[0]), 0.0, 0.0, EXACT)

    def g(r):
        return grand_canonical_expectation(at_density(spec, r), f)

    d1, d2, err = _richardson(g, rho, _step_for(rho, h))
    return StaticAverage(g(rho), d1, d2, FINITE_DIFFERENCE, err)


def diffusivity(omega: LocalFunction, spec: GibbsSpec, rho: float) -> float:
    """``D(rho) = d/drho int omega d nu_rho``."""
    return static_average(omega, spec, rho).d1


def current_function(c: RateTable) -> LocalFunction:
    """``j(eta) = c(eta) eta(0)(1 - eta(1))`` as a local function."""
    r = c.radius
    idx = np.arange(c.table.size)
    right_hop = ((idx >> r) & 1) * (1 - ((idx >> (r + 1)) & 1))
    return LocalFunction.from_values(-r, r + 1, c.table * right_hop)


def flux(c: RateTable, spec: GibbsSpec, rho: float) -> float:
    """``H(rho) = int j d nu_rho``."""
    return static_average(current_function(c), spec, rho).value


def flux_curve(c: RateTable, spec: GibbsSpec, rho: float) -> StaticAverage:
    """``H``, ``H'`` and ``H''`` at ``rho``."""
    return static_average(current_function(c), spec, rho)


def kpz_lambda(a: float, c: RateTable, spec: GibbsSpec, rho: float) -> float:
    """``lambda = (a/2) H''(rho)``; positive current means particles moving right."""
    return 0.5 * a * flux_curve(c, spec, rho).d2


def characteristic_velocity(c: RateTable, spec: GibbsSpec, rho: float) -> float:
    """``v = H'(rho)``."""
    return flux_curve(c, spec, rho).d1


def chi_times_d(omega: LocalFunction, spec: GibbsSpec, rho: float, h: float = 1e-2) -> StaticAverage:
    """``chi D`` and its density derivatives, from the compressibility and ``omega`` only."""
    if spec.is_product:
        p = COMPRESSIBILITY_PRODUCT * DensityPolynomial.of(omega).deriv(1)
        return StaticAverage(float(p(rho)), float(p.deriv(1)(rho)), float(p.deriv(2)(rho)), EXACT)

    def g(r):
        return compressibility(spec, r) * diffusivity(omega, spec, r)

    d1, d2, err = _richardson(g, rho, _step_for(rho, h))
    return StaticAverage(g(rho), d1, d2, FINITE_DIFFERENCE, err)


@dataclass
class EinsteinRow:
    rho: float
    dlambda_da: float
    half_chid_pp: float
    residual: float
    method: str


def einstein_relation_check(c: RateTable, omega: LocalFunction, spec: GibbsSpec, rho_grid,
                            a_grid=(0.0, 0.5, 1.0)) -> list[EinsteinRow]:
    """``|d lambda/da - (chi D)''/2|`` per density.

    The left side is fitted from ``lambda`` over ``a_grid`` (built from the
    current ``j``); the right side uses the compressibility and ``omega``.
    """
    a = np.asarray(a_grid, dtype=float)
    if a.size < 2:
        raise ValueError("a_grid needs at least two values")
    rows = []
    for rho in rho_grid:
        lam = np.array([kpz_lambda(ai, c, spec, rho) for ai in a])
        slope = float(np.polyfit(a, lam, 1)[0])
        cd = chi_times_d(omega, spec, rho)
        rhs = 0.5 * cd.d2
        method = EXACT if spec.is_product else FINITE_DIFFERENCE
        rows.append(EinsteinRow(float(rho), slope, rhs, abs(slope - rhs), method))
    return rows


CURVE_COLUMNS = ["rho", "chi", "D", "H", "Hp", "Hpp", "chiD_pp", "lambda", "einstein_residual",
                 "method", "scale"]


@dataclass
class ThermoCurve:
    """Per-density table of the transport coefficients for one model and asymmetry ``a``."""

    a: float
    scale: float
    rho: np.ndarray
    chi: np.ndarray
    D: np.ndarray
    H: np.ndarray
    Hp: np.ndarray
    Hpp: np.ndarray
    chiD_pp: np.ndarray
    method: list[str]

    @property
    def lam(self) -> np.ndarray:
        return 0.5 * self.a * self.Hpp

    @property
    def einstein_residual(self) -> np.ndarray:
        return np.abs(0.5 * self.Hpp - 0.5 * self.chiD_pp)

    def row(self, rho: float, tol: float = 1e-12) -> dict:
        hits = np.flatnonzero(np.abs(self.rho - rho) <= tol)
        if hits.size == 0:
            raise KeyError(f"no curve row at rho={rho}")
        i = int(hits[0])
        return {"rho": float(self.rho[i]), "chi": float(self.chi[i]), "D": float(self.D[i]),
                "H": float(self.H[i]), "Hp": float(self.Hp[i]), "Hpp": float(self.Hpp[i]),
                "chiD_pp": float(self.chiD_pp[i]), "lambda": float(self.lam[i]),
                "method": self.method[i], "scale": self.scale}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        lam, er = self.lam, self.einstein_residual
        for i in range(self.rho.size):
            w.writerow([repr(float(v)) for v in (self.rho[i], self.chi[i], self.D[i], self.H[i],
                                                 self.Hp[i], self.Hpp[i], self.chiD_pp[i],
                                                 lam[i], er[i])]
                       + [self.method[i], repr(self.scale)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, a: float) -> "ThermoCurve":
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
        return cls(a, float(rows[0]["scale"]), col("rho"), col("chi"), col("D"), col("H"),
                   col("Hp"), col("Hpp"), col("chiD_pp"), [r["method"] for r in rows])


def thermo_curve(c: RateTable, omega: LocalFunction, spec: GibbsSpec, rho_grid, a: float) -> ThermoCurve:
    rho = np.asarray(rho_grid, dtype=float)
    cols = {k: np.empty(rho.size) for k in ("chi", "D", "H", "Hp", "Hpp", "chiD_pp")}
    methods = []
    for i, r in enumerate(rho):
        hc = flux_curve(c, spec, r)
        cols["chi"][i] = compressibility(spec, r)
        cols["D"][i] = diffusivity(omega, spec, r)
        cols["H"][i], cols["Hp"][i], cols["Hpp"][i] = hc.value, hc.d1, hc.d2
        cols["chiD_pp"][i] = chi_times_d(omega, spec, r).d2
        methods.append(hc.method)
    return ThermoCurve(a, c.scale, rho, method=methods, **cols)


def uniform_grid(n: int = 99) -> np.ndarray:
    """``n`` interior densities ``1/(n+1), ..., n/(n+1)``."""
    return np.arange(1, n + 1) / (n + 1)
