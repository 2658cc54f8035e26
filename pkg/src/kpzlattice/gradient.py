"""Mechanical checks of the structural rate conditions.

Every check enumerates all configurations of a finite window around the
bond ``(0, 1)`` and reports a max-norm residual; nothing is rounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .lattice import (GibbsSpec, LocalFunction, RateTable, _exchange_delta_table, exchange_index,
                      window_bits)
from .thermodynamics import chi_times_d, static_average

EXACT_TOL = 1e-10
SUSPICIOUS_TOL = 1e-6


def classify(residual: float) -> str:
    if residual <= EXACT_TOL:
        return "exact"
    if residual <= SUSPICIOUS_TOL:
        return "suspicious"
    return "fails"


def check_detailed_balance(c: RateTable, spec: GibbsSpec | None = None) -> float:
    """``max |c(eta) - exp(-beta Delta H) c(eta^{0,1})|`` over exchangeable configurations."""
    spec = c.spec if spec is None else spec
    r = max(c.radius, spec.range)
    lo, hi = -r, r + 1
    rates = c.on_window(lo, hi)
    delta = _exchange_delta_table(spec, r)
    idx = np.arange(rates.size)
    swapped = exchange_index(idx, r)
    exch = ((idx >> r) & 1) != ((idx >> (r + 1)) & 1)
    res = rates - np.exp(-spec.beta * delta) * rates[swapped]
    return float(np.max(np.abs(res[exch]), initial=0.0))


def _gradient_matrix(K: int) -> np.ndarray:
    """Rows: configurations of ``{-K..K+1}``; columns: subsets of ``{-K..K}``.

    Entry ``eta(A) - eta(A + 1)``, the action of ``omega -> omega - theta_1 omega``.
    """
    n = 2 * K + 2
    cfg = np.arange(1 << n, dtype=np.int64)
    subsets = np.arange(1 << (n - 1), dtype=np.int64)
    here = (cfg[:, None] & subsets[None, :]) == subsets[None, :]
    shifted = ((cfg[:, None] >> 1) & subsets[None, :]) == subsets[None, :]
    return here.astype(float) - shifted.astype(float)


def _gradient_rhs(c: RateTable, K: int) -> np.ndarray:
    rates = c.on_window(-K, K + 1)
    bits = window_bits(2 * K + 2)
    return rates * (bits[:, K].astype(float) - bits[:, K + 1])


@dataclass
class GradientSolution:
    omega: LocalFunction
    residual: float
    gauge: str = "constant term fixed to 0 (minimum-norm least squares)"

    @property
    def status(self) -> str:
        return classify(self.residual)

    def to_json(self) -> dict:
        return {"omega": self.omega.to_json(), "residual": self.residual,
                "status": self.status, "gauge": self.gauge}


def gradient_residual(c: RateTable, omega: LocalFunction, K: int | None = None) -> float:
    """Max-norm of ``c(eta)(eta(0)-eta(1)) - omega(eta) + omega(theta_1 eta)``."""
    K = max(c.radius, -omega.lo, omega.hi) if K is None else K
    w = omega.extend(-K, K)
    return float(np.max(np.abs(_gradient_matrix(K) @ w.coefficients - _gradient_rhs(c, K))))


def solve_gradient_condition(c: RateTable, K: int | None = None,
                             initial: LocalFunction | None = None) -> GradientSolution:
    """Least-squares ``omega`` on ``{-K..K}`` with ``c(eta)(eta(0)-eta(1)) = omega - theta_1 omega``.

    The constant direction is the only kernel of the system; the
    minimum-norm solution puts zero weight on it. With ``initial`` the
    solver refines ``initial`` instead of starting from zero.
    """
    K = c.radius + 1 if K is None else K
    if K < c.radius:
        raise ValueError(f"omega radius K={K} smaller than rate radius {c.radius}")
    A = _gradient_matrix(K)
    rhs = _gradient_rhs(c, K)
    x0 = np.zeros(A.shape[1]) if initial is None else initial.extend(-K, K).coefficients.copy()
    x0[0] = 0.0
    dx, *_ = np.linalg.lstsq(A, rhs - A @ x0, rcond=None)
    coeffs = x0 + dx
    coeffs[0] = 0.0
    residual = float(np.max(np.abs(A @ coeffs - rhs)))
    return GradientSolution(LocalFunction(-K, K, coeffs), residual)


def _current_identity_sides(c: RateTable, omega: LocalFunction):
    K = max(c.radius, -omega.lo, omega.hi)
    lo, hi = -K, K + 1
    rates = c.on_window(lo, hi)
    bits = window_bits(hi - lo + 1).astype(float)
    e0, e1 = bits[:, K], bits[:, K + 1]
    w = omega.extend(lo, hi).values()
    w_shift = omega.shift(1).extend(lo, hi).values()
    lhs = rates * e1 * (1 - e0)
    rhs = 0.5 * rates * (e1 - e0) ** 2 + 0.5 * (w_shift - w)
    return lhs, rhs


def verify_current_identity(c: RateTable, omega: LocalFunction) -> float:
    """Pointwise max of ``c eta(1)(1-eta(0)) - [c (eta(1)-eta(0))^2 + omega(theta_1) - omega]/2``."""
    lhs, rhs = _current_identity_sides(c, omega)
    return float(np.max(np.abs(lhs - rhs)))


def exchange_activity(c: RateTable) -> LocalFunction:
    """``c(eta)(eta(1) - eta(0))^2``."""
    r = c.radius
    idx = np.arange(c.table.size)
    d = ((idx >> r) & 1) ^ ((idx >> (r + 1)) & 1)
    return LocalFunction.from_values(-r, r + 1, c.table * d)


@dataclass
class FDRow:
    rho: float
    activity: float
    two_chi_d: float
    residual: float


def verify_fd_relation(c: RateTable, omega: LocalFunction, spec: GibbsSpec, rho_grid) -> list[FDRow]:
    """``|int c (eta(1)-eta(0))^2 d nu_rho - 2 chi D|`` per density."""
    act = exchange_activity(c)
    rows = []
    for rho in rho_grid:
        lhs = static_average(act, spec, rho).value
        rhs = 2.0 * chi_times_d(omega, spec, rho).value
        rows.append(FDRow(float(rho), lhs, rhs, abs(lhs - rhs)))
    return rows


@dataclass
class FeasibilityCertificate:
    feasible: bool
    rate: RateTable | None = None
    gradient: GradientSolution | None = None
    max_violation: float | None = None
    witness: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"status": "feasible" if self.feasible else "infeasible"}
        if self.feasible:
            out["rate"] = self.rate.to_json()
            out["omega"] = self.gradient.omega.to_json()
            out["max_violation"] = self.max_violation
        else:
            out["witness"] = self.witness
        return out


class _DesignLP:
    """Joint linear system in ``(c, omega)``; columns are ``[c..., omega...]``."""

    def __init__(self, spec: GibbsSpec, r: int, K: int):
        self.spec, self.r, self.K = spec, r, K
        n_c = 1 << (2 * r + 2)
        n_w = 1 << (2 * K + 1)
        self.n_c, self.n_w = n_c, n_w
        rows, names = [], []
        # detailed balance on the rate window itself
        R = max(r, spec.range)
        delta = _exchange_delta_table(spec, R)
        idx = np.arange(1 << (2 * R + 2))
        sub = (idx >> (R - r)) & (n_c - 1)
        sub_sw = exchange_index(sub, r)
        exch = ((idx >> R) & 1) != ((idx >> (R + 1)) & 1)
        seen = set()
        for i in np.flatnonzero(exch):
            a, b, wgt = int(sub[i]), int(sub_sw[i]), float(np.exp(-spec.beta * delta[i]))
            key = (a, b, round(wgt, 15))
            if key in seen:
                continue
            seen.add(key)
            row = np.zeros(n_c + n_w)
            row[a] += 1.0
            row[b] -= wgt
            rows.append(row)
            names.append(f"detailed_balance[{a}<->{b}]")
        # gradient condition on {-K..K+1}
        G = _gradient_matrix(K)
        bits = window_bits(2 * K + 2)
        cfg = np.arange(1 << (2 * K + 2))
        csub = (cfg >> (K - r)) & (n_c - 1)
        sign = bits[:, K].astype(float) - bits[:, K + 1]
        for i in range(cfg.size):
            row = np.zeros(n_c + n_w)
            row[csub[i]] += sign[i]
            row[n_c:] = -G[i]
            rows.append(row)
            names.append(f"gradient[{i}]")
        self.A_eq = np.array(rows)
        self.names = names
        cidx = np.arange(n_c)
        self.exchangeable = ((cidx >> r) & 1) != ((cidx >> (r + 1)) & 1)

    def bounds(self, lower: float, upper: float):
        b = [(lower, upper) if e else (0.0, 0.0) for e in self.exchangeable]
        b += [(None, None)] * self.n_w
        b[self.n_c] = (0.0, 0.0)  # omega gauge
        return b

    def violation(self, x: np.ndarray, lower: float, upper: float) -> float:
        eq = float(np.max(np.abs(self.A_eq @ x)))
        c = x[: self.n_c]
        ex = self.exchangeable
        bnd = max(float(np.max(np.abs(c[~ex]), initial=0.0)),
                  float(np.max(lower - c[ex], initial=0.0)),
                  float(np.max(c[ex] - upper, initial=0.0)))
        return max(eq, bnd)


def design_gradient_rate(spec: GibbsSpec, r: int, K: int | None = None, *,
                         lower: float = 1e-6, upper: float = 1.0) -> FeasibilityCertificate:
    """Search for a rate on ``{-r..r+1}`` that is reversible for ``spec`` and gradient.

    Solves the linear feasibility problem in ``(c, omega)`` with
    ``lower <= c <= upper`` on exchangeable configurations, maximizing
    ``sum c`` to pick a well-scaled point. Infeasible problems return a
    Farkas-type witness from a phase-one problem.
    """
    K = r + 1 if K is None else K
    if r > 2 or K > 3:
        raise ValueError("design windows limited to r <= 2, K <= 3")
    if K < r:
        raise ValueError("K must be at least r")
    if lower > upper:
        return FeasibilityCertificate(False, witness={
            "kind": "bound", "constraint": "lower <= c <= upper", "lower": lower, "upper": upper,
            "combination": "c - c = 0 >= lower - upper > 0"})
    lp = _DesignLP(spec, r, K)
    n = lp.n_c + lp.n_w
    cost = np.zeros(n)
    cost[: lp.n_c] = -1.0
    bounds = lp.bounds(lower, upper)
    res = linprog(cost, A_eq=lp.A_eq, b_eq=np.zeros(lp.A_eq.shape[0]), bounds=bounds, method="highs")
    if res.status == 0:
        x = res.x
        viol = lp.violation(x, lower, upper)
        rate = RateTable(r, np.clip(x[: lp.n_c], 0.0, 1.0), family="designed", spec=spec.with_phi(0.0))
        omega = LocalFunction(-K, K, x[lp.n_c:])
        grad = GradientSolution(omega, gradient_residual(rate, omega, K), gauge="constant term fixed to 0")
        return FeasibilityCertificate(True, rate, grad, viol)
    return FeasibilityCertificate(False, witness=_phase_one_witness(lp, bounds))


def _phase_one_witness(lp: _DesignLP, bounds) -> dict:
    m, n = lp.A_eq.shape
    A = np.hstack([lp.A_eq, np.eye(m), -np.eye(m)])
    cost = np.concatenate([np.zeros(n), np.ones(2 * m)])
    res = linprog(cost, A_eq=A, b_eq=np.zeros(m), bounds=list(bounds) + [(0, None)] * (2 * m),
                  method="highs")
    y = np.asarray(res.eqlin.marginals) if res.status == 0 else np.zeros(m)
    support = np.flatnonzero(np.abs(y) > 1e-9)
    return {
        "kind": "farkas",
        "phase_one_objective": float(res.fun) if res.status == 0 else None,
        "combination": {lp.names[i]: float(y[i]) for i in support},
    }


def generator_invariance_residual(c: RateTable, spec: GibbsSpec, L: int) -> float:
    """``max_eta |(pi Q)(eta)| / pi(eta)`` for the ring generator of ``c_gamma``.

    ``pi`` is the finite-ring Gibbs weight ``exp(-beta H)``; the fugacity
    factor is constant on each particle-number sector and drops out.
    """
    if L > 16:
        raise ValueError("exact generator limited to L <= 16")
    if L < 2 * c.radius + 2:
        raise ValueError("ring shorter than the rate window")
    cfg = np.arange(1 << L, dtype=np.int64)
    occ = ((cfg[:, None] >> np.arange(L)) & 1).astype(np.uint8)
    energy = np.zeros(cfg.size)
    for pattern, J in spec.couplings:
        for x in range(L):
            prod = np.ones(cfg.size, dtype=np.int64)
            for y in pattern:
                prod &= occ[:, (x + y) % L]
            energy += J * prod
    logpi = -spec.beta * energy
    pi = np.exp(logpi - logpi.max())
    flow = np.zeros(cfg.size)
    for x in range(L):
        rate = c(occ, x)
        y = (x + 1) % L
        target = cfg ^ (((occ[:, x] ^ occ[:, y]).astype(np.int64)) * ((1 << x) | (1 << y)))
        out = pi * rate
        flow -= out
        np.add.at(flow, target, out)
    return float(np.max(np.abs(flow) / pi))
