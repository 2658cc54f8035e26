"""Exact equilibrium computations for one-dimensional finite-range Gibbs measures.

Grand-canonical (infinite-volume) quantities come from the Perron data of
a block transfer matrix; canonical expectations from exhaustive
enumeration of the particle-number slices of a ring.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import brentq

from .lattice import GibbsSpec, LocalFunction, RingConfiguration, bernoulli_phi, window_bits

MAX_TRANSFER_RANGE = 4
MAX_CANONICAL_ELL = 26
_CHUNK = 1 << 20


class TransferMatrix:
    """Block transfer matrix on states ``(eta(x), ..., eta(x+m-1))``, ``m = max(R, 1)``.

    ``T[s, s']`` carries the weight of all potential terms anchored at the
    leftmost site of ``s`` together with that site's fugacity factor.
    """

    def __init__(self, spec: GibbsSpec):
        R = spec.range
        if R > MAX_TRANSFER_RANGE:
            raise ValueError(f"potential range {R} exceeds {MAX_TRANSFER_RANGE}")
        self.spec = spec
        self.m = m = max(R, 1)
        n = 1 << m
        bits = window_bits(m + 1).astype(float)
        energy = spec.phi * bits[:, 0]
        for pattern, J in spec.couplings:
            energy = energy + spec.beta * J * bits[:, list(pattern)].prod(axis=1)
        # config c of m+1 sites -> (s = c & (n-1), s' = c >> 1)
        cfg = np.arange(1 << (m + 1))
        T = np.zeros((n, n))
        T[cfg & (n - 1), cfg >> 1] = np.exp(-(energy - energy.min()))
        self.log_offset = -energy.min()
        self.T = T

    @cached_property
    def _perron(self):
        w, vr = np.linalg.eig(self.T)
        order = np.argsort(-np.abs(w))
        lam = w[order[0]]
        if abs(lam.imag) > 1e-12 * abs(lam) or lam.real <= 0:
            raise ArithmeticError("dominant eigenvalue not real positive")
        if len(w) > 1 and abs(w[order[1]]) >= abs(lam) * (1 - 1e-13):
            raise ArithmeticError("degenerate dominant eigenvalue")
        lam = lam.real
        right = np.abs(vr[:, order[0]].real)
        wl, vl = np.linalg.eig(self.T.T)
        left = np.abs(vl[:, np.argmax(wl.real)].real)
        # one step of power iteration cleans up eig's rounding
        right = self.T @ right / lam
        left = self.T.T @ left / lam
        norm = left @ right
        sub = abs(w[order[1]]) / lam if len(w) > 1 else 0.0
        return lam, left / math.sqrt(norm), right / math.sqrt(norm), float(sub)

    @property
    def eigenvalue(self) -> float:
        return self._perron[0]

    @property
    def spectral_ratio(self) -> float:
        """``|lambda_2| / lambda_1``, the geometric decay rate of correlations."""
        return self._perron[3]

    def window_marginal(self, W: int) -> np.ndarray:
        """Infinite-volume probabilities of the ``2**W`` configurations of ``W`` sites."""
        lam, left, right, _ = self._perron
        m = self.m
        if W < m:
            full = self.window_marginal(m)
            return full.reshape(-1, 1 << W).sum(axis=0)
        cfg = np.arange(1 << W, dtype=np.int64)
        mask = (1 << m) - 1
        s = cfg & mask
        p = left[s].copy()
        P = self.T / lam
        for k in range(W - m):
            s_next = (cfg >> (k + 1)) & mask
            p *= P[s, s_next]
            s = s_next
        return p * right[s]

    def ring_window_marginal(self, W: int, L: int) -> np.ndarray:
        """Finite-ring (periodic, length ``L``) marginal of ``W`` consecutive sites."""
        m = self.m
        if W < m:
            return self.ring_window_marginal(m, L).reshape(-1, 1 << W).sum(axis=0)
        if L < W + 1 or L <= m:
            raise ValueError("ring too short for the requested window")
        lam = self.eigenvalue
        P = self.T / lam
        closing = np.linalg.matrix_power(P, L - (W - m))
        Z = np.trace(np.linalg.matrix_power(P, L))
        cfg = np.arange(1 << W, dtype=np.int64)
        mask = (1 << m) - 1
        s0 = s = cfg & mask
        p = np.ones(cfg.size)
        for k in range(W - m):
            s_next = (cfg >> (k + 1)) & mask
            p *= P[s, s_next]
            s = s_next
        return p * closing[s, s0] / Z

    def occupation_covariances(self):
        """``(rho, sum_{x>=1} Cov(eta(0), eta(x)))`` via the fundamental matrix."""
        lam, left, right, _ = self._perron
        n = 1 << self.m
        A = np.diag((np.arange(n) & 1).astype(float))
        P = self.T / lam
        Pi = np.outer(right, left)
        rho = left @ A @ right
        Q = P - Pi
        tail = Q @ np.linalg.solve(np.eye(n) - Q, np.eye(n))
        return float(rho), float(left @ A @ tail @ A @ right)


def _density_product(spec: GibbsSpec) -> float:
    e = spec.phi + spec.beta * spec.single_site_field
    return 1.0 / (1.0 + math.exp(e)) if e < 700 else 0.0


def density(spec: GibbsSpec) -> float:
    """``rho(phi) = int eta(0) d mu_{beta,phi}``."""
    if spec.is_product:
        return _density_product(spec)
    return TransferMatrix(spec).occupation_covariances()[0]


def product_polynomial(f: LocalFunction) -> np.ndarray:
    """Ascending coefficients of ``rho -> int f d(Bernoulli(rho))``."""
    sizes = np.array([bin(m).count("1") for m in range(f.coefficients.size)])
    return np.bincount(sizes, weights=f.coefficients, minlength=f.width + 1)


def grand_canonical_expectation(spec: GibbsSpec, f: LocalFunction) -> float:
    """``int f d mu_{beta,phi}`` in infinite volume."""
    if spec.is_product:
        rho = _density_product(spec)
        return float(np.polynomial.polynomial.polyval(rho, product_polynomial(f)))
    tm = TransferMatrix(spec)
    W = max(f.width, tm.m)
    g = f.extend(f.lo, f.lo + W - 1) if W > f.width else f
    return float(tm.window_marginal(W) @ g.values())


def ring_expectation(spec: GibbsSpec, f: LocalFunction, L: int) -> float:
    """Expectation under the finite-ring grand-canonical Gibbs measure (trace formula)."""
    tm = TransferMatrix(spec)
    W = max(f.width, tm.m)
    g = f.extend(f.lo, f.lo + W - 1) if W > f.width else f
    return float(tm.ring_window_marginal(W, L) @ g.values())


def fugacity_of_density(spec: GibbsSpec, rho: float, tol: float = 1e-12) -> float:
    """Fugacity ``phi`` with ``rho(phi) = rho``; ``spec.phi`` is ignored."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"density {rho} outside (0, 1)")
    return _fugacity(spec.with_phi(0.0), float(rho), tol)


@lru_cache(maxsize=4096)
def _fugacity(spec: GibbsSpec, rho: float, tol: float) -> float:
    base = bernoulli_phi(rho) - spec.beta * spec.single_site_field
    if spec.is_product:
        return base

    def g(phi):
        return density(spec.with_phi(phi)) - rho

    lo, hi, step = base - 1.0, base + 1.0, 1.0
    while g(lo) < 0:
        step *= 2
        lo -= step
    while g(hi) > 0:
        step *= 2
        hi += step
    phi = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(g(phi)) > tol:
        raise ArithmeticError(f"fugacity root not resolved: residual {g(phi):.3e}")
    return phi


def at_density(spec: GibbsSpec, rho: float) -> GibbsSpec:
    """``nu_rho`` as a ``GibbsSpec``."""
    return spec.with_phi(fugacity_of_density(spec, rho))


@dataclass
class Compressibility:
    value: float
    spectral_ratio: float


def compressibility(spec: GibbsSpec, rho: float, *, details: bool = False):
    """``chi(rho) = sum_x Cov(eta(0), eta(x))`` under ``nu_rho``.

    The correlation tail is summed in closed form through the fundamental
    matrix ``(I - P + Pi)^{-1}``; ``spectral_ratio`` bounds its geometric decay.
    """
    if spec.is_product:
        out = Compressibility(rho * (1.0 - rho), 0.0)
    else:
        tm = TransferMatrix(at_density(spec, rho))
        r, tail = tm.occupation_covariances()
        out = Compressibility(r * (1.0 - r) + 2.0 * tail, tm.spectral_ratio)
    return out if details else out.value


@dataclass
class DensityMap:
    """Grid of ``(phi, rho(phi))`` at fixed potential and ``beta``."""

    spec: GibbsSpec
    phis: np.ndarray
    rhos: np.ndarray

    @classmethod
    def build(cls, spec: GibbsSpec, phis) -> "DensityMap":
        phis = np.asarray(sorted(phis), dtype=float)
        rhos = np.array([density(spec.with_phi(p)) for p in phis])
        dm = cls(spec, phis, rhos)
        if not dm.is_monotone():
            raise ArithmeticError("rho(phi) not strictly decreasing on the grid")
        return dm

    @property
    def beta(self) -> float:
        return self.spec.beta

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.rhos) < 0) and np.all((self.rhos > 0) & (self.rhos < 1)))

    def phi_of(self, rho: float) -> float:
        return fugacity_of_density(self.spec, rho)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phi", "rho"])
        for p, r in zip(self.phis, self.rhos):
            w.writerow([repr(float(p)), repr(float(r))])
        return buf.getvalue()


def _ring_transition_powers(P: np.ndarray, L: int) -> list[np.ndarray]:
    powers = [np.eye(P.shape[0])]
    for _ in range(L):
        powers.append(powers[-1] @ P)
    return powers


def sample_gibbs(spec: GibbsSpec, L: int, rng: np.random.Generator, size: int | None = None):
    """Exact samples of the finite-ring grand-canonical Gibbs measure.

    Block states are drawn sequentially from their conditional laws given
    the first block, which closes the ring. Returns a ``RingConfiguration``
    when ``size`` is None, else a ``(size, L)`` uint8 array.
    """
    if L <= 2 * spec.range:
        raise ValueError("ring must be longer than twice the potential range")
    n_samples = 1 if size is None else int(size)
    if spec.is_product:
        occ = (rng.random((n_samples, L)) < _density_product(spec)).astype(np.uint8)
    else:
        tm = TransferMatrix(spec)
        n = 1 << tm.m
        P = tm.T / tm.eigenvalue
        powers = _ring_transition_powers(P, L)
        diag = np.diag(powers[L])
        s0 = _draw(rng, np.broadcast_to(diag / diag.sum(), (n_samples, n)))
        s = s0
        occ = np.empty((n_samples, L), dtype=np.uint8)
        occ[:, 0] = s0 & 1
        for k in range(L - 1):
            w = P[s, :] * powers[L - k - 1][:, s0].T
            s = _draw(rng, w / w.sum(axis=1, keepdims=True))
            occ[:, k + 1] = s & 1
    return RingConfiguration(occ[0]) if size is None else occ


def _draw(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1)


def _ring_energies(spec: GibbsSpec, cfg: np.ndarray, ell: int) -> np.ndarray:
    energy = np.zeros(cfg.size)
    for pattern, J in spec.couplings:
        for x in range(ell):
            prod = np.ones(cfg.size, dtype=np.int64)
            for y in pattern:
                prod &= (cfg >> ((x + y) % ell)) & 1
            energy += J * prod
    return energy


@dataclass
class CanonicalSpec:
    ell: int
    k: int

    def __post_init__(self):
        if self.ell < 1 or not 0 <= self.k <= self.ell:
            raise ValueError(f"invalid canonical slice (ell={self.ell}, k={self.k})")

    @property
    def sigma(self) -> float:
        return self.k / self.ell


@dataclass
class CanonicalTable:
    """Per-slice results of one enumeration of ``{0,1}^ell``.

    ``log_weight[k]`` is ``log sum_{|eta|=k} exp(-beta H(eta))``; ``psi[k]``
    the canonical expectation of the enumerated function.
    """

    ell: int
    psi: np.ndarray
    log_weight: np.ndarray = field(repr=False)

    def slice_probabilities(self, phi: float) -> np.ndarray:
        k = np.arange(self.ell + 1)
        a = self.log_weight - phi * k
        a = a - a.max()
        p = np.exp(a)
        return p / p.sum()


def canonical_table(f: LocalFunction, spec: GibbsSpec, ell: int) -> CanonicalTable:
    """Canonical expectations of ``f`` on the ring ``Lambda_ell`` for every ``k``."""
    if ell > MAX_CANONICAL_ELL:
        raise ValueError(f"ell={ell} exceeds enumeration cap {MAX_CANONICAL_ELL}")
    if f.width > ell:
        raise ValueError("local function does not fit in the ring")
    values = f.values()
    num = np.zeros(ell + 1)
    den = np.zeros(ell + 1)
    shift = None
    total = 1 << ell
    for start in range(0, total, _CHUNK):
        cfg = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        k = np.bitwise_count(cfg) if hasattr(np, "bitwise_count") else _popcount(cfg)
        idx = np.zeros(cfg.size, dtype=np.int64)
        for i, y in enumerate(range(f.lo, f.hi + 1)):
            idx |= ((cfg >> (y % ell)) & 1) << i
        if spec.beta != 0.0 and spec.couplings:
            e = -spec.beta * _ring_energies(spec, cfg, ell)
            if shift is None:
                # a fixed offset keeps exp() in range; it cancels in every ratio
                shift = float(e.max())
            w = np.exp(e - shift)
        else:
            w = np.ones(cfg.size)
            shift = 0.0
        den += np.bincount(k, weights=w, minlength=ell + 1)
        num += np.bincount(k, weights=w * values[idx], minlength=ell + 1)
    with np.errstate(divide="ignore"):
        log_w = np.log(den) + shift
    return CanonicalTable(ell, num / den, log_w)


def _popcount(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    c = np.zeros(a.shape, dtype=np.int64)
    while np.any(a):
        c += a & 1
        a >>= 1
    return c


def canonical_expectation(f: LocalFunction, spec: GibbsSpec, c: CanonicalSpec) -> float:
    """``psi_f^ell(sigma) = E[f | sum eta = k]`` on the ring ``Lambda_ell``."""
    return float(canonical_table(f, spec, c.ell).psi[c.k])


@dataclass
class ExpansionRow:
    ell: int
    k: int
    sigma: float
    psi: float
    taylor: float
    residual: float


@dataclass
class ExpansionReport:
    """Residuals of the second-order density expansion of ``psi_f^ell``."""

    rho: float
    f_value: float
    f_d1: float
    f_d2: float
    rows: list[ExpansionRow]
    max_residual: dict[int, float]
    exponent: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ell", "k", "sigma", "psi", "taylor", "residual"])
        for r in self.rows:
            w.writerow([r.ell, r.k, repr(r.sigma), repr(r.psi), repr(r.taylor), repr(r.residual)])
        return buf.getvalue()


def equivalence_expansion_report(f: LocalFunction, spec: GibbsSpec, rho: float,
                                 ells) -> ExpansionReport:
    """Compare ``psi_f^ell(sigma)`` with ``f~ + f~'(s-rho) + f~''(s-rho)^2/2``.

    Rows cover every ``k`` with ``|k/ell - rho| <= ell**-0.5``; ``exponent``
    is the log-log slope of the largest residual against ``ell``.
    """
    from .thermodynamics import static_average

    avg = static_average(f, spec, rho)
    rows: list[ExpansionRow] = []
    worst: dict[int, float] = {}
    for ell in ells:
        table = canonical_table(f, spec, ell)
        band = ell ** -0.5
        worst[ell] = 0.0
        for k in range(ell + 1):
            sigma = k / ell
            if abs(sigma - rho) > band + 1e-15:
                continue
            d = sigma - rho
            taylor = avg.value + avg.d1 * d + 0.5 * avg.d2 * d * d
            res = float(table.psi[k] - taylor)
            rows.append(ExpansionRow(ell, k, sigma, float(table.psi[k]), taylor, res))
            worst[ell] = max(worst[ell], abs(res))
    ls = np.array(sorted(worst), dtype=float)
    ms = np.array([worst[int(l)] for l in ls])
    if len(ls) >= 2 and np.all(ms > 0):
        exponent = float(np.polyfit(np.log(ls), np.log(ms), 1)[0])
    else:
        exponent = float("nan")
    return ExpansionReport(rho, avg.value, avg.d1, avg.d2, rows, worst, exponent)
