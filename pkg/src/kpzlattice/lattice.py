"""Configurations, local functions, potentials and exchange-rate tables.

Bit conventions used throughout the package:

* a window of sites ``[lo, hi]`` is encoded as an integer whose bit ``i``
  is the occupation of site ``lo + i`` (little-endian, leftmost site first);
* a subset ``A`` of a window is encoded the same way, so the product basis
  ``eta(A)`` and window configurations share one index space.

Rate tables live on the window ``{-r, ..., r+1}`` around the bond ``(0, 1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np


def window_bits(n: int) -> np.ndarray:
    """All ``2**n`` configurations of ``n`` sites as a ``(2**n, n)`` 0/1 array."""
    idx = np.arange(1 << n, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def _zeta(coeffs: np.ndarray) -> np.ndarray:
    # subset-sum transform: out[m] = sum_{A subset of m} coeffs[A]
    out = np.array(coeffs, dtype=float)
    n = out.size.bit_length() - 1
    for i in range(n):
        v = out.reshape(-1, 2, 1 << i)
        v[:, 1, :] += v[:, 0, :]
    return out


def _moebius(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    n = out.size.bit_length() - 1
    for i in range(n):
        v = out.reshape(-1, 2, 1 << i)
        v[:, 1, :] -= v[:, 0, :]
    return out


class RingConfiguration:
    """Occupancies of a periodic lattice of ``L`` sites.

    The only mutation is :meth:`exchange_inplace`, which preserves the
    particle count by construction.
    """

    __slots__ = ("occupancies", "particle_count")

    def __init__(self, occupancies: Iterable[int]):
        occ = np.array(list(occupancies) if not isinstance(occupancies, np.ndarray) else occupancies,
                       dtype=np.uint8)
        if occ.ndim != 1 or occ.size == 0:
            raise ValueError("occupancies must be a non-empty 1-d sequence")
        if np.any(occ > 1):
            raise ValueError("occupancies must be 0 or 1")
        self.occupancies = occ
        self.particle_count = int(occ.sum())

    @property
    def size(self) -> int:
        return self.occupancies.size

    def __len__(self) -> int:
        return self.occupancies.size

    def __getitem__(self, x: int) -> int:
        return int(self.occupancies[x % self.occupancies.size])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RingConfiguration):
            return NotImplemented
        return np.array_equal(self.occupancies, other.occupancies)

    def __repr__(self) -> str:
        return f"RingConfiguration({''.join(map(str, self.occupancies.tolist()))})"

    def copy(self) -> "RingConfiguration":
        return RingConfiguration(self.occupancies.copy())

    def exchange_inplace(self, x: int) -> None:
        L = self.occupancies.size
        a, b = x % L, (x + 1) % L
        occ = self.occupancies
        occ[a], occ[b] = occ[b], occ[a]


def exchange(eta: RingConfiguration, x: int) -> RingConfiguration:
    """Return ``eta^{x,x+1}``: occupations of ``x`` and ``x+1`` swapped."""
    if not 0 <= x < eta.size:
        raise ValueError(f"bond index {x} outside [0, {eta.size})")
    out = eta.copy()
    out.exchange_inplace(x)
    return out


@dataclass(frozen=True, eq=False)
class LocalFunction:
    """``f(eta) = sum_A coeff(A) prod_{x in A} eta(x)`` over a window ``[lo, hi]``.

    ``coefficients[m]`` is the coefficient of the subset encoded by ``m``.
    """

    lo: int
    hi: int
    coefficients: np.ndarray

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError("empty window")
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (1 << self.width,):
            raise ValueError(f"need {1 << self.width} coefficients, got {c.shape}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @classmethod
    def from_terms(cls, terms: Mapping[Sequence[int], float], lo: int | None = None,
                   hi: int | None = None) -> "LocalFunction":
        """Build from ``{(sites...): coeff}``; ``()`` is the constant term."""
        sites = [s for key in terms for s in key]
        lo = min(sites, default=0) if lo is None else lo
        hi = max(sites, default=0) if hi is None else hi
        coeffs = np.zeros(1 << (hi - lo + 1))
        for key, value in terms.items():
            mask = 0
            for s in set(key):
                if not lo <= s <= hi:
                    raise ValueError(f"site {s} outside window [{lo}, {hi}]")
                mask |= 1 << (s - lo)
            coeffs[mask] += value
        return cls(lo, hi, coeffs)

    @classmethod
    def from_values(cls, lo: int, hi: int, values: np.ndarray) -> "LocalFunction":
        """Build from the table of values over all window configurations."""
        return cls(lo, hi, _moebius(np.asarray(values, dtype=float)))

    @classmethod
    def occupation(cls, x: int = 0) -> "LocalFunction":
        return cls.from_terms({(x,): 1.0})

    @classmethod
    def constant(cls, value: float) -> "LocalFunction":
        return cls(0, 0, np.array([value, 0.0]))

    def values(self) -> np.ndarray:
        """Value of ``f`` at every window configuration (same bit order)."""
        return _zeta(self.coefficients)

    def extend(self, lo: int, hi: int) -> "LocalFunction":
        """Same function, represented on the larger window ``[lo, hi]``."""
        if lo > self.lo or hi < self.hi:
            raise ValueError("extend() can only enlarge the window")
        coeffs = np.zeros(1 << (hi - lo + 1))
        idx = np.arange(1 << self.width, dtype=np.int64) << (self.lo - lo)
        coeffs[idx] = self.coefficients
        return LocalFunction(lo, hi, coeffs)

    def shift(self, z: int) -> "LocalFunction":
        """``theta_z f``: same coefficients, window translated by ``z``."""
        return LocalFunction(self.lo + z, self.hi + z, self.coefficients)

    def _aligned(self, other: "LocalFunction"):
        lo, hi = min(self.lo, other.lo), max(self.hi, other.hi)
        return self.extend(lo, hi), other.extend(lo, hi)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = LocalFunction.constant(float(other))
        a, b = self._aligned(other)
        return LocalFunction(a.lo, a.hi, a.coefficients + b.coefficients)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, alpha: float) -> "LocalFunction":
        return LocalFunction(self.lo, self.hi, float(alpha) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def allclose(self, other: "LocalFunction", atol: float = 1e-12) -> bool:
        a, b = self._aligned(other)
        return bool(np.allclose(a.coefficients, b.coefficients, rtol=0, atol=atol))

    def __call__(self, eta, x: int = 0) -> float:
        return evaluate_local(self, eta, x)

    def to_json(self) -> dict:
        return {
            "window": [self.lo, self.hi],
            "coefficients": {str(m): float(c) for m, c in enumerate(self.coefficients) if c != 0.0},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "LocalFunction":
        lo, hi = data["window"]
        coeffs = np.zeros(1 << (hi - lo + 1))
        for key, value in data["coefficients"].items():
            coeffs[int(key)] = value
        return cls(lo, hi, coeffs)


def window_index(occ: np.ndarray, lo: int, hi: int, x=0) -> np.ndarray:
    """Bit-index of the window ``[x+lo, x+hi]`` (mod L) of ``occ``.

    ``occ`` may carry leading batch axes; ``x`` may be an integer array.
    """
    occ = np.asarray(occ)
    L = occ.shape[-1]
    x = np.asarray(x)
    idx = np.zeros(np.broadcast_shapes(occ.shape[:-1], x.shape), dtype=np.int64)
    for i, y in enumerate(range(lo, hi + 1)):
        idx |= occ[..., (x + y) % L].astype(np.int64) << i
    return idx


def evaluate_local(f: LocalFunction, eta, x=0):
    """``f_x(eta) = f(theta_{-x} eta)`` on a ring, with periodic wrap."""
    occ = eta.occupancies if isinstance(eta, RingConfiguration) else np.asarray(eta)
    if f.width > occ.shape[-1]:
        raise ValueError("local function window wider than the ring")
    out = f.values()[window_index(occ, f.lo, f.hi, x)]
    return float(out) if np.ndim(out) == 0 else out


def _normalize_pattern(sites: Sequence[int]) -> tuple[int, ...]:
    s = sorted(set(int(v) for v in sites))
    if not s:
        raise ValueError("empty coupling pattern")
    return tuple(v - s[0] for v in s)


@dataclass(frozen=True)
class GibbsSpec:
    """Finite-range translation-invariant potential with ``beta`` and fugacity ``phi``.

    Weights are ``exp(-beta * H - phi * N)``. Patterns are stored relative
    to their leftmost site.
    """

    couplings: tuple[tuple[tuple[int, ...], float], ...] = ()
    beta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        merged: dict[tuple[int, ...], float] = {}
        for pattern, J in self.couplings:
            key = _normalize_pattern(pattern)
            merged[key] = merged.get(key, 0.0) + float(J)
        object.__setattr__(self, "couplings",
                           tuple(sorted((k, v) for k, v in merged.items() if v != 0.0)))

    @property
    def range(self) -> int:
        return max((p[-1] for p, _ in self.couplings), default=0)

    @property
    def single_site_field(self) -> float:
        return sum(J for p, J in self.couplings if len(p) == 1)

    @property
    def is_product(self) -> bool:
        """True when the Gibbs measure is Bernoulli (no multi-site interaction)."""
        return self.beta == 0.0 or all(len(p) == 1 for p, _ in self.couplings)

    @property
    def is_particle_hole_symmetric(self) -> bool:
        return self.flipped().couplings == self.couplings

    def with_phi(self, phi: float) -> "GibbsSpec":
        return GibbsSpec(self.couplings, self.beta, float(phi))

    def flipped(self) -> "GibbsSpec":
        """Potential of the particle-hole image, up to an additive constant."""
        # prod (1 - eta) expanded; the fugacity term maps phi -> -phi
        terms: dict[tuple[int, ...], float] = {}
        for pattern, J in self.couplings:
            n = len(pattern)
            for mask in range(1, 1 << n):
                sub = tuple(pattern[i] for i in range(n) if mask >> i & 1)
                sign = (-1) ** len(sub)
                terms[sub] = terms.get(sub, 0.0) + sign * J
        flat: dict[tuple[int, ...], float] = {}
        for sub, J in terms.items():
            key = _normalize_pattern(sub)
            flat[key] = flat.get(key, 0.0) + J
        return GibbsSpec(tuple(flat.items()), self.beta, -self.phi)

    def ring_energy(self, eta) -> float:
        """Full ``sum_x sum_A J_A eta(A + x)`` on a ring (brute force)."""
        occ = eta.occupancies if isinstance(eta, RingConfiguration) else np.asarray(eta)
        L = occ.size
        total = 0.0
        for pattern, J in self.couplings:
            for x in range(L):
                if all(occ[(x + y) % L] for y in pattern):
                    total += J
        return total

    def to_json(self) -> dict:
        return {
            "couplings": [{"sites": list(p), "J": J} for p, J in self.couplings],
            "beta": self.beta,
            "phi": self.phi,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "GibbsSpec":
        couplings = tuple((tuple(c["sites"]), float(c["J"])) for c in data.get("couplings", []))
        return cls(couplings, float(data.get("beta", 0.0)), float(data.get("phi", 0.0)))


def nearest_neighbor(J: float, beta: float, phi: float = 0.0) -> GibbsSpec:
    return GibbsSpec((((0, 1), J),), beta, phi)


def hamiltonian_exchange_delta(spec: GibbsSpec, eta: RingConfiguration, x: int) -> float:
    """``H(eta^{x,x+1}) - H(eta)`` from the terms touching sites ``x``, ``x+1``."""
    L = eta.size
    occ = eta.occupancies
    a, b = x % L, (x + 1) % L
    if occ[a] == occ[b]:
        return 0.0
    new = occ.copy()
    new[a], new[b] = occ[b], occ[a]
    delta = 0.0
    for pattern, J in spec.couplings:
        diam = pattern[-1]
        if diam >= L:
            raise ValueError("potential range exceeds ring size")
        bases = {(x - diam + k) % L for k in range(diam + 2)}
        for base in bases:
            sites = [(base + y) % L for y in pattern]
            if a not in sites and b not in sites:
                continue
            delta += J * (int(all(new[s] for s in sites)) - int(all(occ[s] for s in sites)))
    return delta


def _exchange_delta_table(spec: GibbsSpec, r: int) -> np.ndarray:
    """``Delta H`` for the (0,1) exchange at every configuration of ``{-r..r+1}``."""
    n = 2 * r + 2
    bits = window_bits(n).astype(np.int64)
    swapped = bits.copy()
    swapped[:, [r, r + 1]] = bits[:, [r + 1, r]]
    delta = np.zeros(bits.shape[0])
    for pattern, J in spec.couplings:
        diam = pattern[-1]
        if diam > r:
            raise ValueError("rate window narrower than the potential range")
        for base in range(-diam, 2):
            cols = [base + y + r for y in pattern]
            if r not in cols and r + 1 not in cols:
                continue
            delta += J * (swapped[:, cols].prod(axis=1) - bits[:, cols].prod(axis=1))
    return delta


def exchange_index(idx, r: int):
    """Index of the configuration with sites 0 and 1 swapped."""
    idx = np.asarray(idx, dtype=np.int64)
    b0 = (idx >> r) & 1
    b1 = (idx >> (r + 1)) & 1
    return idx ^ ((b0 ^ b1) * (3 << r))


@dataclass(frozen=True, eq=False)
class RateTable:
    """Exchange rate ``c`` tabulated on the window ``{-r, ..., r+1}``.

    ``table`` holds the symmetric rate; ``rates`` applies the asymmetry
    ``c_gamma = c (1 - gamma eta(1)(1 - eta(0)))``. ``spec`` is the Gibbs
    measure the rate is declared reversible for and ``scale`` the
    normalization factor already folded into ``table``.
    """

    radius: int
    table: np.ndarray
    gamma: float = 0.0
    family: str = "custom"
    spec: GibbsSpec = field(default_factory=GibbsSpec)
    scale: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float).copy()
        n = 2 * self.radius + 2
        if t.shape != (1 << n,):
            raise ValueError(f"rate table for radius {self.radius} needs {1 << n} entries")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        idx = np.arange(t.size)
        same = ((idx >> self.radius) & 1) == ((idx >> (self.radius + 1)) & 1)
        if np.any(t[same] != 0.0):
            raise ValueError("exclusion rule violated: c(eta) != 0 where eta(0) == eta(1)")
        if np.any(t[~same] <= 0.0):
            raise ValueError("ergodicity violated: c(eta) <= 0 where eta(0) != eta(1)")
        if np.any(t > 1.0):
            raise ValueError("rates must be bounded by 1")
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    @property
    def window(self) -> tuple[int, int]:
        return -self.radius, self.radius + 1

    def asymmetrized(self, gamma: float) -> "RateTable":
        return RateTable(self.radius, self.table, gamma, self.family, self.spec, self.scale)

    @property
    def rates(self) -> np.ndarray:
        """Table of ``c_gamma``."""
        idx = np.arange(self.table.size)
        left_hop = ((idx >> (self.radius + 1)) & 1) & (1 - ((idx >> self.radius) & 1))
        return self.table * (1.0 - self.gamma * left_hop)

    def on_window(self, lo: int, hi: int, asymmetric: bool = False) -> np.ndarray:
        """Rate values indexed by configurations of a window containing ours."""
        r = self.radius
        if lo > -r or hi < r + 1:
            raise ValueError("window does not contain the rate window")
        idx = np.arange(1 << (hi - lo + 1), dtype=np.int64)
        sub = (idx >> (-r - lo)) & ((1 << (2 * r + 2)) - 1)
        return (self.rates if asymmetric else self.table)[sub]

    def as_local_function(self, asymmetric: bool = False) -> LocalFunction:
        lo, hi = self.window
        return LocalFunction.from_values(lo, hi, self.rates if asymmetric else self.table)

    def __call__(self, eta, x: int = 0) -> float:
        """``c_gamma(theta_{-x} eta)``, the rate of the exchange at bond ``(x, x+1)``."""
        occ = eta.occupancies if isinstance(eta, RingConfiguration) else np.asarray(eta)
        out = self.rates[window_index(occ, -self.radius, self.radius + 1, x)]
        return float(out) if np.ndim(out) == 0 else out

    def to_json(self) -> dict:
        return {
            "radius": self.radius,
            "rates": [float(v) for v in self.table],
            "gamma": self.gamma,
            "family": self.family,
            "scale": self.scale,
            "spec": self.spec.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "RateTable":
        spec = GibbsSpec.from_json(data["spec"]) if "spec" in data else GibbsSpec()
        return cls(int(data["radius"]), np.asarray(data["rates"], dtype=float),
                   float(data.get("gamma", 0.0)), data.get("family", "custom"), spec,
                   float(data.get("scale", 1.0)))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _exchangeable(r: int) -> np.ndarray:
    idx = np.arange(1 << (2 * r + 2))
    return ((idx >> r) & 1) != ((idx >> (r + 1)) & 1)


def ssep() -> RateTable:
    """Simple symmetric exclusion: ``c = 1`` whenever the bond is exchangeable."""
    return RateTable(0, _exchangeable(0).astype(float), family="ssep")


def speed_change(b: float) -> RateTable:
    """``c = (1 + b(eta(-1) + eta(2))) / (1 + 2|b|)`` on exchangeable bonds."""
    if not abs(b) < 0.5:
        raise ValueError("speed_change requires |b| < 1/2")
    bits = window_bits(4)
    scale = 1.0 / (1.0 + 2.0 * abs(b))
    raw = 1.0 + b * (bits[:, 0].astype(float) + bits[:, 3])
    table = np.where(_exchangeable(1), raw * scale, 0.0)
    return RateTable(1, table, family=f"speed_change(b={b!r})", scale=scale)


def metropolis(spec: GibbsSpec) -> RateTable:
    """``c = min(1, exp(-beta Delta H))``; reversible for ``spec`` but generally not gradient."""
    r = spec.range
    delta = _exchange_delta_table(spec, r)
    table = np.where(_exchangeable(r), np.minimum(1.0, np.exp(-spec.beta * delta)), 0.0)
    return RateTable(r, table, family="metropolis", spec=spec.with_phi(0.0))


def builtin_rate(family: str, *, b: float | None = None, spec: GibbsSpec | None = None) -> RateTable:
    if family == "ssep":
        return ssep()
    if family == "speed_change":
        if b is None:
            raise ValueError("speed_change needs parameter b")
        return speed_change(b)
    if family == "metropolis":
        if spec is None:
            raise ValueError("metropolis needs a GibbsSpec")
        return metropolis(spec)
    raise ValueError(f"unknown rate family {family!r}")


def speed_change_omega(b: float) -> LocalFunction:
    """Gradient function of the un-normalized speed-change rate."""
    return LocalFunction.from_terms({(0,): 1.0, (-1, 0): b, (0, 1): b, (-1, 1): -b}, lo=-1, hi=1)


def bernoulli_phi(rho: float) -> float:
    return math.log((1.0 - rho) / rho)
