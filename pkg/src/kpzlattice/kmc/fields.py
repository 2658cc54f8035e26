"""Fluctuation-field observables on the periodic lattice.

Positions ``x = 0..L-1`` sit at macroscopic coordinates ``eps * x`` on a
torus of length ``eps * L``; test functions are periodic on that torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from ..lattice import RingConfiguration
from .simulator import TrajectoryRecord


def _occ(eta) -> np.ndarray:
    return eta.occupancies if isinstance(eta, RingConfiguration) else np.asarray(eta)


def _torus_offset(u: np.ndarray, center: float, length: float) -> np.ndarray:
    d = np.mod(u - center, length)
    return np.where(d >= length / 2, d - length, d)


def sine_mode(n: int, length: float = 1.0, phase: float = 0.0) -> Callable[[np.ndarray], np.ndarray]:
    k = 2 * math.pi * n / length
    return lambda u: np.sin(k * np.asarray(u) + phase)


def bump(center: float, width: float, length: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth compactly supported ``exp(-1/(1-s^2))`` bump of half-width ``width``."""

    def F(u):
        s = _torus_offset(np.asarray(u, dtype=float), center, length) / width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    return F


@dataclass(frozen=True)
class Mollifier:
    """Positive shape ``iota`` supported in ``[-1, 1]`` with unit integral.

    ``kappa`` is ``int iota^2``; when a closed form is supplied it is
    cross-checked against quadrature at construction.
    """

    name: str
    shape: Callable[[np.ndarray], np.ndarray]
    kappa: float

    @classmethod
    def from_shape(cls, name: str, shape, kappa: float | None = None) -> "Mollifier":
        mass = quad(lambda s: float(shape(np.array(s))), -1, 1, points=[0.0])[0]
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"mollifier {name!r} has integral {mass}, not 1")
        k_num = quad(lambda s: float(shape(np.array(s))) ** 2, -1, 1, points=[0.0], epsabs=1e-14)[0]
        if kappa is not None and abs(kappa - k_num) > 1e-12:
            raise ValueError(f"closed-form kappa {kappa} disagrees with quadrature {k_num}")
        return cls(name, shape, k_num if kappa is None else kappa)

    def scaled(self, u: np.ndarray, center: float, delta: float, length: float) -> np.ndarray:
        """``iota_delta(u - center)`` on a torus of the given length."""
        return self.shape(_torus_offset(np.asarray(u, dtype=float), center, length) / delta) / delta


def triangular() -> Mollifier:
    return Mollifier.from_shape("triangular", lambda s: np.maximum(0.0, 1.0 - np.abs(s)), 2.0 / 3.0)


def _grid_values(F, L: int, eps: float) -> np.ndarray:
    if callable(F):
        return np.asarray(F(eps * np.arange(L)), dtype=float)
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != L:
        raise ValueError("test-function array must have one value per site")
    return F


def fluctuation_field(eta, rho: float, eps: float, F):
    """``<Y^eps, F> = sqrt(eps) sum_x (eta(x) - rho) F(eps x)``; batches over leading axes."""
    occ = _occ(eta)
    Fv = _grid_values(F, occ.shape[-1], eps)
    out = math.sqrt(eps) * ((occ - rho) @ Fv)
    return float(out) if np.ndim(out) == 0 else out


def wick_quadratic(eta, rho: float, eps: float, delta: float, chi: float, x: int = 0,
                   mollifier: Mollifier | None = None):
    """``<Y^eps, iota_delta^{eps x}>^2 - kappa chi / delta``."""
    if delta < 10 * eps:
        raise ValueError(f"need delta >= 10 eps (delta={delta}, eps={eps})")
    moll = triangular() if mollifier is None else mollifier
    occ = _occ(eta)
    L = occ.shape[-1]
    if 2 * delta > eps * L:
        raise ValueError("mollifier support wider than the torus")
    weights = moll.scaled(eps * np.arange(L), eps * x, delta, eps * L)
    y = math.sqrt(eps) * ((occ - rho) @ weights)
    out = y * y - moll.kappa * chi / delta
    return float(out) if np.ndim(out) == 0 else out


def wick_bias(L: int, eps: float, delta: float, chi: float, mollifier: Mollifier | None = None) -> float:
    """Exact mean of ``wick_quadratic`` under a product measure of variance ``chi``.

    Equals ``chi (eps sum iota_delta^2 - kappa/delta)``, the lattice-sum error.
    """
    moll = triangular() if mollifier is None else mollifier
    w = moll.scaled(eps * np.arange(L), 0.0, delta, eps * L)
    return chi * (eps * float(w @ w) - moll.kappa / delta)


def frame_shift(snapshots: np.ndarray, times, v: float) -> np.ndarray:
    """Re-index each snapshot to the frame moving at ``v`` sites per unit time.

    ``out[i, x] = snapshots[i, x + round(v t_i)]`` (periodic); the nearest
    integer displacement keeps every configuration a lattice configuration.
    """
    snapshots = np.asarray(snapshots)
    if v == 0.0:
        return snapshots.copy()
    shifts = np.rint(v * np.asarray(times, dtype=float)).astype(np.int64)
    return np.stack([np.roll(s, -int(k)) for s, k in zip(snapshots, shifts)])


@dataclass
class StructureFunction:
    """``S(x, t)`` for displacements ``x = -L/2 .. L/2-1`` (rows: lags).

    ``C`` holds ``E[(eta_0(0) - rho)(Q_x(t) - Q_x(0))]``, the correlation of
    the origin density with the integrated current across bond ``(x, x+1)``.
    By the continuity equation ``sum_x x^2 (S(x,t) - S(x,0))`` equals
    ``sum_x (2x + 1) C(x, t)``; the current form avoids the window-edge
    terms that dominate the noise of a truncated density moment.
    """

    times: np.ndarray
    x: np.ndarray
    S: np.ndarray
    stderr: np.ndarray
    replicas: int
    per_replica_total: np.ndarray
    C: np.ndarray | None = None

    def total(self) -> tuple[np.ndarray, np.ndarray]:
        """``sum_x S(x,t)`` and its standard error across replicas."""
        tot = self.per_replica_total
        se = tot.std(axis=0, ddof=1) / math.sqrt(self.replicas) if self.replicas > 1 else np.full(tot.shape[1], np.nan)
        return tot.mean(axis=0), se

    def second_moment(self, window: int | None = None) -> np.ndarray:
        """``sum_{|x| <= window} x^2 S(x, t)``."""
        w = self.x.max() if window is None else window
        mask = np.abs(self.x) <= w
        return (self.S[:, mask] * self.x[mask] ** 2).sum(axis=1)

    def moment_growth(self, window: int | None = None) -> np.ndarray:
        """``sum_x x^2 (S(x,t) - S(x,0))`` via bond currents within ``|x| <= window``."""
        if self.C is None:
            raise ValueError("current correlations were not recorded (moving frame)")
        w = self.x.max() if window is None else window
        mask = np.abs(self.x) <= w
        return (self.C[:, mask] * (2 * self.x[mask] + 1)).sum(axis=1)

    def diffusive_slope(self, chi: float, t_min: float, t_max: float, window: int | None = None,
                        estimator: str = "currents") -> float:
        """Least-squares slope of the second moment over ``chi`` against time on ``[t_min, t_max]``.

        ``estimator="currents"`` uses :meth:`moment_growth` (same slope,
        constant offset removed); ``"density"`` uses :meth:`second_moment`.
        """
        sel = (self.times >= t_min) & (self.times <= t_max)
        if sel.sum() < 2:
            raise ValueError("need at least two lags inside the fit range")
        if estimator == "currents":
            m2 = self.moment_growth(window)
        elif estimator == "density":
            m2 = self.second_moment(window)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        return float(np.polyfit(self.times[sel], m2[sel] / chi, 1)[0])


class StructureAccumulator:
    """Streaming estimate of :class:`StructureFunction`, one replica at a time.

    Every ``origin_stride``-th snapshot serves as a time origin, which is
    legitimate for a stationary start. Snapshots must be equally spaced and
    identical across replicas.
    """

    def __init__(self, rho: float, lag_steps, *, origin_stride: int | None = None,
                 frame_velocity: float = 0.0):
        self.rho = rho
        self.lag_steps = [int(k) for k in lag_steps]
        if not self.lag_steps or min(self.lag_steps) < 0:
            raise ValueError("lags must be non-negative")
        self.origin_stride = origin_stride
        self.frame_velocity = frame_velocity
        self.times: np.ndarray | None = None
        self._S: list[np.ndarray] = []
        self._C: list[np.ndarray] = []

    def _origins(self, n_t: int, lag: int) -> np.ndarray:
        if self.origin_stride is None:
            return np.array([0])
        return np.arange(0, n_t - lag, self.origin_stride)

    def add(self, rec: TrajectoryRecord) -> None:
        times = np.asarray(rec.times, dtype=float)
        if self.times is None:
            if times.size < 2:
                raise ValueError("need at least two snapshots")
            dt = times[1] - times[0]
            if not np.allclose(np.diff(times), dt, rtol=1e-12, atol=1e-12):
                raise ValueError("snapshots must be equally spaced")
            if max(self.lag_steps) >= times.size:
                raise ValueError("lag exceeds the recorded time span")
            self.times = times
        elif not np.array_equal(times, self.times):
            raise ValueError("records have different sampling schedules")
        L = rec.L
        snaps = frame_shift(rec.snapshots, times - times[0], self.frame_velocity)
        fluct = np.fft.rfft(snaps.astype(float) - self.rho, axis=1)
        with_currents = self.frame_velocity == 0.0
        if with_currents:
            qhat = np.fft.rfft(rec.currents.astype(float), axis=1)
        S = np.empty((len(self.lag_steps), L))
        C = np.empty_like(S)
        for j, lag in enumerate(self.lag_steps):
            o = self._origins(times.size, lag)
            left = np.conj(fluct[o])
            S[j] = np.fft.irfft((left * fluct[o + lag]).mean(axis=0), n=L) / L
            if with_currents:
                C[j] = np.fft.irfft((left * (qhat[o + lag] - qhat[o])).mean(axis=0), n=L) / L
        self._S.append(S)
        if with_currents:
            self._C.append(C)

    def result(self) -> StructureFunction:
        if not self._S:
            raise ValueError("no records")
        L = self._S[0].shape[1]
        order = np.r_[np.arange(L - L // 2, L), np.arange(0, L - L // 2)]
        x = np.where(order >= L - L // 2, order - L, order)
        per_rep = np.stack(self._S)[:, :, order]
        n = per_rep.shape[0]
        mean = per_rep.mean(axis=0)
        se = per_rep.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(mean, np.nan)
        C = np.stack(self._C).mean(axis=0)[:, order] if self._C else None
        dt = self.times[1] - self.times[0]
        return StructureFunction(np.asarray(self.lag_steps) * dt, x, mean, se, n, per_rep.sum(axis=2), C)


def structure_function(records: list[TrajectoryRecord], rho: float, lag_steps, *,
                       origin_stride: int | None = None, frame_velocity: float = 0.0) -> StructureFunction:
    """``S(x,t) = E[(eta_t(x) - rho)(eta_0(0) - rho)]`` from stationary replicas.

    Averages over replicas and translations; see :class:`StructureAccumulator`.
    """
    if not records:
        raise ValueError("no records")
    acc = StructureAccumulator(rho, lag_steps, origin_stride=origin_stride, frame_velocity=frame_velocity)
    for rec in records:
        acc.add(rec)
    return acc.result()
