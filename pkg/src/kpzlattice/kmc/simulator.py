"""Rejection kinetic Monte Carlo for the (weakly) asymmetric exchange dynamics.

Proposals arrive at total rate ``L``; each picks a bond uniformly and is
accepted with probability ``c_gamma`` of the window around that bond.
Because every rate is at most one this is an exact realization of the
continuous-time generator. Time is microscopic: diffusive speed-up is the
caller's choice of horizon.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..ensembles import at_density, sample_gibbs
from ..lattice import GibbsSpec, RateTable, RingConfiguration
from ._backend import BACKEND, get_kernel


class SimulationError(RuntimeError):
    """A conservation invariant broke during a trajectory."""


@dataclass
class SimulationPlan:
    rate: RateTable
    L: int
    horizon: float
    rho: float | None = 0.5
    phi: float | None = None
    gamma: float | None = None
    a: float | None = None
    epsilon: float | None = None
    times: tuple[float, ...] | None = None
    seed: int = 0
    replicas: int = 1
    spec: GibbsSpec | None = None

    def __post_init__(self):
        if self.gamma is None:
            if self.a is not None and self.epsilon is not None:
                self.gamma = self.a * math.sqrt(self.epsilon)
            else:
                self.gamma = self.rate.gamma
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma={self.gamma} outside [0, 1]")
        if self.L <= 2 * (2 * self.rate.radius + 2):
            raise ValueError("ring too short for the rate window")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.times is None:
            self.times = (0.0, float(self.horizon))
        self.times = tuple(float(t) for t in self.times)
        if list(self.times) != sorted(self.times) or self.times[0] < 0 or self.times[-1] > self.horizon:
            raise ValueError("sampling times must be sorted and lie in [0, horizon]")
        if self.spec is None:
            self.spec = self.rate.spec
        if self.phi is None and self.rho is None:
            raise ValueError("need rho or phi")
        if self.replicas < 1:
            raise ValueError("need at least one replica")

    @property
    def initial_measure(self) -> GibbsSpec:
        if self.phi is not None:
            return self.spec.with_phi(self.phi)
        return at_density(self.spec, self.rho)

    def to_json(self) -> dict:
        return {
            "rate": self.rate.to_json(), "L": self.L, "horizon": self.horizon, "rho": self.rho,
            "phi": self.phi, "gamma": self.gamma, "a": self.a, "epsilon": self.epsilon,
            "times": list(self.times), "seed": self.seed, "replicas": self.replicas,
            "spec": self.spec.to_json(),
        }


@dataclass
class TrajectoryRecord:
    """Snapshots and integrated bond currents at the scheduled times.

    ``currents[i, x]`` is the net number of particles that crossed bond
    ``(x, x+1)`` to the right up to ``times[i]``.
    """

    times: np.ndarray
    initial: np.ndarray
    snapshots: np.ndarray
    currents: np.ndarray
    proposals: int
    accepted: int
    backend: str
    wall_time: float = field(default=0.0, compare=False)
    event_bonds: np.ndarray | None = None

    @property
    def L(self) -> int:
        return self.initial.size

    def mean_current(self) -> float:
        """Net rightward current per bond per unit time over the whole run."""
        return float(self.currents[-1].sum()) / (self.L * float(self.times[-1]))


def check_continuity(initial: np.ndarray, state: np.ndarray, currents: np.ndarray) -> bool:
    """``eta_t(x) - eta_0(x) = J_{x-1,x}(t) - J_{x,x+1}(t)`` at every site."""
    lhs = state.astype(np.int64) - initial.astype(np.int64)
    return bool(np.array_equal(lhs, np.roll(currents, 1) - currents))


def simulate(plan: SimulationPlan, rng: np.random.Generator | None = None, *,
             initial=None, backend: str | None = None, log_events: int = 0) -> TrajectoryRecord:
    """Run one trajectory of ``plan``.

    ``initial`` defaults to an exact sample of the finite-ring Gibbs
    measure drawn from ``rng``. ``log_events`` keeps the bond index of the
    first that many accepted exchanges.
    """
    rng = np.random.default_rng(plan.seed) if rng is None else rng
    if not isinstance(rng.bit_generator, np.random.PCG64):
        raise TypeError("KMC kernels require a PCG64 bit generator")
    kernel = get_kernel(backend)
    if initial is None:
        state = sample_gibbs(plan.initial_measure, plan.L, rng).occupancies.copy()
    else:
        occ = initial.occupancies if isinstance(initial, RingConfiguration) else initial
        state = np.array(occ, dtype=np.uint8)
        if state.size != plan.L:
            raise ValueError("initial configuration has the wrong size")
    state = np.ascontiguousarray(state, dtype=np.uint8)
    initial_occ = state.copy()
    n0 = int(state.sum())
    rates = np.ascontiguousarray(plan.rate.asymmetrized(plan.gamma).rates, dtype=np.float64)
    currents = np.zeros(plan.L, dtype=np.int64)
    log_buf = np.zeros(int(log_events), dtype=np.int64)
    log_pos = 0
    n_t = len(plan.times)
    snaps = np.empty((n_t, plan.L), dtype=np.uint8)
    curs = np.empty((n_t, plan.L), dtype=np.int64)
    t = 0.0
    proposals = accepted = 0
    start = time.perf_counter()
    for i, t_next in enumerate(plan.times):
        if t_next > t:
            t, p, a, log_pos = kernel(state, rates, plan.rate.radius, t, t_next, currents,
                                      rng.bit_generator, log_buf, log_pos)
            proposals += p
            accepted += a
            if int(state.sum()) != n0:
                raise SimulationError(f"particle count changed from {n0} to {int(state.sum())} by t={t}")
            if not check_continuity(initial_occ, state, currents):
                raise SimulationError(f"lattice continuity violated by t={t}")
        snaps[i] = state
        curs[i] = currents
    name = backend or BACKEND
    return TrajectoryRecord(np.array(plan.times), initial_occ, snaps, curs, proposals, accepted, name,
                            time.perf_counter() - start, log_buf[:log_pos] if log_events else None)


def replica_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Independent PCG64 streams spawned from one seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def simulate_replicas(plan: SimulationPlan, threads: int = 1, backend: str | None = None) -> list[TrajectoryRecord]:
    """All replicas of ``plan``; results do not depend on ``threads``."""
    rngs = replica_generators(plan.seed, plan.replicas)
    if threads <= 1:
        return [simulate(plan, g, backend=backend) for g in rngs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda g: simulate(plan, g, backend=backend), rngs))


def mean_current(records: list[TrajectoryRecord]) -> tuple[float, float]:
    """Replica mean of the per-bond current and its standard error."""
    vals = np.array([r.mean_current() for r in records])
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return float(vals.mean()), se


def height_field(record: TrajectoryRecord) -> np.ndarray:
    """``h_t(x)``: integrated signed current across bond ``(x, x+1)`` at each sampled time.

    ``h_t(x-1) - h_t(x) = eta_t(x) - eta_0(x)``.
    """
    return record.currents.copy()
