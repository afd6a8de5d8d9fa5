"""Stochastic particle-system simulator for two-gender coagulation.

A finite system of particle instances evolves by pairwise coagulation: the
unordered instance pair {i, j} merges at rate ``a_i b_j + a_j b_i``.  Summing
over pairs, the total event rate from a count state eta is

    rate = (sum a eta) * (sum b eta) - sum_p (a b) eta(p),

which is O(1) from cached totals.  The reported process is the rescaled and
time-changed one: with scale parameter n, empirical concentrations are
counts / n and the event clock in rescaled time runs at rate / n, so an
initial state of order n particles matches the kinetic equations with O(1)
concentrations on O(1) rescaled time horizons.

Pair selection is exact and cheap: one male arm is drawn uniformly among all
male arms and one female arm uniformly among all female arms via two integer
Fenwick (prefix-sum) trees over instances, rejecting when both arms land on
the same instance.  The accepted pair {i, j} then has probability
proportional to ``a_i b_j + a_j b_i``, which is exactly the event law.  Arm
weights are integers, so the trees never accumulate float drift; sampling and
the per-event updates are O(log K) in the number of instance slots.

A single run is strictly sequential; replicates are independent given their
seeds and may be executed concurrently by callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ParticleType, as_particle_type
from .kinetics import Trajectory


class _Fenwick:
    """Integer Fenwick tree with O(log n) point update and cumulative search."""

    __slots__ = ("size", "tree", "top")

    def __init__(self, weights: Sequence[int]):
        n = len(weights)
        self.size = n
        tree = [0] * (n + 1)
        tree[1:] = list(weights)
        for i in range(1, n + 1):
            j = i + (i & -i)
            if j <= n:
                tree[j] += tree[i]
        self.tree = tree
        top = 1
        while top * 2 <= n:
            top *= 2
        self.top = top

    def add(self, i: int, delta: int) -> None:
        """Add ``delta`` to 0-based slot ``i``."""
        j = i + 1
        tree = self.tree
        n = self.size
        while j <= n:
            tree[j] += delta
            j += j & -j

    def find(self, v: int) -> int:
        """Smallest 0-based index with cumulative sum > v (v in [0, total))."""
        pos = 0
        rem = v
        bit = self.top
        tree = self.tree
        n = self.size
        while bit:
            nxt = pos + bit
            if nxt <= n and tree[nxt] <= rem:
                pos = nxt
                rem -= tree[nxt]
            bit >>= 1
        return pos

    def value(self, i: int) -> int:
        j = i + 1
        v = self.tree[j]
        k = j & (j - 1)
        j -= 1
        while j != k:
            v -= self.tree[j]
            j &= j - 1
        return v


@dataclass(frozen=True)
class Event:
    """One coagulation: waiting time in rescaled units and the species involved."""

    dt: float
    left: ParticleType
    right: ParticleType
    merged: ParticleType


class ParticleSystemState:
    """Mutable particle-instance population with cached totals and arm indexes."""

    def __init__(self, counts: Mapping, n: int, bound: "float | None" = None, debug: bool = False):
        if n < 1:
            raise ValueError(f"scale parameter n must be >= 1, got {n}")
        self.n = n
        self.debug = debug
        arm_a: list[int] = []
        arm_b: list[int] = []
        mass: list[int] = []
        self.counts: dict[ParticleType, int] = {}
        for p, k in counts.items():
            p = as_particle_type(p)
            k = int(k)
            if k < 0:
                raise ValueError(f"negative count {k} for {tuple(p)}")
            if k == 0:
                continue
            self.counts[p] = self.counts.get(p, 0) + k
            arm_a.extend([p.a] * k)
            arm_b.extend([p.b] * k)
            mass.extend([p.m] * k)
        self.arm_a = arm_a
        self.arm_b = arm_b
        self.mass = mass
        self.total_male = sum(arm_a)
        self.total_female = sum(arm_b)
        self.sum_ab = sum(a * b for a, b in zip(arm_a, arm_b))
        self.n_particles = len(mass)
        self.total_mass = sum(mass)
        self.time = 0.0
        if bound is not None:
            load = self.total_male + self.total_female + self.total_mass
            if load > bound * n:
                raise ValueError(
                    f"initial state violates the population bound: "
                    f"sum (a + b + m) * count = {load} > {bound} * {n}"
                )
        self._fen_a = _Fenwick(arm_a)
        self._fen_b = _Fenwick(arm_b)

    def total_rate(self) -> int:
        """Total coagulation event rate (unrescaled) of the current state."""
        return self.total_male * self.total_female - self.sum_ab

    def empirical_concentrations(self) -> dict[ParticleType, float]:
        return {p: k / self.n for p, k in self.counts.items()}

    def check_consistency(self) -> None:
        """Recompute every cached quantity from scratch (debug aid)."""
        live = [i for i, m in enumerate(self.mass) if m > 0]
        assert self.n_particles == len(live)
        assert self.total_male == sum(self.arm_a[i] for i in live)
        assert self.total_female == sum(self.arm_b[i] for i in live)
        assert self.sum_ab == sum(self.arm_a[i] * self.arm_b[i] for i in live)
        assert self.total_mass == sum(self.mass[i] for i in live)
        recount: dict[ParticleType, int] = {}
        for i in live:
            p = ParticleType(self.arm_a[i], self.arm_b[i], self.mass[i])
            recount[p] = recount.get(p, 0) + 1
        assert recount == self.counts
        for i in range(len(self.mass)):
            assert self._fen_a.value(i) == (self.arm_a[i] if self.mass[i] > 0 else 0)
            assert self._fen_b.value(i) == (self.arm_b[i] if self.mass[i] > 0 else 0)

    def _dec_count(self, p: ParticleType) -> None:
        k = self.counts[p] - 1
        if k:
            self.counts[p] = k
        else:
            del self.counts[p]

    def _merge_instances(self, i: int, j: int) -> Event:
        ai, bi, mi = self.arm_a[i], self.arm_b[i], self.mass[i]
        aj, bj, mj = self.arm_a[j], self.arm_b[j], self.mass[j]
        left = ParticleType(ai, bi, mi)
        right = ParticleType(aj, bj, mj)
        merged = ParticleType(ai + aj - 1, bi + bj - 1, mi + mj)
        self._dec_count(left)
        self._dec_count(right)
        self.counts[merged] = self.counts.get(merged, 0) + 1
        # Survivor keeps slot i; slot j dies.
        self.arm_a[i], self.arm_b[i], self.mass[i] = merged.a, merged.b, merged.m
        self.arm_a[j] = self.arm_b[j] = self.mass[j] = 0
        self._fen_a.add(i, merged.a - ai)
        self._fen_a.add(j, -aj)
        self._fen_b.add(i, merged.b - bi)
        self._fen_b.add(j, -bj)
        self.total_male -= 1
        self.total_female -= 1
        self.sum_ab += merged.a * merged.b - ai * bi - aj * bj
        self.n_particles -= 1
        return Event(dt=0.0, left=left, right=right, merged=merged)


class _BufferedInts:
    """Serves ``integers(bound)`` from chunked generator draws.

    Scalar ``Generator.integers`` calls dominate the cost of high-volume
    sampler validation; buffering amortizes them without changing the
    distribution (consumption order is fixed, so results stay deterministic).
    """

    __slots__ = ("_rng", "_chunk", "_buffers")

    def __init__(self, rng, chunk: int = 8192):
        self._rng = rng
        self._chunk = chunk
        self._buffers: dict[int, list[int]] = {}

    def integers(self, bound: int) -> int:
        buf = self._buffers.get(bound)
        if not buf:
            buf = self._rng.integers(0, bound, size=self._chunk).tolist()
            self._buffers[bound] = buf
        return buf.pop()


def _sample_pair(state: ParticleSystemState, rng) -> tuple[int, int]:
    """Instance pair with probability proportional to a_i b_j + a_j b_i.

    Uniform male arm x uniform female arm, resampling same-instance hits;
    acceptance exactly removes the diagonal weight sum_i a_i b_i.
    """
    fa, fb = state._fen_a, state._fen_b
    tm, tf = state.total_male, state.total_female
    while True:
        i = fa.find(int(rng.integers(tm)))
        j = fb.find(int(rng.integers(tf)))
        if i != j:
            return i, j


def step(state: ParticleSystemState, rng) -> "Event | None":
    """Execute one event in place; returns None when the state is absorbed.

    The waiting time is exponential with rate ``total_rate / n`` (the rescaled
    clock); the state's rescaled time advances by it.
    """
    rate = state.total_rate()
    if rate == 0:
        return None
    dt = float(rng.exponential(state.n / rate))
    i, j = _sample_pair(state, rng)
    event = state._merge_instances(i, j)
    state.time += dt
    if state.debug:
        state.check_consistency()
    return Event(dt=dt, left=event.left, right=event.right, merged=event.merged)


@dataclass(frozen=True)
class SimulationRun:
    """Recorded empirical concentrations of one run at fixed rescaled times."""

    n: int
    seed: "int | tuple"
    times: tuple[float, ...]
    states: tuple[dict[ParticleType, float], ...]
    events: int
    final_counts: dict[ParticleType, int]
    final_total_male: int
    final_total_female: int
    final_total_mass: int
    final_particles: int


def run_simulation(
    counts: Mapping,
    n: int,
    t_end: float,
    checkpoints: "Sequence[float] | None" = None,
    seed: "int | tuple" = 0,
    bound: "float | None" = None,
    debug: bool = False,
) -> SimulationRun:
    """Simulate from integer counts until rescaled time ``t_end``.

    ``checkpoints`` (default ``[t_end]``) are rescaled times at which
    counts / n snapshots are recorded; a checkpoint at time T reports the
    state including every event occurring at or before T.  Runs are fully
    deterministic given ``seed``.
    """
    if t_end < 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if checkpoints is None:
        checkpoints = [t_end]
    cks = sorted(float(t) for t in checkpoints)
    if cks and (cks[0] < 0 or cks[-1] > t_end + 1e-12):
        raise ValueError(f"checkpoints must lie in [0, {t_end}]")
    state = ParticleSystemState(counts, n, bound=bound, debug=debug)
    rng = np.random.default_rng(seed)
    snapshots: list[dict[ParticleType, float]] = []
    events = 0
    ci = 0
    while ci < len(cks):
        rate = state.total_rate()
        if rate == 0:
            while ci < len(cks):
                snapshots.append(state.empirical_concentrations())
                ci += 1
            break
        dt = float(rng.exponential(state.n / rate))
        t_next = state.time + dt
        while ci < len(cks) and cks[ci] < t_next:
            snapshots.append(state.empirical_concentrations())
            ci += 1
        if ci >= len(cks):
            break
        i, j = _sample_pair(state, rng)
        state._merge_instances(i, j)
        state.time = t_next
        events += 1
        if debug:
            state.check_consistency()
    return SimulationRun(
        n=n,
        seed=seed,
        times=tuple(cks),
        states=tuple(snapshots),
        events=events,
        final_counts=dict(state.counts),
        final_total_male=state.total_male,
        final_total_female=state.total_female,
        final_total_mass=state.total_mass,
        final_particles=state.n_particles,
    )


def first_event_distribution(
    counts: Mapping, draws: int, seed: "int | tuple" = 0
) -> dict[tuple[ParticleType, ParticleType], float]:
    """Empirical law of the first coagulating species pair.

    Repeatedly samples the event pair from a frozen state through the same
    arm-index path used by :func:`step` and tallies unordered species pairs
    (canonically ordered).  Used to validate the sampler against brute-force
    rate tables.
    """
    state = ParticleSystemState(counts, n=1)
    if state.total_rate() == 0:
        raise ValueError("state has no possible event")
    rng = _BufferedInts(np.random.default_rng(seed))
    arm_a, arm_b, mass = state.arm_a, state.arm_b, state.mass
    tallies: dict[tuple[ParticleType, ParticleType], int] = {}
    for _ in range(draws):
        i, j = _sample_pair(state, rng)
        pi = ParticleType(arm_a[i], arm_b[i], mass[i])
        pj = ParticleType(arm_a[j], arm_b[j], mass[j])
        key = (pi, pj) if pi <= pj else (pj, pi)
        tallies[key] = tallies.get(key, 0) + 1
    return {k: v / draws for k, v in tallies.items()}


def empirical_error(
    run: SimulationRun,
    reference: Trajectory,
    tracked: Iterable[ParticleType],
    tol: float = 1e-9,
) -> list[float]:
    """Per-checkpoint sup-norm gap between a run and a deterministic trajectory."""
    ref_times = reference.times
    if len(ref_times) - 1 == len(run.times) and ref_times[0] == 0.0 and (
        len(run.times) == 0 or abs(run.times[0]) > tol
    ):
        ref_states = reference.states[1:]  # trajectory always records t = 0
        ref_times = ref_times[1:]
    else:
        ref_states = reference.states
    if len(ref_times) != len(run.times) or any(
        abs(t1 - t2) > tol for t1, t2 in zip(ref_times, run.times)
    ):
        raise ValueError(
            f"checkpoint grids differ: run has {list(run.times)}, trajectory has {ref_times}"
        )
    tracked = [as_particle_type(p) for p in tracked]
    out = []
    for emp, ref in zip(run.states, ref_states):
        out.append(max(abs(emp.get(p, 0.0) - ref[p]) for p in tracked))
    return out


def closed_form_error(
    run: SimulationRun,
    reference: "dict[ParticleType, float] | Mapping",
    checkpoint_index: int = -1,
) -> float:
    """Sup gap between one recorded snapshot and explicit reference values."""
    emp = run.states[checkpoint_index]
    return max(abs(emp.get(as_particle_type(p), 0.0) - float(v)) for p, v in reference.items())
