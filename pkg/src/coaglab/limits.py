"""Limiting state (t -> infinity) and the two-type branching-process picture.

When the critical time is infinite, all arms are eventually consumed and the
concentrations converge to armless limits ``c_inf(m)``.  The limit is encoded
by the fixed point

    h1(z) = dg0/dy(h1(z), h2(z), z),   h2(z) = dg0/dx(h1(z), h2(z), z),

and the limiting generating function is the antiderivative vanishing at 0 of
``dg0/dz(h1(z), h2(z), z)``; ``c_inf(m)`` is its m-th coefficient.

For monodisperse initial data with arm measure ``mu`` the same fixed point is
solved by the total-progeny generating functions of a two-type Galton-Watson
tree whose reproduction laws are the size-biased measures

    nu_m(a, b) = (b + 1) mu(a, b + 1),   nu_f(a, b) = (a + 1) mu(a + 1, b),

and, starting from one male plus one female ancestor,

    P(total progeny = m) = (m - 1) c_inf(m)   for m >= 2.

The total-progeny law is provided both as an exact series computation and as
a direct tree simulation (with censoring at a population cap, so supercritical
or degenerate inputs degrade gracefully rather than hanging).
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from math import inf

import numpy as np

from .core import ConcentrationState
from .genfun import ConvergenceError, InitialGF
from .measures import Measure2D, TruncatedSeries, size_biased_laws


@dataclass(frozen=True)
class LimitState:
    """Limiting concentrations and their generating data through ``max_mass``."""

    h1: TruncatedSeries
    h2: TruncatedSeries
    g: TruncatedSeries
    c_inf: dict[int, "float | Fraction"]
    total_concentration: "float | Fraction"  # sum of c_inf through max_mass
    total_mass: "float | Fraction"  # sum of m * c_inf through max_mass

    @property
    def max_mass(self) -> int:
        return self.g.order


@dataclass(frozen=True)
class GWConfig:
    nu_m: Measure2D
    nu_f: Measure2D
    population_cap: int = 10**6
    replicates: int = 10**5
    seed: int = 0

    def __post_init__(self):
        for name, nu in (("nu_m", self.nu_m), ("nu_f", self.nu_f)):
            if abs(float(nu.total()) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a probability measure, total = {nu.total()}")
        if self.population_cap < 2 or self.replicates < 1:
            raise ValueError("population_cap must be >= 2 and replicates >= 1")


@dataclass(frozen=True)
class GWSample:
    """Empirical total-progeny distribution with censoring bookkeeping."""

    counts: dict[int, int]
    replicates: int
    censored: int

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.replicates

    def pmf(self, m: int) -> float:
        return self.counts.get(m, 0) / self.replicates


def initial_arm_measure(c0: ConcentrationState) -> Measure2D:
    """Arm-count measure of a monodisperse state (all mass-1 particles)."""
    weights = {}
    for p, w in c0.items():
        if p.m != 1:
            raise ValueError(f"state is not monodisperse: contains mass-{p.m} species")
        weights[(p.a, p.b)] = w
    return Measure2D.from_dict(weights)


def degeneracy_reasons(mu: Measure2D) -> list[str]:
    """Arm measures whose limiting branching tree is not almost-surely finite.

    The list: a unit atom at (1, 1); half atoms at (2, 0) and (0, 2); all
    support on a = 1; all support on b = 1.  Empty means nondegenerate.
    """
    support = {ab for ab, _ in mu.weights}
    reasons = []
    if support == {(1, 1)}:
        reasons.append("single atom at (1,1): alternating chains never terminate")
    if support == {(2, 0), (0, 2)}:
        reasons.append("atoms at (2,0) and (0,2): two-arm chains never terminate")
    if support and all(a == 1 for a, _ in support):
        reasons.append("all particles have exactly one male arm")
    if support and all(b == 1 for _, b in support):
        reasons.append("all particles have exactly one female arm")
    return reasons


def _require_no_gelation(gf: InitialGF) -> None:
    data = gf.critical_data()
    if data.t_crit != inf:
        raise ValueError(
            f"limiting state requires an infinite critical time, but T_c = {data.t_crit}"
        )


def h_infinity(
    gf: "InitialGF | ConcentrationState | dict",
    z: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
):
    """Numeric fixed point (h1, h2) at a scalar z in [0, 1); needs T_c = inf."""
    if not isinstance(gf, InitialGF):
        gf = InitialGF(gf)
    _require_no_gelation(gf)
    if not (0 <= z < 1):
        raise ValueError(f"z must lie in [0, 1), got {z}")
    x, y = 0.0, 0.0
    for _ in range(max_iter):
        x1 = gf.dy(x, y, z)
        y1 = gf.dx(x, y, z)
        delta = max(abs(x1 - x), abs(y1 - y))
        x, y = x1, y1
        if delta < tol:
            return (x, y)
    raise ConvergenceError(f"limit fixed point did not converge at z = {z}")


def _series_fixed_point(gf: InitialGF, order: int):
    """(h1, h2) as truncated series; every term of g0 carries z^m with m >= 1,
    so each sweep fixes at least one further coefficient and order + 1 sweeps
    are exact through ``order``."""
    z = TruncatedSeries.identity(order)
    h1 = TruncatedSeries.zero(order)
    h2 = TruncatedSeries.zero(order)
    for _ in range(order + 1):
        h1, h2 = gf.dy(h1, h2, z), gf.dx(h1, h2, z)
    return h1, h2, z


def limiting_concentrations(
    c0: "ConcentrationState | dict | InitialGF", max_mass: int
) -> LimitState:
    """Limiting concentrations ``c_inf(m)`` for ``m <= max_mass`` (T_c = inf).

    Exact when the initial concentrations are rational.
    """
    gf = c0 if isinstance(c0, InitialGF) else InitialGF(c0)
    _require_no_gelation(gf)
    if max_mass < 1:
        raise ValueError(f"max_mass must be >= 1, got {max_mass}")
    h1, h2, z = _series_fixed_point(gf, max_mass)
    g = gf.dz(h1, h2, z).antiderivative()
    c_inf = {m: g[m] for m in range(1, max_mass + 1)}
    total_c = sum(c_inf.values())
    total_m = sum(m * v for m, v in c_inf.items())
    return LimitState(h1=h1, h2=h2, g=g, c_inf=c_inf, total_concentration=total_c, total_mass=total_m)


def gw_progeny_pmf_series(nu_m: Measure2D, nu_f: Measure2D, max_total: int) -> list:
    """Exact total-progeny law through ``max_total`` via generating functions.

    Solves ``g_m(r) = r phi_m(g_m, g_f)`` and ``g_f(r) = r phi_f(g_m, g_f)``
    as truncated series (``phi_m``, ``phi_f`` are the reproduction-law
    generating functions) and returns the coefficients of ``g_m * g_f``, whose
    r^m coefficient is P(total progeny = m) from one male and one female
    ancestor.  Index k of the returned list is P(T = k); entries 0 and 1 are 0.
    """
    for name, nu in (("nu_m", nu_m), ("nu_f", nu_f)):
        if abs(float(nu.total()) - 1.0) > 1e-9:
            raise ValueError(f"{name} must be a probability measure, total = {nu.total()}")
    if max_total < 2:
        raise ValueError(f"max_total must be >= 2, got {max_total}")
    r = TruncatedSeries.identity(max_total)
    gm = TruncatedSeries.zero(max_total)
    gf_ = TruncatedSeries.zero(max_total)
    for _ in range(max_total + 1):
        gm, gf_ = r * nu_m.generating_value(gm, gf_), r * nu_f.generating_value(gm, gf_)
    return list((gm * gf_).coeffs)


class _LawSampler:
    """Inverse-CDF sampler over the atoms of a 2-D probability measure."""

    def __init__(self, nu: Measure2D):
        self.atoms = [ab for ab, _ in nu.weights]
        cum = np.cumsum([float(w) for _, w in nu.weights])
        cum[-1] = 1.0
        self.cum = cum.tolist()

    def draw(self, u: float) -> tuple[int, int]:
        return self.atoms[bisect.bisect_right(self.cum, u)]


def _one_tree(sampler_m, sampler_f, cap: int, rng) -> tuple[int, bool]:
    pending_m, pending_f = 1, 1
    total = 2
    while pending_m or pending_f:
        if total > cap:
            return total, True
        if pending_m:
            pending_m -= 1
            a, b = sampler_m.draw(rng.random())
        else:
            pending_f -= 1
            a, b = sampler_f.draw(rng.random())
        pending_m += a
        pending_f += b
        total += a + b
    return total, False


def gw_sample_total_progeny(cfg: GWConfig) -> GWSample:
    """Simulate the two-type tree from one male plus one female ancestor.

    Breadth-order processing with population counters only (tree topology is
    never materialized).  Replicate r draws from a generator seeded by
    (seed, r), so replicates are independent and the result does not depend
    on any execution schedule.
    """
    sampler_m = _LawSampler(cfg.nu_m)
    sampler_f = _LawSampler(cfg.nu_f)
    counts: dict[int, int] = {}
    censored = 0
    for r in range(cfg.replicates):
        rng = np.random.default_rng((cfg.seed, r))
        size, was_censored = _one_tree(sampler_m, sampler_f, cfg.population_cap, rng)
        if was_censored:
            censored += 1
        else:
            counts[size] = counts.get(size, 0) + 1
    return GWSample(counts=counts, replicates=cfg.replicates, censored=censored)
