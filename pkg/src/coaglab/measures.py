"""Finite measures on integers and truncated power series.

Everything here is finite-support numeric arithmetic: convolution powers of
1-D measures, the combinatorial diamond product, the size-biased reproduction
laws derived from a 2-D arm measure, and a fixed-order truncated power series
used by the limiting-state machinery.  Exact :class:`fractions.Fraction`
arithmetic is used whenever the inputs are exact; float inputs fall back to
floating point with small-to-large summation.

Infinite-support laws (e.g. Poisson) must be supplied pre-truncated by the
caller; nothing here truncates silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

Scalar = "float | Fraction | int"


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


def _sorted_sum(values):
    """Sum floats in increasing magnitude; exact inputs are summed directly."""
    vals = list(values)
    if all(_is_exact(v) for v in vals):
        return sum(vals)
    return sum(sorted(vals, key=abs))


@dataclass(frozen=True)
class Measure1D:
    """Finite measure on nonnegative integers, stored as sorted (j, weight) pairs."""

    weights: tuple[tuple[int, "Scalar"], ...]

    @staticmethod
    def from_dict(d: Mapping[int, "Scalar"]) -> "Measure1D":
        items = []
        for j, w in d.items():
            j = int(j)
            if j < 0:
                raise ValueError(f"support must be nonnegative integers, got {j}")
            if w < 0:
                raise ValueError(f"weights must be nonnegative, got {w} at {j}")
            if w != 0:
                items.append((j, w))
        return Measure1D(tuple(sorted(items)))

    @staticmethod
    def delta(j: int, weight: "Scalar" = 1) -> "Measure1D":
        return Measure1D.from_dict({j: weight})

    def as_dict(self) -> dict[int, "Scalar"]:
        return dict(self.weights)

    def __call__(self, j: int):
        for k, w in self.weights:
            if k == j:
                return w
        return 0

    def total(self):
        return _sorted_sum(w for _, w in self.weights)

    def mean(self):
        return _sorted_sum(j * w for j, w in self.weights)

    def scaled(self, factor: "Scalar") -> "Measure1D":
        return Measure1D(tuple((j, factor * w) for j, w in self.weights))

    def is_exact(self) -> bool:
        return all(_is_exact(w) for _, w in self.weights)

    def is_probability(self, tol: float = 1e-9) -> bool:
        return abs(self.total() - 1) <= tol


def convolve(x: Measure1D, y: Measure1D) -> Measure1D:
    out: dict[int, list] = {}
    for j1, w1 in x.weights:
        for j2, w2 in y.weights:
            out.setdefault(j1 + j2, []).append(w1 * w2)
    return Measure1D(tuple(sorted((j, _sorted_sum(ws)) for j, ws in out.items())))


@lru_cache(maxsize=1024)
def _power(nu: Measure1D, k: int) -> Measure1D:
    if k == 0:
        return Measure1D.delta(0)
    if k == 1:
        return nu
    half = _power(nu, k // 2)
    sq = convolve(half, half)
    return convolve(sq, nu) if k % 2 else sq


def convolution_power(nu: Measure1D, k: int) -> Measure1D:
    """k-fold convolution ``nu^{*k}``; the empty convolution is a unit mass at 0."""
    if k < 0:
        raise ValueError(f"convolution power requires k >= 0, got {k}")
    return _power(nu, k)


def diamond(nu1: Measure1D, nu2: Measure1D, m: int):
    """Diamond product evaluated at integer ``m >= 2``:

        (m - 1) * sum_{k=1}^{m-1} (1/k) nu1^{*(m-k)}(k-1) * (1/(m-k)) nu2^{*k}(m-k-1)

    This is the limiting mass law of the one-gender-per-particle family (up to
    the ``1/(m-1)`` factor) and the total-progeny law of the associated
    two-type branching tree.
    """
    if m < 2:
        raise ValueError(f"diamond product is defined for m >= 2, got {m}")
    exact = nu1.is_exact() and nu2.is_exact()
    terms = []
    for k in range(1, m):
        v1 = convolution_power(nu1, m - k)(k - 1)
        if v1 == 0:
            continue
        v2 = convolution_power(nu2, k)(m - k - 1)
        if v2 == 0:
            continue
        if exact:
            terms.append(Fraction(v1) * v2 / (k * (m - k)))
        else:
            terms.append(v1 * v2 / (k * (m - k)))
    return (m - 1) * _sorted_sum(terms) if terms else 0


@dataclass(frozen=True)
class Measure2D:
    """Finite measure on pairs of nonnegative integers (arm-count measures)."""

    weights: tuple[tuple[tuple[int, int], "Scalar"], ...]

    @staticmethod
    def from_dict(d: Mapping[tuple[int, int], "Scalar"]) -> "Measure2D":
        items = []
        for (a, b), w in d.items():
            a, b = int(a), int(b)
            if a < 0 or b < 0:
                raise ValueError(f"support must be nonnegative pairs, got ({a}, {b})")
            if w < 0:
                raise ValueError(f"weights must be nonnegative, got {w} at ({a}, {b})")
            if w != 0:
                items.append(((a, b), w))
        return Measure2D(tuple(sorted(items)))

    @staticmethod
    def delta(a: int, b: int, weight: "Scalar" = 1) -> "Measure2D":
        return Measure2D.from_dict({(a, b): weight})

    def as_dict(self) -> dict[tuple[int, int], "Scalar"]:
        return dict(self.weights)

    def __call__(self, a: int, b: int):
        return dict(self.weights).get((a, b), 0)

    def total(self):
        return _sorted_sum(w for _, w in self.weights)

    def mean_a(self):
        return _sorted_sum(ab[0] * w for ab, w in self.weights)

    def mean_b(self):
        return _sorted_sum(ab[1] * w for ab, w in self.weights)

    def is_exact(self) -> bool:
        return all(_is_exact(w) for _, w in self.weights)

    def generating_value(self, x, y):
        """Evaluate ``sum w(a,b) x^a y^b``; works for scalars and truncated series."""
        acc = 0
        for (a, b), w in self.weights:
            acc = acc + w * (x**a) * (y**b)
        return acc


def size_biased_laws(mu: Measure2D, tol: float = 1e-9) -> tuple[Measure2D, Measure2D]:
    """Reproduction laws derived from an arm measure with unit arm means.

    ``nu_m(a, b) = (b + 1) mu(a, b + 1)`` (offspring law of a male individual)
    and ``nu_f(a, b) = (a + 1) mu(a + 1, b)``.  Under ``<a, mu> = <b, mu> = 1``
    both are probability measures.
    """
    ma, mb = mu.mean_a(), mu.mean_b()
    if abs(ma - 1) > tol or abs(mb - 1) > tol:
        raise ValueError(f"size-biased laws need unit arm means, got <a> = {ma}, <b> = {mb}")
    nu_m: dict[tuple[int, int], Scalar] = {}
    nu_f: dict[tuple[int, int], Scalar] = {}
    for (a, b), w in mu.weights:
        if b >= 1:
            nu_m[(a, b - 1)] = nu_m.get((a, b - 1), 0) + b * w
        if a >= 1:
            nu_f[(a - 1, b)] = nu_f.get((a - 1, b), 0) + a * w
    return Measure2D.from_dict(nu_m), Measure2D.from_dict(nu_f)


@dataclass(frozen=True)
class TruncatedSeries:
    """Univariate power series truncated at a fixed order.

    ``coeffs[k]`` is the coefficient of ``z^k``; all arithmetic is exact
    through the common order.  Binary operations require equal orders so that
    truncation is always explicit at construction time.
    """

    coeffs: tuple["Scalar", ...]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @staticmethod
    def zero(order: int) -> "TruncatedSeries":
        return TruncatedSeries((0,) * (order + 1))

    @staticmethod
    def constant(value: "Scalar", order: int) -> "TruncatedSeries":
        return TruncatedSeries((value,) + (0,) * order)

    @staticmethod
    def identity(order: int) -> "TruncatedSeries":
        """The series ``z``."""
        if order < 1:
            raise ValueError("identity series needs order >= 1")
        return TruncatedSeries((0, 1) + (0,) * (order - 1))

    def __getitem__(self, k: int):
        return self.coeffs[k]

    def _check(self, other: "TruncatedSeries") -> None:
        if self.order != other.order:
            raise ValueError(f"order mismatch: {self.order} vs {other.order}")

    def __add__(self, other):
        if isinstance(other, TruncatedSeries):
            self._check(other)
            return TruncatedSeries(tuple(x + y for x, y in zip(self.coeffs, other.coeffs)))
        return TruncatedSeries((self.coeffs[0] + other,) + self.coeffs[1:])

    __radd__ = __add__

    def __neg__(self):
        return TruncatedSeries(tuple(-x for x in self.coeffs))

    def __sub__(self, other):
        return self + (-other if isinstance(other, TruncatedSeries) else -other)

    def __mul__(self, other):
        if isinstance(other, TruncatedSeries):
            self._check(other)
            n = self.order
            out = [0] * (n + 1)
            for i, x in enumerate(self.coeffs):
                if x == 0:
                    continue
                for j in range(n + 1 - i):
                    y = other.coeffs[j]
                    if y != 0:
                        out[i + j] += x * y
            return TruncatedSeries(tuple(out))
        return TruncatedSeries(tuple(other * x for x in self.coeffs))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "TruncatedSeries":
        if k < 0:
            raise ValueError("negative powers are not supported")
        result = TruncatedSeries.constant(1, self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def antiderivative(self) -> "TruncatedSeries":
        """Antiderivative vanishing at 0, truncated back to the same order
        (the top input coefficient is discarded)."""
        out = [0]
        for k in range(self.order):
            c = self.coeffs[k]
            out.append(Fraction(c, k + 1) if isinstance(c, int) else c / (k + 1))
        return TruncatedSeries(tuple(out))

    def evaluate(self, z):
        acc = 0
        zp = 1
        for c in self.coeffs:
            acc += c * zp
            zp *= z
        return acc
