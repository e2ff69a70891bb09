"""Truncated multivariate Taylor (jet) arithmetic, up to third order.

A jet stores the scaled partial derivatives ``d^alpha f / alpha!`` of a scalar
field at a base point, for every multi-index ``alpha`` with ``|alpha| <= order``.
With that normalization multiplication is a plain truncated Cauchy product and
``partial`` rescales on the way out.  Jets are immutable values and every
operation here is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

MAX_ORDER = 3
HYP2F1_REL_TOL = 1e-16
HYP2F1_MAX_TERMS = 10000


class JetError(ValueError):
    """Structural misuse of the jet algebra (dimension/order mismatch)."""


class JetDomainError(JetError):
    """Evaluation left the domain of an operation (ln of <= 0, division by zero value, ...)."""


@dataclass(frozen=True)
class Point:
    """A base point in canonical coordinates; at least two finite coordinates."""

    coords: tuple[float, ...]

    def __post_init__(self) -> None:
        coords = tuple(float(c) for c in self.coords)
        if len(coords) < 2:
            raise ValueError(f"a point needs at least 2 coordinates, got {len(coords)}")
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite coordinate in {coords}")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    def __getitem__(self, i: int) -> float:
        return self.coords[i]

    def __iter__(self):
        return iter(self.coords)

    def __repr__(self) -> str:
        return f"Point{self.coords}"


def point(*coords: float) -> Point:
    return Point(tuple(coords))


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices with |alpha| <= order, grade-major then lexicographic.

    Grade-major ordering makes ``multi_indices(dim, m)`` a prefix of
    ``multi_indices(dim, k)`` for m <= k, so truncation is a slice.
    """
    if dim < 1:
        raise JetError(f"jet dimension must be >= 1, got {dim}")
    if not 0 <= order <= MAX_ORDER:
        raise JetError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
    out: list[tuple[int, ...]] = []
    for total in range(order + 1):
        out.extend(_compositions(dim, total))
    return tuple(out)


def _compositions(dim: int, total: int) -> list[tuple[int, ...]]:
    if dim == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        out.extend((first,) + rest for rest in _compositions(dim - 1, total - first))
    return sorted(out)


@lru_cache(maxsize=None)
def _positions(dim: int, order: int) -> dict[tuple[int, ...], int]:
    return {alpha: pos for pos, alpha in enumerate(multi_indices(dim, order))}


@lru_cache(maxsize=None)
def _mul_table(dim: int, order: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Row r lists the (pa, pb) coefficient pairs whose product lands on index r."""
    idx = multi_indices(dim, order)
    pos = _positions(dim, order)
    rows: list[list[tuple[int, int]]] = [[] for _ in idx]
    for pa, alpha in enumerate(idx):
        ta = sum(alpha)
        for pb, beta in enumerate(idx):
            if ta + sum(beta) > order:
                continue
            gamma = tuple(a + b for a, b in zip(alpha, beta))
            rows[pos[gamma]].append((pa, pb))
    return tuple(tuple(r) for r in rows)


@lru_cache(maxsize=None)
def _alpha_factorial(alpha: tuple[int, ...]) -> float:
    out = 1.0
    for a in alpha:
        out *= math.factorial(a)
    return out


@dataclass(frozen=True)
class Jet:
    """Truncated Taylor expansion; coeffs[i] is d^alpha f / alpha! for multi_indices[i]."""

    dim: int
    order: int
    coeffs: tuple[float, ...]

    def __post_init__(self) -> None:
        expected = len(multi_indices(self.dim, self.order))
        if len(self.coeffs) != expected:
            raise JetError(
                f"jet of dim {self.dim}, order {self.order} needs {expected} "
                f"coefficients, got {len(self.coeffs)}"
            )

    @property
    def value(self) -> float:
        return self.coeffs[0]

    def coefficient(self, alpha: tuple[int, ...]) -> float:
        """The Taylor coefficient d^alpha f / alpha!."""
        return self.coeffs[_position_of(self, alpha)]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(zip(multi_indices(self.dim, self.order), self.coeffs))

    def __add__(self, other):
        return add(self, _promote(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _promote(other, self))

    def __rsub__(self, other):
        return sub(_promote(other, self), self)

    def __mul__(self, other):
        return mul(self, _promote(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _promote(other, self))

    def __rtruediv__(self, other):
        return div(_promote(other, self), self)

    def __neg__(self):
        return Jet(self.dim, self.order, tuple(-c for c in self.coeffs))


def _promote(x, like: Jet) -> Jet:
    if isinstance(x, Jet):
        return x
    return constant(like.dim, like.order, float(x))


def _position_of(j: Jet, alpha: Iterable[int]) -> int:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != j.dim:
        raise JetError(f"multi-index {alpha} does not match dimension {j.dim}")
    if sum(alpha) > j.order:
        raise JetError(f"multi-index {alpha} exceeds jet order {j.order}")
    return _positions(j.dim, j.order)[alpha]


def _check_compatible(a: Jet, b: Jet) -> None:
    if a.dim != b.dim or a.order != b.order:
        raise JetError(
            f"incompatible jets: (dim {a.dim}, order {a.order}) vs (dim {b.dim}, order {b.order})"
        )


def constant(dim: int, order: int, value: float) -> Jet:
    coeffs = [0.0] * len(multi_indices(dim, order))
    coeffs[0] = float(value)
    return Jet(dim, order, tuple(coeffs))


def variable(dim: int, order: int, index: int, value: float) -> Jet:
    """The coordinate lift u^{index} (0-based) as a jet at the given value."""
    if not 0 <= index < dim:
        raise JetError(f"coordinate index {index} out of range for dimension {dim}")
    coeffs = [0.0] * len(multi_indices(dim, order))
    coeffs[0] = float(value)
    if order >= 1:
        unit = tuple(1 if i == index else 0 for i in range(dim))
        coeffs[_positions(dim, order)[unit]] = 1.0
    return Jet(dim, order, tuple(coeffs))


def lift(p: Point, order: int, index: int) -> Jet:
    return variable(p.dim, order, index, p[index])


def add(a: Jet, b: Jet) -> Jet:
    _check_compatible(a, b)
    return Jet(a.dim, a.order, tuple(x + y for x, y in zip(a.coeffs, b.coeffs)))


def sub(a: Jet, b: Jet) -> Jet:
    _check_compatible(a, b)
    return Jet(a.dim, a.order, tuple(x - y for x, y in zip(a.coeffs, b.coeffs)))


def mul(a: Jet, b: Jet) -> Jet:
    _check_compatible(a, b)
    rows = _mul_table(a.dim, a.order)
    ac, bc = a.coeffs, b.coeffs
    return Jet(a.dim, a.order, tuple(sum(ac[pa] * bc[pb] for pa, pb in row) for row in rows))


def div(a: Jet, b: Jet) -> Jet:
    """Quotient jet; solves the triangular system value-first."""
    _check_compatible(a, b)
    if b.coeffs[0] == 0.0:
        raise JetDomainError("division by a jet with zero value")
    rows = _mul_table(a.dim, a.order)
    inv = 1.0 / b.coeffs[0]
    q = [0.0] * len(rows)
    for pos, row in enumerate(rows):
        s = a.coeffs[pos]
        for pa, pb in row:
            if pa != 0:
                s -= b.coeffs[pa] * q[pb]
        q[pos] = s * inv
    return Jet(a.dim, a.order, tuple(q))


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    try:
        fn = {"add": add, "sub": sub, "mul": mul, "div": div}[op]
    except KeyError:
        raise JetError(f"unknown arithmetic op {op!r}") from None
    return fn(a, b)


def scale(a: Jet, s: float) -> Jet:
    return Jet(a.dim, a.order, tuple(c * s for c in a.coeffs))


def truncate(a: Jet, order: int) -> Jet:
    if order > a.order:
        raise JetError(f"cannot extend a jet of order {a.order} to order {order}")
    return Jet(a.dim, order, a.coeffs[: len(multi_indices(a.dim, order))])


def derivative(a: Jet, index: int) -> Jet:
    """The jet of d f / d u^{index}, one order lower."""
    if a.order < 1:
        raise JetError("cannot differentiate an order-0 jet")
    if not 0 <= index < a.dim:
        raise JetError(f"coordinate index {index} out of range for dimension {a.dim}")
    pos = _positions(a.dim, a.order)
    out = []
    for beta in multi_indices(a.dim, a.order - 1):
        shifted = tuple(b + (1 if i == index else 0) for i, b in enumerate(beta))
        out.append(a.coeffs[pos[shifted]] * (beta[index] + 1))
    return Jet(a.dim, a.order - 1, tuple(out))


def partial(a: Jet, alpha: Iterable[int]) -> float:
    """The plain partial derivative d^alpha f (factorial rescaling applied)."""
    alpha = tuple(int(x) for x in alpha)
    return a.coeffs[_position_of(a, alpha)] * _alpha_factorial(alpha)


def compose_univariate(g: Jet, series: Iterable[float]) -> Jet:
    """(f o g) for f given by Taylor coefficients of f at g.value.

    ``series[j]`` must be f^(j)(g.value)/j!; only the first order+1 entries
    are used.  Evaluated by Horner's scheme in the zero-value jet g - g0.
    """
    series = list(series)[: g.order + 1]
    w = Jet(g.dim, g.order, (0.0,) + g.coeffs[1:])
    out = constant(g.dim, g.order, series[-1])
    for c in reversed(series[:-1]):
        out = add(mul(out, w), constant(g.dim, g.order, c))
    return out


def jet_exp(a: Jet) -> Jet:
    e0 = math.exp(a.value)
    return compose_univariate(a, [e0 / math.factorial(j) for j in range(a.order + 1)])


def jet_ln(a: Jet) -> Jet:
    if a.value <= 0.0:
        raise JetDomainError(f"ln of non-positive value {a.value}")
    series = [math.log(a.value)]
    for j in range(1, a.order + 1):
        series.append((-1.0) ** (j - 1) / (j * a.value**j))
    return compose_univariate(a, series)


def jet_pow(a: Jet, r: float) -> Jet:
    """a**r; integer exponents work for any nonzero value, real ones need value > 0."""
    r = float(r)
    if r == 0.0:
        return constant(a.dim, a.order, 1.0)
    if r.is_integer():
        return _int_pow(a, int(r))
    if a.value <= 0.0:
        raise JetDomainError(f"pow with non-integer exponent {r} at non-positive value {a.value}")
    series = []
    binom = 1.0
    for j in range(a.order + 1):
        series.append(binom * a.value ** (r - j))
        binom *= (r - j) / (j + 1)
    return compose_univariate(a, series)


def _int_pow(a: Jet, n: int) -> Jet:
    if n < 0:
        if a.value == 0.0:
            raise JetDomainError("negative power of a jet with zero value")
        return div(constant(a.dim, a.order, 1.0), _int_pow(a, -n))
    out = constant(a.dim, a.order, 1.0)
    base = a
    while n:
        if n & 1:
            out = mul(out, base)
        base = mul(base, base) if n > 1 else base
        n >>= 1
    return out


def jet_elementary(a: Jet, fn: str, r: float | None = None) -> Jet:
    if fn == "exp":
        return jet_exp(a)
    if fn == "ln":
        return jet_ln(a)
    if fn == "pow":
        if r is None:
            raise JetError("pow needs an exponent")
        return jet_pow(a, r)
    raise JetError(f"unknown elementary function {fn!r}")


def _bad_c(c: float) -> bool:
    return c <= 0.0 and float(c).is_integer()


def hyp2f1_value(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric series 2F1(a,b;c;z), |z| < 1, by direct summation."""
    if _bad_c(c):
        raise JetDomainError(f"2F1 parameter c={c} is a non-positive integer")
    if abs(z) >= 1.0:
        raise JetDomainError(f"2F1 series requires |z| < 1, got z={z}")
    total = 1.0
    term = 1.0
    for k in range(HYP2F1_MAX_TERMS):
        term *= (a + k) * (b + k) * z / ((c + k) * (k + 1.0))
        total += term
        if abs(term) <= HYP2F1_REL_TOL * max(1.0, abs(total)):
            return total
    raise JetDomainError(f"2F1 series did not converge for z={z}")


def jet_hypergeom_2f1(a: float, b: float, c: float, z: Jet) -> Jet:
    """2F1(a,b;c;z) for a jet argument.

    Derivatives come from the parameter-shift recurrence
    d/dz 2F1(a,b;c;z) = (ab/c) 2F1(a+1,b+1;c+1;z).
    """
    series = []
    prefactor = 1.0
    for j in range(z.order + 1):
        series.append(prefactor * hyp2f1_value(a + j, b + j, c + j, z.value) / math.factorial(j))
        prefactor *= (a + j) * (b + j) / (c + j)
    return compose_univariate(z, series)
