"""The divided power superalgebra O(m,m;t) = O(m;t) (x) Lambda(m).

Monomials x^(alpha) x^u are encoded as (alpha tuple, u bitmask); bit b of the
mask stands for the exterior variable with direction m+1+b.  Exterior factors
are kept in ascending index order; every product is normalized to that order
with the transposition-count sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Optional

from .gfp import multi_binom
from .params import Params


@dataclass(frozen=True)
class Monomial:
    alpha: tuple[int, ...]
    umask: int

    @property
    def degree(self) -> int:
        return sum(self.alpha) + self.umask.bit_count()

    @property
    def parity(self) -> int:
        return self.umask.bit_count() & 1

    def u_indices(self, m: int) -> tuple[int, ...]:
        """Ascending exterior directions in m+1..2m."""
        return tuple(m + 1 + b for b in range(m) if self.umask >> b & 1)


def unit_mono(m: int) -> Monomial:
    return Monomial((0,) * m, 0)


def var_mono(params: Params, r: int) -> Monomial:
    """The degree-1 monomial x_r."""
    m = params.m
    if 1 <= r <= m:
        return Monomial(tuple(1 if i == r - 1 else 0 for i in range(m)), 0)
    if m < r <= 2 * m:
        return Monomial((0,) * m, 1 << (r - m - 1))
    raise ValueError(f"variable index {r} out of range 1..{2*m}")


def _inversions(u: int, v: int) -> int:
    # pairs (a in u, b in v) with a > b
    count = 0
    rest = v
    while rest:
        b = rest & -rest
        count += (u >> b.bit_length()).bit_count()
        rest ^= b
    return count


def koszul(u: int, v: int) -> int:
    """Sign merging ascending exterior words u then v; 0 on overlap."""
    if u & v:
        return 0
    return -1 if _inversions(u, v) & 1 else 1


def mono_mul(params: Params, a: Monomial, b: Monomial) -> Optional[tuple[int, Monomial]]:
    """Product of basis monomials: (coefficient, monomial), or None if zero."""
    sign = koszul(a.umask, b.umask)
    if sign == 0:
        return None
    gamma = tuple(x + y for x, y in zip(a.alpha, b.alpha))
    if any(g > pi for g, pi in zip(gamma, params.pi)):
        return None
    coef = multi_binom(a.alpha, b.alpha, params.p)
    if coef == 0:
        return None
    return sign * coef % params.p, Monomial(gamma, a.umask | b.umask)


def mono_partial(params: Params, r: int, a: Monomial) -> Optional[tuple[int, Monomial]]:
    """partial_r on a basis monomial: (coefficient, monomial), or None."""
    m = params.m
    if 1 <= r <= m:
        if a.alpha[r - 1] == 0:
            return None
        alpha = list(a.alpha)
        alpha[r - 1] -= 1
        return 1, Monomial(tuple(alpha), a.umask)
    if m < r <= 2 * m:
        b = r - m - 1
        if not a.umask >> b & 1:
            return None
        below = (a.umask & ((1 << b) - 1)).bit_count()
        return (-1 if below & 1 else 1) % params.p, Monomial(a.alpha, a.umask ^ (1 << b))
    raise ValueError(f"direction {r} out of range 1..{2*m}")


def mono_key(params: Params, a: Monomial) -> int:
    """Packing that sorts by (alpha lex, u); canonical in-degree order."""
    key = 0
    for x, pi in zip(a.alpha, params.pi):
        key = key * (pi + 1) + x
    return key * (1 << params.m) + a.umask


class Element:
    """Sparse F_p-linear combination of monomials; no zero terms stored."""

    __slots__ = ("params", "terms")

    def __init__(self, params: Params, terms: Optional[dict[Monomial, int]] = None):
        self.params = params
        self.terms: dict[Monomial, int] = {}
        if terms:
            p = params.p
            for mono, c in terms.items():
                c %= p
                if c:
                    self.terms[mono] = c

    @classmethod
    def zero(cls, params: Params) -> "Element":
        return cls(params)

    @classmethod
    def one(cls, params: Params) -> "Element":
        return cls(params, {unit_mono(params.m): 1})

    @classmethod
    def variable(cls, params: Params, r: int) -> "Element":
        return cls(params, {var_mono(params, r): 1})

    @classmethod
    def from_mono(cls, params: Params, mono: Monomial, coef: int = 1) -> "Element":
        return cls(params, {mono: coef})

    def is_zero(self) -> bool:
        return not self.terms

    def copy(self) -> "Element":
        out = Element(self.params)
        out.terms = dict(self.terms)
        return out

    def iter_sorted(self) -> Iterator[tuple[Monomial, int]]:
        key = lambda mono: (mono.degree, mono_key(self.params, mono))
        for mono in sorted(self.terms, key=key):
            yield mono, self.terms[mono]

    def add_term(self, mono: Monomial, coef: int) -> None:
        c = (self.terms.get(mono, 0) + coef) % self.params.p
        if c:
            self.terms[mono] = c
        else:
            self.terms.pop(mono, None)

    def __add__(self, other: "Element") -> "Element":
        self._check(other)
        out = self.copy()
        for mono, c in other.terms.items():
            out.add_term(mono, c)
        return out

    def __sub__(self, other: "Element") -> "Element":
        self._check(other)
        out = self.copy()
        for mono, c in other.terms.items():
            out.add_term(mono, -c)
        return out

    def scale(self, c: int) -> "Element":
        c %= self.params.p
        if c == 0:
            return Element.zero(self.params)
        return Element(self.params, {mono: v * c for mono, v in self.terms.items()})

    def __neg__(self) -> "Element":
        return self.scale(-1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Element) and self.params == other.params and self.terms == other.terms

    def _check(self, other: "Element") -> None:
        if self.params != other.params:
            raise ValueError("mismatched algebra parameters")

    def __repr__(self) -> str:
        return f"Element({render_element(self)})"


def multiply(f: Element, g: Element) -> Element:
    """Supercommutative product of O(m,m;t) elements."""
    f._check(g)
    params = f.params
    out = Element.zero(params)
    for ma, ca in f.terms.items():
        for mb, cb in g.terms.items():
            hit = mono_mul(params, ma, mb)
            if hit is None:
                continue
            coef, mono = hit
            out.add_term(mono, ca * cb * coef)
    return out


def partial(r: int, f: Element) -> Element:
    """The superderivation partial_r applied to f."""
    params = f.params
    out = Element.zero(params)
    for mono, c in f.terms.items():
        hit = mono_partial(params, r, mono)
        if hit is None:
            continue
        coef, dst = hit
        out.add_term(dst, c * coef)
    return out


def grading(f: Element) -> tuple[object, object]:
    """(z_degree | 'inhomogeneous', parity | 'mixed') over the terms of f."""
    degrees = {mono.degree for mono in f.terms}
    parities = {mono.parity for mono in f.terms}
    deg = degrees.pop() if len(degrees) == 1 else ("inhomogeneous" if degrees else 0)
    par = parities.pop() if len(parities) == 1 else ("mixed" if parities else 0)
    return deg, par


def enumerate_basis(params: Params, degree: int) -> list[Monomial]:
    """All monomials of the given Z-degree, in canonical order."""
    if degree < 0 or degree > params.xi:
        return []
    m = params.m
    out = []
    for k in range(min(m, degree) + 1):
        rest = degree - k
        for bits in combinations(range(m), k):
            umask = 0
            for b in bits:
                umask |= 1 << b
            for alpha in _compositions(rest, params.pi):
                out.append(Monomial(alpha, umask))
    out.sort(key=lambda mono: mono_key(params, mono))
    return out


def _compositions(total: int, caps: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
    if not caps:
        if total == 0:
            yield ()
        return
    head_cap = caps[0]
    for head in range(min(total, head_cap) + 1):
        for tail in _compositions(total - head, caps[1:]):
            yield (head,) + tail


def render_mono(params: Params, mono: Monomial) -> str:
    parts = []
    if any(mono.alpha):
        parts.append("x^(" + ",".join(str(a) for a in mono.alpha) + ")")
    for r in mono.u_indices(params.m):
        parts.append(f"x_{{{r - params.m}'}}")
    return "*".join(parts) if parts else "1"


def render_element(f: Element) -> str:
    if f.is_zero():
        return "0"
    bits = []
    for mono, c in f.iter_sorted():
        bits.append(f"{c}*{render_mono(f.params, mono)}")
    return " + ".join(bits)
