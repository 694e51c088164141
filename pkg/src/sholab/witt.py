"""The Witt superalgebra W(m,m;t) and its distinguished operators.

Vector fields are sparse maps (monomial, direction) -> coefficient and act on
O(m,m;t) as superderivations.  This module is the plain reference layer; the
block-indexed fast path used by the solvers lives in space.py and is
cross-checked against it.
"""

from __future__ import annotations

from typing import Iterator, Optional

from .dps import Element, Monomial, mono_key, mono_mul, mono_partial, multiply, partial, render_mono, var_mono
from .params import Params


class VectorField:
    """Sparse field sum f_r partial_r; no zero terms stored."""

    __slots__ = ("params", "terms")

    def __init__(self, params: Params, terms: Optional[dict[tuple[Monomial, int], int]] = None):
        self.params = params
        self.terms: dict[tuple[Monomial, int], int] = {}
        if terms:
            p = params.p
            for key, c in terms.items():
                c %= p
                if c:
                    self.terms[key] = c

    @classmethod
    def zero(cls, params: Params) -> "VectorField":
        return cls(params)

    @classmethod
    def partial_dir(cls, params: Params, r: int) -> "VectorField":
        from .dps import unit_mono

        return cls(params, {(unit_mono(params.m), r): 1})

    def is_zero(self) -> bool:
        return not self.terms

    def copy(self) -> "VectorField":
        out = VectorField(self.params)
        out.terms = dict(self.terms)
        return out

    def add_term(self, mono: Monomial, r: int, coef: int) -> None:
        key = (mono, r)
        c = (self.terms.get(key, 0) + coef) % self.params.p
        if c:
            self.terms[key] = c
        else:
            self.terms.pop(key, None)

    def __add__(self, other: "VectorField") -> "VectorField":
        out = self.copy()
        for (mono, r), c in other.terms.items():
            out.add_term(mono, r, c)
        return out

    def __sub__(self, other: "VectorField") -> "VectorField":
        out = self.copy()
        for (mono, r), c in other.terms.items():
            out.add_term(mono, r, -c)
        return out

    def scale(self, c: int) -> "VectorField":
        c %= self.params.p
        if c == 0:
            return VectorField.zero(self.params)
        return VectorField(self.params, {key: v * c for key, v in self.terms.items()})

    def __neg__(self) -> "VectorField":
        return self.scale(-1)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VectorField)
            and self.params == other.params
            and self.terms == other.terms
        )

    def coefficient(self, r: int) -> Element:
        """The O-coefficient of partial_r."""
        out = Element.zero(self.params)
        for (mono, s), c in self.terms.items():
            if s == r:
                out.add_term(mono, c)
        return out

    def grading(self) -> tuple[object, object]:
        """(z_degree | 'inhomogeneous', parity | 'mixed')."""
        params = self.params
        degs = {mono.degree - 1 for mono, _ in self.terms}
        pars = {(mono.parity + params.mu(r)) & 1 for mono, r in self.terms}
        deg = degs.pop() if len(degs) == 1 else ("inhomogeneous" if degs else -1)
        par = pars.pop() if len(pars) == 1 else ("mixed" if pars else 0)
        return deg, par

    def iter_sorted(self) -> Iterator[tuple[Monomial, int, int]]:
        key = lambda item: (item[0][0].degree, mono_key(self.params, item[0][0]), item[0][1])
        for (mono, r), c in sorted(self.terms.items(), key=key):
            yield mono, r, c

    def __repr__(self) -> str:
        return f"VectorField({render_field(self)})"


def apply(D: VectorField, f: Element) -> Element:
    """D(f) for the superderivation D = sum f_r partial_r."""
    params = D.params
    if params != f.params:
        raise ValueError("mismatched algebra parameters")
    out = Element.zero(params)
    for (mono, r), c in D.terms.items():
        for fm, fc in f.terms.items():
            hit = mono_partial(params, r, fm)
            if hit is None:
                continue
            dcoef, dmono = hit
            prod = mono_mul(params, mono, dmono)
            if prod is None:
                continue
            pcoef, pmono = prod
            out.add_term(pmono, c * fc * dcoef * pcoef)
    return out


def _term_parity(params: Params, mono: Monomial, r: int) -> int:
    return (mono.parity + params.mu(r)) & 1


def bracket(D: VectorField, E: VectorField) -> VectorField:
    """[D, E] by the closed coefficient formula, extended bilinearly."""
    params = D.params
    out = VectorField.zero(params)
    for (fm, i), cf in D.terms.items():
        pf = _term_parity(params, fm, i)
        for (gm, j), cg in E.terms.items():
            pg = _term_parity(params, gm, j)
            hit = mono_partial(params, i, gm)
            if hit is not None:
                dcoef, dmono = hit
                prod = mono_mul(params, fm, dmono)
                if prod is not None:
                    pcoef, pmono = prod
                    out.add_term(pmono, j, cf * cg * dcoef * pcoef)
            hit = mono_partial(params, j, fm)
            if hit is not None:
                dcoef, dmono = hit
                prod = mono_mul(params, gm, dmono)
                if prod is not None:
                    pcoef, pmono = prod
                    sign = -1 if (pf * pg) & 1 else 1
                    out.add_term(pmono, i, -sign * cf * cg * dcoef * pcoef)
    return out


def t_h(a: Element) -> VectorField:
    """The odd Hamiltonian field of a potential, term by homogeneous term."""
    params = a.params
    out = VectorField.zero(params)
    for mono, c in a.terms.items():
        pa = mono.parity
        for r in range(1, 2 * params.m + 1):
            hit = mono_partial(params, r, mono)
            if hit is None:
                continue
            dcoef, dmono = hit
            sign = -1 if (params.mu(r) * pa) & 1 else 1
            out.add_term(dmono, params.prime_of(r), c * dcoef * sign)
    return out


def divergence(D: VectorField) -> Element:
    """div(sum f_r partial_r) = sum (-1)^{mu(r) p(f_r)} partial_r(f_r)."""
    params = D.params
    out = Element.zero(params)
    for (mono, r), c in D.terms.items():
        hit = mono_partial(params, r, mono)
        if hit is None:
            continue
        dcoef, dmono = hit
        sign = -1 if (params.mu(r) * mono.parity) & 1 else 1
        out.add_term(dmono, c * dcoef * sign)
    return out


def delta_i(params: Params, i: int, f: Element) -> Element:
    if not 1 <= i <= params.m:
        raise ValueError(f"index {i} out of range 1..{params.m}")
    return partial(i, partial(i + params.m, f))


def delta(f: Element) -> Element:
    """Delta = sum_i partial_i partial_{i'}."""
    params = f.params
    out = Element.zero(params)
    for i in range(1, params.m + 1):
        out = out + delta_i(params, i, f)
    return out


def nabla(params: Params, i: int, mono: Monomial) -> Element:
    """Exponent bump x^(alpha) x^u -> x^(alpha+eps_i) x_{i'} x^u (may vanish)."""
    if not 1 <= i <= params.m:
        raise ValueError(f"index {i} out of range 1..{params.m}")
    if mono.alpha[i - 1] >= params.pi[i - 1]:
        return Element.zero(params)
    b = i - 1
    if mono.umask >> b & 1:
        return Element.zero(params)
    below = (mono.umask & ((1 << b) - 1)).bit_count()
    sign = -1 if below & 1 else 1
    alpha = list(mono.alpha)
    alpha[i - 1] += 1
    out = Element.zero(params)
    out.add_term(Monomial(tuple(alpha), mono.umask | (1 << b)), sign)
    return out


def gamma(params: Params, i: int, j: int, mono: Monomial) -> Element:
    """Gamma_i^j = nabla_j Delta_i on a basis monomial."""
    mid = delta_i(params, i, Element.from_mono(params, mono))
    out = Element.zero(params)
    for md, c in mid.terms.items():
        out = out + nabla(params, j, md).scale(c)
    return out


D_STAR = "D*"
D_ONE = "D1"
D_TWO = "D2"
D_OTHER = "other"


def index_sets(params: Params, mono: Monomial) -> tuple[tuple[int, ...], tuple[int, ...], str]:
    """(I, I~, class) for a basis monomial, by evaluating Delta_i and nabla_i."""
    I = tuple(
        i
        for i in range(1, params.m + 1)
        if not delta_i(params, i, Element.from_mono(params, mono)).is_zero()
    )
    It = tuple(i for i in range(1, params.m + 1) if not nabla(params, i, mono).is_zero())
    if I and It:
        cls = D_STAR
    elif not I and not It:
        cls = D_ONE
    elif not I:
        cls = D_TWO
    else:
        cls = D_OTHER
    return I, It, cls


def ho_membership(D: VectorField) -> bool:
    """Symmetry test for membership in HObar; requires homogeneous input."""
    deg, par = D.grading()
    if deg == "inhomogeneous" or par == "mixed":
        raise ValueError("HObar membership requires a homogeneous field")
    params = D.params
    coeffs = {r: D.coefficient(r) for r in range(1, 2 * params.m + 1)}
    for i in range(1, 2 * params.m + 1):
        for j in range(1, 2 * params.m + 1):
            lhs = partial(i, coeffs[params.prime_of(j)])
            rhs = partial(j, coeffs[params.prime_of(i)])
            exp = params.mu(i) * params.mu(j) + (params.mu(i) + params.mu(j)) * (par + 1)
            if exp & 1:
                rhs = -rhs
            if lhs != rhs:
                return False
    return True


def sprime_membership(D: VectorField) -> bool:
    return divergence(D).is_zero()


def sbar_membership(D: VectorField) -> bool:
    div = divergence(D)
    return all(mono.degree == 0 for mono in div.terms)


def euler_field(params: Params) -> VectorField:
    """h = sum_{r=1..2m} x_r partial_r; ad h multiplies by the Z-degree."""
    out = VectorField.zero(params)
    for r in range(1, 2 * params.m + 1):
        out.add_term(var_mono(params, r), r, 1)
    return out


def odd_euler_field(params: Params) -> VectorField:
    """h_1 = sum_i x_{i'} partial_{i'}."""
    out = VectorField.zero(params)
    for i in range(params.m + 1, 2 * params.m + 1):
        out.add_term(var_mono(params, i), i, 1)
    return out


def pair_potential(params: Params, i: int) -> Element:
    """x_i x_{i'}."""
    return multiply(Element.variable(params, i), Element.variable(params, i + params.m))


def toral_field(params: Params, i: int, j: int) -> VectorField:
    """T_ij = T_H(x_i x_{i'} - x_j x_{j'})."""
    if i == j:
        raise ValueError("toral field needs distinct indices")
    return t_h(pair_potential(params, i) - pair_potential(params, j))


def mono_weight(params: Params, mono: Monomial) -> tuple[int, ...]:
    """Eigenvalues of ad T_{1j}, j = 2..m, on T_H(mono); additive in factors."""
    out = []
    a = mono.alpha
    u = mono.umask
    d1 = u & 1
    for j in range(2, params.m + 1):
        dj = u >> (j - 1) & 1
        out.append((d1 - dj - a[0] + a[j - 1]) % params.p)
    return tuple(out)


def tail_potential(params: Params, i: int) -> VectorField:
    """The field x^(pi_i eps_i) partial_{i'} lying in HObar but not HO."""
    alpha = tuple(params.pi[k] if k == i - 1 else 0 for k in range(params.m))
    return VectorField(params, {(Monomial(alpha, 0), i + params.m): 1})


def render_field(D: VectorField) -> str:
    if D.is_zero():
        return "0"
    bits = []
    for mono, r, c in D.iter_sorted():
        bits.append(f"{c}*{render_mono(D.params, mono)}*d_{r}")
    return " + ".join(bits)
