"""The p-power map on even vector fields and restrictedness verdicts.

At t = 1 the Witt superalgebra is the full superderivation algebra of the
underlying associative algebra, so an even field D is pinned down by its
values on the variables and D^p can be rebuilt from the p-fold images of the
x_r.  At t != 1 that reconstruction is unsound (derivations are no longer
determined by the variables), so non-restrictedness is certified instead by
an explicit outer derivation of degree -p built from partial_i^p.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import witt
from .dps import Element, enumerate_basis
from .families import GradedSubalgebra
from .params import Params
from .space import get_space


@dataclass
class PPowerResult:
    input: witt.VectorField
    output: witt.VectorField
    certified: bool


def p_power(D: witt.VectorField, certify_basis: bool = False) -> PPowerResult:
    """D^p rebuilt from generator images; optional full operator certificate."""
    params = D.params
    _, par = D.grading()
    if par == "mixed" or par == 1:
        raise ValueError("the p-power map is defined on even fields")
    out = witt.VectorField.zero(params)
    for r in range(1, 2 * params.m + 1):
        u = Element.variable(params, r)
        for _ in range(params.p):
            u = witt.apply(D, u)
        for mono, c in u.terms.items():
            out.add_term(mono, r, c)
    certified = False
    if certify_basis:
        certified = _certify_composition(D, out)
    return PPowerResult(D, out, certified)


def _certify_composition(D: witt.VectorField, P: witt.VectorField) -> bool:
    """Operator check: P agrees with the p-fold composition on every monomial."""
    params = D.params
    for d in range(params.xi + 1):
        for mono in enumerate_basis(params, d):
            f = Element.from_mono(params, mono)
            for _ in range(params.p):
                f = witt.apply(D, f)
            if witt.apply(P, Element.from_mono(params, mono)) != f:
                return False
    return True


def partial_power_map(params: Params, i: int, k: int):
    """The operator partial_i^(p^k) on potentials, as per-degree index tables."""
    sp = get_space(params)
    e = params.p**k

    def tables(b: int) -> tuple[np.ndarray, np.ndarray]:
        dst = np.arange(sp.n_monos(b), dtype=np.int64)
        coef = np.ones(sp.n_monos(b), dtype=np.int64)
        d = b
        for _ in range(e):
            if d - 1 < 0:
                return np.full_like(dst, -1), np.zeros_like(coef)
            pdst, pco = sp.pd_table(i, d)
            ok = dst >= 0
            nxt = np.where(ok, pdst[np.where(ok, dst, 0)], -1)
            coef = coef * np.where(ok, pco[np.where(ok, dst, 0)], 0) % params.p
            dst = np.where(coef == 0, -1, nxt)
            d -= 1
        return dst, coef

    return tables


@dataclass
class RestrictednessReport:
    family: str
    params: Params
    restricted: bool
    witness: Optional[str]
    checked: int


def is_restricted(X: GradedSubalgebra, certify_samples: int = 0) -> RestrictednessReport:
    """Closure of the even part under the p-power, or an explicit obstruction."""
    params = X.params
    if all(t == 1 for t in params.t):
        checked = 0
        sample = 0
        for key in X.sorted_keys():
            if key[1] != 0:
                continue
            for D in X.basis_fields(key):
                res = p_power(D)
                checked += 1
                if sample < certify_samples:
                    if not _certify_composition(D, res.output):
                        raise AssertionError("p-power reconstruction failed certification")
                    sample += 1
                if not res.output.is_zero() and X.membership_field(res.output) is None:
                    return RestrictednessReport(
                        X.name, params, False, witt.render_field(D), checked
                    )
        return RestrictednessReport(X.name, params, True, None, checked)

    # some t_i >= 2: exhibit the degree -p obstruction from partial_i^p
    from .families import globalize

    i = next(idx + 1 for idx, ti in enumerate(params.t) if ti >= 2)
    phi = partial_power_map(params, i, 1)
    nonzero = None
    for key in X.sorted_keys():
        blk = X.blocks[key]
        d = key[0]
        if d - params.p < -1:  # image lands in ker(T_H) or below: zero field
            continue
        b = d + 2
        dst, coef = phi(b)
        target_key = (d - params.p, key[1], key[2])
        rows = globalize(X.space, key, blk.mat, blk.cols)
        out = np.zeros((rows.shape[0], X.space.n_monos(b - params.p)), dtype=np.int64)
        ok = np.nonzero(dst >= 0)[0]
        if ok.size:
            np.add.at(out.T, dst[ok], (rows[:, ok] * coef[ok][None, :]).T)
        out = np.mod(out, params.p)
        if not np.any(out):
            continue
        tcols = X.ambient_cols(target_key)
        assert np.count_nonzero(out) == np.count_nonzero(out[:, tcols])
        for row in out[:, tcols]:
            if np.any(row) and X.membership_potvec(target_key, row) is None:
                raise AssertionError("partial_i^p image left the algebra")
        nonzero = nonzero or key
    if nonzero is None:
        raise AssertionError("expected a nonzero degree -p derivation at t != 1")
    if X.dim_at(-params.p):
        raise AssertionError("unexpected elements at degree -p")
    witness = (
        f"(ad d_{i})^{params.p}: nonzero degree {-params.p} derivation of {X.name}; "
        f"inner derivations act in degrees >= -1"
    )
    return RestrictednessReport(X.name, params, False, witness, 0)


@dataclass
class ToralReport:
    abelian: bool
    toral: bool
    inside: bool
    dim: int


def toral_basis_check(params: Params, X: Optional[GradedSubalgebra] = None) -> ToralReport:
    """T = span{T_ij}: abelian, p-power fixed, inside the family, dim m-1."""
    fields = {}
    for i in range(1, params.m + 1):
        for j in range(1, params.m + 1):
            if i != j:
                fields[(i, j)] = witt.toral_field(params, i, j)
    abelian = all(
        witt.bracket(a, b).is_zero() for a in fields.values() for b in fields.values()
    )
    toral = all(p_power(f).output == f for f in fields.values())
    inside = True
    if X is not None:
        inside = all(X.membership_field(f) is not None for f in fields.values())
    sp = get_space(params)
    rows = []
    ncols = sp.n_w(0)
    for f in fields.values():
        _, vec = sp.wvec_from_field(f)
        dense = np.zeros(ncols, dtype=np.int64)
        for pos, c in vec.items():
            dense[pos] = c
        rows.append(dense)
    from . import linfp

    dim = linfp.rank(np.array(rows, dtype=np.int64), params.p)
    return ToralReport(abelian, toral, inside, dim)
