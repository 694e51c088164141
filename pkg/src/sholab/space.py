"""Indexed monomial tables and the vectorized bracket kernels.

Every monomial of O(m,m;t) gets a fixed position inside its Z-degree
(ascending packed key = (alpha lex, u)).  Positions are grouped into blocks by
(parity, torus weight); the torus T_H(x_1 x_{1'} - x_j x_{j'}) acts diagonally
on monomials, so all family builds and solvers operate block by block.

Two coordinate systems are used:
  O-coordinates  -- potentials: vectors over the monomials of one degree;
  W-coordinates  -- fields: vectors over pairs (monomial, direction), with
                    position mono_pos * 2m + (r - 1) inside W-degree d for a
                    coefficient monomial of degree d + 1.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from .dps import Element, Monomial, enumerate_basis
from .gfp import binom_digit
from .params import Params
from .witt import VectorField


class DegreeTable:
    """Array view of the monomials of one Z-degree, in canonical order."""

    __slots__ = ("n", "alpha", "umask", "key", "parity", "weight", "wkey", "blocks")

    def __init__(self, n, alpha, umask, key, parity, weight, wkey):
        self.n = n
        self.alpha = alpha
        self.umask = umask
        self.key = key
        self.parity = parity
        self.weight = weight
        self.wkey = wkey
        self.blocks: dict[tuple[int, int], np.ndarray] = {}


class Space:
    """Per-Params tables shared by families and solvers."""

    def __init__(self, params: Params):
        self.params = params
        m, p = params.m, params.p
        self.m, self.p = m, p
        self.two_m = 2 * m
        radix = np.array([pi + 1 for pi in params.pi], dtype=np.int64)
        strides = np.ones(m, dtype=np.int64)
        for i in range(m - 2, -1, -1):
            strides[i] = strides[i + 1] * radix[i + 1]
        self.strides = strides
        self.koszul_table = self._build_koszul_table(m)
        self.binom_table = self._build_binom_table(p)
        self.var_weight = self._build_var_weights()
        self.degrees: list[DegreeTable] = [self._build_degree(d) for d in range(params.xi + 1)]
        self._pd_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    # ----- construction -----

    @staticmethod
    def _build_koszul_table(m: int) -> np.ndarray:
        size = 1 << m
        tab = np.zeros((size, size), dtype=np.int64)
        for u in range(size):
            for v in range(size):
                if u & v:
                    continue
                inv = 0
                rest = v
                while rest:
                    b = rest & -rest
                    inv += (u >> b.bit_length()).bit_count()
                    rest ^= b
                tab[u, v] = -1 if inv & 1 else 1
        return tab

    @staticmethod
    def _build_binom_table(p: int) -> np.ndarray:
        tab = np.zeros((p, p), dtype=np.int64)
        for n in range(p):
            for k in range(n + 1):
                tab[n, k] = binom_digit(n, k, p)
        return tab

    def _build_var_weights(self) -> np.ndarray:
        m, p = self.m, self.p
        w = np.zeros((2 * m + 1, m - 1), dtype=np.int64)
        for r in range(1, m + 1):
            for j in range(2, m + 1):
                w[r, j - 2] = (-(1 if r == 1 else 0) + (1 if r == j else 0)) % p
        for i in range(1, m + 1):
            for j in range(2, m + 1):
                w[i + m, j - 2] = ((1 if i == 1 else 0) - (1 if i == j else 0)) % p
        return w

    def _weight_of(self, alpha: np.ndarray, umask: np.ndarray) -> np.ndarray:
        m, p = self.m, self.p
        n = alpha.shape[0]
        w = np.zeros((n, m - 1), dtype=np.int64)
        d1 = umask & 1
        for j in range(2, m + 1):
            dj = (umask >> (j - 1)) & 1
            w[:, j - 2] = (d1 - dj - alpha[:, 0] + alpha[:, j - 1]) % p
        return w

    def pack_weight(self, w: np.ndarray) -> np.ndarray:
        p = self.p
        out = np.zeros(w.shape[0], dtype=np.int64)
        for j in range(w.shape[1]):
            out = out * p + np.mod(w[:, j], p)
        return out

    def _build_degree(self, d: int) -> DegreeTable:
        params = self.params
        monos = enumerate_basis(params, d)
        n = len(monos)
        alpha = np.zeros((n, self.m), dtype=np.int64)
        umask = np.zeros(n, dtype=np.int64)
        for i, mono in enumerate(monos):
            alpha[i] = mono.alpha
            umask[i] = mono.umask
        key = (alpha @ self.strides) * (1 << self.m) + umask
        assert np.all(np.diff(key) > 0) if n > 1 else True
        parity = np.zeros(n, dtype=np.int64)
        for i in range(n):
            parity[i] = int(umask[i]).bit_count() & 1
        weight = self._weight_of(alpha, umask)
        wkey = self.pack_weight(weight)
        table = DegreeTable(n, alpha, umask, key, parity, weight, wkey)
        combo = parity * (self.p ** (self.m - 1) + 1) + wkey
        for val in np.unique(combo):
            sel = np.nonzero(combo == val)[0]
            par = int(parity[sel[0]])
            table.blocks[(par, int(wkey[sel[0]]))] = sel
        return table

    # ----- lookups -----

    def n_monos(self, d: int) -> int:
        if d < 0 or d > self.params.xi:
            return 0
        return self.degrees[d].n

    def mono_at(self, d: int, pos: int) -> Monomial:
        t = self.degrees[d]
        return Monomial(tuple(int(x) for x in t.alpha[pos]), int(t.umask[pos]))

    def mono_pos(self, mono: Monomial) -> int:
        d = mono.degree
        key = 0
        for x, s in zip(mono.alpha, self.strides):
            key += x * int(s)
        key = key * (1 << self.m) + mono.umask
        t = self.degrees[d]
        i = int(np.searchsorted(t.key, key))
        if i >= t.n or t.key[i] != key:
            raise KeyError(f"monomial {mono} not found in degree {d}")
        return i

    def lookup_keys(self, d: int, keys: np.ndarray) -> np.ndarray:
        """Positions of packed keys in degree d; -1 for keys not present."""
        if d < 0 or d > self.params.xi:
            return np.full(keys.shape, -1, dtype=np.int64)
        t = self.degrees[d]
        idx = np.searchsorted(t.key, keys)
        idx = np.clip(idx, 0, max(t.n - 1, 0))
        ok = (t.n > 0) & (t.key[idx] == keys)
        return np.where(ok, idx, -1)

    # ----- partial derivative tables -----

    def pd_table(self, r: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        """(dst positions in degree d-1, coefs) of partial_r on degree d; dst=-1 if zero."""
        key = (r, d)
        hit = self._pd_cache.get(key)
        if hit is not None:
            return hit
        t = self.degrees[d]
        n = t.n
        m, p = self.m, self.p
        dst = np.full(n, -1, dtype=np.int64)
        coef = np.zeros(n, dtype=np.int64)
        if n and d >= 1:
            if r <= m:
                have = t.alpha[:, r - 1] > 0
                alpha2 = t.alpha[have].copy()
                alpha2[:, r - 1] -= 1
                keys = (alpha2 @ self.strides) * (1 << m) + t.umask[have]
                dst[have] = self.lookup_keys(d - 1, keys)
                coef[have] = 1
            else:
                b = r - m - 1
                have = (t.umask >> b & 1).astype(bool)
                um2 = t.umask[have] ^ (1 << b)
                keys = (t.alpha[have] @ self.strides) * (1 << m) + um2
                dst[have] = self.lookup_keys(d - 1, keys)
                below = t.umask[have] & ((1 << b) - 1)
                signs = np.ones(below.shape, dtype=np.int64)
                for i, x in enumerate(below):
                    if int(x).bit_count() & 1:
                        signs[i] = p - 1
                coef[have] = signs
        self._pd_cache[key] = (dst, coef)
        return dst, coef

    # ----- vectorized products -----

    def mul_pairs(self, dA: int, ia: np.ndarray, dB: int, ib: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pairwise monomial products: (coefs, dst positions in degree dA+dB)."""
        p = self.p
        tA, tB = self.degrees[dA], self.degrees[dB]
        ga = tA.alpha[ia] + tB.alpha[ib]
        coef = self.koszul_table[tA.umask[ia], tB.umask[ib]] % p
        over = np.any(ga > np.array(self.params.pi, dtype=np.int64), axis=1)
        coef = np.where(over, 0, coef)
        na = tA.alpha[ia]
        for c in range(self.m):
            nn = ga[:, c].copy()
            kk = na[:, c].copy()
            while True:
                coef = coef * self.binom_table[nn % p, kk % p] % p
                nn //= p
                kk //= p
                if not np.any(nn):
                    break
        um = tA.umask[ia] | tB.umask[ib]
        keys = (ga @ self.strides) * (1 << self.m) + um
        dst = self.lookup_keys(dA + dB, keys)
        coef = np.where(dst < 0, 0, coef)
        dst = np.where(coef == 0, -1, dst)
        return coef, dst

    def poisson_pairs(self, dA: int, ia: np.ndarray, dB: int, ib: np.ndarray):
        """Per-direction terms of {a, b} = sum_r s(r,a) partial_r(a) partial_{r'}(b).

        Yields (coefs, dst positions in degree dA+dB-2) for r = 1..2m.
        """
        p = self.p
        tA = self.degrees[dA]
        parA = tA.parity[ia]
        for r in range(1, self.two_m + 1):
            rp = self.params.prime_of(r)
            dstA, coefA = self.pd_table(r, dA)
            dstB, coefB = self.pd_table(rp, dB)
            ca, da = coefA[ia], dstA[ia]
            cb, db = coefB[ib], dstB[ib]
            ok = (da >= 0) & (db >= 0)
            if not np.any(ok):
                continue
            cm, dm = self.mul_pairs(dA - 1, np.where(ok, da, 0), dB - 1, np.where(ok, db, 0))
            coef = ca * cb % p * cm % p
            if r > self.m:
                sgn = np.where(parA & 1, p - 1, 1)
                coef = coef * sgn % p
            coef = np.where(ok & (dm >= 0), coef, 0)
            dst = np.where(coef == 0, -1, dm)
            if np.any(coef):
                yield coef, dst

    def poisson_grid(self, dA: int, pa: np.ndarray, dB: int, pb: np.ndarray,
                     target_cols: np.ndarray) -> np.ndarray:
        """Dense tensor (len(pa), len(pb), len(target_cols)) of {mono_a, mono_b}.

        target_cols must contain every monomial the products can reach
        (one (parity, weight) block of degree dA + dB - 2).
        """
        na, nb = len(pa), len(pb)
        grid_a = np.repeat(pa, nb)
        grid_b = np.tile(pb, na)
        out = np.zeros((na * nb, len(target_cols)), dtype=np.int64)
        if dA + dB - 2 < 0 or dA + dB - 2 > self.params.xi or na * nb == 0 or len(target_cols) == 0:
            return out.reshape(na, nb, len(target_cols))
        for coef, dst in self.poisson_pairs(dA, grid_a, dB, grid_b):
            hit = np.nonzero(coef)[0]
            if hit.size == 0:
                continue
            loc = np.searchsorted(target_cols, dst[hit])
            loc = np.clip(loc, 0, len(target_cols) - 1)
            ok = target_cols[loc] == dst[hit]
            if not np.all(ok):
                raise AssertionError("poisson product escaped the target block")
            np.add.at(out, (hit, loc), coef[hit])
        return np.mod(out, self.p).reshape(na, nb, len(target_cols))

    # ----- W-coordinate helpers -----

    def n_w(self, d: int) -> int:
        return self.n_monos(d + 1) * self.two_m

    def w_tables(self, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(parity, wkey, weight vectors) for the W-basis of degree d."""
        t = self.degrees[d + 1]
        par = np.repeat(t.parity, self.two_m).copy()
        wv = np.repeat(t.weight, self.two_m, axis=0).copy()
        dirs = np.tile(np.arange(1, self.two_m + 1), t.n)
        par = (par + (dirs > self.m)) & 1
        wv = np.mod(wv - self.var_weight[dirs], self.p)
        return par, self.pack_weight(wv), wv

    @lru_cache(maxsize=None)
    def w_blocks(self, d: int) -> dict[tuple[int, int], np.ndarray]:
        """W-basis positions of degree d grouped by (parity, packed weight)."""
        if self.n_w(d) == 0:
            return {}
        par, wkey, _ = self.w_tables(d)
        combo = par * (self.p ** (self.m - 1) + 1) + wkey
        out = {}
        for val in np.unique(combo):
            sel = np.nonzero(combo == val)[0]
            out[(int(par[sel[0]]), int(wkey[sel[0]]))] = sel
        return out

    def w_pos(self, d: int, mono_pos: int, r: int) -> int:
        return mono_pos * self.two_m + (r - 1)

    def field_from_wvec(self, d: int, cols: np.ndarray, vec: np.ndarray) -> VectorField:
        out = VectorField.zero(self.params)
        for c, v in zip(cols, vec):
            if v % self.p == 0:
                continue
            mono = self.mono_at(d + 1, int(c) // self.two_m)
            out.add_term(mono, int(c) % self.two_m + 1, int(v))
        return out

    def wvec_from_field(self, D: VectorField) -> tuple[int, dict[int, int]]:
        deg, _ = D.grading()
        if deg == "inhomogeneous":
            raise ValueError("field is not Z-homogeneous")
        out = {}
        for (mono, r), c in D.terms.items():
            out[self.mono_pos(mono) * self.two_m + (r - 1)] = c
        return int(deg), out

    def element_from_ovec(self, d: int, cols: np.ndarray, vec: np.ndarray) -> Element:
        out = Element.zero(self.params)
        for c, v in zip(cols, vec):
            if v % self.p:
                out.add_term(self.mono_at(d, int(c)), int(v))
        return out

    def ovec_from_element(self, f: Element) -> tuple[int, dict[int, int]]:
        from .dps import grading

        deg, _ = grading(f)
        if deg == "inhomogeneous":
            raise ValueError("element is not Z-homogeneous")
        out = {}
        for mono, c in f.terms.items():
            out[self.mono_pos(mono)] = c
        return int(deg), out

    # ----- T_H expansion -----

    def th_terms(self, d: int, positions: np.ndarray):
        """W-coordinate terms of T_H on degree-d monomials.

        Yields (src index into positions, W position in degree d-2, coef).
        """
        t = self.degrees[d]
        par = t.parity[positions]
        for r in range(1, self.two_m + 1):
            dst, coef = self.pd_table(r, d)
            cd, dd = coef[positions], dst[positions]
            ok = dd >= 0
            if not np.any(ok):
                continue
            sign = np.ones(len(positions), dtype=np.int64)
            if r > self.m:
                sign = np.where(par & 1, self.p - 1, 1)
            wpos = dd * self.two_m + (self.params.prime_of(r) - 1)
            src = np.nonzero(ok)[0]
            yield src, wpos[ok], (cd * sign % self.p)[ok]

    def th_matrix(self, d: int, positions: np.ndarray) -> np.ndarray:
        """Dense (len(positions), n_w(d-2)) matrix of T_H on chosen monomials."""
        out = np.zeros((len(positions), self.n_w(d - 2)), dtype=np.int64)
        for src, wpos, coef in self.th_terms(d, positions):
            np.add.at(out, (src, wpos), coef)
        return np.mod(out, self.p)


_SPACES: dict[Params, Space] = {}


def get_space(params: Params) -> Space:
    sp = _SPACES.get(params)
    if sp is None:
        sp = Space(params)
        _SPACES[params] = sp
    return sp
