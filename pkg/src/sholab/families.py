"""Graded subalgebras of W(m,m;t): construction, closure, and structure.

A GradedSubalgebra stores one reduced row basis per (Z-degree, parity,
torus-weight) block.  Families inside HO (SHO and its derived series, HO
itself) use potential coordinates: a degree-d element is a vector over the
monomials of O-degree d+2, standing for its image under the odd Hamiltonian
operator.  Families that leave HO (HObar, Sprime, Sbar, their meet) use field
coordinates over (monomial, direction) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from . import linfp, witt
from .dps import Element, Monomial
from .linfp import Eliminator, reduce_against
from .params import Params
from .space import Space, get_space

POTENTIAL = "potential"
FIELD = "field"

BlockKey = tuple[int, int, int]  # (degree, parity, packed weight)


@dataclass
class Block:
    cols: np.ndarray  # positions inside the ambient degree block
    mat: np.ndarray  # reduced row basis, shape (k, len(cols))
    piv: list[int]

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


@dataclass
class GenVec:
    """A weight-homogeneous generator: coordinates over one block's columns."""

    key: BlockKey
    vec: np.ndarray
    name: str = ""


class GradedSubalgebra:
    def __init__(self, space: Space, name: str, rep: str):
        self.space = space
        self.params = space.params
        self.name = name
        self.rep = rep
        self.blocks: dict[BlockKey, Block] = {}
        self.generators: list[GenVec] = []
        self._field_blocks: dict[BlockKey, tuple[np.ndarray, np.ndarray, list[int]]] = {}
        self._span = None  # ClosureSpan with provenance, set by find_generators
        self._span_gens: list[GenVec] = []

    # ----- bookkeeping -----

    def ambient_cols(self, key: BlockKey) -> np.ndarray:
        """Column positions of the ambient block holding this family block."""
        d, par, wk = key
        if self.rep == POTENTIAL:
            tab = self.space.degrees[d + 2] if 0 <= d + 2 <= self.params.xi else None
            if tab is None:
                return np.zeros(0, dtype=np.int64)
            return tab.blocks.get(((par + 1) & 1, wk), np.zeros(0, dtype=np.int64))
        return self.space.w_blocks(d).get((par, wk), np.zeros(0, dtype=np.int64))

    def add_block(self, key: BlockKey, rows: np.ndarray) -> None:
        cols = self.ambient_cols(key)
        R, piv, r = linfp.rref(rows, self.params.p)
        if r:
            self.blocks[key] = Block(cols, R[:r], piv)

    def sorted_keys(self) -> list[BlockKey]:
        return sorted(self.blocks)

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks.values())

    def dims_by_degree(self) -> dict[int, tuple[int, int]]:
        out: dict[int, list[int]] = {}
        for (d, par, _), blk in self.blocks.items():
            pair = out.setdefault(d, [0, 0])
            pair[par] += blk.dim
        return {d: (v[0], v[1]) for d, v in sorted(out.items())}

    def degrees(self) -> list[int]:
        return sorted({d for d, _, _ in self.blocks})

    def dim_at(self, d: int, parity: Optional[int] = None) -> int:
        return sum(
            b.dim
            for (dd, par, _), b in self.blocks.items()
            if dd == d and (parity is None or par == parity)
        )

    def block_dim(self, key: BlockKey) -> int:
        blk = self.blocks.get(key)
        return blk.dim if blk else 0

    # ----- coordinates -----

    def reduce_in_block(self, key: BlockKey, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(residual, coords) of a block-column vector against this family."""
        blk = self.blocks.get(key)
        if blk is None:
            return np.mod(vec, self.params.p), np.zeros(0, dtype=np.int64)
        return reduce_against(vec, blk.mat, blk.piv, self.params.p)

    def field_block(self, key: BlockKey):
        """W-coordinate mirror of one block: (cols, rref, pivots, transform).

        transform maps rref coordinates back to this family's basis rows, so
        membership coordinates agree with the stored (potential) basis.
        """
        hit = self._field_blocks.get(key)
        if hit is not None:
            return hit
        d, par, wk = key
        sp = self.space
        blk = self.blocks.get(key)
        wcols = sp.w_blocks(d).get((par, wk), np.zeros(0, dtype=np.int64))
        if blk is None:
            out = (wcols, np.zeros((0, len(wcols)), dtype=np.int64), [], np.zeros((0, 0), dtype=np.int64))
        elif self.rep == FIELD:
            k = blk.mat.shape[0]
            out = (blk.cols, blk.mat, blk.piv, np.eye(k, dtype=np.int64))
        else:
            th = sp.th_matrix(d + 2, blk.cols)
            rows = linfp.modmul(blk.mat, th, self.params.p)
            local = rows[:, wcols]
            assert np.count_nonzero(rows) == np.count_nonzero(local)
            k = local.shape[0]
            aug = np.concatenate([local, np.eye(k, dtype=np.int64)], axis=1)
            R, piv, r = linfp.rref(aug, self.params.p)
            if r != k or (piv and piv[-1] >= local.shape[1]):
                raise AssertionError("field mirror lost rank; T_H not injective here?")
            out = (wcols, R[:, : local.shape[1]], piv, R[:, local.shape[1] :])
        self._field_blocks[key] = out
        return out

    def membership_field(self, D: witt.VectorField) -> Optional[dict[BlockKey, np.ndarray]]:
        """Blockwise coordinates of a homogeneous field, or None if outside."""
        if D.is_zero():
            return {}
        sp = self.space
        d, wdict = sp.wvec_from_field(D)
        par_arr, wkey_arr, _ = sp.w_tables(d)
        split: dict[BlockKey, dict[int, int]] = {}
        for pos, c in wdict.items():
            key = (d, int(par_arr[pos]), int(wkey_arr[pos]))
            split.setdefault(key, {})[pos] = c
        coords: dict[BlockKey, np.ndarray] = {}
        for key, sub in split.items():
            wcols, mat, piv, trans = self.field_block(key)
            vec = np.zeros(len(wcols), dtype=np.int64)
            lookup = {int(c): i for i, c in enumerate(wcols)}
            for pos, c in sub.items():
                if pos not in lookup:
                    return None
                vec[lookup[pos]] = c % self.params.p
            residual, co = reduce_against(vec, mat, piv, self.params.p)
            if np.any(residual):
                return None
            coords[key] = np.mod(co @ trans, self.params.p)
        return coords

    def membership_potvec(self, key: BlockKey, vec: np.ndarray) -> Optional[np.ndarray]:
        residual, co = self.reduce_in_block(key, vec)
        return None if np.any(residual) else co

    def basis_fields(self, key: BlockKey) -> list[witt.VectorField]:
        """The basis rows of one block as explicit vector fields."""
        blk = self.blocks.get(key)
        if blk is None:
            return []
        sp = self.space
        d = key[0]
        out = []
        if self.rep == POTENTIAL:
            for row in blk.mat:
                pot = sp.element_from_ovec(d + 2, blk.cols, row)
                out.append(witt.t_h(pot))
        else:
            for row in blk.mat:
                out.append(sp.field_from_wvec(d, blk.cols, row))
        return out

    def basis_potentials(self, key: BlockKey) -> list[Element]:
        blk = self.blocks.get(key)
        if blk is None or self.rep != POTENTIAL:
            return []
        return [self.space.element_from_ovec(key[0] + 2, blk.cols, row) for row in blk.mat]

    def iter_basis_fields(self) -> Iterable[tuple[BlockKey, int, witt.VectorField]]:
        for key in self.sorted_keys():
            for i, f in enumerate(self.basis_fields(key)):
                yield key, i, f


# ----- potential-side bracket helpers -----


def poisson_block_tensor(space: Space, keyA: BlockKey, colsA: np.ndarray, matA: np.ndarray,
                         keyB: BlockKey, colsB: np.ndarray, matB: np.ndarray):
    """Bracket tensor (kA, kB, |target cols|) plus the target block key.

    Inputs and outputs are potential coordinates; target cols are the full
    ambient O-block of degree dA+dB+2.
    """
    p = space.p
    dA, parA, wkA = keyA
    dB, parB, wkB = keyB
    dT = dA + dB
    parT = (parA + parB) & 1
    wvA = _unpack_weight(space, wkA)
    wvB = _unpack_weight(space, wkB)
    wkT = int(space.pack_weight(np.mod(wvA + wvB, p).reshape(1, -1))[0])
    keyT = (dT, parT, wkT)
    if not (0 <= dT + 2 <= space.params.xi):
        return keyT, np.zeros(0, dtype=np.int64), np.zeros((matA.shape[0], matB.shape[0], 0), dtype=np.int64)
    colsT = space.degrees[dT + 2].blocks.get(((parT + 1) & 1, wkT), np.zeros(0, dtype=np.int64))
    grid = space.poisson_grid(dA + 2, colsA, dB + 2, colsB, colsT)
    tens = np.einsum("ai,bj,ijt->abt", matA, matB, grid, optimize=True)
    return keyT, colsT, np.mod(tens, p)


def _unpack_weight(space: Space, wkey: int) -> np.ndarray:
    p, m = space.p, space.m
    out = np.zeros(m - 1, dtype=np.int64)
    for j in range(m - 2, -1, -1):
        out[j] = wkey % p
        wkey //= p
    return out


def gen_bracket_rows(space: Space, gen: GenVec, key: BlockKey, colsB: np.ndarray,
                     matB: np.ndarray):
    """Rows {gen, basis of B-block} as vectors over the target ambient block."""
    keyT, colsT, tens = poisson_block_tensor(
        space, gen.key, _gen_cols(space, gen), gen.vec.reshape(1, -1), key, colsB, matB
    )
    return keyT, colsT, tens[0]


def _gen_cols(space: Space, gen: GenVec) -> np.ndarray:
    d, par, wk = gen.key
    tab = space.degrees[d + 2]
    return tab.blocks.get(((par + 1) & 1, wk), np.zeros(0, dtype=np.int64))


class GenAction:
    """Cached scatter tables for {gen, .} acting on whole O-degrees."""

    def __init__(self, space: Space, gen: GenVec):
        self.space = space
        self.gen = gen
        self.p = space.p
        cols = _gen_cols(space, gen)
        sel = np.nonzero(gen.vec)[0]
        self.support = cols[sel]
        self.coefs = gen.vec[sel]
        self.pot_degree = gen.key[0] + 2
        self._tables: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def table(self, b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, coef) triples of {gen, mono} for monomials of O-degree b."""
        hit = self._tables.get(b)
        if hit is not None:
            return hit
        sp = self.space
        nb = sp.n_monos(b)
        srcs, dsts, cos = [], [], []
        if nb and 0 <= self.pot_degree + b - 2 <= sp.params.xi and len(self.support):
            na = len(self.support)
            grid_a = np.repeat(self.support, nb)
            grid_b = np.tile(np.arange(nb, dtype=np.int64), na)
            gco = np.repeat(self.coefs, nb)
            for coef, dst in sp.poisson_pairs(self.pot_degree, grid_a, b, grid_b):
                good = np.nonzero(coef)[0]
                if good.size:
                    srcs.append(grid_b[good])
                    dsts.append(dst[good])
                    cos.append(coef[good] * gco[good] % self.p)
        if srcs:
            out = (np.concatenate(srcs), np.concatenate(dsts), np.concatenate(cos))
        else:
            out = (np.zeros(0, dtype=np.int64),) * 3
        self._tables[b] = out
        return out

    def apply_rows(self, b: int, rows: np.ndarray) -> np.ndarray:
        """{gen, rows}: (k, n_monos(b)) -> (k, n_monos(b + potdeg - 2))."""
        sp = self.space
        dt = self.pot_degree + b - 2
        ndst = sp.n_monos(dt) if 0 <= dt <= sp.params.xi else 0
        out = np.zeros((rows.shape[0], ndst), dtype=np.int64)
        if ndst == 0:
            return out
        src, dst, coef = self.table(b)
        if src.size:
            contrib = rows[:, src] * coef[None, :]
            np.add.at(out.T, dst, contrib.T)
        return np.mod(out, self.p)


def globalize(space: Space, key: BlockKey, rows: np.ndarray, cols: Optional[np.ndarray] = None) -> np.ndarray:
    """Block-local rows -> full O-degree coordinate rows."""
    d = key[0]
    if cols is None:
        tab = space.degrees[d + 2]
        cols = tab.blocks.get(((key[1] + 1) & 1, key[2]), np.zeros(0, dtype=np.int64))
    out = np.zeros((rows.shape[0], space.n_monos(d + 2)), dtype=np.int64)
    if len(cols):
        out[:, cols] = rows
    return out


@dataclass
class SpanNode:
    """Provenance of one span row: a seed, or a bracket [gen, earlier node]."""

    key: BlockKey
    raw: np.ndarray  # block-local vector before reduction
    gen: int  # index into the generator list (-1 for seeds)
    src: int  # node id of the bracketed row (-1 for seeds)
    seed: int  # generator index when this node is a seed, else -1


class ClosureSpan:
    """Growing blockwise span, closed under brackets with a generator list.

    Left-normed words [g_k, [..., [g_2, g_1]]] span the generated subalgebra,
    so closing a worklist of new rows against the generators alone reaches the
    whole of it.  Every row that enlarges the span is recorded as a node with
    its provenance; the derivation solvers replay these nodes.
    """

    def __init__(self, space: Space):
        self.space = space
        self.p = space.p
        self.elims: dict[BlockKey, Eliminator] = {}
        self.queue: list[tuple[BlockKey, np.ndarray, int]] = []
        self.nodes: list[SpanNode] = []
        self.block_nodes: dict[BlockKey, list[int]] = {}

    def cols(self, key: BlockKey) -> np.ndarray:
        d, par, wk = key
        if not (0 <= d + 2 <= self.space.params.xi):
            return np.zeros(0, dtype=np.int64)
        return self.space.degrees[d + 2].blocks.get(((par + 1) & 1, wk), np.zeros(0, dtype=np.int64))

    def add(self, key: BlockKey, vec: np.ndarray, gen: int = -1, src: int = -1,
            seed: int = -1) -> bool:
        """Fold one block-local vector in; queue it if it grows the span."""
        if key[0] < -1:  # potential degree 0 is ker(T_H)
            return False
        vec = np.mod(vec, self.p)
        if not np.any(vec):
            return False
        elim = self.elims.get(key)
        if elim is None:
            elim = Eliminator(len(vec), self.p)
            self.elims[key] = elim
        if elim.piv:
            residual = (vec - vec[elim.piv] @ elim.R) % self.p
        else:
            residual = vec
        if not np.any(residual):
            return False
        elim.add_rows(residual.reshape(1, -1))
        node_id = len(self.nodes)
        self.nodes.append(SpanNode(key, vec.copy(), gen, src, seed))
        self.block_nodes.setdefault(key, []).append(node_id)
        self.queue.append((key, vec.copy(), node_id))
        return True

    def add_global(self, pot_degree: int, vec: np.ndarray, gen: int = -1, src: int = -1) -> bool:
        """Split a full-degree potential vector into its (parity, weight) blocks."""
        d = pot_degree
        tab = self.space.degrees[d]
        hit = np.nonzero(vec)[0]
        if hit.size == 0:
            return False
        added = False
        combos = tab.parity[hit] * (self.p ** (self.space.m - 1) + 1) + tab.wkey[hit]
        for val in np.unique(combos):
            pos0 = hit[combos == val][0]
            ppar, wk = int(tab.parity[pos0]), int(tab.wkey[pos0])
            cols = tab.blocks[(ppar, wk)]
            key = (d - 2, (ppar + 1) & 1, wk)
            added |= self.add(key, vec[cols], gen, src)
        return added

    def close(self, gens: list[GenVec], actions: Optional[list[GenAction]] = None) -> None:
        if actions is None:
            actions = [GenAction(self.space, g) for g in gens]
        while self.queue:
            key, vec, node_id = self.queue.pop()
            b = key[0] + 2
            row = globalize(self.space, key, vec.reshape(1, -1), self.cols(key))
            for gi, act in enumerate(actions):
                out = act.apply_rows(b, row)
                if out.shape[1] and np.any(out):
                    self.add_global(b + act.pot_degree - 2, out[0], gen=gi, src=node_id)

    def to_algebra(self, name: str) -> GradedSubalgebra:
        out = GradedSubalgebra(self.space, name, POTENTIAL)
        for key in sorted(self.elims):
            elim = self.elims[key]
            if elim.rank:
                out.add_block(key, elim.R)
        return out

    def block_dim(self, key: BlockKey) -> int:
        elim = self.elims.get(key)
        return elim.rank if elim else 0


# ----- family builders -----


def _divth_matrix(space: Space, a: int, positions: np.ndarray) -> np.ndarray:
    """div(T_H(mono)) for degree-a monomials, as vectors over O_{a-2}."""
    p = space.p
    out = np.zeros((len(positions), space.n_monos(a - 2)), dtype=np.int64)
    if a - 2 < 0:
        return out
    tab = space.degrees[a]
    par_a = tab.parity[positions]
    for r in range(1, space.two_m + 1):
        rp = space.params.prime_of(r)
        dst1, coef1 = space.pd_table(r, a)
        d1, c1 = dst1[positions], coef1[positions]
        ok = d1 >= 0
        if not np.any(ok):
            continue
        sign1 = np.ones(len(positions), dtype=np.int64)
        if r > space.m:
            sign1 = np.where(par_a & 1, p - 1, 1)
        dst2, coef2 = space.pd_table(rp, a - 1)
        d2 = np.where(ok, dst2[np.where(ok, d1, 0)], -1)
        c2 = coef2[np.where(ok, d1, 0)]
        par_mid = (par_a + (1 if r > space.m else 0)) & 1
        sign2 = np.ones(len(positions), dtype=np.int64)
        if rp > space.m:
            sign2 = np.where(par_mid & 1, p - 1, 1)
        coef = c1 * sign1 % p * c2 % p * sign2 % p
        good = np.nonzero(ok & (d2 >= 0) & (coef != 0))[0]
        if good.size:
            np.add.at(out, (good, d2[good]), coef[good])
    return np.mod(out, p)


def _build_ho(space: Space) -> GradedSubalgebra:
    out = GradedSubalgebra(space, "HO", POTENTIAL)
    for a in range(1, space.params.xi + 1):
        tab = space.degrees[a]
        for (ppar, wk), cols in tab.blocks.items():
            key = (a - 2, (ppar + 1) & 1, wk)
            out.add_block(key, np.eye(len(cols), dtype=np.int64))
    return out


def _build_sho(space: Space) -> GradedSubalgebra:
    """S' meet HO, solved blockwise: potentials with divergence-free field."""
    out = GradedSubalgebra(space, "SHO", POTENTIAL)
    for a in range(1, space.params.xi + 1):
        tab = space.degrees[a]
        div_all = _divth_matrix(space, a, np.arange(tab.n, dtype=np.int64))
        for (ppar, wk), cols in tab.blocks.items():
            key = (a - 2, (ppar + 1) & 1, wk)
            sub = div_all[cols]
            null = linfp.nullspace(sub.T, space.p)
            if null.shape[0]:
                out.add_block(key, null)
    return out


def _w_partial_coeff_matrix(space: Space, d: int, wcols: np.ndarray, i: int, target_dir: int) -> np.ndarray:
    """partial_i of the partial_{target_dir}-coefficient, over the W-block cols."""
    p = space.p
    n_out = space.n_monos(d)
    out = np.zeros((len(wcols), n_out), dtype=np.int64)
    if n_out == 0 or len(wcols) == 0:
        return out
    mono_pos = wcols // space.two_m
    dirs = wcols % space.two_m + 1
    sel = np.nonzero(dirs == target_dir)[0]
    if sel.size == 0:
        return out
    dst, coef = space.pd_table(i, d + 1)
    dd, cc = dst[mono_pos[sel]], coef[mono_pos[sel]]
    good = np.nonzero(dd >= 0)[0]
    if good.size:
        np.add.at(out, (sel[good], dd[good]), cc[good])
    return np.mod(out, p)


def _hobar_rows(space: Space, d: int, par: int, wcols: np.ndarray) -> np.ndarray:
    """Stacked symmetry conditions cutting HObar out of one W-block."""
    p = space.p
    two_m = space.two_m
    rows = []
    cache: dict[tuple[int, int], np.ndarray] = {}

    def pc(i: int, tdir: int) -> np.ndarray:
        hit = cache.get((i, tdir))
        if hit is None:
            hit = _w_partial_coeff_matrix(space, d, wcols, i, tdir)
            cache[(i, tdir)] = hit
        return hit

    for i in range(1, two_m + 1):
        for j in range(i, two_m + 1):
            mi, mj = space.params.mu(i), space.params.mu(j)
            exp = mi * mj + (mi + mj) * (par + 1)
            sigma = p - 1 if exp & 1 else 1
            lhs = pc(i, space.params.prime_of(j))
            rhs = pc(j, space.params.prime_of(i))
            diff = np.mod(lhs - sigma * rhs, p)
            if np.any(diff):
                rows.append(diff)
    if not rows:
        return np.zeros((0, len(wcols)), dtype=np.int64)
    return np.concatenate([r.T for r in rows], axis=0)


def _div_matrix(space: Space, d: int, wcols: np.ndarray) -> np.ndarray:
    """Divergence of the W-block basis, as vectors over O_d."""
    p = space.p
    out = np.zeros((len(wcols), space.n_monos(d)), dtype=np.int64)
    if len(wcols) == 0 or space.n_monos(d) == 0:
        return out
    mono_pos = wcols // space.two_m
    dirs = wcols % space.two_m + 1
    tab = space.degrees[d + 1]
    for r in range(1, space.two_m + 1):
        sel = np.nonzero(dirs == r)[0]
        if sel.size == 0:
            continue
        dst, coef = space.pd_table(r, d + 1)
        dd, cc = dst[mono_pos[sel]], coef[mono_pos[sel]]
        if r > space.m:
            sign = np.where(tab.parity[mono_pos[sel]] & 1, p - 1, 1)
            cc = cc * sign % p
        good = np.nonzero(dd >= 0)[0]
        if good.size:
            np.add.at(out, (sel[good], dd[good]), cc[good])
    return np.mod(out, p)


def _build_field_family(space: Space, name: str) -> GradedSubalgebra:
    """HObar, Sprime, Sbar, HObarSbar by blockwise linear conditions."""
    out = GradedSubalgebra(space, name, FIELD)
    for d in range(-1, space.params.xi):
        for (par, wk), wcols in space.w_blocks(d).items():
            eqs = []
            if name in ("HObar", "HObarSbar"):
                eqs.append(_hobar_rows(space, d, par, wcols))
            if name in ("Sprime", "Sbar", "HObarSbar"):
                div = _div_matrix(space, d, wcols).T
                if name != "Sprime" and d == 0:
                    div = np.zeros((0, len(wcols)), dtype=np.int64)
                eqs.append(div)
            stacked = np.concatenate(eqs, axis=0) if eqs else np.zeros((0, len(wcols)), dtype=np.int64)
            null = linfp.nullspace(stacked, space.p) if stacked.shape[0] else np.eye(len(wcols), dtype=np.int64)
            if null.shape[0]:
                out.add_block((d, par, wk), null)
    return out


FAMILY_NAMES = ("HO", "HObar", "Sprime", "Sbar", "HObarSbar", "SHO", "SHO1", "SHO2")


def build_family(params: Params, name: str, *, _cache: dict = {}) -> GradedSubalgebra:
    key = (params, name)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    space = get_space(params)
    if name == "HO":
        out = _build_ho(space)
    elif name == "SHO":
        out = _build_sho(space)
        out.generators = find_generators(out)
    elif name in ("HObar", "Sprime", "Sbar", "HObarSbar"):
        out = _build_field_family(space, name)
    elif name == "SHO1":
        out = derived_subalgebra(build_family(params, "SHO"), "SHO1")
    elif name == "SHO2":
        out = derived_subalgebra(build_family(params, "SHO1"), "SHO2")
    else:
        raise ValueError(f"unknown family {name!r}; choose from {FAMILY_NAMES}")
    _cache[key] = out
    return out


# ----- generators, closure, derived -----


def degree_gens(X: GradedSubalgebra, degrees: Iterable[int]) -> list[GenVec]:
    out = []
    wanted = set(degrees)
    for key in X.sorted_keys():
        if key[0] not in wanted:
            continue
        blk = X.blocks[key]
        for i, row in enumerate(blk.mat):
            out.append(GenVec(key, row.copy(), f"{X.name}[{key[0]}]({i})"))
    return out


def grower_gens(X: GradedSubalgebra) -> list[GenVec]:
    """Potentials x^((p^k+1) eps_i) for 1 <= k < t_i; needed when some t_i > 1."""
    sp = X.space
    params = X.params
    out = []
    for i in range(1, params.m + 1):
        for k in range(1, params.t[i - 1]):
            e = params.p**k + 1
            alpha = tuple(e if j == i - 1 else 0 for j in range(params.m))
            mono = Monomial(alpha, 0)
            pos = sp.mono_pos(mono)
            d = mono.degree - 2
            tab = sp.degrees[mono.degree]
            wk = int(tab.wkey[pos])
            key = (d, 1, wk)
            cols = sp.degrees[mono.degree].blocks[(0, wk)]
            vec = np.zeros(len(cols), dtype=np.int64)
            vec[int(np.searchsorted(cols, pos))] = 1
            co = X.membership_potvec(key, vec)
            if co is None:
                continue
            out.append(GenVec(key, vec, f"grow(i={i},k={k})"))
    return out


def a1_gens(X: GradedSubalgebra) -> list[GenVec]:
    """Single-monomial potentials with I = I~ = empty, when they lie in X."""
    sp = X.space
    out = []
    for mono in a1_monomials(X.params):
        pos = sp.mono_pos(mono)
        d = mono.degree
        tab = sp.degrees[d]
        ppar, wk = int(tab.parity[pos]), int(tab.wkey[pos])
        cols = tab.blocks[(ppar, wk)]
        vec = np.zeros(len(cols), dtype=np.int64)
        vec[int(np.searchsorted(cols, pos))] = 1
        key = (d - 2, (ppar + 1) & 1, wk)
        if X.membership_potvec(key, vec) is None:
            continue
        out.append(GenVec(key, vec, f"A1[u={mono.umask:0{X.params.m}b}]"))
    return out


def _span_extend(span: ClosureSpan, gens: list[GenVec], actions: list[GenAction],
                 new: list[GenVec]) -> None:
    """Adjoin generators: bracket them against the current span, then close."""
    sp = span.space
    for g in new:
        act = GenAction(sp, g)
        gi = len(gens)
        gens.append(g)
        actions.append(act)
        for node_id, node in enumerate(list(span.nodes)):
            row = globalize(sp, node.key, node.raw.reshape(1, -1), span.cols(node.key))
            out = act.apply_rows(node.key[0] + 2, row)
            if out.shape[1] and np.any(out):
                span.add_global(node.key[0] + act.pot_degree, out[0], gen=gi, src=node_id)
        span.add(g.key, g.vec, seed=gi)
    span.close(gens, actions)


def find_generators(X: GradedSubalgebra, extra: Optional[list[GenVec]] = None) -> list[GenVec]:
    """A verified generating set: degrees -1, 1, known special vectors, greedy fill."""
    gens: list[GenVec] = []
    actions: list[GenAction] = []
    span = ClosureSpan(X.space)
    _span_extend(span, gens, actions,
                 degree_gens(X, (-1, 1)) + a1_gens(X) + grower_gens(X) + list(extra or []))
    for _ in range(256):
        missing = []
        for key in X.sorted_keys():
            gap = X.blocks[key].dim - span.block_dim(key)
            if gap > 0:
                missing.append((key, gap))
        if not missing:
            X._span = span
            X._span_gens = gens
            return gens
        key = min(missing)[0]
        elim = span.elims.get(key)
        U = elim.R if elim is not None and elim.rank else np.zeros((0, len(X.blocks[key].cols)), dtype=np.int64)
        reps = linfp.quotient_basis(X.blocks[key].mat, U, X.params.p)
        _span_extend(span, gens, actions,
                     [GenVec(key, row, f"fill[{key}]({i})") for i, row in enumerate(reps)])
    raise RuntimeError("generator search did not converge")


def generation_check(X: GradedSubalgebra, gens: list[GenVec]) -> bool:
    """True iff the bracket closure of the given vectors equals X."""
    span = ClosureSpan(X.space)
    for g in gens:
        if X.membership_potvec(g.key, g.vec) is None:
            raise ValueError(f"generator {g.name} is not in {X.name}")
        span.add(g.key, g.vec)
    span.close(gens)
    for key in X.sorted_keys():
        if span.block_dim(key) != X.blocks[key].dim:
            return False
    for key, elim in span.elims.items():
        if elim.rank != X.block_dim(key):
            return False
    return True


def closure_of(X: GradedSubalgebra, gens: list[GenVec], name: str) -> GradedSubalgebra:
    span = ClosureSpan(X.space)
    for g in gens:
        span.add(g.key, g.vec)
    span.close(gens)
    return span.to_algebra(name)


def derived_subalgebra(X: GradedSubalgebra, name: Optional[str] = None) -> GradedSubalgebra:
    """[X, X]: brackets of generators against all of X, then ideal closure."""
    if X.rep != POTENTIAL:
        raise ValueError("derived subalgebra implemented for potential-type families")
    gens = X.generators or find_generators(X)
    span = ClosureSpan(X.space)
    actions = [GenAction(X.space, g) for g in gens]
    for act in actions:
        for key in X.sorted_keys():
            blk = X.blocks[key]
            rows = globalize(X.space, key, blk.mat, blk.cols)
            out = act.apply_rows(key[0] + 2, rows)
            if out.shape[1]:
                for row in out:
                    span.add_global(key[0] + act.pot_degree, row)
    span.close(gens, actions)
    out = span.to_algebra(name or f"[{X.name},{X.name}]")
    out.generators = find_generators(out)
    return out


def membership(D: witt.VectorField, X: GradedSubalgebra):
    """Exact blockwise membership of a field; (bool, coords-or-None)."""
    if D.is_zero():
        return True, {}
    co = X.membership_field(D)
    return (co is not None), co


def center(X: GradedSubalgebra) -> list[tuple[BlockKey, np.ndarray]]:
    """Basis of {x in X : [x, X] = 0}, found against a generating set."""
    gens = X.generators or find_generators(X)
    out = []
    for key in X.sorted_keys():
        blk = X.blocks[key]
        pieces = []
        for g in gens:
            keyT, colsT, tens = poisson_block_tensor(
                X.space, key, blk.cols, blk.mat, g.key, _gen_cols(X.space, g), g.vec.reshape(1, -1)
            )
            if tens.shape[2]:
                pieces.append(tens[:, 0, :])
        if not pieces:
            out.extend((key, row.copy()) for row in blk.mat)
            continue
        M = np.concatenate(pieces, axis=1)
        null = linfp.nullspace(M.T, X.params.p)
        for co in null:
            out.append((key, np.mod(co @ blk.mat, X.params.p)))
    return out


@dataclass
class TorusElement:
    i: int
    j: int
    field: witt.VectorField


def torus_basis(params: Params) -> list[TorusElement]:
    return [TorusElement(1, j, witt.toral_field(params, 1, j)) for j in range(2, params.m + 1)]


def weight_decompose(X: GradedSubalgebra, torus: Optional[list[TorusElement]] = None):
    """Map packed weight -> {degree: dims}; the blocks are already eigenspaces."""
    out: dict[int, dict[int, int]] = {}
    for (d, par, wk), blk in X.blocks.items():
        out.setdefault(wk, {}).setdefault(d, 0)
        out[wk][d] += blk.dim
    return out


# ----- the paper's spanning construction for SHO -----


def a1_monomials(params: Params) -> list[Monomial]:
    """Monomials with both index sets empty: alpha = pi off u', one per u."""
    out = []
    for umask in range(1 << params.m):
        alpha = tuple(0 if umask >> (i - 1) & 1 else params.pi[i - 1] for i in range(1, params.m + 1))
        out.append(Monomial(alpha, umask))
    return out


def spanning_sho(params: Params) -> list[tuple[Element, str]]:
    """Leader-corrected potentials spanning SHO, tagged by class."""
    from .dps import enumerate_basis

    space = get_space(params)
    out: list[tuple[Element, str]] = []
    for d in range(1, space.params.xi + 1):  # degree 0 is ker(T_H)
        for mono in enumerate_basis(params, d):
            I, It, cls = witt.index_sets(params, mono)
            if cls == witt.D_ONE:
                out.append((Element.from_mono(params, mono), "A1"))
            elif cls == witt.D_TWO:
                out.append((Element.from_mono(params, mono), "A2"))
            elif cls == witt.D_STAR:
                for q in It:
                    pot = Element.from_mono(params, mono)
                    for i in I:
                        pot = pot - witt.gamma(params, i, q, mono)
                    out.append((pot, f"G~(q={q})"))
    return out


def spanning_span(params: Params) -> GradedSubalgebra:
    """The blockwise row space of the spanning set, for comparison with SHO."""
    space = get_space(params)
    rows: dict[BlockKey, list[np.ndarray]] = {}
    for pot, _tag in spanning_sho(params):
        if pot.is_zero():
            continue
        a, vec = space.ovec_from_element(pot)
        pos0 = next(iter(vec))
        tab = space.degrees[a]
        ppar, wk = int(tab.parity[pos0]), int(tab.wkey[pos0])
        cols = tab.blocks[(ppar, wk)]
        dense = np.zeros(len(cols), dtype=np.int64)
        for pos, c in vec.items():
            assert int(tab.parity[pos]) == ppar and int(tab.wkey[pos]) == wk
            dense[int(np.searchsorted(cols, pos))] = c
        rows.setdefault((a - 2, (ppar + 1) & 1, wk), []).append(dense)
    out = GradedSubalgebra(space, "SHO(spanning)", POTENTIAL)
    for key, rs in rows.items():
        out.add_block(key, np.array(rs, dtype=np.int64))
    return out


def same_blocks(X: GradedSubalgebra, Y: GradedSubalgebra) -> bool:
    keys = set(X.blocks) | set(Y.blocks)
    for key in keys:
        a, b = X.blocks.get(key), Y.blocks.get(key)
        if a is None or b is None:
            if (a.dim if a else 0) != (b.dim if b else 0):
                return False
            continue
        if a.dim != b.dim or not np.array_equal(a.mat, b.mat):
            return False
    return True
