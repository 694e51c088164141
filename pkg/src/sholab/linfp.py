"""Deterministic exact linear algebra over F_p.

Matrices are dense numpy int64 arrays holding residues in [0, p); the sparse
row-dict form used at API boundaries is converted on entry.  The pivot rule is
fixed (first nonzero column, earliest row) so every echelon form, nullspace
and quotient basis is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .gfp import inv_mod

_F32_SAFE = 1 << 24
_F64_SAFE = 1 << 52


def as_residues(A, p: int) -> np.ndarray:
    M = np.asarray(A, dtype=np.int64)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return np.mod(M, p)


def modmul(A: np.ndarray, B: np.ndarray, p: int) -> np.ndarray:
    """Exact A @ B mod p using floating point BLAS when safe."""
    inner = A.shape[-1]
    bound = (p - 1) * (p - 1) * max(inner, 1)
    if bound < _F32_SAFE:
        C = np.matmul(A.astype(np.float32), B.astype(np.float32))
    elif bound < _F64_SAFE:
        C = np.matmul(A.astype(np.float64), B.astype(np.float64))
    else:
        return np.mod(np.matmul(A, B), p)
    return np.mod(C.astype(np.int64), p)


def rref(A, p: int) -> tuple[np.ndarray, list[int], int]:
    """Reduced row echelon form: (R, pivot columns, rank)."""
    R = as_residues(A, p).copy()
    nrows, ncols = R.shape
    piv: list[int] = []
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        nz = np.nonzero(R[r:, c])[0]
        if nz.size == 0:
            continue
        k = r + int(nz[0])
        if k != r:
            R[[r, k]] = R[[k, r]]
        R[r] = R[r] * inv_mod(int(R[r, c]), p) % p
        hits = np.nonzero(R[:, c])[0]
        hits = hits[hits != r]
        if hits.size:
            R[hits] = (R[hits] - np.outer(R[hits, c], R[r])) % p
        piv.append(c)
        r += 1
    return R[:r], piv, r


def rank(A, p: int) -> int:
    return rref(A, p)[2]


def row_basis(A, p: int) -> np.ndarray:
    return rref(A, p)[0]


def nullspace(A, p: int) -> np.ndarray:
    """Row basis of {x : A x^T = 0}, canonical (one row per free column)."""
    M = as_residues(A, p)
    R, piv, r = rref(M, p)
    ncols = M.shape[1]
    free = [c for c in range(ncols) if c not in set(piv)]
    N = np.zeros((len(free), ncols), dtype=np.int64)
    for k, c in enumerate(free):
        N[k, c] = 1
        for i, pc in enumerate(piv):
            N[k, pc] = (-R[i, c]) % p
    return N


def solve(A, b, p: int) -> Optional[np.ndarray]:
    """One solution x of A x = b, or None when the system is inconsistent."""
    M = as_residues(A, p)
    rhs = np.mod(np.asarray(b, dtype=np.int64).reshape(-1), p)
    if rhs.shape[0] != M.shape[0]:
        raise ValueError("dimension mismatch between matrix and right-hand side")
    aug = np.concatenate([M, rhs.reshape(-1, 1)], axis=1)
    R, piv, r = rref(aug, p)
    ncols = M.shape[1]
    if ncols in piv:
        return None
    x = np.zeros(ncols, dtype=np.int64)
    for i, c in enumerate(piv):
        x[c] = R[i, ncols]
    return x


def reduce_against(v: np.ndarray, R: np.ndarray, piv: Sequence[int], p: int) -> tuple[np.ndarray, np.ndarray]:
    """(residual, coords) of v against a reduced basis R with pivot columns piv."""
    v = np.mod(np.asarray(v, dtype=np.int64).reshape(-1), p)
    if len(piv) == 0:
        return v, np.zeros(0, dtype=np.int64)
    coords = v[list(piv)]
    residual = (v - coords @ R) % p
    return residual, coords


def member(v, A, p: int) -> Optional[np.ndarray]:
    """Coordinates of v over the canonical row basis of A, or None."""
    R, piv, _ = rref(A, p)
    residual, coords = reduce_against(np.asarray(v), R, piv, p)
    if np.any(residual):
        return None
    return coords


def quotient_basis(V, U, p: int) -> np.ndarray:
    """Rows of V representing a basis of rowspace(V)/rowspace(U)."""
    RV, pivV, rV = rref(V, p)
    RU, pivU, rU = rref(U, p)
    for row in RU:
        residual, _ = reduce_against(row, RV, pivV, p)
        if np.any(residual):
            raise ValueError("U is not contained in V")
    reps = []
    R, piv = RU.copy(), list(pivU)
    for row in RV:
        residual, _ = reduce_against(row, R, piv, p)
        if not np.any(residual):
            continue
        reps.append(residual % p)
        R, piv, _ = rref(np.concatenate([R, residual.reshape(1, -1)]), p)
    out = np.array(reps, dtype=np.int64) if reps else np.zeros((0, RV.shape[1]), dtype=np.int64)
    assert out.shape[0] == rV - rU
    return out


def intersect_rowspaces(A, B, p: int) -> np.ndarray:
    """Canonical row basis of rowspace(A) & rowspace(B)."""
    A = as_residues(A, p)
    B = as_residues(B, p)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((0, A.shape[1]), dtype=np.int64)
    M = np.concatenate([A, B], axis=0)
    left = nullspace(M.T, p)
    if left.shape[0] == 0:
        return np.zeros((0, A.shape[1]), dtype=np.int64)
    inter = modmul(left[:, : A.shape[0]], A, p)
    return row_basis(inter, p)


class Eliminator:
    """Incremental reduced row basis; batches reduce via one matmul each."""

    def __init__(self, ncols: int, p: int):
        self.ncols = ncols
        self.p = p
        self.R = np.zeros((0, ncols), dtype=np.int64)
        self.piv: list[int] = []

    @property
    def rank(self) -> int:
        return len(self.piv)

    def add_rows(self, rows: np.ndarray) -> int:
        """Fold a row batch into the basis; returns the rank increase."""
        p = self.p
        rows = as_residues(rows, p)
        if rows.size == 0:
            return 0
        if self.piv:
            rows = (rows - modmul(rows[:, self.piv], self.R, p)) % p
        rows = rows[np.any(rows, axis=1)]
        if rows.shape[0] == 0:
            return 0
        added = 0
        Rnew, pivnew, rnew = rref(rows, p)
        for i in range(rnew):
            row = Rnew[i]
            if self.piv:
                row = (row - row[self.piv] @ self.R) % p
            if not np.any(row):
                continue
            c = int(np.nonzero(row)[0][0])
            row = row * inv_mod(int(row[c]), p) % p
            if self.R.shape[0]:
                hits = np.nonzero(self.R[:, c])[0]
                if hits.size:
                    self.R[hits] = (self.R[hits] - np.outer(self.R[hits, c], row)) % p
            self.R = np.concatenate([self.R, row.reshape(1, -1)])
            self.piv.append(c)
            added += 1
        if added:
            order = np.argsort(np.array(self.piv, dtype=np.int64), kind="stable")
            self.R = self.R[order]
            self.piv = [self.piv[int(k)] for k in order]
        return added

    def nullspace(self) -> np.ndarray:
        if not self.piv:
            return np.eye(self.ncols, dtype=np.int64)
        return nullspace(self.R, self.p)


@dataclass
class SparseMatrix:
    """Row-sparse matrix at the API boundary: {column: residue} per row."""

    rows: list[dict[int, int]]
    ncols: int

    def to_dense(self, p: int) -> np.ndarray:
        M = np.zeros((len(self.rows), self.ncols), dtype=np.int64)
        for i, row in enumerate(self.rows):
            for c, v in row.items():
                M[i, c] = v % p
        return M

    @classmethod
    def from_dense(cls, M: np.ndarray) -> "SparseMatrix":
        rows = []
        for r in np.asarray(M, dtype=np.int64):
            rows.append({int(c): int(v) for c, v in enumerate(r) if v})
        return cls(rows, int(M.shape[1]) if M.ndim == 2 else 0)

    def rref(self, p: int) -> tuple["SparseMatrix", list[int], int]:
        R, piv, r = rref(self.to_dense(p), p)
        return SparseMatrix.from_dense(R), piv, r


def rows_from_dicts(entries: Iterable[dict[int, int]], ncols: int, p: int) -> np.ndarray:
    rows = list(entries)
    M = np.zeros((len(rows), ncols), dtype=np.int64)
    for i, row in enumerate(rows):
        for c, v in row.items():
            M[i, c] = v % p
    return M
