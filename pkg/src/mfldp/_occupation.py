"""Occupation-number bases with vectorized ranking.

Tuples ``(n_0, ..., n_{S-1})`` with fixed total are ordered descending
lexicographically, so ``(N, 0, ..., 0)`` comes first.  A truncated Fock space
over ``M`` modes is the same basis over ``M + 1`` modes with a leading slack
mode ``n_cut - sum(n)``, which makes its ordering graded by total occupation.
"""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import comb


def basis_dimension(n_modes: int, n_particles: int) -> int:
    return int(comb(n_modes + n_particles - 1, n_particles, exact=True))


def _enumerate(n_modes, n_particles):
    if n_modes == 1:
        yield (n_particles,)
        return
    for first in range(n_particles, -1, -1):
        for rest in _enumerate(n_modes - 1, n_particles - first):
            yield (first,) + rest


@lru_cache(maxsize=32)
def _binomial_table(size):
    table = np.zeros((size + 1, size + 1), dtype=np.int64)
    for a in range(size + 1):
        for b in range(a + 1):
            table[a, b] = comb(a, b, exact=True)
    return table


class OccupationBasis:
    """All occupation tuples over ``n_modes`` modes summing to ``n_particles``."""

    def __init__(self, n_modes: int, n_particles: int):
        if n_modes < 1 or n_particles < 0:
            raise ValueError("need n_modes >= 1 and n_particles >= 0")
        self.n_modes = n_modes
        self.n_particles = n_particles
        occ = np.array(list(_enumerate(n_modes, n_particles)), dtype=np.int64)
        self.occ = occ.reshape(-1, n_modes)
        self.dim = self.occ.shape[0]
        self._binom = _binomial_table(n_modes + n_particles)

    def rank(self, occ: np.ndarray) -> np.ndarray:
        """Basis index of each row of ``occ`` (rows must sum to ``n_particles``)."""
        occ = np.atleast_2d(occ)
        before = np.cumsum(occ, axis=1) - occ
        rem = self.n_particles - before
        m = rem - occ - 1
        sites_after = self.n_modes - 1 - np.arange(self.n_modes)
        valid = m >= 0
        top = np.where(valid, sites_after + m, 0)
        bottom = np.where(valid, m, 0)
        return np.where(valid, self._binom[top, bottom], 0).sum(axis=1)

    def shift(self, src: int, dst: int):
        """Rows where one particle can move ``src -> dst``, and their images.

        Returns ``(cols, rows, n_src, n_dst)`` with occupations taken before
        the move, so the bosonic amplitude is ``sqrt(n_src * (n_dst + 1))``.
        """
        cols = np.nonzero(self.occ[:, src] > 0)[0]
        moved = self.occ[cols].copy()
        n_src = moved[:, src].copy()
        n_dst = moved[:, dst].copy()
        moved[:, src] -= 1
        moved[:, dst] += 1
        return cols, self.rank(moved), n_src, n_dst

    def hopping(self, p: int, q: int) -> sp.csr_matrix:
        """Sparse matrix of ``a*_p a_q`` on this basis."""
        if p == q:
            return sp.diags(self.occ[:, p].astype(float), format="csr")
        cols, rows, n_q, n_p = self.shift(q, p)
        vals = np.sqrt(n_q * (n_p + 1.0))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def one_body_triplets(self, A: np.ndarray, dtype=complex):
        """COO triplets of ``sum_pq A_pq a*_p a_q``; amplitudes computed in ``dtype``."""
        A = np.asarray(A)
        real = np.finfo(dtype).dtype.type
        rows, cols, vals = [], [], []
        for p in range(self.n_modes):
            for q in range(self.n_modes):
                if A[p, q] == 0:
                    continue
                if p == q:
                    idx = np.arange(self.dim)
                    rows.append(idx)
                    cols.append(idx)
                    vals.append(np.asarray(A[p, p], dtype) * self.occ[:, p].astype(real))
                    continue
                c, r, n_q, n_p = self.shift(q, p)
                rows.append(r)
                cols.append(c)
                vals.append(np.asarray(A[p, q], dtype) * np.sqrt((n_q * (n_p + 1)).astype(real)))
        if not rows:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0, dtype)
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals).astype(dtype)

    def one_body(self, A: np.ndarray) -> sp.csr_matrix:
        """Second quantization ``sum_pq A_pq a*_p a_q`` as a sparse matrix."""
        rows, cols, vals = self.one_body_triplets(A)
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def one_body_dense(self, A: np.ndarray, dtype=complex) -> np.ndarray:
        rows, cols, vals = self.one_body_triplets(A, dtype)
        out = np.zeros((self.dim, self.dim), dtype)
        np.add.at(out, (rows, cols), vals)
        return out
