"""Monomial index tables for dense truncated multivariate polynomials.

A table fixes the canonical coefficient layout shared by every jet with the
same (n_vars, order): monomials are stored by total degree, and inside each
degree by ascending colexicographic order (compare exponent tuples reversed).
All product/derivative index arrays are precomputed once per (n_vars, order)
and cached for the lifetime of the process.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np


def monomials_of_degree(degree: int, n_vars: int) -> list[tuple[int, ...]]:
    """All exponent tuples with the given total degree, colex ascending."""
    out: list[tuple[int, ...]] = []

    def rec(rem, pos, cur):
        if pos == n_vars - 1:
            out.append(tuple(cur + [rem]))
            return
        for e in range(rem + 1):
            rec(rem - e, pos + 1, cur + [e])

    rec(degree, 0, [])
    out.sort(key=lambda j: tuple(reversed(j)))
    return out


class MonomialTable:
    """Index bookkeeping for jets with a fixed variable count and order."""

    def __init__(self, n_vars: int, order: int):
        if n_vars < 1:
            raise ValueError(f"n_vars must be >= 1, got {n_vars}")
        if order < 0:
            raise ValueError(f"order must be >= 0, got {order}")
        self.n_vars = n_vars
        self.order = order

        exps: list[tuple[int, ...]] = []
        deg_start = [0]
        for d in range(order + 1):
            exps.extend(monomials_of_degree(d, n_vars))
            deg_start.append(len(exps))
        self.exps = np.array(exps, dtype=np.int64)
        self.deg_start = np.array(deg_start, dtype=np.int64)
        self.n_terms = len(exps)
        assert self.n_terms == comb(n_vars + order, n_vars)
        self.index_of = {tuple(e): i for i, e in enumerate(exps)}
        self.degree = np.repeat(
            np.arange(order + 1), np.diff(self.deg_start)
        ).astype(np.int64)

        self._pair_table = None
        self._shift_tables = None
        self._diff_tables = None

    # ------------------------------------------------------------------
    # product pair table
    # ------------------------------------------------------------------
    def _build_pairs(self):
        """Pairs (i1, i2) -> target with deg(i1)+deg(i2) <= order.

        Sorted by (output degree, degree of the first factor), so a prefix
        implements truncation and each (d_out, d_a) block is contiguous.
        """
        n = self.order
        pi, pj, pk = [], [], []
        lo = np.zeros((n + 1, n + 1), dtype=np.int64)
        hi = np.zeros((n + 1, n + 1), dtype=np.int64)
        deg_prefix = np.zeros(n + 2, dtype=np.int64)
        count = 0
        for dout in range(n + 1):
            for da in range(dout + 1):
                db = dout - da
                lo[dout, da] = count
                for ia in range(self.deg_start[da], self.deg_start[da + 1]):
                    ea = self.exps[ia]
                    for ib in range(self.deg_start[db], self.deg_start[db + 1]):
                        tgt = self.index_of[tuple(ea + self.exps[ib])]
                        pi.append(ia)
                        pj.append(ib)
                        pk.append(tgt)
                        count += 1
                hi[dout, da] = count
            deg_prefix[dout + 1] = count
        self._pair_table = (
            np.array(pi, dtype=np.int32),
            np.array(pj, dtype=np.int32),
            np.array(pk, dtype=np.int32),
            lo,
            hi,
            deg_prefix,
        )

    @property
    def pairs(self):
        """(pi, pj, pk, chunk_lo, chunk_hi, deg_prefix) product index arrays."""
        if self._pair_table is None:
            self._build_pairs()
        return self._pair_table

    # ------------------------------------------------------------------
    # multiply-by-linear shift tables
    # ------------------------------------------------------------------
    @property
    def shifts(self):
        """Per variable v: (src, dst) with exps[dst] = exps[src] + e_v."""
        if self._shift_tables is None:
            tabs = []
            top = self.deg_start[self.order]  # terms of degree < order
            for v in range(self.n_vars):
                src = np.arange(top, dtype=np.int64)
                dst = np.empty(top, dtype=np.int64)
                for t in range(top):
                    e = self.exps[t].copy()
                    e[v] += 1
                    dst[t] = self.index_of[tuple(e)]
                tabs.append((src, dst))
            self._shift_tables = tabs
        return self._shift_tables

    # ------------------------------------------------------------------
    # derivative tables
    # ------------------------------------------------------------------
    @property
    def diffs(self):
        """Per variable v: (src, dst, factor) realizing d/ds_v."""
        if self._diff_tables is None:
            tabs = []
            for v in range(self.n_vars):
                src, dst, fac = [], [], []
                for t in range(self.n_terms):
                    ev = self.exps[t][v]
                    if ev >= 1:
                        e = self.exps[t].copy()
                        e[v] -= 1
                        src.append(t)
                        dst.append(self.index_of[tuple(e)])
                        fac.append(float(ev))
                tabs.append(
                    (
                        np.array(src, dtype=np.int64),
                        np.array(dst, dtype=np.int64),
                        np.array(fac, dtype=np.float64),
                    )
                )
            self._diff_tables = tabs
        return self._diff_tables

    def slice_of_degree(self, d: int) -> slice:
        return slice(int(self.deg_start[d]), int(self.deg_start[d + 1]))

    def __repr__(self):
        return f"MonomialTable(n_vars={self.n_vars}, order={self.order})"


@lru_cache(maxsize=None)
def table(n_vars: int, order: int) -> MonomialTable:
    return MonomialTable(n_vars, order)
