"""Dense truncated multivariate Taylor polynomials ("jets") and their algebra.

A jet holds the coefficients of a polynomial in ``n_vars`` variables of total
degree <= ``order`` over one scalar backend (binary64 real/complex or
extended-precision mpmath).  Coefficients live in a flat array laid out by
the shared :class:`~halostab._tables.MonomialTable`: degree-major, colex
ascending inside each degree.  Every operation truncates back to ``order``;
no coefficient of higher degree is ever produced or kept.

Values are immutable by convention: operations return new jets and never
mutate their inputs.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from ._tables import MonomialTable, table
from .scalars import C128, F64, ScalarKind, kind, promote

__all__ = [
    "Jet",
    "JetVector",
    "variable",
    "compose",
    "invert_near_identity",
    "norm_at_radius",
    "jet_to_text",
    "jet_from_text",
]


def _conv(out, a, b, pi, pj, pk, lo, hi, use_kernel):
    if lo == hi:
        return
    if use_kernel:
        _kernels.conv_range(out, a, b, pi, pj, pk, lo, hi)
    else:
        np.add.at(out, pk[lo:hi], a[pi[lo:hi]] * b[pj[lo:hi]])


class Jet:
    __slots__ = ("table", "coeffs", "kind")

    def __init__(self, table: MonomialTable, coeffs: np.ndarray, kind: ScalarKind):
        self.table = table
        self.coeffs = coeffs
        self.kind = kind

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------
    @classmethod
    def zero(cls, tab: MonomialTable, knd: ScalarKind = F64) -> "Jet":
        return cls(tab, knd.zeros(tab.n_terms), knd)

    @classmethod
    def constant(cls, value, tab: MonomialTable, knd: ScalarKind = F64) -> "Jet":
        out = cls.zero(tab, knd)
        out.coeffs[0] = knd.coerce(value)
        return out

    def copy(self) -> "Jet":
        return Jet(self.table, self.coeffs.copy(), self.kind)

    # ------------------------------------------------------------------
    # structure
    # ------------------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return self.table.n_vars

    @property
    def order(self) -> int:
        return self.table.order

    @property
    def constant_term(self):
        return self.coeffs[0]

    def degree_slice(self, d: int) -> np.ndarray:
        return self.coeffs[self.table.slice_of_degree(d)]

    def truncated(self, new_order: int) -> "Jet":
        """Copy holding only degrees <= new_order (on the smaller table)."""
        if new_order > self.order:
            raise ValueError("cannot extend a jet by truncation")
        tab = table(self.n_vars, new_order)
        return Jet(tab, self.coeffs[: tab.n_terms].copy(), self.kind)

    def conj(self) -> "Jet":
        if not self.kind.is_complex:
            return self.copy()
        return Jet(self.table, np.conj(self.coeffs), self.kind)

    def real_part(self) -> "Jet":
        knd = self.kind.to_real()
        if self.kind.dtype is object:
            co = np.array([c.real for c in self.coeffs], dtype=object)
        else:
            co = np.real(self.coeffs).copy()
        return Jet(self.table, co, knd)

    def imag_part(self) -> "Jet":
        knd = self.kind.to_real()
        if self.kind.dtype is object:
            co = np.array([c.imag for c in self.coeffs], dtype=object)
        else:
            co = np.imag(self.coeffs).copy()
        return Jet(self.table, co, knd)

    def to_kind(self, knd: ScalarKind) -> "Jet":
        if knd is self.kind:
            return self
        out = Jet.zero(self.table, knd)
        for i, c in enumerate(self.coeffs):
            out.coeffs[i] = knd.coerce(c)
        return out

    def _pair_with(self, other):
        if isinstance(other, Jet):
            if other.table is not self.table:
                raise ValueError(
                    f"incompatible jets: {self.table} vs {other.table}"
                )
            knd = promote(self.kind, other.kind)
            return self.to_kind(knd), other.to_kind(knd)
        knd = self.kind
        if isinstance(other, (complex, np.complexfloating)) and not knd.is_complex:
            knd = knd.to_complex()
        return self.to_kind(knd), Jet.constant(other, self.table, knd)

    # ------------------------------------------------------------------
    # ring operations
    # ------------------------------------------------------------------
    def __add__(self, other):
        a, b = self._pair_with(other)
        return Jet(a.table, a.coeffs + b.coeffs, a.kind)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = self._pair_with(other)
        return Jet(a.table, a.coeffs - b.coeffs, a.kind)

    def __rsub__(self, other):
        a, b = self._pair_with(other)
        return Jet(a.table, b.coeffs - a.coeffs, a.kind)

    def __neg__(self):
        return Jet(self.table, -self.coeffs, self.kind)

    def scale(self, s) -> "Jet":
        knd = self.kind
        if isinstance(s, (complex, np.complexfloating)) and not knd.is_complex:
            knd = knd.to_complex()
        me = self.to_kind(knd)
        return Jet(me.table, me.coeffs * knd.coerce(s), knd)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.scale(other)
        a, b = self._pair_with(other)
        out = Jet.zero(a.table, a.kind)
        pi, pj, pk, _, _, deg_prefix = a.table.pairs
        use_kernel = a.kind.dtype is not object
        _conv(out.coeffs, a.coeffs, b.coeffs, pi, pj, pk, 0,
              int(deg_prefix[a.order + 1]), use_kernel)
        return out

    def __rmul__(self, other):
        return self.scale(other)

    def mul_truncated(self, other: "Jet", max_degree: int) -> "Jet":
        """Product keeping only degrees <= max_degree (still on this table)."""
        a, b = self._pair_with(other)
        out = Jet.zero(a.table, a.kind)
        pi, pj, pk, _, _, deg_prefix = a.table.pairs
        hi = int(deg_prefix[min(max_degree, a.order) + 1])
        _conv(out.coeffs, a.coeffs, b.coeffs, pi, pj, pk, 0, hi,
              a.kind.dtype is not object)
        return out

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self.scale(1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal().scale(other)

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)):
            if exponent >= 0:
                result = Jet.constant(1.0, self.table, self.kind)
                base = self
                e = int(exponent)
                while e:
                    if e & 1:
                        result = result * base
                    base = base * base if e > 1 else base
                    e >>= 1
                return result
            return self.reciprocal() ** (-exponent)
        return self.power(float(exponent))

    # ------------------------------------------------------------------
    # intrinsics: graded recurrences, one degree at a time
    # ------------------------------------------------------------------
    def _conv_slice(self, out, a, b, d, p):
        """out += (degree-p slice of a) * (degree-(d-p) slice of b)."""
        pi, pj, pk, lo, hi, _ = self.table.pairs
        _conv(out, a, b, pi, pj, pk, int(lo[d, p]), int(hi[d, p]),
              self.kind.dtype is not object)

    def reciprocal(self) -> "Jet":
        a0 = self.constant_term
        if self.kind.abs(a0) == 0:
            raise ZeroDivisionError("reciprocal of a jet with zero constant term")
        out = Jet.zero(self.table, self.kind)
        inv0 = self.kind.coerce(1.0) / a0
        out.coeffs[0] = inv0
        for d in range(1, self.order + 1):
            sl = self.table.slice_of_degree(d)
            acc = self.kind.zeros(self.table.n_terms)
            for p in range(1, d + 1):
                self._conv_slice(acc, self.coeffs, out.coeffs, d, p)
            out.coeffs[sl] = -acc[sl] * inv0
        return out

    def power(self, alpha: float) -> "Jet":
        """Jet of a**alpha; real jets need a positive constant term."""
        a0 = self.constant_term
        if not self.kind.is_complex and not a0 > 0:
            raise ValueError(f"power({alpha}) needs a positive constant term, got {a0}")
        if self.kind.is_complex and self.kind.abs(a0) == 0:
            raise ValueError("power of a jet with zero constant term")
        out = Jet.zero(self.table, self.kind)
        out.coeffs[0] = self.kind.power(a0, alpha)
        inv0 = self.kind.coerce(1.0) / a0
        for d in range(1, self.order + 1):
            sl = self.table.slice_of_degree(d)
            acc = self.kind.zeros(self.table.n_terms)
            for p in range(1, d + 1):
                w = ((alpha + 1.0) * p - d) / d
                tmp = self.kind.zeros(self.table.n_terms)
                self._conv_slice(tmp, self.coeffs, out.coeffs, d, p)
                acc[sl] += tmp[sl] * self.kind.coerce(w)
            out.coeffs[sl] = acc[sl] * inv0
        return out

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    def exp(self) -> "Jet":
        out = Jet.zero(self.table, self.kind)
        out.coeffs[0] = self.kind.exp(self.constant_term)
        for d in range(1, self.order + 1):
            sl = self.table.slice_of_degree(d)
            acc = self.kind.zeros(self.table.n_terms)
            for p in range(1, d + 1):
                tmp = self.kind.zeros(self.table.n_terms)
                self._conv_slice(tmp, self.coeffs, out.coeffs, d, p)
                acc[sl] += tmp[sl] * self.kind.coerce(p / d)
            out.coeffs[sl] = acc[sl]
        return out

    def log(self) -> "Jet":
        a0 = self.constant_term
        if not self.kind.is_complex and not a0 > 0:
            raise ValueError(f"log needs a positive constant term, got {a0}")
        if self.kind.is_complex and self.kind.abs(a0) == 0:
            raise ValueError("log of a jet with zero constant term")
        out = Jet.zero(self.table, self.kind)
        out.coeffs[0] = self.kind.log(a0)
        inv0 = self.kind.coerce(1.0) / a0
        for d in range(1, self.order + 1):
            sl = self.table.slice_of_degree(d)
            acc = self.kind.zeros(self.table.n_terms)
            for p in range(1, d):
                tmp = self.kind.zeros(self.table.n_terms)
                self._conv_slice(tmp, out.coeffs, self.coeffs, d, p)
                acc[sl] += tmp[sl] * self.kind.coerce(p / d)
            out.coeffs[sl] = (self.coeffs[sl] - acc[sl]) * inv0
        return out

    def _sin_cos(self):
        s = Jet.zero(self.table, self.kind)
        c = Jet.zero(self.table, self.kind)
        s.coeffs[0] = self.kind.sin(self.constant_term)
        c.coeffs[0] = self.kind.cos(self.constant_term)
        for d in range(1, self.order + 1):
            sl = self.table.slice_of_degree(d)
            acc_s = self.kind.zeros(self.table.n_terms)
            acc_c = self.kind.zeros(self.table.n_terms)
            for p in range(1, d + 1):
                w = self.kind.coerce(p / d)
                tmp = self.kind.zeros(self.table.n_terms)
                self._conv_slice(tmp, self.coeffs, c.coeffs, d, p)
                acc_s[sl] += tmp[sl] * w
                tmp = self.kind.zeros(self.table.n_terms)
                self._conv_slice(tmp, self.coeffs, s.coeffs, d, p)
                acc_c[sl] += tmp[sl] * w
            s.coeffs[sl] = acc_s[sl]
            c.coeffs[sl] = -acc_c[sl]
        return s, c

    def sin(self) -> "Jet":
        return self._sin_cos()[0]

    def cos(self) -> "Jet":
        return self._sin_cos()[1]

    # ------------------------------------------------------------------
    # calculus / evaluation / norms
    # ------------------------------------------------------------------
    def derivative(self, v: int) -> "Jet":
        src, dst, fac = self.table.diffs[v]
        out = Jet.zero(self.table, self.kind)
        if self.kind.dtype is object:
            for s, t, f in zip(src, dst, fac):
                out.coeffs[t] = self.coeffs[s] * self.kind.coerce(f)
        else:
            out.coeffs[dst] = self.coeffs[src] * fac
        return out

    def mul_linear(self, lin: Sequence) -> "Jet":
        """Product with the linear form sum_v lin[v] * s_v (fast path)."""
        out = Jet.zero(self.table, self.kind)
        for v in range(self.n_vars):
            lv = lin[v]
            if self.kind.abs(self.kind.coerce(lv)) == 0:
                continue
            src, dst = self.table.shifts[v]
            if self.kind.dtype is object:
                for s, t in zip(src, dst):
                    out.coeffs[t] = out.coeffs[t] + self.coeffs[s] * self.kind.coerce(lv)
            else:
                np.add.at(out.coeffs, dst, self.coeffs[src] * lv)
        return out

    def eval(self, point: Sequence):
        """Evaluate the polynomial at a point (plain scalar arithmetic)."""
        tab = self.table
        if self.kind.dtype is object or any(
            isinstance(p, object) and not isinstance(p, (int, float, complex, np.number))
            for p in point
        ):
            total = self.coeffs[0] * 1
            for t in range(1, tab.n_terms):
                m = self.coeffs[t]
                for v in range(tab.n_vars):
                    for _ in range(int(tab.exps[t, v])):
                        m = m * point[v]
                total = total + m
            return total
        pt = np.asarray(point, dtype=np.complex128 if self.kind.is_complex
                        or np.iscomplexobj(point) else np.float64)
        vals = np.ones(tab.n_terms, dtype=np.result_type(pt, self.coeffs))
        for v in range(tab.n_vars):
            pw = pt[v] ** np.arange(tab.order + 1)
            vals *= pw[tab.exps[:, v]]
        return (self.coeffs * vals).sum()

    def norm_at_radius(self, rho: float) -> float:
        """Sum of |c_j| * rho^degree(j) over all stored coefficients."""
        if rho <= 0:
            raise ValueError(f"radius must be positive, got {rho}")
        mags = np.array([float(self.kind.abs(c)) for c in self.coeffs]) \
            if self.kind.dtype is object else np.abs(self.coeffs)
        return float(mags @ (float(rho) ** self.table.degree.astype(np.float64)))

    def degree_norm(self, d: int, rho: float = 1.0) -> float:
        """1-norm of the homogeneous degree-d slice at the given radius."""
        sl = self.degree_slice(d)
        mags = np.array([float(self.kind.abs(c)) for c in sl]) \
            if self.kind.dtype is object else np.abs(sl)
        return float(mags.sum() * float(rho) ** d)

    def max_abs(self) -> float:
        if self.kind.dtype is object:
            return max(float(self.kind.abs(c)) for c in self.coeffs)
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def __repr__(self):
        return (f"Jet(n_vars={self.n_vars}, order={self.order}, "
                f"kind={self.kind.name}, const={self.constant_term})")


def variable(i: int, n_vars: int, order: int, knd: ScalarKind = F64) -> Jet:
    """The coordinate jet s_i: coefficient 1 on the unit multi-index e_i."""
    if not 0 <= i < n_vars:
        raise IndexError(f"variable index {i} out of range for {n_vars} variables")
    if order < 1:
        raise ValueError("order must be >= 1 for a variable jet")
    tab = table(n_vars, order)
    out = Jet.zero(tab, knd)
    e = [0] * n_vars
    e[i] = 1
    out.coeffs[tab.index_of[tuple(e)]] = knd.coerce(1.0)
    return out


class JetVector:
    """Fixed-length sequence of structurally compatible jets."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Jet]):
        comps = list(components)
        if not comps:
            raise ValueError("JetVector needs at least one component")
        tab = comps[0].table
        for c in comps[1:]:
            if c.table is not tab:
                raise ValueError("JetVector components must share a table")
        self.components = comps

    @classmethod
    def identity(cls, n_vars: int, order: int, knd: ScalarKind = F64) -> "JetVector":
        return cls([variable(i, n_vars, order, knd) for i in range(n_vars)])

    @classmethod
    def zero(cls, n_comps: int, tab: MonomialTable, knd: ScalarKind = F64) -> "JetVector":
        return cls([Jet.zero(tab, knd) for _ in range(n_comps)])

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    @property
    def table(self) -> MonomialTable:
        return self.components[0].table

    @property
    def kind(self) -> ScalarKind:
        return self.components[0].kind

    @property
    def n_vars(self) -> int:
        return self.table.n_vars

    @property
    def order(self) -> int:
        return self.table.order

    def copy(self) -> "JetVector":
        return JetVector([c.copy() for c in self.components])

    def to_kind(self, knd: ScalarKind) -> "JetVector":
        return JetVector([c.to_kind(knd) for c in self.components])

    def truncated(self, new_order: int) -> "JetVector":
        return JetVector([c.truncated(new_order) for c in self.components])

    def conj(self) -> "JetVector":
        return JetVector([c.conj() for c in self.components])

    def __add__(self, other: "JetVector") -> "JetVector":
        return JetVector([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "JetVector") -> "JetVector":
        return JetVector([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "JetVector":
        return JetVector([-a for a in self.components])

    def scale(self, s) -> "JetVector":
        return JetVector([a.scale(s) for a in self.components])

    def eval(self, point) -> np.ndarray:
        return np.array([c.eval(point) for c in self.components])

    def linear_matrix(self) -> np.ndarray:
        """(n_comps, n_vars) matrix of degree-1 coefficients."""
        tab = self.table
        sl = tab.slice_of_degree(1)
        # degree-1 monomials appear in colex order e_1..e_n
        order_cols = np.argsort(np.argmax(tab.exps[sl], axis=1))
        rows = []
        for c in self.components:
            rows.append(np.asarray(c.coeffs[sl])[order_cols])
        return np.array(rows)

    def constant_terms(self) -> np.ndarray:
        return np.array([c.constant_term for c in self.components])

    def max_constant(self) -> float:
        return max(float(self.kind.abs(c.constant_term)) for c in self.components)

    def norm_at_radius(self, rho: float) -> float:
        return max(c.norm_at_radius(rho) for c in self.components)

    def degree_norm(self, d: int, rho: float = 1.0) -> float:
        return max(c.degree_norm(d, rho) for c in self.components)

    def __repr__(self):
        return (f"JetVector(n_comps={len(self)}, n_vars={self.n_vars}, "
                f"order={self.order}, kind={self.kind.name})")


def _check_inner(outer: JetVector, inner: JetVector):
    if outer.n_vars != len(inner):
        raise ValueError(
            f"outer expects {outer.n_vars} arguments, inner supplies {len(inner)}"
        )
    scale = max(inner.norm_at_radius(1.0), 1.0)
    if inner.max_constant() > 1e3 * inner.kind.eps * scale:
        raise ValueError("inner map must send the origin to the origin")


def compose(outer: JetVector, inner: JetVector) -> JetVector:
    """Truncated polynomial composition outer(inner(s)).

    Monomials of the inner components are built incrementally degree by
    degree, each one from a lower-degree parent times one inner component,
    so the whole table costs one truncated product per monomial.
    """
    _check_inner(outer, inner)
    knd = promote(outer.kind, inner.kind)
    tab = inner.table
    otab = outer.table
    inner_c = [c.to_kind(knd) for c in inner.components]
    out = [Jet.zero(tab, knd) for _ in range(len(outer))]
    for ci, oc in enumerate(outer.components):
        out[ci].coeffs[0] = knd.coerce(oc.constant_term)

    prev: dict[tuple, Jet] = {tuple([0] * otab.n_vars): Jet.constant(1.0, tab, knd)}
    for d in range(1, otab.order + 1):
        cur: dict[tuple, Jet] = {}
        for t in range(int(otab.deg_start[d]), int(otab.deg_start[d + 1])):
            e = tuple(otab.exps[t])
            v = next(u for u in range(otab.n_vars) if e[u] > 0)
            parent = list(e)
            parent[v] -= 1
            mono = prev[tuple(parent)] * inner_c[v]
            cur[e] = mono
            for ci, oc in enumerate(outer.components):
                w = oc.coeffs[t]
                if knd.abs(knd.coerce(w)) != 0:
                    out[ci].coeffs += mono.coeffs * knd.coerce(w)
        prev = cur
    return JetVector(out)


def invert_near_identity(c: JetVector) -> JetVector:
    """Inverse jet of c = s - chi(s) with chi of degree >= 2.

    Fixed-point iteration d <- s + chi(d); each pass fixes at least one more
    degree, so order-many passes give the exact truncated inverse.
    """
    n = len(c)
    if c.n_vars != n:
        raise ValueError("can only invert a square map")
    lin = c.linear_matrix()
    if np.max(np.abs(np.asarray(lin, dtype=complex) - np.eye(n))) > 1e3 * c.kind.eps:
        raise ValueError("linear part must be the identity")
    ident = JetVector.identity(n, c.order, c.kind)
    chi = ident - c
    d = ident.copy()
    for _ in range(max(c.order - 1, 1)):
        d = ident + compose(chi, d)
    return d


def norm_at_radius(p, rho: float) -> float:
    """Polynomial 1-norm at a radius; max over components for vectors."""
    return p.norm_at_radius(rho)


# ----------------------------------------------------------------------
# text serialization: one line per monomial, exponents then value(s)
# ----------------------------------------------------------------------

def jet_to_text(j: Jet) -> str:
    lines = [f"jet {j.n_vars} {j.order} {j.kind.name}"]
    for t in range(j.table.n_terms):
        c = j.coeffs[t]
        exp_s = " ".join(str(int(e)) for e in j.table.exps[t])
        if j.kind.is_complex:
            cc = complex(c) if j.kind.dtype is not object else c
            lines.append(f"{exp_s}  {_fmt(cc.real, j.kind)} {_fmt(cc.imag, j.kind)}")
        else:
            lines.append(f"{exp_s}  {_fmt(c, j.kind)}")
    return "\n".join(lines) + "\n"


def _fmt(x, knd: ScalarKind) -> str:
    if knd.dtype is object:
        import mpmath
        with mpmath.workprec(knd.bits):
            return mpmath.nstr(mpmath.mpf(x), int(knd.bits * 0.302) + 2)
    return f"{float(x):.17g}"


def jet_from_text(text: str) -> Jet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "jet":
        raise ValueError("not a jet text block")
    n_vars, order, kname = int(head[1]), int(head[2]), head[3]
    knd = kind(kname)
    tab = table(n_vars, order)
    out = Jet.zero(tab, knd)
    for ln in lines[1:]:
        parts = ln.split()
        exps = tuple(int(p) for p in parts[:n_vars])
        vals = parts[n_vars:]
        idx = tab.index_of[exps]
        if knd.is_complex:
            if knd.dtype is object:
                import mpmath
                with mpmath.workprec(knd.bits):
                    out.coeffs[idx] = mpmath.mpc(mpmath.mpf(vals[0]), mpmath.mpf(vals[1]))
            else:
                out.coeffs[idx] = complex(float(vals[0]), float(vals[1]))
        else:
            if knd.dtype is object:
                import mpmath
                with mpmath.workprec(knd.bits):
                    out.coeffs[idx] = mpmath.mpf(vals[0])
            else:
                out.coeffs[idx] = float(vals[0])
    return out
