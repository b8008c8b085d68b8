"""Adaptive Taylor-method propagation of scalar and jet states through the
CR3BP flow.

Each accepted step exposes its full time-Taylor polynomial, which is what the
section machinery needs to localize crossings in time.  The binary64 path
runs a fused compiled recurrence; extended-precision states fall back to an
equivalent pure-python recurrence over object arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._tables import MonomialTable, table
from .cr3bp import DIST_FLOOR, State6, _mu
from .errors import SingularPrimaryError, TransversalityError
from .jets import Jet, JetVector
from .scalars import F64, ScalarKind

JET_CONTROL_RADIUS = 1e-3  # radius used to weigh jet tails in step control


@dataclass
class FlowSettings:
    abs_tol: float = 1e-14
    rel_tol: float = 1e-14
    max_order_time: int = 30
    max_step: float = 0.1
    direction: int = 1
    dist_floor: float = DIST_FLOOR

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")

    @property
    def time_order(self) -> int:
        tol = min(self.abs_tol, self.rel_tol)
        return min(self.max_order_time, max(4, math.ceil(-math.log(tol) / 2.0)))


@dataclass
class StepPolynomial:
    """Time-Taylor series of one accepted step, coefficients jet-valued."""

    t0: float
    h: float
    coeffs: np.ndarray           # (p+1, 6, n_terms)
    tab: MonomialTable
    kind: ScalarKind

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    def eval(self, tau) -> np.ndarray:
        """State coefficients at step-local time tau (Horner)."""
        acc = self.coeffs[-1].copy()
        for k in range(self.order - 1, -1, -1):
            acc = acc * tau + self.coeffs[k]
        return acc

    def eval_component_jet(self, comp: int, tau: Jet) -> Jet:
        """Component series evaluated at a jet-valued time."""
        acc = Jet(self.tab, self.coeffs[-1, comp].copy(), self.kind)
        for k in range(self.order - 1, -1, -1):
            acc = acc * tau + Jet(self.tab, self.coeffs[k, comp], self.kind)
        return acc

    def component_series(self, comp: int) -> list[Jet]:
        return [Jet(self.tab, self.coeffs[k, comp], self.kind)
                for k in range(self.order + 1)]

    def tail_ratios(self) -> list[float]:
        """Norm ratios of the last three coefficient layers (decay check)."""
        norms = []
        for k in (self.order - 2, self.order - 1, self.order):
            layer = max(
                Jet(self.tab, self.coeffs[k, c], self.kind).norm_at_radius(
                    JET_CONTROL_RADIUS) if self.tab.order > 0
                else abs(complex(self.coeffs[k, c, 0]))
                for c in range(6)
            )
            norms.append(layer)
        return [norms[i + 1] / norms[i] for i in range(2) if norms[i] > 0.0]


def _series_python(state0, mu, p, tab: MonomialTable, knd: ScalarKind,
                   dist_floor: float):
    """Object-array twin of the compiled flow recurrence."""
    nt = tab.n_terms
    pi, pj, pk, chunk_lo, chunk_hi, deg_prefix = tab.pairs
    n_pairs = int(deg_prefix[tab.order + 1])

    def conv(out, a, b):
        np.add.at(out, pk[:n_pairs], a[pi[:n_pairs]] * b[pj[:n_pairs]])

    S = np.empty((p + 1, 6, nt), dtype=object)
    S[:] = knd.coerce(0.0)
    S[0] = state0
    D1 = np.empty((p + 1, nt), dtype=object)
    D2 = np.empty((p + 1, nt), dtype=object)
    R1 = np.empty((p + 1, nt), dtype=object)
    R2 = np.empty((p + 1, nt), dtype=object)
    U1 = np.empty((p + 1, nt), dtype=object)
    U2 = np.empty((p + 1, nt), dtype=object)
    m = knd.coerce(mu)
    one = knd.coerce(1.0)
    alpha = -1.5
    for k in range(p + 1):
        D1[k] = S[k, 0].copy()
        D2[k] = S[k, 0].copy()
        if k == 0:
            D1[0, 0] = D1[0, 0] + m
            D2[0, 0] = D2[0, 0] + m - one
        acc1 = knd.zeros(nt)
        for i in range(k + 1):
            conv(acc1, S[i, 1], S[k - i, 1])
            conv(acc1, S[i, 2], S[k - i, 2])
        acc2 = acc1.copy()
        for i in range(k + 1):
            conv(acc1, D1[i], D1[k - i])
            conv(acc2, D2[i], D2[k - i])
        R1[k] = acc1
        R2[k] = acc2
        if k == 0:
            if float(R1[0][0]) < dist_floor**2 or float(R2[0][0]) < dist_floor**2:
                raise SingularPrimaryError("trajectory under the distance floor")
            U1[0] = Jet(tab, R1[0], knd).power(alpha).coeffs
            U2[0] = Jet(tab, R2[0], knd).power(alpha).coeffs
            R1i0 = Jet(tab, R1[0], knd).reciprocal().coeffs
            R2i0 = Jet(tab, R2[0], knd).reciprocal().coeffs
        else:
            for R, U, Ri in ((R1, U1, R1i0), (R2, U2, R2i0)):
                acc = knd.zeros(nt)
                for j in range(1, k + 1):
                    w = knd.coerce(((alpha + 1.0) * j - k) / k)
                    tmp = knd.zeros(nt)
                    conv(tmp, R[j], U[k - j])
                    acc += tmp * w
                out = knd.zeros(nt)
                conv(out, acc, Ri)
                U[k] = out
        if k == p:
            break
        gx = S[k, 0].copy()
        gy = S[k, 1].copy()
        gz = knd.zeros(nt)
        for i in range(k + 1):
            t1 = knd.zeros(nt)
            conv(t1, D1[i], U1[k - i])
            t2 = knd.zeros(nt)
            conv(t2, D2[i], U2[k - i])
            gx += -(one - m) * t1 - m * t2
            t1 = knd.zeros(nt)
            conv(t1, S[i, 1], U1[k - i])
            t2 = knd.zeros(nt)
            conv(t2, S[i, 1], U2[k - i])
            gy += -(one - m) * t1 - m * t2
            t1 = knd.zeros(nt)
            conv(t1, S[i, 2], U1[k - i])
            t2 = knd.zeros(nt)
            conv(t2, S[i, 2], U2[k - i])
            gz += -(one - m) * t1 - m * t2
        c = knd.coerce(1.0 / (k + 1.0))
        S[k + 1, 0] = S[k, 3] * c
        S[k + 1, 1] = S[k, 4] * c
        S[k + 1, 2] = S[k, 5] * c
        S[k + 1, 3] = (S[k, 4] * knd.coerce(2.0) + gx) * c
        S[k + 1, 4] = (S[k, 3] * knd.coerce(-2.0) + gy) * c
        S[k + 1, 5] = gz * c
    return S


class Flow:
    """Taylor propagator for one mass ratio over one jet table."""

    def __init__(self, mu, settings: FlowSettings | None = None,
                 tab: MonomialTable | None = None, knd: ScalarKind = F64):
        self.mu = _mu(mu)
        self.settings = settings or FlowSettings()
        self.tab = tab if tab is not None else table(1, 0)
        self.kind = knd

    # -- state packing ---------------------------------------------------
    def pack(self, state: State6) -> np.ndarray:
        rows = []
        for comp in state.as_tuple():
            if isinstance(comp, Jet):
                rows.append(np.asarray(comp.coeffs))
            else:
                row = self.kind.zeros(self.tab.n_terms)
                row[0] = self.kind.coerce(comp)
                rows.append(row)
        return np.array(rows)

    def unpack(self, arr: np.ndarray) -> State6:
        return State6(*[Jet(self.tab, arr[i].copy(), self.kind) for i in range(6)])

    # -- single step ------------------------------------------------------
    def series(self, packed: np.ndarray) -> np.ndarray:
        p = self.settings.time_order
        if self.kind.dtype is object:
            return _series_python(packed, self.mu, p, self.tab, self.kind,
                                  self.settings.dist_floor)
        pi, pj, pk, chunk_lo, chunk_hi, deg_prefix = self.tab.pairs
        out = np.empty((p + 1, 6, self.tab.n_terms), dtype=np.float64)
        status = _kernels.cr3bp_series(
            np.ascontiguousarray(packed, dtype=np.float64), self.mu, p,
            pi, pj, pk, chunk_lo, chunk_hi, self.tab.deg_start,
            self.tab.order, int(deg_prefix[self.tab.order + 1]),
            self.settings.dist_floor, out)
        if status == _kernels.ERR_SINGULAR:
            raise SingularPrimaryError("trajectory under the distance floor")
        return out

    def _layer_norm(self, coeffs, k: int) -> float:
        if self.tab.order == 0:
            return float(max(abs(complex(coeffs[k, c, 0])) for c in range(6)))
        return max(
            Jet(self.tab, coeffs[k, c], self.kind).norm_at_radius(
                JET_CONTROL_RADIUS)
            for c in range(6)
        )

    def _choose_step(self, coeffs, packed) -> float:
        p = coeffs.shape[0] - 1
        scale = self._layer_norm(coeffs, 0)
        tol = self.settings.abs_tol + self.settings.rel_tol * scale
        h = self.settings.max_step
        for k in (p - 1, p):
            nk = self._layer_norm(coeffs, k)
            if nk > 0.0:
                h = min(h, (tol / nk) ** (1.0 / k))
        return h

    def step(self, state: State6, t0: float = 0.0) -> tuple[StepPolynomial, State6]:
        """One accepted Taylor step from the given jet state."""
        packed = self.pack(state)
        coeffs = self.series(packed)
        h = self._choose_step(coeffs, packed)
        eps = self.kind.eps
        if h < 100.0 * eps * max(abs(t0), 1.0):
            raise SingularPrimaryError(
                f"step size underflow (h = {h}) near t = {t0}"
            )
        poly = StepPolynomial(t0, h, coeffs, self.tab, self.kind)
        tau = self.settings.direction * h
        nxt = poly.eval(self.kind.coerce(tau) if self.kind.dtype is object else tau)
        return poly, State6(*[Jet(self.tab, nxt[i], self.kind) for i in range(6)])

    def flow_to_time(self, state: State6, t_final: float) -> State6:
        """Propagate to an exact time via a final partial-step evaluation."""
        t = 0.0
        if t_final == 0.0:
            packed = self.pack(state)
            return self.unpack(packed)
        direction = 1 if t_final > 0 else -1
        old_dir = self.settings.direction
        self.settings.direction = direction
        try:
            cur = state
            while True:
                poly, nxt = self.step(cur, t)
                remaining = t_final - t
                if abs(remaining) <= poly.h:
                    out = poly.eval(self.kind.coerce(remaining)
                                    if self.kind.dtype is object else remaining)
                    return State6(*[Jet(self.tab, out[i], self.kind)
                                    for i in range(6)])
                t += direction * poly.h
                cur = nxt
        finally:
            self.settings.direction = old_dir


def propagate_to_section_scalar(u6: np.ndarray, mu, settings: FlowSettings,
                                t_max: float = 25.0) -> tuple[np.ndarray, float]:
    """Fast scalar-orbit propagation to the next y = 0, vy < 0 crossing."""
    out = np.empty(6, dtype=np.float64)
    status, t_cross, _ = _kernels.propagate_to_section(
        np.asarray(u6, dtype=np.float64), _mu(mu), settings.abs_tol,
        settings.rel_tol, settings.time_order, settings.max_step, t_max,
        settings.dist_floor, out)
    if status == _kernels.ERR_SINGULAR:
        raise SingularPrimaryError("trajectory under the distance floor")
    if status == _kernels.ERR_STEP_UNDERFLOW:
        raise SingularPrimaryError("step size underflow")
    if status != _kernels.OK:
        raise TransversalityError("no transversal section crossing found")
    return out, t_cross
