"""Return-map machinery on the apoapsis section {y = 0, vy < 0}.

The section is parameterized by u = (x, z, vx, vz); y is pinned by the
section and vy recovered from the Jacobi constant (negative branch), which
makes the return map 4-dimensional at fixed energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._tables import table
from .cr3bp import DIST_FLOOR, State6, _mu, jacobi_constant, vy_from_jacobi
from .errors import NewtonError, TransversalityError
from .jets import Jet, JetVector, variable
from .scalars import F64
from .taylorflow import Flow, FlowSettings, StepPolynomial, propagate_to_section_scalar

NEWTON_TOL = 1e-13          # ~1e3 * binary64 epsilon
MAX_NEWTON_ITERATIONS = 25
MAX_RETURN_TIME = 25.0


@dataclass
class FixedPoint:
    u0: np.ndarray            # (x, z, vx, vz) on the section
    period: float
    jacobi: float
    residual: float
    mu: float

    def full_state(self) -> np.ndarray:
        vy = vy_from_jacobi(self.u0[0], self.u0[1], self.u0[2], self.u0[3],
                            self.jacobi, self.mu)
        return np.array([self.u0[0], 0.0, self.u0[1], self.u0[2], vy, self.u0[3]])


@dataclass
class PoincareMapJet:
    G: JetVector              # 4 components, centered (zero constant term)
    T: Jet                    # crossing time; constant term = period
    center: FixedPoint
    map_residual: float       # |constant terms| before centering

    @property
    def order(self) -> int:
        return self.G.order

    def linear_part(self) -> np.ndarray:
        return np.real(self.G.linear_matrix()).astype(np.float64)

    def truncated(self, new_order: int) -> "PoincareMapJet":
        return PoincareMapJet(self.G.truncated(new_order),
                              self.T.truncated(new_order),
                              self.center, self.map_residual)


def lift_section_state(u, c0: float, mu, dist_floor: float = DIST_FLOOR) -> State6:
    """Embed section coordinates into the 6-D state (y = 0, vy < 0 branch)."""
    x, z, vx, vz = u
    vy = vy_from_jacobi(x, z, vx, vz, c0, mu, sign=-1, dist_floor=dist_floor)
    zero = x * 0.0
    return State6(x, zero, z, vx, vy, vz)


def _section_jets(u0: np.ndarray, order: int, knd=F64) -> list[Jet]:
    """u0 + s as four 4-variable jets."""
    out = []
    for i in range(4):
        j = variable(i, 4, order, knd)
        j.coeffs[0] = knd.coerce(u0[i])
        out.append(j)
    return out


def crossing_time_jet(poly: StepPolynomial, tau0: float,
                      newton_tol: float = NEWTON_TOL) -> Jet:
    """Solve y(T(s)) = 0 on one step's time polynomial, around scalar root tau0.

    The constant term is refined by scalar Newton; the jet orders follow by
    Newton iterations in the jet algebra, each doubling the correct degrees.
    """
    y_c = poly.coeffs[:, 1, :]
    p = poly.order

    def value_and_slope(t):
        val = y_c[p, 0]
        der = 0.0
        for k in range(p - 1, -1, -1):
            der = der * t + val
            val = val * t + y_c[k, 0]
        return float(np.real(val)), float(np.real(der))

    tau = float(tau0)
    for _ in range(60):
        val, der = value_and_slope(tau)
        if der == 0.0:
            break
        step = val / der
        tau -= step
        if abs(step) < 100.0 * np.finfo(float).eps * max(abs(tau), 1e-30):
            break
    _, der_check = value_and_slope(tau)
    if der_check >= 0.0:
        raise TransversalityError("crossing is tangential or wrong-sided")

    if poly.tab.order == 0:
        return Jet.constant(tau, poly.tab, poly.kind)

    tau_jet = Jet.constant(tau, poly.tab, poly.kind)
    n_iter = max(3, math.ceil(math.log2(poly.tab.order + 1)) + 1)
    for _ in range(n_iter):
        yv = poly.eval_component_jet(1, tau_jet)
        dv = _eval_derivative_jet(poly, 1, tau_jet)
        tau_jet = tau_jet - yv * dv.reciprocal()
    return tau_jet


def _eval_derivative_jet(poly: StepPolynomial, comp: int, tau: Jet) -> Jet:
    p = poly.order
    acc = Jet(poly.tab, poly.coeffs[p, comp] * p, poly.kind)
    for k in range(p - 1, 0, -1):
        acc = acc * tau + Jet(poly.tab, poly.coeffs[k, comp] * k, poly.kind)
    return acc


def _propagate_jets_to_crossing(flow: Flow, state: State6,
                                newton_tol: float = NEWTON_TOL):
    """Step the jet state until the scalar y-track crosses + -> -."""
    t = 0.0
    cur = state
    while t < MAX_RETURN_TIME:
        poly, nxt = flow.step(cur, t)
        y0 = float(np.real(poly.coeffs[0, 1, 0]))
        yh = sum(float(np.real(poly.coeffs[k, 1, 0])) * poly.h**k
                 for k in range(poly.order + 1))
        if y0 > 0.0 and yh <= 0.0:
            tau_lin = poly.h * y0 / (y0 - yh)
            tau_jet = crossing_time_jet(poly, tau_lin, newton_tol)
            states = [poly.eval_component_jet(c, tau_jet) for c in range(6)]
            return t, tau_jet, states
        t += poly.h
        cur = nxt
    raise TransversalityError("no section crossing found within the time cap")


def section_map_once(u: np.ndarray, c0: float, mu,
                     settings: FlowSettings | None = None) -> tuple[np.ndarray, float]:
    """One scalar iterate of the return map (fast compiled path)."""
    settings = settings or FlowSettings()
    st = lift_section_state(u, c0, mu, settings.dist_floor)
    u6 = np.array([float(v) for v in st.as_tuple()])
    out, tc = propagate_to_section_scalar(u6, mu, settings, MAX_RETURN_TIME)
    return np.array([out[0], out[2], out[3], out[5]]), tc


def map_with_jets(u0: np.ndarray, c0: float, mu, order: int,
                  settings: FlowSettings | None = None, knd=F64):
    """Return map applied to u0 + s: (4 projected jets, crossing-time jet)."""
    settings = settings or FlowSettings()
    tab = table(4, order)
    flow = Flow(mu, settings, tab, knd)
    jets_in = _section_jets(np.asarray(u0, dtype=float), order, knd)
    state = lift_section_state(jets_in, c0, mu, settings.dist_floor)
    t_accum, tau_jet, states = _propagate_jets_to_crossing(flow, state)
    time_jet = tau_jet + t_accum
    projected = JetVector([states[0], states[2], states[3], states[5]])
    return projected, time_jet, states


def refine_fixed_point(seed: np.ndarray, jacobi: float, mu,
                       newton_tol: float = NEWTON_TOL,
                       settings: FlowSettings | None = None) -> FixedPoint:
    """Newton refinement of the section fixed point at fixed Jacobi constant.

    The 4x4 Jacobian comes from an order-1 jet pass through the flow.
    """
    settings = settings or FlowSettings()
    u = np.asarray(seed, dtype=float).copy()
    period = math.nan
    for _ in range(MAX_NEWTON_ITERATIONS):
        mapped, time_jet, _ = map_with_jets(u, jacobi, mu, 1, settings)
        value = np.real(mapped.constant_terms()).astype(float)
        residual = float(np.max(np.abs(value - u)))
        period = float(np.real(time_jet.constant_term))
        if residual < newton_tol:
            return FixedPoint(u, period, float(jacobi), residual, _mu(mu))
        jac = np.real(mapped.linear_matrix()).astype(float)
        delta = np.linalg.solve(jac - np.eye(4), -(value - u))
        u = u + delta
    raise NewtonError(
        f"no convergence in {MAX_NEWTON_ITERATIONS} iterations "
        f"(last residual {residual:.3e})"
    )


def poincare_map_jet(fp: FixedPoint, mu, order: int,
                     settings: FlowSettings | None = None,
                     newton_tol: float = NEWTON_TOL) -> PoincareMapJet:
    """Jet of the return map centered on the fixed point."""
    mapped, time_jet, _ = map_with_jets(fp.u0, fp.jacobi, mu, order, settings)
    consts = np.real(mapped.constant_terms()).astype(float)
    map_residual = float(np.max(np.abs(consts - fp.u0)))
    if map_residual > 1e2 * newton_tol:
        raise NewtonError(
            f"map constant term {map_residual:.3e} exceeds 1e2 * newton_tol"
        )
    comps = []
    for i, comp in enumerate(mapped):
        c = comp.copy()
        c.coeffs[0] = 0.0
        comps.append(c)
    return PoincareMapJet(JetVector(comps), time_jet, fp, map_residual)
