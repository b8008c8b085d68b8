"""Finite-time stability constants assembled from the map jet and spectrum.

The chain: analyticity radius rho by the coefficient root test, cumulative
small divisor gamma, the linear/quadratic growth penalties L and Q, the
saturated seed perturbation eps2, the majorant coefficient A, the
characteristic accumulation time C, the optimal truncation order, and the
confinement radius as a function of the demanded iteration count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ThresholdError
from .normalform import DivisorRecord
from .section import PoincareMapJet

SIDEREAL_MONTH_DAYS = 27.321661       # presentation only, not a source value
TIME_UNIT_DAYS = SIDEREAL_MONTH_DAYS / (2.0 * math.pi)


def rho_root_test(pmap: PoincareMapJet, k_max: int) -> tuple[list, float]:
    """Per-degree radius estimates rho_k = ||G^k||^(-1/k) and their minimum.

    Degrees with an identically zero slice are skipped.  The running minimum
    over 2..k_max plays the role of the limit infimum.
    """
    if k_max < 5:
        raise ValueError("root test needs k_max >= 5")
    if pmap.order < k_max:
        raise ValueError(f"map order {pmap.order} below k_max = {k_max}")
    series = []
    rho = math.inf
    for k in range(2, k_max + 1):
        nk = pmap.G.degree_norm(k, 1.0)
        if nk == 0.0:
            series.append((k, math.nan, rho))
            continue
        rk = nk ** (-1.0 / k)
        rho = min(rho, rk)
        series.append((k, rk, rho))
    return series, rho


def epsilon2(L: float, Q: float, N: int) -> float:
    """Saturated iterative-lemma seed: L / (Q (1 + 2L)^(N-2))."""
    if N < 2:
        raise ValueError("N must be >= 2")
    if L <= 0 or Q <= 0:
        raise ValueError("L and Q must be positive")
    return L / (Q * (1.0 + 2.0 * L) ** (N - 2))


def radius_threshold(A: float, tau: float) -> float:
    """Largest radius a0 = 1/(A (2e)^tau) the truncation theory admits."""
    return 1.0 / (A * (2.0 * math.e) ** tau)


def n_opt(a: float, A: float, tau: float) -> int:
    """Optimal truncation order floor((1/e) (1/(A a))^(1/tau)); always >= 2."""
    a0 = radius_threshold(A, tau)
    if a > a0 * (1.0 + 1e-12):
        raise ThresholdError(f"radius {a} above the admissible bound {a0}")
    return max(2, math.floor((1.0 / math.e) * (1.0 / (A * a)) ** (1.0 / tau)))


def t_eff(a: float, A: float, C: float, tau: float) -> float:
    """Guaranteed confinement time (map iterations) at radius a."""
    return C * math.exp(tau * n_opt(a, A, tau))


def confinement_radius(T: float, A: float, C: float, tau: float) -> tuple[float, str]:
    """Radius guaranteeing confinement for T iterations, with branch label.

    For T >= C the logarithmic shrink applies; below the accumulation time
    the admissible-domain bound a0 is already the binding constraint.
    """
    if T <= 0:
        raise ValueError("iteration count must be positive")
    if T >= C:
        a = 1.0 / (A * math.e**tau *
                   (1.0 + math.log(T / C) / tau) ** tau)
        return a, "log-shrink"
    return radius_threshold(A, tau), "domain-bound"


def drift_bound(constants: "StabilityConstants", a: float) -> float:
    """Per-iteration radial drift bound at radius a.

    Evaluated with the constant chain at the optimal order for this radius
    (the order actually used in the confinement argument), not at the
    truncation order of the computed map.
    """
    n = n_opt(a, constants.A, constants.tau)
    L_o = float(n) ** constants.tau / constants.gamma
    Q_o = (2.0 * float(n) ** (constants.tau + 1)
           / (constants.rho * constants.gamma)
           + 8.0 * float(n) ** (2 * constants.tau + 1)
           / (constants.rho * constants.gamma**2))
    e2_o = epsilon2(L_o, Q_o, n)
    return e2_o * (2.0 * a / constants.rho) * math.exp(-constants.tau * n)


def iterations_for_years(years: float, period: float) -> int:
    """Map iterations covering a mission span (one iteration per revolution)."""
    days_per_rev = period * TIME_UNIT_DAYS
    return int(round(years * 365.25 / days_per_rev))


@dataclass
class StabilityConstants:
    tau: float
    order: int                       # truncation order N the chain is built at
    rho_series: list                 # (k, rho_k, running min)
    rho: float
    gamma_series: list               # DivisorRecord per degree 1..N
    gamma: float                     # min over degrees 2..N
    L: float
    Q: float
    eps2: float
    A: float
    C: float
    a0: float
    per_order: list = field(default_factory=list)

    @classmethod
    def from_map(cls, pmap: PoincareMapJet, divisors: list[DivisorRecord],
                 tau: float = 2.0, order: int | None = None) -> "StabilityConstants":
        N = order if order is not None else pmap.order
        series, rho = rho_root_test(pmap, N)
        gamma = min(r.gamma_k for r in divisors if 2 <= r.k <= N)
        L = float(N) ** tau / gamma
        Q = (2.0 * float(N) ** (tau + 1) / (rho * gamma)
             + 8.0 * float(N) ** (2 * tau + 1) / (rho * gamma**2))
        e2 = epsilon2(L, Q, N)
        A = 4.0 / (rho * gamma)
        C = rho / (4.0 * e2)
        a0 = radius_threshold(A, tau)

        per_order = []
        rho_run = math.inf
        gam_run = math.inf
        rho_by_k = {k: rk for k, rk, _ in series}
        for k in range(2, N + 1):
            rk = rho_by_k.get(k, math.nan)
            if not math.isnan(rk):
                rho_run = min(rho_run, rk)
            gam_run = min(gam_run, next(r.gamma_k for r in divisors if r.k == k))
            Lk = float(k) ** tau / gam_run
            Qk = (2.0 * float(k) ** (tau + 1) / (rho_run * gam_run)
                  + 8.0 * float(k) ** (2 * tau + 1) / (rho_run * gam_run**2))
            e2k = epsilon2(Lk, Qk, k)
            Ak = 4.0 / (rho_run * gam_run)
            Ck = rho_run / (4.0 * e2k)
            a0k = radius_threshold(Ak, tau)
            per_order.append(dict(k=k, rho_k=rk, rho_min=rho_run,
                                  gamma_k=next(r.gamma_k for r in divisors
                                               if r.k == k),
                                  gamma_min=gam_run, L=Lk, Q=Qk, eps2=e2k,
                                  A=Ak, C=Ck,
                                  N_opt=n_opt(a0k, Ak, tau), a0=a0k))
        return cls(tau, N, series, rho, divisors, gamma, L, Q, e2, A, C, a0,
                   per_order)

    def n_opt(self, a: float) -> int:
        n = n_opt(a, self.A, self.tau)
        return min(n, self.order)

    def t_eff(self, a: float) -> float:
        return t_eff(a, self.A, self.C, self.tau)

    def confinement_radius(self, T: float) -> tuple[float, str]:
        return confinement_radius(T, self.A, self.C, self.tau)

    def to_json(self) -> str:
        return json.dumps({
            "tau": f"{self.tau:.17g}",
            "order": self.order,
            "rho": f"{self.rho:.17g}",
            "gamma": f"{self.gamma:.17g}",
            "L": f"{self.L:.17g}",
            "Q": f"{self.Q:.17g}",
            "eps2": f"{self.eps2:.17g}",
            "A": f"{self.A:.17g}",
            "C": f"{self.C:.17g}",
            "a0": f"{self.a0:.17g}",
        }, indent=1)
