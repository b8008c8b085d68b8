"""Order-by-order normalization of the diagonalized return map.

Each degree k gets a homogeneous generator removing every non-resonant
monomial through the coefficient-wise homological equation; the trivially
resonant terms stay and build the amplitude-dependent twist.  Conjugation by
the near-identity change of variables is carried out exactly to the shared
truncation order: the right factor through the derivative/multiset expansion
of F(s - chi(s)), the left factor as the triangular fixed point of
W - chi(W) = H, which is the truncated composition with the full inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._tables import MonomialTable, monomials_of_degree, table
from .diagonalize import CONJ_INDEX, Spectrum, conj_multiindex
from .errors import NormalFormError
from .jets import Jet, JetVector
from .scalars import C128

RES_TOL = 1e-8          # angle-defect threshold for resonance classification
NF_TOL = 1e-10          # relative size under which a coefficient counts as removed
HARD_DIVISOR_FLOOR = 100.0 * np.finfo(float).eps
ATTAINER_REL_TOL = 1e-9
TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------------
# small divisors
# ----------------------------------------------------------------------

def angle_defect(i: int, j, omega: np.ndarray) -> float:
    """Signed angle omega_i - <j, omega>, reduced to (-pi, pi]."""
    d = omega[i] - float(np.dot(np.asarray(j, dtype=float), omega))
    return math.remainder(d, TWO_PI)


def classify_resonant(i: int, j, sp: Spectrum, res_tol: float = RES_TOL) -> bool:
    """True when the homological divisor for (i, j) structurally vanishes."""
    return abs(angle_defect(i, j, sp.omega)) < res_tol


def divisor_magnitude(i: int, j, omega: np.ndarray) -> float:
    """|lambda_i - lambda^j| via unit-circle angle arithmetic."""
    return 2.0 * abs(math.sin(0.5 * angle_defect(i, j, omega)))


def divisor_complex(i: int, j, omega: np.ndarray) -> complex:
    phase = float(np.dot(np.asarray(j, dtype=float), omega))
    return np.exp(1j * omega[i]) - np.exp(1j * phase)


@dataclass
class DivisorRecord:
    k: int
    gamma_k: float
    argmin_j: tuple
    argmin_i: int                 # 1-based, matching the published table
    gamma_running: float
    attainers: list = field(default_factory=list)

    def attains(self, j, i: int, rel_tol: float = ATTAINER_REL_TOL) -> bool:
        """Whether (j, i) is an argmin of this degree up to rel_tol."""
        return (tuple(j), int(i)) in {(tuple(a), b) for a, b in self.attainers}


def divisor_table(sp: Spectrum, k: int, tau: float = 2.0,
                  res_tol: float = RES_TOL,
                  gamma_prev: float = math.inf) -> DivisorRecord:
    """Smallest scaled divisor min |lambda_i - lambda^j| k^tau at degree k.

    The scan runs over multi-indices in graded colex order with the
    component index innermost and keeps the first strict minimum; exact
    conjugate-pair ties make the argmin inherently degenerate, so every
    attaining pair (within ATTAINER_REL_TOL relative) is recorded too.
    """
    if k < 1:
        raise ValueError("degree must be >= 1")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    best = None
    values = []
    scale = float(k) ** tau
    for j in monomials_of_degree(k, 4):
        for i in range(4):
            d = angle_defect(i, j, sp.omega)
            if abs(d) < res_tol:
                continue
            val = 2.0 * abs(math.sin(0.5 * d)) * scale
            values.append((val, j, i + 1))
            if best is None or val < best[0]:
                best = (val, j, i + 1)
    if best is None:
        raise NormalFormError(f"no non-resonant pair at degree {k}")
    attainers = [(j, i) for val, j, i in values
                 if val <= best[0] * (1.0 + ATTAINER_REL_TOL)]
    return DivisorRecord(k, best[0], best[1], best[2],
                         min(best[0], gamma_prev), attainers)


def structural_resonant_monomials(i: int, order: int) -> list[tuple]:
    """Trivially resonant multi-indices for component i: e_i + pair blocks."""
    out = []
    for m1 in range(order // 2 + 1):
        for m2 in range(order // 2 + 1):
            j = [0, 0, 0, 0]
            j[i] += 1
            j[0] += m1
            j[1] += m1
            j[2] += m2
            j[3] += m2
            if sum(j) <= order:
                out.append(tuple(j))
    return out


# ----------------------------------------------------------------------
# conjugation helpers
# ----------------------------------------------------------------------

def homogeneous_eval(chi: JetVector, w: JetVector, degree: int) -> JetVector:
    """Evaluate a homogeneous degree-`degree` vector polynomial at jets w.

    Power products of the w components are built degree by degree; products
    are truncated so nothing above the shared order is ever formed.
    """
    tab = w.table
    knd = w.kind
    n = tab.order
    out = [Jet.zero(tab, knd) for _ in range(len(chi))]
    sl = tab.slice_of_degree(degree)
    coeff_rows = [np.asarray(c.coeffs[sl]) for c in chi.components]
    if all(np.max(np.abs(r)) == 0 for r in coeff_rows):
        return JetVector(out)

    prev: dict[tuple, Jet] = {(0, 0, 0, 0): Jet.constant(1.0, tab, knd)}
    for d in range(1, degree + 1):
        cur: dict[tuple, Jet] = {}
        cap = n - (degree - d)  # later factors raise the minimum degree
        for e in monomials_of_degree(d, 4):
            v = next(u for u in range(4) if e[u] > 0)
            parent = list(e)
            parent[v] -= 1
            cur[e] = prev[tuple(parent)].mul_truncated(w[v], cap)
        prev = cur

    base = int(tab.deg_start[degree])
    for e, mono in prev.items():
        t = tab.index_of[e] - base
        for ci in range(len(chi)):
            wcoef = coeff_rows[ci][t]
            if wcoef != 0:
                out[ci].coeffs += mono.coeffs * wcoef
    return JetVector(out)


def compose_right_near_identity(F: JetVector, chi: JetVector,
                                degree: int) -> JetVector:
    """Truncation of F(s - chi(s)) for a homogeneous degree-k generator.

    Expands over multisets u of chi factors: sum_u (-1)^|u| (d^u F / u!) chi^u,
    which terminates because chi^u has degree k |u|.
    """
    tab = F.table
    knd = F.kind
    n = tab.order
    m_max = n // degree
    out = F.copy()
    if m_max == 0:
        return out

    chi_pows: dict[tuple, Jet] = {(0, 0, 0, 0): Jet.constant(1.0, tab, knd)}
    derivs: dict[tuple, JetVector] = {(0, 0, 0, 0): F}
    for m in range(1, m_max + 1):
        cap = n  # chi^u already has degree k*m; product truncation handles the rest
        for u in monomials_of_degree(m, 4):
            v = next(q for q in range(4) if u[q] > 0)
            parent = list(u)
            parent[v] -= 1
            pu = tuple(parent)
            chi_pows[u] = chi_pows[pu].mul_truncated(chi[v], cap)
            derivs[u] = JetVector([c.derivative(v) for c in derivs[pu]])
            u_fact = 1.0
            for q in u:
                u_fact *= math.factorial(q)
            sign = -1.0 if m % 2 else 1.0
            w = sign / u_fact
            for ci in range(4):
                prod = derivs[u][ci].mul_truncated(chi_pows[u], n)
                out.components[ci] = out.components[ci] + prod.scale(w)
    return out


def compose_left_inverse(chi: JetVector, H: JetVector, degree: int) -> JetVector:
    """Truncation of c^-1 o H for c = id - chi, chi homogeneous of degree k.

    Solves W - chi(W) = H by fixed point; every pass gains k-1 degrees, so
    ceil((order-1)/(k-1)) passes give the exact truncated composition with
    the full inverse.
    """
    n = H.order
    n_iter = max(1, math.ceil((n - 1) / (degree - 1)))
    w = H.copy()
    for _ in range(n_iter):
        w = H + homogeneous_eval(chi, w, degree)
    return w


# ----------------------------------------------------------------------
# normal form construction
# ----------------------------------------------------------------------

@dataclass
class NormalForm:
    F: JetVector                      # normalized complex map
    generators: list                  # [(k, chi_k JetVector)]
    transform: JetVector              # c = c_1 o ... o c_N (complex, 4 vars)
    transform_inverse: JetVector      # truncated inverse of c
    twist_kappa: list                 # per mode: dict multi-index -> coeff
    twist_beta: list                  # per mode: dict multi-index -> float
    divisors: list                    # DivisorRecord, k = 1..N
    resonant_set: list                # retained (i, j) pairs (0-based i)
    spectrum: Spectrum
    tau: float
    res_tol: float
    nf_tol: float
    max_nonresonant: float            # worst surviving coefficient, relative per degree

    @property
    def order(self) -> int:
        return self.F.order

    def gamma_running(self, k_hi: int | None = None, k_lo: int = 2) -> float:
        """Cumulative small divisor min over degrees k_lo..k_hi."""
        k_hi = k_hi if k_hi is not None else self.order
        vals = [r.gamma_k for r in self.divisors if k_lo <= r.k <= k_hi]
        return min(vals)

    def to_physical(self, z: np.ndarray) -> np.ndarray:
        """Map normal-form coordinates to centered section coordinates."""
        return self.transform.eval(z)

    def from_physical(self, du: np.ndarray) -> np.ndarray:
        """Pull centered section coordinates back to normal-form coordinates."""
        return self.transform_inverse.eval(du)


def normalize_step(F_prev: JetVector, k: int, sp: Spectrum,
                   tau: float = 2.0, res_tol: float = RES_TOL,
                   hard_floor: float = HARD_DIVISOR_FLOOR):
    """One homological step: build chi_k, return (F_next, chi_k, retained).

    Retained coefficients (the resonant set) keep b = 0; everything else in
    the degree-k slice is removed by the conjugation.
    """
    tab = F_prev.table
    knd = F_prev.kind
    base = int(tab.deg_start[k])
    chi = [Jet.zero(tab, knd) for _ in range(4)]
    retained = []
    pre_scale = 0.0
    any_coeff = False
    for t in range(base, int(tab.deg_start[k + 1])):
        j = tuple(tab.exps[t])
        for i in range(4):
            r = F_prev[i].coeffs[t]
            pre_scale = max(pre_scale, abs(complex(r)))
            if classify_resonant(i, j, sp, res_tol):
                if r != 0:
                    retained.append((i, j))
                continue
            if r == 0:
                continue
            mag = divisor_magnitude(i, j, sp.omega)
            if mag < hard_floor:
                raise NormalFormError(
                    f"non-resonant divisor {mag:.3e} below the hard floor at "
                    f"degree {k}, (i, j) = ({i + 1}, {j})"
                )
            chi[i].coeffs[t] = r / divisor_complex(i, j, sp.omega)
            any_coeff = True
    chi_vec = JetVector(chi)
    if not any_coeff:
        return F_prev.copy(), chi_vec, retained, pre_scale
    H = compose_right_near_identity(F_prev, chi_vec, k)
    F_next = compose_left_inverse(chi_vec, H, k)
    return F_next, chi_vec, retained, pre_scale


def _assemble_transforms(sp: Spectrum, generators, tab: MonomialTable):
    """Full change of variables c = c_1 o ... o c_N and its truncated inverse."""
    ident = JetVector.identity(4, tab.order, C128)
    cur = ident.copy()
    for k, chi in reversed(generators):
        cur = cur - homogeneous_eval(chi, cur, k)
    c_rows = []
    for r in range(4):
        acc = Jet.zero(tab, C128)
        for u in range(4):
            acc = acc + cur[u].scale(sp.V[r, u])
        c_rows.append(acc)
    transform = JetVector(c_rows)

    inv = JetVector([
        Jet.zero(tab, C128) for _ in range(4)
    ])
    lin = JetVector.identity(4, tab.order, C128)
    for r in range(4):
        acc = Jet.zero(tab, C128)
        for u in range(4):
            acc = acc + lin[u].scale(sp.V_inv[r, u])
        inv.components[r] = acc
    for k, chi in generators:
        n_iter = max(1, math.ceil((tab.order - 1) / (k - 1)))
        w = inv.copy()
        for _ in range(n_iter):
            w = inv + homogeneous_eval(chi, w, k)
        inv = w
    return transform, inv


def _extract_twist(F: JetVector, sp: Spectrum, nf_tol_abs: float):
    """Twist data from the retained coefficients.

    For mode p the kept monomials of component 2p have the shape
    e_{2p} + m1 (e_1 + e_2) + m2 (e_3 + e_4); the bracket
    lambda + sum kappa I^m rotates z_p by Omega_p(I) = angle(bracket).
    """
    tab = F.table
    n = tab.order
    m_cap = (n - 1) // 2
    kappas = []
    betas = []
    for p in (0, 1):
        comp = 2 * p
        lam = np.exp(1j * sp.omega[comp])
        kappa: dict[tuple, complex] = {}
        for m1 in range(m_cap + 1):
            for m2 in range(m_cap + 1):
                if m1 + m2 == 0 or 1 + 2 * (m1 + m2) > n:
                    continue
                j = [m1, m1, m2, m2]
                j[comp] += 1
                idx = tab.index_of[tuple(j)]
                c = complex(F[comp].coeffs[idx])
                if abs(c) > nf_tol_abs:
                    kappa[(m1, m2)] = c
        # bracket as a 2-variable complex jet in the actions
        itab = table(2, m_cap) if m_cap >= 1 else table(2, 1)
        bracket = Jet.zero(itab, C128)
        bracket.coeffs[0] = lam
        for (m1, m2), c in kappa.items():
            if m1 + m2 <= itab.order:
                bracket.coeffs[itab.index_of[(m1, m2)]] = c
        logb = bracket.scale(1.0 / lam).log()
        beta: dict[tuple, float] = {}
        for t in range(1, itab.n_terms):
            val = complex(logb.coeffs[t])
            if abs(val) > 0:
                beta[tuple(itab.exps[t])] = float(val.imag)
        kappas.append(kappa)
        betas.append(beta)
    return kappas, betas


def twist_radius_defect(nf: NormalForm) -> float:
    """Radius non-preservation of the twist brackets: max |log |bracket||."""
    worst = 0.0
    for p, kappa in enumerate(nf.twist_kappa):
        lam = np.exp(1j * nf.spectrum.omega[2 * p])
        m_cap = max((nf.order - 1) // 2, 1)
        itab = table(2, m_cap)
        bracket = Jet.zero(itab, C128)
        bracket.coeffs[0] = lam
        for (m1, m2), c in kappa.items():
            if m1 + m2 <= itab.order:
                bracket.coeffs[itab.index_of[(m1, m2)]] = c
        logb = bracket.scale(1.0 / lam).log()
        for t in range(1, itab.n_terms):
            worst = max(worst, abs(complex(logb.coeffs[t]).real))
    return worst


def normalize(F1: JetVector, N: int, sp: Spectrum, tau: float = 2.0,
              res_tol: float = RES_TOL, nf_tol: float = NF_TOL) -> NormalForm:
    """Fold of homological steps for k = 2..N plus transform assembly."""
    if F1.order < N:
        raise ValueError(f"map order {F1.order} below requested N = {N}")
    F = F1.truncated(N).to_kind(C128) if F1.order != N else F1.to_kind(C128)
    tab = F.table

    divisors = []
    g_run = math.inf
    for k in range(1, N + 1):
        rec = divisor_table(sp, k, tau, res_tol, g_run)
        g_run = rec.gamma_running
        divisors.append(rec)

    generators = []
    resonant_set: list = []
    pre_scales = {}
    for k in range(2, N + 1):
        F, chi, retained, pre_scale = normalize_step(F, k, sp, tau, res_tol)
        generators.append((k, chi))
        resonant_set.extend(retained)
        pre_scales[k] = pre_scale

    # worst surviving non-resonant coefficient, relative to what each step
    # removed (degrees below a step never change afterwards)
    worst = 0.0
    for k in range(2, N + 1):
        res_k = 0.0
        for t in range(int(tab.deg_start[k]), int(tab.deg_start[k + 1])):
            j = tuple(tab.exps[t])
            for i in range(4):
                if not classify_resonant(i, j, sp, res_tol):
                    res_k = max(res_k, abs(complex(F[i].coeffs[t])))
        rel = res_k / pre_scales[k] if pre_scales[k] > 0 else 0.0
        worst = max(worst, rel)
        if rel > nf_tol:
            raise NormalFormError(
                f"non-resonant residue at degree {k} is {rel:.3e} of the "
                f"pre-normalization slice scale, above nf_tol = {nf_tol}"
            )

    transform, inverse = _assemble_transforms(sp, generators, tab)
    kappas, betas = _extract_twist(F, sp, 0.0)
    return NormalForm(F, generators, transform, inverse, kappas, betas,
                      divisors, resonant_set, sp, tau, res_tol, nf_tol, worst)


def twist_frequencies(nf: NormalForm, actions) -> np.ndarray:
    """Amplitude-dependent rotation angles at the given action values.

    actions = (I_1, I_2) with I_p = |z_p|^2.  Requires the retained set to
    be purely trivially resonant.
    """
    for (i, j) in nf.resonant_set:
        d = [0, 0, 0, 0]
        d[i] += 1
        rem = tuple(a - b for a, b in zip(j, d))
        if rem[0] != rem[1] or rem[2] != rem[3] or min(rem) < 0:
            raise NormalFormError(
                f"retained monomial {j} (component {i + 1}) is not trivially "
                "resonant; the twist factorization is invalid"
            )
    out = []
    for p in (0, 1):
        lam = np.exp(1j * nf.spectrum.omega[2 * p])
        b = lam
        for (m1, m2), c in nf.twist_kappa[p].items():
            b = b + c * actions[0] ** m1 * actions[1] ** m2
        out.append(float(np.angle(b)))
    return np.array(out)
