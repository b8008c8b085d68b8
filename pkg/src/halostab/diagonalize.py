"""Linear normalization: eigen-structure of the map's Jacobian and the
complexifying change of variables.

Eigenvalues are kept in mode-adjacent conjugate pairs,

    (lambda_1, conj lambda_1, lambda_2, conj lambda_2),

with the positive-angle member first inside each pair and modes sorted by
descending rotation angle.  This pairing is the one under which the small-
divisor bookkeeping matches the reference orbit's published table; the
conjugate of slot i is slot i XOR 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SpectrumError
from .jets import Jet, JetVector
from .scalars import C128
from .section import PoincareMapJet

UNIT_CIRCLE_TOL = 1e-9
DIAG_RESIDUAL_TOL = 1e-10
ANGLE_DEGENERACY_TOL = 1e-8

# Keeps normal-form coordinates a few thousand section-units per unit, which
# balances pull-back noise amplification (small p hurts) against the
# conditioning of the near-resonant cubic generator (large p hurts) at the
# reference-orbit scale.  Purely a numerical dial: it cancels out of every
# stability constant.
DEFAULT_P_SCALE = 5e-3

CONJ_INDEX = (1, 0, 3, 2)


def conj_multiindex(j) -> tuple:
    """Exponent swap induced by conjugation (swap within each pair)."""
    return (j[1], j[0], j[3], j[2])


@dataclass
class Spectrum:
    angles: tuple[float, float]        # (alpha_1, alpha_2), both in (0, pi)
    eigenvalues: np.ndarray            # (l1, conj l1, l2, conj l2)
    omega: np.ndarray                  # signed angles (a1, -a1, a2, -a2)
    V: np.ndarray                      # scaled eigenvector matrix (p * V)
    V_inv: np.ndarray                  # inverse of the scaled matrix
    p_scale: float

    def to_json(self) -> str:
        def c_list(m):
            return [[f"{v.real:.17g}", f"{v.imag:.17g}"] for v in np.ravel(m)]
        return json.dumps({
            "angles": [f"{a:.17g}" for a in self.angles],
            "eigenvalues": c_list(self.eigenvalues),
            "omega": [f"{w:.17g}" for w in self.omega],
            "p_scale": f"{self.p_scale:.17g}",
            "V": c_list(self.V),
            "V_inv": c_list(self.V_inv),
        }, indent=1)

    @classmethod
    def from_angles(cls, alpha1: float, alpha2: float) -> "Spectrum":
        """Spectrum carrying only the rotation angles (no eigenvectors).

        Enough for every small-divisor computation; V-dependent operations
        reject it.
        """
        omega = np.array([alpha1, -alpha1, alpha2, -alpha2])
        return cls((alpha1, alpha2), np.exp(1j * omega), omega,
                   np.full((4, 4), np.nan, dtype=complex),
                   np.full((4, 4), np.nan, dtype=complex), 1.0)


def spectrum_of(G1: np.ndarray, p_scale: float = DEFAULT_P_SCALE,
                unit_tol: float = UNIT_CIRCLE_TOL,
                angle_tol: float = ANGLE_DEGENERACY_TOL) -> Spectrum:
    """Eigen-decomposition of the 4x4 section-map Jacobian.

    Requires a fully elliptic spectrum: four unit-circle eigenvalues in two
    strictly complex conjugate pairs, no angle within angle_tol of 0 or pi.
    """
    G1 = np.asarray(G1, dtype=float)
    if G1.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {G1.shape}")
    vals, vecs = np.linalg.eig(G1)

    if np.max(np.abs(np.abs(vals) - 1.0)) > unit_tol:
        raise SpectrumError(
            f"eigenvalue moduli off the unit circle: {np.abs(vals)}"
        )
    if np.min(np.abs(np.imag(vals))) < angle_tol:
        raise SpectrumError(
            "eigenvalue too close to the real axis (not strictly elliptic)"
        )

    pos = [i for i in range(4) if np.imag(vals[i]) > 0]
    if len(pos) != 2:
        raise SpectrumError("expected two eigenvalues in the upper half plane")
    pos.sort(key=lambda i: -np.angle(vals[i]))
    angles = tuple(float(np.angle(vals[i])) for i in pos)
    if abs(angles[0] - angles[1]) < angle_tol:
        raise SpectrumError("degenerate rotation angles")

    cols = []
    lams = []
    for i in pos:
        v = vecs[:, i].copy()
        # deterministic normalization: unit infinity norm, dominant entry 1
        piv = int(np.argmax(np.abs(v)))
        v = v / v[piv]
        lams.extend([vals[i], np.conj(vals[i])])
        cols.extend([v, np.conj(v)])
    V = p_scale * np.column_stack(cols)
    V_inv = np.linalg.inv(V)
    lams = np.array(lams)

    lam_diag = V_inv @ G1 @ V
    off = lam_diag - np.diag(np.diag(lam_diag))
    if np.max(np.abs(off)) > DIAG_RESIDUAL_TOL:
        raise SpectrumError(
            f"diagonalization residual {np.max(np.abs(off)):.3e} too large"
        )
    omega = np.array([angles[0], -angles[0], angles[1], -angles[1]])
    return Spectrum((angles[0], angles[1]), lams, omega, V, V_inv,
                    float(p_scale))


def substitute_linear(vec: JetVector, M: np.ndarray) -> JetVector:
    """Compose a jet vector with the linear substitution s -> M s."""
    tab = vec.table
    knd = vec.kind.to_complex() if np.iscomplexobj(M) else vec.kind
    comps = [c.to_kind(knd) for c in vec.components]
    out = [Jet.zero(tab, knd) for _ in comps]
    for ci, c in enumerate(comps):
        out[ci].coeffs[0] = c.constant_term

    prev = {tuple([0] * tab.n_vars): Jet.constant(1.0, tab, knd)}
    for d in range(1, tab.order + 1):
        cur = {}
        for t in range(int(tab.deg_start[d]), int(tab.deg_start[d + 1])):
            e = tuple(tab.exps[t])
            v = next(u for u in range(tab.n_vars) if e[u] > 0)
            parent = list(e)
            parent[v] -= 1
            mono = prev[tuple(parent)].mul_linear(M[v])
            cur[e] = mono
            for ci, c in enumerate(comps):
                w = c.coeffs[t]
                if w != 0:
                    out[ci].coeffs += mono.coeffs * w
        prev = cur
    return JetVector(out)


def linear_normalize(pmap: PoincareMapJet, sp: Spectrum) -> JetVector:
    """Complex jet of the map with diagonal linear part: V^-1 (G o (pV s))."""
    if not np.all(np.isfinite(sp.V.real)):
        raise SpectrumError("spectrum carries no eigenvector matrix")
    g_complex = JetVector([c.to_kind(C128) for c in pmap.G])
    inner_rows = np.array([sp.V[r, :] for r in range(4)])
    shifted = substitute_linear(g_complex, inner_rows)
    out = []
    for r in range(4):
        acc = Jet.zero(shifted.table, C128)
        for c in range(4):
            acc = acc + shifted[c].scale(sp.V_inv[r, c])
        out.append(acc)
    return JetVector(out)


def reality_defect(F: JetVector) -> float:
    """Violation of the conjugate-pairing structure of a normalized map.

    Coefficient of component i at j must equal the conjugate of the
    coefficient of component CONJ_INDEX[i] at the pair-swapped multi-index.
    """
    tab = F.table
    worst = 0.0
    for i in range(4):
        ci = CONJ_INDEX[i]
        for t in range(tab.n_terms):
            jt = conj_multiindex(tuple(tab.exps[t]))
            s = tab.index_of[jt]
            d = abs(F[i].coeffs[t] - np.conj(F[ci].coeffs[s]))
            if d > worst:
                worst = float(d)
    return worst
