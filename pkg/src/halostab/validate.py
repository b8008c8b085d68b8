"""Empirical checks of the pipeline against the genuinely integrated dynamics.

Everything here drives the real (scalar) return map — never the jet — so
residuals and drifts measure the pipeline's claims rather than its own
arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EnergySurfaceError, TransversalityError
from .normalform import NormalForm
from .section import FixedPoint, section_map_once
from .taylorflow import FlowSettings


@dataclass
class DriftReport:
    samples: int
    iterations: int
    radius: float
    max_cumulative_drift: float       # per DOF max over samples and steps
    max_step_drift: float             # worst one-iteration radius change
    bound: float                      # per-iteration drift bound
    violations: int                   # step drifts above the bound
    escapes: int                      # orbits lost (no crossing / off surface)
    pullback_residual: float          # |c(c^-1) - id| coefficient residual

    def to_json(self) -> str:
        return json.dumps({
            "samples": self.samples,
            "iterations": self.iterations,
            "radius": f"{self.radius:.17g}",
            "max_cumulative_drift": f"{self.max_cumulative_drift:.17g}",
            "max_step_drift": f"{self.max_step_drift:.17g}",
            "bound": f"{self.bound:.17g}",
            "violations": self.violations,
            "escapes": self.escapes,
            "pullback_residual": f"{self.pullback_residual:.17g}",
        }, indent=1)


def sample_radii(a: float, n_samples: int, rng: np.random.Generator):
    """Half boundary circles |z_i| = a, half uniform-in-radius interior."""
    radii = np.full((n_samples, 2), a)
    half = n_samples // 2
    radii[half:] = rng.uniform(0.0, a, size=(n_samples - half, 2))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(n_samples, 2))
    return radii, phases


def _nf_point(radii, phases) -> np.ndarray:
    z1 = radii[0] * np.exp(1j * phases[0])
    z2 = radii[1] * np.exp(1j * phases[1])
    return np.array([z1, np.conj(z1), z2, np.conj(z2)])


def nf_radii(w: np.ndarray) -> np.ndarray:
    """Per-mode radii of a pulled-back point (conjugate-pair average)."""
    return np.array([
        math.sqrt(abs(w[0] * w[1])),
        math.sqrt(abs(w[2] * w[3])),
    ])


def pullback_residual(nf: NormalForm) -> float:
    """Coefficient residual of c o c^-1 against the identity."""
    from .jets import JetVector, compose
    rt = compose(nf.transform, nf.transform_inverse)
    ident = JetVector.identity(4, nf.order, rt.kind)
    return max(float(np.max(np.abs(np.asarray(a.coeffs) - np.asarray(b.coeffs))))
               for a, b in zip(rt, ident))


def monte_carlo_drift(fp: FixedPoint, nf: NormalForm, a: float,
                      n_samples: int, n_iterations: int, mu,
                      bound: float, seed: int = 20260809,
                      settings: FlowSettings | None = None) -> DriftReport:
    """Iterate the real return map on normal-form samples and track radii.

    Samples start with both mode radii <= a/2; every crossing is pulled back
    through the stored inverse transform and the radii recorded.
    """
    settings = settings or FlowSettings()
    rng = np.random.default_rng(seed)
    radii, phases = sample_radii(a / 2.0, n_samples, rng)
    max_cum = 0.0
    max_step = 0.0
    violations = 0
    escapes = 0
    for s in range(n_samples):
        z = _nf_point(radii[s], phases[s])
        du = np.real(nf.to_physical(z))
        u = fp.u0 + du
        r_prev = nf_radii(nf.from_physical(u - fp.u0))
        r_first = r_prev.copy()
        for _ in range(n_iterations):
            try:
                u, _ = section_map_once(u, fp.jacobi, mu, settings)
            except (EnergySurfaceError, TransversalityError):
                escapes += 1
                break
            w = nf.from_physical(u - fp.u0)
            r_now = nf_radii(w)
            step = float(np.max(np.abs(r_now - r_prev)))
            cum = float(np.max(np.abs(r_now - r_first)))
            max_step = max(max_step, step)
            max_cum = max(max_cum, cum)
            if step > bound:
                violations += 1
            r_prev = r_now
    return DriftReport(n_samples, n_iterations, a, max_cum, max_step, bound,
                       violations, escapes, pullback_residual(nf))


def conjugacy_residual_scan(fp: FixedPoint, nf: NormalForm, mu,
                            radii, n_samples: int = 16, seed: int = 7,
                            settings: FlowSettings | None = None):
    """Residual |c^-1(P(c(z))) - F(z)| against the integrated map, per radius.

    Returns (rows, slope): rows of (radius, max residual, n valid), and the
    least-squares log-log slope over the informative radii - those above the
    numerical noise floor and small enough that the transform is still
    contractive (residual < radius / 10).
    """
    settings = settings or FlowSettings()
    rng = np.random.default_rng(seed)
    rows = []
    for r in sorted(radii):
        worst = 0.0
        valid = 0
        for _ in range(n_samples):
            th = rng.uniform(0.0, 2.0 * math.pi, 2)
            z = _nf_point(np.array([r, r]), th)
            du = np.real(nf.to_physical(z))
            try:
                u_next, _ = section_map_once(fp.u0 + du, fp.jacobi, mu, settings)
            except (EnergySurfaceError, TransversalityError):
                continue
            w = nf.from_physical(u_next - fp.u0)
            fz = nf.F.eval(z)
            worst = max(worst, float(np.max(np.abs(w - fz))))
            valid += 1
        rows.append((float(r), worst, valid))
    slope = fit_residual_slope(rows)
    return rows, slope


def fit_residual_slope(rows, floor_factor: float = 30.0) -> float:
    """Log-log slope of residual vs radius over the informative window.

    Drops radii whose residual sits at the numerical noise floor (within
    floor_factor of the smallest observed residual) and radii where the
    residual is no longer small against the radius itself.
    """
    finite = [(r, res) for r, res, valid in rows if valid > 0 and res > 0.0]
    if len(finite) < 2:
        return math.nan
    floor = min(res for _, res in finite)
    pts = [(r, res) for r, res in finite
           if res > floor_factor * floor and res < 0.1 * r]
    if len(pts) < 2:
        pts = finite[-2:]
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def stm_finite_difference_check(fp: FixedPoint, mu, G1: np.ndarray,
                                h: float = 1e-6,
                                settings: FlowSettings | None = None) -> float:
    """Max relative deviation of G1 columns from central differences."""
    settings = settings or FlowSettings()
    fd = np.empty((4, 4))
    for c in range(4):
        up = fp.u0.copy()
        dn = fp.u0.copy()
        up[c] += h
        dn[c] -= h
        pu, _ = section_map_once(up, fp.jacobi, mu, settings)
        pd, _ = section_map_once(dn, fp.jacobi, mu, settings)
        fd[:, c] = (pu - pd) / (2.0 * h)
    scale = np.max(np.abs(G1))
    return float(np.max(np.abs(fd - G1)) / scale)


def rotation_numbers(fp: FixedPoint, nf: NormalForm, mu, radii,
                     n_iterations: int = 200,
                     settings: FlowSettings | None = None) -> np.ndarray:
    """Measured per-mode rotation angles from iterating the real map.

    Starts at normal-form radii `radii`, unwraps the pulled-back phases over
    the iteration and fits the mean advance per crossing.
    """
    settings = settings or FlowSettings()
    z = _nf_point(np.asarray(radii, dtype=float), np.array([0.0, 0.0]))
    u = fp.u0 + np.real(nf.to_physical(z))
    angles = np.empty((n_iterations + 1, 2))
    w = nf.from_physical(u - fp.u0)
    angles[0] = [np.angle(w[0]), np.angle(w[2])]
    for n in range(n_iterations):
        u, _ = section_map_once(u, fp.jacobi, mu, settings)
        w = nf.from_physical(u - fp.u0)
        angles[n + 1] = [np.angle(w[0]), np.angle(w[2])]
    unwrapped = np.unwrap(angles, axis=0)
    steps = np.arange(n_iterations + 1)
    return np.array([np.polyfit(steps, unwrapped[:, m], 1)[0] for m in (0, 1)])
