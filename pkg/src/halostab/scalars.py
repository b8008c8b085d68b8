"""Scalar backends for the jet algebra.

Two families: IEEE binary64 (real ``f64`` / complex ``c128``, numpy dtypes,
compiled convolution) and an extended-precision mode backed by mpmath object
arrays (``mp<bits>`` / ``mpc<bits>``).  The extended mode exists to reproduce
the reference fixed-point digits beyond double precision; everything else in
the pipeline runs at binary64.
"""

from __future__ import annotations

import numpy as np

try:
    import mpmath
except ImportError:  # pragma: no cover
    mpmath = None


class ScalarKind:
    """Field operations + elementary functions for one coefficient type."""

    def __init__(self, name: str, dtype, is_complex: bool, bits: int | None = None):
        self.name = name
        self.dtype = dtype
        self.is_complex = is_complex
        self.bits = bits

    # -- constants -----------------------------------------------------
    @property
    def eps(self) -> float:
        if self.bits is None:
            return float(np.finfo(np.float64).eps)
        return 2.0 ** (1 - self.bits)

    def zeros(self, n: int) -> np.ndarray:
        if self.dtype is not object:
            return np.zeros(n, dtype=self.dtype)
        with mpmath.workprec(self.bits):
            fill = mpmath.mpc(0) if self.is_complex else mpmath.mpf(0)
        out = np.empty(n, dtype=object)
        out[:] = fill
        return out

    def coerce(self, value):
        """Convert a python/numpy scalar to this kind's scalar type."""
        if self.dtype is object:
            with mpmath.workprec(self.bits):
                if self.is_complex:
                    return mpmath.mpc(value)
                return mpmath.mpf(value)
        return self.dtype(value)

    # -- elementary functions on scalars (constant terms) ---------------
    def _mp(self, fn, x):
        with mpmath.workprec(self.bits):
            return fn(x)

    def sqrt(self, x):
        return self._mp(mpmath.sqrt, x) if self.dtype is object else np.sqrt(x)

    def exp(self, x):
        return self._mp(mpmath.exp, x) if self.dtype is object else np.exp(x)

    def log(self, x):
        return self._mp(mpmath.log, x) if self.dtype is object else np.log(x)

    def sin(self, x):
        return self._mp(mpmath.sin, x) if self.dtype is object else np.sin(x)

    def cos(self, x):
        return self._mp(mpmath.cos, x) if self.dtype is object else np.cos(x)

    def power(self, x, alpha):
        if self.dtype is object:
            with mpmath.workprec(self.bits):
                return mpmath.power(x, alpha)
        return x**alpha

    def abs(self, x):
        return abs(x)

    def to_complex(self) -> "ScalarKind":
        if self.is_complex:
            return self
        if self.dtype is object:
            return kind(f"mpc{self.bits}")
        return C128

    def to_real(self) -> "ScalarKind":
        if not self.is_complex:
            return self
        if self.dtype is object:
            return kind(f"mp{self.bits}")
        return F64

    def __repr__(self):
        return f"ScalarKind({self.name})"


F64 = ScalarKind("f64", np.float64, False)
C128 = ScalarKind("c128", np.complex128, True)

_REGISTRY: dict[str, ScalarKind] = {"f64": F64, "c128": C128}


def kind(name: str) -> ScalarKind:
    """Look up a scalar kind: 'f64', 'c128', 'mp<bits>', 'mpc<bits>'."""
    if name in _REGISTRY:
        return _REGISTRY[name]
    for prefix, is_c in (("mpc", True), ("mp", False)):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            bits = int(name[len(prefix):])
            if bits < 96:
                raise ValueError(f"extended precision needs >= 96 bits, got {bits}")
            if mpmath is None:  # pragma: no cover
                raise RuntimeError("mpmath is required for extended precision")
            k = ScalarKind(name, object, is_c, bits)
            _REGISTRY[name] = k
            return k
    raise ValueError(f"unknown scalar kind {name!r}")


def promote(a: ScalarKind, b: ScalarKind) -> ScalarKind:
    """Common kind for mixed arithmetic."""
    if a is b:
        return a
    bits = max(a.bits or 0, b.bits or 0) or None
    is_c = a.is_complex or b.is_complex
    if bits is None:
        return C128 if is_c else F64
    return kind(("mpc" if is_c else "mp") + str(bits))
