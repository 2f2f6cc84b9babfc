"""Asymmetric double-exponential jump law.

A jump is non-negative with probability ``q`` and then distributed as
``Exponential(gamma)``; otherwise it is the negative of an
``Exponential(eta)`` draw::

    h(x) = q * gamma * exp(-gamma * x)        x >= 0
         = (1 - q) * eta * exp(eta * x)       x <  0

The same family is used for the memoryless law of process A and for the two
sign-conditional laws of process B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real

import numpy as np

__all__ = [
    "JumpLaw",
    "density",
    "mean_jump",
    "sample_jump",
    "cf_jump",
    "draw_from_uniforms",
    "is_positive",
]


def _is_nan(v) -> bool:
    return v != v


@dataclass(frozen=True)
class JumpLaw:
    """Parameters of an asymmetric double-exponential jump law.

    Values are validated once at construction, so the hot loops in
    :mod:`parrondo_ctrw.simulate` never re-check them. Exact rationals
    (``fractions.Fraction``) are accepted and preserved, which lets the
    closed forms in :mod:`parrondo_ctrw.model` be evaluated exactly.

    Attributes:
        q: probability of a non-negative jump, in [0, 1].
        gamma: inverse mean size of upward jumps, > 0.
        eta: inverse mean size of downward jumps, > 0.
    """

    q: Real
    gamma: Real
    eta: Real

    def __post_init__(self):
        for name in ("q", "gamma", "eta"):
            v = getattr(self, name)
            if not isinstance(v, Real) or _is_nan(v) or math.isinf(v):
                raise ValueError(f"JumpLaw.{name} must be a finite real, got {v!r}")
        if not 0 <= self.q <= 1:
            raise ValueError(f"JumpLaw.q must lie in [0, 1], got {self.q!r}")
        if self.gamma <= 0:
            raise ValueError(f"JumpLaw.gamma must be positive, got {self.gamma!r}")
        if self.eta <= 0:
            raise ValueError(f"JumpLaw.eta must be positive, got {self.eta!r}")

    @property
    def mean(self):
        return mean_jump(self)


def is_positive(x):
    """Sign convention: a zero-size jump counts as positive."""
    return x >= 0


def density(law: JumpLaw, x):
    """Probability density of ``law`` at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    q, g, e = float(law.q), float(law.gamma), float(law.eta)
    # evaluate each branch only where it applies so large |x| never overflows
    up = np.where(x >= 0, x, 0.0)
    down = np.where(x < 0, x, 0.0)
    out = np.where(x >= 0, q * g * np.exp(-g * up), (1.0 - q) * e * np.exp(e * down))
    return out if out.ndim else float(out)


def mean_jump(law: JumpLaw):
    """Mean jump size ``q/gamma - (1-q)/eta``."""
    return law.q / law.gamma - (1 - law.q) / law.eta


def cf_jump(law: JumpLaw, omega):
    """Characteristic function ``E[exp(i*omega*J)]``.

    ``omega`` may be real or complex, scalar or array.
    """
    iw = 1j * np.asarray(omega)
    q, g, e = float(law.q), float(law.gamma), float(law.eta)
    out = q * g / (g - iw) + (1.0 - q) * e / (e + iw)
    return out if np.ndim(out) else complex(out)


def draw_from_uniforms(q, gamma, eta, u_sign, u_size):
    """Map two uniform streams to jump sizes by inverse CDF.

    All arguments broadcast, so per-event parameter arrays (as used by the
    sign-memory sampler) work the same as scalars.

    Args:
        q, gamma, eta: law parameters, scalars or arrays.
        u_sign: uniforms in [0, 1); the jump is upward when ``u_sign < q``.
        u_size: uniforms in (0, 1]; ``-log(u_size)`` is a unit exponential.

    Returns:
        Array of jump sizes.
    """
    up = u_sign < q
    e = -np.log(u_size)
    return np.where(up, e / gamma, -e / eta)


def sample_jump(law: JumpLaw, rng: np.random.Generator, size=None):
    """Draw jump sizes from ``law`` using ``rng``.

    Returns a float when ``size`` is None, else an array of that shape.
    """
    u_sign = rng.random(size)
    # 1 - U maps [0, 1) onto (0, 1] so the logarithm stays finite
    u_size = 1.0 - rng.random(size)
    out = draw_from_uniforms(float(law.q), float(law.gamma), float(law.eta), u_sign, u_size)
    return float(out) if size is None else out
