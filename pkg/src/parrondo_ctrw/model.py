"""Process specifications and closed-form analytics.

Three jump processes share Poisson arrivals with rate ``lam``:

* process A (:class:`MemorylessSpec`): i.i.d. jumps from one law ``h_a``;
* process B (:class:`SignMemorySpec`): the next jump is drawn from
  ``law_pos`` after a non-negative jump and from ``law_neg`` after a
  negative one;
* process AB (:class:`MixedSpec`): each jump follows A with probability
  ``r`` and B otherwise, B's law still being selected by the sign of the
  previous jump whichever process produced it.

Every function here is an exact closed form written with plain arithmetic,
so passing ``fractions.Fraction`` parameters yields exact rational results.
The only exception is :func:`optimal_r`, which needs a square root.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from numbers import Real
from typing import Union

from .jumpdist import JumpLaw, mean_jump

__all__ = [
    "DegenerateParametersError",
    "ConstraintViolationError",
    "PreconditionError",
    "SignState",
    "MemorylessSpec",
    "SignMemorySpec",
    "MixedSpec",
    "ProcessSpec",
    "drift_a",
    "beta",
    "drift_b",
    "alpha",
    "drift_ab",
    "drift",
    "drift_rate",
    "positive_probability",
    "solve_unbiased_q0",
    "solve_unbiased_q2",
    "drift_derivative",
    "optimal_r",
    "other_critical_r",
    "sign_flip_r",
    "unbiased_mixed",
    "as_exact",
    "fig1_spec",
    "fig2_spec",
    "fig3_spec",
]


class DegenerateParametersError(ValueError):
    """A closed form has a vanishing denominator for these parameters."""


class ConstraintViolationError(ValueError):
    """An unbiasing solver cannot satisfy its constraint."""


class PreconditionError(ValueError):
    """A formula is used outside the assumptions it was derived under."""


class SignState(enum.Enum):
    """Sign of the last realized jump (the one bit of memory)."""

    POSITIVE = "+"
    NEGATIVE = "-"

    @classmethod
    def of(cls, x) -> "SignState":
        return cls.POSITIVE if x >= 0 else cls.NEGATIVE


def _check_rate(lam):
    if not isinstance(lam, Real) or lam != lam or math.isinf(lam) or lam <= 0:
        raise ValueError(f"arrival rate must be a positive finite real, got {lam!r}")


def _check_time(t):
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t!r}")


@dataclass(frozen=True)
class MemorylessSpec:
    """Process A: compound Poisson with jump law ``law``."""

    lam: Real
    law: JumpLaw

    def __post_init__(self):
        _check_rate(self.lam)


@dataclass(frozen=True)
class SignMemorySpec:
    """Process B: ``law_pos`` follows a non-negative jump, ``law_neg`` a negative one."""

    lam: Real
    law_pos: JumpLaw
    law_neg: JumpLaw

    def __post_init__(self):
        _check_rate(self.lam)


@dataclass(frozen=True)
class MixedSpec:
    """Process AB: random mixture of A (probability ``r``) and B.

    The arrival rate is the one carried by ``b``; a single Poisson clock
    drives every jump of the mixture.
    """

    r: Real
    a_law: JumpLaw
    b: SignMemorySpec

    def __post_init__(self):
        if not isinstance(self.r, Real) or self.r != self.r or not 0 <= self.r <= 1:
            raise ValueError(f"mixing probability r must lie in [0, 1], got {self.r!r}")

    @property
    def lam(self):
        return self.b.lam

    @property
    def a(self) -> MemorylessSpec:
        return MemorylessSpec(self.b.lam, self.a_law)

    def with_r(self, r) -> "MixedSpec":
        return replace(self, r=r)


ProcessSpec = Union[MemorylessSpec, SignMemorySpec, MixedSpec]


def drift_a(spec: MemorylessSpec, t):
    """Mean of process A at time ``t``: ``mu_0 * lam * t``."""
    _check_time(t)
    return mean_jump(spec.law) * spec.lam * t


def beta(b: SignMemorySpec):
    """Stationary probability that a jump of process B is non-negative."""
    q1, q2 = b.law_pos.q, b.law_neg.q
    den = 1 - (q1 - q2)
    if den == 0:
        raise DegenerateParametersError("beta is undefined for q1 = 1, q2 = 0")
    return q2 / den


def drift_b(b: SignMemorySpec, t):
    """Mean of process B at time ``t`` started from the stationary sign."""
    _check_time(t)
    w = beta(b)
    return (w * mean_jump(b.law_pos) + (1 - w) * mean_jump(b.law_neg)) * b.lam * t


def alpha(m: MixedSpec):
    """Stationary probability that a jump of the mixture is non-negative.

    Reduces to ``beta(m.b)`` at ``r = 0`` and to ``q0`` at ``r = 1``.
    """
    r, q0 = m.r, m.a_law.q
    q1, q2 = m.b.law_pos.q, m.b.law_neg.q
    den = 1 - (1 - r) * (q1 - q2)
    if den == 0:
        raise DegenerateParametersError("alpha is undefined for r = 0, q1 = 1, q2 = 0")
    return (r * q0 + (1 - r) * q2) / den


def drift_ab(m: MixedSpec, t):
    """Mean of the mixture at time ``t`` started from the stationary sign.

    This is ``r*mu_a(t) + (1-r)*[alpha*mu_1 + (1-alpha)*mu_2]*lam*t``; it
    differs from ``r*mu_a(t) + (1-r)*mu_b(t)`` whenever ``alpha != beta``.
    """
    _check_time(t)
    w = alpha(m)
    mu1, mu2 = mean_jump(m.b.law_pos), mean_jump(m.b.law_neg)
    return m.r * mean_jump(m.a_law) * m.lam * t + (1 - m.r) * (w * mu1 + (1 - w) * mu2) * m.lam * t


def drift(spec: ProcessSpec, t):
    """Closed-form mean at time ``t`` for any process spec."""
    if isinstance(spec, MemorylessSpec):
        return drift_a(spec, t)
    if isinstance(spec, SignMemorySpec):
        return drift_b(spec, t)
    if isinstance(spec, MixedSpec):
        return drift_ab(spec, t)
    raise TypeError(f"not a process spec: {spec!r}")


def drift_rate(spec: ProcessSpec):
    """Drift per unit time (the mean is linear in ``t`` for all three processes)."""
    return drift(spec, 1)


def positive_probability(spec: ProcessSpec):
    """Stationary probability of a non-negative jump: ``q0``, ``beta`` or ``alpha``."""
    if isinstance(spec, MemorylessSpec):
        return spec.law.q
    if isinstance(spec, SignMemorySpec):
        return beta(spec)
    if isinstance(spec, MixedSpec):
        return alpha(spec)
    raise TypeError(f"not a process spec: {spec!r}")


def solve_unbiased_q0(gamma0, eta0):
    """Upward probability that makes the memoryless law zero-mean."""
    if gamma0 <= 0 or eta0 <= 0:
        raise ValueError("rates must be positive")
    return gamma0 / (gamma0 + eta0)


def solve_unbiased_q2(q1, gamma1, eta1, gamma2, eta2):
    """Choose ``q2`` so that process B has zero drift.

    For ``gamma2 <= eta1`` any ``q1 < 1`` works. For ``gamma2 > eta1`` the
    solution only lies in [0, 1] when ``q1`` is at least
    ``(1/eta1 - 1/gamma2) / (1/eta1 - 1/gamma2 + 1/gamma1)``. At the bound
    itself the answer is ``q2 = 1``, which still unbiases B exactly.

    Raises:
        ValueError: ``q1`` outside [0, 1) or a non-positive rate.
        ConstraintViolationError: ``gamma2 > eta1`` and ``q1`` is below the bound.
    """
    if not 0 <= q1 < 1:
        raise ValueError(f"q1 must lie in [0, 1), got {q1!r}")
    if min(gamma1, eta1, gamma2, eta2) <= 0:
        raise ValueError("rates must be positive")
    if gamma2 > eta1:
        gap = 1 / eta1 - 1 / gamma2
        bound = gap / (gap + 1 / gamma1)
        if q1 < bound:
            raise ConstraintViolationError(
                f"gamma2 > eta1 requires q1 >= {float(bound):.6g}, got q1 = {float(q1):.6g}"
            )
    q2 = 1 / (1 + eta2 * (1 / gamma2 - 1 / eta1 + (1 / gamma1) * q1 / (1 - q1)))
    # round-off right at the bound can push a float result just past 1
    return min(q2, 1) if isinstance(q2, float) else q2


def _require_unbiased(m: MixedSpec, tol=1e-9):
    da = drift_a(m.a, 1)
    db = drift_b(m.b, 1)
    if abs(da) > tol or abs(db) > tol:
        raise PreconditionError(
            f"requires unbiased components, got mu_a(1) = {float(da):.3g}, mu_b(1) = {float(db):.3g}"
        )


def drift_derivative(m: MixedSpec, t):
    """Derivative of :func:`drift_ab` with respect to ``r``.

    Only valid when A and B are each unbiased. In that case the mixture
    drift collapses to ``C * r * (1-r) / D(r) * lam * t`` with
    ``C = q0*mu1 + (1-q0)*mu2``, ``d = q1 - q2`` and ``D(r) = 1 - (1-r)*d``,
    whose derivative is::

        -C * (d*r**2 + 2*(1-d)*r - (1-d)) / D(r)**2 * lam * t

    The quadratic factors as ``d*(r - r_minus)*(r - r_other)`` with the roots
    returned by :func:`optimal_r` and :func:`other_critical_r`. Written
    unfactored it stays finite at ``q1 = q2``.

    Raises:
        PreconditionError: either component drifts by more than 1e-9 at t = 1.
    """
    _check_time(t)
    _require_unbiased(m)
    q0 = m.a_law.q
    q1, q2 = m.b.law_pos.q, m.b.law_neg.q
    d = q1 - q2
    c = q0 * mean_jump(m.b.law_pos) + (1 - q0) * mean_jump(m.b.law_neg)
    r = m.r
    den = 1 - (1 - r) * d
    if den == 0:
        raise DegenerateParametersError("drift derivative is undefined for r = 0, q1 = 1, q2 = 0")
    return -c * (d * r * r + 2 * (1 - d) * r - (1 - d)) / (den * den) * m.lam * t


def optimal_r(q1, q2) -> float:
    """Mixing probability that extremizes the drift of two unbiased components.

    The textbook form ``(sqrt(1-d) - (1-d)) / d`` with ``d = q1 - q2`` is 0/0
    at ``q1 = q2``; multiplying through by the conjugate gives
    ``sqrt(1-d) / (1 + sqrt(1-d))``, which equals 1/2 at ``d = 0`` and has no
    cancellation nearby.
    """
    if not (0 <= q1 <= 1 and 0 <= q2 <= 1):
        raise ValueError("q1 and q2 must lie in [0, 1]")
    root = math.sqrt(1 - (q1 - q2))
    return root / (1 + root)


def other_critical_r(q1, q2) -> float:
    """Second root of the drift-derivative numerator, ``-(sqrt(1-d) + 1 - d) / d``.

    Never inside (0, 1]: negative for ``0 < d < 1``, above 1 for ``d < 0``,
    and a double root at 0 together with :func:`optimal_r` when ``d = 1``.
    Returns ``inf`` at ``d = 0`` where the numerator is linear.
    """
    d = q1 - q2
    if d == 0:
        return math.inf
    root = math.sqrt(1 - d)
    return -(root + 1 - d) / d


def sign_flip_r(m: MixedSpec):
    """Mixing probability at which the mixture drift changes sign.

    Solves ``r*mu_0 + (1-r)*[alpha(r)*mu_1 + (1-alpha(r))*mu_2] = 0`` for
    ``r`` when process A is unbiased (``mu_0 = 0``), using that ``alpha`` is
    a Moebius function of ``r``. Returns None when there is no finite root.
    """
    if mean_jump(m.a_law) != 0:
        raise PreconditionError("sign_flip_r assumes an unbiased process A")
    mu1, mu2 = mean_jump(m.b.law_pos), mean_jump(m.b.law_neg)
    if mu1 == mu2:
        return None
    target = -mu2 / (mu1 - mu2)
    q0 = m.a_law.q
    q1, q2 = m.b.law_pos.q, m.b.law_neg.q
    d = q1 - q2
    den = q0 - q2 - target * d
    if den == 0:
        return None
    return (target * (1 - d) - q2) / den


def unbiased_mixed(r, lam, q1, gamma1, eta1, gamma2, eta2, gamma0=1, eta0=1) -> MixedSpec:
    """Build a mixture whose A and B components are both unbiased.

    ``q0`` comes from :func:`solve_unbiased_q0` and ``q2`` from
    :func:`solve_unbiased_q2`.
    """
    q0 = solve_unbiased_q0(gamma0, eta0)
    q2 = solve_unbiased_q2(q1, gamma1, eta1, gamma2, eta2)
    b = SignMemorySpec(lam, JumpLaw(q1, gamma1, eta1), JumpLaw(q2, gamma2, eta2))
    return MixedSpec(r, JumpLaw(q0, gamma0, eta0), b)


def _exact(v):
    return v if isinstance(v, Fraction) else Fraction(str(v))


def as_exact(spec: ProcessSpec) -> ProcessSpec:
    """Copy of ``spec`` with every parameter converted to ``Fraction``.

    Floats are read through their shortest decimal repr, so ``0.02`` becomes
    exactly 1/50.
    """
    def law(x: JumpLaw) -> JumpLaw:
        return JumpLaw(_exact(x.q), _exact(x.gamma), _exact(x.eta))

    if isinstance(spec, MemorylessSpec):
        return MemorylessSpec(_exact(spec.lam), law(spec.law))
    if isinstance(spec, SignMemorySpec):
        return SignMemorySpec(_exact(spec.lam), law(spec.law_pos), law(spec.law_neg))
    if isinstance(spec, MixedSpec):
        return MixedSpec(_exact(spec.r), law(spec.a_law), as_exact(spec.b))
    raise TypeError(f"not a process spec: {spec!r}")


def _figure_spec(q0, q12, r, exact):
    num = Fraction if exact else float
    lam = num(20)
    one = num(1)
    b = SignMemorySpec(lam, JumpLaw(num(q12), num(16), one), JumpLaw(num(q12), one, one))
    return MixedSpec(num(r), JumpLaw(num(q0), one, one), b)


def fig1_spec(r=Fraction(1, 2), exact: bool = False) -> MixedSpec:
    """Unbiased A and B whose mixture drifts upward.

    ``lam = 20``, ``q0 = 1/2``, ``q1 = q2 = 4/5``, ``gamma1 = 16``, every
    other rate 1, ``r = 1/2``. Pass ``exact=True`` for ``Fraction`` fields.
    """
    return _figure_spec(Fraction(1, 2), Fraction(4, 5), r, exact)


def fig2_spec(epsilon=Fraction(1, 50), r=Fraction(1, 2), exact: bool = False) -> MixedSpec:
    """The :func:`fig1_spec` setup with ``q0``, ``q1``, ``q2`` all lowered by ``epsilon``."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon!r}")
    eps = Fraction(epsilon) if exact else epsilon
    return _figure_spec(Fraction(1, 2) - eps, Fraction(4, 5) - eps, r, exact)


def fig3_spec(r, exact: bool = False) -> MixedSpec:
    """Unbiased A, downward-biased B (``q1 = q2 = 39/50``); the drift sign depends on ``r``."""
    return _figure_spec(Fraction(1, 2), Fraction(39, 50), r, exact)
