"""Closed-form busy-busy correlations in the Laplace domain.

Everything is expressed through the root ``x(omega)`` of

    omega = mu (x - rho - 1) + mu rho / x,      0 < x <= rho,

(the branch with ``x(0) = rho``).  Multiplying through by ``x`` gives the
factored form ``omega x = mu (1 - x)(rho - x)`` which several identities
below rely on.

Sign of the first-order coupling term
-------------------------------------
For a feed from queue ``beta`` into queue ``alpha`` with strength
``dL = r[beta->alpha] mu[beta] > 0`` the exact truncated-chain oracle gives

    C_ab(omega) = rho_a rho_b / omega + eps * dL * rho_b * B_a * B_b + O(eps^2)

with ``B = x/(mu rho (1-x)) + (x - rho)/omega = -A``.  Written with the
``A`` bracket this is ``-eps dL rho_b A_a B_b``: a busy upstream server
raises the chance that the downstream server is busy later, so the
correction is positive.  Taking ``+dL A_a B_b`` instead flips the sign of
the correction and is rejected by the oracle (its error then scales like
``p`` instead of ``p**2``; see tests/test_analytics.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import FormMismatch

FORM_RTOL = 1e-12
PROVENANCES = ("theory-order0", "theory-order1", "oracle", "simulation")


def root_and_gap(mu, rho, omega):
    """Return ``(x, rho - x)`` without cancellation for any ``omega >= 0``.

    Uses ``x = 2 rho / (s + sqrt(d))`` with ``s = omega/mu + rho + 1`` and the
    discriminant expanded as a sum of non-negative terms.  ``rho - x`` is
    rationalized so it stays accurate when ``omega`` is tiny.
    """
    mu = np.asarray(mu, dtype=float)
    rho = np.asarray(rho, dtype=float)
    w = np.asarray(omega, dtype=float) / mu
    s = w + rho + 1.0
    root_d = np.sqrt(w * w + 2.0 * w * (rho + 1.0) + (1.0 - rho) ** 2)
    denom = s + root_d
    x = 2.0 * rho / denom
    # s + sqrt(d) - 2 = w + (sqrt(d) - (1 - rho)), the bracket rationalized
    excess = w + w * (w + 2.0 * (rho + 1.0)) / (root_d + (1.0 - rho))
    gap = rho * excess / denom
    if x.ndim == 0:
        return float(x), float(gap)
    return x, gap


def x_root(mu, rho, omega):
    return root_and_gap(mu, rho, omega)[0]


def forx_residual(mu, rho, omega, x) -> float:
    """|omega - mu (x - rho - 1) - mu rho / x| evaluated in exact arithmetic."""
    mu_, rho_, om_, x_ = (Fraction(float(v)) for v in (mu, rho, omega, x))
    return float(abs(om_ - mu_ * (x_ - rho_ - 1) - mu_ * rho_ / x_))


def _polish(mu: float, rho: float, omega: float, x: float) -> float:
    # one exact Newton step on omega x - mu (1-x)(rho-x); lands on the
    # correctly rounded root so the residual stays at the rounding floor
    mu_, rho_, om_, x_ = (Fraction(v) for v in (mu, rho, omega, x))
    f = om_ * x_ - mu_ * (1 - x_) * (rho_ - x_)
    df = om_ + mu_ * (1 + rho_ - 2 * x_)
    return float(x_ - f / df)


@dataclass(frozen=True)
class SpectralPoint:
    mu: float
    rho: float
    omega: float
    x: float

    @property
    def residual(self) -> float:
        return forx_residual(self.mu, self.rho, self.omega, self.x)


def x_of_omega(mu: float, rho: float, omega: float) -> SpectralPoint:
    """The convergent root x(omega), accurate to the last bit."""
    if not (mu > 0 and 0 < rho < 1 and omega >= 0):
        raise ValueError(f"need mu > 0, 0 < rho < 1, omega >= 0; got {mu}, {rho}, {omega}")
    x = _polish(float(mu), float(rho), float(omega), x_root(mu, rho, omega))
    return SpectralPoint(float(mu), float(rho), float(omega), x)


def mm1_busy_corr_forms(mu, rho, omega):
    """The single-queue correlation by two closed forms.

    Returns ``(sum_form, product_form)``:
    ``rho * (x/(mu rho (1-x)) + x/omega)`` and
    ``x (rho + rho x - x) / (mu (1-x)(rho-x))``.
    """
    x, gap = root_and_gap(mu, rho, omega)
    sum_form = rho * (x / (mu * rho * (1.0 - x)) + x / omega)
    product_form = x * (rho + rho * x - x) / (mu * (1.0 - x) * gap)
    return sum_form, product_form


def mm1_busy_corr(mu, rho, omega):
    """Laplace transform of Prob(busy at 0 and busy at t) for one M/M/1 queue.

    Raises FormMismatch if the two closed forms disagree beyond 1e-12
    relative, which would indicate a bug rather than a property of the input.
    """
    a, b = mm1_busy_corr_forms(mu, rho, omega)
    rel = np.abs(a - b) / np.maximum(np.abs(a), np.abs(b))
    if np.any(rel > FORM_RTOL):
        raise FormMismatch(f"closed forms disagree, max relative gap {np.max(rel):.3g}")
    return a


def c0_cross(rho_alpha, rho_beta, omega):
    """Zeroth-order cross correlation rho_a rho_b / omega."""
    out = rho_alpha * rho_beta / np.asarray(omega, dtype=float)
    return float(out) if out.ndim == 0 else out


def bracket_A(mu, rho, omega):
    """``(rho - x)/omega - x/(mu rho (1-x))`` = rho/omega - <I|Q g a+|rho>."""
    x, gap = root_and_gap(mu, rho, omega)
    return gap / omega - x / (mu * rho * (1.0 - x))


def bracket_B(mu, rho, omega):
    """``x/(mu rho (1-x)) + (x - rho)/omega`` = <I|Q g a+|rho> - rho/omega."""
    x, gap = root_and_gap(mu, rho, omega)
    return x / (mu * rho * (1.0 - x)) - gap / omega


def coupling_response(mu_alpha, rho_alpha, mu_beta, rho_beta, omega):
    """First-order response per unit coupling, ``-rho_b A_a B_b``.

    Multiplying by ``eps * dL[beta, alpha]`` gives the first-order term of the
    cross correlation.  This is also the type-2 collapse normalizer.
    """
    return -rho_beta * bracket_A(mu_alpha, rho_alpha, omega) * bracket_B(mu_beta, rho_beta, omega)


def cross_corr_first_order(params_alpha, params_beta, deltaL_beta_alpha, epsilon=1.0, omega=1.0):
    """Cross correlation through first order in the coupling.

    ``params_*`` are ``(mu, rho)`` pairs; ``deltaL_beta_alpha`` is
    ``r[beta->alpha] * mu[beta]``.
    """
    mu_a, rho_a = params_alpha
    mu_b, rho_b = params_beta
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    order0 = rho_a * rho_b / np.asarray(omega, dtype=float)
    order1 = coupling_response(mu_a, rho_a, mu_b, rho_b, omega)
    out = order0 + epsilon * deltaL_beta_alpha * order1
    return float(out) if np.ndim(out) == 0 else out


def mean_busy_period(mu: float, rho: float) -> float:
    """Mean busy period 1/(mu (1 - rho)); unchanged by network coupling."""
    if not (mu > 0 and 0 <= rho < 1):
        raise ValueError("need mu > 0 and 0 <= rho < 1")
    return 1.0 / (mu * (1.0 - rho))


@dataclass
class CorrelationCurve:
    alpha: int
    beta: int
    omega: np.ndarray
    value: np.ndarray
    provenance: str
    stderr: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.omega.shape != self.value.shape:
            raise ValueError("omega and value must have the same shape")
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("omega must be strictly increasing")
        if not np.all(np.isfinite(self.value)):
            raise ValueError("values must be finite")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.value.shape:
                raise ValueError("stderr must match value")
        elif self.provenance == "simulation":
            raise ValueError("simulation curves need stderr")

    def points(self):
        return list(zip(self.omega.tolist(), self.value.tolist()))


def theory_curves(spec, alpha: int, beta: int, omegas, epsilon: float = 1.0):
    """Order-0 (and, off the diagonal, order-1) theory curves for a pair."""
    omegas = np.asarray(omegas, dtype=float)
    mu, rho = spec.mu, spec.rho
    if alpha == beta:
        zero = mm1_busy_corr(mu[alpha], rho[alpha], omegas)
        return [CorrelationCurve(alpha, beta, omegas, zero, "theory-order0")]
    zero = rho[alpha] * rho[beta] / omegas
    dL = spec.routing[beta, alpha] * mu[beta]
    first = cross_corr_first_order((mu[alpha], rho[alpha]), (mu[beta], rho[beta]), dL, epsilon, omegas)
    return [
        CorrelationCurve(alpha, beta, omegas, zero, "theory-order0"),
        CorrelationCurve(alpha, beta, omegas, np.broadcast_to(first, omegas.shape), "theory-order1"),
    ]
