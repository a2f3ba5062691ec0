"""Exact moments and norms for the scalar model equations.

Additive model:        dX + lam X dt = mu dW
Multiplicative model:  dX + lam X dt = rho X dW
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Callable, Sequence

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class ScalarParams:
    lam: float
    mu: float = 0.0
    rho: float = 0.0
    T: float = 1.0
    EX0: float = 1.0
    EX0sq: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.EX0sq < self.EX0**2 - 1e-14 * max(1.0, self.EX0**2):
            raise ValueError("EX0sq must be >= EX0^2")

    @property
    def rho2(self) -> float:
        return self.rho**2


def _nearly_zero(x: float, lam: float) -> bool:
    return abs(x) < 1e-12 * 2 * lam


def first_moment(p: ScalarParams, t):
    return np.exp(-p.lam * np.asarray(t, dtype=float)) * p.EX0


def second_moment(model: str, p: ScalarParams, s, t):
    """E[X(s) X(t)], broadcasting over s and t."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lam = p.lam
    if model == "additive":
        return np.exp(-lam * (s + t)) * p.EX0sq + p.mu**2 / (2 * lam) * (
            np.exp(-lam * np.abs(t - s)) - np.exp(-lam * (t + s)))
    if model == "multiplicative":
        return np.exp(-lam * (t + s) + p.rho2 * np.minimum(s, t)) * p.EX0sq
    raise ValueError(f"unknown model {model!r}")


def expected_L2_norm_sq(model: str, p: ScalarParams) -> float:
    lam, T = p.lam, p.T
    if model == "additive":
        return (-np.expm1(-2 * lam * T) / (2 * lam) * p.EX0sq
                + p.mu**2 / (4 * lam**2) * (np.exp(-2 * lam * T) + 2 * lam * T - 1))
    if model == "multiplicative":
        x = p.rho2 - 2 * lam
        if _nearly_zero(x, lam):
            return T * p.EX0sq
        return np.expm1(x * T) / x * p.EX0sq
    raise ValueError(f"unknown model {model!r}")


def continuous_stability_constant(lam: float, rho2: float, T: float) -> float:
    """(rho^2 e^{(rho^2-2lam)T} - 2lam)/(rho^2 - 2lam), with the limit rho^2 T + 1."""
    x = rho2 - 2 * lam
    if _nearly_zero(x, lam):
        return rho2 * T + 1.0
    # rewritten as rho^2 expm1(xT)/x + 1 to avoid cancellation near x = 0
    return rho2 * np.expm1(x * T) / x + 1.0


@dataclass(frozen=True)
class DualNorms:
    delta_minus2: float
    delta_minus_eps: float
    point_minus_eps: float


def delta_dual_norms(lam: float, T: float) -> DualNorms:
    """Dual norms of the trace functional delta and of the point functional v(0)v(0)."""
    a = 2 * lam * T
    inner = 2 * a - 5 + (4 * a + 4) * np.exp(-a) + np.exp(-2 * a)
    if a < 5e-2:
        # Taylor series of the bracket; the closed form cancels catastrophically here
        inner = a**4 * (1 / 6 - 2 * a / 15 + 11 * a**2 / 180 - 13 * a**3 / 630 + 19 * a**4 / 3360)
    d2 = np.sqrt(inner) / (4 * lam)
    deps = (np.expm1(-a) + a) / (4 * lam)
    point = -0.5 * np.expm1(-a)
    return DualNorms(float(d2), float(deps), float(point))


def sharpness_witness_psi(lam: float, T: float, t):
    """psi(t) = sinh(lam (T - t)) / sinh(lam T); psi(0) = 1, psi(T) = 0."""
    t = np.asarray(t, dtype=float)
    # exp form stays finite for large lam T
    num = np.exp(-lam * t) * -np.expm1(-2 * lam * (T - t))
    den = -np.expm1(-2 * lam * T)
    return num / den


def psi_F_norm(lam: float, T: float) -> float:
    """||psi||_F = sqrt(coth(lam T) + 1)."""
    return float(np.sqrt(1.0 / np.tanh(lam * T) + 1.0))


def psi_F_norm_quadrature(lam: float, T: float) -> float:
    """Independent check of psi_F_norm: ||v||_F^2 = lam^-1 ||v'||^2 + lam ||v||^2 + v(0)^2."""
    def dpsi(t):
        return -lam * np.cosh(lam * (T - t)) / np.sinh(lam * T)

    a, _ = integrate.quad(lambda t: dpsi(t) ** 2, 0, T, epsabs=1e-13, epsrel=1e-13, limit=200)
    b, _ = integrate.quad(lambda t: sharpness_witness_psi(lam, T, t) ** 2, 0, T,
                          epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(np.sqrt(a / lam + lam * b + 1.0))


# ---------------------------------------------------------------------------
# exponential polynomials: sum_j P_j(t) exp(a_j t)


@dataclass(frozen=True)
class ExpPolynomial:
    """g(t) = sum_j P_j(t) exp(rate_j t), P_j given by ascending coefficients."""
    terms: tuple

    @classmethod
    def exp(cls, coef: float, rate: float) -> "ExpPolynomial":
        return cls(((np.array([float(coef)]), float(rate)),))

    @classmethod
    def const(cls, c: float) -> "ExpPolynomial":
        return cls.exp(c, 0.0)

    def __add__(self, other: "ExpPolynomial") -> "ExpPolynomial":
        return ExpPolynomial(self.terms + other.terms)

    def scale(self, c: float) -> "ExpPolynomial":
        return ExpPolynomial(tuple((c * P, a) for P, a in self.terms))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for P, a in self.terms:
            out = out + np.polynomial.polynomial.polyval(t, P) * np.exp(a * t)
        return out


def _int_pow_exp(k: int, beta: float, t):
    """int_0^t r^k e^{beta r} dr."""
    t = np.asarray(t, dtype=float)
    x = beta * t
    out = np.empty_like(t)
    small = np.abs(x) <= 1.0
    if np.any(small):
        ts = t[small]
        xs = x[small]
        acc = np.zeros_like(ts)
        term = ts ** (k + 1) / (k + 1)
        j = 0
        while True:
            acc += term
            j += 1
            term = term * xs / j * (k + j) / (k + j + 1)
            if np.all(np.abs(term) <= 1e-17 * np.abs(acc)) or j > 60:
                break
        out[small] = acc
    if np.any(~small):
        tb = t[~small]
        # e^{beta t} sum_i (-1)^i k!/(k-i)! t^{k-i} / beta^{i+1} - (-1)^k k!/beta^{k+1}
        s = np.zeros_like(tb)
        for i in range(k + 1):
            s += (-1) ** i * factorial(k) / factorial(k - i) * tb ** (k - i) / beta ** (i + 1)
        out[~small] = np.exp(beta * tb) * s - (-1) ** k * factorial(k) / beta ** (k + 1)
    return out


def exp_kernel_convolve(c: float, g: ExpPolynomial, t):
    """int_0^t e^{-c(t-r)} g(r) dr for an exponential polynomial g, evaluated exactly."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for P, a in g.terms:
        beta = a + c
        for k, pk in enumerate(P):
            if pk == 0.0:
                continue
            # split exponent so e^{-ct} e^{beta r} does not overflow for large c
            if abs(beta) * np.max(t, initial=0.0) > 600.0:
                # integrate in shifted variable r' = t - r
                part = _int_shift(k, a, c, t)
            else:
                part = np.exp(-c * t) * _int_pow_exp(k, beta, t)
            out = out + pk * part
    return out


def _int_shift(k: int, a: float, c: float, t):
    # fallback: adaptive quadrature per point (rare; very large rates only)
    vals = [integrate.quad(lambda r: np.exp(-c * (tt - r) + a * r) * r**k, 0.0, tt,
                           epsabs=1e-14, epsrel=1e-13, limit=400)[0] for tt in np.ravel(t)]
    return np.reshape(vals, np.shape(t))


def b_inverse_apply(lam: float, g, t):
    """u(t) = int_0^t e^{-lam(t-s)} g(s) ds, the solution of b(u, v) = int g v.

    g may be an ExpPolynomial (exact), a PiecewisePolynomial (exact) or a callable
    (adaptive quadrature with absolute tolerance 1e-12).
    """
    if isinstance(g, ExpPolynomial):
        return exp_kernel_convolve(lam, g, t)
    if isinstance(g, PiecewisePolynomial):
        return g.exp_convolve(lam, t)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    vals = [integrate.quad(lambda s: np.exp(-lam * (tt - s)) * g(s), 0.0, tt,
                           epsabs=1e-12, epsrel=1e-12, limit=400)[0] for tt in t]
    return np.array(vals)


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Polynomial on each [breaks[i], breaks[i+1]] in powers of (t - breaks[i])."""
    breaks: np.ndarray
    coefs: Sequence[np.ndarray]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.coefs) - 1)
        out = np.empty_like(t)
        for i, P in enumerate(self.coefs):
            m = idx == i
            out[m] = np.polynomial.polynomial.polyval(t[m] - self.breaks[i], P)
        return out

    def exp_convolve(self, lam: float, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for i, P in enumerate(self.coefs):
            a, b = self.breaks[i], self.breaks[i + 1]
            hi = np.clip(t, a, b)
            # int_a^hi e^{-lam(t-s)} P(s-a) ds = e^{-lam(t-hi)} int_0^{hi-a} e^{-lam(hi-a-r)} P(r) dr
            g = ExpPolynomial(((np.asarray(P, dtype=float), 0.0),))
            seg = exp_kernel_convolve(lam, g, hi - a)
            out += np.where(t > a, np.exp(-lam * (t - hi)) * seg, 0.0)
        return out


# ---------------------------------------------------------------------------
# diagonal of the second moment for the multiplicative model


def diagonal_oracle(lam: float, rho2: float, g) -> Callable:
    """U(t,t) = rho^2 int_0^t e^{-(2lam-rho^2)(t-r)} g(r) dr + g(t).

    g is the diagonal of the deterministic part B^{-1} ell.
    """
    c = 2 * lam - rho2
    if isinstance(g, ExpPolynomial):
        return lambda t: rho2 * exp_kernel_convolve(c, g, t) + g(t)

    def f(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        conv = [integrate.quad(lambda r: np.exp(-c * (tt - r)) * g(r), 0.0, tt,
                               epsabs=1e-13, epsrel=1e-12, limit=400)[0] for tt in t]
        return rho2 * np.array(conv) + g(t)

    return f


def point_mass_diagonal(lam: float, w0: float = 1.0) -> ExpPolynomial:
    """Diagonal of B^{-1}(w0 v(0) v(0)): w0 e^{-2 lam t}."""
    return ExpPolynomial.exp(w0, -2 * lam)


def trace_delta_diagonal(lam: float, weight: float = 1.0) -> ExpPolynomial:
    """Diagonal of B^{-1}(weight delta): weight (1 - e^{-2 lam t}) / (2 lam)."""
    return ExpPolynomial.const(weight / (2 * lam)) + ExpPolynomial.exp(-weight / (2 * lam), -2 * lam)


def B_inverse_point_mass(lam: float, s, t):
    return np.exp(-lam * (np.asarray(s) + np.asarray(t)))


def B_inverse_delta(lam: float, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return (np.exp(-lam * np.abs(t - s)) - np.exp(-lam * (t + s))) / (2 * lam)


def eta_spike_ratios(lam: float, rho2: float, T: float, etas) -> np.ndarray:
    """||U||_pi / (C ||ell||_-eps) for ell = eta^-1 B(chi_(0,eta) (x) chi_(0,eta)).

    Here B^{-1} ell has diagonal g = eta^-1 chi_(0,eta), so ||ell||_-eps = lam
    and ||U||_pi = lam int (rho^2 f + g).  The ratio tends to 1 as eta -> 0.
    """
    c = 2 * lam - rho2
    C = continuous_stability_constant(lam, rho2, T)
    out = []
    for eta in etas:
        # int_0^T f = int_0^eta g(r) int_r^T e^{-c(s-r)} ds dr, inner integral by quadrature
        def inner(r):
            return integrate.quad(lambda s: np.exp(-c * (s - r)), r, T, epsabs=1e-14, epsrel=1e-13)[0]

        F = integrate.quad(inner, 0.0, eta, epsabs=1e-14, epsrel=1e-13)[0] / eta
        out.append((rho2 * F + 1.0) / C)
    return np.array(out)
