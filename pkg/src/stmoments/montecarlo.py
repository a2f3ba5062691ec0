"""Euler-Maruyama ensembles for the scalar model SDEs and the spectral SPDE."""
from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .closed_form import ScalarParams
from .spde import NoiseModel, SpectralSpace, default_initial, sigma_tensor


@dataclass(frozen=True)
class McConfig:
    R: int = 1000
    k_mc: float = 2.0**-8
    seed: int = 0
    kappa: int = 8
    chunk: int = 1024
    threads: int = 1

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.k_mc <= 0:
            raise ValueError("k_mc must be positive")


@dataclass
class Ensemble:
    times: np.ndarray
    paths: np.ndarray      # (R, n_times) or (R, n_times, P)

    @property
    def R(self) -> int:
        return self.paths.shape[0]


def _n_steps(T: float, k: float) -> int:
    n = int(round(T / k))
    if abs(n * k - T) > 1e-9 * T:
        raise ValueError("k_mc must divide T")
    return n


def _chunks(R: int, size: int):
    return [(c, min(size, R - c * size)) for c in range((R + size - 1) // size)]


def _run_chunks(fn, cfg: McConfig):
    """Each chunk draws from its own stream SeedSequence([seed, chunk]); output is thread-count independent."""
    jobs = _chunks(cfg.R, cfg.chunk)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            parts = list(ex.map(lambda j: fn(*j), jobs))
    else:
        parts = [fn(*j) for j in jobs]
    return np.concatenate(parts, axis=0)


def simulate_scalar(p: ScalarParams, model: str, cfg: McConfig,
                    record_every: int = 1) -> Ensemble:
    """X_{j+1} = X_j - lam X_j k + (mu or rho X_j) dW_j."""
    if model not in ("additive", "multiplicative"):
        raise ValueError(f"unknown model {model!r}")
    n = _n_steps(p.T, cfg.k_mc)
    k = cfg.k_mc
    idx = np.arange(0, n + 1, record_every)
    if idx[-1] != n:
        idx = np.append(idx, n)
    var0 = max(p.EX0sq - p.EX0**2, 0.0)

    def run(chunk, m):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chunk]))
        X = p.EX0 + np.sqrt(var0) * rng.standard_normal(m) if var0 > 0 else np.full(m, p.EX0)
        out = np.empty((m, idx.size))
        j_out = 0
        if idx[0] == 0:
            out[:, 0] = X
            j_out = 1
        for j in range(1, n + 1):
            dW = np.sqrt(k) * rng.standard_normal(m)
            noise = p.mu * dW if model == "additive" else p.rho * X * dW
            X = X - p.lam * X * k + noise
            if j_out < idx.size and idx[j_out] == j:
                out[:, j_out] = X
                j_out += 1
        return out

    return Ensemble(idx * k, _run_chunks(run, cfg))


def empirical_second_moment(ens: Ensemble, i: Optional[int] = None, j: Optional[int] = None):
    """M_R(s,t) = mean of X(s) X(t); with i, j None the full matrix on the recorded times."""
    X = ens.paths
    if i is None:
        return X.T @ X / ens.R
    return float(np.mean(X[:, i] * X[:, j]))


def second_moment_stderr(ens: Ensemble, i: int, j: int) -> float:
    """sqrt(Var(X(s)X(t)) / R) estimated from the ensemble."""
    prod = ens.paths[:, i] * ens.paths[:, j]
    return float(np.std(prod, ddof=1) / np.sqrt(ens.R)) if ens.R > 1 else float("nan")


def diagonal_summary(ens: Ensemble):
    """(t, mean, second_moment_diag, stderr) columns."""
    X = ens.paths
    mean = X.mean(axis=0)
    m2 = np.mean(X**2, axis=0)
    se = np.std(X**2, axis=0, ddof=1) / np.sqrt(ens.R) if ens.R > 1 else np.full(mean.shape, np.nan)
    return ens.times, mean, m2, se


def summary_csv(ens: Ensemble) -> str:
    buf = io.StringIO()
    buf.write("t,mean,second_moment_diag,stderr\n")
    for row in zip(*diagonal_summary(ens)):
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()


def strong_error_bound(var_diag: np.ndarray, times: np.ndarray, T: float, R: int) -> float:
    """(T/R) int Var(X(t)^2) dt, a bound for E delta(|M - M_R|)^2."""
    return float(T / R * np.trapezoid(var_diag, times))


def simulate_spde(space: SpectralSpace, noise: NoiseModel, cfg: McConfig, T: float = 1.0,
                  x0: Optional[np.ndarray] = None, record_every: int = 1) -> Ensemble:
    """Modal Euler-Maruyama for the coefficients a_p of X in the phi_p basis.

    da_p = -lam_p a_p dt + sum_nu amp_nu sum_r sigma^nu_{p,r} a_r dW_nu.
    """
    lam = space.eigenvalues
    k = cfg.k_mc
    if lam.max() * k >= 2.0:
        raise ValueError("explicit Euler-Maruyama unstable: need k_mc * lam_P < 2")
    n = _n_steps(T, k)
    S = sigma_tensor(space, noise)                     # (kappa, P, P)
    amp = noise.amplitudes()
    Samp = amp[:, None, None] * S
    x0 = space.project(default_initial) if x0 is None else np.asarray(x0, dtype=float)
    idx = np.arange(0, n + 1, record_every)
    if idx[-1] != n:
        idx = np.append(idx, n)

    def run(chunk, m):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chunk]))
        a = np.tile(x0, (m, 1))
        out = np.empty((m, idx.size, space.P))
        j_out = 0
        if idx[0] == 0:
            out[:, 0] = a
            j_out = 1
        for j in range(1, n + 1):
            dW = np.sqrt(k) * rng.standard_normal((m, noise.kappa))
            a = a - k * lam * a + np.einsum("mv,vpr,mr->mp", dW, Samp, a)
            if j_out < idx.size and idx[j_out] == j:
                out[:, j_out] = a
                j_out += 1
        return out

    return Ensemble(idx * k, _run_chunks(run, cfg))
