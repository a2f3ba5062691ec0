import itertools

import numpy as np
import pytest
import scipy.linalg as sla

from stmoments.basis import PGBasis, gamma_sigma, infsup_gamma
from stmoments.closed_form import continuous_stability_constant
from stmoments.mesh import random_mesh, refine_to_ratio, uniform_mesh
from stmoments.stability import (P1_SCHEMES, _local_constants, d_threshold, discrete_stability_constant,
                                 growth_factor, infsup_scan, scheme_constants, scheme_spec,
                                 table_constants)
from stmoments.trace import TraceOperator

ZS = [1e-3, 1e-2, 1e-1, 1.0, 10.0]
QS = [0.0, 0.25, 0.5, 1.0, 2.0]


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


@pytest.mark.parametrize("scheme", P1_SCHEMES)
@pytest.mark.parametrize("z,q", list(itertools.product(ZS, QS)))
def test_table_vs_assembled(scheme, z, q):
    lam = 3.0
    k = z / lam
    D, alpha, beta, theta, Dn = _local_constants(scheme, lam, 2 * lam * q, k)
    lD, Dt, am1, bt, tht = table_constants(scheme, z, q)
    assert np.allclose(lam * Dn, lD, atol=1e-12)
    assert close(D, Dt)
    assert close(theta, tht)
    if abs(Dt) < 1e-8:
        return   # beta and alpha are singular at D = 0
    assert close(beta, bt, 1e-12 * max(1.0, abs(1 / Dt)))
    assert close(alpha - 1, am1, 1e-12 * max(1.0, abs(1 / Dt)))


def test_named_examples():
    z, q = 0.3, 0.4
    _, D, _, beta, theta = table_constants("CN", z, q)
    assert D == pytest.approx((1 + z / 2) ** 2 - 2 / 3 * q * z)
    assert theta == pytest.approx((z / 2 - 1) / (z / 2 + 1))
    assert beta == pytest.approx((1 + z / 2) ** 2 / D)
    for sc in ("iE", "iE/Q", "iE/box"):
        _, D, _, beta, theta = table_constants(sc, z, q)
        assert theta == pytest.approx(-1 / (1 + z))
        assert beta == pytest.approx((1 + z) ** 2 / (4 * D))
    _, D, am1, beta, _ = table_constants("CN", z, 0.0)
    assert am1 == pytest.approx(-2 * z / D) and beta == pytest.approx(1.0)


@pytest.mark.parametrize("scheme", P1_SCHEMES)
@pytest.mark.parametrize("z,q", list(itertools.product(ZS, QS)))
def test_report_invariants(scheme, z, q):
    lam = 2.0
    r = scheme_constants(scheme, lam, 2 * lam * q, z / lam)
    assert (r.D > 0) == (r.beta > 0)
    if r.beta > 0:
        assert r.alpha >= r.theta**2 - 1e-12


def test_growth_factor_branches():
    b, th, N = 1.3, -0.4, 17
    assert growth_factor(1.0, b, th, N) == pytest.approx(b * (th**2 + N * (1 - th**2)))
    # continuous across the alpha = 1 switch
    assert growth_factor(1 + 1e-9, b, th, N) == pytest.approx(growth_factor(1.0, b, th, N), rel=1e-6)
    a = 0.9
    assert growth_factor(a, b, th, N) == pytest.approx(b * (1 + (a - th**2) * (a ** (N - 1) - 1) / (a - 1)))
    assert discrete_stability_constant(a, b, th, 0.5, N) == pytest.approx(4 * growth_factor(a, b, th, N))


@pytest.mark.parametrize("scheme", P1_SCHEMES)
def test_rho0_constants(scheme):
    r = scheme_constants(scheme, 3.0, 0.0, 2 / 32, 32)
    assert r.beta == pytest.approx(1.0)
    assert r.C_k == pytest.approx(r.gamma_k**-2 * growth_factor(r.alpha, 1.0, r.theta, 32))
    _, D0, am1, _, _ = table_constants(scheme, r.z, 0.0)
    assert r.alpha - 1 == pytest.approx(am1, abs=1e-12)
    assert r.C_continuous == 1.0


@pytest.mark.parametrize("scheme", P1_SCHEMES)
@pytest.mark.parametrize("lam,rho2,N", [(3, 1.5, 16), (3, 1.5, 256), (1, 0.5, 64), (0.5, 3, 32), (10, 0, 8)])
def test_Ck_at_least_one(scheme, lam, rho2, N):
    r = scheme_constants(scheme, lam, rho2, 2.0 / N, N)
    if r.D > 0:
        assert r.C_k >= 1


def test_ie_limit_differs_from_C():
    lam, rho2, T = 3.0, 1.5, 2.0
    N = 2**10
    r = scheme_constants("iE", lam, rho2, T / N, N)
    C = continuous_stability_constant(lam, rho2, T)
    assert abs(r.C_k - C) / C > 0.1
    assert abs(r.growth - C) / C > 0.1


@pytest.mark.parametrize("scheme", ["CN", "iE/Q", "iE/box"])
def test_growth_factor_tends_to_C(scheme):
    lam, rho2, T = 3.0, 1.5, 2.0
    C = continuous_stability_constant(lam, rho2, T)
    errs = []
    for j in (8, 10, 12):
        N = 2**j
        D, a, b, th, _ = _local_constants(scheme, lam, rho2, T / N)
        errs.append(abs(growth_factor(a, b, th, N) - C) / C)
    assert errs[-1] <= 0.02 and errs[0] > errs[-1]


@pytest.mark.parametrize("scheme", P1_SCHEMES)
@pytest.mark.parametrize("lam,rho2", [(3.0, 1.5), (1.0, 8.0), (50.0, 400.0)])
def test_d_threshold(scheme, lam, rho2):
    k0 = d_threshold(scheme, lam, rho2)
    if np.isinf(k0):
        for k in (0.1 / lam, 1 / lam, 10 / lam, 100 / lam):
            assert _local_constants(scheme, lam, rho2, k)[0] > 0
        return
    assert abs(_local_constants(scheme, lam, rho2, k0)[0]) < 1e-9 * lam * k0
    for f in (0.1, 0.5, 0.9):
        assert _local_constants(scheme, lam, rho2, f * k0)[0] > 0
    assert _local_constants(scheme, lam, rho2, 1.1 * k0)[0] < 0


@pytest.mark.parametrize("scheme", P1_SCHEMES)
@pytest.mark.parametrize("lam,N", [(1.0, 8), (3.0, 16), (30.0, 12)])
def test_trivial_range_gives_discrete_infsup(scheme, lam, N):
    fam, p, tr = scheme_spec(scheme)
    B = PGBasis(uniform_mesh(1.0, N), lam, fam, p)
    g = infsup_gamma(B)
    rho2 = 0.95 * 2 * lam * g**2
    r = scheme_constants(scheme, lam, rho2, 1.0 / N, N)
    assert r.trivial_range_ok
    K = np.kron(B.b_mat.toarray(), B.b_mat.toarray()) - rho2 * TraceOperator(B, tr).dense()
    L = sla.cholesky(B.gram_F.toarray(), lower=True)
    LL = np.kron(L, L)
    m = np.sqrt(np.kron(B.mass_E_diag, B.mass_E_diag))
    W = sla.solve_triangular(LL, K / m[None, :], lower=True)
    assert sla.svdvals(W).min() > 1e-6


def test_infsup_scan():
    mesh = refine_to_ratio(random_mesh(1.0, 127, 0), 3)
    assert 0.85 * 210 <= mesh.nodes.size <= 1.15 * 210
    rows = infsup_scan(["CN", "iE"], [1e-2, 1.0, 1e6], mesh)
    assert len(rows) == 6
    ie = [r for r in rows if r.scheme == "iE"]
    cn = [r for r in rows if r.scheme == "CN"]
    assert all(r.gamma_k >= r.gamma_sigma - 1e-10 for r in ie)
    assert ie[0].gamma_sigma == pytest.approx(gamma_sigma(mesh.backward_ratio()))
    assert cn[0].gamma_k >= 0.9
    assert cn[-1].gamma_k < 0.2


def test_unknown_scheme():
    with pytest.raises(ValueError):
        scheme_spec("BDF2")
    with pytest.raises(ValueError):
        scheme_constants("CN(2)", 1.0, 0.0, 0.1)
