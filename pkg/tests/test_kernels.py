"""Sweep kernel backends: agreement, convergence, and dispatch."""

import os
import subprocess
import sys

import numpy as np
import pytest

from fracsig import kernels
from fracsig.kernels import (
    MODE_NONE,
    MODE_PENALIZED,
    MODE_PROJECTED,
    available_backends,
    get_backend,
)

HAS_CYTHON = "cython" in available_backends()


def _random_system(rng, nx1=17, ny1=11):
    cE = rng.uniform(0.5, 2.0, (nx1, ny1))
    cW = rng.uniform(0.5, 2.0, (nx1, ny1))
    cN = rng.uniform(0.5, 2.0, (nx1, ny1))
    cS = rng.uniform(0.5, 2.0, (nx1, ny1))
    diag = cE + cW + cN + cS + rng.uniform(0.1, 1.0, (nx1, ny1))
    rhs = rng.standard_normal((nx1, ny1))
    psi = 0.3 * rng.standard_normal(nx1)
    pen = rng.uniform(0.5, 3.0, nx1)
    return cE, cW, cN, cS, diag, rhs, psi, pen


def _dense_matrix(cE, cW, cN, cS, diag):
    # identity rows on the frame, stencil rows elsewhere: the oracle system
    nx1, ny1 = diag.shape
    n = nx1 * ny1
    A = np.zeros((n, n))
    idx = lambda i, j: i * ny1 + j  # noqa: E731
    for i in range(nx1):
        for j in range(ny1):
            k = idx(i, j)
            frame = i == 0 or i == nx1 - 1 or j == ny1 - 1
            if frame:
                A[k, k] = 1.0
                continue
            A[k, k] = diag[i, j]
            A[k, idx(i + 1, j)] = -cE[i, j]
            A[k, idx(i - 1, j)] = -cW[i, j]
            A[k, idx(i, j + 1)] = -cN[i, j]
            if j > 0:
                A[k, idx(i, j - 1)] = -cS[i, j]
    return A


def _sweep_until(backend, u, arrs, mode, omega=1.5, tol=1e-14, max_sweeps=4000):
    for _ in range(max_sweeps):
        if backend.psor_sweep(u, *arrs, 1e-2, omega, mode) <= tol:
            break
    return u


def test_plain_sor_matches_dense_solve():
    rng = np.random.default_rng(5)
    cE, cW, cN, cS, diag, rhs, psi, pen = _random_system(rng)
    # make the frame Dirichlet data part of rhs so the oracle sees it too
    u = np.zeros_like(rhs)
    u[0, :] = rhs[0, :]
    u[-1, :] = rhs[-1, :]
    u[:, -1] = rhs[:, -1]
    npk = get_backend("numpy")
    _sweep_until(npk, u, (cE, cW, cN, cS, diag, rhs, psi, pen), MODE_NONE)
    A = _dense_matrix(cE, cW, cN, cS, diag)
    exact = np.linalg.solve(A, rhs.ravel()).reshape(rhs.shape)
    assert np.abs(u - exact).max() <= 1e-10


def test_projected_sweep_solves_the_complementarity_system():
    rng = np.random.default_rng(8)
    cE, cW, cN, cS, diag, rhs, psi, pen = _random_system(rng)
    psi = psi + 0.5  # force an active contact set
    u = np.zeros_like(rhs)
    npk = get_backend("numpy")
    _sweep_until(npk, u, (cE, cW, cN, cS, diag, rhs, psi, pen), MODE_PROJECTED)
    # bottom-row equation residual r = diag u - (rhs + sum c u_nb)
    i = np.arange(1, u.shape[0] - 1)
    r = (
        diag[i, 0] * u[i, 0]
        - rhs[i, 0]
        - cE[i, 0] * u[i + 1, 0]
        - cW[i, 0] * u[i - 1, 0]
        - cN[i, 0] * u[i, 1]
    )
    gap = u[i, 0] - psi[i]
    assert gap.min() >= -1e-13
    assert r.min() >= -1e-10  # multiplier has one sign
    assert np.abs(r * gap).max() <= 1e-9
    assert (gap > 1e-8).any() and (gap < 1e-8).any()


def test_penalized_sweep_solves_the_regularized_equation():
    rng = np.random.default_rng(9)
    cE, cW, cN, cS, diag, rhs, psi, pen = _random_system(rng)
    psi = psi + 0.5
    eps = 1e-2
    u = np.zeros_like(rhs)
    npk = get_backend("numpy")
    for _ in range(4000):
        if npk.psor_sweep(u, cE, cW, cN, cS, diag, rhs, psi, pen, eps, 1.5,
                          MODE_PENALIZED) <= 1e-14:
            break
    i = np.arange(1, u.shape[0] - 1)
    acc = (
        rhs[i, 0]
        + cE[i, 0] * u[i + 1, 0]
        + cW[i, 0] * u[i - 1, 0]
        + cN[i, 0] * u[i, 1]
    )
    d = np.minimum(u[i, 0] - psi[i] - eps, -2.2250738585072014e-308)
    beta = -np.exp(eps / d)
    g = diag[i, 0] * u[i, 0] - acc + pen[i] * beta
    assert np.abs(g).max() <= 1e-10
    # penalization pushes up from the unconstrained solution, never down
    assert np.all(u[i, 0] >= acc / diag[i, 0] - 1e-13)


@pytest.mark.skipif(not HAS_CYTHON, reason="compiled kernel not built")
@pytest.mark.parametrize("mode", [MODE_NONE, MODE_PROJECTED])
def test_backends_agree_bitwise(mode):
    rng = np.random.default_rng(7)
    arrs = _random_system(rng)
    u1 = rng.standard_normal(arrs[0].shape)
    u2 = u1.copy()
    cy = get_backend("cython")
    npk = get_backend("numpy")
    for _ in range(25):
        c1 = cy.psor_sweep(u1, *arrs, 1e-2, 1.4, mode)
        c2 = npk.psor_sweep(u2, *arrs, 1e-2, 1.4, mode)
        assert c1 == c2
    assert np.array_equal(u1, u2)


@pytest.mark.skipif(not HAS_CYTHON, reason="compiled kernel not built")
def test_backends_agree_penalized():
    # bisection evaluates exp, whose last-ulp rounding may differ between
    # the vectorized and libm code paths
    rng = np.random.default_rng(12)
    arrs = _random_system(rng)
    u1 = rng.standard_normal(arrs[0].shape)
    u2 = u1.copy()
    cy = get_backend("cython")
    npk = get_backend("numpy")
    for _ in range(40):
        cy.psor_sweep(u1, *arrs, 1e-3, 1.3, MODE_PENALIZED)
        npk.psor_sweep(u2, *arrs, 1e-3, 1.3, MODE_PENALIZED)
    np.testing.assert_allclose(u1, u2, rtol=1e-12, atol=1e-14)


def test_sweep_never_touches_the_frame():
    rng = np.random.default_rng(4)
    arrs = _random_system(rng)
    u = rng.standard_normal(arrs[0].shape)
    frame = (u[0, :].copy(), u[-1, :].copy(), u[:, -1].copy())
    for backend in available_backends():
        get_backend(backend).psor_sweep(u, *arrs, 1e-2, 1.5, MODE_PROJECTED)
        assert np.array_equal(u[0, :], frame[0])
        assert np.array_equal(u[-1, :], frame[1])
        assert np.array_equal(u[:, -1], frame[2])


def test_dispatch_and_env_override():
    assert kernels.BACKEND in available_backends()
    code = (
        "import fracsig.kernels as k; print(k.BACKEND)"
    )
    env = dict(os.environ, FRACSIG_KERNEL="numpy")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.stdout.strip() == "numpy"
    env = dict(os.environ, FRACSIG_KERNEL="nonsense")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode != 0
    with pytest.raises(ValueError):
        get_backend("fortran")
