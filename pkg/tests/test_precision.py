import numpy as np
import pytest

from smoothvol.ar_precision import (
    PrecisionError,
    TridiagSym,
    build_precision,
    expected_precision,
    logdet_ar,
)


def test_build_precision_small_dense():
    q = build_precision(0.5, 2).dense()
    expected = np.array(
        [
            [1.0, -0.5, 0.0],
            [-0.5, 1.25, -0.5],
            [0.0, -0.5, 1.0],
        ]
    )
    np.testing.assert_allclose(q, expected)


def test_build_precision_rejects_nonstationary():
    with pytest.raises(PrecisionError):
        build_precision(1.0, 5)
    with pytest.raises(PrecisionError):
        build_precision(0.5, 0)


def test_determinant_is_one_minus_rho2():
    for rho in (-0.9, -0.3, 0.0, 0.5, 0.98):
        for n in (1, 2, 5, 50):
            q = build_precision(rho, n)
            det = np.linalg.det(q.dense())
            np.testing.assert_allclose(det, 1.0 - rho * rho, rtol=1e-9)
            np.testing.assert_allclose(q.logdet(), np.log(1 - rho * rho), rtol=1e-9)
            np.testing.assert_allclose(logdet_ar(rho, n), np.log(1 - rho * rho))


def test_quad_form_identity():
    # x'Qx = (1 - rho^2) x0^2 + sum_t (x_t - rho x_{t-1})^2
    rng = np.random.default_rng(3)
    for rho in (-0.7, 0.2, 0.95):
        n = 40
        q = build_precision(rho, n)
        x = rng.standard_normal(n + 1)
        direct = (1 - rho**2) * x[0] ** 2 + np.sum((x[1:] - rho * x[:-1]) ** 2)
        np.testing.assert_allclose(q.quad_form(x), direct, rtol=1e-10)


def test_matvec_matches_dense():
    rng = np.random.default_rng(1)
    q = build_precision(0.8, 30)
    x = rng.standard_normal(31)
    np.testing.assert_allclose(q.matvec(x), q.dense() @ x, atol=1e-12)


def test_solve_matches_dense():
    rng = np.random.default_rng(2)
    q = build_precision(0.9, 25)
    rhs = rng.standard_normal(26)
    np.testing.assert_allclose(q.solve(rhs), np.linalg.solve(q.dense(), rhs), atol=1e-9)


def test_inverse_band_matches_dense_inverse():
    for rho in (0.3, 0.95, -0.6):
        q = build_precision(rho, 40)
        inv = np.linalg.inv(q.dense())
        inv_diag, inv_off = q.inverse_band()
        np.testing.assert_allclose(inv_diag, np.diag(inv), atol=1e-9)
        np.testing.assert_allclose(inv_off, np.diag(inv, 1), atol=1e-9)


def test_trace_product_matches_dense():
    rng = np.random.default_rng(4)
    q = build_precision(0.7, 20)
    other = TridiagSym(1.0 + rng.uniform(size=21), rng.uniform(-0.3, 0.3, size=20))
    expected = np.trace(np.linalg.inv(q.dense()) @ other.dense())
    np.testing.assert_allclose(q.trace_product(other), expected, rtol=1e-9)


def test_ldl_reconstructs():
    q = build_precision(0.85, 15)
    d, l = q.ldl()
    L = np.eye(16)
    idx = np.arange(15)
    L[idx + 1, idx] = l
    np.testing.assert_allclose(L @ np.diag(d) @ L.T, q.dense(), atol=1e-10)


def test_ldl_rejects_indefinite():
    m = TridiagSym(np.array([1.0, -1.0]), np.array([0.0]))
    with pytest.raises(PrecisionError):
        m.ldl()


def test_expected_precision_plugin_consistency():
    # At degenerate moments (E[rho^2] = E[rho]^2) it equals build_precision.
    rho = 0.6
    np.testing.assert_allclose(
        expected_precision(rho, rho * rho, 10).dense(), build_precision(rho, 10).dense()
    )


def test_expected_precision_structure():
    q = expected_precision(0.9, 0.85, 4)
    assert q.diag[0] == 1.0 and q.diag[-1] == 1.0
    np.testing.assert_allclose(q.diag[1:-1], 1.85)
    np.testing.assert_allclose(q.offdiag, -0.9)


def test_expected_precision_rejects_invalid_moments():
    with pytest.raises(PrecisionError):
        expected_precision(0.9, 0.5, 5)  # E[rho^2] < E[rho]^2


def test_add_diag_and_scale():
    q = build_precision(0.5, 5)
    q2 = q.add_diag(np.full(6, 2.0))
    np.testing.assert_allclose(q2.dense(), q.dense() + 2.0 * np.eye(6))
    q3 = q.scale(3.0)
    np.testing.assert_allclose(q3.dense(), 3.0 * q.dense())
