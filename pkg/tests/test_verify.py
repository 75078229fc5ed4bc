import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpvp.synthesis import SynthesisResult
from lpvp.verify import NotHurwitzError, certify, freq_response, h2_norm, hinf_norm, lyap

from conftest import scalar_plant


def random_stable(rng, n=4, m=2, p=2):
    A = rng.standard_normal((n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)) * np.eye(n)
    return A, rng.standard_normal((n, m)), rng.standard_normal((p, n))


def grid_peak(A, B, C, D=None):
    w = np.concatenate([[0.0], np.logspace(-4, 4, 10_000)])
    return freq_response(A, B, C, D, w).max()


def test_h2_scalar():
    assert abs(h2_norm(-1, 1, 1) - math.sqrt(0.5)) <= 1e-10


def test_h2_decoupled():
    assert abs(h2_norm(np.diag([-1.0, -2.0]), np.eye(2), np.eye(2)) - math.sqrt(0.75)) <= 1e-12


def test_h2_zero_output():
    assert h2_norm(-1, 1, 0) == 0.0


def test_hinf_first_order_lag():
    assert abs(hinf_norm(-1, 1, 1) - 1.0) <= 1e-6


def test_hinf_feedthrough_only():
    assert abs(hinf_norm([[-1.0]], [[0.0]], [[0.0]], [[2.0]]) - 2.0) <= 1e-6


def test_hinf_resonant_peak():
    # lightly damped oscillator: the peak sits far above the DC gain
    wn, z = 3.0, 0.01
    A = np.array([[0.0, 1.0], [-wn ** 2, -2 * z * wn]])
    B, C = np.array([[0.0], [1.0]]), np.array([[1.0, 0.0]])
    exact = 1.0 / (2 * z * wn ** 2 * math.sqrt(1 - z ** 2))
    assert abs(hinf_norm(A, B, C) - exact) <= 1e-6 * exact


def test_not_hurwitz():
    with pytest.raises(NotHurwitzError):
        h2_norm(1.0, 1.0, 1.0)
    with pytest.raises(NotHurwitzError):
        hinf_norm([[0.0]], [[1.0]], [[1.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lyap_residual(seed):
    A, B, _ = random_stable(np.random.default_rng(seed), n=5, m=3)
    P = lyap(A, B @ B.T)
    R = A @ P + P @ A.T + B @ B.T
    assert np.linalg.norm(R) <= 1e-10 * np.linalg.norm(B @ B.T)
    assert np.array_equal(P, P.T)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hinf_bounds(seed):
    rng = np.random.default_rng(seed)
    A, B, C = random_stable(rng)
    D = rng.standard_normal((2, 2))
    val = hinf_norm(A, B, C, D)
    assert val >= np.linalg.svd(D, compute_uv=False)[0] * (1 - 1e-12)
    # bisection stops at 1e-6 relative width
    assert val >= grid_peak(A, B, C, D) * (1 - 1e-6)


def test_hinf_matches_grid():
    rng = np.random.default_rng(11)
    for _ in range(20):
        A, B, C = random_stable(rng)
        exact, grid = hinf_norm(A, B, C), grid_peak(A, B, C)
        assert abs(exact - grid) <= 1e-4 * exact


def _result(L, noise, gamma, norm="h2"):
    return SynthesisResult(norm, gamma, "optimal", 1.0, 1e-8, L=np.atleast_2d(L),
                           noise_scale=np.atleast_1d(noise), vertex_set=([0.0],))


def test_certify_scalar_pass():
    # L = -1, S_n = 1: A_cl = -2, B_w = [1, -1], H2 norm = sqrt(2/4)
    rep = certify(_result([[-1.0]], [1.0], 1.0), scalar_plant())
    assert rep.passed and rep.margin > 0
    assert abs(rep.worst_norm - math.sqrt(0.5)) <= 1e-12


def test_certify_reports_unstable_vertex():
    plant = scalar_plant(A=[[1.0]])
    rep = certify(_result([[0.0]], [1.0], 10.0), plant, [[0.0]])
    assert not rep.passed
    bad = rep.failures()
    assert bad[0].kind == "vertex" and bad[0].index == 0 and not bad[0].hurwitz
    assert "not Hurwitz" in rep.summary()


def test_certify_norm_violation():
    rep = certify(_result([[-1.0]], [1.0], 0.5), scalar_plant())
    assert rep.hurwitz_ok and not rep.passed and rep.margin < 0
