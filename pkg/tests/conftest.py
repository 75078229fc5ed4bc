import numpy as np
import pytest

from lpvp.cr3bp import EARTH_MOON_PI2, build_scenario
from lpvp.lpv import AffineMatrixFunction, LpvPlant, ParameterBox
from lpvp.synthesis import SynthesisRequest, synthesize

# criterion lines recorded by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scalar_plant(**kw):
    """``A=-1, B_d=1, C_y=1, D_d=0, C_z=1, S_d=1`` with no parameter dependence."""
    args = dict(A=[[-1.0]], B_d=[[1.0]], C_y=[[1.0]], C_z=[[1.0]], S_d=[[1.0]],
                box=ParameterBox([0.0], [0.0]))
    args.update(kw)
    return LpvPlant(**args)


def lti2_plant():
    """Lightly damped oscillator, both states measured through a mixed sensor pair."""
    return LpvPlant(A=[[0.0, 1.0], [-2.0, -0.5]], B_d=[[0.0], [1.0]],
                    C_y=[[1.0, 0.0], [0.5, 1.0]], C_z=np.eye(2), S_d=np.eye(1),
                    box=ParameterBox([0.0], [0.0]))


def lpv_toy_plant():
    """Two-parameter plant with ``A`` on rho_0 and ``C_y`` on rho_1."""
    A = AffineMatrixFunction([[-1.0, 0.5], [0.0, -2.0]], {0: [[0.3, 0.0], [0.1, -0.2]]}, 2)
    C = AffineMatrixFunction([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                             {1: [[0.2, 0.0], [0.0, 0.1], [0.0, 0.0]]}, 2)
    return LpvPlant(A=A, B_d=np.eye(2), C_y=C, C_z=[[1.0, 0.0]], S_d=np.diag([0.5, 1.0]),
                    box=ParameterBox([-1.0, 0.0], [1.0, 2.0]))


def random_states(n, seed=0):
    """Planar states away from both primaries."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        s = np.concatenate([rng.uniform(-1.5, 1.5, 2), rng.uniform(-1, 1, 2)])
        if min(np.hypot(s[0] + EARTH_MOON_PI2, s[1]), np.hypot(s[0] + EARTH_MOON_PI2 - 1, s[1])) > 1e-2:
            out.append(s)
    return np.array(out)


def schur_instance(rng, k=None):
    """Random ``M11 < 0`` (2x2), ``U`` (2xk) and ``R > 0`` (kxk).

    ``U`` is scaled log-uniformly so both outcomes of the Schur test occur;
    draws whose reduced matrix is within 1e-9 of singular are redrawn.
    """
    while True:
        kk = k or int(rng.integers(1, 4))
        G = rng.standard_normal((2, 2))
        M11 = -(G @ G.T + 0.1 * np.eye(2))
        U = rng.standard_normal((2, kk)) * 10 ** rng.uniform(-1, 0.5)
        H = rng.standard_normal((kk, kk))
        R = H @ H.T + 0.1 * np.eye(kk)
        if abs(np.linalg.eigvalsh(M11 + U @ R @ U.T)[-1]) > 1e-9:
            return M11, U, R


@pytest.fixture(scope="session")
def scenario():
    return build_scenario()


@pytest.fixture(scope="session")
def cr3bp_plant(scenario):
    return scenario.plant


@pytest.fixture(scope="session")
def cr3bp_results(cr3bp_plant):
    """Designs at gamma=0.1, p=1 for both norms."""
    return {n: synthesize(SynthesisRequest(cr3bp_plant, n, 0.1)) for n in ("h2", "hinf")}
