"""Planar circular restricted three-body problem and its affine LPV embedding.

States are ``(x, y, vx, vy)`` in the rotating frame, normalized by the
Earth-Moon distance, with the barycenter at the origin, Earth at
``(-pi2, 0)`` and the Moon at ``(1 - pi2, 0)``.

The scheduling vector is

    rho = (1/sigma^3, 1/psi^3, 1/sigma, 1/psi, x, y)

where ``sigma`` and ``psi`` are the distances to Earth and Moon. The six
measurement channels are ``sin(theta1), cos(theta1), sin(theta2),
cos(theta2), r13^2, r23^2``: ``theta1`` is the Earth-centred polar angle
of the spacecraft and ``theta2 = pi - phi`` with ``phi`` the Moon-centred
polar angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lpv import AffineMatrixFunction, LpvPlant, ParameterBox

# Masses derived from GM_earth = 398600.435 km^3/s^2, GM_moon = 4902.800 km^3/s^2
# and G = 6.6743e-20 km^3/(kg s^2).
EARTH_MASS_KG = 5.97217e24
MOON_MASS_KG = 7.34579e22
EARTH_MOON_DISTANCE_KM = 384400.0

CHANNELS = ("sin_theta1", "cos_theta1", "sin_theta2", "cos_theta2", "r13_sq", "r23_sq")
N_RHO = 6
SINGULAR_DISTANCE = 1e-12


class SingularityError(ValueError):
    """The state sits (numerically) on one of the primaries."""


def mass_ratio(m1: float = EARTH_MASS_KG, m2: float = MOON_MASS_KG) -> float:
    """``pi2 = m2 / (m1 + m2)``."""
    if m1 <= 0 or m2 <= 0:
        raise ValueError("masses must be positive")
    return m2 / (m1 + m2)


EARTH_MOON_PI2 = mass_ratio()


def keplerian_state(r_periapsis: float, r_apoapsis: float, pi2: float = EARTH_MOON_PI2,
                    ) -> np.ndarray:
    """Rotating-frame state at periapsis of a two-body Earth orbit.

    Periapsis is placed on the far side of Earth from the Moon, motion is
    prograde. Returns ``(x, y, vx, vy)``.
    """
    if not 0 < r_periapsis <= r_apoapsis:
        raise ValueError("need 0 < r_periapsis <= r_apoapsis")
    a = 0.5 * (r_periapsis + r_apoapsis)
    v = np.sqrt((1 - pi2) * (2 / r_periapsis - 1 / a))
    # inertial prograde speed at (-r, 0) points along -y; subtract omega x r
    return np.array([-pi2 - r_periapsis, 0.0, 0.0, r_periapsis - v])


def keplerian_period(r_periapsis: float, r_apoapsis: float, pi2: float = EARTH_MOON_PI2) -> float:
    a = 0.5 * (r_periapsis + r_apoapsis)
    return 2 * np.pi * a ** 1.5 / np.sqrt(1 - pi2)


DEFAULT_ORBIT = (0.5, 0.8)


@dataclass(frozen=True)
class Cr3bpConfig:
    """Reference scenario for the cislunar case study.

    The truth orbit starts at ``initial_state`` and runs for ``t_final``
    with RK4 step ``dt``; the parameter box is the range of ``rho`` along
    it, widened by ``box_margin``. The in-plane acceleration disturbance
    enters through ``B_d = [0; I]`` with ``S_d = disturbance_scale * I``
    (normalized units).
    """

    pi2: float = EARTH_MOON_PI2
    r12: float = EARTH_MOON_DISTANCE_KM
    initial_state: tuple = tuple(keplerian_state(*DEFAULT_ORBIT))
    t_final: float = keplerian_period(*DEFAULT_ORBIT)
    dt: float = 1e-3
    box_margin: float = 0.05
    disturbance_scale: float = 0.5

    def __post_init__(self):
        if not 0 < self.pi2 < 1:
            raise ValueError("pi2 must lie in (0, 1)")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if self.box_margin < 0:
            raise ValueError("box_margin must be nonnegative")
        if not self.disturbance_scale > 0:
            raise ValueError("disturbance_scale must be positive")
        x0 = tuple(float(v) for v in self.initial_state)
        if len(x0) != 4:
            raise ValueError("initial_state must have 4 entries (x, y, vx, vy)")
        object.__setattr__(self, "initial_state", x0)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def _distances(state, pi2):
    x, y = state[0], state[1]
    sigma = np.hypot(x + pi2, y)
    psi = np.hypot(x + pi2 - 1, y)
    if np.any(sigma < SINGULAR_DISTANCE) or np.any(psi < SINGULAR_DISTANCE):
        raise SingularityError(f"state {np.asarray(state)[:2]} is at a primary")
    return sigma, psi


def dynamics(state, pi2: float = EARTH_MOON_PI2) -> np.ndarray:
    """Planar CR3BP right-hand side ``d/dt (x, y, vx, vy)``."""
    x, y, vx, vy = np.asarray(state, dtype=float)
    sigma, psi = _distances((x, y), pi2)
    s3, p3 = sigma ** 3, psi ** 3
    ax = 2 * vy + x - (1 - pi2) * (x + pi2) / s3 - pi2 * (x - 1 + pi2) / p3
    ay = -2 * vx + y - (1 - pi2) * y / s3 - pi2 * y / p3
    return np.array([vx, vy, ax, ay])


def jacobi_constant(state, pi2: float = EARTH_MOON_PI2) -> float:
    x, y, vx, vy = np.asarray(state, dtype=float)
    sigma, psi = _distances((x, y), pi2)
    return float(x * x + y * y + 2 * (1 - pi2) / sigma + 2 * pi2 / psi - (vx * vx + vy * vy))


@dataclass(frozen=True)
class RhoSample:
    """Scheduling vector ``(1/sigma^3, 1/psi^3, 1/sigma, 1/psi, x, y)``."""

    rho: np.ndarray

    @property
    def sigma(self) -> float:
        return 1.0 / self.rho[2]

    @property
    def psi(self) -> float:
        return 1.0 / self.rho[3]


def rho_of_state(state, pi2: float = EARTH_MOON_PI2) -> RhoSample:
    x, y = float(state[0]), float(state[1])
    sigma, psi = _distances((x, y), pi2)
    r3, r4 = 1.0 / sigma, 1.0 / psi
    return RhoSample(np.array([r3 ** 3, r4 ** 3, r3, r4, x, y]))


def rho_trajectory(states, pi2: float = EARTH_MOON_PI2) -> np.ndarray:
    """Vectorized :func:`rho_of_state` over rows of ``states``."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    sigma, psi = _distances(states.T, pi2)
    r3, r4 = 1.0 / sigma, 1.0 / psi
    return np.column_stack([r3 ** 3, r4 ** 3, r3, r4, states[:, 0], states[:, 1]])


def measurement(state, pi2: float = EARTH_MOON_PI2) -> np.ndarray:
    """Geometric channel values computed from the bearing angles."""
    x, y = float(state[0]), float(state[1])
    sigma, psi = _distances((x, y), pi2)
    theta1 = np.arctan2(y, x + pi2)
    theta2 = np.pi - np.arctan2(y, x + pi2 - 1)
    return np.array([np.sin(theta1), np.cos(theta1), np.sin(theta2), np.cos(theta2),
                     sigma ** 2, psi ** 2])


def bearing_angles(state, pi2: float = EARTH_MOON_PI2) -> tuple[float, float]:
    x, y = float(state[0]), float(state[1])
    return float(np.arctan2(y, x + pi2)), float(np.pi - np.arctan2(y, x + pi2 - 1))


def affine_model(pi2: float = EARTH_MOON_PI2):
    """Affine-in-rho ``(A, b, C_y, d)`` as :class:`AffineMatrixFunction` objects."""
    A0 = np.zeros((4, 4))
    A0[0, 2] = A0[1, 3] = 1.0
    A0[2, 0] = A0[3, 1] = 1.0
    A0[2, 3], A0[3, 2] = 2.0, -2.0
    A1 = np.zeros((4, 4))
    A1[2, 0] = A1[3, 1] = pi2 - 1
    A2 = np.zeros((4, 4))
    A2[2, 0] = A2[3, 1] = -pi2
    A = AffineMatrixFunction(A0, {0: A1, 1: A2}, N_RHO)

    # expanding the primaries' pull around x gives pi2 (pi2 - 1) (rho1 - rho2)
    b1 = np.zeros((4, 1))
    b1[2, 0] = pi2 * (pi2 - 1)
    b2 = np.zeros((4, 1))
    b2[2, 0] = -pi2 * (pi2 - 1)
    b = AffineMatrixFunction(np.zeros((4, 1)), {0: b1, 1: b2}, N_RHO)

    C0 = np.zeros((6, 4))
    C0[4, 0] = 2 * pi2
    C0[5, 0] = 2 * pi2 - 2
    C3 = np.zeros((6, 4))
    C3[0, 1] = C3[1, 0] = 1.0
    C4 = np.zeros((6, 4))
    C4[2, 1] = 1.0
    C4[3, 0] = -1.0
    C5 = np.zeros((6, 4))
    C5[4, 0] = C5[5, 0] = 1.0
    C6 = np.zeros((6, 4))
    C6[4, 1] = C6[5, 1] = 1.0
    C_y = AffineMatrixFunction(C0, {2: C3, 3: C4, 4: C5, 5: C6}, N_RHO)

    d0 = np.zeros((6, 1))
    d0[4, 0] = pi2 ** 2
    d0[5, 0] = (pi2 - 1) ** 2
    d3 = np.zeros((6, 1))
    d3[1, 0] = pi2
    d4 = np.zeros((6, 1))
    d4[3, 0] = -(pi2 - 1)
    d = AffineMatrixFunction(d0, {2: d3, 3: d4}, N_RHO)
    return A, b, C_y, d


def lpv_matrices(rho, pi2: float = EARTH_MOON_PI2):
    """Dense ``(A, b, C_y, d)`` at the scheduling vector ``rho``."""
    r1, r2, r3, r4, r5, r6 = np.asarray(rho, dtype=float)
    a = r1 * (pi2 - 1) - r2 * pi2 + 1
    A = np.array([[0, 0, 1, 0],
                  [0, 0, 0, 1],
                  [a, 0, 0, 2],
                  [0, a, -2, 0]], dtype=float)
    b = np.array([[0], [0], [pi2 * (pi2 - 1) * (r1 - r2)], [0]], dtype=float)
    C_y = np.array([[0, r3, 0, 0],
                    [r3, 0, 0, 0],
                    [0, r4, 0, 0],
                    [-r4, 0, 0, 0],
                    [r5 + 2 * pi2, r6, 0, 0],
                    [r5 + 2 * pi2 - 2, r6, 0, 0]], dtype=float)
    d = np.array([[0], [r3 * pi2], [0], [-r4 * (pi2 - 1)], [pi2 ** 2], [(pi2 - 1) ** 2]],
                 dtype=float)
    return A, b, C_y, d


def rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def propagate(x0, t_final: float, dt: float, pi2: float = EARTH_MOON_PI2):
    """Fixed-step RK4 truth trajectory; returns ``(times, states)``."""
    n = int(round(t_final / dt))
    states = np.empty((n + 1, 4))
    states[0] = x = np.asarray(x0, dtype=float)
    rhs = lambda s: dynamics(s, pi2)  # noqa: E731
    for k in range(n):
        x = rk4_step(rhs, x, dt)
        states[k + 1] = x
    return dt * np.arange(n + 1), states


def extract_box(trajectory, margin: float = 0.05, pi2: float = EARTH_MOON_PI2) -> ParameterBox:
    """Bounding box of rho along ``trajectory``, inflated by ``margin``.

    Each coordinate grows by ``margin * (max - min)`` on both sides;
    coordinates that do not vary grow by ``margin * |value|`` instead.
    """
    states = np.asarray(trajectory, dtype=float)
    if states.size == 0:
        raise ValueError("empty trajectory")
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    R = rho_trajectory(states, pi2)
    lo, hi = R.min(axis=0), R.max(axis=0)
    width = hi - lo
    pad = np.where(width > 0, margin * width, margin * np.abs(lo))
    return ParameterBox(lo - pad, hi + pad)


def make_plant(box: ParameterBox, pi2: float = EARTH_MOON_PI2,
               disturbance_scale: float = 0.5) -> LpvPlant:
    """Six-channel cislunar navigation plant with acceleration disturbance."""
    A, b, C_y, d = affine_model(pi2)
    B_d = np.vstack([np.zeros((2, 2)), np.eye(2)])
    C_z = np.hstack([np.eye(2), np.zeros((2, 2))])
    return LpvPlant(A=A, B_d=B_d, C_y=C_y, C_z=C_z,
                    S_d=disturbance_scale * np.eye(2), box=box, b=b, d=d,
                    D_d=np.zeros((6, 2)), channel_names=CHANNELS)


@dataclass
class Scenario:
    """Reference trajectory plus the plant built around it."""

    config: Cr3bpConfig
    times: np.ndarray
    states: np.ndarray
    plant: LpvPlant = field(repr=False)


def build_scenario(config: Cr3bpConfig | None = None) -> Scenario:
    config = config or Cr3bpConfig()
    t, X = propagate(config.initial_state, config.t_final, config.dt, config.pi2)
    box = extract_box(X, config.box_margin, config.pi2)
    return Scenario(config, t, X, make_plant(box, config.pi2, config.disturbance_scale))
