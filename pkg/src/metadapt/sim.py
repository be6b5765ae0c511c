"""Deterministic fixed-step simulation of translational quadrotor dynamics
under a two-channel synthetic disturbance field, plus reference trajectories.

The plant is p_dot = v, m v_dot = m g + u + f_ext with u the world-frame
control force. Attitude is not simulated: a commanded-attitude quaternion
relaxes toward the direction of u through a first-order lag, and a fixed
mixer map fills the normalized motor commands. Both exist to populate the
11-d network input [v, quat, u_motor].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)

# fixed mixer constants: thrust headroom relative to hover, and the size of
# the attitude-proportional offsets mixed onto the per-motor commands
MIXER_THRUST_HEADROOM = 2.0
MIXER_ATTITUDE_GAIN = 0.15


@dataclass
class SimParams:
    mass: float = 0.041
    gravity: tuple[float, float, float] = GRAVITY_DEFAULT
    dt: float = 0.002
    attitude_tau: float = 0.05
    drag_linear: float = 0.02  # N per m/s of relative air speed
    drag_quad: float = 0.01  # N per (m/s)^2
    wr_force_gain: float = 1.0  # N per unit of latent state
    wr_vel_gain: float = 0.3  # latent force velocity coupling, per m/s

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.attitude_tau <= 0:
            raise ValueError("attitude_tau must be positive")

    @property
    def gravity_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)


@dataclass
class RobotState:
    p: np.ndarray
    v: np.ndarray
    quat: np.ndarray  # unit quaternion, scalar first
    u_motor: np.ndarray  # 4 normalized motor commands in [0, 1]

    @staticmethod
    def at_rest(p=(0.0, 0.0, 0.0)) -> "RobotState":
        return RobotState(
            np.asarray(p, dtype=float),
            np.zeros(3),
            np.array([1.0, 0.0, 0.0, 0.0]),
            np.zeros(4),
        )

    def nn_input(self) -> np.ndarray:
        """The 11-d network input [v, quat, u_motor]."""
        return np.concatenate([self.v, self.quat, self.u_motor])


@dataclass
class WindField:
    """Mean wind vector plus a spatial profile.

    profile "uniform" applies the vector everywhere; "jet" scales it by a
    Gaussian falloff in height around jet_height (a row of fans blowing
    across the flight volume at a fixed altitude).
    """

    mean: np.ndarray
    profile: str = "uniform"
    jet_height: float = 1.0
    jet_width: float = 0.5

    def at(self, p: np.ndarray) -> np.ndarray:
        if self.profile == "uniform":
            return self.mean
        if self.profile == "jet":
            gain = np.exp(-((p[2] - self.jet_height) ** 2) / (2.0 * self.jet_width**2))
            return self.mean * gain
        raise ValueError(f"unknown wind profile {self.profile!r}")


@dataclass
class LatentState:
    """Mean-reverting per-axis drift process (Ornstein-Uhlenbeck)."""

    value: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    tau: float = 10.0  # correlation time, s
    sigma: float = 0.0  # stationary standard deviation per axis
    bound: float = 0.15  # hard cap on |value| per axis

    def __post_init__(self):
        if self.tau < 5.0:
            raise ValueError("latent correlation time must be >= 5 s")


@dataclass
class DisturbanceCondition:
    cond_id: int
    wind: WindField
    latent: LatentState


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_from_two_vectors(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shortest-arc unit quaternion rotating direction a onto direction b."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    d = float(a @ b)
    if d > 1.0 - 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if d < -1.0 + 1e-12:
        # antipodal: rotate pi around any axis orthogonal to a
        axis = np.cross(a, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(axis) < 1e-9:
            axis = np.cross(a, np.array([0.0, 1.0, 0.0]))
        axis /= np.linalg.norm(axis)
        return np.array([0.0, *axis])
    axis = np.cross(a, b)
    q = np.array([1.0 + d, axis[0], axis[1], axis[2]])
    return quat_normalize(q)


def quat_slerp(q0: np.ndarray, q1: np.ndarray, alpha: float) -> np.ndarray:
    """Spherical interpolation along the shorter arc."""
    d = float(q0 @ q1)
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-10:
        return quat_normalize(q0 + alpha * (q1 - q0))
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    s = np.sin(theta)
    return quat_normalize(
        (np.sin((1.0 - alpha) * theta) / s) * q0 + (np.sin(alpha * theta) / s) * q1
    )


def rk4_step(deriv, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of y' = deriv(t, y)."""
    k1 = deriv(t, y)
    k2 = deriv(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = deriv(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = deriv(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def motor_commands(u: np.ndarray, quat: np.ndarray, params: SimParams) -> np.ndarray:
    """Fixed normalized mixer: even thrust split plus small attitude offsets."""
    g0 = np.linalg.norm(params.gravity_vec)
    u_max = MIXER_THRUST_HEADROOM * params.mass * g0
    thrust = np.clip(np.linalg.norm(u) / u_max, 0.0, 1.0)
    qx, qy = quat[1], quat[2]
    pattern = np.array([qx - qy, -qx - qy, -qx + qy, qx + qy])
    return np.clip(thrust + MIXER_ATTITUDE_GAIN * pattern, 0.0, 1.0)


def step_dynamics(state: RobotState, u: np.ndarray, f_ext: np.ndarray,
                  params: SimParams) -> RobotState:
    """Advance the state by one RK4 step of dt under constant forces u, f_ext.

    The commanded-attitude quaternion relaxes toward the direction of u with
    time constant attitude_tau; motor commands are refilled from the mixer.
    """
    u = np.asarray(u, dtype=float)
    f_ext = np.asarray(f_ext, dtype=float)
    if not (np.all(np.isfinite(state.p)) and np.all(np.isfinite(state.v))):
        raise ValueError("non-finite state")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(f_ext))):
        raise ValueError(f"non-finite force input: u={u}, f_ext={f_ext}")

    g = params.gravity_vec
    accel_input = (u + f_ext) / params.mass

    def deriv(_t, y):
        return np.concatenate([y[3:], g + accel_input])

    y = rk4_step(deriv, 0.0, np.concatenate([state.p, state.v]), params.dt)

    if np.linalg.norm(u) > 1e-9:
        target = quat_from_two_vectors(np.array([0.0, 0.0, 1.0]), u)
    else:
        target = state.quat
    alpha = 1.0 - np.exp(-params.dt / params.attitude_tau)
    quat = quat_slerp(state.quat, target, alpha)

    return RobotState(y[:3], y[3:], quat, motor_commands(u, quat, params))


def residual_force(state: RobotState, cond: DisturbanceCondition,
                   params: SimParams) -> np.ndarray:
    """Ground-truth unmodeled force: relative-wind drag plus the latent drift
    channel. Deterministic in (state, cond)."""
    wind = cond.wind.at(state.p)
    vrel = state.v - wind
    f_m = -params.drag_linear * vrel - params.drag_quad * np.linalg.norm(vrel) * vrel
    f_r = params.wr_force_gain * cond.latent.value * (
        1.0 + params.wr_vel_gain * np.linalg.norm(state.v)
    )
    return f_m + f_r


def advance_latent(cond: DisturbanceCondition, dt: float,
                   rng: np.random.Generator) -> DisturbanceCondition:
    """Exact OU discretization of the latent drift, clamped to +-bound."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    lat = cond.latent
    phi = np.exp(-dt / lat.tau)
    noise_scale = lat.sigma * np.sqrt(1.0 - phi * phi)
    value = lat.mean + (lat.value - lat.mean) * phi + noise_scale * rng.standard_normal(3)
    value = np.clip(value, -lat.bound, lat.bound)
    return replace(cond, latent=replace(lat, value=value))


# --- reference trajectories --------------------------------------------------

TRAJECTORY_KINDS = ("figure8", "wave", "hover")

# 3-harmonic triangle partial sum peaks at 259/225 (theta = pi/2); this scale
# makes the wave sweep span exactly 0.8 m
_TRI_SCALE = 0.4 * 225.0 / 259.0


@dataclass
class TrajectoryRef:
    q_d: np.ndarray
    qd_dot: np.ndarray
    qd_ddot: np.ndarray
    kind: str


def gen_trajectory(kind: str, t: float, period: float = 8.0,
                   center=(0.0, 0.0, 1.0)) -> TrajectoryRef:
    """Reference position/velocity/acceleration at time t.

    figure8: 1.0 m x 0.5 m Lissajous at constant height.
    wave:    0.8 m x-oscillation against a smoothed-triangle y sweep of 0.8 m.
    hover:   constant center point.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    c = np.asarray(center, dtype=float)
    w = 2.0 * np.pi / period
    if kind == "figure8":
        q = c + np.array([0.5 * np.sin(w * t), 0.25 * np.sin(2 * w * t), 0.0])
        dq = np.array([0.5 * w * np.cos(w * t), 0.5 * w * np.cos(2 * w * t), 0.0])
        ddq = np.array(
            [-0.5 * w * w * np.sin(w * t), -w * w * np.sin(2 * w * t), 0.0]
        )
    elif kind == "wave":
        th = 0.5 * w * t  # one sweep per two x periods
        y = _TRI_SCALE * (np.sin(th) - np.sin(3 * th) / 9.0 + np.sin(5 * th) / 25.0)
        dy = _TRI_SCALE * 0.5 * w * (
            np.cos(th) - np.cos(3 * th) / 3.0 + np.cos(5 * th) / 5.0
        )
        ddy = _TRI_SCALE * (0.5 * w) ** 2 * (
            -np.sin(th) + np.sin(3 * th) - np.sin(5 * th)
        )
        q = c + np.array([0.4 * np.sin(w * t), y, 0.0])
        dq = np.array([0.4 * w * np.cos(w * t), dy, 0.0])
        ddq = np.array([-0.4 * w * w * np.sin(w * t), ddy, 0.0])
    elif kind == "hover":
        q = c.copy()
        dq = np.zeros(3)
        ddq = np.zeros(3)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return TrajectoryRef(q, dq, ddq, kind)
