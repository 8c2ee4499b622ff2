"""Inverted pendulum on a thrust-driven puck in a square arena.

The puck slides inside a 5 m x 5 m square; a weightless rod with a point
mass at its tip stands on the puck. Two bang-bang thrusts (one per axis,
sign chosen by the controller every step) push the puck. The dynamics are
modeled as two decoupled planar cart-pole systems that share the puck
mass: the (x, theta_x) pair evolves in the x-vertical plane and (y,
theta_y) in the y-vertical plane. The pendulum has fallen once either tilt
reaches 90 degrees; reward is 0 while upright and -1 on falling.

Integration is classical RK4 at the fixed control period dt = 0.02 s (one
step per control decision, no substeps); on the frictionless system it
conserves per-plane mechanical energy to ~1e-5 relative over 500 steps.
Wall contact is an elastic reflection: the offending velocity component is
negated and the position is clamped to the puck radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .base import Environment


@dataclass(frozen=True)
class PendulumParams:
    arena_side: float = 5.0          # m
    dt: float = 0.02                 # s
    gravity: float = 9.8             # m/s^2
    puck_radius: float = 0.05        # m
    puck_mass: float = 1.0           # kg
    rod_length: float = 0.5          # m, point mass at the tip
    bob_mass: float = 0.1            # kg
    ground_friction: float = 5e-4    # Coulomb coefficient, normal force (M+m)g
    joint_friction: float = 0.0      # viscous torque coefficient at the pivot
    thrust: float = 10.0             # N per axis, sign chosen by the controller
    reset_box_halfwidth: float = 0.5  # "near the centre": 1 m box around (2.5, 2.5)

    def __post_init__(self):
        for name in ("arena_side", "dt", "gravity", "puck_radius", "puck_mass",
                     "rod_length", "bob_mass", "thrust"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PendulumState:
    x: float
    y: float
    vx: float
    vy: float
    theta_x: float   # rad, tilt in the x-vertical plane, 0 = upright
    theta_y: float
    omega_x: float   # rad/s
    omega_y: float
    elapsed: float = 0.0  # s

    @property
    def fallen(self) -> bool:
        return max(abs(self.theta_x), abs(self.theta_y)) >= math.pi / 2


FALL_REWARD = -1.0
UPRIGHT_REWARD = 0.0


def pendulum_reward(state: PendulumState) -> float:
    """-1 once the pendulum has hit the ground (tilt >= 90 deg), else 0."""
    return FALL_REWARD if state.fallen else UPRIGHT_REWARD


def pendulum_reset(rng: np.random.Generator,
                   params: PendulumParams = PendulumParams()) -> PendulumState:
    """Puck placed uniformly in the centre box, everything else at rest and
    the pendulum exactly vertical."""
    c = params.arena_side / 2.0
    hw = params.reset_box_halfwidth
    x = float(rng.uniform(c - hw, c + hw))
    y = float(rng.uniform(c - hw, c + hw))
    return PendulumState(x=x, y=y, vx=0.0, vy=0.0,
                         theta_x=0.0, theta_y=0.0, omega_x=0.0, omega_y=0.0)


def _plane_derivatives(pos, vel, theta, omega, force, params: PendulumParams):
    """Cart-pole equations for one plane: cart = puck mass, point-mass bob."""
    M, m = params.puck_mass, params.bob_mass
    L, g = params.rod_length, params.gravity
    s, c = math.sin(theta), math.cos(theta)
    f = force
    if vel != 0.0 and params.ground_friction > 0.0:
        f -= math.copysign(params.ground_friction * (M + m) * g, vel)
    acc = (f + m * L * omega * omega * s - m * g * s * c) / (M + m * s * s)
    alpha = (g * s - acc * c) / L
    if params.joint_friction > 0.0:
        alpha -= params.joint_friction * omega / (m * L * L)
    return vel, acc, omega, alpha


def _rk4_plane(pos, vel, theta, omega, force, params: PendulumParams):
    dt = params.dt
    y0 = (pos, vel, theta, omega)
    k1 = _plane_derivatives(*y0, force, params)
    k2 = _plane_derivatives(*(a + 0.5 * dt * b for a, b in zip(y0, k1)), force, params)
    k3 = _plane_derivatives(*(a + 0.5 * dt * b for a, b in zip(y0, k2)), force, params)
    k4 = _plane_derivatives(*(a + dt * b for a, b in zip(y0, k3)), force, params)
    return tuple(a + dt / 6.0 * (p + 2 * q + 2 * r + s)
                 for a, p, q, r, s in zip(y0, k1, k2, k3, k4))


def _reflect(pos, vel, params: PendulumParams):
    lo = params.puck_radius
    hi = params.arena_side - params.puck_radius
    if pos < lo:
        return lo, -vel
    if pos > hi:
        return hi, -vel
    return pos, vel


def pendulum_step(state: PendulumState, thrust_signs: tuple[float, float],
                  params: PendulumParams = PendulumParams()) -> PendulumState:
    """Advance the dynamics by one control period.

    `thrust_signs` are +-1 per axis (the thrust is never zero). Raises if
    called on a fallen state; the episode must be reset first.
    """
    if state.fallen:
        raise RuntimeError("pendulum_step called on a fallen state; reset the episode")
    sx, sy = thrust_signs
    if abs(sx) != 1.0 or abs(sy) != 1.0:
        raise ValueError(f"thrust signs must be +-1, got {thrust_signs!r}")
    fx, fy = sx * params.thrust, sy * params.thrust
    x, vx, thx, wx = _rk4_plane(state.x, state.vx, state.theta_x, state.omega_x, fx, params)
    y, vy, thy, wy = _rk4_plane(state.y, state.vy, state.theta_y, state.omega_y, fy, params)
    x, vx = _reflect(x, vx, params)
    y, vy = _reflect(y, vy, params)
    return PendulumState(x=x, y=y, vx=vx, vy=vy,
                         theta_x=thx, theta_y=thy, omega_x=wx, omega_y=wy,
                         elapsed=state.elapsed + params.dt)


def plane_energy(vel: float, theta: float, omega: float,
                 params: PendulumParams = PendulumParams()) -> float:
    """Mechanical energy of one planar cart-pole subsystem."""
    M, m = params.puck_mass, params.bob_mass
    L, g = params.rod_length, params.gravity
    s, c = math.sin(theta), math.cos(theta)
    ke = 0.5 * M * vel * vel + 0.5 * m * ((vel + L * omega * c) ** 2 + (L * omega * s) ** 2)
    return ke + m * g * L * c


# per-component divisors that bring typical magnitudes to order 1:
# positions span [0, 5]; speeds rarely exceed a few m/s; tilt is bounded by
# pi/2 while upright; omega is a few rad/s (natural frequency sqrt(g/L) ~ 4.4)
OBSERVATION_SCALES = np.array([2.5, 2.5, 2.5, 2.5,
                               math.pi / 2, math.pi / 2, 5.0, 5.0])


def scale_observation(state: PendulumState) -> np.ndarray:
    """Network input: (x, y, vx, vy, theta_x, theta_y, omega_x, omega_y),
    each divided by its fixed documented scale."""
    raw = np.array([state.x, state.y, state.vx, state.vy,
                    state.theta_x, state.theta_y, state.omega_x, state.omega_y])
    return raw / OBSERVATION_SCALES


class InvertedPendulum(Environment):
    """Environment-contract wrapper around the puck-pendulum dynamics.

    `act` takes the two output activities; an activity > 0 selects +thrust
    on its axis, otherwise -thrust (so the fire value maps to + under both
    representations).
    """

    def __init__(self, params: PendulumParams = PendulumParams()):
        self.params = params
        self.state: PendulumState | None = None
        self._last_reward = UPRIGHT_REWARD
        self.last_signs: tuple[float, float] = (1.0, 1.0)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.state = pendulum_reset(rng, self.params)
        self._last_reward = UPRIGHT_REWARD
        return self.observe()

    def observe(self) -> np.ndarray:
        if self.state is None:
            raise RuntimeError("observe before reset")
        return scale_observation(self.state)

    def act(self, actions: np.ndarray) -> None:
        if self.state is None:
            raise RuntimeError("act before reset")
        signs = (1.0 if actions[0] > 0 else -1.0,
                 1.0 if actions[1] > 0 else -1.0)
        self.last_signs = signs
        self.state = pendulum_step(self.state, signs, self.params)
        self._last_reward = pendulum_reward(self.state)

    def reward(self) -> float:
        return self._last_reward

    def done(self) -> bool:
        return self.state is not None and self.state.fallen
