"""Compiled inner loop for the pendulum learning run.

The pendulum experiment needs tens of millions of control steps for the
slow, faithful learning constants to show progress; the pure-Python loop
costs ~100 us per step, the compiled one well under 1 us. This kernel
replicates the reference implementations (`LayeredNetwork.step/learn` and
`pendulum_step`) operation for operation on the same Philox streams:
hidden- and output-layer firing draws are pregenerated from the per-layer
generators in the exact order the reference consumes them, and episode
resets stay on the Python side so the environment stream is shared too.
It applies to the standard experiment shape: one hidden layer, symmetric
activities, no bias synapse.

The kernel returns at every fall (and when a pregenerated chunk runs out),
so the wrapper owns all bookkeeping: resets, windows, and the optional
per-step trajectory log.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .envs.pendulum import PendulumParams

CHUNK_STEPS = 65_536


@njit(cache=False)
def _sigmoid(a: float) -> float:
    if a > 700.0:
        a = 700.0
    elif a < -700.0:
        a = -700.0
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit(cache=False)
def _plane_rk4(pos, vel, theta, omega, force, dt, M, m, L, g, mu, cj):
    # identical arithmetic to envs.pendulum._plane_derivatives/_rk4_plane
    p1, v1, t1, w1 = pos, vel, theta, omega
    k1p, k1v, k1t, k1w = _plane_deriv(p1, v1, t1, w1, force, M, m, L, g, mu, cj)
    p2 = pos + 0.5 * dt * k1p
    v2 = vel + 0.5 * dt * k1v
    t2 = theta + 0.5 * dt * k1t
    w2 = omega + 0.5 * dt * k1w
    k2p, k2v, k2t, k2w = _plane_deriv(p2, v2, t2, w2, force, M, m, L, g, mu, cj)
    p3 = pos + 0.5 * dt * k2p
    v3 = vel + 0.5 * dt * k2v
    t3 = theta + 0.5 * dt * k2t
    w3 = omega + 0.5 * dt * k2w
    k3p, k3v, k3t, k3w = _plane_deriv(p3, v3, t3, w3, force, M, m, L, g, mu, cj)
    p4 = pos + dt * k3p
    v4 = vel + dt * k3v
    t4 = theta + dt * k3t
    w4 = omega + dt * k3w
    k4p, k4v, k4t, k4w = _plane_deriv(p4, v4, t4, w4, force, M, m, L, g, mu, cj)
    pos = pos + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    vel = vel + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    theta = theta + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t)
    omega = omega + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
    return pos, vel, theta, omega


@njit(cache=False)
def _plane_deriv(pos, vel, theta, omega, force, M, m, L, g, mu, cj):
    s = math.sin(theta)
    c = math.cos(theta)
    f = force
    if vel != 0.0 and mu > 0.0:
        f -= math.copysign(mu * (M + m) * g, vel)
    acc = (f + m * L * omega * omega * s - m * g * s * c) / (M + m * s * s)
    alpha = (g * s - acc * c) / L
    if cj > 0.0:
        alpha -= cj * omega / (m * L * L)
    return vel, acc, omega, alpha


@njit(cache=False)
def _pendulum_chunk(W1, Z1, W2, Z2, buf_in, buf_h, buf_out, env9,
                    uh, uo, cursor, max_steps,
                    beta, gamma, dt, M, m, L, g, mu, cj, thrust,
                    radius, side, scales, log_buf, do_log):
    """Run until a fall, the chunk's uniforms run out, or max_steps.

    Returns (steps_taken, new_cursor, fell).
    """
    n_in = buf_in.shape[0]
    H = buf_h.shape[0]
    obs = np.empty(n_in)
    vh = np.empty(H)
    vo = np.empty(2)
    steps = 0
    fell = False
    while steps < max_steps and cursor < uh.shape[0]:
        for i in range(n_in):
            obs[i] = env9[i] / scales[i]
        # potentials from the previous step's buffered activities
        for i in range(H):
            acc = 0.0
            for j in range(n_in):
                acc += W1[i, j] * buf_in[j]
            vh[i] = acc
        for i in range(2):
            acc = 0.0
            for j in range(H):
                acc += W2[i, j] * buf_h[j]
            vo[i] = acc
        # sample symmetric activities, one pregenerated uniform per neuron
        uh_row = uh[cursor]
        uo_row = uo[cursor]
        ah = np.empty(H)
        for i in range(H):
            ah[i] = 1.0 if uh_row[i] < _sigmoid(vh[i]) else -1.0
        ao = np.empty(2)
        for i in range(2):
            ao[i] = 1.0 if uo_row[i] < _sigmoid(vo[i]) else -1.0

        sx = 1.0 if ao[0] > 0 else -1.0
        sy = 1.0 if ao[1] > 0 else -1.0
        x, vx, thx, wx = _plane_rk4(env9[0], env9[2], env9[4], env9[6],
                                    sx * thrust, dt, M, m, L, g, mu, cj)
        y, vy, thy, wy = _plane_rk4(env9[1], env9[3], env9[5], env9[7],
                                    sy * thrust, dt, M, m, L, g, mu, cj)
        lo = radius
        hi = side - radius
        if x < lo:
            x = lo
            vx = -vx
        elif x > hi:
            x = hi
            vx = -vx
        if y < lo:
            y = lo
            vy = -vy
        elif y > hi:
            y = hi
            vy = -vy
        env9[0] = x
        env9[1] = y
        env9[2] = vx
        env9[3] = vy
        env9[4] = thx
        env9[5] = thy
        env9[6] = wx
        env9[7] = wy
        env9[8] = env9[8] + dt
        fallen = abs(thx) >= math.pi / 2 or abs(thy) >= math.pi / 2
        r = -1.0 if fallen else 0.0

        # trace decay-and-increment with this step's quantities, then the
        # reward-modulated weight update (same op order as the reference)
        c1 = gamma * r
        for i in range(H):
            d = (ah[i] + 1.0) / 2.0 - _sigmoid(vh[i])
            for j in range(n_in):
                z = beta * Z1[i, j] + d * buf_in[j]
                Z1[i, j] = z
                W1[i, j] = W1[i, j] + c1 * z
        for i in range(2):
            d = (ao[i] + 1.0) / 2.0 - _sigmoid(vo[i])
            for j in range(H):
                z = beta * Z2[i, j] + d * buf_h[j]
                Z2[i, j] = z
                W2[i, j] = W2[i, j] + c1 * z

        if do_log:
            log_buf[steps, 0] = x
            log_buf[steps, 1] = y
            log_buf[steps, 2] = vx
            log_buf[steps, 3] = vy
            log_buf[steps, 4] = thx
            log_buf[steps, 5] = thy
            log_buf[steps, 6] = wx
            log_buf[steps, 7] = wy
            log_buf[steps, 8] = sx
            log_buf[steps, 9] = sy
            log_buf[steps, 10] = r

        for j in range(n_in):
            buf_in[j] = obs[j]
        for i in range(H):
            buf_h[i] = ah[i]
        for i in range(2):
            buf_out[i] = ao[i]

        cursor += 1
        steps += 1
        if fallen:
            fell = True
            break
    return steps, cursor, fell


class PendulumFastLoop:
    """Drives `_pendulum_chunk` against the same streams as the reference
    loop: per-layer firing uniforms pregenerated chunk-wise, falls resolved
    on the Python side with the shared environment stream."""

    def __init__(self, net, params: PendulumParams, log_raw: bool = False):
        if net.config.bias_enabled or net.n_layers != 2:
            raise ValueError("fast loop supports one hidden layer without bias")
        self.net = net
        self.params = params
        self.W1, self.W2 = net.weights
        self.Z1, self.Z2 = net.traces
        self.buf_in = net.activities[0]
        self.buf_h = net.activities[1]
        self.buf_out = net.activities[2]
        self.env9 = np.zeros(9)
        self.chunk = CHUNK_STEPS
        self._uh = None
        self._uo = None
        self._cursor = self.chunk  # force a refill on first use
        self.log_raw = log_raw
        self.log_rows: list[np.ndarray] = []
        from .envs.pendulum import OBSERVATION_SCALES

        self.scales = OBSERVATION_SCALES.copy()

    def load_state(self, state) -> None:
        self.env9[:] = (state.x, state.y, state.vx, state.vy,
                        state.theta_x, state.theta_y,
                        state.omega_x, state.omega_y, state.elapsed)

    def _refill(self):
        H = self.buf_h.shape[0]
        self._uh = self.net._fire_rngs[0].random((self.chunk, H))
        self._uo = self.net._fire_rngs[1].random((self.chunk, 2))
        self._cursor = 0

    def run_episode_steps(self, max_steps: int) -> tuple[int, bool]:
        """Advance until a fall or max_steps; returns (steps, fell)."""
        p = self.params
        total = 0
        fell = False
        while total < max_steps and not fell:
            if self._cursor >= self.chunk:
                self._refill()
            log_buf = (np.empty((min(max_steps - total, self.chunk - self._cursor), 11))
                       if self.log_raw else np.empty((1, 11)))
            steps, self._cursor, fell = _pendulum_chunk(
                self.W1, self.Z1, self.W2, self.Z2,
                self.buf_in, self.buf_h, self.buf_out, self.env9,
                self._uh, self._uo, self._cursor, max_steps - total,
                self.net.config.beta, self.net.config.gamma,
                p.dt, p.puck_mass, p.bob_mass, p.rod_length, p.gravity,
                p.ground_friction, p.joint_friction, p.thrust,
                p.puck_radius, p.arena_side, self.scales,
                log_buf, self.log_raw)
            if self.log_raw and steps:
                self.log_rows.append(log_buf[:steps].copy())
            total += steps
            self.net.step_counter += steps
        return total, fell
