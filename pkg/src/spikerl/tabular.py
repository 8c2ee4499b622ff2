"""Exact and simulated quantities for tiny finite POMDPs.

Verification bed for the learning rule: builds the policy-induced Markov
chain of an explicit finite POMDP, solves for the exact average reward and
its gradient (by central finite differences, independent of any estimator
code path), runs the on-line trace-based gradient estimator, and checks
that a team of independent agents computes bit-for-bit the same updates as
the equivalent single joint agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

ROW_SUM_TOL = 1e-12


class FixtureError(ValueError):
    """Raised for malformed POMDP definitions (files or in-memory)."""


def _check_stochastic(matrix: np.ndarray, what: str) -> None:
    for i, row in enumerate(matrix):
        for j, p in enumerate(row):
            if p < 0.0:
                raise FixtureError(f"{what}, row {i}, column {j}: negative probability {p}")
        s = float(row.sum())
        if abs(s - 1.0) > ROW_SUM_TOL:
            raise FixtureError(f"{what}, row {i}: sums to {s!r}, must be 1 within {ROW_SUM_TOL}")


@dataclass(frozen=True)
class TabularPOMDP:
    """Finite POMDP: per-state observation distribution, per-action
    transition matrix, per-state reward."""

    observations: np.ndarray  # (S, Y), row-stochastic
    transitions: np.ndarray   # (U, S, S), each action's matrix row-stochastic
    rewards: np.ndarray       # (S,)

    def __post_init__(self):
        object.__setattr__(self, "observations", np.asarray(self.observations, dtype=float))
        object.__setattr__(self, "transitions", np.asarray(self.transitions, dtype=float))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        S = self.observations.shape[0]
        if self.observations.ndim != 2:
            raise FixtureError("observation matrix must be 2-D (states x observations)")
        if self.transitions.ndim != 3 or self.transitions.shape[1:] != (S, S):
            raise FixtureError(
                f"transition stack must have shape (actions, {S}, {S}), got {self.transitions.shape}"
            )
        if self.rewards.shape != (S,):
            raise FixtureError(f"reward vector must have length {S}, got {self.rewards.shape}")
        _check_stochastic(self.observations, "observation matrix")
        for u in range(self.transitions.shape[0]):
            _check_stochastic(self.transitions[u], f"transition matrix for action {u}")

    @property
    def n_states(self) -> int:
        return self.observations.shape[0]

    @property
    def n_obs(self) -> int:
        return self.observations.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]


class TabularPolicy:
    """Softmax policy over a finite action set, one parameter row per
    observation. Probabilities are strictly positive, as the score
    (grad mu / mu) requires."""

    def __init__(self, theta: np.ndarray):
        self.theta = np.asarray(theta, dtype=float)
        if self.theta.ndim != 2:
            raise ValueError("theta must be (observations x actions)")

    @property
    def n_obs(self) -> int:
        return self.theta.shape[0]

    @property
    def n_actions(self) -> int:
        return self.theta.shape[1]

    def probs_matrix(self) -> np.ndarray:
        t = self.theta - self.theta.max(axis=1, keepdims=True)
        e = np.exp(t)
        return e / e.sum(axis=1, keepdims=True)

    def action_probs(self, y: int) -> np.ndarray:
        return self.probs_matrix()[y]

    def score(self, y: int, u: int) -> np.ndarray:
        """grad_theta log mu_u(y, theta): zero except row y, which is
        onehot(u) - action_probs(y)."""
        out = np.zeros_like(self.theta)
        probs = self.action_probs(y)
        out[y] = -probs
        out[y, u] += 1.0
        return out


# -- exact chain quantities ---------------------------------------------------


def policy_markov_matrix(pomdp: TabularPOMDP, policy: TabularPolicy) -> np.ndarray:
    """State chain under the policy: M_ij = sum_u E_nu[mu_u] p_ij(u)."""
    if policy.n_obs != pomdp.n_obs or policy.n_actions != pomdp.n_actions:
        raise ValueError(
            f"policy shape {policy.theta.shape} does not match POMDP "
            f"({pomdp.n_obs} observations, {pomdp.n_actions} actions)"
        )
    action_from_state = pomdp.observations @ policy.probs_matrix()  # (S, U)
    return np.einsum("su,usj->sj", action_from_state, pomdp.transitions)


class NonMixingChainError(RuntimeError):
    pass


def check_mixing(M: np.ndarray) -> None:
    """Require the chain to be primitive: some power of M up to exponent
    2*n_states must be strictly positive (irreducible and aperiodic)."""
    n = M.shape[0]
    B = M > 0.0
    P = B.copy()
    for _ in range(2 * n):
        if P.all():
            return
        P = (P.astype(np.int64) @ B.astype(np.int64)) > 0
    reach = np.eye(n, dtype=bool) | B
    for _ in range(n):
        reach = reach | ((reach.astype(np.int64) @ B.astype(np.int64)) > 0)
    if not reach.all():
        bad = [(i, j) for i in range(n) for j in range(n) if not reach[i, j]]
        raise NonMixingChainError(
            f"policy-induced chain is reducible: no path for state pairs {bad}"
        )
    raise NonMixingChainError(
        f"policy-induced chain is periodic: no power up to {2 * n} is strictly positive"
    )


def stationary_distribution(M: np.ndarray) -> np.ndarray:
    """Solve pi M = pi, sum(pi) = 1 for a primitive chain."""
    n = M.shape[0]
    A = M.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def exact_eta(pomdp: TabularPOMDP, policy: TabularPolicy) -> float:
    """Exact long-run average reward of the policy on the POMDP."""
    M = policy_markov_matrix(pomdp, policy)
    check_mixing(M)
    pi = stationary_distribution(M)
    return float(pi @ pomdp.rewards)


def exact_grad_eta(pomdp: TabularPOMDP, policy: TabularPolicy,
                   h: float = 1e-5, richardson_rtol: float = 1e-6) -> np.ndarray:
    """Gradient of the exact average reward w.r.t. every policy parameter.

    Central finite differences with step h, cross-checked against step h/2
    (the two must agree to `richardson_rtol` relative, else RuntimeError).
    Deliberately shares no code with the trace-based estimator.
    """

    def fd(step: float) -> np.ndarray:
        g = np.zeros_like(policy.theta)
        for idx in np.ndindex(*policy.theta.shape):
            t = policy.theta.copy()
            t[idx] += step
            up = exact_eta(pomdp, TabularPolicy(t))
            t[idx] -= 2 * step
            down = exact_eta(pomdp, TabularPolicy(t))
            g[idx] = (up - down) / (2 * step)
        return g

    g_h = fd(h)
    g_h2 = fd(h / 2)
    scale = max(1.0, float(np.max(np.abs(g_h2))))
    gap = float(np.max(np.abs(g_h - g_h2)))
    if gap > richardson_rtol * scale:
        raise RuntimeError(
            f"finite-difference gradient failed the step-halving check: "
            f"max|g(h) - g(h/2)| = {gap:.3e} at h = {h}"
        )
    return g_h


# -- on-line estimator --------------------------------------------------------


def _row_cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    c[..., -1] = 1.0  # guard against cumsum rounding below the largest draw
    return c


@njit(cache=False)
def _trace_estimator_kernel(cum_obs, cum_act, cum_trans, rewards, probs,
                            beta, uniforms, x0):
    Y, U = cum_act.shape
    z = np.zeros((Y, U))
    acc = np.zeros((Y, U))
    x = x0
    T = uniforms.shape[0]
    for t in range(T):
        y = np.searchsorted(cum_obs[x], uniforms[t, 0], side="right")
        u = np.searchsorted(cum_act[y], uniforms[t, 1], side="right")
        for i in range(Y):
            for a in range(U):
                z[i, a] *= beta
        for a in range(U):
            z[y, a] -= probs[y, a]
        z[y, u] += 1.0
        x = np.searchsorted(cum_trans[u, x], uniforms[t, 2], side="right")
        r = rewards[x]
        for i in range(Y):
            for a in range(U):
                acc[i, a] += r * z[i, a]
    return acc / T


def estimate_gradient(pomdp: TabularPOMDP, policy: TabularPolicy,
                      beta: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """Trace-based on-line gradient estimate with frozen parameters.

    Simulates T steps; per step the trace decays by beta and adds the score
    of the sampled action, and the reward of the state reached *after* that
    action accumulates the product r * z. Returns (1/T) * sum_t r_t z_t.
    The trajectory starts in state 0 and draws all randomness from `rng`
    up front (three uniforms per step).
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1): {beta}")
    if T < 1:
        raise ValueError(f"T must be >= 1: {T}")
    probs = TabularPolicy(policy.theta).probs_matrix()
    uniforms = rng.random((int(T), 3))
    return _trace_estimator_kernel(
        _row_cumulative(pomdp.observations),
        _row_cumulative(probs),
        _row_cumulative(pomdp.transitions),
        pomdp.rewards,
        probs,
        float(beta),
        uniforms,
        0,
    )


# -- multi-agent decomposition ------------------------------------------------


def decode_mixed_radix(value: int, bases: list[int]) -> list[int]:
    """Digit decomposition, first base fastest-varying."""
    digits = []
    for b in bases:
        digits.append(value % b)
        value //= b
    if value:
        raise ValueError(f"value out of range for bases {bases}")
    return digits


def encode_mixed_radix(digits: list[int], bases: list[int]) -> int:
    value = 0
    for d, b in zip(reversed(digits), reversed(bases)):
        if not 0 <= d < b:
            raise ValueError(f"digit {d} out of range for base {b}")
        value = value * b + d
    return value


@dataclass(frozen=True)
class DecompositionReport:
    """Worst-case step-wise gaps between the joint-agent and the
    independent-agent computations."""

    max_trace_gap: float
    max_update_gap: float


def check_multiagent_decomposition(pomdp: TabularPOMDP,
                                   agent_policies: list[TabularPolicy],
                                   T: int, rng: np.random.Generator,
                                   beta: float = 0.9,
                                   gamma: float = 0.05) -> DecompositionReport:
    """Compare the joint agent's updates with the per-agent updates on one
    shared realized trajectory.

    The joint observation decodes into per-agent observations and the joint
    action encodes the per-agent actions (mixed radix, agent 0 fastest).
    The trajectory is sampled once under the initial parameters; both
    computations then replay it, the joint side via the explicit product
    rule on prod_i mu^i and the per-agent side via each agent's own
    grad mu / mu, each evolving its parameters by gamma * r * z. Gaps are
    tracked after every step.
    """
    obs_sizes = [p.n_obs for p in agent_policies]
    act_sizes = [p.n_actions for p in agent_policies]
    if math.prod(obs_sizes) != pomdp.n_obs:
        raise ValueError(
            f"joint observation space {pomdp.n_obs} is not the product of "
            f"agent observation spaces {obs_sizes}"
        )
    if math.prod(act_sizes) != pomdp.n_actions:
        raise ValueError(
            f"action-tuple decoding mismatch: joint action space {pomdp.n_actions} "
            f"is not the product of agent action spaces {act_sizes}"
        )
    n_agents = len(agent_policies)

    # one frozen trajectory under the initial parameters
    cum_obs = _row_cumulative(pomdp.observations)
    cum_trans = _row_cumulative(pomdp.transitions)
    probs0 = [p.probs_matrix() for p in agent_policies]
    cum_act0 = [_row_cumulative(m) for m in probs0]
    x = 0
    ys = np.empty((T, n_agents), dtype=np.int64)
    us = np.empty((T, n_agents), dtype=np.int64)
    rs = np.empty(T)
    for t in range(T):
        y_joint = int(np.searchsorted(cum_obs[x], rng.random(), side="right"))
        y_parts = decode_mixed_radix(y_joint, obs_sizes)
        u_parts = [int(np.searchsorted(cum_act0[i][y_parts[i]], rng.random(), side="right"))
                   for i in range(n_agents)]
        u_joint = encode_mixed_radix(u_parts, act_sizes)
        x = int(np.searchsorted(cum_trans[u_joint, x], rng.random(), side="right"))
        ys[t] = y_parts
        us[t] = u_parts
        rs[t] = pomdp.rewards[x]

    theta_joint = [p.theta.copy() for p in agent_policies]  # blocks of the joint vector
    z_joint = [np.zeros_like(p.theta) for p in agent_policies]
    theta_solo = [p.theta.copy() for p in agent_policies]
    z_solo = [np.zeros_like(p.theta) for p in agent_policies]

    max_trace_gap = 0.0
    max_update_gap = 0.0
    for t in range(T):
        # joint agent: score of the product policy, block by block
        probs_j = [TabularPolicy(th).action_probs(int(ys[t, i]))
                   for i, th in enumerate(theta_joint)]
        mu_parts = [probs_j[i][us[t, i]] for i in range(n_agents)]
        mu_joint = 1.0
        for m in mu_parts:
            mu_joint *= m
        for i in range(n_agents):
            others = 1.0
            for j in range(n_agents):
                if j != i:
                    others *= mu_parts[j]
            grad_mu_row = mu_parts[i] * _onehot_minus(probs_j[i], int(us[t, i]))
            inc = np.zeros_like(theta_joint[i])
            inc[ys[t, i]] = (others * grad_mu_row) / mu_joint
            z_joint[i] = beta * z_joint[i] + inc
            theta_joint[i] = theta_joint[i] + gamma * rs[t] * z_joint[i]

        # independent agents: each one's own grad mu / mu
        for i in range(n_agents):
            probs_i = TabularPolicy(theta_solo[i]).action_probs(int(ys[t, i]))
            mu_i = probs_i[us[t, i]]
            grad_mu_row = mu_i * _onehot_minus(probs_i, int(us[t, i]))
            inc = np.zeros_like(theta_solo[i])
            inc[ys[t, i]] = grad_mu_row / mu_i
            z_solo[i] = beta * z_solo[i] + inc
            theta_solo[i] = theta_solo[i] + gamma * rs[t] * z_solo[i]

        for i in range(n_agents):
            max_trace_gap = max(max_trace_gap, float(np.max(np.abs(z_joint[i] - z_solo[i]))))
            max_update_gap = max(max_update_gap,
                                 float(np.max(np.abs(theta_joint[i] - theta_solo[i]))))
    return DecompositionReport(max_trace_gap=max_trace_gap, max_update_gap=max_update_gap)


def _onehot_minus(probs: np.ndarray, u: int) -> np.ndarray:
    out = -probs.copy()
    out[u] += 1.0
    return out


def angle_degrees(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between two flattened gradient estimates, in degrees."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("angle undefined for a zero vector")
    c = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return math.degrees(math.acos(c))


# -- fixture files ------------------------------------------------------------


def load_pomdp(path) -> TabularPOMDP:
    """Read a POMDP fixture file (YAML mapping with keys `states`,
    `observations`, `transitions`, `rewards`; extra keys are ignored).
    Malformed structure and non-stochastic rows are rejected with row and
    column diagnostics."""
    import yaml

    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise FixtureError(f"{path}: fixture must be a mapping")
    for key in ("states", "observations", "transitions", "rewards"):
        if key not in raw:
            raise FixtureError(f"{path}: missing key '{key}'")
    S = int(raw["states"])
    obs = np.asarray(raw["observations"], dtype=float)
    if obs.ndim != 2 or obs.shape[0] != S:
        raise FixtureError(f"{path}: observations must be {S} rows, got shape {obs.shape}")
    trans = np.asarray(raw["transitions"], dtype=float)
    if trans.ndim != 3 or trans.shape[1:] != (S, S):
        raise FixtureError(
            f"{path}: transitions must be a list of {S}x{S} matrices, got shape {trans.shape}"
        )
    rewards = np.asarray(raw["rewards"], dtype=float)
    if rewards.shape != (S,):
        raise FixtureError(f"{path}: rewards must have length {S}, got shape {rewards.shape}")
    try:
        return TabularPOMDP(observations=obs, transitions=trans, rewards=rewards)
    except FixtureError as e:
        raise FixtureError(f"{path}: {e}") from None


def load_agent_split(path) -> list[tuple[int, int]] | None:
    """Optional `agents` key of a fixture: list of [n_obs, n_actions] pairs
    describing the product structure for the decomposition check."""
    import yaml

    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    agents = raw.get("agents")
    if agents is None:
        return None
    return [(int(a), int(b)) for a, b in agents]
