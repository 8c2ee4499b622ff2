"""Layered networks of stochastic binary neurons and their on-line learner.

Propagation has one time step of delay per layer: at every step, each
non-input layer integrates the *previous* step's activities of the layer
below, so an input change first reaches the output after as many steps as
there are non-input layers.

Learning is reward-modulated and strictly local. After each propagation
step, every synapse decays its eligibility trace by beta and adds the score
of the firing decision it just participated in; the weight then moves by
gamma * reward * trace. Each neuron's update touches only its own row of
the layer's weight and trace matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .neuron import Representation, activity_as_unit, fire_layer, sigmoid
from .seeding import generator_from, root_sequence


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and learning hyperparameters.

    layer_sizes[0] is the input count; later entries are neuron layers.
    Initial weights are drawn i.i.d. uniform on
    (-weight_init_halfwidth, +weight_init_halfwidth). With bias_enabled,
    each neuron gets one extra ordinary synapse fed by a constant 1.0.
    """

    layer_sizes: tuple[int, ...]
    beta: float
    gamma: float
    weight_init_halfwidth: float
    representation: Representation = Representation.SYMMETRIC_PM1
    seed: int = 0
    bias_enabled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least one non-input layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive: {self.layer_sizes}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0, 1): {self.beta}")
        # gamma = 0 disables learning (used by frozen evaluation and controls)
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative: {self.gamma}")
        if self.weight_init_halfwidth < 0.0:
            raise ValueError(f"weight_init_halfwidth must be nonnegative: {self.weight_init_halfwidth}")


@dataclass
class _LayerStep:
    """Quantities of the most recent step, kept for the learning update."""

    presyn: np.ndarray      # activities (plus bias term) that fed the potentials
    potentials: np.ndarray
    activities: np.ndarray


class LayeredNetwork:
    """Feedforward network with per-layer one-step propagation delay.

    `weights[k]` and `traces[k]` have shape (layer_sizes[k+1], fan_in) where
    fan_in = layer_sizes[k] (+1 when bias is enabled; the bias column is
    last). Streams: one generator for weight init, one per non-input layer
    for firing draws, all spawned from config.seed.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        sizes = config.layer_sizes
        self.n_layers = len(sizes) - 1  # non-input layers
        children = root_sequence(config.seed).spawn(1 + self.n_layers)
        init_rng = generator_from(children[0])
        self._fire_rngs = [generator_from(c) for c in children[1:]]

        hw = config.weight_init_halfwidth
        self.weights: list[np.ndarray] = []
        self.traces: list[np.ndarray] = []
        for k in range(self.n_layers):
            fan_in = sizes[k] + (1 if config.bias_enabled else 0)
            w = init_rng.uniform(-hw, hw, size=(sizes[k + 1], fan_in)) if hw > 0 \
                else np.zeros((sizes[k + 1], fan_in))
            self.weights.append(w)
            self.traces.append(np.zeros_like(w))

        nofire = config.representation.nofire_value
        self.activities: list[np.ndarray] = [np.full(n, nofire, dtype=float) for n in sizes]
        self.step_counter = 0
        self.last_step: list[_LayerStep] | None = None

    @property
    def representation(self) -> Representation:
        return self.config.representation

    def _with_bias(self, activities: np.ndarray) -> np.ndarray:
        if not self.config.bias_enabled:
            return activities
        return np.concatenate([activities, [1.0]])

    def step(self, inputs) -> np.ndarray:
        """Advance one time step and return the output layer's activities.

        Every non-input layer integrates the buffered previous-step
        activities of the layer below; the new input vector only enters the
        buffers afterwards. Firing draws come from the network's own
        per-layer Philox streams (spawned from config.seed), so the step
        sequence is reproducible for a given config regardless of how
        layers are iterated.
        """
        inputs = np.asarray(inputs, dtype=float)
        if inputs.shape != (self.config.layer_sizes[0],):
            raise ValueError(
                f"expected {self.config.layer_sizes[0]} inputs, got shape {inputs.shape}"
            )
        prev = self.activities
        steps: list[_LayerStep] = []
        new_acts: list[np.ndarray] = [inputs.copy()]
        for k in range(self.n_layers):
            presyn = self._with_bias(prev[k])
            v = self.weights[k] @ presyn
            u = fire_layer(v, self._fire_rngs[k], self.representation)
            steps.append(_LayerStep(presyn=presyn, potentials=v, activities=u))
            new_acts.append(u)
        self.activities = new_acts
        self.last_step = steps
        self.step_counter += 1
        return new_acts[-1].copy()

    def learn(self, reward: float) -> None:
        """Trace decay-and-increment with the step just taken, then the
        reward-modulated weight update.

        Must be called exactly once after each `step` (with the reward
        observed for that step). z <- beta*z + (u - sigma(v)) * presyn on
        the unit scale of the representation; w <- w + gamma*reward*z.
        """
        if self.last_step is None:
            raise RuntimeError("learn() called without a preceding step()")
        beta, gamma = self.config.beta, self.config.gamma
        for k, s in enumerate(self.last_step):
            u01 = activity_as_unit(s.activities, self.representation)
            delta = u01 - sigmoid(s.potentials)
            z = self.traces[k]
            z *= beta
            z += np.outer(delta, s.presyn)
            self.weights[k] += gamma * reward * z
        self.last_step = None

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Versioned JSON text dump of config + weights + traces + step counter.

        Floats are serialized with Python's shortest exact repr, so a
        load/save cycle is bit-exact. Activity buffers and rng streams are
        not part of the format; loading reinitializes buffers to the
        no-fire value.
        """
        payload = {
            "format_version": 1,
            "config": {
                "layer_sizes": list(self.config.layer_sizes),
                "beta": self.config.beta,
                "gamma": self.config.gamma,
                "weight_init_halfwidth": self.config.weight_init_halfwidth,
                "representation": self.config.representation.value,
                "seed": self.config.seed,
                "bias_enabled": self.config.bias_enabled,
            },
            "step_counter": self.step_counter,
            "weights": [w.tolist() for w in self.weights],
            "traces": [z.tolist() for z in self.traces],
        }
        text = json.dumps(payload, sort_keys=True, indent=1)
        with open(path, "w", encoding="ascii") as f:
            f.write(text + "\n")

    @classmethod
    def load_checkpoint(cls, path) -> "LayeredNetwork":
        with open(path, "r", encoding="ascii") as f:
            payload = json.load(f)
        if payload.get("format_version") != 1:
            raise ValueError(f"unknown checkpoint format_version: {payload.get('format_version')!r}")
        c = payload["config"]
        config = NetworkConfig(
            layer_sizes=tuple(c["layer_sizes"]),
            beta=c["beta"],
            gamma=c["gamma"],
            weight_init_halfwidth=c["weight_init_halfwidth"],
            representation=Representation(c["representation"]),
            seed=c["seed"],
            bias_enabled=c["bias_enabled"],
        )
        net = cls(config)
        net.step_counter = int(payload["step_counter"])
        weights = [np.asarray(w, dtype=float) for w in payload["weights"]]
        traces = [np.asarray(z, dtype=float) for z in payload["traces"]]
        for have, want in zip(weights, net.weights):
            if have.shape != want.shape:
                raise ValueError(f"checkpoint weight shape {have.shape} != expected {want.shape}")
        net.weights = weights
        net.traces = traces
        return net

    def clone_for_evaluation(self, seed: int) -> "LayeredNetwork":
        """Copy of this network with the same weights, zero traces, fresh
        buffers and its own firing streams (gamma forced to 0)."""
        cfg = NetworkConfig(
            layer_sizes=self.config.layer_sizes,
            beta=self.config.beta,
            gamma=0.0,
            weight_init_halfwidth=self.config.weight_init_halfwidth,
            representation=self.config.representation,
            seed=seed,
            bias_enabled=self.config.bias_enabled,
        )
        net = LayeredNetwork(cfg)
        net.weights = [w.copy() for w in self.weights]
        net.traces = [np.zeros_like(z) for z in self.traces]
        return net


def init_network(config: NetworkConfig) -> LayeredNetwork:
    """Build a network per `config` (uniform weights, zero traces, no-fire buffers)."""
    return LayeredNetwork(config)


def step_network(net: LayeredNetwork, inputs) -> np.ndarray:
    """Advance `net` one step on `inputs`; returns the output activities."""
    return net.step(inputs)


def learn_step(net: LayeredNetwork, reward: float) -> None:
    """Apply the trace and weight updates for the step just taken."""
    net.learn(reward)


def average_reward(rewards) -> float:
    """Arithmetic mean of a reward sequence (finite-horizon average-reward estimate)."""
    r = np.asarray(rewards, dtype=float)
    if r.size == 0:
        raise ValueError("average_reward of an empty sequence")
    return float(r.mean())
