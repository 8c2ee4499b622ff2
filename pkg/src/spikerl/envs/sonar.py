"""Sonar return classification task (rocks vs metal cylinders).

Reads the UCI "connectionist bench (sonar, mines vs. rocks)" file format:
one pattern per line, 60 comma-separated reals in [0, 1] followed by a
single letter label, R (rock) or M (metal cylinder). Patterns are shown to
the network unchanged (the 60 energies feed the input layer directly),
each held for a fixed number of steps; the output unit's activity is the
running prediction, scored against the pattern that was the input
`latency` steps earlier (the network's input-to-output delay). The mapping
is fixed: output fire = Metal, no-fire = Rock. Reward is 1 for a correct
per-step prediction, 0 otherwise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .base import Environment

N_BANDS = 60


class SonarLabel(enum.IntEnum):
    ROCK = 0
    METAL = 1


class SonarParseError(ValueError):
    pass


@dataclass(frozen=True)
class SonarDataset:
    """Pattern matrix (rows of 60 band energies in [0,1]) and labels.

    Arrays are write-protected: the dataset never changes during training.
    """

    patterns: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "patterns", np.asarray(self.patterns, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        if self.patterns.ndim != 2 or self.patterns.shape[1] != N_BANDS:
            raise ValueError(f"patterns must be (n, {N_BANDS}), got {self.patterns.shape}")
        if self.labels.shape != (self.patterns.shape[0],):
            raise ValueError("labels length must match pattern count")
        self.patterns.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return self.patterns.shape[0]

    def count(self, label: SonarLabel) -> int:
        return int(np.sum(self.labels == label))

    def subset(self, indices: np.ndarray) -> "SonarDataset":
        return SonarDataset(self.patterns[indices].copy(), self.labels[indices].copy())


def parse_sonar(path) -> SonarDataset:
    """Parse a sonar data file; malformed lines are reported by number."""
    patterns: list[list[float]] = []
    labels: list[int] = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != N_BANDS + 1:
                raise SonarParseError(
                    f"{path}: line {lineno}: expected {N_BANDS + 1} fields, got {len(fields)}"
                )
            values = []
            for col, field in enumerate(fields[:N_BANDS]):
                try:
                    v = float(field)
                except ValueError:
                    raise SonarParseError(
                        f"{path}: line {lineno}: field {col + 1} is not a number: {field!r}"
                    ) from None
                if not 0.0 <= v <= 1.0:
                    raise SonarParseError(
                        f"{path}: line {lineno}: field {col + 1} out of [0, 1]: {v}"
                    )
                values.append(v)
            tag = fields[-1].strip()
            if tag == "R":
                labels.append(SonarLabel.ROCK)
            elif tag == "M":
                labels.append(SonarLabel.METAL)
            else:
                raise SonarParseError(f"{path}: line {lineno}: unknown label {tag!r}")
            patterns.append(values)
    if not patterns:
        raise SonarParseError(f"{path}: no patterns")
    return SonarDataset(np.array(patterns), np.array(labels))


def split_dataset(dataset: SonarDataset, fraction: float,
                  rng: np.random.Generator) -> tuple[SonarDataset, SonarDataset]:
    """Random disjoint exhaustive (train, test) split.

    The test set takes round(fraction * n) patterns, at least 1 (so 10% of
    208 is 21 test / 187 train).
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be strictly inside (0, 1): {fraction}")
    n = len(dataset)
    n_test = max(1, int(np.floor(fraction * n + 0.5)))
    if n_test >= n:
        raise ValueError(f"split fraction {fraction} leaves no training patterns")
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return dataset.subset(train_idx), dataset.subset(test_idx)


@dataclass(frozen=True)
class SonarTaskConfig:
    hold_steps: int          # steps each pattern stays at the input
    latency: int             # network input-to-output delay, in steps

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be nonnegative")
        if self.hold_steps < self.latency + 1:
            raise ValueError(
                f"hold_steps ({self.hold_steps}) must be at least latency + 1 "
                f"({self.latency + 1})"
            )


def scale_observation(pattern: np.ndarray) -> np.ndarray:
    """Sonar inputs feed the network unchanged (pass-through)."""
    return np.asarray(pattern, dtype=float)


class SonarTask(Environment):
    """One pass over a set of patterns, each held for hold_steps steps.

    An output activity > 0 predicts Metal, otherwise Rock. The prediction
    at step t is scored against the pattern that entered the network at
    step t - latency; the first `latency` steps of the pass earn reward 0
    by convention (nothing the output could reflect yet). Per-pattern
    majority votes for error evaluation exclude each pattern's first
    `latency` steps (those outputs still belong to the previous pattern);
    ties count as Rock.
    """

    def __init__(self, dataset: SonarDataset, config: SonarTaskConfig,
                 shuffle: bool = True):
        self.dataset = dataset
        self.config = config
        self.shuffle = shuffle
        self.order: np.ndarray | None = None
        self.t = 0
        self._last_reward = 0.0
        self.step_rewards: list[float] = []
        self.metal_votes: np.ndarray | None = None
        self.vote_steps = config.hold_steps - config.latency

    def reset(self, rng: np.random.Generator | None = None) -> np.ndarray:
        n = len(self.dataset)
        if self.shuffle:
            if rng is None:
                raise ValueError("shuffling reset needs a random source")
            self.order = rng.permutation(n)
        else:
            self.order = np.arange(n)
        self.t = 0
        self._last_reward = 0.0
        self.step_rewards = []
        self.metal_votes = np.zeros(n, dtype=np.int64)
        return self.observe()

    @property
    def total_steps(self) -> int:
        return len(self.dataset) * self.config.hold_steps

    def _slot(self, t: int) -> int:
        return self.order[t // self.config.hold_steps]

    def observe(self) -> np.ndarray:
        if self.order is None:
            raise RuntimeError("observe before reset")
        return scale_observation(self.dataset.patterns[self._slot(self.t)])

    def act(self, actions: np.ndarray) -> None:
        if self.order is None:
            raise RuntimeError("act before reset")
        if self.t >= self.total_steps:
            raise RuntimeError("pass already finished")
        predicted = SonarLabel.METAL if actions[0] > 0 else SonarLabel.ROCK
        t_ref = self.t - self.config.latency
        if t_ref < 0:
            self._last_reward = 0.0
        else:
            true = self.dataset.labels[self._slot(t_ref)]
            self._last_reward = 1.0 if predicted == true else 0.0
            if t_ref // self.config.hold_steps == self.t // self.config.hold_steps:
                # vote window of the pattern currently shown
                if predicted == SonarLabel.METAL:
                    slot = self.t // self.config.hold_steps
                    self.metal_votes[slot] += 1
        self.step_rewards.append(self._last_reward)
        self.t += 1

    def reward(self) -> float:
        return self._last_reward

    def done(self) -> bool:
        return self.order is not None and self.t >= self.total_steps

    # -- pass statistics ----------------------------------------------------

    def majority_decisions(self) -> np.ndarray:
        """Per schedule slot: Metal iff strictly more Metal than Rock votes."""
        if self.metal_votes is None:
            raise RuntimeError("no pass statistics before reset")
        return np.where(self.metal_votes * 2 > self.vote_steps,
                        int(SonarLabel.METAL), int(SonarLabel.ROCK))

    def pass_error(self) -> float:
        """Fraction of patterns misclassified by the majority vote."""
        decided = self.majority_decisions()
        true = self.dataset.labels[self.order]
        return float(np.mean(decided != true))

    def per_step_error(self) -> float:
        """1 - mean reward over the scored steps of the pass."""
        scored = self.step_rewards[self.config.latency:]
        if not scored:
            return 0.0
        return 1.0 - float(np.mean(scored))
