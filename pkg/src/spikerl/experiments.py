"""Experiment drivers: sonar classification, pendulum balancing, gradient
checking, and CSV/plot emission.

Every run derives all of its randomness from the config seed through
spawned Philox streams, so re-running a config reproduces every emitted
CSV byte for byte. Wall-clock times go to a separate metadata JSON that is
explicitly outside the determinism contract. CSV floats carry 17
significant digits so parsed values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .envs.pendulum import InvertedPendulum, PendulumParams
from .envs.sonar import SonarDataset, SonarTask, SonarTaskConfig, parse_sonar, split_dataset
from .network import LayeredNetwork, NetworkConfig, init_network
from .seeding import generator_from, root_sequence
from .tabular import (
    TabularPolicy,
    angle_degrees,
    check_multiagent_decomposition,
    estimate_gradient,
    exact_grad_eta,
    load_agent_split,
    load_pomdp,
)

# estimates from fewer steps than this are labelled high-variance in the
# gradcheck table
HIGH_VARIANCE_STEPS = 1000

# decomposition replay length used by the gradcheck runner
DECOMPOSITION_STEPS = 10_000


@dataclass
class RunRecord:
    """Metrics of one run: per-epoch/window series plus scalar results."""

    run_index: int
    seed: int
    config_hash: str
    wall_clock: float
    series: dict[str, list[float]] = field(default_factory=dict)
    scalars: dict[str, float] = field(default_factory=dict)


def fmt17(x: float) -> str:
    """17-significant-digit decimal text; round-trips float64 exactly."""
    return format(float(x), ".17g")


def _child_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# -- sonar ---------------------------------------------------------------------


def _network_config(config: ExperimentConfig, n_inputs: int, n_outputs: int,
                    seed: int, gamma: float | None = None) -> NetworkConfig:
    net = config.network
    return NetworkConfig(
        layer_sizes=(n_inputs, *net.hidden_layers, n_outputs),
        beta=net.beta,
        gamma=net.gamma if gamma is None else gamma,
        weight_init_halfwidth=net.weight_init_halfwidth,
        representation=net.representation,
        seed=seed,
        bias_enabled=net.bias_enabled,
    )


def _evaluate_sonar(net: LayeredNetwork, subset: SonarDataset,
                    task_cfg: SonarTaskConfig, seq: np.random.SeedSequence,
                    raw_rows: list | None, run_index: int, epoch: int,
                    phase: str) -> tuple[float, float]:
    """Majority-vote and per-step error of a frozen copy of `net` over one
    pass through `subset` (fixed order, no learning)."""
    eval_net = net.clone_for_evaluation(seed=_child_seed(seq))
    task = SonarTask(subset, task_cfg, shuffle=False)
    task.reset()
    while not task.done():
        out = eval_net.step(task.observe())
        slot = task.t // task_cfg.hold_steps
        task.act(out)
        if raw_rows is not None:
            raw_rows.append((run_index, epoch, phase, task.t - 1,
                             int(task.order[slot]),
                             int(task.dataset.labels[task.order[slot]]),
                             float(out[0]), task.reward()))
    return task.pass_error(), task.per_step_error()


def run_sonar(config: ExperimentConfig,
              dataset: SonarDataset | None = None) -> list[RunRecord]:
    """Train/evaluate over independent runs; one record per run.

    Each run draws its own split, weight init, pattern order and evaluation
    streams from the config seed. Evaluation after every epoch freezes
    learning (a weight-sharing clone with gamma = 0) so it never perturbs
    the training streams.
    """
    section = config.sonar
    if dataset is None:
        dataset = parse_sonar(section.data_path)
    hidden = config.network.hidden_layers
    latency = len(hidden) + 1
    task_cfg = SonarTaskConfig(hold_steps=section.hold_steps, latency=latency)
    config_hash = config.config_hash()

    records = []
    raw_rows: list | None = [] if config.log_raw else None
    for run_index, run_seq in enumerate(root_sequence(config.seed).spawn(section.runs)):
        t0 = time.perf_counter()
        split_seq, net_seq, shuffle_seq, eval_root = run_seq.spawn(4)
        train, test = split_dataset(dataset, section.split_fraction,
                                    generator_from(split_seq))
        net = init_network(_network_config(config, n_inputs=60, n_outputs=1,
                                           seed=_child_seed(net_seq)))
        shuffle_rng = generator_from(shuffle_seq)
        train_task = SonarTask(train, task_cfg, shuffle=True)
        series: dict[str, list[float]] = {
            "train_error": [], "test_error": [],
            "train_error_step": [], "test_error_step": [],
        }
        for epoch, eval_seq in enumerate(eval_root.spawn(section.epochs)):
            train_task.reset(shuffle_rng)
            while not train_task.done():
                out = net.step(train_task.observe())
                slot = train_task.t // task_cfg.hold_steps
                train_task.act(out)
                net.learn(train_task.reward())
                if raw_rows is not None:
                    raw_rows.append((run_index, epoch, "train", train_task.t - 1,
                                     int(train_task.order[slot]),
                                     int(train.labels[train_task.order[slot]]),
                                     float(out[0]), train_task.reward()))
            ev_train, ev_test = eval_seq.spawn(2)
            tr_err, tr_step = _evaluate_sonar(net, train, task_cfg, ev_train,
                                              raw_rows, run_index, epoch, "eval_train")
            te_err, te_step = _evaluate_sonar(net, test, task_cfg, ev_test,
                                              raw_rows, run_index, epoch, "eval_test")
            series["train_error"].append(tr_err)
            series["test_error"].append(te_err)
            series["train_error_step"].append(tr_step)
            series["test_error_step"].append(te_step)
        records.append(RunRecord(
            run_index=run_index, seed=config.seed, config_hash=config_hash,
            wall_clock=time.perf_counter() - t0, series=series,
            scalars={"final_train_error": series["train_error"][-1],
                     "final_test_error": series["test_error"][-1]},
        ))
    if raw_rows is not None:
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sonar_raw_log.csv", "w", newline="", encoding="ascii") as f:
            w = csv.writer(f)
            w.writerow(["run", "epoch", "phase", "t", "slot", "true_label",
                        "output", "reward"])
            for row in raw_rows:
                w.writerow([row[0], row[1], row[2], row[3], row[4], row[5],
                            fmt17(row[6]), fmt17(row[7])])
    return records


# -- pendulum ------------------------------------------------------------------


def _drive_pendulum_reference(net: LayeredNetwork, env_rng, params, section,
                              log_raw: bool):
    """Plain step-at-a-time loop; ground truth for the compiled one."""
    env = InvertedPendulum(params)
    env.reset(env_rng)
    falls: list[tuple[int, int]] = []  # (global step of the fall, episode steps)
    raw_rows: list | None = [] if log_raw else None
    episode_steps = 0
    for step in range(section.total_steps):
        out = net.step(env.observe())
        env.act(out)
        r = env.reward()
        net.learn(r)
        episode_steps += 1
        if raw_rows is not None:
            s = env.state
            raw_rows.append((step, s.x, s.y, s.vx, s.vy, s.theta_x, s.theta_y,
                             s.omega_x, s.omega_y,
                             int(env.last_signs[0]), int(env.last_signs[1]), r))
        if env.done():
            falls.append((step, episode_steps))
            episode_steps = 0
            env.reset(env_rng)
    return falls, raw_rows


def _drive_pendulum_fast(net: LayeredNetwork, env_rng, params, section,
                         log_raw: bool):
    """Compiled loop on the same streams; falls and resets handled here."""
    from .envs.pendulum import pendulum_reset
    from .fastloop import PendulumFastLoop

    loop = PendulumFastLoop(net, params, log_raw=log_raw)
    loop.load_state(pendulum_reset(env_rng, params))
    falls: list[tuple[int, int]] = []
    step = 0
    while step < section.total_steps:
        steps, fell = loop.run_episode_steps(section.total_steps - step)
        step += steps
        if fell:
            falls.append((step - 1, steps))
            loop.load_state(pendulum_reset(env_rng, params))
        elif steps == 0:
            raise RuntimeError("compiled pendulum loop made no progress")
    raw_rows = None
    if log_raw:
        rows = np.concatenate(loop.log_rows) if loop.log_rows else np.empty((0, 11))
        raw_rows = [(t, *row[:8], int(row[8]), int(row[9]), row[10])
                    for t, row in enumerate(rows)]
    return falls, raw_rows


def pendulum_windows(falls: list[tuple[int, int]], total_steps: int,
                     window_steps: int, dt: float) -> dict[str, list[float]]:
    """Per-window mean time-to-fall; a window with no completed episode
    reports the full window duration (a censored lower bound). An episode
    straddling a boundary counts toward the window in which it ends."""
    n_windows = total_steps // window_steps
    durations: list[list[float]] = [[] for _ in range(n_windows)]
    for fall_step, episode_steps in falls:
        w = fall_step // window_steps
        if w < n_windows:
            durations[w].append(episode_steps * dt)
    series: dict[str, list[float]] = {"time_to_fall": [], "falls": [],
                                      "window_end_s": []}
    for w in range(n_windows):
        ttf = float(np.mean(durations[w])) if durations[w] else window_steps * dt
        series["time_to_fall"].append(ttf)
        series["falls"].append(float(len(durations[w])))
        series["window_end_s"].append((w + 1) * window_steps * dt)
    return series


def run_pendulum(config: ExperimentConfig,
                 params: PendulumParams = PendulumParams(),
                 force_reference: bool = False) -> RunRecord:
    """One continuous learning run with resets on falls.

    Weights and traces persist across episodes. Every window of
    `window_steps` control steps reports the mean time-to-fall in seconds
    over the episodes that ended inside it. The standard experiment shape
    (one hidden layer, symmetric activities, no bias) runs on a compiled
    loop that reproduces the reference loop's arithmetic on the same
    random streams; other shapes use the reference loop directly.
    """
    from .neuron import Representation

    section = config.pendulum
    t0 = time.perf_counter()
    net_seq, env_seq = root_sequence(config.seed).spawn(2)
    net = init_network(_network_config(config, n_inputs=8, n_outputs=2,
                                       seed=_child_seed(net_seq)))
    env_rng = generator_from(env_seq)
    use_fast = (not force_reference
                and net.n_layers == 2
                and not config.network.bias_enabled
                and config.network.representation is Representation.SYMMETRIC_PM1)
    if use_fast:
        falls, raw_rows = _drive_pendulum_fast(net, env_rng, params, section,
                                               config.log_raw)
    else:
        falls, raw_rows = _drive_pendulum_reference(net, env_rng, params, section,
                                                    config.log_raw)
    series = pendulum_windows(falls, section.total_steps, section.window_steps,
                              params.dt)
    record = RunRecord(
        run_index=0, seed=config.seed, config_hash=config.config_hash(),
        wall_clock=time.perf_counter() - t0, series=series,
        scalars={"first_window_time_to_fall": series["time_to_fall"][0],
                 "last_window_time_to_fall": series["time_to_fall"][-1]},
    )
    if raw_rows is not None:
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "pendulum_trajectory.csv", "w", newline="",
                  encoding="ascii") as f:
            w = csv.writer(f)
            w.writerow(["t", "x", "y", "vx", "vy", "thx", "thy", "wx", "wy",
                        "fx_sign", "fy_sign", "reward"])
            for row in raw_rows:
                w.writerow([row[0]] + [fmt17(v) for v in row[1:9]]
                           + [row[9], row[10], fmt17(row[11])])
    return record


# -- gradient checking -----------------------------------------------------------


def run_gradcheck(config: ExperimentConfig) -> RunRecord:
    """Sweep the trace decay over the estimator and compare with the exact
    gradient; also replay the multi-agent decomposition on the fixture."""
    section = config.gradcheck
    t0 = time.perf_counter()
    pomdp = load_pomdp(section.fixture)
    policy_seq, est_root, decomp_seq = root_sequence(config.seed).spawn(3)
    policy = TabularPolicy(
        generator_from(policy_seq).normal(0.0, 0.5, size=(pomdp.n_obs, pomdp.n_actions)))
    exact = exact_grad_eta(pomdp, policy)

    series: dict[str, list[float]] = {"beta": [], "angle_mean_deg": [],
                                      "angle_min_deg": [], "angle_max_deg": []}
    quality: list[str] = []
    beta_seqs = est_root.spawn(len(section.betas))
    for beta, beta_seq in zip(section.betas, beta_seqs):
        angles = []
        for seed_seq in beta_seq.spawn(section.seeds):
            est = estimate_gradient(pomdp, policy, beta, section.steps,
                                    generator_from(seed_seq))
            angles.append(angle_degrees(est, exact))
        series["beta"].append(beta)
        series["angle_mean_deg"].append(float(np.mean(angles)))
        series["angle_min_deg"].append(float(np.min(angles)))
        series["angle_max_deg"].append(float(np.max(angles)))
        quality.append("high-variance" if section.steps < HIGH_VARIANCE_STEPS else "ok")

    split = load_agent_split(section.fixture)
    policy_child, replay_child = decomp_seq.spawn(2)
    if split is None:
        policies = [policy]
    else:
        prng = generator_from(policy_child)
        policies = [TabularPolicy(prng.normal(0.0, 0.5, size=(o, a))) for o, a in split]
    report = check_multiagent_decomposition(
        pomdp, policies, T=DECOMPOSITION_STEPS, rng=generator_from(replay_child))
    record = RunRecord(
        run_index=0, seed=config.seed, config_hash=config.config_hash(),
        wall_clock=time.perf_counter() - t0, series=series,
        scalars={
            "decomposition_agents": float(len(policies)),
            "decomposition_max_trace_gap": report.max_trace_gap,
            "decomposition_max_update_gap": report.max_update_gap,
        },
    )
    record.series["_quality_flags"] = [1.0 if q == "high-variance" else 0.0
                                       for q in quality]
    return record


# -- emission ------------------------------------------------------------------


def emit_curves(records: list[RunRecord], output_dir,
                index_name: str = "epoch",
                filename: str = "learning_curve.csv") -> tuple[Path, Path]:
    """Aggregate record series into one CSV (per-index mean and std over
    runs) plus a standalone matplotlib script that reads only the CSV."""
    if not records:
        raise ValueError("emit_curves needs at least one record")
    keys = [k for k in records[0].series if not k.startswith("_")]
    for rec in records:
        if [k for k in rec.series if not k.startswith("_")] != keys:
            raise ValueError("records carry different series keys")
        for k in keys:
            if len(rec.series[k]) != len(records[0].series[k]):
                raise ValueError(f"series '{k}' lengths differ across records")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / filename
    n_points = len(records[0].series[keys[0]]) if keys else 0
    header = [index_name]
    for k in keys:
        header += [f"{k}_mean", f"{k}_std"]
    with open(csv_path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(n_points):
            row = [i]
            for k in keys:
                vals = np.array([rec.series[k][i] for rec in records])
                row += [fmt17(vals.mean()), fmt17(vals.std())]
            w.writerow(row)
    script_path = out_dir / f"plot_{csv_path.stem}.py"
    script_path.write_text(_plot_script(csv_path.name, index_name, keys),
                           encoding="ascii")
    return csv_path, script_path


def _plot_script(csv_name: str, index_name: str, keys: list[str]) -> str:
    plot_keys = [k for k in keys if k != index_name]
    return f'''#!/usr/bin/env python3
"""Render {csv_name} (written alongside this script) to a PNG."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "{csv_name}")))
x = [float(r["{index_name}"]) for r in rows]
fig, ax = plt.subplots(figsize=(7, 4.5))
for key in {plot_keys!r}:
    mean = [float(r[key + "_mean"]) for r in rows]
    std = [float(r[key + "_std"]) for r in rows]
    ax.plot(x, mean, label=key)
    ax.fill_between(x, [m - s for m, s in zip(mean, std)],
                    [m + s for m, s in zip(mean, std)], alpha=0.2)
ax.set_xlabel("{index_name}")
ax.legend()
fig.tight_layout()
out = here / "{csv_name}".replace(".csv", ".png")
fig.savefig(out, dpi=120)
print(f"wrote {{out}}")
'''


def emit_gradcheck_tables(record: RunRecord, output_dir) -> list[Path]:
    """Angle table per beta plus the decomposition discrepancies."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / "gradcheck_angles.csv"
    flags = record.series.get("_quality_flags", [])
    with open(table, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["beta", "angle_mean_deg", "angle_min_deg", "angle_max_deg",
                    "quality"])
        for i, beta in enumerate(record.series["beta"]):
            w.writerow([
                fmt17(beta),
                fmt17(record.series["angle_mean_deg"][i]),
                fmt17(record.series["angle_min_deg"][i]),
                fmt17(record.series["angle_max_deg"][i]),
                "high-variance" if flags and flags[i] else "ok",
            ])
    decomp = out_dir / "gradcheck_decomposition.csv"
    with open(decomp, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["n_agents", "steps", "max_trace_gap", "max_update_gap"])
        w.writerow([
            int(record.scalars["decomposition_agents"]),
            DECOMPOSITION_STEPS,
            fmt17(record.scalars["decomposition_max_trace_gap"]),
            fmt17(record.scalars["decomposition_max_update_gap"]),
        ])
    return [table, decomp]


def write_run_metadata(records: list[RunRecord], config: ExperimentConfig,
                       output_dir) -> Path:
    """Wall-clock and bookkeeping; deliberately outside the set of
    deterministic outputs."""
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "run_meta.json"
    payload = {
        "config_hash": config.config_hash(),
        "experiment": config.experiment,
        "seed": config.seed,
        "runs": [
            {"run_index": r.run_index, "wall_clock_s": r.wall_clock,
             "scalars": {k: v for k, v in r.scalars.items()
                         if not k.startswith("_")}}
            for r in records
        ],
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")
    return path
