import math

import numpy as np
import pytest

from spikerl.network import (
    LayeredNetwork,
    NetworkConfig,
    average_reward,
    init_network,
    learn_step,
    step_network,
)
from spikerl.neuron import Representation, activity_as_unit, grad_log_ratio, sigmoid

ASYM = Representation.ASYMMETRIC_01
SYM = Representation.SYMMETRIC_PM1


def cfg(**kw):
    base = dict(layer_sizes=(2, 3, 1), beta=0.5, gamma=0.1,
                weight_init_halfwidth=0.1, representation=SYM, seed=0)
    base.update(kw)
    return NetworkConfig(**base)


class TestConfigValidation:
    def test_requires_non_input_layer(self):
        with pytest.raises(ValueError, match="non-input"):
            cfg(layer_sizes=(5,))

    def test_beta_range(self):
        with pytest.raises(ValueError, match="beta"):
            cfg(beta=1.0)
        with pytest.raises(ValueError, match="beta"):
            cfg(beta=-0.1)

    def test_gamma_nonnegative(self):
        with pytest.raises(ValueError, match="gamma"):
            cfg(gamma=-1e-9)
        cfg(gamma=0.0)  # learning disabled is allowed

    def test_positive_sizes(self):
        with pytest.raises(ValueError, match="positive"):
            cfg(layer_sizes=(2, 0, 1))


class TestInit:
    def test_uniform_init_statistics(self):
        net = init_network(cfg(layer_sizes=(100, 10), weight_init_halfwidth=0.1))
        w = net.weights[0].ravel()
        assert w.size == 1000
        assert -0.01 < w.mean() < 0.01
        assert np.all(np.abs(w) < 0.1)

    def test_zero_halfwidth_gives_zero_weights(self):
        net = init_network(cfg(weight_init_halfwidth=0.0))
        assert all(np.all(w == 0.0) for w in net.weights)

    def test_same_seed_same_weights(self):
        a = init_network(cfg(seed=123))
        b = init_network(cfg(seed=123))
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_fresh_state(self):
        net = init_network(cfg())
        assert net.step_counter == 0
        assert all(np.all(z == 0.0) for z in net.traces)
        for buf in net.activities:
            assert np.all(buf == SYM.nofire_value)

    def test_bias_adds_one_synapse(self):
        net = init_network(cfg(bias_enabled=True))
        assert net.weights[0].shape == (3, 3)  # 2 inputs + bias
        assert net.weights[1].shape == (1, 4)


class TestStep:
    def test_input_length_checked(self):
        net = init_network(cfg())
        with pytest.raises(ValueError, match="inputs"):
            net.step([1.0, 2.0, 3.0])

    def test_zero_weights_fire_fairly(self):
        net = init_network(cfg(layer_sizes=(1, 1), weight_init_halfwidth=0.0,
                               representation=ASYM))
        acts = [net.step([0.3])[0] for _ in range(10_000)]
        assert abs(np.mean(acts) - 0.5) < 0.02

    def test_saturated_single_neuron_one_step_delay(self):
        net = init_network(cfg(layer_sizes=(1, 1), weight_init_halfwidth=0.0))
        net.weights[0][:] = 1e3
        outs = [net.step([1.0])[0] for _ in range(10)]
        # first step integrates the no-fire init buffer (-1); +1 from step 2 on
        assert outs[0] == -1.0
        assert all(o == 1.0 for o in outs[1:])

    def test_two_layer_latency_is_two_steps(self):
        net = init_network(cfg(layer_sizes=(1, 1, 1), weight_init_halfwidth=0.0))
        net.weights[0][:] = 1e3
        net.weights[1][:] = 1e3
        outs = [net.step([1.0])[0] for _ in range(10)]
        # buffers start at no-fire; the +1 input reaches the output at step 3,
        # i.e. two steps after it is first seen
        assert outs[:2] == [-1.0, -1.0]
        assert all(o == 1.0 for o in outs[2:])
        # flipping the input shows at the output exactly two steps later
        outs2 = [net.step([-1.0])[0] for _ in range(4)]
        assert outs2[:2] == [1.0, 1.0]
        assert all(o == -1.0 for o in outs2[2:])

    def test_same_seed_same_trajectory(self):
        runs = []
        for _ in range(2):
            net = init_network(cfg(seed=77))
            runs.append([tuple(net.step([0.2, -0.4])) for _ in range(50)])
        assert runs[0] == runs[1]

    def test_potential_consistency(self):
        net = init_network(cfg(seed=3))
        prev = [a.copy() for a in net.activities]
        net.step([0.5, -0.5])
        for k, s in enumerate(net.last_step):
            assert np.allclose(s.potentials, net.weights[k] @ prev[k], atol=0)


class TestLearn:
    def test_learn_requires_step(self):
        net = init_network(cfg())
        with pytest.raises(RuntimeError, match="step"):
            net.learn(1.0)
        net.step([0.0, 0.0])
        net.learn(1.0)
        with pytest.raises(RuntimeError, match="step"):
            net.learn(1.0)

    def test_zero_reward_freezes_weights_not_traces(self):
        net = init_network(cfg(seed=5))
        w0 = [w.copy() for w in net.weights]
        for _ in range(20):
            net.step([0.7, -0.2])
            net.learn(0.0)
        assert all(np.array_equal(a, b) for a, b in zip(net.weights, w0))
        assert any(np.any(z != 0.0) for z in net.traces)

    def test_beta_zero_trace_is_instantaneous_score(self):
        net = init_network(cfg(beta=0.0, gamma=0.0, seed=9))
        for _ in range(5):
            net.step([0.3, 0.9])
            saved = net.last_step
            net.learn(0.0)
            for k, s in enumerate(saved):
                u01 = activity_as_unit(s.activities, SYM)
                expect = np.outer(u01 - sigmoid(s.potentials), s.presyn)
                assert np.array_equal(net.traces[k], expect)

    def test_three_step_unroll_single_neuron_network(self):
        # 1-input 1-neuron net; recurrence recomputed with scalar arithmetic
        # from the realized activities (independent of the engine path)
        net = init_network(cfg(layer_sizes=(1, 1), beta=0.5, gamma=0.1,
                               weight_init_halfwidth=0.0, representation=ASYM, seed=21))
        net.weights[0][0, 0] = 0.2
        rewards = [0.5, -1.0, 2.0]
        w, z = 0.2, 0.0
        for r in rewards:
            pre = net.activities[0][0]  # buffered input from the previous step
            out = net.step([1.0])[0]
            v = w * pre
            g = (out - 1.0 / (1.0 + math.exp(-v))) * pre
            z = 0.5 * z + g
            w = w + 0.1 * r * z
            net.learn(r)
            assert net.traces[0][0, 0] == pytest.approx(z, abs=1e-12)
            assert net.weights[0][0, 0] == pytest.approx(w, abs=1e-12)

    def test_trace_linearity_against_direct_summation(self):
        # z_T must equal sum_s beta^(T-s) g_s; g_s recomputed per step through
        # the scalar grad_log_ratio on the recorded step quantities
        beta = 0.8
        net = init_network(cfg(layer_sizes=(2, 3, 2), beta=beta, gamma=0.0, seed=33))
        T = 50
        g_hist = {k: [] for k in range(net.n_layers)}
        rng = np.random.Generator(np.random.Philox(99))
        for _ in range(T):
            net.step(rng.uniform(-1, 1, size=2))
            for k, s in enumerate(net.last_step):
                g = np.array([[grad_log_ratio(float(u), float(v), float(p), SYM)
                               for p in s.presyn]
                              for u, v in zip(s.activities, s.potentials)])
                g_hist[k].append(g)
            net.learn(0.0)
        for k in range(net.n_layers):
            expect = sum(beta ** (T - 1 - s) * g for s, g in enumerate(g_hist[k]))
            assert np.allclose(net.traces[k], expect, atol=1e-12)

    def test_bounded_traces_symmetric_inputs(self):
        beta = 0.9
        net = init_network(cfg(layer_sizes=(3, 4, 2), beta=beta, gamma=0.0, seed=41))
        rng = np.random.Generator(np.random.Philox(7))
        bound = 1.0 / (1.0 - beta)
        for _ in range(500):
            net.step(np.where(rng.random(3) < 0.5, -1.0, 1.0))
            net.learn(0.0)
            for z in net.traces:
                assert np.all(np.abs(z) <= bound + 1e-12)

    def test_weight_update_is_exactly_gamma_r_z(self):
        net = init_network(cfg(seed=55, gamma=0.03))
        for r in (0.7, -1.3, 0.0, 2.5):
            net.step([0.4, -0.9])
            w_before = [w.copy() for w in net.weights]
            net.learn(r)
            for k in range(net.n_layers):
                expect = w_before[k] + net.config.gamma * r * net.traces[k]
                assert np.array_equal(net.weights[k], expect)

    def test_network_level_gradient_matches_finite_difference(self):
        # freeze one realized trajectory; the summed per-step trace increments
        # must equal the gradient of the log-probability of that exact
        # activity sequence, checked by central differences weight by weight
        net = init_network(cfg(layer_sizes=(2, 3, 2), beta=1.0 - 1e-12, gamma=0.0, seed=61))
        # beta ~ 1 makes the final trace the plain sum of increments
        T = 8
        rng = np.random.Generator(np.random.Philox(5))
        inputs = [rng.uniform(-1, 1, size=2) for _ in range(T)]
        realized = []  # per step: list over layers of (presyn, activities)
        for x in inputs:
            net.step(x)
            realized.append([(s.presyn.copy(), s.activities.copy()) for s in net.last_step])
            net.learn(0.0)

        w0 = [w.copy() for w in net.weights]

        def log_prob(weights):
            total = 0.0
            for step in realized:
                for k, (presyn, acts) in enumerate(step):
                    v = weights[k] @ presyn
                    p = sigmoid(v)
                    u01 = activity_as_unit(acts, SYM)
                    total += float(np.sum(np.log(np.where(u01 == 1.0, p, 1.0 - p))))
            return total

        h = 1e-6
        for k in range(net.n_layers):
            grad_fd = np.zeros_like(w0[k])
            for idx in np.ndindex(*w0[k].shape):
                wp = [w.copy() for w in w0]
                wp[k][idx] += h
                up = log_prob(wp)
                wp[k][idx] -= 2 * h
                down = log_prob(wp)
                grad_fd[idx] = (up - down) / (2 * h)
            scale = max(1.0, float(np.max(np.abs(grad_fd))))
            assert np.max(np.abs(net.traces[k] - grad_fd)) / scale < 1e-4


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = init_network(cfg(seed=13, bias_enabled=True))
        for _ in range(7):
            net.step([0.2, 0.9])
            net.learn(0.4)
        p1 = tmp_path / "net.json"
        p2 = tmp_path / "net2.json"
        net.save_checkpoint(p1)
        loaded = LayeredNetwork.load_checkpoint(p1)
        assert loaded.step_counter == net.step_counter
        assert loaded.config == net.config
        for a, b in zip(loaded.weights, net.weights):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.traces, net.traces):
            assert np.array_equal(a, b)
        loaded.save_checkpoint(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_unknown_version(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"format_version": 99}')
        with pytest.raises(ValueError, match="format_version"):
            LayeredNetwork.load_checkpoint(p)


class TestEvaluationClone:
    def test_clone_shares_weights_not_streams(self):
        net = init_network(cfg(seed=17))
        net.step([0.1, 0.2])
        net.learn(1.0)
        clone = net.clone_for_evaluation(seed=999)
        for a, b in zip(clone.weights, net.weights):
            assert np.array_equal(a, b)
            assert a is not b
        assert all(np.all(z == 0.0) for z in clone.traces)
        assert clone.config.gamma == 0.0


class TestAverageReward:
    def test_examples(self):
        assert average_reward([1, 1, 1]) == 1.0
        assert average_reward([0, 1]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            average_reward([])


class TestSpecFunctionSurface:
    def test_module_level_ops(self):
        net = init_network(cfg(seed=2))
        out = step_network(net, [0.0, 0.0])
        assert out.shape == (1,)
        learn_step(net, 0.5)
