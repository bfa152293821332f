import math

import numpy as np
import pytest

from bicaption.data import CaptionedExample, make_toy_dataset
from bicaption.errors import ConfigError, DataError, TrainingError
from bicaption.model import (ArchitectureKind, BACKWARD, FORWARD, build_model,
                             init_model, random_model)
from bicaption.train import (TrainConfig, _fd_loss_and_signs,
                             accumulate_grads, direction_io, grad_check,
                             joint_backward, joint_loss, make_state,
                             mean_joint_loss, sgd_step, train_epochs)

BI = ArchitectureKind.BI_LSTM


def toy_example(seed=0, vocab=7, feat=3, length=3):
    rng = np.random.default_rng(seed)
    return CaptionedExample(
        "x", rng.uniform(-0.5, 0.5, feat),
        [int(t) for t in rng.integers(2, vocab, size=length)])


class TestDirectionIO:
    def test_forward_shift(self):
        inputs, targets = direction_io([4, 5, 6], FORWARD)
        assert inputs == [0, 4, 5, 6]
        assert targets == [4, 5, 6, 0]

    def test_backward_reverses(self):
        inputs, targets = direction_io([4, 5, 6], BACKWARD)
        assert inputs == [0, 6, 5, 4]
        assert targets == [6, 5, 4, 0]


class TestJointLoss:
    def test_uniform_model_analytic_value(self):
        # all-zero weights give a uniform softmax over K=8; each direction
        # sums T = len + 1 = 3 prediction steps of ln 8
        m = build_model(BI, 8, 2, 3, 3)
        ex = CaptionedExample("x", np.zeros(2), [2, 3])
        loss = joint_loss(m, ex)
        expected = 3 * math.log(8)
        assert abs(loss.loss_fwd - expected) < 1e-9
        assert abs(loss.loss_bwd - expected) < 1e-9
        assert abs(loss.total - 2 * expected) < 1e-9

    def test_perfect_model_zero_loss(self):
        m = build_model(BI, 5, 2, 3, 3)
        m.softmax_b[0] = 1e4  # probs exactly one-hot on the boundary id
        loss = joint_loss(m, CaptionedExample("x", np.zeros(2), [0]))
        assert abs(loss.total) < 1e-9

    def test_palindrome_mirrored_params_symmetry(self):
        m = init_model(BI, 7, 3, 4, 4, seed=3)
        m.bwd = m.fwd.copy()
        ex = CaptionedExample("x", np.array([0.2, -0.4, 0.1]), [3, 5, 3])
        loss = joint_loss(m, ex)
        assert loss.loss_fwd == loss.loss_bwd

    def test_losses_nonnegative(self):
        m = random_model(BI, 7, 3, 4, 4, seed=1)
        loss = joint_loss(m, toy_example(1))
        assert loss.loss_fwd >= 0 and loss.loss_bwd >= 0

    def test_empty_caption_rejected(self):
        m = init_model(BI, 7, 3, 4, 4, seed=0)
        with pytest.raises(DataError):
            joint_loss(m, CaptionedExample("x", np.zeros(3), []))

    def test_fd_loss_path_matches_joint_loss_bitwise(self):
        for arch in ArchitectureKind:
            for seed in range(4):
                m = random_model(arch, 9, 3, 4, 5, seed=seed)
                ex = toy_example(seed, vocab=9, length=4)
                lean, _ = _fd_loss_and_signs(m, ex)
                assert lean == joint_loss(m, ex).total


class TestSgdStep:
    def make(self, seed=0):
        m = init_model(BI, 5, 2, 3, 3, seed=seed)
        return make_state(m)

    def zero_grads(self, m):
        return {name: np.zeros_like(arr) for name, arr in m.blocks()}

    def test_plain_sgd(self):
        state = self.make()
        cfg = TrainConfig(learning_rate=0.1, momentum=0.0, weight_decay=0.0)
        grads = self.zero_grads(state.model)
        grads["softmax_b"] = np.ones(5)
        before = state.model.softmax_b.copy()
        sgd_step(state, grads, cfg)
        np.testing.assert_allclose(state.model.softmax_b, before - 0.1,
                                   rtol=0, atol=1e-15)

    def test_zero_grad_fixed_point(self):
        state = self.make()
        cfg = TrainConfig(momentum=0.5, weight_decay=0.0)
        before = {n: a.copy() for n, a in state.model.blocks()}
        sgd_step(state, self.zero_grads(state.model), cfg)
        for name, arr in state.model.blocks():
            np.testing.assert_array_equal(arr, before[name])

    def test_weight_decay_hand_value(self):
        # theta=1, g=0, eta=0.01, lambda=0.0005 -> theta' = 0.999995
        state = self.make()
        state.model.softmax_w[...] = 1.0
        cfg = TrainConfig(learning_rate=0.01, momentum=0.0, weight_decay=0.0005)
        sgd_step(state, self.zero_grads(state.model), cfg)
        np.testing.assert_allclose(state.model.softmax_w,
                                   np.full_like(state.model.softmax_w, 0.999995),
                                   rtol=0, atol=1e-15)

    def test_decay_never_touches_biases(self):
        state = self.make()
        state.model.softmax_b[...] = 1.0
        state.model.fwd.t_lstm.b[...] = -2.0
        cfg = TrainConfig(learning_rate=0.01, momentum=0.0, weight_decay=0.5)
        sgd_step(state, self.zero_grads(state.model), cfg)
        np.testing.assert_array_equal(state.model.softmax_b, np.ones(5))
        np.testing.assert_array_equal(state.model.fwd.t_lstm.b,
                                      np.full(12, -2.0))

    def test_momentum_accumulates(self):
        state = self.make()
        cfg = TrainConfig(learning_rate=1.0, momentum=0.5, weight_decay=0.0)
        grads = self.zero_grads(state.model)
        grads["softmax_b"] = np.ones(5)
        before = state.model.softmax_b.copy()
        sgd_step(state, grads, cfg)   # v = -1
        sgd_step(state, grads, cfg)   # v = -1.5
        np.testing.assert_allclose(state.model.softmax_b, before - 2.5,
                                   rtol=0, atol=1e-15)

    def test_global_clip_rescales(self):
        state = self.make()
        cfg = TrainConfig(learning_rate=1.0, momentum=0.0, weight_decay=0.0,
                          grad_clip=1.0)
        grads = self.zero_grads(state.model)
        grads["softmax_b"] = np.full(5, 2.0)  # norm = sqrt(20)
        before = state.model.softmax_b.copy()
        sgd_step(state, grads, cfg)
        moved = before - state.model.softmax_b
        assert abs(np.linalg.norm(moved) - 1.0) < 1e-12

    def test_nonfinite_gradient_names_block(self):
        state = self.make()
        grads = self.zero_grads(state.model)
        grads["fwd.t_lstm.Wx"][0, 0] = np.nan
        with pytest.raises(TrainingError, match="fwd.t_lstm.Wx"):
            sgd_step(state, grads, TrainConfig())

    def test_velocity_shapes_mirror_parameters(self):
        state = self.make()
        for name, arr in state.model.blocks():
            assert state.velocity[name].shape == arr.shape


class TestAccumulateGrads:
    def test_mean_of_two(self):
        a = {"x": np.array([2.0]), "y": np.array([0.0])}
        b = {"x": np.array([4.0]), "y": np.array([2.0])}
        out = accumulate_grads([a, b])
        np.testing.assert_array_equal(out["x"], [3.0])
        np.testing.assert_array_equal(out["y"], [1.0])


class TestTrainEpochs:
    def test_determinism_bitwise(self):
        _, examples = make_toy_dataset(6, 10, 7, seed=5)
        results = []
        for _ in range(2):
            m = init_model(BI, 10, 7, 8, 8, seed=2)
            cfg = TrainConfig(batch_size=2, max_epochs=3,
                              early_stop_patience=None, seed=9)
            state = train_epochs(make_state(m), examples, examples, cfg,
                                 verbose=False)
            results.append({n: a.copy() for n, a in state.model.blocks()})
        for name in results[0]:
            np.testing.assert_array_equal(results[0][name], results[1][name])

    def test_loss_decreases_on_toy_set(self):
        _, examples = make_toy_dataset(6, 10, 7, seed=5)
        m = init_model(BI, 10, 7, 8, 8, seed=2)
        initial = mean_joint_loss(m, examples)
        cfg = TrainConfig(batch_size=2, max_epochs=10,
                          early_stop_patience=None, seed=9)
        state = train_epochs(make_state(m), examples, examples, cfg,
                             verbose=False)
        assert mean_joint_loss(state.model, examples) < initial

    def test_patience_zero_stops_after_first_worse_epoch(self):
        # a huge learning rate makes training diverge immediately, so the
        # first epoch's validation loss exceeds the pre-training baseline
        _, examples = make_toy_dataset(6, 10, 7, seed=5)
        m = init_model(BI, 10, 7, 8, 8, seed=2)
        cfg = TrainConfig(learning_rate=50.0, batch_size=2, max_epochs=20,
                          early_stop_patience=0, seed=9)
        state = train_epochs(make_state(m), examples, examples, cfg,
                             verbose=False)
        assert state.epoch == 1
        # the returned model is the pre-divergence best
        ref = init_model(BI, 10, 7, 8, 8, seed=2)
        for (name, arr), (_, ref_arr) in zip(state.model.blocks(), ref.blocks()):
            np.testing.assert_array_equal(arr, ref_arr)

    def test_progress_lines_on_stdout(self, capsys):
        _, examples = make_toy_dataset(4, 10, 7, seed=5)
        m = init_model(BI, 10, 7, 8, 8, seed=2)
        cfg = TrainConfig(batch_size=2, max_epochs=2,
                          early_stop_patience=None, seed=9)
        train_epochs(make_state(m), examples, examples, cfg)
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("epoch 1 train_loss ")
        assert " val_loss " in lines[0]

    def test_descent_along_negative_gradient(self):
        # one sufficiently small plain-SGD step along -g reduces batch loss
        _, examples = make_toy_dataset(5, 10, 7, seed=6)
        m = init_model(BI, 10, 7, 8, 8, seed=4)
        batch = examples[:5]
        grads = accumulate_grads([joint_backward(m, ex)[1] for ex in batch])
        before = mean_joint_loss(m, batch)
        state = make_state(m)
        cfg = TrainConfig(learning_rate=1e-4, momentum=0.0, weight_decay=0.0)
        sgd_step(state, grads, cfg)
        after = mean_joint_loss(state.model, batch)
        assert after < before + 1e-12

    def test_empty_train_set_rejected(self):
        m = init_model(BI, 10, 7, 8, 8, seed=0)
        with pytest.raises(DataError):
            train_epochs(make_state(m), [], [], TrainConfig())

    def test_early_stop_without_val_rejected(self):
        _, examples = make_toy_dataset(4, 10, 7, seed=5)
        m = init_model(BI, 10, 7, 8, 8, seed=0)
        with pytest.raises(ConfigError):
            train_epochs(make_state(m), examples, [],
                         TrainConfig(early_stop_patience=3))

    def test_invalid_config_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-1.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(momentum=1.0).validate()


class TestOverfitCapacity:
    def test_toy_set_memorized_within_budget(self, toy_overfit):
        assert toy_overfit.updates <= 2000
        assert toy_overfit.per_token_loss < 0.05


class TestGradCheck:
    def test_passes_at_default_tolerance(self):
        m = random_model(BI, 7, 3, 4, 5, seed=0)
        report = grad_check(m, toy_example(0))
        assert report.passed
        assert report.max_rel_err < 1e-5

    def test_impossible_tolerance_fails(self):
        m = random_model(BI, 5, 2, 3, 3, seed=0)
        report = grad_check(m, toy_example(0, vocab=5, feat=2, length=2),
                            tolerance=1e-12)
        assert not report.passed
        assert report.max_rel_err > 1e-12

    def test_report_lines_shape(self):
        m = random_model(BI, 5, 2, 3, 3, seed=0)
        report = grad_check(m, toy_example(0, vocab=5, feat=2, length=2))
        lines = report.lines()
        assert len(lines) == len(list(m.blocks())) + 1
        assert lines[-1].startswith("PASS" if report.passed else "FAIL")

    def test_epsilon_bounds(self):
        m = random_model(BI, 5, 2, 3, 3, seed=0)
        with pytest.raises(ConfigError):
            grad_check(m, toy_example(0, vocab=5, feat=2), epsilon=0.0)
        with pytest.raises(ConfigError):
            grad_check(m, toy_example(0, vocab=5, feat=2), epsilon=1e-2)

    def test_subsample_floor(self):
        m = random_model(BI, 5, 2, 3, 3, seed=0)
        with pytest.raises(ConfigError):
            grad_check(m, toy_example(0, vocab=5, feat=2), max_per_block=100)
