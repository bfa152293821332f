"""Joint two-direction training: SGD with momentum and weight decay over
the summed forward+backward cross-entropy loss, plus the finite-difference
gradient checker used to validate the analytic backward pass.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import BOUNDARY_ID, CaptionedExample
from .errors import ConfigError, DataError, ShapeError, TrainingError
from .model import (ArchitectureKind, BACKWARD, CaptionModel, FORWARD,
                    ForwardPassRecord, direction_forward, is_bias_block,
                    model_backward)
from .numcore import log_softmax


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 16
    max_epochs: int = 50
    early_stop_patience: int | None = 5
    grad_clip: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.early_stop_patience is not None and self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be >= 0 or None")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError(f"grad_clip must be positive, got {self.grad_clip}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass
class TrainState:
    model: CaptionModel
    velocity: dict[str, np.ndarray]
    epoch: int = 0
    best_val_loss: float = math.inf
    epochs_since_best: int = 0
    best_model: CaptionModel | None = None
    updates: int = 0


def make_state(model: CaptionModel) -> TrainState:
    velocity = {name: np.zeros_like(arr) for name, arr in model.blocks()}
    return TrainState(model=model, velocity=velocity)


def direction_io(tokens, direction: str) -> tuple[list[int], list[int]]:
    """Inputs start with the boundary token; targets end with it. The
    backward direction reads the caption reversed."""
    seq = list(tokens) if direction == FORWARD else list(reversed(tokens))
    return [BOUNDARY_ID] + seq, seq + [BOUNDARY_ID]


@dataclass
class JointLoss:
    loss_fwd: float
    loss_bwd: float

    @property
    def total(self) -> float:
        return self.loss_fwd + self.loss_bwd


def _record_loss(rec: ForwardPassRecord, targets) -> float:
    # log-probabilities via log-sum-exp; never log of a saturated softmax
    return -sum(log_softmax(rec.logits[t])[tgt] for t, tgt in enumerate(targets))


def _direction_pass(m: CaptionModel, ex: CaptionedExample,
                    direction: str) -> tuple[ForwardPassRecord, list[int], float]:
    inputs, targets = direction_io(ex.tokens, direction)
    rec = direction_forward(m, direction, inputs, ex.feature)
    return rec, targets, _record_loss(rec, targets)


def joint_loss(m: CaptionModel, ex: CaptionedExample) -> JointLoss:
    """Summed cross-entropy of both reading directions for one example."""
    if not ex.tokens:
        raise DataError(f"example {ex.image_id!r} has an empty caption")
    _, _, lf = _direction_pass(m, ex, FORWARD)
    _, _, lb = _direction_pass(m, ex, BACKWARD)
    return JointLoss(loss_fwd=lf, loss_bwd=lb)


def joint_backward(m: CaptionModel,
                   ex: CaptionedExample) -> tuple[JointLoss, dict[str, np.ndarray]]:
    """Loss plus gradients of the joint loss for every parameter block."""
    if not ex.tokens:
        raise DataError(f"example {ex.image_id!r} has an empty caption")
    rec_f, tgt_f, lf = _direction_pass(m, ex, FORWARD)
    rec_b, tgt_b, lb = _direction_pass(m, ex, BACKWARD)
    grads = model_backward(m, rec_f, tgt_f)
    for name, g in model_backward(m, rec_b, tgt_b).items():
        if name in grads:
            grads[name] = grads[name] + g
        else:
            grads[name] = g
    return JointLoss(loss_fwd=lf, loss_bwd=lb), grads


def mean_joint_loss(m: CaptionModel, examples) -> float:
    examples = list(examples)
    if not examples:
        raise DataError("cannot average loss over an empty example set")
    return sum(joint_loss(m, ex).total for ex in examples) / len(examples)


def accumulate_grads(grad_list) -> dict[str, np.ndarray]:
    """Mean of per-example gradient dicts."""
    if not grad_list:
        raise DataError("no gradients to accumulate")
    out = {name: g.copy() for name, g in grad_list[0].items()}
    for grads in grad_list[1:]:
        for name, g in grads.items():
            out[name] += g
    scale = 1.0 / len(grad_list)
    for name in out:
        out[name] *= scale
    return out


def sgd_step(state: TrainState, grads: dict[str, np.ndarray],
             cfg: TrainConfig) -> TrainState:
    """v <- mu*v - eta*(g + lambda*theta); theta <- theta + v.
    Biases are excluded from the decay term."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in block {name}")

    if cfg.grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > cfg.grad_clip:
            scale = cfg.grad_clip / norm
            grads = {name: g * scale for name, g in grads.items()}

    for name, arr in state.model.blocks():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != arr.shape:
            raise ShapeError(
                f"gradient for {name} has shape {g.shape}, parameter {arr.shape}"
            )
        step = g if is_bias_block(name) else g + cfg.weight_decay * arr
        v = state.velocity[name]
        v *= cfg.momentum
        v -= cfg.learning_rate * step
        arr += v
    state.updates += 1
    return state


def train_epochs(state: TrainState, train_set, val_set, cfg: TrainConfig,
                 epoch_hook=None, verbose: bool = True) -> TrainState:
    """Mini-batch SGD with per-epoch reseeded shuffles and early stopping on
    validation joint loss. Returns the state holding the best-val model."""
    cfg.validate()
    train_set = list(train_set)
    val_set = list(val_set)
    if not train_set:
        raise DataError("empty training set")
    if cfg.early_stop_patience is not None and not val_set:
        raise ConfigError("early stopping requires a non-empty validation set")

    if val_set and math.isinf(state.best_val_loss):
        state.best_val_loss = mean_joint_loss(state.model, val_set)
        state.best_model = state.model.copy()
        state.epochs_since_best = 0

    n = len(train_set)
    for epoch in range(state.epoch + 1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [train_set[i] for i in perm[start:start + cfg.batch_size]]
            grad_list = []
            for ex in batch:
                loss, grads = joint_backward(state.model, ex)
                loss_sum += loss.total
                grad_list.append(grads)
            sgd_step(state, accumulate_grads(grad_list), cfg)
        state.epoch = epoch

        train_loss = loss_sum / n
        val_loss = mean_joint_loss(state.model, val_set) if val_set else math.nan
        if verbose:
            print(f"epoch {epoch} train_loss {train_loss:.6f} val_loss {val_loss:.6f}")
        if epoch_hook is not None:
            epoch_hook(epoch, train_loss, val_loss)

        if val_set:
            if val_loss < state.best_val_loss:
                state.best_val_loss = val_loss
                state.best_model = state.model.copy()
                state.epochs_since_best = 0
            else:
                state.epochs_since_best += 1
                if (cfg.early_stop_patience is not None
                        and state.epochs_since_best > cfg.early_stop_patience):
                    break

    if state.best_model is not None:
        state.model = state.best_model
    return state


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def _fd_loss_and_signs(m: CaptionModel, ex: CaptionedExample):
    """Joint loss for the finite-difference loop, plus (for the relu
    architecture) the sign pattern of every transition pre-activation, used
    to reject kink-crossing perturbations.

    This is joint_loss with the trace/record bookkeeping stripped out; the
    arithmetic (operations and their order) is identical, and a test pins
    the two to exact equality.
    """
    from .lstm import cell_forward  # local import keeps module load acyclic
    from .model import _bi_f_preact, bi_s_transition
    from .numcore import relu

    is_bif = m.arch == ArchitectureKind.BI_F_LSTM
    is_bis = m.arch == ArchitectureKind.BI_S_LSTM
    H = m.hidden_dim
    total = 0.0
    sign_parts: list[bytes] = []
    for direction in (FORWARD, BACKWARD):
        d = m.direction(direction)
        inputs, targets = direction_io(ex.tokens, direction)
        h1 = np.zeros(H)
        c1 = np.zeros(H)
        h2 = np.zeros(H)
        c2 = np.zeros(H)
        logprob_sum = 0.0
        for tok, tgt in zip(inputs, targets):
            t_tr = cell_forward(d.t_lstm, d.embedding[:, tok], h1, c1)
            h1, c1 = t_tr.h, t_tr.c
            if is_bis:
                text = bi_s_transition(d.transition.U, d.transition.V, h1, h2)
            elif is_bif:
                pre = _bi_f_preact(d.transition.W, d.transition.U,
                                   d.transition.V, h1)
                sign_parts.append((pre > 0.0).tobytes())
                text = relu(pre)
            else:
                text = h1
            m_tr = cell_forward(d.m_lstm, np.concatenate([text, ex.feature]),
                                h2, c2)
            h2, c2 = m_tr.h, m_tr.c
            logits = m.softmax_w @ h2 + m.softmax_b
            logprob_sum += log_softmax(logits)[tgt]
        total += -logprob_sum
    return total, (b"".join(sign_parts) if is_bif else None)


def has_live_relu_branches(m: CaptionModel, ex: CaptionedExample) -> bool:
    """True when, in both directions, each relu transition branch (shortcut
    and bottleneck) activates for at least one unit at some step. A dead
    branch makes its gradients exactly zero and starves the layers below,
    which leaves nothing for a finite-difference check to resolve; callers
    doing gradient checks should skip such degenerate operating points.
    Non-relu architectures are always live."""
    if m.arch != ArchitectureKind.BI_F_LSTM:
        return True
    ww = m.fwd.transition.W.shape[0]
    for direction in (FORWARD, BACKWARD):
        rec, _, _ = _direction_pass(m, ex, direction)
        pre = np.stack(rec.transition_preacts)
        if not (np.any(pre[:, :ww] > 0) and np.any(pre[:, ww:] > 0)):
            return False
    return True


@dataclass
class BlockCheck:
    """One block's comparison: the largest analytic/numeric discrepancy
    relative to the block's gradient scale (central differences at eps=1e-6
    carry absolute noise around 1e-9, so per-coordinate ratios are
    meaningless for the many coordinates smaller than that)."""

    name: str
    n_checked: int
    n_rejected: int
    max_abs_err: float
    grad_scale: float
    rel_err: float
    worst_index: int
    worst_analytic: float
    worst_numeric: float


@dataclass
class GradCheckReport:
    epsilon: float
    tolerance: float
    blocks: list[BlockCheck] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((b.rel_err for b in self.blocks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(b.rel_err < self.tolerance for b in self.blocks)

    def lines(self) -> list[str]:
        out = []
        for b in self.blocks:
            status = "ok" if b.rel_err < self.tolerance else "FAIL"
            out.append(
                f"{status} {b.name} rel_err {b.rel_err:.3e} "
                f"(max_abs_err {b.max_abs_err:.3e} / scale {b.grad_scale:.3e}) "
                f"checked {b.n_checked} rejected {b.n_rejected} "
                f"worst (index {b.worst_index}, analytic {b.worst_analytic:.6e}, "
                f"numeric {b.worst_numeric:.6e})"
            )
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{verdict} overall max_rel_err {self.max_rel_err:.3e} "
                   f"tolerance {self.tolerance:.3e}")
        return out


def grad_check(m: CaptionModel, ex: CaptionedExample, epsilon: float = 1e-6,
               tolerance: float = 1e-5, max_per_block: int | None = None,
               sample_seed: int = 0) -> GradCheckReport:
    """Compare analytic joint-loss gradients against central differences.

    Every scalar is checked unless max_per_block (>= 500) caps a block, in
    which case a seeded random subsample is used. Perturbations that flip a
    relu pre-activation sign are rejected rather than compared. Each block
    passes when its largest discrepancy, relative to the block's gradient
    scale max(|analytic|, |numeric|, 1e-8), is below the tolerance.
    """
    if not 0.0 < epsilon <= 1e-3:
        raise ConfigError(f"epsilon must be in (0, 1e-3], got {epsilon}")
    if max_per_block is not None and max_per_block < 500:
        raise ConfigError("subsampled checks need at least 500 scalars per block")

    _, analytic = joint_backward(m, ex)
    rng = np.random.default_rng(sample_seed)
    report = GradCheckReport(epsilon=epsilon, tolerance=tolerance)

    for name, arr in m.blocks():
        grad = analytic[name]
        size = arr.size
        if max_per_block is not None and size > max_per_block:
            indices = rng.choice(size, size=max_per_block, replace=False)
        else:
            indices = range(size)

        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        n_checked = 0
        n_rejected = 0
        max_abs_err = 0.0
        scale = 1e-8
        worst = (-1, 0.0, 0.0)
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + epsilon
            lp, sp = _fd_loss_and_signs(m, ex)
            flat[idx] = orig - epsilon
            lm, sm = _fd_loss_and_signs(m, ex)
            flat[idx] = orig
            if sp != sm:
                n_rejected += 1
                continue
            numeric = (lp - lm) / (2.0 * epsilon)
            a = float(gflat[idx])
            n_checked += 1
            scale = max(scale, abs(a), abs(numeric))
            err = abs(a - numeric)
            if err > max_abs_err:
                max_abs_err = err
                worst = (int(idx), a, numeric)
        report.blocks.append(BlockCheck(
            name=name, n_checked=n_checked, n_rejected=n_rejected,
            max_abs_err=max_abs_err, grad_scale=scale,
            rel_err=max_abs_err / scale, worst_index=worst[0],
            worst_analytic=worst[1], worst_numeric=worst[2],
        ))
    return report
