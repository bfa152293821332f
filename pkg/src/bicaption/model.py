"""Caption model: embeddings, text LSTM, multimodal LSTM, deep transitions,
and the shared softmax, assembled into three bidirectional architectures.

Layer stack per direction and time step:

    token -> embedding column -> T-LSTM -> [transition] -> concat with the
    image feature -> M-LSTM -> shared softmax -> distribution of next word

The image feature vector is concatenated into the M-LSTM input at every
step. Architectures differ only in the transition between the two LSTMs:
none (plain), a linear stacked transition fed by the T-LSTM output and the
M-LSTM's previous hidden state, or a relu layer whose output concatenates a
direct projection of the T-LSTM output (shortcut) with a two-matrix
bottleneck of it.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, VocabError
from .lstm import (LstmParams, LstmStepTrace, cell_backward, cell_forward,
                   sequence_backward, sequence_forward, zero_grads, zeros_lstm)
from .numcore import matvec, relu, softmax

FORWARD = "forward"
BACKWARD = "backward"

INIT_SCALE = 0.08


class ArchitectureKind(enum.Enum):
    BI_LSTM = "bi-lstm"
    BI_S_LSTM = "bi-s-lstm"
    BI_F_LSTM = "bi-f-lstm"


@dataclass
class TransitionParams:
    """Deep-variant matrices. Stacked uses U, V; the relu variant adds W."""

    U: np.ndarray
    V: np.ndarray
    W: np.ndarray | None = None

    def copy(self) -> "TransitionParams":
        return TransitionParams(
            self.U.copy(), self.V.copy(),
            None if self.W is None else self.W.copy(),
        )


@dataclass
class DirectionParams:
    """One direction's parameters. embedding is (embed_dim x vocab)."""

    embedding: np.ndarray
    t_lstm: LstmParams
    m_lstm: LstmParams
    transition: TransitionParams | None

    def copy(self) -> "DirectionParams":
        return DirectionParams(
            self.embedding.copy(), self.t_lstm.copy(), self.m_lstm.copy(),
            None if self.transition is None else self.transition.copy(),
        )


@dataclass
class CaptionModel:
    arch: ArchitectureKind
    fwd: DirectionParams
    bwd: DirectionParams
    softmax_w: np.ndarray
    softmax_b: np.ndarray
    vocab_size: int
    feature_dim: int
    embed_dim: int
    hidden_dim: int

    def direction(self, name: str) -> DirectionParams:
        if name == FORWARD:
            return self.fwd
        if name == BACKWARD:
            return self.bwd
        raise ConfigError(f"unknown direction {name!r}")

    @property
    def transition_widths(self) -> tuple[int, int, int]:
        """(U rows, V rows, W rows); zeros where the block is absent."""
        tr = self.fwd.transition
        if tr is None:
            return (0, 0, 0)
        return (tr.U.shape[0], tr.V.shape[0],
                0 if tr.W is None else tr.W.shape[0])

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        """All parameter blocks in declared (checkpoint) order."""
        out = []
        for prefix, d in (("fwd", self.fwd), ("bwd", self.bwd)):
            out.append((f"{prefix}.embedding", d.embedding))
            out.append((f"{prefix}.t_lstm.Wx", d.t_lstm.Wx))
            out.append((f"{prefix}.t_lstm.Wh", d.t_lstm.Wh))
            out.append((f"{prefix}.t_lstm.b", d.t_lstm.b))
            out.append((f"{prefix}.m_lstm.Wx", d.m_lstm.Wx))
            out.append((f"{prefix}.m_lstm.Wh", d.m_lstm.Wh))
            out.append((f"{prefix}.m_lstm.b", d.m_lstm.b))
            if d.transition is not None:
                out.append((f"{prefix}.trans.U", d.transition.U))
                out.append((f"{prefix}.trans.V", d.transition.V))
                if d.transition.W is not None:
                    out.append((f"{prefix}.trans.W", d.transition.W))
        out.append(("softmax_w", self.softmax_w))
        out.append(("softmax_b", self.softmax_b))
        return out

    def copy(self) -> "CaptionModel":
        return CaptionModel(
            arch=self.arch, fwd=self.fwd.copy(), bwd=self.bwd.copy(),
            softmax_w=self.softmax_w.copy(), softmax_b=self.softmax_b.copy(),
            vocab_size=self.vocab_size, feature_dim=self.feature_dim,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
        )


def is_bias_block(name: str) -> bool:
    return name.endswith(".b") or name == "softmax_b"


def default_bif_widths(hidden_dim: int) -> tuple[int, int, int]:
    """Half-width bottleneck and shortcut keep the relu variant lean."""
    half = max(1, hidden_dim // 2)
    return (half, half, half)


def text_input_width(arch: ArchitectureKind, hidden_dim: int,
                     widths: tuple[int, int, int]) -> int:
    """Width of the text-side vector entering the M-LSTM (before the
    feature vector is concatenated on)."""
    if arch == ArchitectureKind.BI_LSTM:
        return hidden_dim
    if arch == ArchitectureKind.BI_S_LSTM:
        return widths[0]
    return widths[1] + widths[2]  # bottleneck rows + shortcut rows


def build_model(arch: ArchitectureKind, vocab_size: int, feature_dim: int,
                embed_dim: int, hidden_dim: int,
                bif_widths: tuple[int, int, int] | None = None) -> CaptionModel:
    """All-zero model with the architecture's shapes; init_model fills it."""
    for label, dim in (("vocab_size", vocab_size), ("feature_dim", feature_dim),
                       ("embed_dim", embed_dim), ("hidden_dim", hidden_dim)):
        if dim < 1:
            raise ConfigError(f"{label} must be >= 1, got {dim}")

    if arch == ArchitectureKind.BI_LSTM:
        widths = (0, 0, 0)
    elif arch == ArchitectureKind.BI_S_LSTM:
        widths = (hidden_dim, 0, 0)
    else:
        widths = bif_widths or default_bif_widths(hidden_dim)
        if min(widths) < 1:
            raise ConfigError(f"transition widths must be >= 1, got {widths}")

    m_input = text_input_width(arch, hidden_dim, widths) + feature_dim

    def make_direction() -> DirectionParams:
        if arch == ArchitectureKind.BI_LSTM:
            trans = None
        elif arch == ArchitectureKind.BI_S_LSTM:
            trans = TransitionParams(
                U=np.zeros((hidden_dim, hidden_dim)),
                V=np.zeros((hidden_dim, hidden_dim)),
            )
        else:
            ua, vb, ww = widths
            trans = TransitionParams(
                U=np.zeros((ua, hidden_dim)),
                V=np.zeros((vb, ua)),
                W=np.zeros((ww, hidden_dim)),
            )
        return DirectionParams(
            embedding=np.zeros((embed_dim, vocab_size)),
            t_lstm=zeros_lstm(embed_dim, hidden_dim),
            m_lstm=zeros_lstm(m_input, hidden_dim),
            transition=trans,
        )

    return CaptionModel(
        arch=arch, fwd=make_direction(), bwd=make_direction(),
        softmax_w=np.zeros((vocab_size, hidden_dim)),
        softmax_b=np.zeros(vocab_size),
        vocab_size=vocab_size, feature_dim=feature_dim,
        embed_dim=embed_dim, hidden_dim=hidden_dim,
    )


def init_model(arch: ArchitectureKind, vocab_size: int, feature_dim: int,
               embed_dim: int, hidden_dim: int, seed: int = 0,
               bif_widths: tuple[int, int, int] | None = None) -> CaptionModel:
    """Weights i.i.d. uniform on [-0.08, 0.08], biases zero, reproducible
    per seed (blocks are sampled in declared order)."""
    m = build_model(arch, vocab_size, feature_dim, embed_dim, hidden_dim,
                    bif_widths)
    rng = np.random.default_rng(seed)
    for name, arr in m.blocks():
        if not is_bias_block(name):
            arr[...] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=arr.shape)
    return m


def random_model(arch: ArchitectureKind, vocab_size: int, feature_dim: int,
                 embed_dim: int, hidden_dim: int, seed: int = 0,
                 scale: float = 0.5,
                 bif_widths: tuple[int, int, int] | None = None) -> CaptionModel:
    """Model with every block (biases included) uniform on [-scale, scale].

    Used for gradient checking: unit-ish weights keep every block's gradient
    large enough for central differences to resolve, unlike the tiny
    training-time init. For the relu architecture the transition branches
    default to full width so a handful of dead units cannot starve the
    gradient flow to the layers below.
    """
    if arch == ArchitectureKind.BI_F_LSTM and bif_widths is None:
        bif_widths = (hidden_dim, hidden_dim, hidden_dim)
    m = build_model(arch, vocab_size, feature_dim, embed_dim, hidden_dim,
                    bif_widths)
    rng = np.random.default_rng(seed)
    for _, arr in m.blocks():
        arr[...] = rng.uniform(-scale, scale, size=arr.shape)
    return m


def bi_s_transition(U: np.ndarray, V: np.ndarray, h_below: np.ndarray,
                    h_prev_same: np.ndarray) -> np.ndarray:
    """Stacked transition: U @ h_below + V @ h_prev_same."""
    if U.shape[0] != V.shape[0]:
        raise ShapeError(
            f"transition rows disagree: U {U.shape} vs V {V.shape}"
        )
    return matvec(U, h_below) + matvec(V, h_prev_same)


def _bi_f_preact(W: np.ndarray, U: np.ndarray, V: np.ndarray,
                 h_below: np.ndarray) -> np.ndarray:
    return np.concatenate([matvec(W, h_below), matvec(V, matvec(U, h_below))])


def bi_f_transition(W: np.ndarray, U: np.ndarray, V: np.ndarray,
                    h_below: np.ndarray) -> np.ndarray:
    """Relu transition: relu(concat(W @ h_below, V @ (U @ h_below))).

    The W branch is the shortcut from the layer input; output length is
    W.rows + V.rows.
    """
    return relu(_bi_f_preact(W, U, V, h_below))


@dataclass
class ForwardPassRecord:
    """Everything one direction's forward pass produced, backward-ready."""

    direction: str
    tokens: list[int]
    feature: np.ndarray
    t_traces: list[LstmStepTrace]
    m_traces: list[LstmStepTrace]
    transition_activations: list[np.ndarray] | None
    transition_preacts: list[np.ndarray] | None
    logits: list[np.ndarray]
    probs: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.probs)


def direction_forward(m: CaptionModel, direction: str, tokens,
                      feature: np.ndarray) -> ForwardPassRecord:
    """Run one direction over an input token sequence.

    probs[t] is the distribution over the word following tokens[t]. The
    caller supplies tokens already in the direction's reading order; this
    never reverses.
    """
    if feature.shape[0] != m.feature_dim:
        raise ShapeError(
            f"feature has len {feature.shape[0]}, model expects {m.feature_dim}"
        )
    tokens = list(tokens)
    for t in tokens:
        if not 0 <= t < m.vocab_size:
            raise VocabError(f"token id {t} outside vocabulary of size {m.vocab_size}")

    d = m.direction(direction)
    arch = m.arch
    H = m.hidden_dim
    xs = [d.embedding[:, t] for t in tokens]
    t_traces = sequence_forward(d.t_lstm, xs)

    m_traces: list[LstmStepTrace] = []
    trans_acts: list[np.ndarray] | None = None if arch == ArchitectureKind.BI_LSTM else []
    trans_pre: list[np.ndarray] | None = [] if arch == ArchitectureKind.BI_F_LSTM else None
    logits_seq: list[np.ndarray] = []
    probs_seq: list[np.ndarray] = []

    h2 = np.zeros(H)
    c2 = np.zeros(H)
    for tr in t_traces:
        if arch == ArchitectureKind.BI_LSTM:
            text = tr.h
        elif arch == ArchitectureKind.BI_S_LSTM:
            text = bi_s_transition(d.transition.U, d.transition.V, tr.h, h2)
            trans_acts.append(text)
        else:
            pre = _bi_f_preact(d.transition.W, d.transition.U,
                               d.transition.V, tr.h)
            text = relu(pre)
            trans_pre.append(pre)
            trans_acts.append(text)
        m_in = np.concatenate([text, feature])
        m_tr = cell_forward(d.m_lstm, m_in, h2, c2)
        m_traces.append(m_tr)
        h2, c2 = m_tr.h, m_tr.c
        logits = m.softmax_w @ h2 + m.softmax_b
        logits_seq.append(logits)
        probs_seq.append(softmax(logits))

    return ForwardPassRecord(
        direction=direction, tokens=tokens, feature=feature,
        t_traces=t_traces, m_traces=m_traces,
        transition_activations=trans_acts, transition_preacts=trans_pre,
        logits=logits_seq, probs=probs_seq,
    )


def model_backward(m: CaptionModel, rec: ForwardPassRecord,
                   targets) -> dict[str, np.ndarray]:
    """Gradients of the summed cross-entropy  sum_t -log probs[t][targets[t]]
    for the record's direction, keyed by block name (softmax included)."""
    targets = list(targets)
    T = len(rec)
    if len(targets) != T:
        raise ShapeError(f"{T} steps but {len(targets)} targets")

    d = m.direction(rec.direction)
    arch = m.arch
    prefix = "fwd" if rec.direction == FORWARD else "bwd"
    H = m.hidden_dim
    tw = d.m_lstm.input_dim - m.feature_dim  # text-side width

    d_softmax_w = np.zeros_like(m.softmax_w)
    d_softmax_b = np.zeros_like(m.softmax_b)
    dh2_soft = []
    for t in range(T):
        dlogit = rec.probs[t].copy()
        dlogit[targets[t]] -= 1.0
        d_softmax_w += np.outer(dlogit, rec.m_traces[t].h)
        d_softmax_b += dlogit
        dh2_soft.append(m.softmax_w.T @ dlogit)

    m_grads = zero_grads(d.m_lstm)
    tr_params = d.transition
    dU = dV = dW = None
    if tr_params is not None:
        dU = np.zeros_like(tr_params.U)
        dV = np.zeros_like(tr_params.V)
        if tr_params.W is not None:
            dW = np.zeros_like(tr_params.W)

    dh1_seq = [np.zeros(H) for _ in range(T)]
    dh2_carry = np.zeros(H)
    dc2_carry = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh2 = dh2_soft[t] + dh2_carry
        dm_in, dh2_carry, dc2_carry = cell_backward(
            d.m_lstm, rec.m_traces[t], dh2, dc2_carry, m_grads)
        d_text = dm_in[:tw]
        h1 = rec.t_traces[t].h
        if arch == ArchitectureKind.BI_LSTM:
            dh1_seq[t] += d_text
        elif arch == ArchitectureKind.BI_S_LSTM:
            h2_prev = rec.m_traces[t].h_prev
            dU += np.outer(d_text, h1)
            dV += np.outer(d_text, h2_prev)
            dh1_seq[t] += tr_params.U.T @ d_text
            # the stacked transition also reads the previous M hidden state
            dh2_carry = dh2_carry + tr_params.V.T @ d_text
        else:
            pre = rec.transition_preacts[t]
            dpre = d_text * (pre > 0.0)
            ww = tr_params.W.shape[0]
            dpre_w, dpre_v = dpre[:ww], dpre[ww:]
            a = tr_params.U @ h1
            dW += np.outer(dpre_w, h1)
            dV += np.outer(dpre_v, a)
            da = tr_params.V.T @ dpre_v
            dU += np.outer(da, h1)
            dh1_seq[t] += tr_params.W.T @ dpre_w + tr_params.U.T @ da

    t_grads = sequence_backward(d.t_lstm, rec.t_traces, dh1_seq)

    d_emb = np.zeros_like(d.embedding)
    for t, tok in enumerate(rec.tokens):
        d_emb[:, tok] += t_grads.dx_seq[t]

    out = {
        f"{prefix}.embedding": d_emb,
        f"{prefix}.t_lstm.Wx": t_grads.dWx,
        f"{prefix}.t_lstm.Wh": t_grads.dWh,
        f"{prefix}.t_lstm.b": t_grads.db,
        f"{prefix}.m_lstm.Wx": m_grads.dWx,
        f"{prefix}.m_lstm.Wh": m_grads.dWh,
        f"{prefix}.m_lstm.b": m_grads.db,
        "softmax_w": d_softmax_w,
        "softmax_b": d_softmax_b,
    }
    if dU is not None:
        out[f"{prefix}.trans.U"] = dU
        out[f"{prefix}.trans.V"] = dV
        if dW is not None:
            out[f"{prefix}.trans.W"] = dW
    return out
