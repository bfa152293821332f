"""Caption generation: beam search per direction (beam width 1 is exactly
greedy argmax), selection of the better direction by summed log-probability,
and gate-state trace export for inspecting the cells over time.
"""

from dataclasses import dataclass

import numpy as np

from .data import BOUNDARY_ID, Vocabulary
from .errors import ConfigError, DataError, ShapeError
from .lstm import LstmStepTrace, cell_forward
from .model import (ArchitectureKind, BACKWARD, CaptionModel, DirectionParams,
                    FORWARD, _bi_f_preact, bi_s_transition)
from .numcore import log_softmax, relu, softmax


@dataclass
class Hypothesis:
    """A (possibly finished) decoded candidate. tokens includes the
    terminating boundary token when one was emitted."""

    tokens: list[int]
    logprob_sum: float
    per_step_logprobs: list[float]
    finished: bool


@dataclass
class _DecodeState:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray


def _initial_state(m: CaptionModel) -> _DecodeState:
    H = m.hidden_dim
    return _DecodeState(np.zeros(H), np.zeros(H), np.zeros(H), np.zeros(H))


def _decode_step(m: CaptionModel, d: DirectionParams, state: _DecodeState,
                 token: int, feature: np.ndarray):
    """Advance one step; returns (logits, new_state, t_trace, m_trace)."""
    x = d.embedding[:, token]
    t_tr = cell_forward(d.t_lstm, x, state.h1, state.c1)
    if m.arch == ArchitectureKind.BI_LSTM:
        text = t_tr.h
    elif m.arch == ArchitectureKind.BI_S_LSTM:
        text = bi_s_transition(d.transition.U, d.transition.V, t_tr.h, state.h2)
    else:
        text = relu(_bi_f_preact(d.transition.W, d.transition.U,
                                 d.transition.V, t_tr.h))
    m_in = np.concatenate([text, feature])
    m_tr = cell_forward(d.m_lstm, m_in, state.h2, state.c2)
    logits = m.softmax_w @ m_tr.h + m.softmax_b
    return logits, _DecodeState(t_tr.h, t_tr.c, m_tr.h, m_tr.c), t_tr, m_tr


def decode_direction(m: CaptionModel, direction: str, feature: np.ndarray,
                     beam_k: int = 1, max_len: int = 50) -> Hypothesis:
    """Beam search from the boundary start token. A hypothesis finishes when
    it emits the boundary token or reaches max_len; the finished hypothesis
    with the highest summed log-probability wins (ties keep emission order).
    """
    if beam_k < 1:
        raise ConfigError(f"beam_k must be >= 1, got {beam_k}")
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    if feature.shape[0] != m.feature_dim:
        raise ShapeError(
            f"feature has len {feature.shape[0]}, model expects {m.feature_dim}"
        )

    d = m.direction(direction)
    live = [(Hypothesis([], 0.0, [], False), _initial_state(m), BOUNDARY_ID)]
    finished: list[Hypothesis] = []

    for _ in range(max_len):
        if not live:
            break
        candidates = []
        for hyp, state, last_token in live:
            logits, new_state, _, _ = _decode_step(m, d, state, last_token, feature)
            logprobs = log_softmax(logits)
            order = np.argsort(-logprobs, kind="stable")[:beam_k]
            for tok in order:
                tok = int(tok)
                lp = float(logprobs[tok])
                ext = Hypothesis(hyp.tokens + [tok], hyp.logprob_sum + lp,
                                 hyp.per_step_logprobs + [lp], False)
                candidates.append((ext, new_state, tok))
        candidates.sort(key=lambda c: -c[0].logprob_sum)
        live = []
        for ext, state, tok in candidates[:beam_k]:
            if tok == BOUNDARY_ID or len(ext.tokens) >= max_len:
                ext.finished = True
                finished.append(ext)
            else:
                live.append((ext, state, tok))

    if not finished:
        # only reachable if max_len pruning left nothing, which cannot
        # happen, but keep a defensive fallback on the live set
        finished = [hyp for hyp, _, _ in live]
    best = max(finished, key=lambda h: h.logprob_sum)
    return best


@dataclass
class SelectedCaption:
    caption: list[int]
    chosen: str


def select_final_caption(hf: Hypothesis, hb: Hypothesis) -> SelectedCaption:
    """Pick the direction with the higher summed log-probability (ties go
    forward). The backward winner is re-reversed into reading order, and the
    terminating boundary token is stripped from the returned caption."""
    if not hf.tokens or not hb.tokens:
        raise DataError("cannot select between empty hypotheses")
    if hf.logprob_sum >= hb.logprob_sum:
        chosen, hyp = FORWARD, hf
    else:
        chosen, hyp = BACKWARD, hb
    caption = list(hyp.tokens)
    if caption and caption[-1] == BOUNDARY_ID:
        caption = caption[:-1]
    if chosen == BACKWARD:
        caption = caption[::-1]
    return SelectedCaption(caption=caption, chosen=chosen)


# ---------------------------------------------------------------------------
# gate-state traces
# ---------------------------------------------------------------------------

@dataclass
class GateTrace:
    """Per-step cell internals for both LSTM layers of one greedy decode,
    plus the emitted word at each step."""

    direction: str
    t_steps: list[LstmStepTrace]
    m_steps: list[LstmStepTrace]
    words: list[tuple[int, str, int, float]]  # (step, token, vocab index, prob)


def dump_gate_trace(m: CaptionModel, feature: np.ndarray, direction: str,
                    max_len: int = 50,
                    vocab: Vocabulary | None = None) -> GateTrace:
    """Greedy-decode while recording every step's gate/cell/hidden vectors
    for the text and multimodal LSTM layers."""
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    if feature.shape[0] != m.feature_dim:
        raise ShapeError(
            f"feature has len {feature.shape[0]}, model expects {m.feature_dim}"
        )
    d = m.direction(direction)
    state = _initial_state(m)
    token = BOUNDARY_ID
    t_steps: list[LstmStepTrace] = []
    m_steps: list[LstmStepTrace] = []
    words: list[tuple[int, str, int, float]] = []
    for step in range(max_len):
        logits, state, t_tr, m_tr = _decode_step(m, d, state, token, feature)
        probs = softmax(logits)
        token = int(np.argmax(probs))
        t_steps.append(t_tr)
        m_steps.append(m_tr)
        word = vocab.id_to_token[token] if vocab is not None else str(token)
        words.append((step, word, token, float(probs[token])))
        if token == BOUNDARY_ID:
            break
    return GateTrace(direction=direction, t_steps=t_steps, m_steps=m_steps,
                     words=words)


GATE_HEADER = "step,layer,direction,unit,i,f,o,g,c,h"
WORDS_HEADER = "step,token,vocab_index,prob"


def gate_trace_rows(trace: GateTrace) -> list[str]:
    rows = [GATE_HEADER]
    for step in range(len(trace.t_steps)):
        for layer, tr in (("t_lstm", trace.t_steps[step]),
                          ("m_lstm", trace.m_steps[step])):
            for unit in range(tr.h.shape[0]):
                vals = ",".join(
                    format(vec[unit], ".17g")
                    for vec in (tr.i, tr.f, tr.o, tr.g, tr.c, tr.h)
                )
                rows.append(f"{step},{layer},{trace.direction},{unit},{vals}")
    return rows


def words_rows(trace: GateTrace) -> list[str]:
    rows = [WORDS_HEADER]
    for step, word, index, prob in trace.words:
        rows.append(f"{step},{word},{index},{format(prob, '.17g')}")
    return rows


def write_gate_trace(trace: GateTrace, gates_path, words_path) -> None:
    with open(gates_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(gate_trace_rows(trace)) + "\n")
    with open(words_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(words_rows(trace)) + "\n")
