"""LSTM cell, bidirectional encoders and linear projections.

Gate layout of the fused weights is ``[i | f | o | g]`` along the last axis.
No peephole connections.  Sequences are batched as ``(B, T, d)``; a boolean
``mask`` of shape ``(B, T)`` marks real (right-aligned padding excluded)
positions, and masked steps carry the previous state through unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float64) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class LstmParams:
    W: Tensor  # (input, 4h)
    U: Tensor  # (h, 4h)
    b: Tensor  # (4h,)

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W, U, b) blocks of one gate, as views."""
        k = "ifog".index(name)
        h = self.hidden_size
        sl = slice(k * h, (k + 1) * h)
        return self.W.data[:, sl], self.U.data[:, sl], self.b.data[sl]

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "U": self.U, "b": self.b}


def init_lstm(input_size: int, hidden_size: int, rng: np.random.Generator,
              dtype=np.float64, forget_bias: float = 1.0) -> LstmParams:
    W = np.concatenate([glorot(rng, input_size, hidden_size, dtype) for _ in range(4)], axis=1)
    U = np.concatenate([glorot(rng, hidden_size, hidden_size, dtype) for _ in range(4)], axis=1)
    b = np.zeros(4 * hidden_size, dtype=dtype)
    b[hidden_size:2 * hidden_size] = forget_bias
    return LstmParams(Tensor(W, requires_grad=True), Tensor(U, requires_grad=True),
                      Tensor(b, requires_grad=True))


def _check_lstm_shapes(x: Tensor, h: Tensor, c: Tensor, p: LstmParams) -> None:
    H = p.hidden_size
    if p.W.shape[1] != 4 * H or p.U.shape != (H, 4 * H) or p.b.shape != (4 * H,):
        raise ShapeError(f"lstm: inconsistent parameters W{p.W.shape} U{p.U.shape} b{p.b.shape}")
    if x.shape[-1] != p.input_size:
        raise ShapeError(f"lstm: input shape {x.shape} does not match W {p.W.shape}")
    if h.shape[-1] != H or c.shape[-1] != H:
        raise ShapeError(f"lstm: state shapes {h.shape}, {c.shape} do not match hidden size {H}")


def _blend(new: Tensor, old: Tensor, m) -> Tensor:
    if m is None:
        return new
    return new * m + old * (1.0 - m)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LstmParams, mask=None) -> tuple[Tensor, Tensor]:
    """One LSTM step; returns ``(h', c')``.

    With ``mask`` (shape ``(B, 1)``, 0/1), rows where it is 0 keep ``h``/``c``.
    """
    x, h, c = T.as_tensor(x), T.as_tensor(h), T.as_tensor(c)
    _check_lstm_shapes(x, h, c, p)
    H = p.hidden_size
    z = x @ p.W + h @ p.U + p.b
    sig = T.sigmoid(z[..., : 3 * H])
    g = T.tanh(z[..., 3 * H:])
    i, f, o = sig[..., :H], sig[..., H:2 * H], sig[..., 2 * H:]
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return _blend(h_new, h, mask), _blend(c_new, c, mask)


@dataclass
class BiLstmOutput:
    outputs: Tensor      # (B, T, 2h) per step [y^f(t), y^b(t)]
    final_fwd: Tensor    # (B, h) forward output at the last real position
    first_bwd: Tensor    # (B, h) backward output at position 1

    def step(self, t: int) -> Tensor:
        return self.outputs[:, t]


def _scan(seq: Tensor, p: LstmParams, order, mask) -> list[Tensor]:
    B = seq.shape[0]
    H = p.hidden_size
    zeros = np.zeros((B, H), dtype=p.W.data.dtype)
    h, c = Tensor(zeros), Tensor(zeros)
    outs: list[Tensor | None] = [None] * seq.shape[1]
    for t in order:
        m = None
        if mask is not None and not mask[:, t].all():
            m = mask[:, t:t + 1].astype(p.W.data.dtype)
        h, c = lstm_step(seq[:, t], h, c, p, m)
        outs[t] = h
    return outs


def bilstm_encode(seq, fwd: LstmParams, bwd: LstmParams, mask=None) -> BiLstmOutput:
    """Bidirectional scan from zero initial states.

    ``seq`` is ``(T, d)`` or ``(B, T, d)``.  For an unbatched input the
    returned tensors drop the batch axis.
    """
    seq = T.as_tensor(seq)
    unbatched = seq.ndim == 2
    if unbatched:
        seq = T.reshape(seq, (1,) + seq.shape)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None, :]
    if seq.ndim != 3 or seq.shape[1] == 0:
        raise ValueError(f"bilstm_encode: need a non-empty sequence, got shape {seq.shape}")
    n_steps = seq.shape[1]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != seq.shape[:2]:
            raise ShapeError(f"bilstm_encode: mask {mask.shape} does not match sequence {seq.shape}")
        if not mask[:, 0].all():
            raise ValueError("bilstm_encode: every sequence needs at least one real step")
        if mask.all():
            mask = None
    yf = _scan(seq, fwd, range(n_steps), mask)
    yb = _scan(seq, bwd, range(n_steps - 1, -1, -1), mask)
    outputs = T.concat([T.stack(yf, axis=1), T.stack(yb, axis=1)], axis=-1)
    final_fwd, first_bwd = yf[-1], yb[0]
    if unbatched:
        outputs = outputs[0]
        final_fwd, first_bwd = final_fwd[0], first_bwd[0]
    return BiLstmOutput(outputs, final_fwd, first_bwd)


def qa_summary(enc: BiLstmOutput) -> Tensor:
    """``u = [y^f(|c|), y^b(1)]``."""
    return T.concat([enc.final_fwd, enc.first_bwd], axis=-1)


def project(x, P: Tensor) -> Tensor:
    """Apply the linear map ``P`` (shape ``(d_in, d_out)``) along the last axis."""
    x = T.as_tensor(x)
    if x.shape[-1] != P.shape[0]:
        raise ShapeError(f"project: input shape {x.shape} does not match projection {P.shape}")
    return x @ P
