"""Re-watcher, re-reader, forgettable-watcher and straightforward scorers.

All four map a (video, QA-sentence) pair to a scalar goodness score.  The
eight scores of a question are softmaxed into class probabilities.

Weights are stored input-major, ``(d_in, d_out)``, and applied as ``x @ W``.
The attention weights ``W_vm``, ``W_cm`` and ``W_ms`` are shared between the
re-watching and re-reading passes of the forgettable-watcher.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .encoders import LstmParams, bilstm_encode, glorot, init_lstm, project, qa_summary
from .tensor import ShapeError, Tensor

KINDS = ("rewatcher", "rereader", "forgettable", "straightforward")
N_CANDIDATES = 8


@dataclass
class ModelConfig:
    d_v: int = 4096
    d_w: int = 300
    d_in_v: int | None = 1024  # LSTM input size; None feeds raw features
    d_in_c: int | None = 1024
    d_hv: int = 1024
    d_hc: int = 512
    d_j: int = 1024
    d_r: int = 512
    d_m: int = 512
    d_g: int = 512
    fc_sizes: tuple[int, ...] = (512, 256, 128)
    n_frames: int = 16
    forget_bias: float = 1.0
    dtype: str = "float64"

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    @classmethod
    def toy(cls, **kw) -> "ModelConfig":
        base = dict(d_v=6, d_w=5, d_in_v=8, d_in_c=8, d_hv=4, d_hc=4, d_j=8, d_r=4, d_m=4,
                    d_g=4, fc_sizes=(6, 5, 4), n_frames=3)
        base.update(kw)
        return cls(**base)

    @classmethod
    def small(cls, **kw) -> "ModelConfig":
        base = dict(d_v=16, d_w=16, d_in_v=16, d_in_c=16, d_hv=16, d_hc=16, d_j=16, d_r=16,
                    d_m=16, d_g=32, fc_sizes=(32, 16, 8), n_frames=8)
        base.update(kw)
        return cls(**base)

    @classmethod
    def preset(cls, name: str, **kw) -> "ModelConfig":
        try:
            return {"full": cls.full, "toy": cls.toy, "small": cls.small}[name](**kw)
        except KeyError:
            raise ValueError(f"unknown dimension preset {name!r}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fc_sizes"] = list(self.fc_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        if "fc_sizes" in d:
            d["fc_sizes"] = tuple(d["fc_sizes"])
        return cls(**d)


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


def param_shapes(cfg: ModelConfig, kind: str) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of everything ``kind`` needs."""
    _check_kind(kind)
    shapes: dict[str, tuple[int, ...]] = {}

    def lstm(prefix, d_in, h):
        shapes[f"{prefix}.W"] = (d_in, 4 * h)
        shapes[f"{prefix}.U"] = (h, 4 * h)
        shapes[f"{prefix}.b"] = (4 * h,)

    in_v = cfg.d_in_v or cfg.d_v
    in_c = cfg.d_in_c or cfg.d_w
    if cfg.d_in_v:
        shapes["in_v"] = (cfg.d_v, cfg.d_in_v)
    lstm("lstm_v_f", in_v, cfg.d_hv)
    lstm("lstm_v_b", in_v, cfg.d_hv)
    shapes["P_v"] = (2 * cfg.d_hv, cfg.d_j)
    if cfg.d_in_c:
        shapes["in_c"] = (cfg.d_w, cfg.d_in_c)
    lstm("lstm_c_f", in_c, cfg.d_hc)
    lstm("lstm_c_b", in_c, cfg.d_hc)
    shapes["P_c"] = (2 * cfg.d_hc, cfg.d_j)

    if kind != "straightforward":
        shapes["W_vm"] = (cfg.d_j, cfg.d_m)
        shapes["W_cm"] = (cfg.d_j, cfg.d_m)
        shapes["W_ms"] = (cfg.d_m,)
    if kind in ("rewatcher", "forgettable"):
        shapes["W_rm"] = (cfg.d_r, cfg.d_m)
        shapes["W_rr"] = (cfg.d_r, cfg.d_r)
        shapes["W_vr"] = (cfg.d_j, cfg.d_r)
        shapes["W_rg"] = (cfg.d_r, cfg.d_g)
    if kind in ("rereader", "forgettable"):
        shapes["W_wm"] = (cfg.d_r, cfg.d_m)
        shapes["W_ww"] = (cfg.d_r, cfg.d_r)
        shapes["W_cr"] = (cfg.d_j, cfg.d_r)
        shapes["W_wg"] = (cfg.d_r, cfg.d_g)
    if kind == "straightforward":
        shapes["W_vg"] = (cfg.d_j, cfg.d_g)
    shapes["W_cg"] = (cfg.d_j, cfg.d_g)

    sizes = (cfg.d_g,) + tuple(cfg.fc_sizes) + (1,)
    for k in range(len(sizes) - 1):
        shapes[f"fc{k}.W"] = (sizes[k], sizes[k + 1])
        shapes[f"fc{k}.b"] = (sizes[k + 1],)
    return shapes


def init_params(cfg: ModelConfig, kind: str, seed: int | np.random.Generator = 0) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases, forget-gate bias ``cfg.forget_bias``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dtype = np.dtype(cfg.dtype)
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(cfg, kind).items():
        if name.startswith("lstm_"):
            prefix, part = name.split(".")
            if part != "W":
                continue
            h = shape[1] // 4
            lp = init_lstm(shape[0], h, rng, dtype, cfg.forget_bias)
            for k, t in lp.tensors().items():
                t.name = f"{prefix}.{k}"
                params[t.name] = t
        elif name.endswith(".b"):
            params[name] = Tensor(np.zeros(shape, dtype=dtype), requires_grad=True, name=name)
        elif len(shape) == 1:
            arr = glorot(rng, shape[0], 1, dtype).reshape(shape)
            params[name] = Tensor(arr, requires_grad=True, name=name)
        else:
            params[name] = Tensor(glorot(rng, *shape, dtype), requires_grad=True, name=name)
    return params


def infer_kind(params) -> str:
    names = set(params)
    if "W_vg" in names:
        return "straightforward"
    if "W_rg" in names and "W_wg" in names:
        return "forgettable"
    if "W_rg" in names:
        return "rewatcher"
    if "W_wg" in names:
        return "rereader"
    raise ValueError("cannot infer model kind from parameter names")


def infer_config(params, n_frames: int = 16) -> ModelConfig:
    """Recover dimensions from parameter shapes (e.g. after loading a checkpoint)."""
    shp = {k: tuple(np.shape(v.data if isinstance(v, Tensor) else v)) for k, v in params.items()}
    d_hv = shp["lstm_v_f.U"][0]
    d_hc = shp["lstm_c_f.U"][0]
    d_j = shp["P_v"][1]
    n_fc = sum(1 for k in shp if k.startswith("fc") and k.endswith(".W"))
    fc_sizes = tuple(shp[f"fc{k}.W"][1] for k in range(n_fc - 1))
    d_g = shp["fc0.W"][0]
    d_r = next((shp[k][0] for k in ("W_rr", "W_ww") if k in shp), 4)
    d_m = shp["W_vm"][1] if "W_vm" in shp else d_r
    dtype = str(next(iter(params.values())).dtype) if isinstance(next(iter(params.values())), Tensor) else "float64"
    return ModelConfig(
        d_v=shp["in_v"][0] if "in_v" in shp else shp["lstm_v_f.W"][0],
        d_w=shp["in_c"][0] if "in_c" in shp else shp["lstm_c_f.W"][0],
        d_in_v=shp["in_v"][1] if "in_v" in shp else None,
        d_in_c=shp["in_c"][1] if "in_c" in shp else None,
        d_hv=d_hv, d_hc=d_hc, d_j=d_j, d_r=d_r, d_m=d_m, d_g=d_g, fc_sizes=fc_sizes,
        n_frames=n_frames, dtype=dtype,
    )


def _lstm(params, prefix) -> LstmParams:
    return LstmParams(params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"])


# -- encoders ---------------------------------------------------------------

@dataclass
class Encoded:
    joint: Tensor         # (B, T, d_j) projected per-step outputs
    summary: Tensor       # (B, d_j) projected [y^f(last), y^b(1)]


def encode_video(params, video) -> Encoded:
    x = T.as_tensor(video, dtype=params["P_v"].dtype)
    if "in_v" in params:
        x = project(x, params["in_v"])
    enc = bilstm_encode(x, _lstm(params, "lstm_v_f"), _lstm(params, "lstm_v_b"))
    return Encoded(project(enc.outputs, params["P_v"]), project(qa_summary(enc), params["P_v"]))


def encode_text(params, tokens, mask=None) -> Encoded:
    x = T.as_tensor(tokens, dtype=params["P_c"].dtype)
    if "in_c" in params:
        x = project(x, params["in_c"])
    enc = bilstm_encode(x, _lstm(params, "lstm_c_f"), _lstm(params, "lstm_c_b"), mask)
    return Encoded(project(enc.outputs, params["P_c"]), project(qa_summary(enc), params["P_c"]))


# -- attention passes ---------------------------------------------------------

def _batched(video_enc, qa_enc):
    v, c = T.as_tensor(video_enc), T.as_tensor(qa_enc)
    if v.ndim != c.ndim or v.ndim not in (2, 3):
        raise ShapeError(f"attention: video {v.shape} and QA {c.shape} must both be 2-D or 3-D")
    if v.ndim == 2:
        return T.reshape(v, (1,) + v.shape), T.reshape(c, (1,) + c.shape), True
    return v, c, False


def _check_nonempty(v: Tensor, c: Tensor) -> None:
    if v.shape[1] == 0 or c.shape[1] == 0:
        raise ValueError(f"attention: empty video or sentence (N={v.shape[1]}, |c|={c.shape[1]})")


def _attend(keys: Tensor, key_proj: Tensor, query: Tensor, w_ms: Tensor, mask=None):
    """softmax over the key axis of ``W_ms . tanh(key_proj + query)``; returns (context, s)."""
    m = T.tanh(key_proj + T.reshape(query, (query.shape[0], 1, query.shape[1])))
    s = T.softmax(m @ w_ms, axis=-1, mask=mask)
    ctx = T.reshape(s, (s.shape[0], 1, s.shape[1])) @ keys
    return ctx[:, 0], s


def rewatcher_attend(video_enc, qa_enc, params, qa_mask=None) -> tuple[Tensor, Tensor]:
    """Each QA token re-watches every frame; returns ``(r(|c|), s)`` with ``s`` of shape (|c|, N).

    Inputs are joint-space encodings, ``(N, d_j)`` and ``(|c|, d_j)`` or batched
    with a leading axis.  Padded tokens (``qa_mask`` False) leave ``r`` untouched.
    """
    v, c, unbatched = _batched(video_enc, qa_enc)
    _check_nonempty(v, c)
    B, L = c.shape[0], c.shape[1]
    d_r = params["W_rr"].shape[0]
    vm = v @ params["W_vm"]
    cm = c @ params["W_cm"]
    mask = None if qa_mask is None else np.asarray(qa_mask, dtype=bool).reshape(B, L)
    r = Tensor(np.zeros((B, d_r), dtype=vm.dtype))
    rows = []
    for i in range(L):
        query = r @ params["W_rm"] + cm[:, i]
        ctx, s = _attend(v, vm, query, params["W_ms"])
        r_new = ctx @ params["W_vr"] + T.tanh(r @ params["W_rr"])
        if mask is not None and not mask[:, i].all():
            m = mask[:, i:i + 1].astype(vm.dtype)
            r_new = r_new * m + r * (1.0 - m)
        r = r_new
        rows.append(s)
    s_all = T.stack(rows, axis=1)
    if unbatched:
        return r[0], s_all[0]
    return r, s_all


def rereader_attend(video_enc, qa_enc, params, qa_mask=None) -> tuple[Tensor, Tensor]:
    """Each frame re-reads the whole QA-sentence; returns ``(w(N), s)`` with ``s`` of shape (N, |c|)."""
    v, c, unbatched = _batched(video_enc, qa_enc)
    _check_nonempty(v, c)
    B, N = v.shape[0], v.shape[1]
    d_r = params["W_ww"].shape[0]
    vm = v @ params["W_vm"]
    cm = c @ params["W_cm"]
    mask = None
    if qa_mask is not None:
        mask = np.asarray(qa_mask, dtype=bool).reshape(B, c.shape[1])
        if mask.all():
            mask = None
    w = Tensor(np.zeros((B, d_r), dtype=vm.dtype))
    rows = []
    for t in range(N):
        query = w @ params["W_wm"] + vm[:, t]
        ctx, s = _attend(c, cm, query, params["W_ms"], mask)
        w = ctx @ params["W_cr"] + T.tanh(w @ params["W_ww"])
        rows.append(s)
    s_all = T.stack(rows, axis=1)
    if unbatched:
        return w[0], s_all[0]
    return w, s_all


# -- score head ---------------------------------------------------------------

def fc_stack(params, x: Tensor) -> Tensor:
    k = 0
    while f"fc{k + 1}.W" in params:
        x = T.relu(x @ params[f"fc{k}.W"] + params[f"fc{k}.b"])
        k += 1
    out = x @ params[f"fc{k}.W"] + params[f"fc{k}.b"]
    return T.reshape(out, out.shape[:-1])


@dataclass
class ScoreOutput:
    scores: Tensor                      # (Bs,)
    attention: dict[str, Tensor] = field(default_factory=dict)


def forward_scores(kind: str, params, video, tokens, mask=None, video_index=None) -> ScoreOutput:
    """Score ``Bs`` QA-sentences against ``Bv`` videos.

    ``video``: (Bv, N, d_v); ``tokens``: (Bs, L, d_w) embedded QA-sentences;
    ``video_index[j]`` names the video of sentence ``j`` (identity if omitted).
    """
    _check_kind(kind)
    venc = encode_video(params, video)
    cenc = encode_text(params, tokens, mask)
    Bs = cenc.joint.shape[0]
    if video_index is None:
        if venc.joint.shape[0] != Bs:
            raise ShapeError(f"{venc.joint.shape[0]} videos for {Bs} sentences and no video_index")
        video_index = np.arange(Bs)
    u = cenc.summary
    attn: dict[str, Tensor] = {}
    if kind == "straightforward":
        yv_hat = T.take(venc.summary, video_index, axis=0)
        pre = yv_hat @ params["W_vg"] + u @ params["W_cg"]
    else:
        yv = T.take(venc.joint, video_index, axis=0)
        pre = None
        if kind in ("rewatcher", "forgettable"):
            r, attn["rewatch"] = rewatcher_attend(yv, cenc.joint, params, mask)
            pre = r @ params["W_rg"]
        if kind in ("rereader", "forgettable"):
            w, attn["reread"] = rereader_attend(yv, cenc.joint, params, mask)
            ww = w @ params["W_wg"]
            pre = ww if pre is None else pre + ww
        pre = pre + u @ params["W_cg"]
    return ScoreOutput(fc_stack(params, T.tanh(pre)), attn)


def score_qa(kind: str, video, qa, params) -> Tensor:
    """Scalar score of one QA-sentence ``qa`` (|c|, d_w) against one video (N, d_v)."""
    video = np.asarray(video.data if isinstance(video, Tensor) else video)
    qa = np.asarray(qa.data if isinstance(qa, Tensor) else qa)
    if qa.ndim != 2 or qa.shape[0] == 0 or video.ndim != 2 or video.shape[0] == 0:
        raise ValueError(f"score_qa: need non-empty (N, d_v) video and (|c|, d_w) sentence, "
                         f"got {video.shape} and {qa.shape}")
    return forward_scores(kind, params, video[None], qa[None]).scores[0]


# -- classification -------------------------------------------------------------

def pad_sentences(sentences, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad a list of (|c_k|, d_w) arrays into (K, L, d_w) plus a boolean mask."""
    if not sentences:
        raise ValueError("no sentences")
    lens = [len(s) for s in sentences]
    if min(lens) == 0:
        raise ValueError("empty QA-sentence")
    d = sentences[0].shape[1]
    out = np.zeros((len(sentences), max(lens), d), dtype=dtype)
    mask = np.zeros((len(sentences), max(lens)), dtype=bool)
    for k, s in enumerate(sentences):
        out[k, : len(s)] = s
        mask[k, : len(s)] = True
    return out, mask


def batch_scores(kind: str, params, videos, sentences, mask=None) -> Tensor:
    """Scores of shape (B, 8) for ``B`` videos and ``B*8`` sentences (video-major)."""
    videos = np.asarray(videos)
    B = videos.shape[0]
    if sentences.shape[0] != B * N_CANDIDATES:
        raise ValueError(f"expected {B * N_CANDIDATES} QA-sentences for {B} videos, got {sentences.shape[0]}")
    idx = np.repeat(np.arange(B), N_CANDIDATES)
    out = forward_scores(kind, params, videos, sentences, mask, idx)
    return T.reshape(out.scores, (B, N_CANDIDATES))


@dataclass
class Answer:
    probabilities: Tensor
    predicted: int
    scores: Tensor


def answer_question(kind: str, video, qa_sentences, params) -> Answer:
    """Pick one of exactly 8 embedded QA-sentences for ``video``.

    Ties resolve to the lowest index.
    """
    if len(qa_sentences) != N_CANDIDATES:
        raise ValueError(f"answer_question needs exactly {N_CANDIDATES} candidates, got {len(qa_sentences)}")
    video = np.asarray(video.data if isinstance(video, Tensor) else video)
    dtype = params["P_v"].dtype
    tokens, mask = pad_sentences([np.asarray(s) for s in qa_sentences], dtype)
    scores = batch_scores(kind, params, video[None], tokens, mask)[0]
    probs = T.softmax(scores)
    return Answer(probs, int(np.argmax(probs.data)), scores)


def qa_loss(probabilities, gt_index: int) -> Tensor:
    """Cross-entropy ``-log p[gt]`` for one question."""
    p = T.as_tensor(probabilities)
    n = p.shape[-1]
    if not 0 <= int(gt_index) < n:
        raise ValueError(f"gt_index {gt_index} out of range 0..{n - 1}")
    return -T.log(p[..., int(gt_index)])


def cross_entropy(scores: Tensor, gt) -> Tensor:
    """Mean over the batch of ``-log softmax(scores)[gt]``; same value as
    :func:`qa_loss` on the softmax, computed through log-softmax."""
    gt = np.asarray(gt, dtype=np.intp)
    if gt.min() < 0 or gt.max() >= scores.shape[-1]:
        raise ValueError(f"gt indices out of range 0..{scores.shape[-1] - 1}")
    lp = T.log_softmax(scores, axis=-1)
    picked = lp[np.arange(len(gt)), gt]
    return -T.mean(picked)
