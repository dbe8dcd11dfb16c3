"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tol: float
    n_checked: int
    worst: tuple[int, tuple[int, ...]] | None = None
    per_tensor: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "passed": self.passed,
            "tol": self.tol,
            "n_checked": self.n_checked,
            "worst": None if self.worst is None else [self.worst[0], list(self.worst[1])],
            "per_tensor": self.per_tensor,
        }


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def _extended_dtype():
    ld = np.dtype(np.longdouble)
    return ld if np.finfo(ld).eps < 1e-18 else np.dtype(np.float64)


EXTENDED = _extended_dtype()


def grad_check(
    fn: Callable[..., Tensor],
    point: Tensor | Sequence[Tensor],
    h: float = 1e-6,
    tol: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
    fd_dtype=EXTENDED,
) -> GradCheckReport:
    """Compare the analytic gradient of ``fn(*point)`` with central differences.

    The analytic gradient is taken at the point as given (normally float64).
    The difference quotients are evaluated with the point cast to ``fd_dtype``
    (extended precision where the platform has it), which keeps round-off in
    ``f(x+h) - f(x-h)`` far below the tolerances used here.  ``fn`` must
    therefore compute in the dtype of the tensors it receives.

    ``point`` tensors are perturbed in place one coordinate at a time and
    restored afterwards.  With ``max_coords`` set, at most that many
    coordinates per tensor are sampled (seeded); otherwise every coordinate is
    checked.  The report is always returned; ``passed`` is ``max <= tol``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [point] if isinstance(point, Tensor) else list(point)
    for p in params:
        p.requires_grad = True
    root = fn(*params)
    analytic = backward(root, params)
    saved = [p.data for p in params]
    rng = np.random.default_rng(seed)
    worst_err, worst_at, n_checked = 0.0, None, 0
    per_tensor = []
    try:
        for p in params:
            p.data = np.array(p.data, dtype=fd_dtype)
        with no_grad():
            for k, (p, ga) in enumerate(zip(params, analytic)):
                flat = p.data.reshape(-1)
                ga = ga.reshape(-1)
                coords = np.arange(flat.size)
                if max_coords is not None and flat.size > max_coords:
                    coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
                tensor_worst = 0.0
                for j in coords:
                    orig = flat[j]
                    flat[j] = orig + h
                    fp = fn(*params).data.reshape(())
                    flat[j] = orig - h
                    fm = fn(*params).data.reshape(())
                    flat[j] = orig
                    err = float(relative_error(ga[j], (fp - fm) / (2.0 * h)))
                    n_checked += 1
                    tensor_worst = max(tensor_worst, err)
                    if worst_at is None or err > worst_err:
                        worst_err = err
                        worst_at = (k, tuple(int(i) for i in np.unravel_index(j, p.shape)))
                per_tensor.append(tensor_worst)
    finally:
        for p, d in zip(params, saved):
            p.data = d
    return GradCheckReport(
        max_rel_error=worst_err,
        passed=bool(worst_err <= tol),
        tol=tol,
        n_checked=n_checked,
        worst=worst_at,
        per_tensor=per_tensor,
    )


def check_model(kind: str, config=None, tol: float = 1e-4, seed: int = 0, h: float = 1e-5,
                n_tokens: int = 5, scale: float = 0.5, max_coords: int | None = None) -> GradCheckReport:
    """Gradient check of the cross-entropy of one 8-way question for model ``kind``.

    Parameters are redrawn from N(0, scale^2), biases included, so that no
    ReLU sits exactly on its kink (zero-initialised biases put many
    pre-activations at exactly 0, where the derivative is undefined).
    """
    from .models import ModelConfig, N_CANDIDATES, batch_scores, cross_entropy, init_params

    config = config or ModelConfig.toy()
    rng = np.random.default_rng([seed, 7])
    params = init_params(config, kind, seed)
    for t in params.values():
        t.data = rng.normal(scale=scale, size=t.shape)
    video = rng.normal(size=(1, config.n_frames, config.d_v))
    tokens = rng.normal(size=(N_CANDIDATES, n_tokens, config.d_w))
    gt = [int(rng.integers(N_CANDIDATES))]

    def loss(*_):
        return cross_entropy(batch_scores(kind, params, video, tokens), gt)

    return grad_check(loss, list(params.values()), h=h, tol=tol, max_coords=max_coords, seed=seed)
