"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from rephrasekit.numcore.tensor import GradientError, Parameter, Tensor, no_grad


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
    max_coords_per_param: int = 6,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and numeric gradients.

    ``loss_fn`` must be deterministic across calls (freeze dropout by
    reseeding inside it). For sampled coordinates of each parameter the
    numeric gradient is (f(x+eps) - f(x-eps)) / (2 eps) and the error is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = loss_fn()
    if loss.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise GradientError("loss is not finite")
    loss.backward()
    analytic = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params}

    worst = 0.0
    with no_grad():
        for p in params:
            n_coords = min(max_coords_per_param, p.size)
            coords = rng.choice(p.size, size=n_coords, replace=False)
            for c in coords:
                orig = p.data.flat[c]
                p.data.flat[c] = orig + eps
                hi = float(loss_fn().data)
                p.data.flat[c] = orig - eps
                lo = float(loss_fn().data)
                p.data.flat[c] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise GradientError(f"non-finite loss while perturbing {p.name!r}")
                numeric = (hi - lo) / (2.0 * eps)
                a = float(analytic[p.name].flat[c])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
