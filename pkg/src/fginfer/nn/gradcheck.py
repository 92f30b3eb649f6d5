from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor, no_grad, record_kinks
from .params import ParamStore


def gradcheck(f: Callable[[ParamStore], Tensor], params: ParamStore, n_coords: int = 50, step: float = 1e-5,
              seed: int = 0, floor: float = 1e-6, return_details: bool = False):
    """Largest relative error between autodiff and central differences.

    Coordinates are sampled without replacement (all of them if fewer than
    ``n_coords``). A coordinate is skipped when the ``+step`` and ``-step``
    evaluations land on different sides of a relu/abs/max kink. The error
    denominator is ``max(|analytic|, |numeric|, floor)``.
    """
    params.zero_grad()
    with record_kinks() as base_kinks:
        out = f(params)
    out.backward()
    analytic = params.flat_grad()
    x0 = params.flat()
    rng = np.random.default_rng(seed)
    coords = np.arange(x0.size) if x0.size <= n_coords else rng.choice(x0.size, n_coords, replace=False)

    worst, checked, skipped = 0.0, 0, 0
    try:
        for c in coords:
            vals = []
            sigs = []
            for sgn in (1.0, -1.0):
                x = x0.copy()
                x[c] += sgn * step
                params.set_flat(x)
                with no_grad(), record_kinks() as kinks:
                    vals.append(float(f(params).data))
                sigs.append(kinks)
            if sigs[0] != sigs[1] or sigs[0] != base_kinks:
                skipped += 1
                continue
            numeric = (vals[0] - vals[1]) / (2 * step)
            err = abs(analytic[c] - numeric) / max(abs(analytic[c]), abs(numeric), floor)
            worst = max(worst, err)
            checked += 1
    finally:
        params.set_flat(x0)
    if return_details:
        return worst, {"checked": checked, "skipped": skipped}
    return worst
