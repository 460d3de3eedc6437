"""Central finite-difference gradient oracle."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_block: dict[str, float] = field(default_factory=dict)
    coords_checked: int = 0

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def _scalar(f, params) -> float:
    out = f(params)
    val = out.item() if isinstance(out, Tensor) else float(out)
    if not np.isfinite(val):
        raise FloatingPointError("objective is not finite")
    return val


def finite_diff_check(f: Callable[[Mapping[str, Tensor]], Tensor], params: Mapping[str, Tensor],
                      h: float = 1e-5, n_coords: int = 200, seed: int = 0, order: int = 2,
                      blocks: list[str] | None = None,
                      analytic: Mapping[str, np.ndarray] | None = None) -> GradCheckResult:
    """Compare the tape gradient of ``f`` against central differences
    (``order`` 2: two-point stencil, 4: four-point stencil).

    ``f`` must be deterministic.  At least ``n_coords`` coordinates are
    sampled (all of them when fewer exist), spread evenly across blocks so
    every block is visited.  The error of a coordinate is
    ``|analytic - numeric| / max(1e-8, |numeric|)``.  ``analytic`` overrides
    the tape gradient (used to inject faults in self-tests).
    """
    names = [n for n in params if blocks is None or any(n.startswith(b) or f".{b}." in f".{n}." for b in blocks)]
    if not names:
        raise ValueError(f"no parameter blocks match {blocks}")
    if analytic is None:
        with Tape() as tape:
            loss = f(params)
            grads = backward(tape, loss)
        analytic = {n: grads[params[n]] for n in names}

    rng = np.random.default_rng(seed)
    per_block_quota = max(1, -(-n_coords // len(names)))
    picks: list[tuple[str, int]] = []
    for n in names:
        size = params[n].data.size
        k = min(size, per_block_quota)
        picks += [(n, int(i)) for i in rng.choice(size, size=k, replace=False)]
    # top up so that the total reaches n_coords when blocks are small
    remaining = n_coords - len(picks)
    if remaining > 0:
        taken = set(picks)
        pool = [(n, i) for n in names for i in range(params[n].data.size) if (n, i) not in taken]
        if pool:
            extra = rng.choice(len(pool), size=min(remaining, len(pool)), replace=False)
            picks += [pool[int(j)] for j in extra]

    if order == 2:
        stencil = ((1, 1.0), (-1, -1.0))
        denom = 2.0 * h
    elif order == 4:
        stencil = ((2, -1.0), (1, 8.0), (-1, -8.0), (-2, 1.0))
        denom = 12.0 * h
    else:
        raise ValueError("order must be 2 or 4")

    per_block: dict[str, float] = {n: 0.0 for n in names}
    for n, i in picks:
        p = params[n]
        base = p.data
        orig = base.reshape(-1)[i]
        total = 0.0
        for step, weight in stencil:
            moved = base.copy()
            moved.reshape(-1)[i] = orig + step * h
            p.data = moved
            total += weight * _scalar(f, params)
        p.data = base
        numeric = total / denom
        a = float(np.asarray(analytic[n]).reshape(-1)[i])
        err = abs(a - numeric) / max(1e-8, abs(numeric))
        per_block[n] = max(per_block[n], err)
    worst = max(per_block.values()) if per_block else 0.0
    return GradCheckResult(worst, per_block, len(picks))
