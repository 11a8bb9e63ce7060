"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .params import ParamStore
from .tensor import Tape, Tensor


class NonDeterministicError(RuntimeError):
    pass


class GradCheckResult(NamedTuple):
    max_rel_error: float
    n_checked: int
    n_excluded: int


def grad_check(
    f: Callable[[ParamStore], Tensor],
    ps: ParamStore,
    eps: float = 1e-5,
    max_coords: int = 10_000,
    seed: int = 0,
    floor: float = 1e-6,
    kink_tol: float = 0.1,
    details: bool = False,
):
    """Compare backward gradients of ``f`` with central differences.

    The error per coordinate is ``|analytic - numeric| / max(|analytic|,
    |numeric|, floor)``. A coordinate whose forward and backward one-sided
    differences disagree by more than ``kink_tol`` (relative, scale at least
    1e-3) sits within ``eps`` of a kink and is excluded. Above ``max_coords``
    coordinates a fixed random subsample (``seed``) is checked.

    Returns the maximum relative error, or a :class:`GradCheckResult` when
    ``details`` is set.
    """
    f0 = float(f(ps).values)
    if float(f(ps).values) != f0:
        raise NonDeterministicError("f returned different values on repeated evaluation")

    ps.zero_grad()
    with Tape() as tape:
        loss = f(ps)
    tape.backward(loss)
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.values)) for k, t in ps.items()}
    ps.zero_grad()

    coords = [(k, i) for k, t in ps.items() for i in range(t.size)]
    if len(coords) > max_coords:
        pick = np.random.default_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in np.sort(pick)]

    worst, excluded = 0.0, 0
    for k, i in coords:
        t = ps[k]
        flat = t.values.reshape(-1)
        x = flat[i]
        flat[i] = x + eps
        fp = float(f(ps).values)
        flat[i] = x - eps
        fm = float(f(ps).values)
        flat[i] = x
        d_plus = (fp - f0) / eps
        d_minus = (f0 - fm) / eps
        if abs(d_plus - d_minus) > kink_tol * max(abs(d_plus), abs(d_minus), 1e-3):
            excluded += 1
            continue
        numeric = (fp - fm) / (2 * eps)
        a = analytic[k].reshape(-1)[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    if details:
        return GradCheckResult(worst, len(coords) - excluded, excluded)
    return worst
