"""Baseline 1-D Cartesian masks: central ACS block, equispaced, variable-density random."""

from __future__ import annotations

import math

import numpy as np

from ..errors import BudgetExceedsGrid, InvalidParams
from ..types import SamplingMask


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def acs_lines(ny: int, count: int) -> tuple:
    """``count`` contiguous lines around the k-space center ``ny // 2``.

    The block starts at ``ny // 2 - count // 2``, so odd blocks are symmetric
    about the center and even blocks carry the extra line on the low side.
    """
    if count < 0:
        raise InvalidParams("ACS count must be >= 0")
    if count > ny:
        raise BudgetExceedsGrid(f"ACS count {count} exceeds grid of {ny} lines")
    start = ny // 2 - count // 2
    return tuple(range(start, start + count))


def make_acs(ny: int, F: int) -> SamplingMask:
    lines = acs_lines(ny, F)
    return SamplingMask(ny, lines, lines, f"acs(ny={ny},F={F})")


def _split_budget(ny: int, B: int, acs_fraction: float):
    if B > ny:
        raise BudgetExceedsGrid(f"budget {B} exceeds grid of {ny} lines")
    if B < 0:
        raise InvalidParams("budget must be >= 0")
    if not 0.0 <= acs_fraction <= 1.0:
        raise InvalidParams(f"acs_fraction must be in [0, 1], got {acs_fraction}")
    F = min(B, round_half_up(B * acs_fraction))
    acs = acs_lines(ny, F)
    taken = set(acs)
    free = [i for i in range(ny) if i not in taken]
    return F, acs, free


def make_equispaced(ny: int, B: int, acs_fraction: float = 1 / 3) -> SamplingMask:
    """Central ACS block plus ``B - F`` lines spread uniformly over the rest.

    Targets are evenly spaced positions in the ordered list of non-ACS lines,
    rounded to the nearest entry; a collision advances to the next free one.
    """
    F, acs, free = _split_budget(ny, B, acs_fraction)
    n_out = B - F
    chosen = []
    if n_out:
        used = set()
        for pos in np.linspace(0, len(free) - 1, n_out):
            k = round_half_up(float(pos))
            while k in used:
                k = (k + 1) % len(free)
            used.add(k)
            chosen.append(free[k])
    return SamplingMask(ny, acs + tuple(chosen), acs, f"equispaced(ny={ny},B={B})")


def vdrs_weights(ny: int, decay_p: float) -> np.ndarray:
    """Polynomial-decay density ``(1 - |i - c| / (ny/2))^p`` over all lines."""
    c = ny // 2
    base = 1.0 - np.abs(np.arange(ny) - c) / (ny / 2.0)
    return np.clip(base, 0.0, None) ** decay_p


def make_vdrs(ny: int, B: int, acs_fraction: float = 1 / 3, decay_p: float = 3.0, seed: int = 0) -> SamplingMask:
    """Central ACS block plus ``B - F`` lines drawn without replacement from the decay density."""
    if decay_p <= 0:
        raise InvalidParams("decay_p must be positive")
    F, acs, free = _split_budget(ny, B, acs_fraction)
    n_out = B - F
    chosen = ()
    if n_out:
        w = vdrs_weights(ny, decay_p)[free]
        # zero-weight edge lines stay drawable when the budget needs them
        w = np.maximum(w, 1e-12 * w.max()) if w.max() > 0 else np.ones_like(w)
        rng = np.random.default_rng(seed)
        chosen = tuple(int(v) for v in rng.choice(np.asarray(free), size=n_out, replace=False, p=w / w.sum()))
    return SamplingMask(ny, acs + chosen, acs, f"vdrs(ny={ny},B={B},p={decay_p},seed={seed})")
