"""Randomized batched iterative coordinate descent (RB-ICD) over 1-D Cartesian masks.

Each pass splits the currently sampled non-ACS lines into random disjoint
subsets of size ``s``.  For every subset, ``n_cand`` candidate masks are made
by relocating the whole subset onto randomly chosen free lines; the best
candidate is kept only if its loss is strictly below the current one.

Randomness comes from a single ``numpy.random.Generator`` on the PCG64 bit
generator seeded with ``RbIcdParams.seed``.  Draw order is fixed: at the
start of every pass one permutation of the movable lines, then for every
subset ``n_cand`` target draws in candidate order.  Evaluation can be spread
over threads without changing the trace.
"""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..errors import InvalidParams, KsadaptError, RbIcdAborted, UnknownPreset
from ..metrics import nmse
from ..types import CineSeries, CoilSensitivities, MultiCoilKSpace, RbIcdParams, SamplingMask, validate_pairing
from .baseline import acs_lines

logger = logging.getLogger(__name__)

LOSSES = ("nmse", "l2")
TRACE_FIELDS = ("pass", "subset", "candidate", "loss", "accepted")

# presets for a 240-line phase-encode grid: B, F, s, N_iter
_TABLE1 = {
    4: (60, 20, 10, 3),
    8: (30, 10, 5, 6),
    12: (20, 6, 3, 9),
}


def table1_preset(accel, n_cand: int = 20, seed: int = 0) -> RbIcdParams:
    """Published RB-ICD settings for 4x, 8x and 12x (``accel`` may be ``"8x"``)."""
    key = accel
    if isinstance(accel, str):
        key = accel.lower().rstrip("x")
    try:
        key = int(key)
        B, F, s, n_iter = _TABLE1[key]
    except (KeyError, ValueError):
        raise UnknownPreset(f"no preset for acceleration {accel!r}; valid: 4, 8, 12") from None
    return RbIcdParams(budget=B, acs_count=F, subset_size=s, n_iter=n_iter, n_cand=n_cand, seed=seed)


def undersample(y_full: MultiCoilKSpace, m: SamplingMask) -> MultiCoilKSpace:
    return MultiCoilKSpace(y_full.data * m.as_array()[None, :, None, None])


def image_loss(x_gt, x_hat, loss_name: str = "nmse") -> float:
    if loss_name == "nmse":
        return nmse(x_gt, x_hat)
    if loss_name == "l2":
        a = np.abs(getattr(x_gt, "data", x_gt))
        b = np.abs(getattr(x_hat, "data", x_hat))
        return float(np.sum((a - b) ** 2))
    raise InvalidParams(f"unknown loss {loss_name!r}; valid: {LOSSES}")


def evaluate_mask(
    m: SamplingMask,
    y_full: MultiCoilKSpace,
    x_gt: CineSeries,
    recon: Callable,
    loss_name: str = "nmse",
    sens: Optional[CoilSensitivities] = None,
) -> float:
    """Undersample ``y_full`` with ``m``, reconstruct, and score magnitudes against ``x_gt``."""
    if loss_name not in LOSSES:
        raise InvalidParams(f"unknown loss {loss_name!r}; valid: {LOSSES}")
    validate_pairing(x=x_gt, y=y_full, s=sens, m=m)
    x_hat = recon(undersample(y_full, m), sens, m)
    return image_loss(x_gt, x_hat, loss_name)


@dataclass(frozen=True)
class MaskEvalRecord:
    """One loss evaluation in an RB-ICD run.

    The first record of every trace is the initial mask with all indices set
    to -1.  ``accepted`` marks the candidate adopted at the end of its subset
    (and the initial record); ``current_loss`` is the running loss after the
    record has been processed.
    """

    mask: SamplingMask
    loss: float
    pass_index: int
    subset_index: int
    candidate_index: int
    accepted: bool
    current_loss: float


def _partition(values: np.ndarray, s: int, rng: np.random.Generator) -> List[np.ndarray]:
    perm = rng.permutation(values)
    return [perm[i : i + s] for i in range(0, len(perm), s)]


def _candidate_targets(avail: np.ndarray, k: int, p: RbIcdParams, rng: np.random.Generator):
    if p.exhaustive:
        return [np.asarray(c) for c in itertools.combinations(avail.tolist(), k)]
    return [rng.choice(avail, size=k, replace=False) for _ in range(p.n_cand)]


def rb_icd_optimize(
    y_full: MultiCoilKSpace,
    x_gt: CineSeries,
    m_init: SamplingMask,
    recon: Callable,
    loss_name: str = "nmse",
    p: Optional[RbIcdParams] = None,
    sens: Optional[CoilSensitivities] = None,
    threads: int = 1,
):
    """Optimize a mask by RB-ICD; returns ``(mask, trace)``.

    ``recon(y, sens, m)`` is any reconstruction callable, typically a
    :class:`~ksadapt.recon.Reconstructor`.  The ACS block is the
    ``p.acs_count`` central lines and never moves; the budget stays at
    ``p.budget`` throughout.  Exactly ``p.n_iter`` passes run.  When ``s``
    does not divide the movable count the last subset of a pass is smaller.

    A failing reconstruction raises :class:`RbIcdAborted` carrying the
    partial trace.
    """
    if p is None:
        raise InvalidParams("RB-ICD parameters are required")
    if loss_name not in LOSSES:
        raise InvalidParams(f"unknown loss {loss_name!r}; valid: {LOSSES}")
    validate_pairing(x=x_gt, y=y_full, s=sens, m=m_init)
    ny = m_init.ny
    if m_init.budget != p.budget:
        raise InvalidParams(f"initial mask has {m_init.budget} lines, budget is {p.budget}")
    acs = acs_lines(ny, p.acs_count)
    if not set(acs) <= set(m_init.lines):
        raise InvalidParams("initial mask does not contain the ACS block")
    if p.movable_count and ny - p.budget < p.subset_size:
        raise InvalidParams(f"only {ny - p.budget} free lines for subsets of size {p.subset_size}")

    m = SamplingMask(ny, m_init.lines, acs, m_init.provenance)
    rng = np.random.default_rng(np.random.PCG64(int(p.seed)))
    trace: List[MaskEvalRecord] = []

    def loss_of(mask):
        return evaluate_mask(mask, y_full, x_gt, recon, loss_name, sens)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        try:
            curr = loss_of(m)
        except KsadaptError as exc:
            raise RbIcdAborted(f"initial evaluation failed: {exc}", trace) from exc
        trace.append(MaskEvalRecord(m, curr, -1, -1, -1, True, curr))
        if not p.movable_count:
            return m, trace

        for j in range(p.n_iter):
            movable = np.asarray(m.movable, dtype=np.int64)
            subsets = _partition(movable, p.subset_size, rng)
            for t, sub in enumerate(subsets):
                if not set(sub.tolist()) <= set(m.movable):
                    raise AssertionError("subset lines moved earlier in the same pass")
                avail = np.asarray(m.free, dtype=np.int64)
                cands = [m.relocate(sub, add) for add in _candidate_targets(avail, len(sub), p, rng)]
                try:
                    losses = list(pool.map(loss_of, cands)) if pool else [loss_of(c) for c in cands]
                except KsadaptError as exc:
                    raise RbIcdAborted(f"evaluation failed in pass {j}, subset {t}: {exc}", trace) from exc
                best_i, best_loss = -1, curr
                for i, loss in enumerate(losses):
                    if loss < best_loss:
                        best_i, best_loss = i, loss
                for i, (cand, loss) in enumerate(zip(cands, losses)):
                    accepted = i == best_i
                    # incumbent loss once this record is processed
                    running = best_loss if 0 <= best_i <= i else curr
                    trace.append(MaskEvalRecord(cand, loss, j, t, i, accepted, running))
                if best_i >= 0:
                    m, curr = cands[best_i], best_loss
            logger.info("RB-ICD pass %d/%d: loss %.6g", j + 1, p.n_iter, curr)
    finally:
        if pool is not None:
            pool.shutdown()
    return m.with_provenance(f"rb_icd(B={p.budget},F={p.acs_count},s={p.subset_size},"
                             f"n_iter={p.n_iter},n_cand={p.n_cand},seed={p.seed})"), trace


def write_trace_csv(trace: Sequence[MaskEvalRecord], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in trace:
            w.writerow([r.pass_index, r.subset_index, r.candidate_index, repr(r.loss), int(r.accepted)])


# ---------------------------------------------------------------------------
# Alternating optimization


@dataclass(frozen=True)
class TrainingSlice:
    slice_id: str
    y_full: MultiCoilKSpace
    x_gt: CineSeries
    m_init: SamplingMask
    sens: Optional[CoilSensitivities] = None


def derive_seed(base: int, *keys: int) -> int:
    """Independent 64-bit seed for a (round, slice, ...) key."""
    ss = np.random.SeedSequence([int(base), *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])


def alternate_optimize(
    training_set: Sequence[TrainingSlice],
    rounds: int,
    recon_factory: Callable,
    p: RbIcdParams,
    loss_name: str = "nmse",
    threads: int = 1,
) -> List[SamplingMask]:
    """Alternate mask optimization with reconstructor updates.

    Round ``r`` (0-based) optimizes every slice, starting from its current
    mask, with ``recon_factory(r, current_masks)``.  Slice ``i`` in round
    ``r`` uses seed ``derive_seed(p.seed, r, i)``.
    """
    if rounds < 1:
        raise InvalidParams("rounds must be >= 1")
    masks = [ts.m_init for ts in training_set]
    for r in range(rounds):
        recon = recon_factory(r, list(masks))
        new = []
        for i, ts in enumerate(training_set):
            pr = replace(p, seed=derive_seed(p.seed, r, i))
            m, _ = rb_icd_optimize(ts.y_full, ts.x_gt, masks[i], recon, loss_name, pr, ts.sens, threads)
            new.append(m)
        masks = new
    return masks
