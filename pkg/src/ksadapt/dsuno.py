"""Scan-adaptive mask selection by nearest-neighbor search on low-frequency frames.

A dictionary stores, for every optimized training slice, the low-frequency
magnitude reconstruction of each frame together with the slice's mask.  A
test slice is matched by comparing the low-frequency reconstruction of its
first frame to every three-frame temporal neighborhood of every entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDictionary,
    IndexOutOfNeighborhoodRange,
    TooFewFrames,
    ZeroNormTestFrame,
)
from .io import read_container, write_container
from .masks.baseline import acs_lines
from .operators import ifft2c
from .types import CineSeries, MultiCoilKSpace, SamplingMask

INDEX_FILE = "index.json"


def lowfreq_recon(kspace: np.ndarray, F_acs: int) -> np.ndarray:
    """RSS magnitude of the central ``F_acs`` lines, per frame.

    ``kspace`` is ``(nx, ny, nt, nc)`` (or ``(nx, ny, nc)`` for one frame);
    returns ``(nx, ny, nt)`` (resp. ``(nx, ny)``).
    """
    k = np.asarray(kspace)
    single = k.ndim == 3
    if single:
        k = k[:, :, None, :]
    ny = k.shape[1]
    if F_acs > ny:
        raise DimensionMismatch("ny", f">= {F_acs}", ny)
    keep = np.zeros(ny, dtype=bool)
    keep[list(acs_lines(ny, F_acs))] = True
    coil = ifft2c(k * keep[None, :, None, None])
    out = np.sqrt(np.sum(np.abs(coil) ** 2, axis=-1))
    return out[:, :, 0] if single else out


def lowfreq_frame(y_frame, F_acs: int) -> np.ndarray:
    """Low-frequency magnitude image of one multi-coil frame.

    Accepts a :class:`MultiCoilKSpace` (frame 0 is used) or an ``(nx, ny, nc)``
    array.
    """
    if isinstance(y_frame, MultiCoilKSpace):
        return lowfreq_recon(y_frame.data[:, :, 0, :], F_acs)
    return lowfreq_recon(np.asarray(y_frame), F_acs)


@dataclass(frozen=True, eq=False)
class DictionaryEntry:
    slice_id: str
    lowfreq_frames: np.ndarray  # (nx, ny, nt), real
    mask: SamplingMask
    accel: float

    @property
    def nt(self) -> int:
        return self.lowfreq_frames.shape[2]


@dataclass(frozen=True, eq=False)
class MaskDictionary:
    entries: tuple
    F_acs: int

    def __len__(self):
        return len(self.entries)

    def save(self, directory) -> None:
        """Write ``index.json`` plus one KSD1 frame stack per entry."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = {"F_acs": self.F_acs, "entries": []}
        for i, e in enumerate(self.entries):
            fname = f"frames_{i:04d}.ksd"
            write_container(CineSeries(e.lowfreq_frames), d / fname)
            index["entries"].append(
                {"slice_id": e.slice_id, "frames": fname, "accel": e.accel, "mask": e.mask.to_dict()}
            )
        (d / INDEX_FILE).write_text(json.dumps(index, indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "MaskDictionary":
        d = Path(directory)
        index = json.loads((d / INDEX_FILE).read_text())
        entries = []
        for rec in index["entries"]:
            frames = read_container(d / rec["frames"]).data.real.copy()
            entries.append(DictionaryEntry(rec["slice_id"], frames, SamplingMask.from_dict(rec["mask"]), rec["accel"]))
        return cls(tuple(entries), int(index["F_acs"]))


def build_dictionary(training: Sequence, F_acs: int) -> MaskDictionary:
    """Build the lookup table from ``(y_full, mask)`` or ``(slice_id, y_full, mask)`` items.

    Slice ids default to ``slice_000``, ``slice_001``, ... in input order.
    """
    entries = []
    shape = None
    for i, item in enumerate(training):
        if len(item) == 3:
            slice_id, y_full, mask = item
        else:
            (y_full, mask), slice_id = item, f"slice_{i:03d}"
        if y_full.nt < 3:
            raise TooFewFrames(f"slice {slice_id!r} has {y_full.nt} frames; need >= 3")
        if mask.ny != y_full.ny:
            raise DimensionMismatch("ny", y_full.ny, mask.ny)
        if shape is None:
            shape = (y_full.nx, y_full.ny)
        elif (y_full.nx, y_full.ny) != shape:
            raise DimensionMismatch("nx" if y_full.nx != shape[0] else "ny", shape, (y_full.nx, y_full.ny))
        frames = lowfreq_recon(y_full.data, F_acs)
        entries.append(DictionaryEntry(str(slice_id), frames, mask, mask.acceleration))
    return MaskDictionary(tuple(entries), int(F_acs))


def nrmsd(x_test: np.ndarray, entry, i: int) -> float:
    """Mean normalized distance of ``x_test`` to frames ``i-1, i, i+1`` (0-based ``i``).

    ``entry`` is a :class:`DictionaryEntry` or an ``(nx, ny, nt)`` stack; ``i``
    must be in ``[1, nt - 2]``.
    """
    frames = entry.lowfreq_frames if isinstance(entry, DictionaryEntry) else np.asarray(entry)
    nt = frames.shape[2]
    if not 1 <= i <= nt - 2:
        raise IndexOutOfNeighborhoodRange(f"frame index {i} outside [1, {nt - 2}]")
    x_test = np.asarray(x_test)
    if x_test.shape != frames.shape[:2]:
        raise DimensionMismatch("nx" if x_test.shape[0] != frames.shape[0] else "ny", frames.shape[:2], x_test.shape)
    ref = np.linalg.norm(x_test)
    if ref == 0:
        raise ZeroNormTestFrame("test frame has zero norm")
    total = 0.0
    for j in (-1, 0, 1):
        total += np.linalg.norm(x_test - frames[:, :, i + j])
    return float(total / (3.0 * ref))


def best_neighborhood(x_test: np.ndarray, entry: DictionaryEntry) -> Tuple[float, int]:
    """Smallest ``nrmsd`` over all valid centers and the center index attaining it."""
    best = (np.inf, -1)
    for i in range(1, entry.nt - 1):
        d = nrmsd(x_test, entry, i)
        if d < best[0]:
            best = (d, i)
    return best


def select_mask_from_image(x_test: np.ndarray, dictionary: MaskDictionary):
    if not len(dictionary):
        raise EmptyDictionary("mask dictionary is empty")
    if np.linalg.norm(x_test) == 0:
        raise ZeroNormTestFrame("test frame has zero norm")
    scored = []
    for e in dictionary.entries:
        d, _ = best_neighborhood(x_test, e)
        scored.append((d, e.slice_id, e))
    d, sid, e = min(scored, key=lambda r: (r[0], r[1]))
    return e.mask, sid, d


def select_mask(y_test_first_frame, dictionary: MaskDictionary, F_acs: Optional[int] = None):
    """Return ``(mask, neighbor_slice_id, best_d)`` for a test slice.

    Ties on distance go to the lexicographically smallest slice id.
    """
    if not len(dictionary):
        raise EmptyDictionary("mask dictionary is empty")
    F = dictionary.F_acs if F_acs is None else F_acs
    if F != dictionary.F_acs:
        raise ValueError(f"F_acs={F} differs from the dictionary's {dictionary.F_acs}")
    x_test = lowfreq_frame(y_test_first_frame, F)
    return select_mask_from_image(x_test, dictionary)
