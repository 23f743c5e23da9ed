"""Domain value types: cine series, multi-coil k-space, coil maps, masks, parameters.

Array layouts are fixed throughout the package:

* ``CineSeries.data``        -- ``(nx, ny, nt)``
* ``MultiCoilKSpace.data``   -- ``(nx, ny, nt, nc)``
* ``CoilSensitivities.data`` -- ``(nx, ny, nc)``

``y`` is the phase-encode axis; masks select lines along it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import BudgetExceedsGrid, DimensionMismatch, InvalidMask, InvalidParams, NonFiniteInput

SOS_TOL = 1e-6


def _frozen_complex(data, ndim: int, name: str) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype != np.complex128:
        arr = arr.astype(np.complex128)
    if arr.ndim != ndim:
        raise DimensionMismatch("ndim", ndim, arr.ndim)
    if min(arr.shape) < 1:
        raise ValueError(f"{name} extents must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    # read-only view so the caller's array keeps its own flags
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class CineSeries:
    """Complex dynamic image series indexed ``(x, y, t)``."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_complex(self.data, 3, "CineSeries"))

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nt(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class MultiCoilKSpace:
    """Multi-coil k-space indexed ``(x, y, t, c)``; unacquired entries are zero."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_complex(self.data, 4, "MultiCoilKSpace"))

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nt(self) -> int:
        return self.data.shape[2]

    @property
    def nc(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape

    def frame(self, t: int) -> "MultiCoilKSpace":
        return MultiCoilKSpace(self.data[:, :, t : t + 1, :])


@dataclass(frozen=True, eq=False)
class CoilSensitivities:
    """Complex coil maps indexed ``(x, y, c)``.

    When ``normalized`` is set, ``sum_c |S_c|^2 == 1`` must hold (to ``1e-6``)
    at every pixel where any coil is nonzero.
    """

    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_complex(self.data, 3, "CoilSensitivities"))
        if self.normalized and not is_sos_normalized(self.data):
            raise InvalidParams("sensitivities flagged normalized but sum-of-squares deviates from 1")

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nc(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def ones(cls, nx: int, ny: int) -> "CoilSensitivities":
        return cls(np.ones((nx, ny, 1), dtype=np.complex128), normalized=True)


def is_sos_normalized(maps: np.ndarray, tol: float = SOS_TOL) -> bool:
    sos = np.sum(np.abs(maps) ** 2, axis=-1)
    support = np.any(maps != 0, axis=-1)
    return bool(np.all(np.abs(sos[support] - 1.0) <= tol))


@dataclass(frozen=True)
class SamplingMask:
    """Set of acquired phase-encode lines, shared by every frame and readout.

    ``acs`` is the fixed low-frequency block and must be a subset of ``lines``.
    """

    ny: int
    lines: tuple
    acs: tuple = ()
    provenance: str = ""

    def __post_init__(self):
        ny = int(self.ny)
        if ny < 1:
            raise InvalidMask(f"ny must be >= 1, got {ny}")
        lines = [int(v) for v in self.lines]
        acs = [int(v) for v in self.acs]
        if len(lines) > ny:
            raise BudgetExceedsGrid(f"{len(lines)} lines exceed grid of {ny}")
        for name, vals in (("lines", lines), ("acs", acs)):
            if len(set(vals)) != len(vals):
                raise InvalidMask(f"duplicate entries in {name}")
            bad = [v for v in vals if v < 0 or v >= ny]
            if bad:
                raise InvalidMask(f"{name} out of range [0, {ny}): {bad}")
        if not set(acs) <= set(lines):
            raise InvalidMask("acs must be a subset of lines")
        object.__setattr__(self, "ny", ny)
        object.__setattr__(self, "lines", tuple(sorted(lines)))
        object.__setattr__(self, "acs", tuple(sorted(acs)))

    @property
    def budget(self) -> int:
        return len(self.lines)

    @property
    def movable(self) -> tuple:
        acs = set(self.acs)
        return tuple(v for v in self.lines if v not in acs)

    @property
    def free(self) -> tuple:
        taken = set(self.lines)
        return tuple(v for v in range(self.ny) if v not in taken)

    @property
    def acceleration(self) -> float:
        return self.ny / self.budget if self.budget else math.inf

    @classmethod
    def full(cls, ny: int, provenance: str = "full") -> "SamplingMask":
        return cls(ny, tuple(range(ny)), (), provenance)

    def as_array(self) -> np.ndarray:
        """Boolean vector of length ``ny``."""
        out = np.zeros(self.ny, dtype=bool)
        out[list(self.lines)] = True
        return out

    def relocate(self, remove: Iterable[int], add: Iterable[int], provenance: Optional[str] = None) -> "SamplingMask":
        remove = set(int(v) for v in remove)
        add = [int(v) for v in add]
        if remove & set(self.acs):
            raise InvalidMask("cannot relocate ACS lines")
        if not remove <= set(self.lines):
            raise InvalidMask("relocated lines are not currently sampled")
        if set(add) & (set(self.lines) - remove):
            raise InvalidMask("target lines already sampled")
        lines = [v for v in self.lines if v not in remove] + add
        return SamplingMask(self.ny, tuple(lines), self.acs, self.provenance if provenance is None else provenance)

    def with_provenance(self, provenance: str) -> "SamplingMask":
        return SamplingMask(self.ny, self.lines, self.acs, provenance)

    # -- JSON document ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "ny": self.ny,
            "budget": self.budget,
            "lines": list(self.lines),
            "acs": list(self.acs),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SamplingMask":
        mask = cls(doc["ny"], tuple(doc["lines"]), tuple(doc.get("acs", ())), doc.get("provenance", ""))
        if "budget" in doc and int(doc["budget"]) != mask.budget:
            raise InvalidMask(f"declared budget {doc['budget']} != {mask.budget} lines")
        return mask

    def save(self, path, **extra) -> None:
        doc = self.to_dict()
        doc.update(extra)
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")

    @classmethod
    def load(cls, path) -> "SamplingMask":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ReconParams:
    lam: float = 1e-2
    gamma: float = 0.5
    K: int = 6
    cg_tol: float = 1e-5
    cg_max_iter: int = 50

    def __post_init__(self):
        if not self.lam >= 0:
            raise InvalidParams(f"lambda must be >= 0, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParams(f"gamma must lie in [0, 1], got {self.gamma}")
        if int(self.K) < 1:
            raise InvalidParams(f"K must be >= 1, got {self.K}")
        if not self.cg_tol > 0:
            raise InvalidParams(f"cg_tol must be > 0, got {self.cg_tol}")
        if int(self.cg_max_iter) < 1:
            raise InvalidParams(f"cg_max_iter must be >= 1, got {self.cg_max_iter}")


@dataclass(frozen=True)
class RbIcdParams:
    """Inputs of the RB-ICD optimizer.

    ``exhaustive`` replaces random candidate draws by the full, ordered
    enumeration of every relocation target set (used for small brute-force
    checks); ``n_cand`` is ignored in that mode.
    """

    budget: int
    acs_count: int
    subset_size: int
    n_iter: int
    n_cand: int = 20
    seed: int = 0
    exhaustive: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise InvalidParams("budget must be positive")
        if not 0 <= self.acs_count <= self.budget:
            raise InvalidParams("acs_count must satisfy 0 <= F <= B")
        movable = self.budget - self.acs_count
        if self.subset_size < 1 or (movable > 0 and self.subset_size > movable):
            raise InvalidParams(f"subset_size must be in [1, {movable}], got {self.subset_size}")
        if self.n_iter < 1:
            raise InvalidParams("n_iter must be positive")
        if self.n_cand < 1:
            raise InvalidParams("n_cand must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParams("seed must be a 64-bit unsigned integer")

    @property
    def movable_count(self) -> int:
        return self.budget - self.acs_count

    def to_dict(self) -> dict:
        return asdict(self)


def validate_pairing(x=None, y=None, s=None, m=None) -> None:
    """Check that series, k-space, coil maps and mask agree on every shared axis.

    Any argument may be omitted. Raises :class:`DimensionMismatch` naming the
    first inconsistent axis, checked in the order nx, ny, nt, nc.
    """
    dims = {"nx": [], "ny": [], "nt": [], "nc": []}
    if x is not None:
        dims["nx"].append(x.nx)
        dims["ny"].append(x.ny)
        dims["nt"].append(x.nt)
    if y is not None:
        dims["nx"].append(y.nx)
        dims["ny"].append(y.ny)
        dims["nt"].append(y.nt)
        dims["nc"].append(y.nc)
    if s is not None:
        dims["nx"].append(s.nx)
        dims["ny"].append(s.ny)
        dims["nc"].append(s.nc)
    if m is not None:
        dims["ny"].append(m.ny)
    for axis, vals in dims.items():
        if vals and any(v != vals[0] for v in vals):
            bad = next(v for v in vals if v != vals[0])
            raise DimensionMismatch(axis, vals[0], bad)
