"""Synthetic cine phantoms, coil maps and noisy multi-coil k-space.

The phantom is a sum of ellipse indicators (Shepp-Logan style) with
2x2 supersampled edges.  Ellipses with nonzero pulsation scale both axes
by ``1 + a sin(2 pi t / period + phase)``, which gives a beating
"ventricle".  Coordinates are normalized so the image spans roughly
``[-1, 1]`` on both axes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidSpec
from .operators import EncodingOperator
from .types import CineSeries, CoilSensitivities, MultiCoilKSpace, validate_pairing


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    axes: tuple
    intensity: float
    angle_deg: float = 0.0
    pulsation_amp: float = 0.0
    pulsation_phase: float = 0.0


@dataclass(frozen=True)
class PhantomSpec:
    nx: int = 64
    ny: int = 64
    nt: int = 8
    nc: int = 4
    ellipses: tuple = field(default_factory=lambda: DEFAULT_ELLIPSES)
    heart_rate_frames: float = 8.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("nx", "ny", "nt", "nc"):
            if int(getattr(self, name)) < 1:
                raise InvalidSpec(f"{name} must be >= 1")
        if self.heart_rate_frames <= 0:
            raise InvalidSpec("heart_rate_frames must be positive")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be >= 0")
        ells = tuple(e if isinstance(e, Ellipse) else Ellipse(**e) for e in self.ellipses)
        for e in ells:
            if min(e.axes) <= 0:
                raise InvalidSpec(f"ellipse axes must be positive: {e.axes}")
            if abs(e.pulsation_amp) >= 1:
                raise InvalidSpec("pulsation amplitude must keep axes positive (|amp| < 1)")
            if e.intensity < 0:
                raise InvalidSpec("ellipse intensities must be >= 0")
        object.__setattr__(self, "ellipses", ells)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ellipses"] = [asdict(e) for e in self.ellipses]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "PhantomSpec":
        doc = dict(doc)
        if "ellipses" in doc:
            doc["ellipses"] = tuple(
                Ellipse(**{**e, "center": tuple(e["center"]), "axes": tuple(e["axes"])}) for e in doc["ellipses"]
            )
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# body, right ventricle, myocardium, LV blood pool, spine
DEFAULT_ELLIPSES = (
    Ellipse((0.0, 0.0), (0.85, 0.70), 0.25),
    Ellipse((-0.28, -0.05), (0.22, 0.18), 0.35, 20.0, 0.12, 0.6),
    Ellipse((0.12, -0.05), (0.32, 0.30), 0.30, 0.0, 0.08, 0.0),
    Ellipse((0.12, -0.05), (0.20, 0.18), 0.45, 0.0, 0.22, 0.0),
    Ellipse((0.0, 0.55), (0.10, 0.08), 0.40),
)


def _grid(n: int, offset: float) -> np.ndarray:
    return (np.arange(n) - (n - 1) / 2.0 + offset) / (n / 2.0)


def _frame(spec: PhantomSpec, t: float) -> np.ndarray:
    img = np.zeros((spec.nx, spec.ny))
    for ox in (-0.25, 0.25):
        for oy in (-0.25, 0.25):
            u = _grid(spec.nx, ox)[:, None]
            v = _grid(spec.ny, oy)[None, :]
            for e in spec.ellipses:
                scale = 1.0 + e.pulsation_amp * np.sin(2 * np.pi * t / spec.heart_rate_frames + e.pulsation_phase)
                ax, ay = e.axes[0] * scale, e.axes[1] * scale
                th = np.deg2rad(e.angle_deg)
                du, dv = u - e.center[0], v - e.center[1]
                ru = du * np.cos(th) + dv * np.sin(th)
                rv = -du * np.sin(th) + dv * np.cos(th)
                img += 0.25 * e.intensity * ((ru / ax) ** 2 + (rv / ay) ** 2 <= 1.0)
    return img


def gen_cine_phantom(spec: PhantomSpec, times: Optional[Sequence[float]] = None) -> CineSeries:
    """Evaluate the phantom at frames ``0 .. nt-1`` (or at arbitrary ``times``)."""
    times = range(spec.nt) if times is None else times
    frames = [_frame(spec, float(t)) for t in times]
    return CineSeries(np.stack(frames, axis=2).astype(np.complex128))


def gen_sensitivities(nx: int, ny: int, nc: int, seed: int = 0, normalize: bool = True) -> CoilSensitivities:
    """Smooth Gaussian-lobe coil profiles placed around the border, with mild phase ramps."""
    if nc < 1:
        raise InvalidSpec("nc must be >= 1")
    rng = np.random.default_rng(seed)
    u = _grid(nx, 0.0)[:, None]
    v = _grid(ny, 0.0)[None, :]
    offset = rng.uniform(0, 2 * np.pi / nc)
    maps = np.empty((nx, ny, nc), dtype=np.complex128)
    for c in range(nc):
        theta = offset + 2 * np.pi * c / nc
        cx, cy = 1.1 * np.cos(theta), 1.1 * np.sin(theta)
        width = rng.uniform(0.7, 0.9)
        mag = np.exp(-((u - cx) ** 2 + (v - cy) ** 2) / (2 * width**2))
        kx, ky = rng.uniform(-0.5, 0.5, size=2)
        phase = rng.uniform(0, 2 * np.pi) + np.pi * (kx * u + ky * v)
        maps[:, :, c] = mag * np.exp(1j * phase)
    if normalize:
        maps /= np.sqrt(np.sum(np.abs(maps) ** 2, axis=-1, keepdims=True))
    return CoilSensitivities(maps, normalized=normalize)


def simulate_kspace(x: CineSeries, s: CoilSensitivities, noise_sigma: float = 0.0, seed: int = 0) -> MultiCoilKSpace:
    """Fully sampled k-space plus i.i.d. complex Gaussian noise (``noise_sigma`` per component)."""
    validate_pairing(x=x, s=s)
    k = EncodingOperator(s.data, np.ones(x.ny, dtype=bool)).forward(x.data)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        k = k + noise_sigma * (rng.standard_normal(k.shape) + 1j * rng.standard_normal(k.shape))
    return MultiCoilKSpace(k)


def random_slice_spec(base: PhantomSpec, seed: int, jitter: float = 0.15) -> PhantomSpec:
    """Perturb the anatomy of ``base`` to make one member of a slice family.

    Centers shift, axes rescale and intensities vary by up to ``jitter``;
    the cardiac phase offset of pulsating ellipses is randomized.
    """
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-jitter, jitter, size=2) * 0.5
    ells = []
    for e in base.ellipses:
        center = tuple(float(c + s + rng.uniform(-jitter, jitter) * 0.2) for c, s in zip(e.center, shift))
        axes = tuple(float(a * (1 + rng.uniform(-jitter, jitter))) for a in e.axes)
        phase = e.pulsation_phase + (rng.uniform(0, 2 * np.pi) if e.pulsation_amp else 0.0)
        ells.append(replace(e, center=center, axes=axes,
                            intensity=float(e.intensity * (1 + rng.uniform(-jitter, jitter))),
                            angle_deg=float(e.angle_deg + rng.uniform(-30, 30) * jitter),
                            pulsation_phase=float(phase)))
    return replace(base, ellipses=tuple(ells), seed=int(seed))


def simulate_slice(spec: PhantomSpec):
    """``(cine, sens, kspace)`` for one spec; coil maps and noise derive from ``spec.seed``."""
    x = gen_cine_phantom(spec)
    s = gen_sensitivities(spec.nx, spec.ny, spec.nc, seed=spec.seed)
    y = simulate_kspace(x, s, spec.noise_sigma, seed=spec.seed + 1)
    return x, s, y
