"""Multi-coil Cartesian acquisition operator and the temporal Fourier transform.

All transforms are unitary (``norm="ortho"``).  The spatial spectrum is
centered: frequency zero sits at index ``n // 2`` on each axis.  The temporal
transform is not shifted, so the DC bin is ``f = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .types import (
    CineSeries,
    CoilSensitivities,
    MultiCoilKSpace,
    SamplingMask,
    _frozen_complex,
    validate_pairing,
)

SPATIAL_AXES = (0, 1)


def fft2c(a: np.ndarray) -> np.ndarray:
    """Centered unitary 2-D FFT over the leading two axes."""
    a = sfft.ifftshift(a, axes=SPATIAL_AXES)
    a = sfft.fft2(a, axes=SPATIAL_AXES, norm="ortho")
    return sfft.fftshift(a, axes=SPATIAL_AXES)


def ifft2c(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2c`."""
    a = sfft.ifftshift(a, axes=SPATIAL_AXES)
    a = sfft.ifft2(a, axes=SPATIAL_AXES, norm="ortho")
    return sfft.fftshift(a, axes=SPATIAL_AXES)


def _fftc_y(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    a = sfft.ifftshift(a, axes=1)
    a = (sfft.ifft if inverse else sfft.fft)(a, axis=1, norm="ortho")
    return sfft.fftshift(a, axes=1)


class EncodingOperator:
    """Array-level ``A = M F S`` for fixed coil maps and mask.

    Works on raw ``(nx, ny, nt)`` image arrays and ``(nx, ny, nt, nc)``
    k-space arrays, so iterative solvers avoid re-validating on every step.
    Coil sums run in fixed coil order.
    """

    def __init__(self, sens: np.ndarray, mask: np.ndarray):
        self.sens = np.asarray(sens, dtype=np.complex128)
        self.mask = np.asarray(mask, dtype=bool)
        self._sens_t = self.sens[:, :, None, :]
        self._mask_b = self.mask[None, :, None, None]

    def forward(self, x: np.ndarray) -> np.ndarray:
        k = fft2c(x[..., None] * self._sens_t)
        return k * self._mask_b

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        coil = ifft2c(y * self._mask_b)
        return np.sum(np.conj(self._sens_t) * coil, axis=-1)

    def normal(self, x: np.ndarray, lam: float = 0.0) -> np.ndarray:
        # readout is fully sampled, so the x-axis transform cancels in A^H A
        coil = _fftc_y(x[..., None] * self._sens_t) * self._mask_b
        out = np.sum(np.conj(self._sens_t) * _fftc_y(coil, inverse=True), axis=-1)
        if lam:
            out = out + lam * x
        return out


def encoding_operator(s: CoilSensitivities, m: SamplingMask) -> EncodingOperator:
    return EncodingOperator(s.data, m.as_array())


def forward_apply(x: CineSeries, s: CoilSensitivities, m: SamplingMask) -> MultiCoilKSpace:
    """Apply ``M F S_c`` to every frame and coil."""
    validate_pairing(x=x, s=s, m=m)
    return MultiCoilKSpace(encoding_operator(s, m).forward(x.data))


def adjoint_apply(y: MultiCoilKSpace, s: CoilSensitivities, m: SamplingMask) -> CineSeries:
    """Exact adjoint of :func:`forward_apply`: ``sum_c conj(S_c) F^H M y_c``."""
    validate_pairing(y=y, s=s, m=m)
    return CineSeries(encoding_operator(s, m).adjoint(y.data))


def normal_apply(x: CineSeries, s: CoilSensitivities, m: SamplingMask, lam: float = 0.0) -> CineSeries:
    """``(A^H A + lam I) x``."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    validate_pairing(x=x, s=s, m=m)
    return CineSeries(encoding_operator(s, m).normal(x.data, lam))


@dataclass(frozen=True, eq=False)
class XFSeries:
    """Temporal-frequency representation ``(x, y, f)`` of a cine series."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_complex(self.data, 3, "XFSeries"))

    @property
    def shape(self):
        return self.data.shape


def tfft(a: np.ndarray) -> np.ndarray:
    return sfft.fft(a, axis=2, norm="ortho")


def tifft(a: np.ndarray) -> np.ndarray:
    return sfft.ifft(a, axis=2, norm="ortho")


def temporal_fft(x: CineSeries) -> XFSeries:
    return XFSeries(tfft(x.data))


def temporal_ifft(xf: XFSeries) -> CineSeries:
    return CineSeries(tifft(xf.data))
