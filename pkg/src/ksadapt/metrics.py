"""Image-quality metrics on magnitude cine series, pooled over all frames."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, RoiOutOfBounds, ZeroNormReference

CSV_FIELDS = ("slice_id", "mask_name", "recon_name", "accel", "nmse", "psnr_db", "ssim")


def _mag_pair(x_gt, x_hat):
    a = np.abs(getattr(x_gt, "data", x_gt)).astype(np.float64)
    b = np.abs(getattr(x_hat, "data", x_hat)).astype(np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch("shape", a.shape, b.shape)
    return a, b


def nmse(x_gt, x_hat) -> float:
    """``||x - x_hat||^2 / ||x||^2`` on magnitudes."""
    a, b = _mag_pair(x_gt, x_hat)
    ref = float(np.sum(a * a))
    if ref == 0:
        raise ZeroNormReference("reference image has zero norm")
    return float(np.sum((a - b) ** 2)) / ref


def psnr(x_gt, x_hat) -> float:
    """``10 log10(max|x|^2 d / ||x - x_hat||^2)`` with ``d`` the pooled pixel count.

    Returns ``inf`` when the images are identical.
    """
    a, b = _mag_pair(x_gt, x_hat)
    err = float(np.sum((a - b) ** 2))
    if err == 0:
        return math.inf
    return 10.0 * math.log10(float(np.max(a)) ** 2 * a.size / err)


def ssim(x_gt, x_hat, c1: Optional[float] = None, c2: Optional[float] = None,
         data_range: Optional[float] = None, windowed: bool = False, win_size: int = 7) -> float:
    """Structural similarity from global means, variances and covariance.

    ``c1 = (0.01 L)^2`` and ``c2 = (0.03 L)^2`` by default, ``L`` being
    ``data_range`` or ``max|x_gt|``.  ``windowed=True`` switches to local
    ``win_size x win_size`` statistics per frame averaged over all windows,
    for comparison with common toolkits.
    """
    a, b = _mag_pair(x_gt, x_hat)
    L = float(np.max(a)) if data_range is None else float(data_range)
    c1 = (0.01 * L) ** 2 if c1 is None else c1
    c2 = (0.03 * L) ** 2 if c2 is None else c2
    if windowed:
        return _ssim_windowed(a, b, c1, c2, win_size)
    mu_a, mu_b = a.mean(), b.mean()
    va = np.mean((a - mu_a) ** 2)
    vb = np.mean((b - mu_b) ** 2)
    cov = np.mean((a - mu_a) * (b - mu_b))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (va + vb + c2)
    return float(num / den)


def _ssim_windowed(a, b, c1, c2, win):
    size = (win, win) + (1,) * (a.ndim - 2)
    f = lambda v: ndimage.uniform_filter(v, size=size, mode="reflect")
    mu_a, mu_b = f(a), f(b)
    va = f(a * a) - mu_a**2
    vb = f(b * b) - mu_b**2
    cov = f(a * b) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
    return float(smap.mean())


@dataclass(frozen=True)
class MetricReport:
    nmse: float
    psnr_db: float
    ssim: float
    pixels: int
    roi: Optional[tuple] = None

    def row(self, slice_id="", mask_name="", recon_name="", accel="") -> dict:
        return {
            "slice_id": slice_id,
            "mask_name": mask_name,
            "recon_name": recon_name,
            "accel": accel,
            "nmse": repr(self.nmse),
            "psnr_db": repr(self.psnr_db),
            "ssim": repr(self.ssim),
        }


def crop(a: np.ndarray, roi: Optional[Sequence[int]]) -> np.ndarray:
    """Crop ``(x0, x1, y0, y1)`` (half-open) over the spatial axes."""
    if roi is None:
        return a
    x0, x1, y0, y1 = (int(v) for v in roi)
    if not (0 <= x0 < x1 <= a.shape[0] and 0 <= y0 < y1 <= a.shape[1]):
        raise RoiOutOfBounds(f"roi {tuple(roi)} outside image of shape {a.shape[:2]}")
    return a[x0:x1, y0:y1]


def report(x_gt, x_hat, roi: Optional[Sequence[int]] = None) -> MetricReport:
    a, b = _mag_pair(x_gt, x_hat)
    a, b = crop(a, roi), crop(b, roi)
    return MetricReport(nmse(a, b), psnr(a, b), ssim(a, b), int(a.size), None if roi is None else tuple(roi))


def write_metrics_csv(path, rows) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
