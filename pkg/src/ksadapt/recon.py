"""Reconstruction algorithms.

zero-filled adjoint / RSS, CG data-consistency solve, CG-SENSE, temporal
Fourier compressed sensing (ISTA) and the unrolled dual-domain scheme that
alternates a denoiser with a CG data-consistency step.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .errors import CGConvergenceWarning, InvalidParams, MaxIterReached, NonFiniteInput
from .operators import EncodingOperator, XFSeries, encoding_operator, ifft2c, tfft, tifft
from .types import (
    CineSeries,
    CoilSensitivities,
    MultiCoilKSpace,
    ReconParams,
    SamplingMask,
    validate_pairing,
)

logger = logging.getLogger(__name__)

RECON_METHODS = ("zero_filled", "sense_cg", "cs_xf", "unrolled")


# ---------------------------------------------------------------------------
# Denoisers


class Denoiser:
    """Deterministic map on ``(x, y, t)`` or ``(x, y, f)`` complex arrays."""

    name = "denoiser"

    @property
    def params(self) -> dict:
        return {}

    def apply(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        if isinstance(x, CineSeries):
            return CineSeries(self.apply(x.data))
        if isinstance(x, XFSeries):
            return XFSeries(self.apply(x.data))
        return self.apply(np.asarray(x))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({args})"


class Identity(Denoiser):
    name = "identity"

    def apply(self, a):
        return a


class Smoothing(Denoiser):
    """Separable spatiotemporal smoothing of real and imaginary parts.

    ``width`` is a Gaussian sigma (``kind="gaussian"``) or a box size
    (``kind="box"``), per axis ``(x, y, t)`` or one value for all three.
    """

    name = "smooth"

    def __init__(self, width=1.0, kind: str = "gaussian"):
        if kind not in ("gaussian", "box"):
            raise InvalidParams(f"unknown smoothing kind {kind!r}")
        self.width = tuple(np.broadcast_to(np.asarray(width, dtype=float), (3,)).tolist())
        self.kind = kind

    @property
    def params(self):
        return {"width": list(self.width), "kind": self.kind}

    def _filt(self, a):
        if self.kind == "gaussian":
            return ndimage.gaussian_filter(a, sigma=self.width, mode="wrap")
        size = [max(1, int(round(w))) for w in self.width]
        return ndimage.uniform_filter(a, size=size, mode="wrap")

    def apply(self, a):
        return self._filt(a.real) + 1j * self._filt(a.imag)


class SoftThreshold(Denoiser):
    """Complex soft-thresholding ``a * max(|a| - tau, 0) / |a|``.

    With ``relative=True`` the threshold is ``threshold * max|a|``.
    """

    name = "soft_threshold"

    def __init__(self, threshold: float = 0.0, relative: bool = True):
        if threshold < 0:
            raise InvalidParams("threshold must be >= 0")
        self.threshold = float(threshold)
        self.relative = bool(relative)

    @property
    def params(self):
        return {"threshold": self.threshold, "relative": self.relative}

    def apply(self, a):
        tau = self.threshold * np.max(np.abs(a)) if self.relative else self.threshold
        return soft_threshold(a, tau)


def soft_threshold(a: np.ndarray, tau: float) -> np.ndarray:
    mag = np.abs(a)
    scale = np.maximum(mag - tau, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(mag > 0, a * (scale / np.where(mag > 0, mag, 1.0)), 0.0)
    return out.astype(np.complex128)


DENOISERS = {"identity": Identity, "smooth": Smoothing, "soft_threshold": SoftThreshold}


def make_denoiser(spec) -> Denoiser:
    """Build a denoiser from a name or ``{"name": ..., **params}``."""
    if isinstance(spec, Denoiser):
        return spec
    if spec is None:
        return Identity()
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    if name not in DENOISERS:
        raise InvalidParams(f"unknown denoiser {name!r}; valid: {sorted(DENOISERS)}")
    return DENOISERS[name](**spec)


# ---------------------------------------------------------------------------
# Zero-filled


def rss(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=axis))


def zero_filled_recon(y: MultiCoilKSpace, s: Optional[CoilSensitivities], m: SamplingMask) -> CineSeries:
    """Adjoint reconstruction, or root-sum-of-squares when no coil maps are given."""
    validate_pairing(y=y, s=s, m=m)
    if s is not None:
        return CineSeries(encoding_operator(s, m).adjoint(y.data))
    coil = ifft2c(y.data * m.as_array()[None, :, None, None])
    return CineSeries(rss(coil).astype(np.complex128))


# ---------------------------------------------------------------------------
# Conjugate gradient


@dataclass
class CGResult:
    x: np.ndarray
    residual: float
    n_iter: int
    converged: bool


def _vdot_re(a, b) -> float:
    return float(np.vdot(a, b).real)


def conjugate_gradient(apply, b: np.ndarray, x0: np.ndarray, tol: float, max_iter: int) -> CGResult:
    """CG for a Hermitian positive (semi)definite operator.

    Stops when the *recomputed* relative residual ``||b - apply(x)|| / ||b||``
    is at most ``tol``.  Returns the lowest-residual iterate otherwise.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CGResult(np.zeros_like(b), 0.0, 0, True)
    x = np.array(x0, dtype=np.complex128, copy=True)
    r = b - apply(x)
    rel = np.linalg.norm(r) / bnorm
    best_x, best_rel = x.copy(), rel
    if rel <= tol:
        return CGResult(x, rel, 0, True)
    p = r.copy()
    rr = _vdot_re(r, r)
    for it in range(1, max_iter + 1):
        q = apply(p)
        pq = _vdot_re(p, q)
        if pq <= 0:
            # p in the null space: cannot make further progress
            break
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = _vdot_re(r, r)
        rel = np.sqrt(rr_new) / bnorm
        if rel <= tol:
            # guard against drift between recursive and true residual
            r = b - apply(x)
            rr_new = _vdot_re(r, r)
            rel = np.sqrt(rr_new) / bnorm
            if rel <= tol:
                return CGResult(x, rel, it, True)
            p = r.copy()
            rr = rr_new
            if rel < best_rel:
                best_x, best_rel = x.copy(), rel
            continue
        if rel < best_rel:
            best_x, best_rel = x.copy(), rel
        p = r + (rr_new / rr) * p
        rr = rr_new
    # recursive residual of best_x may have drifted; report the true one
    best_rel = np.linalg.norm(b - apply(best_x)) / bnorm
    return CGResult(best_x, float(best_rel), max_iter, False)


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteInput("non-finite input to reconstruction")


def _handle_nonconvergence(res: CGResult, on_maxiter: str):
    if res.converged or on_maxiter == "ignore":
        return
    if on_maxiter == "raise":
        raise MaxIterReached(res.residual, x=res.x, n_iter=res.n_iter)
    warnings.warn(
        f"CG stopped after {res.n_iter} iterations at relative residual {res.residual:.3e}",
        CGConvergenceWarning,
        stacklevel=3,
    )


def cg_solve_array(
    op: EncodingOperator,
    z: np.ndarray,
    y: np.ndarray,
    lam: float,
    cg_tol: float = 1e-5,
    cg_max_iter: int = 50,
    x0: Optional[np.ndarray] = None,
) -> CGResult:
    """Solve ``(A^H A + lam I) x = A^H y + lam z`` on raw arrays."""
    if lam < 0:
        raise InvalidParams(f"lambda must be >= 0, got {lam}")
    b = op.adjoint(y)
    if lam:
        b = b + lam * z
    start = z if x0 is None else x0
    return conjugate_gradient(lambda v: op.normal(v, lam), b, start, cg_tol, int(cg_max_iter))


def cg_solve(
    z: CineSeries,
    y: MultiCoilKSpace,
    s: CoilSensitivities,
    m: SamplingMask,
    lam: float,
    cg_tol: float = 1e-5,
    cg_max_iter: int = 50,
    x0: Optional[CineSeries] = None,
    on_maxiter: str = "warn",
) -> CineSeries:
    """Data-consistency update: argmin ``||A x - y||^2 + lam ||x - z||^2``.

    CG starts at ``x0`` (default ``z``).  When ``cg_max_iter`` is exhausted the
    lowest-residual iterate is returned with a :class:`CGConvergenceWarning`;
    ``on_maxiter="raise"`` raises :class:`MaxIterReached` instead and
    ``"ignore"`` stays silent.
    """
    validate_pairing(x=z, y=y, s=s, m=m)
    res = cg_solve_array(
        encoding_operator(s, m), z.data, y.data, lam, cg_tol, cg_max_iter, None if x0 is None else x0.data
    )
    _handle_nonconvergence(res, on_maxiter)
    return CineSeries(res.x)


def sense_recon(
    y: MultiCoilKSpace,
    s: CoilSensitivities,
    m: SamplingMask,
    cg_tol: float = 1e-5,
    cg_max_iter: int = 50,
    on_maxiter: str = "warn",
) -> CineSeries:
    """CG-SENSE: least squares ``A^H A x = A^H y`` started from ``A^H y``."""
    validate_pairing(y=y, s=s, m=m)
    op = encoding_operator(s, m)
    start = op.adjoint(y.data)
    res = cg_solve_array(op, np.zeros_like(start), y.data, 0.0, cg_tol, cg_max_iter, x0=start)
    _handle_nonconvergence(res, on_maxiter)
    return CineSeries(res.x)


# ---------------------------------------------------------------------------
# Temporal-Fourier compressed sensing


def cs_objective(op: EncodingOperator, x: np.ndarray, y: np.ndarray, mu: float) -> float:
    resid = op.forward(x) - y * op._mask_b
    return 0.5 * float(np.vdot(resid, resid).real) + mu * float(np.sum(np.abs(tfft(x))))


def cs_xf_recon(
    y: MultiCoilKSpace,
    s: CoilSensitivities,
    m: SamplingMask,
    mu: Optional[float] = None,
    n_iter: int = 50,
    step: float = 1.0,
    return_history: bool = False,
):
    """Minimize ``0.5 ||A x - y||^2 + mu ||F_t x||_1`` with ISTA.

    Each iteration is a gradient step on the data term followed by complex
    soft-thresholding of the x-f coefficients at ``step * mu``; since ``F_t``
    is unitary this is the exact proximal step.  Starts at zero.  ``mu``
    defaults to ``1e-3 * max|A^H y|``.

    Returns the final iterate, plus the per-iteration objective (index 0 is
    the starting point) when ``return_history`` is set.
    """
    validate_pairing(y=y, s=s, m=m)
    if step <= 0:
        raise InvalidParams("step must be positive")
    op = encoding_operator(s, m)
    yd = y.data * op._mask_b
    _check_finite(yd)
    if mu is None:
        mu = 1e-3 * float(np.max(np.abs(op.adjoint(yd))))
    if mu < 0:
        raise InvalidParams("mu must be >= 0")
    x = np.zeros(y.data.shape[:3], dtype=np.complex128)
    history = [cs_objective(op, x, yd, mu)] if return_history else None
    for _ in range(int(n_iter)):
        grad = op.adjoint(op.forward(x) - yd)
        v = x - step * grad
        x = tifft(soft_threshold(tfft(v), step * mu))
        if return_history:
            history.append(cs_objective(op, x, yd, mu))
    out = CineSeries(x)
    return (out, history) if return_history else out


# ---------------------------------------------------------------------------
# Unrolled dual-domain reconstruction


def dual_domain_denoise_array(x: np.ndarray, gamma: float, d_xt: Denoiser, d_xf: Denoiser) -> np.ndarray:
    if gamma == 1.0:
        return d_xt.apply(x)
    xf_branch = tifft(d_xf.apply(tfft(x)))
    if gamma == 0.0:
        return xf_branch
    return gamma * d_xt.apply(x) + (1.0 - gamma) * xf_branch


def dual_domain_denoise(x: CineSeries, gamma: float, d_xt: Denoiser, d_xf: Denoiser) -> CineSeries:
    """Blend an x-t denoiser with an x-f denoiser: ``g D_xt(x) + (1-g) F_t^-1 D_xf(F_t x)``."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidParams(f"gamma must lie in [0, 1], got {gamma}")
    return CineSeries(dual_domain_denoise_array(x.data, gamma, d_xt, d_xf))


def unrolled_recon(
    y: MultiCoilKSpace,
    s: CoilSensitivities,
    m: SamplingMask,
    params: ReconParams = ReconParams(),
    d_xt: Optional[Denoiser] = None,
    d_xf: Optional[Denoiser] = None,
    on_maxiter: str = "ignore",
) -> CineSeries:
    """K stages of denoise-then-CG starting from the adjoint image."""
    validate_pairing(y=y, s=s, m=m)
    d_xt = Identity() if d_xt is None else d_xt
    d_xf = Identity() if d_xf is None else d_xf
    op = encoding_operator(s, m)
    x = op.adjoint(y.data)
    for _ in range(params.K):
        z = dual_domain_denoise_array(x, params.gamma, d_xt, d_xf)
        res = cg_solve_array(op, z, y.data, params.lam, params.cg_tol, params.cg_max_iter)
        _handle_nonconvergence(res, on_maxiter)
        x = res.x
    return CineSeries(x)


# ---------------------------------------------------------------------------
# Named reconstructors


@dataclass(frozen=True)
class Reconstructor:
    """A named reconstruction method with its parameter map.

    ``recon(y, s, m)`` returns a :class:`CineSeries`.  Valid names are
    listed in :data:`RECON_METHODS`.
    """

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in RECON_METHODS:
            raise InvalidParams(f"unknown reconstruction method {self.name!r}; valid: {', '.join(RECON_METHODS)}")
        object.__setattr__(self, "params", dict(self.params))
        self._build()  # validate eagerly

    def _build(self) -> Callable:
        p = dict(self.params)
        if self.name == "zero_filled":
            if p:
                raise InvalidParams(f"zero_filled takes no parameters, got {sorted(p)}")
            return zero_filled_recon
        if self.name == "sense_cg":
            kw = {k: p.pop(k) for k in ("cg_tol", "cg_max_iter", "on_maxiter") if k in p}
            kw.setdefault("on_maxiter", "ignore")
            if p:
                raise InvalidParams(f"unexpected sense_cg parameters {sorted(p)}")
            return lambda y, s, m: sense_recon(y, s, m, **kw)
        if self.name == "cs_xf":
            kw = {k: p.pop(k) for k in ("mu", "n_iter", "step") if k in p}
            if p:
                raise InvalidParams(f"unexpected cs_xf parameters {sorted(p)}")
            return lambda y, s, m: cs_xf_recon(y, s, m, **kw)
        rp = ReconParams(**{k: p.pop(k) for k in ("lam", "gamma", "K", "cg_tol", "cg_max_iter") if k in p})
        d_xt = make_denoiser(p.pop("d_xt", None))
        d_xf = make_denoiser(p.pop("d_xf", None))
        if p:
            raise InvalidParams(f"unexpected unrolled parameters {sorted(p)}")
        return lambda y, s, m: unrolled_recon(y, s, m, rp, d_xt, d_xf)

    def __call__(self, y: MultiCoilKSpace, s: Optional[CoilSensitivities], m: SamplingMask) -> CineSeries:
        if s is None and self.name != "zero_filled":
            raise InvalidParams(f"{self.name} requires coil sensitivities")
        return self._build()(y, s, m)


def default_unrolled_params() -> dict:
    """Unrolled defaults: lam=1e-2, gamma=0.5, K=6 with the stand-in denoisers."""
    return {
        "lam": 1e-2,
        "gamma": 0.5,
        "K": 6,
        "cg_tol": 1e-5,
        "cg_max_iter": 50,
        "d_xt": {"name": "smooth", "width": 0.5, "kind": "gaussian"},
        "d_xf": {"name": "soft_threshold", "threshold": 0.01, "relative": True},
    }
