import warnings

import numpy as np
import pytest

from conftest import crandn, dense_dc_solve, dense_operator, random_problem
from ksadapt.errors import CGConvergenceWarning, InvalidParams, MaxIterReached
from ksadapt.masks import make_equispaced, make_vdrs, undersample
from ksadapt.metrics import nmse
from ksadapt.operators import forward_apply, ifft2c
from ksadapt.phantom import PhantomSpec, gen_sensitivities, simulate_slice
from ksadapt.recon import (
    Identity,
    Reconstructor,
    Smoothing,
    SoftThreshold,
    cg_solve,
    cs_xf_recon,
    default_unrolled_params,
    dual_domain_denoise,
    make_denoiser,
    sense_recon,
    soft_threshold,
    unrolled_recon,
    zero_filled_recon,
)
from ksadapt.types import CineSeries, CoilSensitivities, MultiCoilKSpace, ReconParams, SamplingMask


def test_zero_filled_full_single_coil(rng):
    y = MultiCoilKSpace(crandn(rng, 4, 6, 2, 1))
    x = zero_filled_recon(y, CoilSensitivities.ones(4, 6), SamplingMask.full(6))
    np.testing.assert_allclose(x.data, ifft2c(y.data)[..., 0], atol=1e-12)


def test_zero_filled_zero():
    x = zero_filled_recon(MultiCoilKSpace(np.zeros((4, 4, 2, 2))), None, SamplingMask(4, [1]))
    assert np.all(x.data == 0)


def test_zero_filled_rss(rng):
    y = MultiCoilKSpace(crandn(rng, 4, 4, 2, 2))
    m = SamplingMask(4, [0, 2])
    x = zero_filled_recon(y, None, m).data
    keep = np.array([1, 0, 1, 0])[None, :, None]
    p1, p2 = ifft2c(y.data[..., 0] * keep), ifft2c(y.data[..., 1] * keep)
    np.testing.assert_allclose(x, np.sqrt(abs(p1) ** 2 + abs(p2) ** 2), atol=1e-12)


class TestCG:
    def test_full_single_coil(self, rng):
        y = MultiCoilKSpace(crandn(rng, 4, 4, 2, 1))
        z = CineSeries(np.zeros((4, 4, 2)))
        x = cg_solve(z, y, CoilSensitivities.ones(4, 4), SamplingMask.full(4), 0.0, cg_tol=1e-12)
        np.testing.assert_allclose(x.data, ifft2c(y.data)[..., 0], atol=1e-10)

    def test_prior_dominated(self):
        x, s, y, m = random_problem(2)
        out = cg_solve(x, y, s, m, 1e8, cg_tol=1e-12)
        assert np.linalg.norm(out.data - x.data) / np.linalg.norm(x.data) < 1e-6

    @pytest.mark.parametrize("lam", [0.0, 1e-2, 1.0])
    def test_dense_oracle_tiny(self, lam):
        z, s, y, m = random_problem(5, nx=4, ny=4, nt=1, nc=2, lines=[0, 1, 3])
        ref = dense_dc_solve(dense_operator(s, m, 1), y.data, z.data, lam)
        out = cg_solve(z, y, s, m, lam, cg_tol=1e-12, cg_max_iter=200).data.ravel()
        assert np.linalg.norm(out - ref) <= 1e-8 * np.linalg.norm(ref)

    def test_maxiter_modes(self):
        z, s, y, m = random_problem(3, 8, 8, 2, 2)
        with pytest.warns(CGConvergenceWarning):
            cg_solve(z, y, s, m, 1e-3, cg_tol=1e-14, cg_max_iter=1)
        with pytest.raises(MaxIterReached) as ei:
            cg_solve(z, y, s, m, 1e-3, cg_tol=1e-14, cg_max_iter=1, on_maxiter="raise")
        assert ei.value.residual > 1e-14
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            cg_solve(z, y, s, m, 1e-3, cg_tol=1e-14, cg_max_iter=1, on_maxiter="ignore")

    def test_negative_lambda(self):
        z, s, y, m = random_problem(3)
        with pytest.raises(InvalidParams):
            cg_solve(z, y, s, m, -1.0)


class TestSense:
    def test_full_sampling_recovers(self):
        x, s, y = simulate_slice(PhantomSpec(nx=16, ny=16, nt=2, nc=2))
        out = sense_recon(y, s, SamplingMask.full(16), cg_tol=1e-12, cg_max_iter=100)
        assert np.abs(out.data - x.data).max() < 1e-8

    def test_2x_two_coils(self):
        x, _, _ = simulate_slice(PhantomSpec(nx=16, ny=16, nt=1, nc=2))
        s = gen_sensitivities(16, 16, 2, seed=4)
        m = SamplingMask(16, list(range(0, 16, 2)))
        y = forward_apply(x, s, m)
        out = sense_recon(y, s, m, cg_tol=1e-12, cg_max_iter=500)
        ref = dense_dc_solve(dense_operator(s, m, 1), y.data, out.data * 0, 0.0)
        assert nmse(x, out) < 1e-6
        np.testing.assert_allclose(out.data.ravel(), ref, atol=1e-6)

    def test_single_coil_2x_is_underdetermined(self):
        x, _, _ = simulate_slice(PhantomSpec(nx=16, ny=16, nt=1, nc=1))
        s = CoilSensitivities.ones(16, 16)
        m = SamplingMask(16, list(range(0, 16, 2)))
        out = sense_recon(y := forward_apply(x, s, m), s, m, cg_tol=1e-12)
        # data are fit exactly, but half the unknowns are unresolved
        np.testing.assert_allclose(forward_apply(out, s, m).data, y.data, atol=1e-8)
        assert nmse(x, out) > 1e-2


class TestCS:
    def test_mu_zero_least_squares(self, rng):
        y = MultiCoilKSpace(crandn(rng, 4, 4, 3, 1))
        out = cs_xf_recon(y, CoilSensitivities.ones(4, 4), SamplingMask.full(4), mu=0.0, n_iter=50)
        assert nmse(CineSeries(ifft2c(y.data)[..., 0]), out) < 1e-8

    def test_huge_mu_gives_zero(self):
        x, s, y, m = random_problem(0)
        out = cs_xf_recon(y, s, m, mu=1e8, n_iter=5)
        assert np.abs(out.data).max() < 1e-12

    def test_objective_monotone(self):
        x, s, y = simulate_slice(PhantomSpec(nx=32, ny=32, nt=6, nc=4))
        m = make_vdrs(32, 8, seed=1)
        _, hist = cs_xf_recon(undersample(y, m), s, m, n_iter=30, return_history=True)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))


class TestDenoisers:
    def test_soft_threshold(self):
        a = np.array([3 + 4j, 0.5, -2.0])
        np.testing.assert_allclose(soft_threshold(a, 1.0), [(3 + 4j) * 4 / 5, 0, -1.0])

    def test_relative_threshold(self):
        a = np.array([10.0, 0.5])
        np.testing.assert_allclose(SoftThreshold(0.1).apply(a), [9.0, 0.0])

    def test_smoothing_preserves_constant(self):
        a = np.full((5, 5, 3), 2 - 1j)
        for kind in ("gaussian", "box"):
            np.testing.assert_allclose(Smoothing(1.0, kind).apply(a), a)

    def test_make_denoiser(self):
        assert isinstance(make_denoiser(None), Identity)
        assert isinstance(make_denoiser({"name": "smooth", "width": 2}), Smoothing)
        with pytest.raises(InvalidParams):
            make_denoiser({"name": "nope"})


class TestDualDomain:
    def test_gamma_one(self, rng):
        x = CineSeries(crandn(rng, 6, 6, 4))
        d = Smoothing(1.0)
        np.testing.assert_allclose(dual_domain_denoise(x, 1.0, d, SoftThreshold(0.2)).data, d(x).data, atol=1e-14)

    def test_gamma_zero_identity(self, rng):
        x = CineSeries(crandn(rng, 6, 6, 4))
        np.testing.assert_allclose(dual_domain_denoise(x, 0.0, Smoothing(), Identity()).data, x.data, atol=1e-12)

    def test_both_identity(self, rng):
        x = CineSeries(crandn(rng, 6, 6, 4))
        np.testing.assert_allclose(dual_domain_denoise(x, 0.5, Identity(), Identity()).data, x.data, atol=1e-12)


class TestUnrolled:
    def test_k1_identity_matches_sense(self):
        x, s, y = simulate_slice(PhantomSpec(nx=16, ny=16, nt=2, nc=2))
        m = SamplingMask.full(16)
        p = ReconParams(lam=1e-12, gamma=0.5, K=1, cg_tol=1e-12, cg_max_iter=100)
        a = unrolled_recon(y, s, m, p, Identity(), Identity())
        b = sense_recon(y, s, m, cg_tol=1e-12, cg_max_iter=100)
        np.testing.assert_allclose(a.data, b.data, atol=1e-6)

    def test_defaults_beat_zero_filled(self):
        x, s, y = simulate_slice(PhantomSpec(nx=32, ny=32, nt=8, nc=4))
        m = make_equispaced(32, 8)
        yu = undersample(y, m)
        out = Reconstructor("unrolled", default_unrolled_params())(yu, s, m)
        assert nmse(x, out) <= nmse(x, zero_filled_recon(yu, s, m))

    def test_zero_data(self):
        _, s, _, m = random_problem(0)
        out = unrolled_recon(MultiCoilKSpace(np.zeros((8, 8, 3, 2))), s, m, ReconParams(K=2))
        assert np.all(out.data == 0)


class TestReconstructor:
    def test_unknown_name(self):
        with pytest.raises(InvalidParams, match="zero_filled"):
            Reconstructor("magic")

    def test_bad_params(self):
        with pytest.raises(InvalidParams):
            Reconstructor("sense_cg", {"lam": 1})
        with pytest.raises(InvalidParams):
            Reconstructor("zero_filled", {"x": 1})

    def test_sens_required(self):
        _, _, y, m = random_problem(0)
        with pytest.raises(InvalidParams):
            Reconstructor("sense_cg")(y, None, m)

    @pytest.mark.parametrize("name", ["zero_filled", "sense_cg", "cs_xf", "unrolled"])
    def test_deterministic(self, name):
        _, s, y, m = random_problem(4)
        r = Reconstructor(name, {"K": 2} if name == "unrolled" else {})
        assert np.array_equal(r(y, s, m).data, r(y, s, m).data)
