import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import greedy_best_swap, swap_neighbors, tiny_slice
from ksadapt.errors import InvalidParams, RbIcdAborted, UnknownPreset
from ksadapt.masks import (
    TrainingSlice,
    acs_lines,
    alternate_optimize,
    derive_seed,
    evaluate_mask,
    make_acs,
    make_vdrs,
    rb_icd_optimize,
    table1_preset,
    write_trace_csv,
)
from ksadapt.recon import Reconstructor
from ksadapt.types import CineSeries, CoilSensitivities, MultiCoilKSpace, RbIcdParams, SamplingMask
from ksadapt.operators import forward_apply

ZF = Reconstructor("zero_filled")
SENSE = Reconstructor("sense_cg")


def check_trace(trace, p):
    accepted = [r.loss for r in trace if r.accepted]
    assert all(b < a for a, b in zip(accepted, accepted[1:]))
    cur = [r.current_loss for r in trace]
    assert all(b <= a for a, b in zip(cur, cur[1:]))
    acs = acs_lines(trace[0].mask.ny, p.acs_count)
    for r in trace:
        assert r.mask.budget == p.budget
        assert set(acs) <= set(r.mask.lines)


@pytest.mark.parametrize("accel,expected", [(4, (60, 20, 10, 3)), (8, (30, 10, 5, 6)), (12, (20, 6, 3, 9)), ("12x", (20, 6, 3, 9))])
def test_presets(accel, expected):
    p = table1_preset(accel)
    assert (p.budget, p.acs_count, p.subset_size, p.n_iter) == expected
    if expected[0] == 60:
        assert p.movable_count == 40


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        table1_preset(6)


class TestEvaluateMask:
    def test_full_mask_sense(self):
        x, s, y = tiny_slice(0)
        assert evaluate_mask(SamplingMask.full(8), y, x, SENSE, "nmse", s) < 1e-8

    def test_deterministic(self):
        x, s, y = tiny_slice(1)
        m = make_vdrs(8, 4, seed=0)
        assert evaluate_mask(m, y, x, SENSE, "nmse", s) == evaluate_mask(m, y, x, SENSE, "nmse", s)

    def test_high_energy_line_matters_more(self, rng):
        # constant along y: all energy sits on the central line
        col = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        x = CineSeries(np.repeat(col[:, None, None], 8, axis=1).repeat(2, axis=2))
        s = CoilSensitivities.ones(8, 8)
        y = forward_apply(x, s, SamplingMask.full(8))
        no_dc = SamplingMask(8, [i for i in range(8) if i != 4])
        no_edge = SamplingMask(8, [i for i in range(8) if i != 0])
        assert evaluate_mask(no_dc, y, x, ZF, "nmse", s) >= evaluate_mask(no_edge, y, x, ZF, "nmse", s)
        assert evaluate_mask(no_edge, y, x, ZF, "nmse", s) < 1e-20


class TestRbIcd:
    def test_no_movable_lines(self):
        x, s, y = tiny_slice(0)
        m0 = make_acs(8, 4)
        m, trace = rb_icd_optimize(y, x, m0, ZF, "nmse", RbIcdParams(4, 4, 1, 3), sens=s)
        assert m.lines == m0.lines and len(trace) == 1

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 1000), s=st.integers(1, 4), n_iter=st.integers(1, 3), n_cand=st.integers(1, 6),
           loss=st.sampled_from(["nmse", "l2"]))
    def test_invariants(self, seed, s, n_iter, n_cand, loss):
        x, sens, y = tiny_slice(seed, nx=4, ny=12, nt=2, nc=1)
        p = RbIcdParams(6, 2, s, n_iter, n_cand, seed)
        m0 = make_vdrs(12, 6, acs_fraction=1 / 3, seed=seed)
        m, trace = rb_icd_optimize(y, x, m0, ZF, loss, p, sens=sens)
        check_trace(trace, p)
        assert trace[-1].current_loss <= trace[0].loss
        assert evaluate_mask(m, y, x, ZF, loss, sens) == trace[-1].current_loss
        n_sub = -(-4 // s)
        assert len(trace) == 1 + n_iter * n_sub * n_cand

    def test_deterministic_across_threads(self):
        x, s, y = tiny_slice(3, nx=8, ny=16)
        p = RbIcdParams(8, 2, 2, 2, 5, seed=11)
        m0 = make_vdrs(16, 8, acs_fraction=0.25, seed=1)
        m1, t1 = rb_icd_optimize(y, x, m0, SENSE, "nmse", p, sens=s, threads=1)
        m3, t3 = rb_icd_optimize(y, x, m0, SENSE, "nmse", p, sens=s, threads=3)
        assert m1.lines == m3.lines
        assert [(r.mask.lines, r.loss) for r in t1] == [(r.mask.lines, r.loss) for r in t3]

    def test_oracle_equivalence(self):
        x, s, y = tiny_slice(4)
        m0 = make_vdrs(8, 4, acs_fraction=0.5, seed=4)
        p = RbIcdParams(4, 2, 1, 20, seed=4, exhaustive=True)
        m, trace = rb_icd_optimize(y, x, m0, SENSE, "nmse", p, sens=s)
        _, oracle = greedy_best_swap(y, x, m0, SENSE, s)
        assert trace[-1].current_loss == pytest.approx(oracle, rel=1e-12)
        final = trace[-1].current_loss
        assert all(evaluate_mask(c, y, x, SENSE, "nmse", s) >= final for c in swap_neighbors(m))

    def test_precondition_errors(self):
        x, s, y = tiny_slice(0)
        m0 = make_vdrs(8, 4, acs_fraction=0.5, seed=0)
        with pytest.raises(InvalidParams):
            rb_icd_optimize(y, x, m0, ZF, "nmse", RbIcdParams(5, 2, 1, 1), sens=s)
        with pytest.raises(InvalidParams):
            rb_icd_optimize(y, x, SamplingMask(8, [0, 1, 2, 7]), ZF, "nmse", RbIcdParams(4, 2, 1, 1), sens=s)
        with pytest.raises(InvalidParams):
            rb_icd_optimize(y, x, SamplingMask(8, [0, 1, 2, 3, 4, 5, 6]), ZF, "nmse", RbIcdParams(7, 2, 2, 1), sens=s)
        with pytest.raises(InvalidParams):
            rb_icd_optimize(y, x, m0, ZF, "bogus", RbIcdParams(4, 2, 1, 1), sens=s)

    def test_abort_keeps_partial_trace(self):
        x, s, y = tiny_slice(0)
        m0 = make_vdrs(8, 4, acs_fraction=0.5, seed=0)
        calls = []

        def flaky(yy, ss, mm):
            calls.append(1)
            if len(calls) > 2:
                raise InvalidParams("boom")
            return ZF(yy, ss, mm)

        with pytest.raises(RbIcdAborted) as ei:
            rb_icd_optimize(y, x, m0, flaky, "nmse", RbIcdParams(4, 2, 1, 1, 4), sens=s)
        assert len(ei.value.trace) == 1

    def test_trace_csv(self, tmp_path):
        x, s, y = tiny_slice(0)
        p = RbIcdParams(4, 2, 1, 1, 2)
        _, trace = rb_icd_optimize(y, x, make_vdrs(8, 4, 0.5, seed=0), ZF, "nmse", p, sens=s)
        write_trace_csv(trace, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "pass,subset,candidate,loss,accepted" and len(lines) == 1 + len(trace)


class TestAlternate:
    def make_set(self, n=2):
        out = []
        for i in range(n):
            x, s, y = tiny_slice(20 + i, nx=8, ny=12)
            out.append(TrainingSlice(f"s{i}", y, x, make_vdrs(12, 6, seed=i), s))
        return out

    def test_one_round_is_plain_rbicd(self):
        ts = self.make_set()
        p = RbIcdParams(6, 2, 2, 2, 4, seed=3)
        masks = alternate_optimize(ts, 1, lambda r, ms: ZF, p)
        for i, t in enumerate(ts):
            from dataclasses import replace

            m, _ = rb_icd_optimize(t.y_full, t.x_gt, t.m_init, ZF, "nmse", replace(p, seed=derive_seed(3, 0, i)), t.sens)
            assert masks[i].lines == m.lines

    def test_second_round_does_not_hurt(self):
        ts = self.make_set()
        p = RbIcdParams(6, 2, 2, 2, 4, seed=3)
        r1 = alternate_optimize(ts, 1, lambda r, ms: ZF, p)
        r2 = alternate_optimize(ts, 2, lambda r, ms: ZF if r == 0 else SENSE, p)
        for t, a, b in zip(ts, r1, r2):
            la = evaluate_mask(a, t.y_full, t.x_gt, SENSE, "nmse", t.sens)
            lb = evaluate_mask(b, t.y_full, t.x_gt, SENSE, "nmse", t.sens)
            assert lb <= la

    def test_deterministic(self):
        ts = self.make_set()
        p = RbIcdParams(6, 2, 2, 1, 3, seed=9)
        a = alternate_optimize(ts, 2, lambda r, ms: ZF, p)
        b = alternate_optimize(ts, 2, lambda r, ms: ZF, p)
        assert [m.lines for m in a] == [m.lines for m in b]

    def test_rounds_validated(self):
        with pytest.raises(InvalidParams):
            alternate_optimize(self.make_set(1), 0, lambda r, ms: ZF, RbIcdParams(6, 2, 2, 1))
