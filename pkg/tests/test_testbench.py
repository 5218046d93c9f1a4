import warnings

import numpy as np
import pytest
from scipy import stats as sps

from varinit.initialization import build_plan
from varinit.testbench import bench_median, fixed_variance_plan, run_mc_ablation, run_variance_bench

SMALL = dict(layers=10, width=128, batch=256)


class TestBench:
    def test_ours_keeps_forward_variance(self):
        rep = run_variance_bench("tanh", "vi_forward", 1.0, **SMALL)
        assert rep.E_f < 15
        assert len(rep.forward_var) == 10 and len(rep.backward_var) == 11
        assert rep.forward_blowup_layer is None

    def test_large_random_normal_saturates(self):
        # identity with 10x the variance-preserving std gains 100x variance per layer
        w = 128
        rep = run_variance_bench("identity", "random_normal:%r" % float(10 / np.sqrt(w)), 1.0, layers=200, width=w, batch=64)
        assert rep.E_f == 100.0
        assert rep.forward_blowup_layer is not None

    def test_vanishing_random_normal(self):
        rep = run_variance_bench("tanh", "random_normal:0.001", 1.0, **SMALL)
        assert rep.E_f > 99 and rep.E_b > 99

    def test_deterministic(self):
        a = run_variance_bench("sine:30", "vi_forward", 1.0, seed=3, **SMALL)
        b = run_variance_bench("sine:30", "vi_forward", 1.0, seed=3, **SMALL)
        assert a.forward_var == b.forward_var and a.E_b == b.E_b

    def test_small_width_warns(self):
        with pytest.warns(UserWarning, match="small"):
            run_variance_bench("tanh", "vi_forward", 1.0, layers=2, width=16, batch=32)

    def test_fixed_plan(self):
        plan = fixed_variance_plan(1.0, 5, 128, "tanh", 1.0)
        assert all(l.weight_variance * l.fan_in == pytest.approx(1.0) for l in plan)
        rep = run_variance_bench("tanh", "xavier", 1.0, plan=plan, **dict(SMALL, layers=5))
        assert rep.weight_var_times_fanin == pytest.approx(1.0)

    def test_median(self):
        s = bench_median("relu", "kaiming_fan_in", 1.0, seeds=range(3), **SMALL)
        assert len(s.reports) == 3
        assert s.E_f == pytest.approx(np.median([r.E_f for r in s.reports]))

    def test_gaussian_preactivations_stay_gaussian(self):
        plan = build_plan([1000] * 7, "gaussian:0.05", 0.078, "vi_forward", preactivation_input=True)
        rep = run_variance_bench("gaussian:0.05", "vi_forward", 0.078, layers=6, width=1000, batch=512, plan=plan)
        for v in rep.forward_var:
            assert v == pytest.approx(0.078**2, rel=0.1)


class TestAblation:
    def test_error_decreases_with_samples(self):
        rows = run_mc_ablation(sample_sizes=(100_000, 1_000), seeds=range(3))
        assert rows[0].E_W < rows[1].E_W
        assert np.isnan(rows[0].E_f)

    def test_with_bench(self):
        rows = run_mc_ablation(sample_sizes=(10_000,), seeds=range(2), bench=dict(layers=4, width=128, batch=128))
        assert rows[0].E_f < 20
