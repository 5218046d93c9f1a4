import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varinit.solver import (
    SigmaGrid,
    backward_lhs,
    backward_residual,
    heatmap,
    match_weight_variance,
    residual_curve,
    ridge_slope,
    smape,
    solve_sigma_p,
)

# backward condition for gaussians in closed form: 1 / (r^2 (r^2 + 2)) = 1
R_STAR = math.sqrt(math.sqrt(2.0) - 1.0)


class TestSmape:
    def test_values(self):
        assert smape(1.0, 1.0) == 0.0
        assert smape(1.0, 3.0) == pytest.approx(50.0)
        assert smape(0.0, 5.0) == 100.0
        assert smape(0.0, 0.0) == 0.0

    def test_non_finite_saturates(self):
        assert smape(float("inf"), 1.0) == 100.0
        assert smape(float("nan"), 1.0) == 100.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_bounded_and_symmetric(self, a, b):
        v = smape(a, b)
        assert 0.0 <= v <= 100.0
        assert v == smape(b, a)


class TestGrid:
    def test_values_and_step(self):
        g = SigmaGrid(0.1, 1.0, 10, "linear")
        assert g.values()[0] == 0.1 and g.values()[-1] == 1.0
        assert g.step_at(0.5) == pytest.approx(0.1)
        lg = SigmaGrid(1e-3, 10, 2000)
        v = lg.values()
        assert lg.step_at(v[100]) == pytest.approx(v[101] - v[100], rel=1e-9)

    @pytest.mark.parametrize("args", [(0, 1), (1, 0.5), (0.1, 1, 1), (0.1, 1, 5, "cubic")])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            SigmaGrid(*args)


class TestBackwardCondition:
    def test_gaussian_lhs_closed_form(self):
        for r in (0.3, 0.64, 1.5):
            lhs = backward_lhs("gaussian:0.05", 0.05 / r)
            assert lhs == pytest.approx(1.0 / (r * r * (r * r + 2.0)), rel=1e-9)

    def test_gaussian_root(self):
        res = solve_sigma_p("gaussian:0.05")
        assert res.sigma_p == pytest.approx(0.05 / R_STAR, rel=2e-3)
        assert not res.flat and not res.at_boundary
        assert res.lhs == pytest.approx(1.0, abs=0.01)

    def test_sigmoid_and_sinc(self):
        assert solve_sigma_p("sigmoid").sigma_p == pytest.approx(6.76, rel=0.01)
        assert solve_sigma_p("sinc:1").sigma_p == pytest.approx(2.225, rel=0.01)

    @pytest.mark.parametrize("text", ["relu", "identity"])
    def test_flat(self, text):
        assert solve_sigma_p(text).flat

    def test_tanh_minimum_at_lower_edge(self):
        # lhs ~ 1 + (4/3) sigma^4 as sigma -> 0, so the residual keeps falling
        res = solve_sigma_p("tanh")
        assert res.at_boundary and res.sigma_p == pytest.approx(1e-3)
        assert backward_lhs("tanh", 0.01) == pytest.approx(1 + 4 / 3 * 0.01**4, rel=1e-6)

    def test_fan_ratio_moves_root(self):
        sp = solve_sigma_p("gaussian:0.05", fan_ratio=2.0).sigma_p
        # 2 / (r^2 (r^2 + 2)) = 1
        r = math.sqrt(math.sqrt(3.0) - 1.0)
        assert sp == pytest.approx(0.05 / r, rel=2e-3)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 1.0), st.floats(0.01, 2.0), st.floats(1.1, 4.0))
    def test_ratio_invariance(self, sa, sp, k):
        r1 = backward_residual(f"gaussian:{sa!r}", sp)
        r2 = backward_residual(f"gaussian:{sa * k!r}", sp * k)
        assert r1 == pytest.approx(r2, rel=1e-6, abs=1e-6)

    @pytest.mark.parametrize("text", ["gaussian:0.05", "sigmoid", "gabor_wavelet:1"])
    def test_refinement_never_worsens(self, text):
        coarse = SigmaGrid(0.01, 10, 101, "linear")
        fine = SigmaGrid(0.01, 10, 201, "linear")
        assert solve_sigma_p(text, fine).residual <= solve_sigma_p(text, coarse).residual + 1e-12

    def test_curve_degenerate_cells_are_nan(self):
        sig, res = residual_curve("gaussian:1e-14", SigmaGrid(1.0, 1e4, 5))
        assert np.isnan(res).any()


class TestHeatmap:
    def test_ridge_matches_theory(self):
        sa = np.linspace(0.01, 0.5, 50)
        sp = np.linspace(0.02, 0.75, 50)
        m = heatmap(sa, sp)
        assert m.shape == (50, 50)
        assert 0.0 <= m.min() and m.max() <= 1.0
        assert ridge_slope(m, sa, sp) == pytest.approx(R_STAR, abs=0.02)

    def test_ridge_slope_exact_line(self):
        rows, cols = np.linspace(0, 1, 11), np.linspace(0.1, 1, 10)
        m = np.zeros((11, 10))
        for j, c in enumerate(cols):
            m[np.argmin(np.abs(rows - 0.5 * c)), j] = 1.0
        assert ridge_slope(m, rows, cols) == pytest.approx(0.5, abs=0.03)

    def test_empty(self):
        with pytest.raises(ValueError):
            heatmap([], [1.0])


class TestEquivalence:
    def test_xavier_and_kaiming_for_gaussian(self):
        sx, vx = match_weight_variance("gaussian:0.05", 1.0)
        sk, vk = match_weight_variance("gaussian:0.05", 2.0)
        assert 0.30 <= sx <= 0.36 and vx == pytest.approx(1.0, rel=0.03)
        assert 0.38 <= sk <= 0.44 and vk == pytest.approx(2.0, rel=0.03)
