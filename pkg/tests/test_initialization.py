import math

import numpy as np
import pytest
from sklearn.base import clone

from varinit.initialization import (
    NORMAL_INPUT,
    UNIFORM_INPUT,
    DegenerateActivationError,
    LayerInit,
    NetworkShape,
    RandomNormal,
    VarianceInformedInitializer,
    backward_weight_variance,
    build_plan,
    first_layer_weight_variance,
    forward_weight_variance,
    gain,
    parse_scheme,
)
from varinit.stats import MomentPair, compute_stats

SHAPE = NetworkShape.mlp(2, 3, 64, 1)


class TestShape:
    def test_mlp(self):
        assert SHAPE.widths == (2, 64, 64, 64, 1)
        assert SHAPE.n_layers == 4
        assert SHAPE.fans(0) == (2, 64)

    @pytest.mark.parametrize("bad", [[3], [2, 0, 1]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            NetworkShape(bad)


class TestRules:
    def test_forward(self):
        assert forward_weight_variance(1.0, 100, MomentPair(0.0, 0.5)) == pytest.approx(0.02)
        assert forward_weight_variance(2.0, 10, MomentPair(1.0, 1.0)) == pytest.approx(0.2)

    def test_backward(self):
        assert backward_weight_variance(50, MomentPair(0.5, 0.25)) == pytest.approx(0.04)

    def test_first_layer_uniform_inputs(self):
        assert first_layer_weight_variance(0.5, 2) == pytest.approx(3 * 0.25 / 2)
        assert first_layer_weight_variance(1.0, 4, NORMAL_INPUT) == pytest.approx(0.25)

    def test_degenerate(self):
        with pytest.raises(DegenerateActivationError, match="collapses"):
            forward_weight_variance(1.0, 10, MomentPair(0.0, 0.0))
        with pytest.raises(DegenerateActivationError, match="gradient-dead"):
            backward_weight_variance(10, MomentPair(0.0, 0.0))

    def test_gaussian_vanishing_activation_is_degenerate(self):
        # sigma_p far above sigma_a: E[f^2] underflows
        with pytest.raises(DegenerateActivationError):
            build_plan(SHAPE, "gaussian:1e-20", 1e6, "vi_forward")


class TestClassicEquivalences:
    def test_relu_forward_is_kaiming(self):
        ours = build_plan(SHAPE, "relu", 1.0, "vi_forward")
        kaiming = build_plan(SHAPE, "relu", 1.0, "kaiming_fan_in")
        for a, b in list(zip(ours, kaiming))[1:]:
            assert a.weight_variance == pytest.approx(b.weight_variance)

    def test_relu_backward_is_kaiming_fan_out(self):
        ours = build_plan(SHAPE, "relu", 1.0, "vi_backward")
        kaiming = build_plan(SHAPE, "relu", 1.0, "kaiming_fan_out")
        for a, b in list(zip(ours, kaiming))[1:]:
            assert a.weight_variance == pytest.approx(b.weight_variance)

    def test_identity_forward_is_lecun(self):
        plan = build_plan(SHAPE, "identity", 1.0, "vi_forward")
        assert plan.hidden_weight_var_times_fanin == pytest.approx(1.0)

    def test_xavier_square(self):
        assert build_plan(SHAPE, "tanh", 1.0, "xavier").hidden_weight_var_times_fanin == pytest.approx(1.0)

    @pytest.mark.parametrize("text,expected", [("tanh", 2.5362), ("sigmoid", 3.4086), ("relu", 2.0), ("gaussian:0.05", 28.302)])
    def test_table_values(self, text, expected):
        plan = build_plan(SHAPE, text, 1.0, "vi_forward", stats_method="quadrature")
        assert plan.hidden_weight_var_times_fanin == pytest.approx(expected, rel=2e-4)


class TestPlan:
    def test_first_layer_and_preactivation_input(self):
        p = build_plan(SHAPE, "sine:30", 1.0, "vi_forward")
        assert p[0].weight_variance == pytest.approx(3.0 / 2)
        q = build_plan(SHAPE, "sine:30", 1.0, "vi_forward", preactivation_input=True)
        assert q[0].weight_variance == pytest.approx(1.0 / (2 * compute_stats("sine:30", 1.0).post_second_moment))

    def test_random_normal_forces_normal(self):
        p = build_plan(SHAPE, "tanh", 1.0, "random_normal:0.1")
        assert all(l.distribution == "normal" and l.weight_variance == pytest.approx(0.01) for l in p)

    def test_parse_scheme(self):
        assert parse_scheme("XAVIER") == "xavier"
        assert parse_scheme("random_normal:0.5") == RandomNormal(0.5)
        with pytest.raises(ValueError):
            parse_scheme("orthogonal")

    def test_uniform_bound(self):
        layer = LayerInit(0, 10, 10, 0.12)
        assert layer.bound == pytest.approx(math.sqrt(0.36))

    @pytest.mark.parametrize("dist", ["uniform", "normal"])
    def test_empirical_variance(self, dist):
        layer = LayerInit(0, 500, 500, 0.004, dist)
        w = layer.sample(np.random.default_rng(0), (500, 500))
        assert np.var(w) == pytest.approx(0.004, rel=0.02)
        if dist == "uniform":
            assert np.max(np.abs(w)) <= layer.bound

    def test_gain(self):
        assert gain("relu", 1.0) == pytest.approx(math.sqrt(2.0))
        assert gain("identity", 3.0) == pytest.approx(1.0)

    def test_bad_layer(self):
        with pytest.raises(ValueError):
            LayerInit(0, 1, 1, 0.0)
        with pytest.raises(ValueError):
            LayerInit(0, 1, 1, 1.0, "cauchy")


class TestEstimator:
    def test_fit_sample(self):
        X = np.random.default_rng(0).uniform(-1, 1, (100, 2))
        est = VarianceInformedInitializer("gaussian:0.05", sigma_p=0.15, hidden_layers=3, width=32).fit(X, np.zeros(100))
        assert est.n_features_in_ == 2
        assert est.plan_.shape.widths == (2, 32, 32, 32, 1)
        mlp = est.sample(seed=1)
        assert mlp.weights[1].shape == (32, 32)
        np.testing.assert_array_equal(mlp.weights[1], est.sample(seed=1).weights[1])

    def test_params_and_clone(self):
        est = VarianceInformedInitializer(activation="tanh", width=16)
        assert est.get_params()["width"] == 16
        assert clone(est).get_params() == est.get_params()

    def test_solve(self):
        est = VarianceInformedInitializer("gaussian:0.05", sigma_p="solve", hidden_layers=2, width=8).fit(np.zeros((3, 2)))
        assert est.sigma_p_ == pytest.approx(0.078, rel=0.01)

    def test_data_moments(self):
        X = np.full((10, 2), 0.5)
        est = VarianceInformedInitializer("tanh", input_moments="data", hidden_layers=1, width=4).fit(X)
        assert est.plan_[0].weight_variance == pytest.approx(1.0 / (2 * 0.25))

    def test_input_validation(self):
        with pytest.raises(ValueError):
            VarianceInformedInitializer().fit(np.array([[np.nan, 1.0]]))
