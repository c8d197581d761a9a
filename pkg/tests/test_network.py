import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlfbpinn import autodiff as ad
from mlfbpinn.network import NetworkParams, fcn_forward, fcn_jet, init_fcn, param_count

from conftest import net_forward_ld


class TestInit:
    def test_parameter_count_1d(self):
        assert init_fcn([1, 16, 1], seed=5).n_params == 49

    def test_parameter_count_2d_subdomain_net(self):
        # one hidden layer of 16 units on 2D inputs
        assert init_fcn([2, 16, 1], seed=0).n_params == 65
        assert param_count([2, 16, 1]) == 65

    def test_same_seed_bit_identical(self):
        a = init_fcn([2, 8, 8, 1], seed=11).flatten()
        b = init_fcn([2, 8, 8, 1], seed=11).flatten()
        assert np.array_equal(a, b)

    def test_glorot_bounds_and_zero_biases(self):
        net = init_fcn([3, 50, 20, 1], seed=1)
        for w, b in zip(net.weights, net.biases):
            bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.all(np.abs(w) <= bound)
            assert np.abs(w).max() > 0.8 * bound
            np.testing.assert_array_equal(b, 0.0)

    def test_zero_size_layer_rejected(self):
        with pytest.raises(ValueError):
            init_fcn([2, 0, 1], seed=0)

    def test_too_few_sizes_rejected(self):
        with pytest.raises(ValueError):
            init_fcn([2], seed=0)

    def test_activations(self):
        net = init_fcn([2, 4, 4, 1], seed=0)
        assert net.activations == ("tanh", "tanh", "identity")

    def test_flat_round_trip(self):
        net = init_fcn([2, 5, 3, 1], seed=4)
        back = NetworkParams.from_flat(net.layer_sizes, net.flatten())
        for a, b in zip(net.weights + net.biases, back.weights + back.biases):
            assert np.array_equal(a, b)

    def test_chaining_violation_rejected(self):
        with pytest.raises(ValueError):
            NetworkParams([np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])


class TestForward:
    def test_zero_params(self):
        net = NetworkParams.from_flat([2, 7, 1], np.zeros(param_count([2, 7, 1])))
        assert fcn_forward(net, np.array([0.3, -4.0])) == 0.0

    def test_single_affine_layer(self):
        net = NetworkParams([np.array([[2.0]])], [np.array([1.0])])
        assert fcn_forward(net, np.array([3.0])) == 7.0

    def test_odd_symmetry(self):
        net = NetworkParams([np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])], [np.zeros(2), np.zeros(1)])
        assert fcn_forward(net, np.array([0.5])) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fcn_forward(init_fcn([2, 3, 1], seed=0), np.array([1.0, 2.0, 3.0]))

    def test_matches_extended_precision(self, rng):
        net = init_fcn([2, 9, 9, 1], rng=rng)
        x = rng.uniform(-1, 1, 2)
        np.testing.assert_allclose(fcn_forward(net, x), float(net_forward_ld(net.weights, net.biases, x)),
                                   rtol=1e-14)

    def test_jet_value_channel_agrees(self, rng):
        net = init_fcn([2, 6, 4, 1], rng=rng)
        x = rng.uniform(-1, 1, (11, 2))
        dv = ad.eval_with_input_derivatives(lambda prm, z: fcn_jet(prm.weights, prm.biases, z)[..., 0], net, x)
        np.testing.assert_allclose(dv.value, fcn_forward(net, x), rtol=1e-15, atol=1e-16)


class TestProperties:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 100.0))
    def test_finite_output(self, seed, scale):
        rng = np.random.default_rng(seed)
        net = init_fcn([2, 8, 8, 1], rng=rng)
        x = rng.normal(0, scale, (20, 2))
        assert np.all(np.isfinite(fcn_forward(net, x)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_hidden_preactivation_bound(self, seed):
        """After a tanh layer, the next pre-activation is bounded by ||W|| d + ||b||."""
        rng = np.random.default_rng(seed)
        net = init_fcn([2, 8, 5, 1], rng=rng)
        for b in net.biases:
            b[:] = rng.normal(size=b.shape)
        x = rng.normal(0, 10, (50, 2))
        h = np.tanh(x @ net.weights[0].T + net.biases[0])
        pre = h @ net.weights[1].T + net.biases[1]
        w, b = net.weights[1], net.biases[1]
        bound = np.abs(w).max() * w.shape[1] + np.abs(b).max()
        assert np.all(np.abs(pre) <= bound)
