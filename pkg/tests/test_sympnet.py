import numpy as np
import pytest

import jax

from symoc.sympnet import (
    GSympLayer,
    PhasePoint,
    TimeSympNet,
    build_time_symp_net,
    bvp_forward,
    forward,
    gsymp_forward,
    gsymp_inverse,
    init_time_net,
    jacobian_symplectic_defect,
    jacobian_vp,
    load_checkpoint,
    param_gradient,
    phase_jacobian,
    save_checkpoint,
    symplecticity_defect,
    time_derivative,
    time_net_value,
    tl_forward,
)


def random_net(seed, n=2, horizon=2.0, num_pairs=2, width=4, bvp=True, scale=0.5):
    return build_time_symp_net(
        half_dim=n,
        horizon=horizon,
        num_pairs=num_pairs,
        width=width,
        sublayers=2,
        subwidth=8,
        boundary_preserving=bvp,
        seed=seed,
        time_scale=scale,
    )


def constant_time_net(values):
    """Affine a(t) = const, built as a 0-sublayer time net."""
    values = np.asarray(values, dtype=float)
    return {"w": [np.zeros((values.size, 1))], "b": [values]}


def linear_time_net(slopes):
    """Affine a(t) = slopes * t."""
    slopes = np.asarray(slopes, dtype=float)
    return {"w": [slopes[:, None]], "b": [np.zeros(slopes.size)]}


def one_layer_net(kind, k, bias, tnet, n, horizon=2.0, bvp=True):
    return TimeSympNet(
        half_dim=n,
        horizon=horizon,
        kinds=(kind,),
        params=[{"k": np.atleast_2d(np.asarray(k, float)), "bias": np.asarray(bias, float), "time": tnet}],
        boundary_preserving=bvp,
    )


def tree_leaves_with_paths(params):
    flat, treedef = jax.tree_util.tree_flatten(params)
    return flat, treedef


class TestGSympNet:
    def test_zero_scale_is_identity(self):
        layer = GSympLayer(k=np.eye(2), scale=np.zeros(2), bias=np.zeros(2), kind="up")
        z = np.array([0.3, -0.2, 0.8, 0.1])
        np.testing.assert_array_equal(gsymp_forward([layer], z), z)

    def test_single_up_layer_at_origin(self):
        # sigma(0) = 1/2, so p gains K^T (a * 1/2) = 0.5
        layer = GSympLayer(k=[[1.0]], scale=[1.0], bias=[0.0], kind="up")
        out = gsymp_forward([layer], np.array([0.0, 0.0]))
        np.testing.assert_allclose(out, [0.0, 0.5], atol=1e-15)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        layers = []
        for i in range(6):
            layers.append(
                GSympLayer(
                    k=rng.normal(size=(5, 3)),
                    scale=rng.normal(size=5),
                    bias=rng.normal(size=5),
                    kind="up" if i % 2 == 0 else "low",
                )
            )
        for _ in range(20):
            z = rng.normal(size=6)
            back = gsymp_inverse(layers, gsymp_forward(layers, z))
            assert np.max(np.abs(back - z)) < 1e-10

    def test_shape_mismatch_rejected(self):
        layer = GSympLayer(k=np.ones((2, 3)), scale=np.ones(2), bias=np.zeros(2), kind="low")
        with pytest.raises(ValueError):
            gsymp_forward([layer], np.zeros(4))


class TestTimeForward:
    def test_zero_time_net_is_identity(self):
        net = random_net(seed=1, scale=0.0)
        rng = np.random.default_rng(2)
        for _ in range(5):
            z = rng.normal(size=4)
            t = rng.uniform(0, net.horizon)
            np.testing.assert_array_equal(np.asarray(forward(net, z, t)), z)

    def test_low_layer_hand_example(self):
        # K=[2], b=[1], a(t)=t, (x,p)=(1,0), t=0.5 -> p' = 2*(0.5*(2+1)) = 3
        net = one_layer_net("low", [[2.0]], [1.0], linear_time_net([1.0]), n=1, bvp=False)
        out = np.asarray(tl_forward(net, np.array([1.0, 0.0]), 0.5))
        np.testing.assert_allclose(out, [1.0, 3.0], atol=1e-14)

    def test_affine_in_phase_vector(self):
        net = random_net(seed=3)
        rng = np.random.default_rng(4)
        t = 0.73
        # reconstruct the affine map from basis evaluations, then compare
        offset = np.asarray(forward(net, np.zeros(4), t))
        cols = np.stack(
            [np.asarray(forward(net, e, t)) - offset for e in np.eye(4)], axis=1
        )
        for _ in range(100):
            z = rng.normal(size=4)
            direct = np.asarray(forward(net, z, t))
            np.testing.assert_allclose(direct, cols @ z + offset, atol=1e-10)

    def test_affine_combination_identity(self):
        net = random_net(seed=5)
        rng = np.random.default_rng(6)
        for _ in range(20):
            z1, z2 = rng.normal(size=4), rng.normal(size=4)
            alpha = rng.uniform()
            t = rng.uniform(0, net.horizon)
            lhs = np.asarray(forward(net, alpha * z1 + (1 - alpha) * z2, t))
            rhs = alpha * np.asarray(forward(net, z1, t)) + (1 - alpha) * np.asarray(
                forward(net, z2, t)
            )
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_time_outside_horizon_rejected(self):
        net = random_net(seed=7)
        with pytest.raises(ValueError):
            forward(net, np.zeros(4), -0.5)
        with pytest.raises(ValueError):
            forward(net, np.zeros(4), net.horizon + 0.1)

    def test_composition_order_flag(self):
        up_first = build_time_symp_net(
            half_dim=1, horizon=1.0, num_pairs=2, width=3, seed=30, time_scale=0.4, up_first=True
        )
        low_first = build_time_symp_net(
            half_dim=1, horizon=1.0, num_pairs=2, width=3, seed=30, time_scale=0.4, up_first=False
        )
        assert up_first.kinds == ("up", "low", "up", "low")
        assert low_first.kinds == ("low", "up", "low", "up")
        z = np.array([0.4, -0.3])
        a = np.asarray(forward(up_first, z, 0.5))
        b = np.asarray(forward(low_first, z, 0.5))
        assert not np.allclose(a, b)  # order matters for identical parameters

    def test_variant_guards(self):
        bvp_net = random_net(seed=8, bvp=True)
        plain = random_net(seed=8, bvp=False)
        with pytest.raises(ValueError):
            tl_forward(bvp_net, np.zeros(4), 0.1)
        with pytest.raises(ValueError):
            bvp_forward(plain, np.zeros(4), 0.1)


class TestBoundaryPreservation:
    def test_state_half_bitwise_at_endpoints(self):
        net = random_net(seed=9, n=3, horizon=1.7)
        rng = np.random.default_rng(10)
        for _ in range(10):
            z = rng.normal(size=6)
            for t in (0.0, net.horizon):
                out = np.asarray(bvp_forward(net, z, t))
                assert np.array_equal(out[:3], z[:3])

    def test_midpoint_scale(self):
        # at t = T/2 the state update carries the factor T^2/4
        horizon = 2.0
        c = 0.37
        net = one_layer_net(
            "up", [[1.0]], [0.5], constant_time_net([c]), n=1, horizon=horizon, bvp=True
        )
        x, p = 0.4, -1.2
        out = np.asarray(bvp_forward(net, np.array([x, p]), horizon / 2))
        expected_x = x + (horizon**2 / 4) * c * (p + 0.5)
        np.testing.assert_allclose(out, [expected_x, p], atol=1e-14)

    def test_interior_time_changes_state(self):
        net = random_net(seed=11)
        z = np.arange(4.0)
        out = np.asarray(bvp_forward(net, z, 0.4 * net.horizon))
        assert not np.allclose(out[:2], z[:2])


class TestJacobianVp:
    def test_identity_net(self):
        net = random_net(seed=12, scale=0.0)
        v = np.array([1.0, -2.0, 0.5, 3.0])
        np.testing.assert_array_equal(np.asarray(jacobian_vp(net, np.zeros(4), 0.3, v)), v)

    def test_single_low_layer_block_formula(self):
        k = np.array([[1.0, 2.0], [0.0, -1.0], [0.5, 0.5]])
        a = np.array([0.3, -0.7, 1.1])
        net = one_layer_net("low", k, np.zeros(3), constant_time_net(a), n=2, bvp=False)
        block = k.T @ np.diag(a) @ k
        v = np.array([0.2, -0.4, 1.0, 0.3])
        expected = v + np.concatenate([np.zeros(2), block @ v[:2]])
        np.testing.assert_allclose(
            np.asarray(jacobian_vp(net, np.zeros(4), 0.9, v)), expected, atol=1e-14
        )

    def test_matches_finite_differences(self):
        net = random_net(seed=13)
        rng = np.random.default_rng(14)
        t = 0.6
        for _ in range(10):
            z = rng.normal(size=4)
            v = rng.normal(size=4)
            step = 1e-5
            hi = np.asarray(forward(net, z + step * v, t))
            lo = np.asarray(forward(net, z - step * v, t))
            fd = (hi - lo) / (2 * step)
            jv = np.asarray(jacobian_vp(net, z, t, v))
            np.testing.assert_allclose(jv, fd, rtol=1e-6, atol=1e-8)

    def test_matches_assembled_jacobian(self):
        net = random_net(seed=15, n=3, num_pairs=3)
        rng = np.random.default_rng(16)
        t = 1.1
        jac = np.asarray(phase_jacobian(net, t))
        for _ in range(5):
            v = rng.normal(size=6)
            np.testing.assert_allclose(
                np.asarray(jacobian_vp(net, np.zeros(6), t, v)), jac @ v, atol=1e-12
            )


class TestTimeDerivative:
    def test_zero_time_nets(self):
        net = random_net(seed=17, scale=0.0)
        out = np.asarray(time_derivative(net, np.array([1.0, 2.0, 3.0, 4.0]), 0.8))
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_matches_finite_differences(self):
        for bvp in (True, False):
            net = random_net(seed=18, bvp=bvp)
            rng = np.random.default_rng(19)
            for _ in range(10):
                z = rng.normal(size=4)
                t = rng.uniform(0.2, net.horizon - 0.2)
                step = 1e-6
                hi = np.asarray(forward(net, z, t + step))
                lo = np.asarray(forward(net, z, t - step))
                fd = (hi - lo) / (2 * step)
                td = np.asarray(time_derivative(net, z, t))
                np.testing.assert_allclose(td, fd, rtol=1e-6, atol=1e-7)

    def test_boundary_term_at_zero(self):
        # single state-update layer at t=0: only the (T-2t) a(t) term survives
        horizon = 2.0
        k = np.array([[1.0, -0.5], [0.3, 0.8]])
        bias = np.array([0.1, -0.2])
        slopes = np.array([0.7, -0.4])
        net = one_layer_net("up", k, bias, linear_time_net(slopes), n=2, horizon=horizon)
        z = np.array([0.5, -0.1, 0.9, 0.4])
        td = np.asarray(time_derivative(net, z, 0.0))
        a0 = np.zeros(2)  # a(0) = 0 for the linear net, slope contribution killed by t(T-t)=0
        expected_x = k.T @ ((horizon * a0) * (k @ z[2:] + bias))
        np.testing.assert_allclose(td, np.concatenate([expected_x, np.zeros(2)]), atol=1e-14)

        # with a constant a(t)=c the t=0 rate is exactly K^T(T c * (K p + b))
        c = np.array([0.7, -0.4])
        net2 = one_layer_net("up", k, bias, constant_time_net(c), n=2, horizon=horizon)
        td2 = np.asarray(time_derivative(net2, z, 0.0))
        expected2 = k.T @ ((horizon * c) * (k @ z[2:] + bias))
        np.testing.assert_allclose(td2[:2], expected2, atol=1e-14)
        np.testing.assert_array_equal(td2[2:], np.zeros(2))


class TestSymplecticity:
    def test_identity_net(self):
        net = random_net(seed=20, scale=0.0)
        assert symplecticity_defect(net, np.zeros(4), 0.5) == 0.0

    @pytest.mark.parametrize("num_pairs", [1, 2, 5])
    @pytest.mark.parametrize("width", [4, 16])
    def test_random_nets(self, num_pairs, width):
        rng = np.random.default_rng(100 * num_pairs + width)
        for rep in range(5):
            net = random_net(
                seed=int(rng.integers(1 << 30)), n=3, num_pairs=num_pairs, width=width
            )
            for _ in range(10):
                z = rng.normal(size=6)
                t = rng.uniform(0, net.horizon)
                assert symplecticity_defect(net, z, t) <= 1e-10

    def test_corrupted_layer_detected(self):
        # a low block assembled from two different K matrices is not a shear
        rng = np.random.default_rng(21)
        k1 = rng.normal(size=(4, 2))
        k2 = k1 + rng.normal(size=(4, 2))
        block = k1.T @ np.diag(rng.normal(size=4)) @ k2
        jac = np.eye(4)
        jac[2:, :2] = block
        assert jacobian_symplectic_defect(jac) > 0.1


class TestParamGradient:
    def loss_fn(self, net, z, t):
        def fn(params):
            out = forward(net.with_params(params), z, t)
            return 0.5 * (out @ out)

        return fn

    def fd_param_grad(self, net, loss, step=1e-6):
        flat, treedef = jax.tree_util.tree_flatten(net.params)
        grads = []
        for idx, leaf in enumerate(flat):
            leaf = np.asarray(leaf, dtype=float)
            g = np.zeros_like(leaf)
            it = np.nditer(leaf, flags=["multi_index"])
            while not it.finished:
                m = it.multi_index
                hi = [np.array(l, dtype=float, copy=True) for l in flat]
                lo = [np.array(l, dtype=float, copy=True) for l in flat]
                hi[idx][m] += step
                lo[idx][m] -= step
                g[m] = (
                    loss(jax.tree_util.tree_unflatten(treedef, hi))
                    - loss(jax.tree_util.tree_unflatten(treedef, lo))
                ) / (2 * step)
                it.iternext()
            grads.append(g)
        return jax.tree_util.tree_unflatten(treedef, grads)

    def test_single_layer_matches_fd(self):
        net = one_layer_net(
            "low", [[1.2, -0.3]], [0.4], constant_time_net([0.8]), n=2, bvp=False
        )
        z = np.array([0.3, -0.7, 0.2, 0.9])
        loss = self.loss_fn(net, z, 1.0)
        value, grads = param_gradient(net, loss)
        assert value == pytest.approx(float(loss(net.params)), rel=1e-12)
        fd = self.fd_param_grad(net, lambda p: float(loss(p)))
        for got, want in zip(jax.tree_util.tree_leaves(grads), jax.tree_util.tree_leaves(fd)):
            np.testing.assert_allclose(np.asarray(got), want, rtol=1e-4, atol=1e-8)

    def test_unused_parameter_gets_zero(self):
        # bias of the time net's hidden layer is unused when the final layer is 0
        net = random_net(seed=22, scale=0.0)
        loss = self.loss_fn(net, np.array([0.1, 0.2, 0.3, 0.4]), 0.5)
        _, grads = param_gradient(net, loss)
        hidden_bias_grad = np.asarray(grads[0]["time"]["b"][0])
        np.testing.assert_allclose(hidden_bias_grad, np.zeros_like(hidden_bias_grad), atol=1e-14)

    def test_small_random_net_full_fd_sweep(self):
        net = build_time_symp_net(
            half_dim=1,
            horizon=1.5,
            num_pairs=1,
            width=2,
            sublayers=1,
            subwidth=3,
            seed=23,
            time_scale=0.4,
        )
        z = np.array([0.6, -0.2])
        loss = self.loss_fn(net, z, 0.7)
        _, grads = param_gradient(net, loss)
        fd = self.fd_param_grad(net, lambda p: float(loss(p)))
        for got, want in zip(jax.tree_util.tree_leaves(grads), jax.tree_util.tree_leaves(fd)):
            np.testing.assert_allclose(np.asarray(got), want, rtol=1e-4, atol=1e-7)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = random_net(seed=24, n=3, num_pairs=2, width=5)
        path = tmp_path / "net.npz"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        assert loaded.half_dim == net.half_dim
        assert loaded.horizon == net.horizon
        assert loaded.kinds == net.kinds
        assert loaded.boundary_preserving == net.boundary_preserving
        for a, b in zip(
            jax.tree_util.tree_leaves(net.params), jax.tree_util.tree_leaves(loaded.params)
        ):
            assert np.array_equal(np.asarray(a), np.asarray(b))

    def test_loaded_net_evaluates_identically(self, tmp_path):
        net = random_net(seed=25)
        path = tmp_path / "net.npz"
        save_checkpoint(net, path)
        loaded = load_checkpoint(path)
        z = np.array([0.1, 0.2, 0.3, 0.4])
        for t in (0.0, 0.77, net.horizon):
            assert np.array_equal(
                np.asarray(forward(net, z, t)), np.asarray(forward(loaded, z, t))
            )


class TestPhasePoint:
    def test_vec_round_trip(self):
        z = np.array([1.0, 2.0, 3.0, 4.0])
        pp = PhasePoint.from_vec(z)
        np.testing.assert_array_equal(pp.x, [1.0, 2.0])
        np.testing.assert_array_equal(pp.p, [3.0, 4.0])
        np.testing.assert_array_equal(pp.vec, z)

    def test_forward_accepts_phase_point(self):
        net = random_net(seed=26)
        z = np.array([0.5, -0.5, 0.25, 0.75])
        out_vec = np.asarray(forward(net, z, 0.3))
        out_pp = np.asarray(forward(net, PhasePoint.from_vec(z), 0.3))
        np.testing.assert_array_equal(out_vec, out_pp)
