import numpy as np
import pytest

from kanppo.envs import MUJOCO_DIMS
from kanppo.networks import (
    ARCHS,
    KanLayer,
    MlpLayer,
    NetworkSpec,
    StaleCacheError,
    Stack,
    build_network,
    count_params,
    edge_importance,
    load_checkpoint,
    prune,
    save_checkpoint,
)
from kanppo.nn_core import AdamState, ParamStore, adam_step, finite_diff_check, make_rng, zero_grads
from kanppo.spline import KnotGrid, eval_spline


def bound(layer, seed=0):
    store = ParamStore()
    layer.allocate(store)
    store.finalize()
    layer.bind(store)
    layer.init(make_rng(seed))
    return layer, store


def brute_force(layer, x):
    """Double loop over edges, one scalar spline at a time."""
    c = layer.effective_coeffs()
    y = np.zeros(layer.n_out)
    for j in range(layer.n_out):
        for i in range(layer.n_in):
            y[j] += eval_spline(c[j, i], layer.grid, x[i])
    return y


def test_kan_forward_constants():
    layer, _ = bound(KanLayer("k", 3, 2, KnotGrid()))
    layer.coeffs[...] = 0.0
    y, _ = layer.forward(np.array([0.1, -0.4, 0.9]))
    assert np.all(y == 0.0)
    layer.coeffs[...] = 0.25
    y, _ = layer.forward(np.array([0.1, -0.4, 0.9]))
    np.testing.assert_allclose(y, 3 * 0.25, rtol=1e-14)


def test_kan_forward_brute_force(rng):
    layer, _ = bound(KanLayer("k", 5, 4, KnotGrid()))
    layer.coeffs[...] = rng.normal(size=layer.shape)
    for _ in range(20):
        x = rng.uniform(-1.2, 1.2, 5)
        y, _ = layer.forward(x)
        assert np.max(np.abs(y - brute_force(layer, x))) <= 1e-12
    X = rng.uniform(-1, 1, (7, 5))
    Y, _ = layer.forward(X)
    np.testing.assert_allclose(Y, np.stack([brute_force(layer, x) for x in X]), atol=1e-12)


def test_kan_forward_dimension_mismatch():
    layer, _ = bound(KanLayer("k", 3, 2, KnotGrid()))
    with pytest.raises(ValueError):
        layer.forward(np.zeros(4))


def test_kan_backward_examples():
    layer, store = bound(KanLayer("k", 1, 1, KnotGrid()))
    x = np.array([[0.3]])
    y, cache = layer.forward(x)
    dx = layer.backward(cache, np.array([[1.0]]))
    from kanppo.spline import basis_values

    np.testing.assert_allclose(layer.dcoeffs[0, 0], basis_values(layer.grid, 0.3), atol=1e-15)
    zero_grads(store)
    y, cache = layer.forward(x)
    dx = layer.backward(cache, np.zeros((1, 1)))
    assert np.all(store.grads == 0.0) and np.all(dx == 0.0)


def test_stale_cache():
    layer, store = bound(KanLayer("k", 2, 2, KnotGrid()))
    _, cache = layer.forward(np.zeros(2))
    with pytest.raises(StaleCacheError):
        layer.backward(None, np.zeros(2))
    store.grads[:] = 1e-3
    adam_step(store, AdamState.for_params(store))
    with pytest.raises(StaleCacheError):
        layer.backward(cache, np.zeros(2))
    mlp, _ = bound(MlpLayer("m", 2, 2))
    _, mcache = mlp.forward(np.zeros(2))
    with pytest.raises(StaleCacheError):
        layer.backward(mcache, np.zeros(2))


def stack_loss(stack, X, target):
    def loss(_store):
        y, caches = stack.forward(X)
        r = y - target
        # dL/dx of the first layer is not needed for parameter grads
        stack.backward(caches, r)
        return 0.5 * float(np.sum(r * r))

    return loss


@pytest.mark.parametrize("seed", range(5))
def test_kan_gradcheck(seed):
    rng = make_rng(seed)
    layers = [KanLayer("a", 3, 4, KnotGrid()), KanLayer("b", 4, 2, KnotGrid(3, 4))]
    store = ParamStore()
    for l in layers:
        l.allocate(store)
    store.finalize()
    for l in layers:
        l.bind(store)
        l.coeffs[...] = rng.normal(0, 0.3, l.shape)
    stack = Stack(layers)
    X = rng.uniform(-0.9, 0.9, (6, 3))
    assert finite_diff_check(stack_loss(stack, X, rng.normal(size=(6, 2))), store) <= 1e-5


@pytest.mark.parametrize("act", ["tanh", "identity"])
def test_mlp_gradcheck(act, rng):
    layers = [MlpLayer("a", 3, 5, act), MlpLayer("b", 5, 2, "identity")]
    store = ParamStore()
    for l in layers:
        l.allocate(store)
    store.finalize()
    for l in layers:
        l.bind(store)
        l.init(rng, gain=1.0)
        l.b[...] = rng.normal(size=l.b.shape)
    X = rng.normal(size=(6, 3))
    assert finite_diff_check(stack_loss(Stack(layers), X, rng.normal(size=(6, 2))), store) <= 1e-5


def test_mlp_examples():
    layer, _ = bound(MlpLayer("m", 3, 3, "identity"))
    layer.W[...] = np.eye(3)
    layer.b[...] = 0.0
    x = np.array([0.5, -2.0, 3.0])
    np.testing.assert_array_equal(layer.forward(x)[0], x)
    t, store = bound(MlpLayer("t", 2, 2, "tanh"))
    t.b[...] = 0.0
    y, cache = t.forward(np.zeros(2))
    assert np.all(y == 0.0)
    dx = t.backward(cache, np.ones(2))
    np.testing.assert_allclose(dx, t.W.sum(axis=0))  # tanh'(0) = 1
    with pytest.raises(ValueError):
        MlpLayer("bad", 2, 2, "sigmoid")


def test_build_network_shapes():
    net = build_network(NetworkSpec("full-kan"), 4, 1)
    assert [type(l) for l in net.actor.layers] == [KanLayer]
    assert (net.actor.layers[0].n_in, net.actor.layers[0].n_out) == (4, 1)
    assert [type(l) for l in net.critic.layers] == [KanLayer]
    net = build_network(NetworkSpec("mlp-a2c2"), 17, 6)
    assert [(l.n_in, l.n_out) for l in net.actor.layers] == [(17, 64), (64, 64), (64, 6)]
    assert [l.activation for l in net.actor.layers] == ["tanh", "tanh", "identity"]
    assert [(l.n_in, l.n_out) for l in net.critic.layers] == [(17, 64), (64, 64), (64, 1)]
    net = build_network(NetworkSpec("mlp-a1c2"), 11, 3)
    assert [(l.n_in, l.n_out) for l in net.actor.layers] == [(11, 64), (64, 3)]
    with pytest.raises(ValueError):
        NetworkSpec("resnet")
    with pytest.raises(ValueError):
        build_network(NetworkSpec(), 0, 1)


@pytest.mark.parametrize("arch", ARCHS)
def test_build_network_init(arch):
    net = build_network(NetworkSpec(arch), 6, 2, seed=3)
    assert np.all(np.isfinite(net.mean(np.zeros(6)))) and np.isfinite(net.value(np.zeros(6)))
    assert np.all(net.log_std == 0.0)
    again = build_network(NetworkSpec(arch), 6, 2, seed=3)
    assert net.params.values.tobytes() == again.params.values.tobytes()
    assert net.param_counts() == count_params(net.spec, 6, 2)


def test_mlp_init_orthogonal():
    net = build_network(NetworkSpec("mlp-a2c2"), 17, 6, seed=0)
    W = net.actor.layers[1].W
    np.testing.assert_allclose(W @ W.T, 2.0 * np.eye(64), atol=1e-10)
    out = net.actor.layers[2].W
    np.testing.assert_allclose(out @ out.T, 1e-4 * np.eye(6), atol=1e-14)


def test_kan_init_scale():
    net = build_network(NetworkSpec("full-kan"), 200, 50, seed=0)
    c = net.actor.layers[0].coeffs
    assert c.std() == pytest.approx(0.1 / np.sqrt(5), rel=0.02)


# actor counts from the parameter table: (a=2,c=2), (a=1,c=2), KAN(k=2,g=3)
TABLE = {
    "halfcheetah": (5702, 1542, 510),
    "walker2d": (5702, 1542, 510),
    "hopper": (5123, 963, 165),
    "invertedpendulum": (4545, 385, 20),
    "swimmer": (4866, 706, 80),
    "pusher": (6151, 1991, 805),
}


@pytest.mark.parametrize("env", sorted(TABLE))
def test_count_params_table(env):
    obs, act = MUJOCO_DIMS[env]
    expected = TABLE[env]
    got = tuple(count_params(NetworkSpec(a), obs, act)[0] for a in ("mlp-a2c2", "mlp-a1c2", "kan-actor"))
    assert got == expected
    assert count_params(NetworkSpec("full-kan"), obs, act) == (expected[2], obs * 5)


def test_prune_examples(rng):
    net = build_network(NetworkSpec("full-kan"), 3, 2, seed=0)
    probe = rng.normal(size=(16, 3))
    mask = prune(net, probe, 0.0)
    assert mask.edges_pruned == 0
    assert mask.params_before == mask.params_after == (30, 15)

    net.actor.layers[0].coeffs[1, 2] = 0.0
    mask = prune(net, probe, 1e-12)
    assert not mask.keep["actor.0"][1, 2] and mask.keep["actor.0"].sum() == 5
    assert mask.params_after[0] == 25


def test_prune_hand_built():
    layer, store = bound(KanLayer("k", 2, 1, KnotGrid()))
    layer.coeffs[0, 0] = 1.0
    layer.coeffs[0, 1] = 0.01

    class Net:
        actor = Stack([layer])
        critic = Stack([])

        def kan_layers(self):
            return [layer]

        def active_param_counts(self):
            return self.actor.n_active_params(), 0

    x = np.array([[0.2, -0.6]])
    full = layer.forward(x)[0]
    mask = prune(Net(), x, 0.1)
    assert mask.keep["k"].tolist() == [[True, False]]
    np.testing.assert_allclose(mask.importance["k"], [[1.0, 0.01]], rtol=1e-14)
    pruned = layer.forward(x)[0]
    assert abs(pruned[0, 0] - (full[0, 0] - 0.01)) <= 1e-12
    _, cache = layer.forward(x)
    layer.backward(cache, np.ones((1, 1)), need_dx=False)
    assert np.all(layer.dcoeffs[0, 1] == 0.0)


def test_prune_identity_random(rng):
    net = build_network(NetworkSpec("full-kan"), 5, 4, seed=1)
    probe = rng.normal(size=(32, 5))
    before = net.mean(probe)
    edge = net.actor.layers[0].edge_outputs(probe * net.actor.input_scale)
    imp = edge_importance(net, probe)["actor.0"]
    thr = np.median(imp)
    mask = prune(net, probe, thr)
    removed = (edge * ~mask.keep["actor.0"][None]).sum(axis=-1)
    assert np.max(np.abs(net.mean(probe) - (before - removed))) <= 1e-12
    assert mask.edges_pruned >= 1


def test_prune_everything_and_errors(rng):
    net = build_network(NetworkSpec("kan-actor"), 4, 2, seed=0)
    prune(net, rng.normal(size=(4, 4)), np.inf)
    assert np.all(net.mean(rng.normal(size=(3, 4))) == 0.0)
    assert net.active_param_counts()[0] == 0
    with pytest.raises(ValueError):
        prune(net, np.zeros((0, 4)), 0.1)
    with pytest.raises(ValueError):
        prune(net, np.zeros((1, 4)), -1.0)


@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_roundtrip(arch, tmp_path, rng):
    net = build_network(NetworkSpec(arch), 6, 2, seed=4, action_low=[-1, -1], action_high=[1, 1])
    net.params.values[:] += rng.normal(size=len(net.params)) * 1e-3
    if net.kan_layers():
        prune(net, rng.normal(size=(8, 6)), 0.02)
    path = tmp_path / "net.json"
    save_checkpoint(path, net, {"env": "point-reacher"})
    loaded, extra = load_checkpoint(path)
    assert extra == {"env": "point-reacher"}
    assert loaded.spec == net.spec
    assert loaded.params.values.tobytes() == net.params.values.tobytes()
    for a, b in zip(loaded.kan_layers(), net.kan_layers()):
        assert np.array_equal(a.keep, b.keep)
    x = rng.normal(size=(3, 6))
    assert np.array_equal(loaded.mean(x), net.mean(x))
    assert list(tmp_path.iterdir()) == [path]


def test_checkpoint_rejects_foreign(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        load_checkpoint(p)
