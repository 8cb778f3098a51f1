import numpy as np
import pytest

from hypercd.errors import DimensionError, ParameterError, TrainingError
from hypercd.model import (
    LabelMask,
    TrainConfig,
    backward,
    conv_layer,
    focal_loss,
    forward,
    init_model,
    load_checkpoint,
    predict,
    sample_labels,
    save_checkpoint,
    train,
    weight_penalty,
)

from .instances import random_graph


def _random_setup(seed, d=4, hidden=4, dropout=0.0):
    rng = np.random.default_rng(seed)
    _, _, nf, hg, op = random_graph(rng, 7, 7, d=d)
    x = nf.matrix
    model = init_model(d, hidden=hidden, dropout_rate=dropout, seed=seed)
    truth = rng.integers(0, 2, size=op.n).astype(np.int8)
    truth[0], truth[-1] = 0, 1  # guarantee both classes
    mask = LabelMask(truth.copy())
    return op, x, model, mask, hg


def _loss_value(model, op, x, mask, cfg):
    cache = forward(model, op, x, training=False)
    return focal_loss(cache.probs, mask, cfg.alpha, cfg.gamma) + weight_penalty(
        model, cfg.weight_decay
    )


def _numeric_grads(model, op, x, mask, cfg, eps=1e-5):
    grads = []
    for layer in model.layers:
        g = np.zeros_like(layer.theta)
        it = np.nditer(layer.theta, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = layer.theta[idx]
            layer.theta[idx] = orig + eps
            lp = _loss_value(model, op, x, mask, cfg)
            layer.theta[idx] = orig - eps
            lm = _loss_value(model, op, x, mask, cfg)
            layer.theta[idx] = orig
            g[idx] = (lp - lm) / (2 * eps)
        grads.append(g)
    return grads


def _max_rel_err(analytic, numeric):
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
        worst = max(worst, float((np.abs(a - b) / denom).max()))
    return worst


# ---------------------------------------------------------------------------
# conv_layer / forward
# ---------------------------------------------------------------------------


def test_conv_layer_preserves_degree_eigenvector():
    rng = np.random.default_rng(0)
    _, _, _, hg, op = random_graph(rng)
    x = np.sqrt(hg.vertex_degrees)[:, None]
    out = conv_layer(op, x, np.array([[1.0]]), "identity")
    np.testing.assert_allclose(out, x, atol=1e-10)


def test_conv_layer_zero_input():
    rng = np.random.default_rng(1)
    _, _, _, _, op = random_graph(rng)
    out = conv_layer(op, np.zeros((op.n, 3)), np.ones((3, 2)), "relu")
    np.testing.assert_array_equal(out, 0.0)


def test_conv_layer_dimension_mismatch():
    rng = np.random.default_rng(2)
    _, _, _, _, op = random_graph(rng)
    with pytest.raises(DimensionError):
        conv_layer(op, np.zeros((op.n, 3)), np.ones((4, 2)), "relu")


def test_conv_matches_per_node_expansion():
    # entrywise form of the normalized node-edge-node aggregation
    rng = np.random.default_rng(3)
    _, _, nf, hg, op = random_graph(rng, 8, 8, d=3)
    theta = rng.standard_normal((3, 2))
    fast = conv_layer(op, nf.matrix, theta, "identity")
    h = hg.incidence.toarray()
    w, d, delta = hg.weights, hg.vertex_degrees, hg.edge_degrees
    xt = nf.matrix @ theta
    slow = np.zeros_like(fast)
    n = op.n
    for i in range(n):
        for j in range(n):
            pij = sum(
                h[i, k] * h[j, k] * w[k] / delta[k] for k in range(n)
            ) / np.sqrt(d[i] * d[j])
            slow[i] += pij * xt[j]
    np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_forward_zero_parameters_gives_half():
    op_setup = _random_setup(4)
    op, x, model, _, _ = op_setup
    for layer in model.layers:
        layer.theta[:] = 0.0
    cache = forward(model, op, x)
    np.testing.assert_allclose(cache.probs, 0.5)


def test_forward_dropout_zero_equals_inference():
    op, x, model, _, _ = _random_setup(5, dropout=0.0)
    rng = np.random.default_rng(0)
    a = forward(model, op, x, training=True, rng=rng).probs
    b = forward(model, op, x, training=False).probs
    np.testing.assert_array_equal(a, b)


def test_forward_dropout_determinism():
    op, x, model, _, _ = _random_setup(6, dropout=0.5)
    p1 = forward(model, op, x, training=True, rng=np.random.default_rng(42)).probs
    p2 = forward(model, op, x, training=True, rng=np.random.default_rng(42)).probs
    p3 = forward(model, op, x, training=True, rng=np.random.default_rng(43)).probs
    np.testing.assert_array_equal(p1, p2)
    assert not np.array_equal(p1, p3)


# ---------------------------------------------------------------------------
# focal loss
# ---------------------------------------------------------------------------


def test_focal_loss_hand_value():
    probs = np.array([0.7])
    mask = LabelMask(np.array([1]))
    loss = focal_loss(probs, mask, alpha=0.2, gamma=2.0)
    expected = -0.2 * 0.3**2 * np.log(0.7)
    assert abs(loss - expected) < 1e-12
    assert abs(loss - 0.006420) < 5e-7


def test_focal_reduces_to_cross_entropy():
    grid = np.concatenate(
        [np.array([1e-6, 1 - 1e-6]), np.linspace(1e-3, 1 - 1e-3, 101)]
    )
    for y in (0, 1):
        mask = LabelMask(np.full(grid.shape, y, dtype=np.int8))
        focal = focal_loss(grid, mask, alpha=1.0, gamma=0.0)
        pt = np.clip(np.where(y == 1, grid, 1 - grid), 1e-7, 1 - 1e-7)
        ce = float(-np.log(pt).sum())
        assert abs(focal - ce) < 1e-12


def test_focal_perfect_prediction_vanishes():
    mask = LabelMask(np.array([1, 0]))
    loss = focal_loss(np.array([1.0 - 1e-12, 1e-12]), mask, alpha=0.2, gamma=2.0)
    assert loss < 1e-20


def test_focal_loss_requires_labels():
    with pytest.raises(TrainingError):
        focal_loss(np.array([0.5]), LabelMask(np.array([-1])))


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def test_weight_decay_gradient_is_lambda_theta():
    op, x, model, mask, _ = _random_setup(7)
    cfg0 = TrainConfig(weight_decay=0.0)
    cfg1 = TrainConfig(weight_decay=0.25)
    cache = forward(model, op, x)
    g0 = backward(cache, mask, cfg0)
    g1 = backward(cache, mask, cfg1)
    for layer, a, b in zip(model.layers, g0, g1):
        np.testing.assert_allclose(b - a, 0.25 * layer.theta, atol=1e-12)


def test_loss_blind_outside_two_hop_neighborhood():
    rng = np.random.default_rng(0)
    _, _, nf, _, op = random_graph(rng, 14, 14, d=4)
    x = nf.matrix
    model = init_model(4, hidden=4, dropout_rate=0.0, seed=0)
    # label exactly one node
    labels = np.full(op.n, -1, dtype=np.int8)
    labeled = 0
    labels[labeled] = 1
    mask = LabelMask(labels)
    cfg = TrainConfig(weight_decay=0.0)
    base = _loss_value(model, op, x, mask, cfg)
    # nodes within two hops of the labeled node through P
    p = op.p.toarray()
    reach = (np.abs(p) > 0).astype(float)
    two_hop = (reach + reach @ reach)[labeled] > 0
    outside = np.nonzero(~two_hop)[0]
    assert outside.size > 0
    x2 = x.copy()
    x2[outside] += 37.0
    assert _loss_value(model, op, x2, mask, cfg) == base


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    op, x, model, mask, _ = _random_setup(seed, d=4, hidden=4)
    assert op.n <= 32
    cfg = TrainConfig(weight_decay=0.05)
    cache = forward(model, op, x)
    analytic = backward(cache, mask, cfg)
    numeric = _numeric_grads(model, op, x, mask, cfg)
    assert _max_rel_err(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _two_node_instance():
    from scipy import sparse

    from hypercd.hypergraph import PropagationOperator, degrees, propagation_operator

    h = sparse.csr_matrix(np.eye(2))
    w = np.ones(2)
    d, delta = degrees(h, w)
    op = propagation_operator(h, w, d, delta)
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    mask = LabelMask(np.array([1, 0]))
    return op, x, mask


def test_train_converges_on_separable_pair():
    op, x, mask = _two_node_instance()
    model = init_model(2, hidden=8, dropout_rate=0.0, seed=0)
    cfg = TrainConfig(epochs=400, weight_decay=0.0, seed=0)
    model, history = train(model, op, x, mask, cfg)
    assert len(history) == 400
    assert history[-1] < 1e-2
    assert history[-1] < history[0]


def test_train_zero_learning_rate_is_inert():
    op, x, mask = _two_node_instance()
    model = init_model(2, hidden=4, dropout_rate=0.0, seed=1)
    before = [l.theta.copy() for l in model.layers]
    cfg = TrainConfig(epochs=10, learning_rate=0.0, seed=0)
    model, history = train(model, op, x, mask, cfg)
    for prev, layer in zip(before, model.layers):
        np.testing.assert_array_equal(prev, layer.theta)
    assert len(set(history)) == 1


def test_train_determinism():
    op, x, model, mask, _ = _random_setup(9, dropout=0.5)
    cfg = TrainConfig(epochs=25, seed=7)
    m1 = init_model(4, hidden=4, dropout_rate=0.5, seed=3)
    m2 = init_model(4, hidden=4, dropout_rate=0.5, seed=3)
    _, h1 = train(m1, op, x, mask, cfg)
    _, h2 = train(m2, op, x, mask, cfg)
    assert h1 == h2
    for a, b in zip(m1.layers, m2.layers):
        np.testing.assert_array_equal(a.theta, b.theta)


def test_train_divergence_reports_epoch():
    op, x, mask = _two_node_instance()
    model = init_model(2, hidden=4, dropout_rate=0.0, seed=0)
    cfg = TrainConfig(
        epochs=200, learning_rate=1e150, weight_decay=1e3,
        optimizer="sgd_momentum", seed=0,
    )
    with pytest.raises(TrainingError, match="epoch"):
        train(model, op, x, mask, cfg)


def test_train_requires_both_classes():
    op, x, mask = _two_node_instance()
    model = init_model(2, hidden=4, dropout_rate=0.0, seed=0)
    with pytest.raises(TrainingError):
        train(model, op, x, LabelMask(np.array([1, 1])), TrainConfig(epochs=1))


def test_sgd_momentum_also_converges():
    op, x, mask = _two_node_instance()
    model = init_model(2, hidden=4, dropout_rate=0.0, seed=0)
    cfg = TrainConfig(
        epochs=400, optimizer="sgd_momentum", learning_rate=0.05, weight_decay=0.0
    )
    model, history = train(model, op, x, mask, cfg)
    assert history[-1] < history[0]


# ---------------------------------------------------------------------------
# sample_labels
# ---------------------------------------------------------------------------


def test_sample_ratio_one_labels_everything():
    ref = np.array([0, 1, 1, 0, 1], dtype=np.int8)
    mask = sample_labels(5, 1.0, seed=0, reference=ref)
    np.testing.assert_array_equal(mask.labels, ref)


def test_sample_five_percent_of_1000():
    rng = np.random.default_rng(0)
    ref = rng.integers(0, 2, size=1000).astype(np.int8)
    mask = sample_labels(1000, 0.05, seed=1, reference=ref)
    assert mask.n_labeled == 50
    idx = mask.labeled_idx
    np.testing.assert_array_equal(mask.labels[idx], ref[idx])


def test_sample_determinism():
    ref = np.random.default_rng(0).integers(0, 2, size=100).astype(np.int8)
    a = sample_labels(100, 0.1, seed=5, reference=ref)
    b = sample_labels(100, 0.1, seed=5, reference=ref)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_sample_single_class_reference_errors():
    ref = np.zeros(50, dtype=np.int8)
    with pytest.raises(TrainingError):
        sample_labels(50, 0.1, seed=0, reference=ref)


def test_sample_always_contains_both_classes():
    ref = np.zeros(100, dtype=np.int8)
    ref[3] = 1  # a single changed node: redraws must find it
    mask = sample_labels(100, 0.05, seed=2, reference=ref)
    labeled = mask.labels[mask.labeled_idx]
    assert (labeled == 1).sum() >= 1 and (labeled == 0).sum() >= 1


def test_sample_stratified():
    rng = np.random.default_rng(1)
    ref = (rng.random(200) < 0.2).astype(np.int8)
    mask = sample_labels(200, 0.1, seed=3, reference=ref, stratified=True)
    labeled = mask.labels[mask.labeled_idx]
    assert mask.n_labeled == 20
    assert (labeled == 1).sum() >= 1 and (labeled == 0).sum() >= 1


def test_sample_ratio_bounds():
    with pytest.raises(ParameterError):
        sample_labels(10, 0.0, seed=0, reference=np.zeros(10, dtype=np.int8))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    model = init_model(6, hidden=5, seed=4)
    path = tmp_path / "model.dnhm"
    save_checkpoint(model, str(path))
    back = load_checkpoint(str(path))
    assert back.num_layers == model.num_layers
    for a, b in zip(model.layers, back.layers):
        np.testing.assert_array_equal(a.theta, b.theta)
        assert a.activation == b.activation


def test_checkpoint_bitwise_stable(tmp_path):
    model = init_model(3, hidden=2, seed=8)
    p1, p2 = tmp_path / "a.dnhm", tmp_path / "b.dnhm"
    save_checkpoint(model, str(p1))
    save_checkpoint(load_checkpoint(str(p1)), str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_predict_matches_inference_forward():
    op, x, model, _, _ = _random_setup(10)
    np.testing.assert_array_equal(
        predict(model, op, x), forward(model, op, x).probs
    )
