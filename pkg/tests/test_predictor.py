import numpy as np
import pytest

from subsketch.errors import ConfigError, DimensionError, TrainingDivergedError
from subsketch.fixtures import erdos_renyi
from subsketch.predictor import (
    Adam,
    Predictor,
    PredictorConfig,
    TrainingData,
    bce_with_logits,
    gradient_check,
    sigmoid,
    train,
)
from subsketch.structure import exact_counts_batch, swap_rows


def make(hidden=(8, 4), node=True, sf=True, node_dim=6, sf_dim=8, seed=0, **kw):
    cfg = PredictorConfig(hidden_dims=hidden, use_node_features=node, use_structure_features=sf, seed=seed, **kw)
    return Predictor.init(cfg, node_dim, sf_dim)


def test_config_validation():
    with pytest.raises(ConfigError):
        PredictorConfig(use_node_features=False, use_structure_features=False)
    with pytest.raises(ConfigError):
        PredictorConfig(hidden_dims=(0,))
    with pytest.raises(ConfigError):
        PredictorConfig(dropout=1.0)


def test_zero_input_gives_zero_logit():
    m = make()
    assert np.all(m.forward(np.zeros((3, m.input_dim), np.float32))[0] == 0)


def test_input_width_per_ablation():
    assert make(node=True, sf=True).input_dim == 14
    assert make(node=True, sf=False).input_dim == 6
    assert make(node=False, sf=True).input_dim == 8


def test_assemble_checks_dims():
    m = make()
    with pytest.raises(DimensionError):
        m.assemble(np.ones((2, 5)), np.ones((2, 5)), np.ones((2, 8)))
    with pytest.raises(DimensionError):
        m.forward(np.ones((2, 3), np.float32))


def test_endpoint_swap_with_symmetric_structure_rows():
    rng = np.random.default_rng(0)
    m = make(sf_dim=8)
    zu, zv = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    a = rng.normal(size=(5, 2, 2))
    a = a + a.transpose(0, 2, 1)
    b = rng.normal(size=(5, 2))
    sf = np.concatenate([a.reshape(5, 4), b, b], axis=1)
    x1 = m.assemble(zu, zv, sf)
    x2 = m.assemble(zv, zu, swap_rows(sf, 2))
    assert np.array_equal(m.forward(x1)[0], m.forward(x2)[0])


@pytest.mark.parametrize("hidden", [(), (3,), (4, 5), (6, 3, 2), (16, 16)])
@pytest.mark.parametrize("flags", [(True, True), (True, False), (False, True)])
def test_gradients_match_finite_differences(hidden, flags):
    rng = np.random.default_rng(len(hidden))
    m = make(hidden=hidden, node=flags[0], sf=flags[1], node_dim=4, sf_dim=3)
    # a generic point: zero biases put dead units exactly on the ReLU kink
    for b in m.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(10, m.input_dim))
    y = (rng.random(10) < 0.5).astype(np.float64)
    assert gradient_check(m, x, y) <= 1e-4


def test_dropout_gradient_with_fixed_masks():
    rng = np.random.default_rng(1)
    m = make(hidden=(5, 4), dropout=0.5).astype(np.float64)
    x = rng.normal(size=(7, m.input_dim))
    y = (rng.random(7) < 0.5).astype(np.float64)
    _, cache = m.forward(x, train=True, rng=np.random.default_rng(2))
    masks = cache[1]
    logits, cache = m.forward(x, train=True, masks=masks)
    grads = m.backward(cache, bce_with_logits(logits, y)[1])
    w = m.weights[0]
    i, j, eps = 2, 1, 1e-6
    w[i, j] += eps
    lp = bce_with_logits(m.forward(x, train=True, masks=masks)[0], y)[0]
    w[i, j] -= 2 * eps
    lm = bce_with_logits(m.forward(x, train=True, masks=masks)[0], y)[0]
    w[i, j] += eps
    assert grads[0][i, j] == pytest.approx((lp - lm) / (2 * eps), rel=1e-4, abs=1e-9)


def test_bce_reference():
    x = np.array([-30.0, -1.0, 0.0, 2.0, 40.0])
    y = np.array([0.0, 1.0, 1.0, 0.0, 1.0])
    loss, grad = bce_with_logits(x, y)
    p = 1 / (1 + np.exp(-x))
    ref = -(y * np.log(np.clip(p, 1e-300, 1)) + (1 - y) * np.log(np.clip(1 - p, 1e-300, 1)))
    assert loss == pytest.approx(ref.mean(), rel=1e-9)
    assert np.allclose(grad, (p - y) / 5)


def test_adam_first_step():
    p = [np.array([1.0, -2.0])]
    opt = Adam(p, lr=0.1)
    opt.step(p, [np.array([0.5, -3.0])])
    assert np.allclose(p[0], [0.9, -1.9])  # first Adam step moves by lr * sign


# ---------------------------------------------------------------- training


def toy_data(node_dim=4):
    z = np.array([[1.0, 0.5, -0.5, 2.0], [0.5, 1.0, 1.0, -1.0]], dtype=np.float32)
    pos = np.array([[0, 1]])
    neg = np.array([[0, 0]])

    def inputs(pairs):
        return z[pairs[:, 0]], z[pairs[:, 1]], None

    return TrainingData(
        train_pos=pos,
        train_inputs=inputs,
        sample_negatives=lambda n, rng: np.repeat(neg, n, axis=0),
        valid_pos_inputs=inputs(pos),
        valid_neg_inputs=inputs(neg),
        node_dim=node_dim,
        sf_dim=0,
    )


def test_toy_loss_decreases():
    cfg = PredictorConfig(hidden_dims=(16,), dropout=0.0, learning_rate=1e-3, max_epochs=5, patience=10,
                          use_structure_features=False, eval_k=1)
    _, hist = train(toy_data(), cfg)
    losses = [h.loss for h in hist]
    assert len(losses) == 5 and all(b < a for a, b in zip(losses, losses[1:]))


def sf_only_data(seed=0):
    g = erdos_renyi(300, 6.0, seed=seed)
    rng = np.random.default_rng(seed)
    pairs = rng.choice(300, size=(4000, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    sf = exact_counts_batch(g, pairs, 2).astype(np.float32)
    label = sf[:, 0] > 0
    pos, neg = pairs[label], pairs[~label]
    table = {tuple(p): r for p, r in zip(pairs, sf)}

    def inputs(p):
        return None, None, np.stack([table[tuple(x)] for x in p])

    def negatives(n, r):
        return neg[r.integers(len(neg), size=n)]

    return TrainingData(pos, inputs, negatives, inputs(pos), inputs(neg), 0, 8), pos, neg, inputs


def test_sf_only_separable_reaches_full_train_accuracy():
    # validation is the full training set at K=1: a perfect score means every
    # positive outranks every negative, i.e. 100% accuracy at some threshold
    data, pos, neg, inputs = sf_only_data()
    cfg = PredictorConfig(hidden_dims=(32,), dropout=0.0, learning_rate=1e-2, batch_size=64, max_epochs=60,
                          patience=60, use_node_features=False, eval_k=1)
    model, hist = train(data, cfg)
    assert max(h.val_metric for h in hist) == 1.0
    lp = model.logits(model.assemble(*inputs(pos)))
    ln = model.logits(model.assemble(*inputs(neg)))
    assert lp.min() > ln.max()


def test_training_is_deterministic():
    data, *_ = sf_only_data(1)
    cfg = PredictorConfig(hidden_dims=(8,), max_epochs=3, use_node_features=False, eval_k=20, seed=4)
    a, ha = train(data, cfg)
    b, hb = train(data, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))
    assert [h.loss for h in ha] == [h.loss for h in hb]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch_and_batch():
    data = toy_data()
    bad = lambda p: (np.full((len(p), 4), np.inf, np.float32), np.full((len(p), 4), np.inf, np.float32), None)
    data.train_inputs = bad
    data.valid_pos_inputs = bad(np.zeros((1, 2), int))
    data.valid_neg_inputs = bad(np.zeros((1, 2), int))
    cfg = PredictorConfig(hidden_dims=(4,), use_structure_features=False, eval_k=1, max_epochs=2)
    with pytest.raises(TrainingDivergedError) as exc:
        train(data, cfg)
    assert exc.value.epoch == 1 and exc.value.batch == 0


def test_checkpoint_round_trip(tmp_path):
    data, pos, _, inputs = sf_only_data(2)
    cfg = PredictorConfig(hidden_dims=(8, 4), max_epochs=2, use_node_features=False, eval_k=20)
    model, _ = train(data, cfg)
    model.save(tmp_path / "c.bin", {"note": "x"})
    back, header = Predictor.load(tmp_path / "c.bin")
    assert header["note"] == "x" and header["seed"] == 0
    x = inputs(pos)
    assert np.array_equal(model.logits(model.assemble(*x)), back.logits(back.assemble(*x)))
    assert np.array_equal(model.sf_mean, back.sf_mean) and np.array_equal(model.sf_std, back.sf_std)


def test_sigmoid_range():
    s = sigmoid(np.linspace(-15, 15, 101))
    assert np.all((s > 0) & (s < 1)) and np.all(np.diff(s) > 0)
