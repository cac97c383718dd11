import numpy as np
import pytest

from cost_st.errors import InvalidArgument, StateError
from cost_st.nn import (
    MLP,
    Adam,
    Checkpoint,
    EarlyStopping,
    Embedding,
    Linear,
    Module,
    Parameter,
    ResidualBlock,
    Tape,
    lr_at,
    sinusoidal_encoding,
)
from cost_st.nn import tape as T
from cost_st.nn.optim import fit_with_early_stopping
from cost_st.numerics import RngStream


def rng(i=0):
    return RngStream(11, i)


class TinyNet(Module):
    """Linear -> ReLU -> residual block -> Linear, with an embedding added after the first layer."""

    def __init__(self, n_in, d, n_out, rows, seed):
        r = RngStream(seed, 0)
        self.a = Linear(n_in, d, r)
        self.emb = Embedding(rows, d, r)
        self.block = ResidualBlock(d, r)
        self.b = Linear(d, n_out, r)
        for p in self.parameters():  # nonzero biases so they matter in the check
            p.value[...] = p.value + 0.1 * r.normal(p.value.shape)

    def __call__(self, tape, x, idx):
        h = T.relu(tape, self.a(tape, tape.constant(x)))
        h = T.add(tape, h, self.emb(tape, idx))
        return self.b(tape, self.block(tape, h))


def numpy_forward(net, x, idx):
    h = np.maximum(x @ net.a.weight.value + net.a.bias.value, 0) + net.emb.table.value[idx]
    blk = net.block
    inner = np.maximum(h @ blk.fc1.weight.value + blk.fc1.bias.value, 0)
    h = h + inner @ blk.fc2.weight.value + blk.fc2.bias.value
    return h @ net.b.weight.value + net.b.bias.value


def test_linear_identity():
    lin = Linear(3, 3, rng())
    lin.weight.value[...] = np.eye(3)
    x = np.array([[1.0, -2.0, 3.0]])
    assert np.array_equal(lin(Tape(), Tape().constant(x)).value, x)


def test_relu_values():
    out = T.relu(Tape(), Tape().constant([-1.0, 0.0, 2.0]))
    assert out.value.tolist() == [0.0, 0.0, 2.0]


def test_linear_init_bounds():
    lin = Linear(16, 8, rng())
    assert np.all(np.abs(lin.weight.value) <= 0.25)
    assert np.all(lin.bias.value == 0)


def test_forward_matches_numpy_oracle():
    net = TinyNet(5, 7, 3, 4, seed=1)
    x = RngStream(1, 9).normal((6, 5))
    idx = np.array([0, 1, 2, 3, 3, 1])
    ours = net(Tape(), x, idx).value
    assert np.max(np.abs(ours - numpy_forward(net, x, idx))) < 1e-12


@pytest.mark.parametrize("cfg", range(24))
def test_gradients_match_finite_differences(cfg):
    r = np.random.default_rng(cfg)
    n_in, d, n_out = int(r.integers(1, 5)), int(r.integers(2, 6)), int(r.integers(1, 4))
    B, rows = int(r.integers(1, 5)), int(r.integers(1, 4))
    net = TinyNet(n_in, d, n_out, rows, seed=cfg)
    x = r.normal(size=(B, n_in))
    idx = r.integers(0, rows, B)
    target = r.normal(size=(B, n_out))

    def loss_value():
        pred = numpy_forward(net, x, idx)
        return np.mean((pred - target) ** 2)

    tape = Tape()
    net.zero_grad()
    tape.backward(T.mse(tape, net(tape, x, idx), target))
    h = 1e-6
    for name, p in net.named_parameters():
        flat = p.value.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_value()
            flat[j] = orig - h
            down = loss_value()
            flat[j] = orig
            fd = (up - down) / (2 * h)
            an = p.grad.reshape(-1)[j]
            assert abs(fd - an) <= 1e-5 * max(1.0, abs(fd)), (name, j, fd, an)


def test_linear_weight_grad_is_outer_product():
    lin = Linear(3, 2, rng())
    x = np.array([[1.0, 2.0, 3.0]])
    tape = Tape()
    out = lin(tape, tape.constant(x))
    tape.backward(T.total(tape, out))
    assert np.array_equal(lin.weight.grad, np.outer(x[0], np.ones(2)))
    assert np.array_equal(lin.bias.grad, np.ones(2))


def test_gradients_accumulate_across_backward_calls():
    lin = Linear(2, 1, rng())
    x = np.array([[0.5, -1.5]])
    for _ in range(2):
        tape = Tape()
        tape.backward(T.total(tape, lin(tape, tape.constant(x))))
    assert np.allclose(lin.weight.grad[:, 0], 2 * x[0])
    lin.zero_grad()
    assert np.all(lin.weight.grad == 0)


def test_backward_without_forward_is_state_error():
    tape = Tape()
    with pytest.raises(StateError):
        tape.backward(tape.constant(1.0))
    lin = Linear(2, 1, rng())
    other = Tape()
    loss = T.total(other, lin(other, other.constant([[1.0, 1.0]])))
    with pytest.raises(StateError):
        Tape().backward(loss)


def test_backward_twice_is_state_error():
    lin = Linear(2, 1, rng())
    tape = Tape()
    loss = T.total(tape, lin(tape, tape.constant([[1.0, 1.0]])))
    tape.backward(loss)
    with pytest.raises(StateError):
        tape.backward(loss)


def test_shape_mismatch_is_invalid_argument():
    lin = Linear(3, 2, rng())
    with pytest.raises(InvalidArgument):
        lin(Tape(), Tape().constant(np.ones((1, 4))))


def test_non_recording_tape_matches():
    net = TinyNet(3, 4, 2, 2, seed=5)
    x = np.ones((2, 3))
    a = net(Tape(), x, [0, 1]).value
    b = net(Tape(record=False), x, [0, 1]).value
    assert np.array_equal(a, b)


def test_float32_tape_is_value_only():
    net = TinyNet(3, 4, 2, 2, seed=6)
    x = np.ones((2, 3))
    lo = net(Tape(record=False, dtype=np.float32), x, [0, 1]).value
    assert lo.dtype == np.float32
    assert np.allclose(lo, net(Tape(), x, [0, 1]).value, atol=1e-5)
    with pytest.raises(InvalidArgument):
        Tape(record=True, dtype=np.float32)


def test_adam_first_step_magnitude():
    p = Parameter("w", np.array([1.0, -2.0]))
    p.grad[...] = [0.3, -4.0]
    opt = Adam([p], lr=1e-3, eps=1e-8)
    opt.step()
    # bias-corrected m/sqrt(v) is sign(g) on step one
    expect = np.array([1.0, -2.0]) - 1e-3 * np.sign([0.3, -4.0]) * np.abs([0.3, -4.0]) / (np.abs([0.3, -4.0]) + 1e-8)
    assert np.allclose(p.value, expect, rtol=0, atol=1e-15)


def test_adam_coupled_decay_closed_form():
    p = Parameter("w", np.array([2.0]))
    p.grad[...] = 0.5
    opt = Adam([p], lr=0.01, eps=1e-8, weight_decay=0.1)
    opt.step()
    g = 0.5 + 0.1 * 2.0
    assert p.value[0] == pytest.approx(2.0 - 0.01 * g / (abs(g) + 1e-8), abs=1e-15)


def test_adam_unit_gradient_moves_by_lr():
    p = Parameter("w", np.zeros(1))
    p.grad[...] = 1.0
    Adam([p], lr=1e-3).step()
    assert p.value[0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_decreases_quadratic():
    p = Parameter("w", np.array([3.0, -2.0]))
    opt = Adam([p], lr=0.05)
    values = []
    for _ in range(100):
        p.grad[...] = 2 * p.value
        opt.step()
        values.append(float(np.sum(p.value**2)))
    assert values[-1] < 1e-2 * values[0]
    assert all(b <= a + 1e-12 for a, b in zip(values[:40], values[1:41]))


def test_training_is_deterministic():
    def run():
        net = TinyNet(3, 4, 2, 3, seed=2)
        opt = Adam(net.parameters(), lr=1e-2, weight_decay=1e-6)
        data = RngStream(2, 1)
        for _ in range(100):
            x = data.normal((4, 3))
            tape = Tape()
            opt.zero_grad()
            tape.backward(T.mse(tape, net(tape, x, [0, 1, 2, 0]), np.zeros((4, 2))))
            opt.step()
        return net.state()

    a, b = run(), run()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_lr_schedule():
    assert [lr_at(e) for e in (1, 20, 21, 50)] == [1e-3, 1e-3, 4e-4, 4e-4]


def test_early_stopping_restores_best():
    net = Linear(1, 1, rng())
    scores = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95, 0.5, 0.4]

    def train_epoch(epoch):
        net.weight.value[...] = epoch
        return 0.0, 1e-3

    stopper, history = fit_with_early_stopping(net, train_epoch, lambda e: scores[e - 1], 50, 5)
    assert len(history) == 7
    assert stopper.best_epoch == 2
    assert net.weight.value[0, 0] == 2.0


def test_early_stopping_ties_keep_earlier():
    s = EarlyStopping(2)
    s.update(1, 0.5)
    s.update(2, 0.5)
    assert s.best_epoch == 1 and s.bad_epochs == 1


SINUSOID_CASES = [
    (0, 4, [0.0, 1.0, 0.0, 1.0]),
    (1, 2, [np.sin(1.0), np.cos(1.0)]),
    (1, 4, [np.sin(1.0), np.cos(1.0), np.sin(0.01), np.cos(0.01)]),
    (50, 2, [np.sin(50.0), np.cos(50.0)]),
]


@pytest.mark.parametrize("n,dim,expected", SINUSOID_CASES)
def test_sinusoidal_encoding_cases(n, dim, expected):
    assert np.allclose(sinusoidal_encoding(n, dim), expected, atol=1e-15)


def test_sinusoidal_encoding_batch_and_odd():
    enc = sinusoidal_encoding(np.array([1, 2]), 8)
    assert enc.shape == (2, 8)
    assert np.allclose(enc[:, 0::2] ** 2 + enc[:, 1::2] ** 2, 1)
    with pytest.raises(InvalidArgument):
        sinusoidal_encoding(1, 5)


def test_mlp_parameter_count():
    mlp = MLP(8, 3, rng())
    assert mlp.n_parameters() == 3 * 2 * (8 * 8 + 8)


def test_checkpoint_round_trip(tmp_path):
    net = TinyNet(3, 4, 2, 3, seed=7)
    state = {k: np.asarray(v, np.float32).astype(np.float64) for k, v in net.state().items()}
    net.load_state(state)
    path = tmp_path / "m.ckpt"
    digest = Checkpoint(net.state(), "abc", 7, {"note": 1}).save(path)
    back = Checkpoint.load(path)
    assert back.config_fingerprint == "abc" and back.seed == 7 and back.extra == {"note": 1}
    other = TinyNet(3, 4, 2, 3, seed=8)
    other.load_state(back.state)
    x = np.ones((2, 3))
    assert np.array_equal(other(Tape(), x, [0, 2]).value, net(Tape(), x, [0, 2]).value)
    assert Checkpoint(other.state(), "abc", 7, {"note": 1}).to_bytes() == path.read_bytes()
    assert len(digest) == 64


def test_load_state_rejects_mismatch():
    net = Linear(2, 2, rng())
    with pytest.raises(InvalidArgument):
        net.load_state({"weight": np.zeros((2, 2))})
