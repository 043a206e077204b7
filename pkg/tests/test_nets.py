import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cegan.autodiff import Tape
from cegan.nets import (AdamState, Checkpoint, CheckpointError, MlpSpec, NonFiniteGradient, adam_step,
                        bind_params, critic, discriminate, discriminator_forward, dumps_checkpoint,
                        generate, generator_forward, init_params, loads_checkpoint, unflatten)


def pack(spec, layers):
    theta = np.concatenate([np.concatenate([np.ravel(W), b]) for W, b in layers])
    assert theta.size == spec.n_params
    return theta


def test_param_count():
    spec = MlpSpec((8, 64, 64, 2), "tanh")
    assert spec.n_params == 8 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2


@pytest.mark.parametrize("sizes", [(3,), (2, 0, 1)])
def test_invalid_specs(sizes):
    with pytest.raises(ValueError):
        MlpSpec(sizes)


def test_init_is_deterministic_with_zero_biases():
    spec = MlpSpec((2, 16, 16, 1))
    a, b = init_params(spec, 7), init_params(spec, 7)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, init_params(spec, 8))
    for _, bias in unflatten(a, spec):
        assert (bias == 0).all()


def test_init_variance_follows_fan_in():
    # hidden relu layer of fan-in 100 with 100 outputs: 10k draws, variance 2/100
    spec = MlpSpec((100, 100, 1), "relu")
    W, _ = unflatten(init_params(spec, 0), spec)[0]
    assert abs(W.var() / (2 / 100) - 1) < 0.10
    tspec = MlpSpec((100, 100, 1), "tanh")
    Wt, _ = unflatten(init_params(tspec, 0), tspec)[0]
    assert abs(Wt.var() / (1 / 100) - 1) < 0.10


def test_zero_generator_outputs_zero():
    spec = MlpSpec((3, 5, 2), "tanh")
    z = np.random.default_rng(0).normal(size=(6, 3))
    assert (generate(np.zeros(spec.n_params), spec, z) == 0).all()


def test_generator_hand_computed():
    # 2-4-2, tanh hidden, identity output
    spec = MlpSpec((2, 4, 2), "tanh", "identity")
    W1 = [[1.0, 0.0, -1.0, 0.5], [0.0, 2.0, 1.0, -1.0]]
    b1 = [0.0, -1.0, 0.0, 0.5]
    W2 = [[1.0, 0.0], [0.0, 1.0], [1.0, -1.0], [2.0, 0.0]]
    b2 = [0.1, -0.2]
    theta = pack(spec, [(W1, b1), (W2, b2)])
    z1, z2 = 0.5, -0.25
    h = [math.tanh(z1), math.tanh(2 * z2 - 1.0), math.tanh(-z1 + z2), math.tanh(0.5 * z1 - z2 + 0.5)]
    expected = [h[0] + h[2] + 2 * h[3] + 0.1, h[1] - h[2] - 0.2]
    np.testing.assert_allclose(generate(theta, spec, [[z1, z2]])[0], expected, rtol=1e-14)
    t = Tape()
    out = generator_forward(t, bind_params(t, theta, spec, "g"), spec, t.const([[z1, z2]]))
    np.testing.assert_allclose(out.value[0], expected, rtol=1e-14)


def test_discriminator_hand_computed():
    # x=(2,-1): pre-activations (2,-1,-2.5,5) -> relu (2,0,0,5) -> C = 2 - 2.5 + 0.1
    spec = MlpSpec((2, 4, 1), "relu", "identity")
    W1 = [[1.0, 0.0, -1.0, 2.0], [0.0, 1.0, 1.0, -1.0]]
    b1 = [0.0, 0.0, 0.5, 0.0]
    W2 = [[1.0], [1.0], [1.0], [-0.5]]
    omega = pack(spec, [(W1, b1), (W2, [0.1])])
    C, D = discriminate(omega, spec, [[2.0, -1.0]])
    assert C[0] == pytest.approx(-0.4, abs=1e-14)
    assert D[0] == pytest.approx(1 / (1 + math.exp(0.4)), abs=1e-15)
    t = Tape()
    Ct, Dt = discriminator_forward(t, bind_params(t, omega, spec, "d"), spec, t.const([[2.0, -1.0]]))
    assert Ct.value[0] == pytest.approx(-0.4, abs=1e-14)


def test_zero_logit_gives_half():
    spec = MlpSpec((2, 4, 1))
    C, D = discriminate(np.zeros(spec.n_params), spec, np.ones((3, 2)))
    assert (C == 0).all() and (D == 0.5).all()


def test_discriminator_requires_identity_output():
    spec = MlpSpec((2, 4, 1), "relu", "tanh")
    with pytest.raises(ValueError):
        critic(np.zeros(spec.n_params), spec, np.ones((1, 2)))


def test_input_width_checked():
    spec = MlpSpec((3, 4, 2))
    with pytest.raises(ValueError):
        generate(np.zeros(spec.n_params), spec, np.ones((2, 4)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 5.0))
def test_discriminator_output_strictly_inside_unit_interval(seed, scale):
    spec = MlpSpec((2, 16, 1))
    rng = np.random.default_rng(seed)
    _, D = discriminate(init_params(spec, seed), spec, scale * rng.normal(size=(32, 2)))
    assert ((D > 0) & (D < 1)).all()


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), row=st.integers(0, 31))
def test_rows_are_batch_independent(seed, row):
    spec = MlpSpec((8, 32, 2), "tanh")
    theta = init_params(spec, seed)
    z = np.random.default_rng(seed).normal(size=(32, 8))
    # BLAS picks different kernels for 1-row and 32-row products, so equality is to round-off
    np.testing.assert_allclose(generate(theta, spec, z)[row], generate(theta, spec, z[row:row + 1])[0],
                               rtol=1e-13, atol=1e-15)


def test_adam_first_step_is_signed_learning_rate():
    p = np.array([1.0, -2.0, 3.0])
    # eps_adam/|g| must stay below 1e-6 for the bound to hold
    g = np.array([0.5, -3.0, 0.02])
    alpha = 1e-3
    new, st_ = adam_step(p, g, AdamState.zeros(3), alpha, 0.5, 0.999)
    np.testing.assert_allclose(new - p, -alpha * np.sign(g), atol=1e-6 * alpha)
    assert st_.step_count == 1


def test_adam_zero_gradient_leaves_params_and_decays_moments():
    p = np.array([1.0, 2.0])
    state = AdamState(np.array([0.4, -0.2]), np.array([0.1, 0.3]), 5)
    new, s2 = adam_step(p, np.zeros(2), state, 0.1, 0.5, 0.999)
    # m decays but is nonzero, so params do move unless m is zero too
    np.testing.assert_allclose(s2.first_moment, 0.5 * state.first_moment)
    np.testing.assert_allclose(s2.second_moment, 0.999 * state.second_moment)
    fresh, _ = adam_step(p, np.zeros(2), AdamState.zeros(2), 0.1, 0.5, 0.999)
    assert (fresh == p).all()
    assert (state.first_moment == [0.4, -0.2]).all()


def test_adam_descends_half_square():
    p, s = np.array([1.0]), AdamState.zeros(1)
    seen = [p[0]]
    for _ in range(3):
        p, s = adam_step(p, p.copy(), s, 0.1, 0.5, 0.999)
        seen.append(p[0])
    assert seen[0] > seen[1] > seen[2] > seen[3]
    assert s.step_count == 3


def test_adam_rejects_non_finite_gradient():
    with pytest.raises(NonFiniteGradient, match="index 1"):
        adam_step(np.zeros(3), np.array([0.0, np.nan, 1.0]), AdamState.zeros(3), 0.1, 0.5, 0.9)


def test_adam_is_deterministic():
    rng = np.random.default_rng(4)
    p, g = rng.normal(size=10), rng.normal(size=10)
    a = adam_step(p, g, AdamState.zeros(10), 1e-3, 0.5, 0.999)
    b = adam_step(p, g, AdamState.zeros(10), 1e-3, 0.5, 0.999)
    assert a[0].tobytes() == b[0].tobytes()


def _ckpt(seed=0):
    spec = MlpSpec((8, 16, 2), "tanh")
    rng = np.random.default_rng(seed)
    adam = AdamState(rng.normal(size=spec.n_params), rng.random(spec.n_params), 17)
    return Checkpoint(spec, rng.normal(size=spec.n_params), adam, {"generation": 3, "role": "parent0"})


def test_checkpoint_round_trip_is_bit_exact():
    ck = _ckpt()
    blob = dumps_checkpoint(ck)
    assert blob[:4] == b"CEG1"
    back = loads_checkpoint(blob)
    assert back.spec == ck.spec
    assert back.params.tobytes() == ck.params.tobytes()
    assert back.adam.first_moment.tobytes() == ck.adam.first_moment.tobytes()
    assert back.adam.second_moment.tobytes() == ck.adam.second_moment.tobytes()
    assert back.adam.step_count == 17
    assert back.meta == {"generation": "3", "role": "parent0"}
    assert dumps_checkpoint(back) == blob


def test_checkpoint_rejects_bad_magic_version_and_truncation():
    blob = dumps_checkpoint(_ckpt())
    with pytest.raises(CheckpointError, match="magic"):
        loads_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError, match="version"):
        loads_checkpoint(blob[:4] + (99).to_bytes(4, "little") + blob[8:])
    with pytest.raises(CheckpointError):
        loads_checkpoint(blob[:-40])
