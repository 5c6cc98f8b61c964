"""Jet algebra and reverse-mode tape.

Covers: jet_affine/jet_tanh contracts (including finite-difference
oracles), backward on small recorded functions, gradient determinism,
bit-for-bit tape replay, and the polymorphic op set against plain numpy.
"""

import math

import numpy as np
import pytest

from eigenpinn import autodiff as ad
from eigenpinn.autodiff import Jet3, Tape, backward, jet_affine, jet_tanh, seed_jet
from eigenpinn.errors import ConfigurationError, UsageError

from fdtools import check_gradients


# ---------------------------------------------------------------------------
# scalar jets
# ---------------------------------------------------------------------------

def test_seed_jet():
    j = seed_jet(0.7)
    assert (j.v, j.d1, j.d2) == (0.7, 1.0, 0.0)


def test_jet_affine_linear():
    out = jet_affine([Jet3(2, 1, 0)], [3.0], 1.0)
    assert (out.v, out.d1, out.d2) == (7.0, 3.0, 0.0)


def test_jet_affine_constant():
    out = jet_affine([seed_jet(1.23)], [0.0], 5.0)
    assert (out.v, out.d1, out.d2) == (5.0, 0.0, 0.0)


def test_jet_affine_componentwise_sum():
    out = jet_affine([Jet3(1, 2, 3), Jet3(4, 5, 6)], [1.0, 1.0], 0.0)
    assert (out.v, out.d1, out.d2) == (5.0, 7.0, 9.0)


def test_jet_affine_length_mismatch():
    with pytest.raises(ConfigurationError):
        jet_affine([Jet3(1, 0, 0)], [1.0, 2.0], 0.0)
    with pytest.raises(ConfigurationError):
        jet_affine([], [], 0.0)


def test_jet_tanh_at_zero():
    out = jet_tanh(Jet3(0, 1, 0))
    assert (out.v, out.d1, out.d2) == (0.0, 1.0, 0.0)


def test_jet_tanh_constant_input():
    out = jet_tanh(Jet3(0, 0, 0))
    assert (out.v, out.d1, out.d2) == (0.0, 0.0, 0.0)


def test_jet_tanh_matches_finite_differences_at_one():
    # independent oracle: central differences of math.tanh at x=1, step 1e-5
    h = 1e-5
    fd1 = (math.tanh(1 + h) - math.tanh(1 - h)) / (2 * h)
    fd2 = (math.tanh(1 + h) - 2 * math.tanh(1) + math.tanh(1 - h)) / (h * h)
    out = jet_tanh(seed_jet(1.0))
    assert out.v == math.tanh(1.0)
    assert abs(out.d1 - fd1) <= 1e-5 * abs(fd1)
    assert abs(out.d2 - fd2) <= 1e-4 * abs(fd2)


def test_jet_tanh_chain_rule_against_fd():
    # d1/d2 of tanh(w*x) w.r.t. x for a few random w, via jets
    rng = np.random.default_rng(42)
    for _ in range(25):
        w, x = rng.normal(size=2)
        jet = jet_tanh(jet_affine([seed_jet(x)], [w], 0.0))
        h = 1e-5
        f = lambda t: math.tanh(w * t)
        fd1 = (f(x + h) - f(x - h)) / (2 * h)
        fd2 = (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)
        assert abs(jet.d1 - fd1) <= max(1e-5 * abs(fd1), 1e-9)
        assert abs(jet.d2 - fd2) <= max(1e-4 * abs(fd2), 1e-5)


# ---------------------------------------------------------------------------
# tape basics
# ---------------------------------------------------------------------------

def test_backward_linear():
    tape = Tape()
    w = tape.param("w", 0.5)
    y = ad.mul(w, 3.0)
    grads = backward(tape, y)
    assert grads["w"] == 3.0


def test_backward_tanh_at_zero():
    tape = Tape()
    w = tape.param("w", 0.0)
    y = ad.vtanh(ad.mul(w, 2.0))
    grads = backward(tape, y)
    assert grads["w"] == 2.0


def test_backward_two_layer_network_matches_fd():
    rng = np.random.default_rng(7)
    params = {"w1": rng.normal(size=(1, 2)), "b1": rng.normal(size=2),
              "w2": rng.normal(size=(2, 1)), "e": np.asarray(rng.normal())}
    x = np.array([[0.3], [-0.8]])

    def f(arrs):
        h = ad.vtanh(ad.affine_rows(x, arrs["w1"], arrs["b1"], 2))
        out = ad.matmul(h, arrs["w2"])
        return float(ad.value_of(ad.vsum(ad.square(out)) + ad.square(arrs["e"])))

    tape = Tape()
    arrs = {k: tape.param(k, v) for k, v in params.items()}
    h = ad.vtanh(ad.affine_rows(x, arrs["w1"], arrs["b1"], 2))
    out = ad.matmul(h, arrs["w2"])
    loss = ad.vsum(ad.square(out)) + ad.square(arrs["e"])
    grads = backward(tape, loss)
    failures = check_gradients(lambda p: f(p), grads, params, rng,
                               entries_per_slot=5)
    assert not failures, failures


def test_backward_requires_scalar_and_same_tape():
    tape = Tape()
    w = tape.param("w", np.ones(3))
    vec = ad.mul(w, 2.0)
    with pytest.raises(UsageError):
        backward(tape, vec)
    other = Tape()
    y = other.const(1.0)
    with pytest.raises(UsageError):
        backward(tape, y)


def test_untouched_parameter_gets_zero_gradient():
    tape = Tape()
    w = tape.param("w", 1.5)
    unused = tape.param("other", np.ones(4))
    y = ad.square(w)
    grads = backward(tape, y)
    assert grads["w"] == 3.0
    assert np.array_equal(grads["other"], np.zeros(4))


def test_gradient_determinism_bit_for_bit():
    rng = np.random.default_rng(3)
    arrays = {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}

    def build():
        tape = Tape()
        arrs = {k: tape.param(k, v) for k, v in arrays.items()}
        out = ad.vsum(ad.square(ad.vtanh(ad.affine_rows(
            rng_const, arrs["a"], arrs["b"], 5))))
        return backward(tape, out)

    rng_const = rng.normal(size=(5, 4))
    g1, g2 = build(), build()
    for slot in arrays:
        assert np.array_equal(g1[slot], g2[slot])


def test_tape_replay_bit_for_bit():
    rng = np.random.default_rng(11)
    tape = Tape()
    a = tape.param("a", rng.normal(size=(6, 2)))
    x = tape.const(rng.normal(size=(2, 2)))
    u = ad.matmul(a, x)
    z = ad.jet_tanh_block(u, 2, 2)
    out = ad.vmean(ad.square(z))
    assert tape.replay()
    backward(tape, out)
    assert tape.replay()


def test_duplicate_param_slot_rejected():
    tape = Tape()
    tape.param("w", 1.0)
    with pytest.raises(UsageError):
        tape.param("w", 2.0)


# ---------------------------------------------------------------------------
# op set: plain-array dispatch equals node values; each op gradchecks
# ---------------------------------------------------------------------------

def _node_value(build, arrays):
    tape = Tape()
    arrs = {k: tape.param(k, v) for k, v in arrays.items()}
    node = build(arrs)
    return tape, node


_OPS = {
    "add": lambda a: ad.add(a["x"], a["y"]),
    "sub": lambda a: ad.sub(a["x"], a["y"]),
    "mul": lambda a: ad.mul(a["x"], a["y"]),
    "neg": lambda a: ad.neg(a["x"]),
    "square": lambda a: ad.square(a["x"]),
    "abs": lambda a: ad.vabs(a["x"]),
    "tanh": lambda a: ad.vtanh(a["x"]),
    "exp_clamped": lambda a: ad.vexp(a["x"], clamp=700.0),
    "sqrt_shifted": lambda a: ad.vsqrt(ad.add(ad.square(a["x"]), 1.0)),
    "recip_shifted": lambda a: ad.vrecip(ad.add(ad.square(a["x"]), 1.0)),
    "scalar_mix": lambda a: ad.add(ad.mul(a["s"], a["x"]), 2.5),
    "rows": lambda a: ad.rows(a["x"], 1, 3),
    "take": lambda a: ad.take(a["x"], 2),
    "concat": lambda a: ad.concat_rows([a["x"], a["y"]]),
    "dot": lambda a: ad.dot(a["x"], a["y"]),
}


@pytest.mark.parametrize("name", sorted(_OPS))
def test_op_matches_plain_numpy_and_fd(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    arrays = {"x": rng.normal(size=5), "y": rng.normal(size=5),
              "s": np.asarray(rng.normal())}
    build = _OPS[name]
    tape, node = _node_value(build, arrays)
    plain = build(arrays)
    assert np.array_equal(ad.value_of(node), plain)

    def scalar_loss(arrs):
        out = build(arrs)
        return out if np.ndim(ad.value_of(out)) == 0 else ad.vsum(ad.mul(out, out))

    tape = Tape()
    arrs = {k: tape.param(k, v) for k, v in arrays.items()}
    grads = backward(tape, scalar_loss(arrs))
    failures = check_gradients(
        lambda p: float(ad.value_of(scalar_loss(p))), grads, arrays, rng,
        entries_per_slot=5)
    assert not failures, failures


def test_reductions_and_matmul_match_numpy():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    assert np.array_equal(ad.matmul(m, w), m @ w)
    assert ad.vsum(m) == m.sum()
    assert ad.vmean(m) == m.mean()
    got = ad.affine_rows(m, w, np.array([1.0, -2.0]), 2)
    ref = m @ w
    ref[:2] += np.array([1.0, -2.0])
    assert np.array_equal(got, ref)


def test_elementwise_shape_mismatch_rejected():
    with pytest.raises(UsageError):
        ad.add(np.ones(3), np.ones(4))


def test_jet_tanh_block_matches_scalar_jets():
    # batched block against the scalar jet ops it vectorizes
    rng = np.random.default_rng(9)
    n_jet, width = 4, 3
    u_val = rng.normal(size=(n_jet, width))
    u_d1 = rng.normal(size=(n_jet, width))
    u_d2 = rng.normal(size=(n_jet, width))
    stacked = np.concatenate([u_val, u_d1, u_d2], axis=0)
    out = ad.jet_tanh_block(stacked, n_jet, n_jet)
    for i in range(n_jet):
        for j in range(width):
            ref = jet_tanh(Jet3(u_val[i, j], u_d1[i, j], u_d2[i, j]))
            assert abs(out[i, j] - ref.v) <= 1e-12
            assert abs(out[n_jet + i, j] - ref.d1) <= 1e-12
            assert abs(out[2 * n_jet + i, j] - ref.d2) <= 1e-12
