"""Scalar jets and a reverse-mode tape over float64 numpy arrays.

Two cooperating pieces:

* ``Jet3`` carries a value together with its first and second derivatives
  with respect to the single spatial input.  Jets are propagated *forward*
  through the network with closed-form chain rules, so psi'' is exact (no
  nested reverse-mode).

* ``Tape``/``Node`` record the jet-augmented forward pass as ordinary
  array operations; one reverse sweep then yields exact gradients of any
  recorded scalar with respect to every bound parameter.  Jet components
  are plain tape values, so losses built from d1/d2 are differentiable
  like everything else.

Everything is float64.  Ops accept either ``Node`` or raw numpy values and
dispatch accordingly, so the same loss/network code runs in recording mode
(for training) and in plain evaluation mode (for tests and reporting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError

Array = np.ndarray


# ---------------------------------------------------------------------------
# forward jets (scalar form)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jet3:
    """Value plus first/second derivative w.r.t. the spatial input."""

    v: float
    d1: float
    d2: float


def seed_jet(x: float) -> Jet3:
    """Jet of the input variable itself: v=x, d1=1, d2=0."""
    return Jet3(float(x), 1.0, 0.0)


def const_jet(c: float) -> Jet3:
    return Jet3(float(c), 0.0, 0.0)


def jet_affine(inputs: Sequence[Jet3], weights: Sequence[float], bias: float) -> Jet3:
    """Weighted sum of jets plus bias; derivatives are linear."""
    if len(inputs) != len(weights) or len(inputs) < 1:
        raise ConfigurationError(
            f"jet_affine needs matching nonzero lengths, got {len(inputs)} inputs "
            f"and {len(weights)} weights"
        )
    v = float(bias)
    d1 = 0.0
    d2 = 0.0
    for j, w in zip(inputs, weights):
        v += w * j.v
        d1 += w * j.d1
        d2 += w * j.d2
    return Jet3(v, d1, d2)


def jet_tanh(u: Jet3) -> Jet3:
    """tanh through a jet (Faa di Bruno to order 2)."""
    t = math.tanh(u.v)
    s = 1.0 - t * t
    return Jet3(t, s * u.d1, s * u.d2 - 2.0 * t * s * u.d1 * u.d1)


# ---------------------------------------------------------------------------
# reverse-mode tape
# ---------------------------------------------------------------------------

class Node:
    """One recorded value on a tape."""

    __slots__ = ("tape", "idx", "value", "parents", "vjps", "recompute",
                 "needs_grad", "slot")

    def __init__(self, tape, idx, value, parents, vjps, recompute,
                 needs_grad, slot=None):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.recompute = recompute
        self.needs_grad = needs_grad
        self.slot = slot

    # arithmetic sugar so losses read naturally
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


class Tape:
    """Append-only record of operations; single-writer."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _record(self, value, parents, vjps, recompute, slot=None):
        needs = slot is not None or any(p.needs_grad for p in parents)
        node = Node(self, len(self.nodes), value, tuple(parents), tuple(vjps),
                    recompute, needs, slot)
        self.nodes.append(node)
        return node

    def param(self, slot: str, value) -> Node:
        """Bind a trainable array to a named slot."""
        if slot in self.params:
            raise UsageError(f"parameter slot {slot!r} already bound")
        v = np.asarray(value, dtype=np.float64)
        node = self._record(v, (), (), None, slot=slot)
        self.params[slot] = node
        return node

    def const(self, value) -> Node:
        """Record a non-trainable leaf."""
        v = np.asarray(value, dtype=np.float64)
        return self._record(v, (), (), None)

    def replay(self) -> bool:
        """Recompute every non-leaf node; True iff all values match bit-for-bit."""
        for node in self.nodes:
            if node.recompute is None:
                continue
            fresh = node.recompute()
            if not np.array_equal(np.asarray(fresh), np.asarray(node.value)):
                return False
        return True


def backward(tape: Tape, out: Node) -> dict[str, Array]:
    """Gradient of a recorded scalar w.r.t. every bound parameter.

    Sweeps the tape once in reverse insertion order (reverse topological
    order by construction).  Parameters the output does not depend on get
    zero gradients.
    """
    if not isinstance(out, Node) or out.tape is not tape:
        raise UsageError("output is not recorded on this tape")
    if np.ndim(out.value) != 0:
        raise UsageError("backward expects a scalar output node")

    adjoint: list = [None] * (out.idx + 1)
    adjoint[out.idx] = np.float64(1.0)
    grads: dict[str, Array] = {}
    for i in range(out.idx, -1, -1):
        g = adjoint[i]
        adjoint[i] = None
        if g is None:
            continue
        node = tape.nodes[i]
        if node.slot is not None:
            grads[node.slot] = np.asarray(g, dtype=np.float64).reshape(
                np.shape(node.value))
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.needs_grad:
                continue
            contrib = vjp(g)
            if adjoint[parent.idx] is None:
                adjoint[parent.idx] = contrib
            else:
                # fresh array: vjp outputs may alias their input adjoint
                adjoint[parent.idx] = adjoint[parent.idx] + contrib
    for slot, pnode in tape.params.items():
        if slot not in grads:
            grads[slot] = np.zeros_like(pnode.value)
    return grads


# ---------------------------------------------------------------------------
# ops: Node-or-ndarray polymorphic
# ---------------------------------------------------------------------------

def _is_node(x) -> bool:
    return isinstance(x, Node)


def value_of(x):
    return x.value if _is_node(x) else x


def _tape_of(*xs) -> Tape:
    for x in xs:
        if _is_node(x):
            return x.tape
    raise UsageError("no tape among operands")


def _scalar_aware(vjp: Callable, operand_value) -> Callable:
    """Wrap a vjp so scalar operands broadcast against array outputs."""
    if np.ndim(operand_value) == 0:
        return lambda g: np.sum(vjp(g))
    return vjp


def _check_elemwise(av, bv):
    if np.ndim(av) != 0 and np.ndim(bv) != 0 and np.shape(av) != np.shape(bv):
        raise UsageError(
            f"elementwise op on mismatched shapes {np.shape(av)} vs {np.shape(bv)}")


def _binary(a, b, fwd, da, db):
    av, bv = value_of(a), value_of(b)
    _check_elemwise(av, bv)
    out = fwd(av, bv)
    if not (_is_node(a) or _is_node(b)):
        return out
    tape = _tape_of(a, b)
    parents, vjps = [], []
    if _is_node(a):
        parents.append(a)
        vjps.append(_scalar_aware(lambda g: da(g, av, bv), av))
    if _is_node(b):
        parents.append(b)
        vjps.append(_scalar_aware(lambda g: db(g, av, bv), bv))
    return tape._record(out, parents, vjps,
                        lambda: fwd(value_of(a), value_of(b)))


def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def _unary(a, fwd, dfn):
    av = value_of(a)
    out = fwd(av)
    if not _is_node(a):
        return out
    return a.tape._record(out, (a,), (lambda g: dfn(g, av, out),),
                          lambda: fwd(value_of(a)))


def neg(a):
    return _unary(a, lambda x: -x, lambda g, x, o: -g)


def square(a):
    return _unary(a, lambda x: x * x, lambda g, x, o: g * (2.0 * x))


def vabs(a):
    return _unary(a, np.abs, lambda g, x, o: g * np.sign(x))


def vsqrt(a):
    return _unary(a, np.sqrt, lambda g, x, o: g * (0.5 / o))


def vrecip(a):
    return _unary(a, lambda x: 1.0 / x, lambda g, x, o: -g * o * o)


def vtanh(a):
    return _unary(a, np.tanh, lambda g, x, o: g * (1.0 - o * o))


def vexp(a, clamp: float | None = None):
    """exp, optionally clamping the exponent from above (gradient 0 past it)."""
    def fwd(x):
        return np.exp(x if clamp is None else np.minimum(x, clamp))

    def dfn(g, x, o):
        if clamp is None:
            return g * o
        return g * o * (x < clamp)

    return _unary(a, fwd, dfn)


def vsum(a):
    return _unary(a, np.sum, lambda g, x, o: np.full(np.shape(x), g))


def vmean(a):
    return _unary(a, np.mean,
                  lambda g, x, o: np.full(np.shape(x), g / np.size(x)))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    if not (_is_node(a) or _is_node(b)):
        return out
    tape = _tape_of(a, b)
    parents, vjps = [], []
    if _is_node(a):
        parents.append(a)
        vjps.append(lambda g: g @ bv.T)
    if _is_node(b):
        parents.append(b)
        vjps.append(lambda g: av.T @ g)
    return tape._record(out, parents, vjps, lambda: value_of(a) @ value_of(b))


def affine_rows(z, w, bias, n_rows: int):
    """z @ w with the bias row vector added to the first n_rows rows.

    One fused op per network layer: d1/d2 rows are linear (no bias).
    """
    def fwd(zv, wv, bv):
        out = zv @ wv
        out[:n_rows] += bv
        return out

    zv, wv, bv = value_of(z), value_of(w), value_of(bias)
    out = fwd(zv, wv, bv)
    if not (_is_node(z) or _is_node(w) or _is_node(bias)):
        return out
    tape = _tape_of(z, w, bias)
    parents, vjps = [], []
    if _is_node(z):
        parents.append(z)
        vjps.append(lambda g: g @ wv.T)
    if _is_node(w):
        parents.append(w)
        vjps.append(lambda g: zv.T @ g)
    if _is_node(bias):
        parents.append(bias)
        vjps.append(lambda g: g[:n_rows].sum(axis=0))
    return tape._record(out, parents, vjps,
                        lambda: fwd(value_of(z), value_of(w), value_of(bias)))


def addrow_partial(m, bias, n_rows: int):
    """Add a row vector to the first ``n_rows`` rows of a matrix."""
    def fwd(mv, bv):
        out = mv.copy()
        out[:n_rows] += bv
        return out

    mv, bv = value_of(m), value_of(bias)
    out = fwd(mv, bv)
    if not (_is_node(m) or _is_node(bias)):
        return out
    tape = _tape_of(m, bias)
    parents, vjps = [], []
    if _is_node(m):
        parents.append(m)
        vjps.append(lambda g: g)
    if _is_node(bias):
        parents.append(bias)
        vjps.append(lambda g: g[:n_rows].sum(axis=0))
    return tape._record(out, parents, vjps,
                        lambda: fwd(value_of(m), value_of(bias)))


def _jet_tanh_block_fwd(u: Array, n_val: int, n_jet: int):
    """Shared forward for the fused activation over stacked jet rows.

    Row layout of ``u``: [values (n_val, first n_jet of which carry jets);
    d1 (n_jet); d2 (n_jet)].  Returns the same layout after tanh.
    Writes into one preallocated output to keep large-array traffic low.
    """
    uv = u[:n_val]
    u1 = u[n_val:n_val + n_jet]
    u2 = u[n_val + n_jet:]
    out = np.empty_like(u)
    t = out[:n_val]
    np.tanh(uv, out=t)
    tj = t[:n_jet]
    s = 1.0 - tj * tj
    d1 = out[n_val:n_val + n_jet]
    np.multiply(s, u1, out=d1)
    d2 = out[n_val + n_jet:]
    np.multiply(s, u2, out=d2)
    tmp = tj * d1
    tmp *= u1
    tmp *= 2.0
    d2 -= tmp
    return out, (t, tj, s, u1, u2)


def jet_tanh_block(u, n_val: int, n_jet: int):
    """Fused tanh over a stacked [values; d1; d2] matrix (jet chain rule)."""
    uv = value_of(u)
    if uv.shape[0] != n_val + 2 * n_jet:
        raise UsageError("jet_tanh_block row count does not match layout")
    out, (t, tj, s, u1, u2) = _jet_tanh_block_fwd(uv, n_val, n_jet)
    if not _is_node(u):
        return out

    def vjp(g):
        # forward: t = tanh(uv); s = 1 - tj^2 (tj = first n_jet rows of t);
        #          d1 = s*u1; d2 = s*u2 - 2*tj*s*u1^2
        gt = g[:n_val]
        g1 = g[n_val:n_val + n_jet]
        g2 = g[n_val + n_jet:]
        gu = np.empty_like(g)
        guv = gu[:n_val]
        np.multiply(gt, 1.0 - t * t, out=guv)
        su1 = s * u1
        # ds = g1*u1 + g2*(u2 - 2*tj*u1^2); dtj += -2*s*u1^2*g2 - 2*tj*ds
        gs = u2 - (2.0 * tj) * (u1 * u1)
        gs *= g2
        gs += g1 * u1
        gtj = su1 * u1
        gtj *= g2
        gtj += tj * gs
        gtj *= -2.0 * s
        guv[:n_jet] += gtj
        gu1 = gu[n_val:n_val + n_jet]
        np.multiply(-4.0 * tj, su1, out=gu1)
        gu1 *= g2
        gu1 += g1 * s
        np.multiply(g2, s, out=gu[n_val + n_jet:])
        return gu

    return u.tape._record(out, (u,), (vjp,),
                          lambda: _jet_tanh_block_fwd(value_of(u), n_val, n_jet)[0])


def rows(a, lo: int, hi: int):
    av = value_of(a)
    out = av[lo:hi]
    if not _is_node(a):
        return out

    def vjp(g):
        z = np.zeros(np.shape(av))
        z[lo:hi] = g
        return z

    return a.tape._record(out, (a,), (vjp,), lambda: value_of(a)[lo:hi])


def col(a, j: int):
    av = value_of(a)
    out = av[:, j]
    if not _is_node(a):
        return out

    def vjp(g):
        z = np.zeros(np.shape(av))
        z[:, j] = g
        return z

    return a.tape._record(out, (a,), (vjp,), lambda: value_of(a)[:, j])


def take(a, i: int):
    av = value_of(a)
    out = av[i]
    if not _is_node(a):
        return out

    def vjp(g):
        z = np.zeros(np.shape(av))
        z[i] = g
        return z

    return a.tape._record(out, (a,), (vjp,), lambda: value_of(a)[i])


def concat_rows(parts):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=0)
    node_parts = [p for p in parts if _is_node(p)]
    if not node_parts:
        return out
    tape = node_parts[0].tape
    parents, vjps = [], []
    off = 0
    for p, v in zip(parts, vals):
        n = np.shape(v)[0]
        if _is_node(p):
            parents.append(p)
            vjps.append(lambda g, lo=off, hi=off + n: g[lo:hi])
        off += n
    return tape._record(out, parents, vjps,
                        lambda: np.concatenate([value_of(p) for p in parts], axis=0))


def dot(a, b):
    """Scalar inner product (fixed index-order reduction)."""
    return vsum(mul(a, b))
