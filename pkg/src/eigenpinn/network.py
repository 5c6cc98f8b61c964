"""Shared-trunk MLP producing wavefunction and integral channels as jets.

One tanh trunk feeds two linear heads: ``psi`` (1 real channel for the
well, 2 for the ring's real/imaginary parts) and the auxiliary running
integral ``nu``.  The eigenvalue comes from a separate affine map of the
constant 1 (no hidden layers, no activation).

The batched evaluator stacks [values; d1; d2] rows into a single matrix
per layer so each layer is one matmul, and works identically on raw
arrays (plain evaluation) or tape nodes (training).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Jet3
from .errors import ConfigurationError, NumericError

INIT_SCHEMES = ("xavier_uniform", "kaiming_normal")


BIAS_INITS = ("uniform_fan_in", "zero")


@dataclass(frozen=True)
class NetworkSpec:
    hidden_layers: int
    hidden_width: int
    main_outputs: int = 1
    aux_outputs: int = 1
    activation: str = "tanh"
    init_scheme: str = "xavier_uniform"
    bias_init: str = "uniform_fan_in"
    input_dim: int = 1

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigurationError("hidden_layers must be >= 1", "network.hidden_layers")
        if self.hidden_width < 1:
            raise ConfigurationError("hidden_width must be >= 1", "network.hidden_width")
        if self.main_outputs not in (1, 2):
            raise ConfigurationError("main_outputs must be 1 or 2", "network.main_outputs")
        if self.aux_outputs != 1:
            raise ConfigurationError("exactly one auxiliary output is supported",
                                     "network.aux_outputs")
        if self.activation != "tanh":
            raise ConfigurationError("only tanh activation is supported",
                                     "network.activation")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigurationError(f"init_scheme must be one of {INIT_SCHEMES}",
                                     "network.init_scheme")
        if self.bias_init not in BIAS_INITS:
            raise ConfigurationError(f"bias_init must be one of {BIAS_INITS}",
                                     "network.bias_init")
        if self.input_dim != 1:
            raise ConfigurationError("input_dim must be 1", "network.input_dim")

    def slot_shapes(self) -> dict[str, tuple]:
        shapes = {}
        fan_in = self.input_dim
        for i in range(self.hidden_layers):
            shapes[f"w{i}"] = (fan_in, self.hidden_width)
            shapes[f"b{i}"] = (self.hidden_width,)
            fan_in = self.hidden_width
        shapes["w_psi"] = (fan_in, self.main_outputs)
        shapes["b_psi"] = (self.main_outputs,)
        shapes["w_nu"] = (fan_in, self.aux_outputs)
        shapes["b_nu"] = (self.aux_outputs,)
        shapes["e_w"] = ()
        shapes["e_b"] = ()
        return shapes


@dataclass
class NetworkParams:
    """All trainable arrays, keyed by slot name (see NetworkSpec.slot_shapes)."""

    spec: NetworkSpec
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, {k: v.copy() for k, v in self.arrays.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays.values())


@dataclass
class OutputJets:
    """Single-point forward result: per-channel psi jets plus the nu jet."""

    psi: list[Jet3]
    nu: Jet3


def _draw(rng, scheme: str, shape: tuple) -> np.ndarray:
    fan_in = shape[0] if len(shape) == 2 else 1
    fan_out = shape[1] if len(shape) == 2 else 1
    if scheme == "xavier_uniform":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)
    std = np.sqrt(2.0 / fan_in)
    return rng.normal(0.0, std, size=shape)


def init(spec: NetworkSpec, seed: int) -> NetworkParams:
    """Deterministic initialization: weights per scheme.

    Biases default to uniform +-1/sqrt(fan_in).  With all-zero biases a
    tanh trunk of a single input is an exactly odd function plus the head
    constant, which walls off every even eigenstate; nonzero biases break
    that parity from the start.  ``bias_init="zero"`` restores zeros.
    The energy map draws its weight from the same scheme with fan_in = 1;
    its bias is always zero.
    """
    rng = np.random.default_rng(seed)
    arrays: dict[str, np.ndarray] = {}
    shapes = spec.slot_shapes()
    fan_in: dict[str, int] = {}
    last = spec.input_dim
    for i in range(spec.hidden_layers):
        fan_in[f"b{i}"] = last
        last = spec.hidden_width
    fan_in["b_psi"] = fan_in["b_nu"] = last
    for slot, shape in shapes.items():
        if slot == "e_w":
            arrays[slot] = np.asarray(_draw(rng, spec.init_scheme, (1, 1))[0, 0])
        elif slot == "e_b":
            arrays[slot] = np.zeros(shape)
        elif slot.startswith("b"):
            if spec.bias_init == "zero":
                arrays[slot] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(fan_in[slot])
                arrays[slot] = rng.uniform(-bound, bound, size=shape)
        else:
            arrays[slot] = _draw(rng, spec.init_scheme, shape)
    return NetworkParams(spec, arrays)


def energy(params: NetworkParams) -> float:
    """E = weight * 1 + bias (exactly affine)."""
    return float(params.arrays["e_w"]) + float(params.arrays["e_b"])


def energy_term(arrs):
    """Tape/array form of the energy map."""
    return ad.add(ad.mul(arrs["e_w"], 1.0), arrs["e_b"])


class ForwardMaps:
    """Batched forward result over stacked rows.

    Row layout of every head matrix: the first ``n_jet`` rows are values at
    the jet points, the next ``n_extra`` rows are values at the value-only
    points, then ``n_jet`` rows of d1 and ``n_jet`` rows of d2.
    """

    def __init__(self, psi_mat, nu_mat, n_jet: int, n_extra: int, main_outputs: int):
        self.psi_mat = psi_mat
        self.nu_mat = nu_mat
        self.n_jet = n_jet
        self.n_extra = n_extra
        self.main_outputs = main_outputs
        self._n_val = n_jet + n_extra

    def _jet(self, mat, channel: int):
        nj, nv = self.n_jet, self._n_val
        return (ad.col(ad.rows(mat, 0, nj), channel),
                ad.col(ad.rows(mat, nv, nv + nj), channel),
                ad.col(ad.rows(mat, nv + nj, nv + 2 * nj), channel))

    def psi_jet(self, channel: int):
        """(v, d1, d2) arrays of length n_jet for one psi channel."""
        return self._jet(self.psi_mat, channel)

    def nu_jet(self):
        return self._jet(self.nu_mat, 0)

    def psi_extra(self, channel: int):
        """Values of one psi channel at the value-only points."""
        nj, nv = self.n_jet, self._n_val
        return ad.col(ad.rows(self.psi_mat, nj, nv), channel)

    def nu_extra(self):
        nj, nv = self.n_jet, self._n_val
        return ad.col(ad.rows(self.nu_mat, nj, nv), 0)


def evaluate(arrs, spec: NetworkSpec, x_jet, x_extra) -> ForwardMaps:
    """Forward pass at jet points plus value-only points.

    ``arrs`` maps slot names to tape nodes or plain float64 arrays.  Raises
    NumericError (with the layer index) if a layer produces a non-finite
    value from finite inputs.
    """
    x_jet = np.asarray(x_jet, dtype=np.float64).reshape(-1)
    x_extra = np.asarray(x_extra, dtype=np.float64).reshape(-1)
    nj, nx = x_jet.size, x_extra.size
    n_val = nj + nx
    z0 = np.concatenate([x_jet, x_extra, np.ones(nj), np.zeros(nj)])
    z = z0.reshape(-1, 1)
    for i in range(spec.hidden_layers):
        u = ad.affine_rows(z, arrs[f"w{i}"], arrs[f"b{i}"], n_val)
        # summing first is cheap and any NaN/Inf survives the reduction
        if not np.isfinite(np.sum(ad.value_of(u))):
            raise NumericError("non-finite activation input", layer=i)
        z = ad.jet_tanh_block(u, n_val, nj)
    psi = ad.affine_rows(z, arrs["w_psi"], arrs["b_psi"], n_val)
    nu = ad.affine_rows(z, arrs["w_nu"], arrs["b_nu"], n_val)
    for name, mat in (("psi", psi), ("nu", nu)):
        if not np.isfinite(np.sum(ad.value_of(mat))):
            raise NumericError(f"non-finite {name} head output",
                               layer=spec.hidden_layers)
    return ForwardMaps(psi, nu, nj, nx, spec.main_outputs)


def forward_jet(params: NetworkParams, x: float) -> OutputJets:
    """Full jet propagation at a single input point."""
    if not np.isfinite(x):
        raise ConfigurationError("input x must be finite")
    maps = evaluate(params.arrays, params.spec, np.array([x]), np.array([]))
    psi = []
    for c in range(params.spec.main_outputs):
        v, d1, d2 = maps.psi_jet(c)
        psi.append(Jet3(float(v[0]), float(d1[0]), float(d2[0])))
    v, d1, d2 = maps.nu_jet()
    return OutputJets(psi, Jet3(float(v[0]), float(d1[0]), float(d2[0])))


def forward_values(params: NetworkParams, xs) -> dict[str, np.ndarray]:
    """Values of psi channels and nu at many points (no derivatives)."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    maps = evaluate(params.arrays, params.spec, np.array([]), xs)
    psi = np.stack([maps.psi_extra(c) for c in range(params.spec.main_outputs)])
    return {"psi": psi, "nu": maps.nu_extra()}


# ---------------------------------------------------------------------------
# checkpoints: npz with all slot arrays plus a JSON header string
# ---------------------------------------------------------------------------

def save_checkpoint(path, params: NetworkParams, seed: int, epoch: int,
                    extra: dict | None = None) -> None:
    header = {
        "spec": {
            "hidden_layers": params.spec.hidden_layers,
            "hidden_width": params.spec.hidden_width,
            "main_outputs": params.spec.main_outputs,
            "aux_outputs": params.spec.aux_outputs,
            "activation": params.spec.activation,
            "init_scheme": params.spec.init_scheme,
            "bias_init": params.spec.bias_init,
            "input_dim": params.spec.input_dim,
        },
        "seed": int(seed),
        "epoch": int(epoch),
    }
    if extra:
        header.update(extra)
    np.savez(path, __header__=np.array(json.dumps(header)), **params.arrays)


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        spec = NetworkSpec(**header["spec"])
        arrays = {k: np.asarray(data[k], dtype=np.float64)
                  for k in data.files if k != "__header__"}
    expected = set(spec.slot_shapes())
    if set(arrays) != expected:
        raise ConfigurationError("checkpoint slots do not match network spec")
    return NetworkParams(spec, arrays), header
