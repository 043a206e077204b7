"""Dense generator/discriminator networks and the Adam optimizer.

Parameters live in one flat float64 vector per network. The layout is
``W1.ravel(), b1, W2.ravel(), b2, ...`` with ``W`` stored ``(fan_in, fan_out)``
so a batch propagates as ``h @ W + b``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Node, Tape, stable_sigmoid

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")
EPS_ADAM = 1e-8


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output layer")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def layout(self) -> list[tuple[slice, slice, tuple[int, int]]]:
        """(weight slice, bias slice, weight shape) for each layer."""
        out, off = [], 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = slice(off, off + i * o)
            off += i * o
            b = slice(off, off + o)
            off += o
            out.append((w, b, (i, o)))
        return out


def default_generator_spec(noise_dim: int = 8, out_dim: int = 2) -> MlpSpec:
    return MlpSpec((noise_dim, 64, 64, out_dim), "tanh", "identity")


def default_discriminator_spec(in_dim: int = 2) -> MlpSpec:
    return MlpSpec((in_dim, 64, 64, 1), "relu", "identity")


def check_discriminator_spec(spec: MlpSpec) -> None:
    if spec.output_activation != "identity":
        raise ValueError("the discriminator's output must be the raw logit (identity activation)")
    if spec.out_dim != 1:
        raise ValueError("the discriminator must have a single output unit")


def init_params(spec: MlpSpec, seed) -> np.ndarray:
    """Fan-in scaled normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params)
    layers = spec.layout()
    for k, (w, _, (fan_in, fan_out)) in enumerate(layers):
        hidden = k < len(layers) - 1
        gain = 2.0 if hidden and spec.hidden_activation == "relu" else 1.0
        theta[w] = rng.normal(0.0, np.sqrt(gain / fan_in), size=fan_in * fan_out)
    return theta


def unflatten(theta: np.ndarray, spec: MlpSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    if theta.shape != (spec.n_params,):
        raise ValueError(f"parameter vector has shape {theta.shape}, spec needs ({spec.n_params},)")
    return [(theta[w].reshape(shape), theta[b]) for w, b, shape in spec.layout()]


# --- tape path -------------------------------------------------------------

def bind_params(tape: Tape, theta: np.ndarray, spec: MlpSpec, prefix: str) -> list[tuple[Node, Node]]:
    """Register each layer's weights and bias as named leaves on ``tape``."""
    return [(tape.leaf(f"{prefix}.W{k}", W), tape.leaf(f"{prefix}.b{k}", b))
            for k, (W, b) in enumerate(unflatten(theta, spec))]


def const_params(tape: Tape, theta: np.ndarray, spec: MlpSpec) -> list[tuple[Node, Node]]:
    return [(tape.const(W), tape.const(b)) for W, b in unflatten(theta, spec)]


def flat_grad(grads: dict[str, np.ndarray], spec: MlpSpec, prefix: str) -> np.ndarray:
    parts = []
    for k in range(len(spec.layer_sizes) - 1):
        parts.append(grads[f"{prefix}.W{k}"].ravel())
        parts.append(grads[f"{prefix}.b{k}"])
    return np.concatenate(parts)


def _activate(tape: Tape, x: Node, kind: str) -> Node:
    if kind == "relu":
        return tape.relu(x)
    if kind == "tanh":
        return tape.tanh(x)
    return x


def mlp_forward(tape: Tape, layers: list[tuple[Node, Node]], spec: MlpSpec, x: Node) -> Node:
    if x.value.ndim != 2 or x.value.shape[1] != spec.in_dim:
        raise ValueError(f"input batch shape {x.value.shape} does not match first layer width {spec.in_dim}")
    h = x
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        h = tape.add_bias(tape.matmul(h, W), b)
        h = _activate(tape, h, spec.hidden_activation if k < last else spec.output_activation)
    return h


def generator_forward(tape: Tape, layers: list[tuple[Node, Node]], spec: MlpSpec, z: Node) -> Node:
    """G(z) as a tape node, differentiable in the layer leaves and in ``z``."""
    return mlp_forward(tape, layers, spec, z)


def discriminator_forward(tape: Tape, layers: list[tuple[Node, Node]], spec: MlpSpec,
                          x: Node) -> tuple[Node, Node]:
    """Raw logits C(x) and D(x) = sigmoid(C(x)), both of batch length."""
    check_discriminator_spec(spec)
    C = tape.sum_rows(mlp_forward(tape, layers, spec, x))
    return C, tape.sigmoid(C)


# --- plain numpy path (no tape; evaluation and sampling only) --------------

def mlp_apply(theta: np.ndarray, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ValueError(f"input batch shape {x.shape} does not match first layer width {spec.in_dim}")
    layers = unflatten(theta, spec)
    h = x
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        h = h @ W + b
        kind = spec.hidden_activation if k < last else spec.output_activation
        if kind == "relu":
            h = np.maximum(h, 0.0)
        elif kind == "tanh":
            h = np.tanh(h)
    return h


def generate(theta: np.ndarray, spec: MlpSpec, z: np.ndarray) -> np.ndarray:
    return mlp_apply(theta, spec, z)


def critic(omega: np.ndarray, spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Raw discriminator logits C(x) as a 1-D array."""
    check_discriminator_spec(spec)
    return mlp_apply(omega, spec, x)[:, 0]


def discriminate(omega: np.ndarray, spec: MlpSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    C = critic(omega, spec, x)
    return C, stable_sigmoid(C)


# --- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.first_moment.copy(), self.second_moment.copy(), self.step_count)


class NonFiniteGradient(FloatingPointError):
    pass


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, alpha: float,
              beta1: float, beta2: float) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update (minimization). Inputs are not modified."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {params.shape}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError("Adam betas must lie in [0, 1)")
    if alpha < 0:
        raise ValueError("learning rate must be non-negative")
    bad = ~np.isfinite(grads)
    if bad.any():
        raise NonFiniteGradient(
            f"{int(bad.sum())} non-finite gradient components (first at index {int(np.argmax(bad))})")
    t = state.step_count + 1
    m = beta1 * state.first_moment + (1.0 - beta1) * grads
    v = beta2 * state.second_moment + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - alpha * m_hat / (np.sqrt(v_hat) + EPS_ADAM)
    return new, AdamState(m, v, t)


# --- checkpoints -----------------------------------------------------------

MAGIC = b"CEG1"
FORMAT_VERSION = 1
_ACT_CODES = {"relu": 0, "tanh": 1, "identity": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: MlpSpec
    params: np.ndarray
    adam: AdamState
    meta: dict = field(default_factory=dict)


def dumps_checkpoint(ckpt: Checkpoint) -> bytes:
    """Little-endian layout: magic, u32 version, u32 n_layers, u32 sizes...,
    u8 hidden act, u8 output act, u64 n_params, f8 params, u64 adam step,
    f8 first moment, f8 second moment, u32 meta length, utf-8 meta text."""
    spec = ckpt.spec
    n = spec.n_params
    if ckpt.params.shape != (n,) or ckpt.adam.first_moment.shape != (n,) \
            or ckpt.adam.second_moment.shape != (n,):
        raise CheckpointError("parameter/optimizer arrays do not match the spec")
    meta = ";".join(f"{k}={v}" for k, v in sorted(ckpt.meta.items())).encode("utf-8")
    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(spec.layer_sizes))]
    out.append(struct.pack(f"<{len(spec.layer_sizes)}I", *spec.layer_sizes))
    out.append(struct.pack("<BB", _ACT_CODES[spec.hidden_activation], _ACT_CODES[spec.output_activation]))
    out.append(struct.pack("<Q", n))
    out.append(ckpt.params.astype("<f8").tobytes())
    out.append(struct.pack("<Q", ckpt.adam.step_count))
    out.append(ckpt.adam.first_moment.astype("<f8").tobytes())
    out.append(ckpt.adam.second_moment.astype("<f8").tobytes())
    out.append(struct.pack("<I", len(meta)))
    out.append(meta)
    return b"".join(out)


def loads_checkpoint(blob: bytes) -> Checkpoint:
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    try:
        version, n_layers = struct.unpack_from("<II", blob, 4)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 12
        sizes = struct.unpack_from(f"<{n_layers}I", blob, off)
        off += 4 * n_layers
        hid, outp = struct.unpack_from("<BB", blob, off)
        off += 2
        spec = MlpSpec(sizes, _ACT_NAMES[hid], _ACT_NAMES[outp])
        (n,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if n != spec.n_params:
            raise CheckpointError(f"parameter count {n} does not match spec ({spec.n_params})")

        def floats(offset):
            arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).astype(np.float64)
            return arr, offset + 8 * n

        params, off = floats(off)
        (step,) = struct.unpack_from("<Q", blob, off)
        off += 8
        m, off = floats(off)
        v, off = floats(off)
        (mlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        text = blob[off:off + mlen].decode("utf-8")
        if len(text.encode("utf-8")) != mlen or off + mlen != len(blob):
            raise CheckpointError("checkpoint length does not match its header")
    except (struct.error, KeyError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None
    meta = dict(item.split("=", 1) for item in text.split(";") if item)
    return Checkpoint(spec, params, AdamState(m, v, int(step)), meta)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_bytes())
