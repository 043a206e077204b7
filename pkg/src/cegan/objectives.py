"""Scalar training objectives, all expressed as tape nodes to be minimized."""

from __future__ import annotations

from enum import Enum

import numpy as np

from .autodiff import Node, Tape
from .nets import MlpSpec, check_discriminator_spec, discriminator_forward

EPS_LOG = 1e-12
EPS_NORM = 1e-12


class MutationKind(str, Enum):
    MINIMAX = "minimax"
    HEURISTIC = "heuristic"
    LEAST_SQUARES = "least_squares"


MUTATION_KINDS = tuple(k.value for k in MutationKind)


def safe_log(tape: Tape, x: Node) -> Node:
    return tape.log(tape.clamp_min(x, EPS_LOG))


def bce_discriminator_loss(tape: Tape, D_real: Node, D_fake: Node) -> Node:
    """-mean log D(real) - mean log(1 - D(fake))."""
    real_term = tape.mean(safe_log(tape, D_real))
    fake_term = tape.mean(safe_log(tape, 1.0 - D_fake))
    return tape.scale(tape.add(real_term, fake_term), -1.0)


def d_loss(tape: Tape, omega_layers, spec: MlpSpec, real: np.ndarray,
           fakes: list[np.ndarray]) -> Node:
    """Discriminator loss with the fake half split evenly across parent generators.

    ``real`` has m rows; ``fakes`` holds one (m/mu)-row batch per parent. Both
    sums are normalized by m.
    """
    m = real.shape[0]
    if not fakes:
        raise ValueError("need at least one fake batch")
    rows = {f.shape[0] for f in fakes}
    if len(rows) != 1 or rows.pop() * len(fakes) != m:
        raise ValueError(f"fake batches {[f.shape[0] for f in fakes]} must split {m} rows evenly")
    fake = np.concatenate(fakes, axis=0) if len(fakes) > 1 else fakes[0]
    _, D_real = discriminator_forward(tape, omega_layers, spec, tape.const(real))
    _, D_fake = discriminator_forward(tape, omega_layers, spec, tape.const(fake))
    return bce_discriminator_loss(tape, D_real, D_fake)


def critic_input_gradient(tape: Tape, omega_layers, spec: MlpSpec, x: np.ndarray) -> tuple[Node, Node]:
    """C(x) and dC/dx, with dC/dx built from tape ops so it stays differentiable in omega.

    This is the hand-unrolled backward pass of the MLP written forward on the
    tape, which gives exact second-order terms for the gradient penalty.
    """
    check_discriminator_spec(spec)
    h = tape.const(x)
    pre, post = [], []
    last = len(omega_layers) - 1
    for k, (W, b) in enumerate(omega_layers):
        a = tape.add_bias(tape.matmul(h, W), b)
        pre.append(a)
        if k < last:
            h = tape.relu(a) if spec.hidden_activation == "relu" else tape.tanh(a)
            post.append(h)
    C = tape.sum_rows(pre[-1])
    ones = tape.const(np.ones((x.shape[0], 1)))
    grad_h = tape.matmul(ones, tape.transpose(omega_layers[-1][0]))
    for k in range(last - 1, -1, -1):
        if spec.hidden_activation == "relu":
            slope = tape.const((pre[k].value > 0.0).astype(np.float64))
        else:
            slope = 1.0 - tape.square(post[k])
        delta = tape.mul(grad_h, slope)
        grad_h = tape.matmul(delta, tape.transpose(omega_layers[k][0]))
    return C, grad_h


def gp_term(tape: Tape, omega_layers, spec: MlpSpec, real: np.ndarray, fake: np.ndarray,
            lam: float, rng: np.random.Generator) -> Node:
    """lam * mean over interpolates of (||dC/dx||_2 - 1)^2."""
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} batches differ in shape")
    if lam < 0:
        raise ValueError("gradient penalty weight must be non-negative")
    if lam == 0:
        return tape.const(0.0)
    u = rng.uniform(size=(real.shape[0], 1))
    x_hat = u * real + (1.0 - u) * fake
    _, grad_x = critic_input_gradient(tape, omega_layers, spec, x_hat)
    norm = tape.sqrt(tape.add_scalar(tape.sum_rows(tape.square(grad_x)), EPS_NORM))
    return tape.scale(tape.mean(tape.square(tape.add_scalar(norm, -1.0))), lam)


def mutation_loss(tape: Tape, kind, D_fake: Node) -> Node:
    kind = MutationKind(kind)
    if kind is MutationKind.MINIMAX:
        return tape.scale(tape.mean(safe_log(tape, 1.0 - D_fake)), 0.5)
    if kind is MutationKind.HEURISTIC:
        return tape.scale(tape.mean(safe_log(tape, D_fake)), -0.5)
    return tape.mean(tape.square(tape.add_scalar(D_fake, -1.0)))


TIE_POLICIES = ("x", "y", "none")


def distillation_targets(x_out: np.ndarray, y_out: np.ndarray, C_x: np.ndarray, C_y: np.ndarray,
                         tie_policy: str = "x") -> tuple[np.ndarray, np.ndarray]:
    """Per-row imitation target and row weight (0 only for skipped ties)."""
    if tie_policy not in TIE_POLICIES:
        raise ValueError(f"tie_policy must be one of {TIE_POLICIES}")
    x_wins = C_x > C_y
    y_wins = C_y > C_x
    if tie_policy == "y":
        take_x = x_wins
    else:
        take_x = ~y_wins
    target = np.where(take_x[:, None], x_out, y_out)
    weight = (x_wins | y_wins).astype(np.float64) if tie_policy == "none" else np.ones(len(C_x))
    return target, weight


def distillation_loss(tape: Tape, child_out: Node, x_out: np.ndarray, y_out: np.ndarray,
                      C_x: np.ndarray, C_y: np.ndarray, tie_policy: str = "x",
                      normalize: bool = True) -> Node:
    """Squared distance from the child's outputs to the higher-scored parent output, row by row.

    Targets are constants. With ``normalize`` the sum over rows is divided by
    the row count; otherwise the plain sum is returned.
    """
    n = child_out.value.shape[0]
    if not (x_out.shape == y_out.shape == child_out.value.shape) or C_x.shape != (n,) or C_y.shape != (n,):
        raise ValueError("child, parent outputs and logits must share the same row count and width")
    target, weight = distillation_targets(x_out, y_out, C_x, C_y, tie_policy)
    diff = tape.sub(child_out, tape.const(target))
    if not weight.all():
        diff = tape.mul(diff, tape.const(np.repeat(weight[:, None], diff.value.shape[1], axis=1)))
    total = tape.sum(tape.square(diff))
    return tape.scale(total, 1.0 / n) if normalize else total
