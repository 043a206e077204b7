"""Finite-difference checks of every training objective on small random networks."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Node, Tape, backward
from .nets import (MlpSpec, bind_params, const_params, discriminator_forward, flat_grad, generate,
                   generator_forward, init_params, unflatten)
from .objectives import MUTATION_KINDS, d_loss, distillation_loss, gp_term, mutation_loss

DISC_SPEC = MlpSpec((2, 16, 1), "relu", "identity")
GEN_SPEC = MlpSpec((8, 32, 2), "tanh", "identity")
STEP = 1e-5
TOLERANCE = 1e-4
# a perturbation of STEP moves a pre-activation by about STEP * |x|; keep kinks 100x further away
KINK_MARGIN = 1e-3


def net_grad_check(build: Callable[[Tape, list], Node], theta: np.ndarray, spec: MlpSpec,
                   step: float = STEP) -> float:
    """Like :func:`cegan.autodiff.grad_check` but over a network's flat parameter vector.

    ``build(tape, layers)`` receives the per-layer (W, b) leaves and returns a scalar node.
    """
    tape = Tape()
    root = build(tape, bind_params(tape, theta, spec, "p"))
    analytic = flat_grad(backward(tape, root), spec, "p")

    def value_at(p):
        t = Tape()
        return float(build(t, const_params(t, p, spec)).value)

    worst = 0.0
    for k in range(theta.size):
        hi, lo = theta.copy(), theta.copy()
        hi[k] += step
        lo[k] -= step
        numeric = (value_at(hi) - value_at(lo)) / (2 * step)
        worst = max(worst, abs(analytic[k] - numeric) / max(1.0, abs(analytic[k])))
    return worst


def _instance(seed: int):
    rng = np.random.default_rng(seed)
    omega = init_params(DISC_SPEC, rng.integers(2**32))
    theta = init_params(GEN_SPEC, rng.integers(2**32))
    return rng, omega, theta


def check_d_loss(seed: int) -> float:
    rng, omega, theta = _instance(seed)
    real = rng.normal(size=(8, 2))
    z = rng.normal(size=(8, 8))
    fakes = [generate(theta, GEN_SPEC, z[:4]), generate(theta, GEN_SPEC, z[4:])]
    return net_grad_check(lambda t, L: d_loss(t, L, DISC_SPEC, real, fakes), omega, DISC_SPEC)


def relu_margin(omega: np.ndarray, spec: MlpSpec, x: np.ndarray) -> float:
    """Smallest |pre-activation| of any relu unit over the rows of ``x`` (inf without relu)."""
    if spec.hidden_activation != "relu":
        return float("inf")
    h, margin = np.asarray(x, dtype=float), float("inf")
    layers = unflatten(omega, spec)
    for W, b in layers[:-1]:
        a = h @ W + b
        margin = min(margin, float(np.abs(a).min()))
        h = np.maximum(a, 0.0)
    return margin


def check_gp(seed: int) -> float:
    """GP gradient check away from relu kinks.

    With relu hidden units dC/dx is piecewise constant, so the penalty jumps
    wherever a hidden pre-activation at an interpolate crosses zero. A central
    difference straddling such a point is not a valid reference, so the batch
    is redrawn until every pre-activation clears ``KINK_MARGIN``.
    """
    rng, omega, theta = _instance(seed)
    while True:
        real = rng.normal(size=(8, 2))
        fake = generate(theta, GEN_SPEC, rng.normal(size=(8, 8)))
        draw = rng.integers(2**32)
        u = np.random.default_rng(draw).uniform(size=(8, 1))
        x_hat = u * real + (1.0 - u) * fake
        if relu_margin(omega, DISC_SPEC, x_hat) > KINK_MARGIN:
            break
    return net_grad_check(
        lambda t, L: gp_term(t, L, DISC_SPEC, real, fake, 10.0, np.random.default_rng(draw)),
        omega, DISC_SPEC)


def check_mutation(seed: int, kind: str) -> float:
    rng, omega, theta = _instance(seed)
    z = rng.normal(size=(8, 8))

    def build(t, layers):
        fake = generator_forward(t, layers, GEN_SPEC, t.const(z))
        _, D = discriminator_forward(t, const_params(t, omega, DISC_SPEC), DISC_SPEC, fake)
        return mutation_loss(t, kind, D)

    return net_grad_check(build, theta, GEN_SPEC)


def check_distillation(seed: int) -> float:
    rng, omega, theta = _instance(seed)
    z = rng.normal(size=(8, 8))
    x_out = rng.normal(size=(8, 2))
    y_out = rng.normal(size=(8, 2))
    C_x, C_y = rng.normal(size=8), rng.normal(size=8)

    def build(t, layers):
        out = generator_forward(t, layers, GEN_SPEC, t.const(z))
        return distillation_loss(t, out, x_out, y_out, C_x, C_y)

    return net_grad_check(build, theta, GEN_SPEC)


CHECKS: dict[str, Callable[[int], float]] = {
    "d_loss": check_d_loss,
    **{f"mutation_{k}": (lambda s, k=k: check_mutation(s, k)) for k in MUTATION_KINDS},
    "distillation": check_distillation,
    "gradient_penalty": check_gp,
}


def run_suite(instances: int = 50, seed: int = 0) -> dict[str, float]:
    """Worst relative error per objective over ``instances`` random networks."""
    return {name: max(fn(seed + k) for k in range(instances)) for name, fn in CHECKS.items()}
