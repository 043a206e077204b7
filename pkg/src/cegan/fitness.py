"""Generator fitness as judged by the current (frozen) discriminator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, backward, stable_sigmoid
from .nets import MlpSpec, bind_params, critic, discriminator_forward, flat_grad, generate
from .objectives import EPS_NORM, bce_discriminator_loss

FITNESS_TAGS = ("egan", "cgan")


@dataclass
class FitnessReport:
    quality: float
    diversity: float | None
    combined: float
    function_tag: str


def fitness_quality(omega, d_spec: MlpSpec, theta, g_spec: MlpSpec, noise: np.ndarray) -> float:
    """Mean D(G(z)) over the evaluation noise."""
    return float(stable_sigmoid(critic(omega, d_spec, generate(theta, g_spec, noise))).mean())


def fitness_cgan(omega, d_spec: MlpSpec, theta, g_spec: MlpSpec, noise: np.ndarray) -> float:
    """Mean raw logit C(G(z)); needs nothing beyond one forward pass."""
    return float(critic(omega, d_spec, generate(theta, g_spec, noise)).mean())


def disc_loss_grad_norm(omega, d_spec: MlpSpec, real: np.ndarray, fake: np.ndarray) -> float:
    """L2 norm of the discriminator loss gradient, flattened over every parameter of omega."""
    tape = Tape()
    layers = bind_params(tape, omega, d_spec, "d")
    _, D_real = discriminator_forward(tape, layers, d_spec, tape.const(real))
    _, D_fake = discriminator_forward(tape, layers, d_spec, tape.const(fake))
    loss = bce_discriminator_loss(tape, D_real, D_fake)
    g = flat_grad(backward(tape, loss), d_spec, "d")
    return float(np.sqrt(g @ g))


def diversity_from_norm(norm: float) -> float:
    return float(-np.log(norm + EPS_NORM))


def fitness_diversity(omega, d_spec: MlpSpec, theta, g_spec: MlpSpec, real: np.ndarray,
                      noise: np.ndarray) -> float:
    """Negative log gradient norm of the discriminator loss against this generator."""
    fake = generate(theta, g_spec, noise)
    return diversity_from_norm(disc_loss_grad_norm(omega, d_spec, real, fake))


def fitness_egan(quality: float, diversity: float, gamma: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return quality + gamma * diversity


def report_from_samples(tag: str, omega, d_spec: MlpSpec, samples: np.ndarray, C: np.ndarray,
                        real: np.ndarray | None = None, gamma: float = 0.05) -> FitnessReport:
    """Fitness from already generated samples and their logits (evaluation cache reuse)."""
    if tag == "cgan":
        c = float(C.mean())
        return FitnessReport(c, None, c, tag)
    if tag == "egan":
        if real is None:
            raise ValueError("egan fitness needs a real batch")
        q = float(stable_sigmoid(C).mean())
        d = diversity_from_norm(disc_loss_grad_norm(omega, d_spec, real, samples))
        return FitnessReport(q, d, fitness_egan(q, d, gamma), tag)
    raise ValueError(f"fitness tag must be one of {FITNESS_TAGS}")
