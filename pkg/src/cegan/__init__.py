"""Evolutionary GAN training with distillation crossover on small 2-D benchmarks."""

__version__ = "0.1.0"
