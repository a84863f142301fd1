"""Discrete latent-action toolkit: information-maximizing discrete sentence
autoencoders, their skip-thought variants, and interpretable dialog
generation on top of the learned codes."""

__version__ = "0.1.0"

from . import kernels

__all__ = ["kernels", "__version__"]
