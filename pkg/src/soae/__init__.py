"""Hessian-free second-order adversarial examples and training."""

__version__ = "0.1.0"
