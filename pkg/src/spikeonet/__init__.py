"""Spiking neural-network primitives and a spiking DeepONet."""

from spikeonet.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
