"""Simulator of temporally multiplexed quantum teleportation onto a
solid-state memory: truncated Fock-space optics, component models, a
discrete-event protocol engine, and fidelity analysis."""

__version__ = "0.1.0"

from ._kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
