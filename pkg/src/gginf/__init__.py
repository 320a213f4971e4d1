"""Measure-valued G/GI/infinity queue: simulation, fluid and diffusion limits."""

__version__ = "0.1.0"
