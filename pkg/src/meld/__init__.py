"""Masked discrete diffusion for labeled graphs with element-wise learnable noise schedules."""

__version__ = "0.1.0"
