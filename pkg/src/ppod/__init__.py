"""Demonstration-guided PPO: training engine, sparse-reward envs, replay buffers."""

__version__ = "0.1.0"
