"""Sliding-mode control with a DDPG-learned compensation term."""

__version__ = "0.1.0"
