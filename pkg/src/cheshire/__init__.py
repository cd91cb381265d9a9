"""Two-state vector formalism, weak values and the quantum Cheshire cat."""

__version__ = "0.1.0"
