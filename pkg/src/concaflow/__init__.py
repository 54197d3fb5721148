"""F-concavity calculus and heat-flow experiments."""

__version__ = "0.1.0"
