"""Link-level simulation and rate analysis for a coset-quantizing relay
in the two-user Gaussian interference channel."""

__version__ = "0.1.0"
