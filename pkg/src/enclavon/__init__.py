"""enclavon: a partitioned trusted-execution runtime with a simulated enclave."""

__version__ = "0.1.0"
