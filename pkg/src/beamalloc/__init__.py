"""Max-min SINR power and CDI-bit allocation for zeroforcing MIMO-NOMA and
regularized-zeroforcing MIMO-OMA downlinks."""

__version__ = "0.1.0"
