"""Self-improving power control: a WMMSE-supervised deep ensemble whose
epistemic uncertainty decides when to fall back to the optimizer."""

__version__ = "0.1.0"
