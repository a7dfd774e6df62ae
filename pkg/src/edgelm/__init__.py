"""Desk-scale edge language-model mechanisms: threshold-gated token
routing, clustered sparse attention, hybrid-precision fake quantization,
cross-domain metrics, and edge-inference cost modeling."""

from . import cli, config, metrics, model, quant, repro, routing, scar

__all__ = ["cli", "config", "metrics", "model", "quant", "repro", "routing", "scar"]
__version__ = "0.1.0"
