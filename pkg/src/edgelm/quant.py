"""Symmetric uniform fake quantization, hybrid-precision memory accounting,
the composite quantization-aware loss, and closed-form degradation bounds."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class LayerClass(Enum):
    DOMAIN_SPECIFIC = "domain_specific"
    ROUTER = "router"
    GENERAL = "general"


DEFAULT_BITS = {
    LayerClass.DOMAIN_SPECIFIC: 4,
    LayerClass.ROUTER: 6,
    LayerClass.GENERAL: 8,
}


@dataclass(frozen=True)
class Quantizer:
    """Symmetric mid-tread quantizer over [-range_max, range_max].

    2^bits - 1 representable levels; zero is always exactly representable.
    """

    bits: int
    range_max: float = 1.0

    def __post_init__(self):
        if self.bits < 1 or self.bits > 32:
            raise ValueError("invalid bit-width")
        if not self.range_max > 0:
            raise ValueError("range_max must be positive")

    @property
    def levels(self) -> int:
        return 2**self.bits - 1

    @property
    def step(self) -> float:
        return 2.0 * self.range_max / self.levels


@dataclass(frozen=True)
class PrecisionEntry:
    layer_class: LayerClass
    param_count: int
    bits: int

    def __post_init__(self):
        if self.param_count < 0:
            raise ValueError("param_count must be non-negative")
        if self.bits < 1:
            raise ValueError("invalid bit-width")


@dataclass(frozen=True)
class PrecisionMap:
    """Per-layer-class bit-width assignment driving quantizers and memory."""

    entries: tuple[PrecisionEntry, ...]

    @classmethod
    def from_records(cls, records) -> "PrecisionMap":
        entries = tuple(
            PrecisionEntry(LayerClass(r["class"]), int(r["params"]), int(r["bits"]))
            for r in records
        )
        return cls(entries)

    @classmethod
    def default_hybrid(cls, domain_params: int, general_params: int, router_params: int) -> "PrecisionMap":
        return cls((
            PrecisionEntry(LayerClass.DOMAIN_SPECIFIC, domain_params, 4),
            PrecisionEntry(LayerClass.GENERAL, general_params, 8),
            PrecisionEntry(LayerClass.ROUTER, router_params, 6),
        ))

    def bits_for(self, layer_class: LayerClass) -> int:
        for e in self.entries:
            if e.layer_class == layer_class:
                return e.bits
        return DEFAULT_BITS[layer_class]

    def total_params(self) -> int:
        return sum(e.param_count for e in self.entries)


@dataclass(frozen=True)
class QakpLossParts:
    """Components of the composite quantization-aware training loss."""

    task_loss: float
    quant_penalty: float = 0.0
    kd_loss: float = 0.0
    lambda_quant: float = 0.1
    lambda_kd: float = 0.5

    def __post_init__(self):
        if self.task_loss < 0 or self.quant_penalty < 0 or self.kd_loss < 0:
            raise ValueError("negative loss component")

    @property
    def total(self) -> float:
        return qakp_loss(self)


def uniform_quantize(values: Sequence[float] | np.ndarray, q: Quantizer) -> np.ndarray:
    """Snap values to the quantizer grid.

    The level index is clamped to the representable range so every output
    lies exactly on the grid (at most 2^b - 1 distinct outputs); this keeps
    the operation idempotent and symmetric.
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite value")
    delta = q.step
    max_index = 2 ** (q.bits - 1) - 1
    idx = np.clip(np.round(arr / delta), -max_index, max_index)
    return idx * delta


def memory_bytes(param_count: int, bits: int) -> int | float:
    """Storage footprint of `param_count` weights at `bits` each."""
    if param_count < 0:
        raise ValueError("param_count must be non-negative")
    if bits < 1:
        raise ValueError("invalid bit-width")
    total_bits = param_count * bits
    if total_bits % 8 == 0:
        return total_bits // 8
    return total_bits / 8


def hybrid_memory(pm: PrecisionMap):
    """Total bytes across a mixed-precision layer map."""
    return sum(memory_bytes(e.param_count, e.bits) for e in pm.entries)


def qakp_loss(parts: QakpLossParts) -> float:
    """task + lambda_quant * quant_penalty + lambda_kd * kd_loss."""
    return (
        parts.task_loss
        + parts.lambda_quant * parts.quant_penalty
        + parts.lambda_kd * parts.kd_loss
    )


def quant_noise_model(sigma: float, bits: int) -> float:
    """Analytic performance-perturbation model: proportional to sigma^2 / b^2.

    This is the closed-form degradation law, kept separate from the
    empirical quantizer MSE (which scales as 4^-b); see empirical_quant_mse.
    """
    if bits < 1:
        raise ValueError("invalid bit-width")
    return sigma**2 / bits**2


def gg_lower_bound(c: float, compression_ratio: float, capacity: int) -> float:
    """Lower bound on the generalization gap: c * CR / sqrt(capacity)."""
    if capacity == 0:
        raise ValueError("zero capacity")
    return c * compression_ratio / np.sqrt(capacity)


def empirical_quant_mse(bits: int, sample_count: int, seed: int) -> float:
    """Measured MSE of uniform quantization over U[-1, 1] draws.

    Deterministic for a fixed seed; approaches step^2 / 12 for moderate bits.
    """
    if sample_count == 0:
        raise ValueError("sample_count must be positive")
    rng = np.random.default_rng(seed)
    values = rng.uniform(-1.0, 1.0, size=sample_count)
    quantized = uniform_quantize(values, Quantizer(bits=bits, range_max=1.0))
    return float(np.mean((values - quantized) ** 2))
