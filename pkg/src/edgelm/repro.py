"""Reproduction table: every closed-form published constant recomputed
through the library, diffed against its stated value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics, quant, routing, scar
from .quant import LayerClass, PrecisionEntry, PrecisionMap, QakpLossParts


@dataclass(frozen=True)
class ReproRow:
    label: str
    published_value: float
    computed_value: float
    tolerance: float
    noted_inconsistency: bool = False

    @property
    def abs_diff(self) -> float:
        return abs(self.published_value - self.computed_value)

    @property
    def status(self) -> str:
        if self.noted_inconsistency:
            return "noted_inconsistency"
        return "match" if self.abs_diff <= self.tolerance else "mismatch"


def _route_agrees(max_prob: float, tau: float, expect_general: bool) -> float:
    probs = np.array([max_prob] + [(1.0 - max_prob) / 7] * 7)
    decision = routing.route(routing.DomainProbabilities(probs=probs), tau)
    return 1.0 if decision.is_general == expect_general else 0.0


def reproduction_table() -> list[ReproRow]:
    rows = []

    def add(label, published_value, computed, tolerance=1e-6, noted=False):
        rows.append(ReproRow(label, published_value, float(computed), tolerance, noted))

    # sparse vs dense attention operation counts
    add("dense attention ops, n=128", 16384, scar.dense_ops(128))
    add("sparse attention ops, n=128 k=16", 2176, scar.scar_ops(128, 16))
    add("sparse attention ops, n=128 k=8", 1152, scar.scar_ops(128, 8))
    add("sparse reduction vs dense, k=16", 0.8671875, scar.reduction(16384, 2176), 1e-9)
    add("sparse reduction, k=8 vs k=16", 0.4706, scar.reduction(2176, 1152), 5e-5)

    # router cost accounting
    cfg = routing.RouterConfig()
    add("router FLOPs/token (displayed 9.4 MFLOPs)", 9_437_184, routing.router_flops(cfg))
    add("pruned router MFLOPs (7.4M -> 5M params)", 6.35e6,
        routing.pruned_router_flops(9.4e6, 7.4e6, 5.0e6), 0.01e6)
    add("router parameter count (stated 7.4M, toy construction)", 7.4e6,
        routing.RouterEncoder(cfg, seed=0).param_count, 1.0, noted=True)

    # routing rule worked examples
    add("route: max prob 0.85 > tau 0.7 -> domain", 1.0, _route_agrees(0.85, 0.7, False))
    add("route: max prob 0.62 <= tau 0.7 -> general", 1.0, _route_agrees(0.62, 0.7, True))

    # quantization and memory accounting
    add("FP32 footprint of 10.5M params (MB)", 42e6, quant.memory_bytes(10_500_000, 32))
    add("stated pre-compression footprint 336 MB vs 4 bytes/param", 336e6,
        quant.memory_bytes(10_500_000, 32), 1.0, noted=True)
    pm = PrecisionMap((
        PrecisionEntry(LayerClass.DOMAIN_SPECIFIC, 40_000_000, 4),
        PrecisionEntry(LayerClass.GENERAL, 20_000_000, 8),
        PrecisionEntry(LayerClass.ROUTER, 20_000_000, 6),
    ))
    add("hybrid memory for 80M params (MB)", 55e6, quant.hybrid_memory(pm))
    add("composite loss (task 2.0, quant 1.0, kd 4.0)", 4.1,
        quant.qakp_loss(QakpLossParts(task_loss=2.0, quant_penalty=1.0, kd_loss=4.0)), 1e-9)
    add("noise-model degradation ratio, 4-bit vs 8-bit", 4.0,
        quant.quant_noise_model(1.0, 4) / quant.quant_noise_model(1.0, 8), 1e-9)

    # cross-domain metrics
    add("generalization gap, healthcare (0.95 vs 0.40)", 0.578947368,
        metrics.generalization_gap(0.95, 0.40), 1e-9)
    add("generalization gap, legal (0.90 vs 0.62)", 0.311111111,
        metrics.generalization_gap(0.90, 0.62), 1e-9)
    add("transfer ratio, finance -> legal (0.60/0.90)", 0.666666667,
        metrics.cdtr(0.60, 0.90), 1e-9)
    add("transfer ratio, healthcare -> general (0.40/0.95)", 0.421052632,
        metrics.cdtr(0.40, 0.95), 1e-9)
    finance = metrics.MetricRecord("finance", 0.90, {"healthcare": 0.30, "legal": 0.30, "stem": 0.30})
    add("specialization index, finance (0.90/0.30)", 3.0, metrics.dsi(finance), 1e-9)
    chatbot = metrics.MetricRecord("healthcare", 0.95, {"a": 0.40, "b": 0.45, "c": 0.50})
    add("specialization index, healthcare chatbot", 2.111111111, metrics.dsi(chatbot), 1e-9)
    legal = metrics.MetricRecord("legal", 0.90, {"finance": 0.62})
    add("specialization index, legal (out-mean 0.62)", 1.4516, metrics.dsi(legal), 1e-4)

    # energy / cost arithmetic
    add("energy per token, in-domain (J)", 0.125, metrics.energy_per_token(2.5, 0.050), 1e-9)
    add("energy per token, out-of-domain (J)", 0.189, metrics.energy_per_token(2.7, 0.070), 1e-9)
    add("energy increase out-of-domain (%)", 51.20,
        100.0 * (metrics.energy_per_token(2.7, 0.070) / metrics.energy_per_token(2.5, 0.050) - 1.0),
        1e-6)
    add("dense FLOPs per token (12 layers, 128 hidden)", 393_216, metrics.flops_per_token(12, 128))
    add("ALU energy ratio, 4-bit vs 8-bit", 0.25, metrics.energy_ratio(4, 8), 1e-9)
    session = metrics.session_cost(10, 0.0824, 0.23)
    add("10-token session latency (s)", 0.824, session["total_latency_s"], 1e-9)
    add("10-token session energy (J)", 2.3, session["total_energy_j"], 1e-9)

    return rows


def has_unexpected_mismatch(rows: list[ReproRow]) -> bool:
    return any(r.status == "mismatch" for r in rows)


def format_table(rows: list[ReproRow]) -> str:
    """Plain-text aligned table for standard output."""
    label_w = max(len(r.label) for r in rows)
    header = f"{'quantity':<{label_w}}  {'published':>16}  {'computed':>16}  {'abs diff':>12}  status"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.label:<{label_w}}  {r.published_value:>16.9g}  {r.computed_value:>16.9g}"
            f"  {r.abs_diff:>12.3g}  {r.status}"
        )
    return "\n".join(lines)
