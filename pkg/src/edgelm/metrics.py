"""Cross-domain evaluation metrics (generalization gap, transfer ratio,
specialization index), edge-platform profiles, and inference cost
arithmetic (FLOPs, energy, session totals)."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MetricRecord:
    source_domain: str
    in_domain_perf: float
    out_domain_perfs: dict[str, float]
    # Out-of-domain domain the gap is measured against; defaults to the mean.
    gg_reference: str | None = None

    def __post_init__(self):
        if not self.out_domain_perfs:
            raise ValueError("at least one out-of-domain entry required")
        for v in [self.in_domain_perf, *self.out_domain_perfs.values()]:
            if not (0.0 <= v <= 1.0):
                raise ValueError("performance values must lie in [0, 1]")
        if self.gg_reference is not None and self.gg_reference not in self.out_domain_perfs:
            raise ValueError("gg_reference must name an out-of-domain entry")

    @property
    def out_domain_mean(self) -> float:
        vals = list(self.out_domain_perfs.values())
        return sum(vals) / len(vals)


@dataclass(frozen=True)
class PlatformProfile:
    name: str
    ram_bytes: float
    peak_flops: float
    typical_power_watts: float

    def __post_init__(self):
        if self.ram_bytes <= 0 or self.peak_flops <= 0 or self.typical_power_watts <= 0:
            raise ValueError("platform constants must be positive")


# Built-in device profiles; overridable via config.
PLATFORMS = {
    "raspberry_pi_4": PlatformProfile("raspberry_pi_4", 4e9, 12e9, 2.5),
    "pixel_6": PlatformProfile("pixel_6", 8e9, 20e12, 2.8),
    "iphone_13": PlatformProfile("iphone_13", 6e9, 15.8e12, 2.9),
    "custom_npu": PlatformProfile("custom_npu", 8e9, 20e12, 2.6),
}


@dataclass(frozen=True)
class CostReport:
    flops_per_token: float
    latency_s_per_token: float
    power_w: float
    energy_j_per_token: float
    memory_bytes: float


def generalization_gap(in_perf: float, out_perf: float) -> float:
    """(in - out) / in: relative in-domain vs out-of-domain drop."""
    if in_perf == 0:
        raise ValueError("undefined gap")
    return (in_perf - out_perf) / in_perf


def cdtr(perf_target: float, perf_source: float) -> float:
    """Cross-domain transfer ratio: target performance over source."""
    if perf_source == 0:
        raise ValueError("zero source performance")
    return perf_target / perf_source


def dsi(record: MetricRecord) -> float:
    """Domain specialization index: in-domain over mean out-of-domain."""
    mean_out = record.out_domain_mean
    if mean_out == 0:
        raise ValueError("zero out-of-domain mean")
    return record.in_domain_perf / mean_out


def energy_per_token(power_w: float, latency_s: float) -> float:
    """Joules per token: power times latency."""
    return power_w * latency_s


def flops_per_token(layers: int, hidden: int) -> int:
    """layers * hidden^2 * 2."""
    return layers * hidden**2 * 2


def energy_ratio(bits_a: int, bits_b: int) -> float:
    """Relative ALU energy: (bits_a / bits_b)^2."""
    return (bits_a / bits_b) ** 2


def session_cost(tokens: int, latency_s_per_token: float, energy_j_per_token: float):
    """Total latency and energy for a fixed-length session."""
    return {
        "total_latency_s": tokens * latency_s_per_token,
        "total_energy_j": tokens * energy_j_per_token,
    }


def compute_all(records: list[MetricRecord]) -> list[dict]:
    """Per-record metric table in fixed column order.

    CDTR is reported pairwise against each out-of-domain entry.
    """
    rows = []
    for r in records:
        cdtr_by_domain = {
            target: cdtr(perf, r.in_domain_perf)
            for target, perf in r.out_domain_perfs.items()
        }
        gg_out = (
            r.out_domain_perfs[r.gg_reference]
            if r.gg_reference is not None
            else r.out_domain_mean
        )
        rows.append({
            "model": r.source_domain,
            "in_domain": r.in_domain_perf,
            "out_domain_avg": r.out_domain_mean,
            "gg": generalization_gap(r.in_domain_perf, gg_out),
            "cdtr": cdtr_by_domain,
            "dsi": dsi(r),
        })
    return rows
