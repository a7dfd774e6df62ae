"""Threshold-gated dynamic token routing: a toy quantized transformer
encoder produces per-token domain probabilities, and a threshold rule sends
each token to a domain pathway or the general pathway. Includes exact FLOPs
accounting for the router."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quant import Quantizer, uniform_quantize


@dataclass(frozen=True)
class RouterConfig:
    layers: int = 6
    hidden: int = 256
    heads: int = 12
    domains: int = 8
    tau: float = 0.7
    vocab_size: int = 4096
    bits: int = 4

    def __post_init__(self):
        if self.domains < 2:
            raise ValueError("domains must be at least 2")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        if self.layers < 0 or self.hidden < 1 or self.heads < 1:
            raise ValueError("invalid router dimensions")


@dataclass(frozen=True)
class DomainProbabilities:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("invalid probability vector")


@dataclass(frozen=True)
class RoutingDecision:
    token_index: int
    max_prob: float
    domain: int | None  # None means the general pathway

    @property
    def is_general(self) -> bool:
        return self.domain is None

    @property
    def target(self) -> str:
        return "general" if self.domain is None else f"domain:{self.domain}"


def _quantized(shape, scale: float, bits: int, generator) -> np.ndarray:
    w = generator.normal(0.0, scale, size=shape)
    q = Quantizer(bits=bits, range_max=float(np.max(np.abs(w))) or 1.0)
    return uniform_quantize(w, q)


class RouterEncoder:
    """Toy per-token transformer encoder with fake-quantized weights.

    Stands in for the 4-bit encoder of the full system: same layer/hidden
    shape, hash-free seeded embeddings, deterministic forward pass. With a
    single token per call the attention softmax is degenerate, so each block
    reduces to its value/output and feed-forward projections.
    """

    def __init__(self, config: RouterConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        g = np.random.default_rng(seed)
        h = config.hidden
        bits = config.bits
        scale = 1.0 / np.sqrt(h)

        self.embedding = _quantized((config.vocab_size, h), 1.0, bits, g)
        self.blocks = []
        for _ in range(config.layers):
            self.blocks.append({
                "w_q": _quantized((h, h), scale, bits, g),
                "w_k": _quantized((h, h), scale, bits, g),
                "w_v": _quantized((h, h), scale, bits, g),
                "w_o": _quantized((h, h), scale, bits, g),
                "w_ff1": _quantized((h, h), scale, bits, g),
                "w_ff2": _quantized((h, h), scale, bits, g),
            })
        self.projection = _quantized((config.domains, h), scale, bits, g)
        self._cache: dict[int, np.ndarray] = {}

    @property
    def param_count(self) -> int:
        count = self.embedding.size + self.projection.size
        for block in self.blocks:
            count += sum(w.size for w in block.values())
        return int(count)


def _layer_norm(x: np.ndarray) -> np.ndarray:
    mu = x.mean()
    sd = x.std()
    return (x - mu) / (sd + 1e-6)


def encode_token(token_id: int, encoder: RouterEncoder) -> np.ndarray:
    """Deterministic embedding of one token through the encoder stack."""
    cfg = encoder.config
    if not (0 <= token_id < cfg.vocab_size):
        raise ValueError("out-of-vocabulary")
    cached = encoder._cache.get(token_id)
    if cached is not None:
        return cached
    x = encoder.embedding[token_id]
    for block in encoder.blocks:
        # single-position attention: softmax weight is 1 on the token itself
        attn = block["w_o"] @ (block["w_v"] @ x)
        x = _layer_norm(x + attn)
        ff = block["w_ff2"] @ np.maximum(block["w_ff1"] @ x, 0.0)
        x = _layer_norm(x + ff)
    encoder._cache[token_id] = x
    return x


def domain_probs(embedding: np.ndarray, projection: np.ndarray) -> DomainProbabilities:
    """Softmax of the domain projection applied to a token embedding."""
    embedding = np.asarray(embedding, dtype=np.float64)
    if projection.shape[1] != embedding.shape[0]:
        raise ValueError("dimension mismatch")
    logits = projection @ embedding
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return DomainProbabilities(probs=exp / exp.sum())


def route(probs: DomainProbabilities, tau: float, token_index: int = 0) -> RoutingDecision:
    """Argmax domain if its probability strictly exceeds tau, else general.

    Argmax ties break to the lowest domain index.
    """
    p = np.asarray(probs.probs)
    best = int(np.argmax(p))
    max_prob = float(p[best])
    domain = best if max_prob > tau else None
    return RoutingDecision(token_index=token_index, max_prob=max_prob, domain=domain)


def route_sequence(tokens, config: RouterConfig, encoder: RouterEncoder) -> list[RoutingDecision]:
    """Per-token routing decisions in input order."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("empty input")
    decisions = []
    for i, token in enumerate(tokens):
        e = encode_token(token, encoder)
        probs = domain_probs(e, encoder.projection)
        decisions.append(route(probs, config.tau, token_index=i))
    return decisions


def routing_log(decisions: list[RoutingDecision]) -> list[dict]:
    """Line-delimited log records for analysis output."""
    return [
        {"token_index": d.token_index, "max_prob": d.max_prob, "target": d.target}
        for d in decisions
    ]


def router_flops(config: RouterConfig) -> int:
    """layers * hidden^2 * heads * 2."""
    return config.layers * config.hidden**2 * config.heads * 2


def pruned_router_flops(base_flops: float, params_before: float, params_after: float) -> float:
    """Scale FLOPs by the surviving parameter fraction."""
    return base_flops * (params_after / params_before)
