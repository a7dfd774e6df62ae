"""Toy-scale assembly of the full pipeline: embedding, threshold-gated
routing into per-domain and general pathways, clustered sparse attention
inside each pathway, hybrid fake-quantized weights with straight-through
gradients, the composite training loss with a distillation scaffold, and
the catastrophic-forgetting comparison experiment."""

from __future__ import annotations

import copy
from dataclasses import dataclass, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import routing, scar
from .quant import LayerClass, PrecisionEntry, PrecisionMap, QakpLossParts

# Full-scale pathway shape, recorded for reference; the toy defaults below
# are what tests and experiments actually construct.
FULL_PATHWAY_LAYERS = 8
FULL_PATHWAY_HIDDEN = 512


@dataclass(frozen=True)
class GemConfig:
    vocab_size: int = 64
    embed_dim: int = 32
    pathway_layers: int = 2
    domains: int = 8
    num_labels: int = 8
    scar_k: int = 4
    tau: float = 0.7
    seed: int = 0
    max_seq_len: int = 64
    router_layers: int = 2
    router_hidden: int = 32
    bits_domain: int = 4
    bits_general: int = 8
    bits_router: int = 6

    def __post_init__(self):
        if self.scar_k > self.max_seq_len:
            raise ValueError("scar_k must not exceed max_seq_len")
        for name in ("vocab_size", "embed_dim", "pathway_layers", "domains",
                     "num_labels", "scar_k", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 64
    epochs: int = 10
    weight_decay: float = 0.01
    kd_enabled: bool = False
    lambda_quant: float = 0.1
    lambda_kd: float = 0.5
    kd_temperature: float = 2.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


# Recorded preset from the full-scale training recipe; unused at desk scale.
PUBMEDQA_PRESET = TrainConfig(batch_size=128)


@dataclass(frozen=True)
class SyntheticTask:
    domain_id: int
    samples: tuple  # of (token tuple, label)
    generator_seed: int

    def __post_init__(self):
        if not self.samples:
            raise ValueError("empty task")


def make_task(
    domain_id: int,
    num_samples: int,
    seq_len: int = 8,
    vocab_size: int = 64,
    num_labels: int = 4,
    seed: int = 0,
    label_permutation: int = 0,
) -> SyntheticTask:
    """Synthetic classification task with a per-domain token signature.

    Each sequence mixes label-indicator tokens (shared across domains) with
    background tokens drawn from a domain-specific band. label_permutation
    rotates the indicator-to-label mapping so two domains can be made to
    conflict on identical indicators.
    """
    rng = np.random.default_rng(seed)
    band_width = max(1, (vocab_size - num_labels) // 8)
    band_start = num_labels + (domain_id % 8) * band_width
    samples = []
    for _ in range(num_samples):
        label = int(rng.integers(num_labels))
        indicator = (label + label_permutation) % num_labels
        tokens = []
        for pos in range(seq_len):
            if pos % 2 == 0:
                tokens.append(indicator)
            else:
                tokens.append(int(band_start + rng.integers(band_width)))
        samples.append((tuple(tokens), label))
    return SyntheticTask(domain_id=domain_id, samples=tuple(samples), generator_seed=seed)


def _fake_quantize(w: torch.Tensor, bits: int) -> torch.Tensor:
    """Per-tensor symmetric fake quantization with straight-through gradients."""
    if bits >= 32:
        return w
    r = w.detach().abs().max()
    if r == 0:
        return w
    delta = 2.0 * r / (2**bits - 1)
    max_index = 2 ** (bits - 1) - 1
    q = torch.clamp(torch.round(w / delta), -max_index, max_index) * delta
    return w + (q - w).detach()


class PathwayBlock(nn.Module):
    """Transformer block whose attention is restricted to cluster blocks."""

    def __init__(self, dim: int):
        super().__init__()
        self.w_qkv = nn.Linear(dim, 3 * dim, bias=False)
        self.w_o = nn.Linear(dim, dim, bias=False)
        self.w_ff1 = nn.Linear(dim, 2 * dim, bias=False)
        self.w_ff2 = nn.Linear(2 * dim, dim, bias=False)
        self.ln1 = nn.LayerNorm(dim)
        self.ln2 = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, bits: int, scar_k: int, seed: int):
        n, dim = x.shape
        h = self.ln1(x)
        k_eff = min(scar_k, n)
        plan = scar.kmeans_cosine(
            h.detach().double().numpy() + 1e-9, k_eff, max_iters=20, seed=seed
        )
        mask = torch.from_numpy(
            scar.build_mask(plan.assignments).mask.astype(np.bool_)
        )
        qkv = F.linear(h, _fake_quantize(self.w_qkv.weight, bits))
        q, k, v = qkv.chunk(3, dim=-1)
        logits = (q @ k.T) / np.sqrt(dim)
        logits = logits.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        attn = F.linear(weights @ v, _fake_quantize(self.w_o.weight, bits))
        x = x + attn
        h = self.ln2(x)
        ff = F.linear(
            torch.relu(F.linear(h, _fake_quantize(self.w_ff1.weight, bits))),
            _fake_quantize(self.w_ff2.weight, bits),
        )
        return x + ff, plan


class GemModel(nn.Module):
    """Routed multi-pathway classifier over token sequences.

    Pathway index `domains` is the general pathway; indices below it are
    domain pathways. Weight classes map to hybrid precision: domain
    pathways at bits_domain, everything shared at bits_general, the
    (frozen, numpy) router encoder at bits_router.
    """

    def __init__(self, config: GemConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.embedding = nn.Embedding(config.vocab_size, config.embed_dim)
        self.pathways = nn.ModuleList([
            nn.ModuleList([PathwayBlock(config.embed_dim) for _ in range(config.pathway_layers)])
            for _ in range(config.domains + 1)
        ])
        self.head = nn.Linear(config.embed_dim, config.num_labels, bias=False)
        self.quantization_enabled = True
        self.router_config = routing.RouterConfig(
            layers=config.router_layers,
            hidden=config.router_hidden,
            heads=4,
            domains=config.domains,
            tau=config.tau,
            vocab_size=config.vocab_size,
            bits=config.bits_router,
        )
        self.router_encoder = routing.RouterEncoder(self.router_config, seed=config.seed)

    def _bits(self, pathway_index: int) -> int:
        if not self.quantization_enabled:
            return 32
        if pathway_index == self.config.domains:
            return self.config.bits_general
        return self.config.bits_domain

    def _shared_bits(self) -> int:
        return self.config.bits_general if self.quantization_enabled else 32

    def precision_map(self) -> PrecisionMap:
        domain_params = sum(
            p.numel() for d in range(self.config.domains) for p in self.pathways[d].parameters()
        )
        general_params = (
            sum(p.numel() for p in self.pathways[self.config.domains].parameters())
            + self.embedding.weight.numel()
            + self.head.weight.numel()
        )
        return PrecisionMap((
            PrecisionEntry(LayerClass.DOMAIN_SPECIFIC, domain_params, self.config.bits_domain),
            PrecisionEntry(LayerClass.GENERAL, general_params, self.config.bits_general),
            PrecisionEntry(LayerClass.ROUTER, self.router_encoder.param_count, self.config.bits_router),
        ))

    def route_tokens(self, tokens) -> list[routing.RoutingDecision]:
        return routing.route_sequence(tokens, self.router_config, self.router_encoder)

    def _token_logits(self, tokens):
        tokens = list(tokens)
        if len(tokens) > self.config.max_seq_len:
            raise ValueError("sequence longer than configured max")
        decisions = self.route_tokens(tokens)
        ids = torch.tensor(tokens, dtype=torch.long)
        weight = _fake_quantize(self.embedding.weight, self._shared_bits())
        x = F.embedding(ids, weight.to(self.head.weight.dtype))

        out = torch.zeros_like(x)
        plans = []
        general = self.config.domains
        groups: dict[int, list[int]] = {}
        for i, d in enumerate(decisions):
            pathway = general if d.is_general else d.domain
            groups.setdefault(pathway, []).append(i)
        for pathway, positions in sorted(groups.items()):
            h = x[positions]
            for layer_idx, block in enumerate(self.pathways[pathway]):
                h, plan = block(
                    h, self._bits(pathway), self.config.scar_k,
                    seed=self.config.seed + layer_idx,
                )
                plans.append(plan)
            out[positions] = h
        logits = F.linear(out, _fake_quantize(self.head.weight, self._shared_bits()))
        return logits, decisions, plans

    def forward(self, tokens):
        """Per-token label distributions, routing decisions, cluster plans."""
        logits, decisions, plans = self._token_logits(tokens)
        return torch.softmax(logits, dim=-1), decisions, plans

    def sequence_logits(self, tokens) -> torch.Tensor:
        """Mean per-token logits; the sequence-classification readout."""
        logits, _, _ = self._token_logits(tokens)
        return logits.mean(dim=0)

    def quant_penalty(self) -> torch.Tensor:
        """Sum of squared distances between weights and their grid points."""
        if not self.quantization_enabled:
            return torch.tensor(0.0)
        penalty = torch.tensor(0.0)
        for d in range(self.config.domains + 1):
            bits = self._bits(d)
            for p in self.pathways[d].parameters():
                if p.dim() >= 2:
                    penalty = penalty + ((p - _fake_quantize(p, bits)) ** 2).sum()
        for p in (self.embedding.weight, self.head.weight):
            penalty = penalty + ((p - _fake_quantize(p, self._shared_bits())) ** 2).sum()
        return penalty


def distill_loss(student_logits: torch.Tensor, teacher_logits: torch.Tensor,
                 temperature: float = 1.0) -> torch.Tensor:
    """KL divergence from the tempered teacher to the tempered student."""
    t = torch.softmax(teacher_logits / temperature, dim=-1)
    log_s = torch.log_softmax(student_logits / temperature, dim=-1)
    log_t = torch.log_softmax(teacher_logits / temperature, dim=-1)
    return (t * (log_t - log_s)).sum()


class Trainer:
    """One-model training loop over the composite loss."""

    def __init__(self, model: GemModel, train: TrainConfig, teacher: GemModel | None = None):
        self.model = model
        self.train_config = train
        self.teacher = teacher
        if teacher is not None:
            teacher.eval()
            for p in teacher.parameters():
                p.requires_grad_(False)
        self.optimizer = torch.optim.AdamW(
            model.parameters(),
            lr=train.learning_rate,
            weight_decay=train.weight_decay,
        )

    def compute_loss(self, batch) -> tuple[torch.Tensor, QakpLossParts]:
        cfg = self.train_config
        task = torch.tensor(0.0)
        kd = torch.tensor(0.0)
        for tokens, label in batch:
            logits = self.model.sequence_logits(tokens)
            task = task + F.cross_entropy(logits.unsqueeze(0), torch.tensor([label]))
            if cfg.kd_enabled and self.teacher is not None:
                with torch.no_grad():
                    teacher_logits = self.teacher.sequence_logits(tokens)
                kd = kd + distill_loss(logits, teacher_logits, cfg.kd_temperature)
        task = task / len(batch)
        kd = kd / len(batch)
        quant = self.model.quant_penalty()
        total = task + cfg.lambda_quant * quant + cfg.lambda_kd * kd
        parts = QakpLossParts(
            task_loss=float(task.detach()), quant_penalty=float(quant.detach()),
            kd_loss=float(kd.detach()),
            lambda_quant=cfg.lambda_quant, lambda_kd=cfg.lambda_kd,
        )
        return total, parts

    def step(self, batch) -> QakpLossParts:
        if not batch:
            raise ValueError("empty batch")
        total, parts = self.compute_loss(batch)
        if not torch.isfinite(total):
            raise FloatingPointError("divergence")
        if self.train_config.learning_rate == 0:
            return parts
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        return parts


def train_step(batch, train: TrainConfig, trainer: Trainer) -> QakpLossParts:
    """One gradient step on the composite loss; pure evaluation at lr=0."""
    assert trainer.train_config == train
    return trainer.step(batch)


def evaluate_accuracy(model: GemModel, task: SyntheticTask) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for tokens, label in task.samples:
            pred = int(torch.argmax(model.sequence_logits(tokens)))
            correct += pred == label
    return correct / len(task.samples)


def _run_epochs(trainer: Trainer, task: SyntheticTask, epochs: int, seed: int):
    rng = np.random.default_rng(seed)
    samples = list(task.samples)
    bs = trainer.train_config.batch_size
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), bs):
            batch = [samples[i] for i in order[start : start + bs]]
            parts = trainer.step(batch)
            curve.append(parts.task_loss)
    return curve


def forgetting_experiment(
    base_task: SyntheticTask,
    new_task: SyntheticTask,
    train: TrainConfig,
    config: GemConfig | None = None,
    base_epochs: int | None = None,
) -> dict:
    """Compare plain fine-tuning against distillation-regularized fine-tuning.

    Trains on the base task, snapshots the model as teacher, then fine-tunes
    two copies on the new task: one plain, one with the distillation term
    pulling toward the snapshot. Reports accuracies on both tasks for both.
    """
    if not base_task.samples or not new_task.samples:
        raise ValueError("empty task")
    config = config or GemConfig()
    model = GemModel(config)
    base_trainer = Trainer(model, TrainConfig(
        learning_rate=train.learning_rate, batch_size=train.batch_size,
        epochs=train.epochs, weight_decay=train.weight_decay,
        lambda_quant=train.lambda_quant,
    ))
    curve_base = _run_epochs(base_trainer, base_task,
                             base_epochs if base_epochs is not None else train.epochs,
                             seed=config.seed + 1)

    teacher = copy.deepcopy(model)
    acc_before = evaluate_accuracy(model, base_task)

    plain = copy.deepcopy(model)
    plain_trainer = Trainer(plain, TrainConfig(
        learning_rate=train.learning_rate, batch_size=train.batch_size,
        epochs=train.epochs, weight_decay=train.weight_decay,
        kd_enabled=False, lambda_quant=train.lambda_quant,
    ))
    curve_plain = _run_epochs(plain_trainer, new_task, train.epochs, seed=config.seed + 2)

    kd_model = copy.deepcopy(model)
    kd_trainer = Trainer(kd_model, TrainConfig(
        learning_rate=train.learning_rate, batch_size=train.batch_size,
        epochs=train.epochs, weight_decay=train.weight_decay,
        kd_enabled=True, lambda_quant=train.lambda_quant,
        lambda_kd=train.lambda_kd, kd_temperature=train.kd_temperature,
    ), teacher=teacher)
    curve_kd = _run_epochs(kd_trainer, new_task, train.epochs, seed=config.seed + 2)

    return {
        "general_acc_before": acc_before,
        "general_acc_after_plain": evaluate_accuracy(plain, base_task),
        "general_acc_after_kd": evaluate_accuracy(kd_model, base_task),
        "new_task_acc_plain": evaluate_accuracy(plain, new_task),
        "new_task_acc_kd": evaluate_accuracy(kd_model, new_task),
        "curves": {
            "base": curve_base,
            "plain_finetune": curve_plain,
            "kd_finetune": curve_kd,
        },
    }


def reference_forgetting_setup(seed: int = 0):
    """Reference two-domain task pair plus configs for the forgetting run.

    The two tasks share label-indicator tokens but map them to permuted
    labels, so plain fine-tuning on the new task actively overwrites the
    base-task mapping.
    """
    base = make_task(domain_id=0, num_samples=48, seq_len=8, vocab_size=64,
                     num_labels=4, seed=seed, label_permutation=0)
    new = make_task(domain_id=1, num_samples=48, seq_len=8, vocab_size=64,
                    num_labels=4, seed=seed + 1000, label_permutation=1)
    gem = GemConfig(vocab_size=64, embed_dim=16, pathway_layers=1, scar_k=2,
                    num_labels=4, seed=seed)
    train = TrainConfig(learning_rate=0.01, batch_size=12, epochs=2,
                        weight_decay=0.0, lambda_quant=0.0, lambda_kd=2.0,
                        kd_temperature=1.0)
    return base, new, gem, train


def gradient_check(model: GemModel, batch, epsilon: float = 1e-4, seed: int = 0,
                   subset_size: int = 100) -> dict:
    """Analytic vs central-finite-difference gradients of the task loss.

    Only valid on a smooth configuration: quantization is disabled for the
    duration of the check. If the model clusters into more than one block
    (scar_k > 1) the mask is input-dependent and the check is skipped.
    """
    if model.config.scar_k > 1:
        return {"status": "non-smooth", "max_relative_deviation": None}
    was_enabled = model.quantization_enabled
    model.quantization_enabled = False
    model.double()
    try:
        trainer = Trainer(model, TrainConfig(learning_rate=0.0, lambda_quant=0.0))
        total, _ = trainer.compute_loss(batch)
        model.zero_grad()
        total.backward()

        params = [p for p in model.parameters() if p.requires_grad]
        # pathways that received no tokens have no grad; their true gradient is zero
        flat_grad = torch.cat([
            (p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1)
            for p in params
        ])
        flat = torch.cat([p.detach().reshape(-1) for p in params])
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(flat), size=min(subset_size, len(flat)), replace=False)

        offsets = np.cumsum([0] + [p.numel() for p in params])
        max_dev = 0.0
        for i in idx:
            p_i = int(np.searchsorted(offsets, i, side="right") - 1)
            local = int(i - offsets[p_i])
            p = params[p_i]
            orig = p.data.reshape(-1)[local].item()
            with torch.no_grad():
                p.data.reshape(-1)[local] = orig + epsilon
                up, _ = trainer.compute_loss(batch)
                p.data.reshape(-1)[local] = orig - epsilon
                down, _ = trainer.compute_loss(batch)
                p.data.reshape(-1)[local] = orig
            numeric = (float(up) - float(down)) / (2 * epsilon)
            analytic = float(flat_grad[i])
            denom = max(abs(numeric), abs(analytic), 1e-8)
            max_dev = max(max_dev, abs(numeric - analytic) / denom)
        return {"status": "ok", "max_relative_deviation": max_dev}
    finally:
        model.quantization_enabled = was_enabled
        model.float()


def save_checkpoint(model: GemModel, path) -> None:
    """Self-describing checkpoint: config, seed, and weights."""
    torch.save({
        "config": asdict(model.config),
        "seed": model.config.seed,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path) -> GemModel:
    payload = torch.load(path, weights_only=False)
    model = GemModel(GemConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    return model
