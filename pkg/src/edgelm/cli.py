"""Command-line harness: reproduce, route, scar, quantize, metrics, cost,
train, forget. Every command is deterministic given (config, seed)."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import model as model_mod
from . import quant as quant_mod
from . import repro as repro_mod
from . import routing as routing_mod
from . import scar as scar_mod
from .config import ConfigError, load_config, section

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISMATCH = 2
EXIT_DIVERGENCE = 3


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _write_out(out_dir, name: str, content: str):
    if out_dir is None:
        return
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    (path / name).write_text(content)


def _write_curve(out_dir, name: str, values):
    """Two-column gnuplot-compatible data file: step value."""
    lines = [f"{i} {v}" for i, v in enumerate(values)]
    _write_out(out_dir, name, "\n".join(lines) + "\n")


def _csv_string(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_reproduce(args, cfg) -> int:
    rows = repro_mod.reproduction_table()
    if args.format == "json":
        payload = [
            {
                "label": r.label,
                "published_value": r.published_value,
                "computed_value": r.computed_value,
                "abs_diff": r.abs_diff,
                "status": r.status,
            }
            for r in rows
        ]
        text = _dump_json(payload)
    elif args.format == "csv":
        text = _csv_string(
            ["label", "published_value", "computed_value", "abs_diff", "status"],
            [[r.label, r.published_value, r.computed_value, r.abs_diff, r.status] for r in rows],
        )
    else:
        text = repro_mod.format_table(rows)
    print(text)
    _write_out(args.out, "reproduce." + ("json" if args.format == "json" else "txt"), text)
    return EXIT_MISMATCH if repro_mod.has_unexpected_mismatch(rows) else EXIT_OK


def cmd_route(args, cfg) -> int:
    params = section(cfg, "route", {
        "tokens": (list, None),
        "num_tokens": (int, 8, lambda v: v >= 1),
        "tau": (float, 0.7, lambda v: 0 < v <= 1),
        "layers": (int, 2, lambda v: v >= 0),
        "hidden": (int, 32, lambda v: v >= 1),
        "domains": (int, 8, lambda v: v >= 2),
        "vocab_size": (int, 256, lambda v: v >= 1),
    })
    rcfg = routing_mod.RouterConfig(
        layers=params["layers"], hidden=params["hidden"], heads=4,
        domains=params["domains"], tau=params["tau"], vocab_size=params["vocab_size"],
    )
    encoder = routing_mod.RouterEncoder(rcfg, seed=args.seed)
    tokens = params["tokens"]
    if tokens is None:
        rng = np.random.default_rng(args.seed)
        tokens = [int(t) for t in rng.integers(rcfg.vocab_size, size=params["num_tokens"])]
    decisions = routing_mod.route_sequence(tokens, rcfg, encoder)
    log = routing_mod.routing_log(decisions)
    histogram: dict[str, int] = {}
    for record in log:
        histogram[record["target"]] = histogram.get(record["target"], 0) + 1

    if args.format == "csv":
        text = _csv_string(
            ["token_index", "max_prob", "target"],
            [[r["token_index"], r["max_prob"], r["target"]] for r in log],
        )
        print(text, end="")
    else:
        # line-delimited routing records, then the histogram
        lines = [json.dumps(r, sort_keys=True) for r in log]
        lines.append(json.dumps({"histogram": histogram}, sort_keys=True))
        text = "\n".join(lines)
        print(text)
    _write_out(args.out, "route.jsonl", "\n".join(json.dumps(r, sort_keys=True) for r in log) + "\n")
    return EXIT_OK


def cmd_scar(args, cfg) -> int:
    params = section(cfg, "scar", {
        "n": (int, 128, lambda v: 1 <= v <= 4096),
        "k": (int, 16, lambda v: v >= 1),
        "dim": (int, 16, lambda v: v >= 1),
        "max_iters": (int, 50, lambda v: v >= 1),
        "literal_zero": (bool, False),
    })
    n, k = params["n"], params["k"]
    if k > n:
        raise ConfigError("field 'scar.k' is out of range (k > n)")
    rng = np.random.default_rng(args.seed)
    points = rng.normal(size=(n, params["dim"]))
    plan = scar_mod.kmeans_cosine(points, k, max_iters=params["max_iters"], seed=args.seed)
    mask = scar_mod.build_mask(plan.assignments)
    q, km, v = (rng.normal(size=(n, params["dim"])) for _ in range(3))
    result = scar_mod.masked_attention(q, km, v, mask, literal_zero=params["literal_zero"])

    sizes = np.bincount(plan.assignments, minlength=k)
    payload = {
        "n": n,
        "k": k,
        "sparse_ops": scar_mod.scar_ops(n, k),
        "dense_ops": scar_mod.dense_ops(n),
        "reduction": scar_mod.reduction(scar_mod.dense_ops(n), scar_mod.scar_ops(n, k)),
        "mask_density": mask.density(),
        "cluster_sizes": [int(s) for s in sizes],
        "kmeans_objective": plan.objective,
        "kmeans_iterations": plan.iterations_run,
        "attention_row_sums_ok": bool(
            np.allclose(result.weights.sum(axis=1), 1.0, atol=1e-9)
        ),
    }
    text = _dump_json(payload)
    print(text)
    _write_out(args.out, "scar.json", text)
    if args.out is not None:
        pbm = "P1\n" + f"{n} {n}\n" + "\n".join(
            " ".join(str(int(b)) for b in row) for row in mask.mask
        ) + "\n"
        _write_out(args.out, "mask.pbm", pbm)
    return EXIT_OK


def cmd_quantize(args, cfg) -> int:
    params = section(cfg, "quantize", {
        "bits": (list, [1, 2, 4, 6, 8]),
        "range_max": (float, 1.0, lambda v: v > 0),
        "values": (list, None),
        "sample_count": (int, 100000, lambda v: v >= 1),
    })
    report = []
    for b in params["bits"]:
        q = quant_mod.Quantizer(bits=int(b), range_max=params["range_max"])
        entry = {
            "bits": int(b),
            "step": q.step,
            "levels": q.levels,
            "empirical_mse": quant_mod.empirical_quant_mse(int(b), params["sample_count"], args.seed),
            "uniform_noise_mse": q.step**2 / 12.0,
            "noise_model": quant_mod.quant_noise_model(1.0, int(b)),
        }
        if params["values"] is not None:
            entry["quantized_values"] = [
                float(x) for x in quant_mod.uniform_quantize(params["values"], q)
            ]
        report.append(entry)
    text = _dump_json(report)
    print(text)
    _write_out(args.out, "quantize.json", text)
    return EXIT_OK


_TABLE2_RECORDS = [
    {
        "model": "healthcare_chatbot",
        "in_domain": 0.95,
        "out_domain": {"general": 0.40, "other_a": 0.45, "other_b": 0.50},
        "gg_reference": "general",
        "pair": "general",
    },
    {
        "model": "finance_model",
        "in_domain": 0.90,
        "out_domain": {"legal": 0.60, "healthcare": 0.15, "stem": 0.15},
        "gg_reference": None,
        "pair": "legal",
    },
    {
        "model": "legal_model",
        "in_domain": 0.90,
        "out_domain": {"finance": 0.62},
        "gg_reference": None,
        "pair": "finance",
    },
]


def cmd_metrics(args, cfg) -> int:
    raw = cfg.get("metrics", {}).get("records") if cfg.get("metrics") else None
    raw = raw or _TABLE2_RECORDS
    records = []
    pairs = []
    for r in raw:
        records.append(metrics_mod.MetricRecord(
            source_domain=r["model"],
            in_domain_perf=r["in_domain"],
            out_domain_perfs=dict(r["out_domain"]),
            gg_reference=r.get("gg_reference"),
        ))
        pairs.append(r.get("pair") or next(iter(r["out_domain"])))
    table = metrics_mod.compute_all(records)

    csv_rows = []
    for row, pair in zip(table, pairs):
        csv_rows.append([
            row["model"], row["in_domain"], row["out_domain_avg"],
            round(row["gg"], 9), round(row["cdtr"][pair], 9), round(row["dsi"], 9),
            f"{row['model']}-{pair}",
        ])
    header = ["model", "in_domain", "out_domain_avg", "gg", "cdtr", "dsi", "domain_pair"]
    if args.format == "json":
        text = _dump_json(table)
    else:
        text = _csv_string(header, csv_rows)
    print(text, end="" if args.format != "json" else "\n")
    _write_out(args.out, "metrics.csv", _csv_string(header, csv_rows))
    _write_out(args.out, "metrics.json", _dump_json(table))
    return EXIT_OK


def cmd_cost(args, cfg) -> int:
    params = section(cfg, "cost", {
        "layers": (int, 12, lambda v: v >= 0),
        "hidden": (int, 128, lambda v: v >= 1),
        "platform": (str, "raspberry_pi_4"),
        "latency_s_per_token": (float, None, lambda v: v > 0),
        "power_w": (float, None, lambda v: v > 0),
        "tokens": (int, 10, lambda v: v >= 0),
        "precision_map": (list, None),
    })
    if params["platform"] not in metrics_mod.PLATFORMS:
        raise ConfigError("field 'cost.platform' is out of range "
                          f"(unknown platform '{params['platform']}')")
    profile = metrics_mod.PLATFORMS[params["platform"]]
    flops = metrics_mod.flops_per_token(params["layers"], params["hidden"])
    latency = params["latency_s_per_token"]
    if latency is None:
        latency = flops / profile.peak_flops
    power = params["power_w"] if params["power_w"] is not None else profile.typical_power_watts
    energy = metrics_mod.energy_per_token(power, latency)
    pm_records = params["precision_map"] or [
        {"class": "domain_specific", "params": 40_000_000, "bits": 4},
        {"class": "general", "params": 20_000_000, "bits": 8},
        {"class": "router", "params": 20_000_000, "bits": 6},
    ]
    pm = quant_mod.PrecisionMap.from_records(pm_records)
    report = metrics_mod.CostReport(
        flops_per_token=flops,
        latency_s_per_token=latency,
        power_w=power,
        energy_j_per_token=energy,
        memory_bytes=quant_mod.hybrid_memory(pm),
    )
    payload = {
        "platform": profile.name,
        "flops_per_token": report.flops_per_token,
        "latency_s_per_token": report.latency_s_per_token,
        "power_w": report.power_w,
        "energy_j_per_token": report.energy_j_per_token,
        "memory_bytes": report.memory_bytes,
        "session": metrics_mod.session_cost(params["tokens"], latency, energy),
    }
    text = _dump_json(payload)
    print(text)
    _write_out(args.out, "cost.json", text)
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    params = section(cfg, "train", {
        "domain_id": (int, 0, lambda v: 0 <= v < 8),
        "num_samples": (int, 32, lambda v: v >= 1),
        "seq_len": (int, 8, lambda v: v >= 1),
        "num_labels": (int, 4, lambda v: v >= 2),
        "epochs": (int, 2, lambda v: v >= 0),
        "learning_rate": (float, 0.02, lambda v: v >= 0),
        "batch_size": (int, 8, lambda v: v >= 1),
        "weight_decay": (float, 0.01, lambda v: v >= 0),
        "lambda_quant": (float, 0.1, lambda v: v >= 0),
    })
    task = model_mod.make_task(
        params["domain_id"], params["num_samples"], seq_len=params["seq_len"],
        num_labels=params["num_labels"], seed=args.seed,
    )
    gem = model_mod.GemConfig(num_labels=params["num_labels"], embed_dim=16,
                              pathway_layers=1, scar_k=2, seed=args.seed)
    net = model_mod.GemModel(gem)
    train_cfg = model_mod.TrainConfig(
        learning_rate=params["learning_rate"], batch_size=params["batch_size"],
        epochs=params["epochs"], weight_decay=params["weight_decay"],
        lambda_quant=params["lambda_quant"],
    )
    trainer = model_mod.Trainer(net, train_cfg)
    acc_before = model_mod.evaluate_accuracy(net, task)
    curve = model_mod._run_epochs(trainer, task, params["epochs"], seed=args.seed)
    payload = {
        "accuracy_before": acc_before,
        "accuracy_after": model_mod.evaluate_accuracy(net, task),
        "initial_task_loss": curve[0] if curve else None,
        "final_task_loss": curve[-1] if curve else None,
        "steps": len(curve),
    }
    text = _dump_json(payload)
    print(text)
    _write_out(args.out, "train.json", text)
    if curve:
        _write_out(args.out, "train_curve.csv", _csv_string(["step", "task_loss"], list(enumerate(curve))))
        _write_curve(args.out, "train_curve.dat", curve)
    return EXIT_OK


def cmd_forget(args, cfg) -> int:
    params = section(cfg, "forget", {
        "seeds": (list, None),
        "epochs": (int, None, lambda v: v >= 0),
    })
    seeds = params["seeds"] if params["seeds"] is not None else [args.seed]
    runs = {}
    for seed in seeds:
        base, new, gem, train_cfg = model_mod.reference_forgetting_setup(int(seed))
        if params["epochs"] is not None:
            train_cfg = model_mod.TrainConfig(
                learning_rate=train_cfg.learning_rate, batch_size=train_cfg.batch_size,
                epochs=params["epochs"], weight_decay=train_cfg.weight_decay,
                lambda_quant=train_cfg.lambda_quant, lambda_kd=train_cfg.lambda_kd,
                kd_temperature=train_cfg.kd_temperature,
            )
        report = model_mod.forgetting_experiment(base, new, train_cfg, config=gem)
        curves = report.pop("curves")
        runs[str(seed)] = report
        for name, curve in curves.items():
            _write_curve(args.out, f"forget_seed{seed}_{name}.dat", curve)
            _write_out(args.out, f"forget_seed{seed}_{name}.csv",
                       _csv_string(["step", "task_loss"], list(enumerate(curve))))
    payload = {"runs": runs}
    text = _dump_json(payload)
    print(text)
    _write_out(args.out, "forget.json", text)
    return EXIT_OK


COMMANDS = {
    "reproduce": cmd_reproduce,
    "route": cmd_route,
    "scar": cmd_scar,
    "quantize": cmd_quantize,
    "metrics": cmd_metrics,
    "cost": cmd_cost,
    "train": cmd_train,
    "forget": cmd_forget,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgelm",
        description="Desk-scale edge language-model toolkit: reproduction "
                    "tables, routing, clustered sparse attention, quantization, "
                    "metrics, cost modeling, and training experiments.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=str, default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=str, default=None, help="output directory")
    parser.add_argument("--format", choices=["json", "csv", "table"], default="json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
