"""``issgd`` command line: train, variance-probe, correlate, validate."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import probes, sampling, validation
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import build_dataset, build_network, run_arm, run_experiment, write_summary
from .nn import load_network
from .trainer import TrainingAborted, train


def _load(args) -> tuple[ExperimentConfig, Path, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
    base = Path(args.config).resolve().parent
    output = Path(args.output or cfg.output)
    return cfg, base, output


def _prepare_network(cfg: ExperimentConfig, data, checkpoint: str | None, iterations: int,
                     score_kind: str, base: Path, output: Path, label: str):
    """Network from a checkpoint file, or trained from scratch for ``iterations`` updates."""
    if checkpoint:
        path = Path(checkpoint)
        return load_network(path if path.is_absolute() else base / path)
    net = build_network(cfg.model, data, cfg.train.loss_kind)
    if iterations > 0:
        train_cfg = replace(cfg.train, score_kind=score_kind, max_iterations=iterations, eval_every=0)
        run_arm(label, train_cfg, net, data, jsonl_path=output / f"{label}-training.jsonl")
    return net


def cmd_train(args) -> int:
    cfg, base, output = _load(args)
    summary = run_experiment(cfg, output, base)
    write_summary(summary, output / "summary.json")
    for label, s in summary["arms"].items():
        err = s["final_train_error"]
        err_text = "" if err is None else f" error={err:.4f}"
        print(f"{label}: train_loss={s['final_train_loss']:.6f}{err_text} "
              f"importance_iterations={s['importance_iterations']} cost_units={s['cost_units']}")
    return 0


def _probe_stages(cfg: ExperimentConfig, data, base: Path):
    """Yield (iteration, network) at each probe checkpoint of a single training run."""
    spec = cfg.probe
    if spec.checkpoint:
        yield None, _prepare_network(cfg, data, spec.checkpoint, 0, "", base, None, "probe")
        return
    net = build_network(cfg.model, data, cfg.train.loss_kind)
    marks = sorted(set(spec.checkpoints))
    if marks and marks[0] == 0:
        yield 0, net
    if not marks or marks[-1] == 0:
        return
    train_cfg = replace(cfg.train, score_kind=spec.train_score_kind,
                        max_iterations=marks[-1], eval_every=0)
    for rec in train(train_cfg, net, data):
        if rec.iteration in marks:
            yield rec.iteration, net


def cmd_variance_probe(args) -> int:
    cfg, base, output = _load(args)
    spec = cfg.probe
    data = build_dataset(cfg.dataset, base)
    rng = sampling.make_rng(spec.seed)
    presample = rng.choice(len(data), size=min(spec.B, len(data)), replace=False)
    output.mkdir(parents=True, exist_ok=True)
    results = []
    with open(output / "variance_probe.jsonl", "w") as fh:
        for t, net in _probe_stages(cfg, data, base):
            dist = probes.variance_probe(
                net, data, cfg.train.loss_kind, spec.arms, spec.B, spec.b, spec.repeats, rng, presample
            )
            row = {"iteration": t, "normalized_distance": dist}
            results.append(row)
            fh.write(json.dumps(row) + "\n")
            fh.flush()
            print(f"iteration {t}: " + ", ".join(f"{k}={v:.3f}" for k, v in dist.items()))
    write_summary({"probe": results}, output / "variance_probe_summary.json")
    return 0


def cmd_correlate(args) -> int:
    cfg, base, output = _load(args)
    spec = cfg.correlate
    data = build_dataset(cfg.dataset, base)
    output.mkdir(parents=True, exist_ok=True)
    net = _prepare_network(cfg, data, spec.checkpoint, spec.train_iterations,
                           spec.train_score_kind, base, output, "correlate")
    rng = sampling.make_rng(spec.seed)
    idx = rng.choice(len(data), size=min(spec.samples, len(data)), replace=False)
    triples = probes.score_triples(net, data.inputs[idx], data.targets[idx], cfg.train.loss_kind)
    probs = triples.probabilities()
    with open(output / "correlate.jsonl", "w") as fh:
        for k, i in enumerate(idx):
            fh.write(json.dumps({
                "index": int(i),
                "loss": float(triples.loss[k]),
                "upper_bound": float(triples.upper_bound[k]),
                "gradient_norm": float(triples.gradient_norm[k]),
                "g_loss": float(probs["loss"][k]),
                "g_upper": float(probs["upper-bound"][k]),
                "g_gradnorm": float(probs["gradient-norm"][k]),
            }) + "\n")
    summary = probes.correlation_summary(triples)
    write_summary(summary, output / "correlate_summary.json")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_validate(args) -> int:
    results = validation.run_all()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="issgd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in [
        ("train", cmd_train, True),
        ("variance-probe", cmd_variance_probe, True),
        ("correlate", cmd_correlate, True),
        ("validate", cmd_validate, False),
    ]:
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        if needs_config:
            p.add_argument("--config", required=True, help="TOML experiment config")
            p.add_argument("--output", help="output directory (overrides the config)")
            p.add_argument("--seed", type=int, help="training seed (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
