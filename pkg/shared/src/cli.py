"""Command-line surface: one subcommand per operation, each driven by a JSON config.

Usage:
    python -m shared.src.cli sample --config run.json --out runs/sample --seed 7
"""
from __future__ import annotations

import argparse
import logging
import math
from pathlib import Path
import sys
from typing import Callable

import numpy as np
from sklearn.model_selection import train_test_split

from .classifier import BayesClassifier, NoiseClassifierNet, clf_accuracy, clf_train, guidance_for
from .common_io import ensure_dir, read_tensor, write_csv, write_json, write_tensor
from .common_metrics import MetricRecord, bayes_labels, empirical_moments, records_to_dict, relative_l2, w2_gaussian
from .config import RunConfig
from .errors import (
    ConfigError,
    DiffusionError,
    DimensionError,
    DomainError,
    NonFiniteError,
    TensorFormatError,
    UnknownLabelError,
)
from .oracle import OracleEps, mixture_moments
from .samplers import (
    InpaintSpec,
    decode,
    encode,
    guided_eps,
    inpaint,
    latent_interpolate,
    sample,
    t_indexed_interpolate,
    variations,
)
from .schedules import validate
from .scorenet import MLPScoreNet, as_eps_fn, load_checkpoint, save_checkpoint, train
from .toy_data import ToyDataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VALIDATION = 2
EXIT_NON_FINITE = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _path(value: str | None, key: str) -> Path:
    if not value:
        raise ConfigError(f"{key}: a path is required for this command")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{key}: {path} does not exist")
    return path


def _load_net(path: str | None, key: str, kind: type):
    net = load_checkpoint(_path(path, key))
    if not isinstance(net, kind):
        raise ConfigError(f"{key}: checkpoint holds a {net.kind!r} network")
    return net


def _model(cfg: RunConfig):
    """(eps_fn, data dimension, mixture or None)."""
    if cfg.model == "oracle":
        gm = cfg.mixture_model()
        return OracleEps(gm, cfg.schedule().relation), gm.dim, gm
    net = _load_net(cfg.checkpoint, "checkpoint", MLPScoreNet)
    return as_eps_fn(net), net.arch.dim, None


def _chunked(cfg: RunConfig, draw: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    """Split `batch` into fixed chunks, each with its own child seed of cfg.seed."""
    n_chunks = math.ceil(cfg.batch / cfg.chunk)
    children = np.random.SeedSequence(cfg.seed).spawn(n_chunks)
    parts = []
    for i, seq in enumerate(children):
        size = min(cfg.chunk, cfg.batch - i * cfg.chunk)
        parts.append(draw(np.random.default_rng(seq), size))
    return np.concatenate(parts, axis=0)


def _moment_metrics(samples: np.ndarray, gm) -> dict:
    out = {"n": int(samples.shape[0])}
    if samples.shape[0] < 2:
        return out
    mean, var = empirical_moments(samples)
    out.update(mean=mean.tolist(), var=var.tolist())
    if gm is not None and np.all(var > 0.0):
        true_mean, true_var = mixture_moments(gm)
        out["w2_to_truth"] = w2_gaussian(mean, var, true_mean, true_var)
    return out


def _input_tensor(cfg: RunConfig, key: str = "input") -> np.ndarray:
    return read_tensor(_path(getattr(cfg, key), key)).astype(float)


def cmd_schedule(cfg: RunConfig, out: Path) -> int:
    report = validate(cfg.schedule(), cfg.grid_size)
    write_csv(out / "schedule.csv", report.table)
    write_json(out / "metrics.json", {"max_residuals": report.max_residuals, "pass": report.passed})
    for line in report.summary_lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_sample(cfg: RunConfig, out: Path) -> int:
    eps_fn, dim, gm = _model(cfg)
    sampler = cfg.sampler_config()
    samples = _chunked(cfg, lambda rng, n: sample(eps_fn, sampler, rng, (n, dim)))
    write_tensor(out / "samples.crsh", samples)
    metrics = {"method": cfg.method, "steps": cfg.steps, **_moment_metrics(samples, gm)}
    write_json(out / "metrics.json", metrics)
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Path) -> int:
    data = ToyDataset.generate(cfg.dataset, cfg.n_data, cfg.seed)
    result = train(
        data.x,
        cfg.schedule(),
        cfg.weighting,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        hidden=tuple(cfg.hidden),
        lr=cfg.lr,
        ema_rate=cfg.ema_rate,
    )
    save_checkpoint(result.net, out / "net.crsh", cfg.seed, result.steps)
    save_checkpoint(result.ema_net, out / "net_ema.crsh", cfg.seed, result.steps)
    write_csv(out / "loss_curve.csv", result.loss_curve)
    losses = result.loss_curve["loss"].tolist()
    write_json(
        out / "metrics.json",
        {
            "steps": result.steps,
            "initial_loss": losses[0] if losses else None,
            "final_loss": losses[-1] if losses else None,
        },
    )
    return EXIT_OK


def cmd_train_clf(cfg: RunConfig, out: Path) -> int:
    data = ToyDataset.generate(cfg.dataset, cfg.n_data, cfg.seed)
    x_train, x_test, y_train, y_test = train_test_split(
        data.x, data.labels, test_size=0.2, random_state=cfg.seed, stratify=data.labels
    )
    schedule = cfg.schedule()
    result = clf_train(
        x_train,
        y_train,
        schedule,
        epochs=cfg.epochs,
        seed=cfg.seed,
        batch_size=cfg.batch_size,
        hidden=tuple(cfg.hidden),
        lr=cfg.lr,
    )
    save_checkpoint(result.net, out / "classifier.crsh", cfg.seed, result.steps)
    write_csv(out / "clf_loss_curve.csv", result.loss_curve)
    top = float(schedule.sigma(1.0))
    write_json(
        out / "metrics.json",
        {
            "steps": result.steps,
            "heldout_accuracy_sigma_0.1": clf_accuracy(result.net, x_test, y_test, 0.1),
            "heldout_accuracy_sigma_max": clf_accuracy(result.net, x_test, y_test, top),
        },
    )
    return EXIT_OK


def cmd_encode(cfg: RunConfig, out: Path) -> int:
    eps_fn, _, _ = _model(cfg)
    schedule = cfg.schedule()
    x = _input_tensor(cfg)
    forward, backward = (encode, decode) if cfg.direction == "encode" else (decode, encode)
    result = forward(eps_fn, schedule, x, cfg.rtol, cfg.atol)
    back = backward(eps_fn, schedule, result, cfg.rtol, cfg.atol)
    name = "latents.crsh" if cfg.direction == "encode" else "decoded.crsh"
    write_tensor(out / name, result)
    write_json(
        out / "metrics.json",
        {"direction": cfg.direction, "round_trip_error": relative_l2(back, x)},
    )
    return EXIT_OK


def cmd_inpaint(cfg: RunConfig, out: Path) -> int:
    eps_fn, dim, _ = _model(cfg)
    spec = InpaintSpec(read_tensor(_path(cfg.mask, "mask")), _input_tensor(cfg))
    if spec.x_fixed.shape != (dim,):
        raise DimensionError(f"input shape {spec.x_fixed.shape} does not match model dimension {dim}")
    sampler = cfg.sampler_config()
    samples = _chunked(cfg, lambda rng, n: inpaint(eps_fn, sampler, spec, rng, (n, dim)))
    write_tensor(out / "inpainted.crsh", samples)
    kept = spec.mask == 1.0
    deviation = np.abs(samples[:, kept] - spec.x_fixed[kept])
    write_json(
        out / "metrics.json",
        {"n": int(samples.shape[0]), "max_fixed_deviation": float(np.max(deviation, initial=0.0))},
    )
    return EXIT_OK


def cmd_interp(cfg: RunConfig, out: Path) -> int:
    eps_fn, _, _ = _model(cfg)
    x1 = _input_tensor(cfg, "input")
    x2 = _input_tensor(cfg, "input2")
    if cfg.t_mid is None:
        result = latent_interpolate(eps_fn, cfg.schedule(), x1, x2, cfg.lam, cfg.rtol, cfg.atol)
    else:
        rng = np.random.default_rng(cfg.seed)
        result = t_indexed_interpolate(
            eps_fn, cfg.sampler_config(), x1, x2, cfg.lam, cfg.t_mid, rng, cfg.combine, cfg.shared_noise
        )
    write_tensor(out / "interp.crsh", result)
    mode = "latent" if cfg.t_mid is None else "t_indexed"
    write_json(out / "metrics.json", {"lambda": cfg.lam, "t_mid": cfg.t_mid, "mode": mode})
    return EXIT_OK


def cmd_variations(cfg: RunConfig, out: Path) -> int:
    eps_fn, dim, _ = _model(cfg)
    x0 = _input_tensor(cfg)
    if x0.shape != (dim,):
        raise DimensionError(f"input shape {x0.shape} does not match model dimension {dim}")
    sampler = cfg.sampler_config()
    samples = _chunked(
        cfg, lambda rng, n: variations(eps_fn, sampler, np.broadcast_to(x0, (n, dim)), cfg.t_level, rng)
    )
    write_tensor(out / "variations.crsh", samples)
    write_json(
        out / "metrics.json",
        {"t_level": cfg.t_level, "mean_relative_distance": float(np.mean([relative_l2(s, x0) for s in samples]))},
    )
    return EXIT_OK


def _classifier(cfg: RunConfig):
    if cfg.classifier == "oracle":
        return BayesClassifier(cfg.mixture_model(), cfg.schedule().relation)
    return _load_net(cfg.classifier_checkpoint, "classifier_checkpoint", NoiseClassifierNet)


def cmd_guide(cfg: RunConfig, out: Path) -> int:
    eps_fn, dim, gm = _model(cfg)
    clf = _classifier(cfg)
    labels = list(cfg.classes) if cfg.classes is not None else list(clf.classes)
    weights = cfg.class_weights
    if weights is None:
        weights = [1.0 / len(labels)] * len(labels)
    if len(weights) != len(labels):
        raise ConfigError("class_weights: need one weight per entry of classes")
    try:
        spec = guidance_for(clf, labels, weights)
    except DomainError as exc:
        raise ConfigError(f"class_weights: {exc}") from None
    guided = guided_eps(eps_fn, spec)
    sampler = cfg.sampler_config()
    samples = _chunked(cfg, lambda rng, n: sample(guided, sampler, rng, (n, dim)))
    write_tensor(out / "guided.crsh", samples)
    metrics = {"classes": labels, "class_weights": list(weights), **_moment_metrics(samples, None)}
    if gm is not None:
        predicted = bayes_labels(gm, samples)
        metrics["class_shares"] = {str(y): float(np.mean(predicted == y)) for y in gm.classes}
        records = [
            MetricRecord(f"purity_class_{y}", metrics["class_shares"][str(y)], 0.95, upper=False)
            for y, w in zip(labels, weights)
            if w == 1.0
        ]
        metrics["records"] = records_to_dict(records)
    write_json(out / "metrics.json", metrics)
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, Path], int]] = {
    "schedule": cmd_schedule,
    "sample": cmd_sample,
    "train": cmd_train,
    "train-clf": cmd_train_clf,
    "encode": cmd_encode,
    "inpaint": cmd_inpaint,
    "interp": cmd_interp,
    "variations": cmd_variations,
    "guide": cmd_guide,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Score-based diffusion toolkit")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="path to the JSON run config")
        cmd.add_argument("--out", required=True, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def run(command: str, cfg: RunConfig, out: str | Path) -> int:
    """Run one command and map failures onto exit codes."""
    try:
        out_dir = ensure_dir(out)
        write_json(out_dir / "manifest.json", cfg.to_dict())
        logger.info("%s -> %s", command, out_dir)
        return COMMANDS[command](cfg, out_dir)
    except NonFiniteError as exc:
        logger.error("%s: %s", command, exc)
        return EXIT_NON_FINITE
    except (ConfigError, DimensionError, UnknownLabelError, TensorFormatError, FileNotFoundError) as exc:
        logger.error("%s: %s", command, exc)
        return EXIT_INPUT
    except DiffusionError as exc:
        logger.error("%s failed: %s", command, exc)
        return EXIT_INPUT


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg = cfg.with_overrides(seed=args.seed)
    except ConfigError as exc:
        logger.error("config: %s", exc)
        return EXIT_INPUT
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
