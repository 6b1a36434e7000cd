"""Noise-conditioned MLP eps-network with hand-written backpropagation.

sigma is embedded with fixed random Fourier features, passed through a small
two-layer MLP, and the result modulates every hidden layer of the main MLP
through a FiLM head (gamma * h + beta). Training is denoising score matching
with Adam and an exponential moving average of the weights.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import logging
import math
from pathlib import Path
from typing import ClassVar

import numpy as np
import pandas as pd
from scipy.special import expit

from .common_io import read_json, read_tensor_bundle, write_json, write_tensor_bundle
from .errors import ConfigError, DimensionError, DomainError
from .kernel import TrainingBatch, Weighting, sample_training_batch
from .schedules import Schedule

logger = logging.getLogger(__name__)

N_FREQUENCIES = 32
FREQUENCY_STD = 4.0
EMBED_WIDTH = 64
DEFAULT_HIDDEN = (128, 128, 128)
LEARNING_RATE = 2e-4
EMA_RATE = 0.999


def silu(z: np.ndarray) -> np.ndarray:
    return z * expit(z)


def silu_grad(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s + z * s * (1.0 - s)


@dataclass(frozen=True)
class RFFEmbedding:
    frequencies: np.ndarray

    @classmethod
    def create(
        cls, rng: np.random.Generator, n: int = N_FREQUENCIES, std: float = FREQUENCY_STD
    ) -> "RFFEmbedding":
        return cls(std * rng.standard_normal(n))

    @property
    def dim(self) -> int:
        return 2 * int(self.frequencies.shape[0])

    def __call__(self, sigma) -> np.ndarray:
        sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
        if np.any(sigma < 0.0):
            raise DomainError("sigma must be non-negative")
        phase = 2.0 * math.pi * sigma[:, None] * self.frequencies[None, :]
        return np.concatenate([np.cos(phase), np.sin(phase)], axis=1)


def rff_embed(emb: RFFEmbedding, sigma: float) -> np.ndarray:
    """[cos(2 pi f_i sigma)..., sin(2 pi f_i sigma)...] for one level."""
    return emb(sigma)[0]


@dataclass(frozen=True)
class Architecture:
    kind: str
    dim: int
    out_dim: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    embed_width: int = EMBED_WIDTH
    n_frequencies: int = N_FREQUENCIES
    classes: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        out["classes"] = list(self.classes)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "Architecture":
        payload = dict(payload)
        payload["hidden"] = tuple(payload["hidden"])
        payload["classes"] = tuple(payload.get("classes", ()))
        return cls(**payload)


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class FiLMMLP:
    """Shared trunk: sigma embedding -> FiLM-modulated MLP -> linear head.

    `params` maps names to arrays; the Fourier frequencies live outside it
    and never receive gradients.
    """

    kind: ClassVar[str] = "film_mlp"
    _registry: ClassVar[dict[str, type["FiLMMLP"]]] = {}

    def __init_subclass__(cls, **kwargs) -> None:
        super().__init_subclass__(**kwargs)
        FiLMMLP._registry[cls.kind] = cls

    def __init__(self, arch: Architecture, params: dict[str, np.ndarray], rff: RFFEmbedding):
        self.arch = arch
        self.params = params
        self.rff = rff

    @classmethod
    def initialize(cls, arch: Architecture, rng: np.random.Generator) -> "FiLMMLP":
        rff = RFFEmbedding.create(rng, arch.n_frequencies)
        e_in, e_w = rff.dim, arch.embed_width
        params: dict[str, np.ndarray] = {
            "emb_w1": _uniform(rng, e_in, (e_in, e_w)),
            "emb_b1": np.zeros(e_w),
            "emb_w2": _uniform(rng, e_w, (e_w, e_w)),
            "emb_b2": np.zeros(e_w),
        }
        width = arch.dim
        for layer, size in enumerate(arch.hidden):
            params[f"dense{layer}_w"] = _uniform(rng, width, (width, size))
            params[f"dense{layer}_b"] = np.zeros(size)
            params[f"film{layer}_w"] = _uniform(rng, e_w, (e_w, 2 * size))
            params[f"film{layer}_b"] = np.concatenate([np.ones(size), np.zeros(size)])
            width = size
        params["out_w"] = np.zeros((width, arch.out_dim))
        params["out_b"] = np.zeros(arch.out_dim)
        return cls(arch, params, rff)

    def with_params(self, params: dict[str, np.ndarray]) -> "FiLMMLP":
        return type(self)(self.arch, {k: v.copy() for k, v in params.items()}, self.rff)

    def _inputs(self, x, sigma) -> tuple[np.ndarray, np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.arch.dim:
            raise DimensionError(f"input dimension {x.shape[1]} does not match network dimension {self.arch.dim}")
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (x.shape[0],))
        return x, sigma, single

    def forward(self, x, sigma) -> tuple[np.ndarray, dict]:
        x, sigma, _ = self._inputs(x, sigma)
        p = self.params
        emb = self.rff(sigma)
        q1 = emb @ p["emb_w1"] + p["emb_b1"]
        h1 = silu(q1)
        q2 = h1 @ p["emb_w2"] + p["emb_b2"]
        cond = silu(q2)

        h = x
        layers = []
        for layer, size in enumerate(self.arch.hidden):
            a = h @ p[f"dense{layer}_w"] + p[f"dense{layer}_b"]
            gamma, beta = np.split(cond @ p[f"film{layer}_w"] + p[f"film{layer}_b"], [size], axis=1)
            z = gamma * a + beta
            layers.append((h, a, gamma, z))
            h = silu(z)
        out = h @ p["out_w"] + p["out_b"]
        cache = {"emb": emb, "q1": q1, "h1": h1, "q2": q2, "cond": cond, "layers": layers, "h_last": h}
        return out, cache

    def backward(self, cache: dict, grad_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Reverse pass; returns (parameter gradients, gradient w.r.t. the input)."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        grads["out_w"] = cache["h_last"].T @ grad_out
        grads["out_b"] = grad_out.sum(axis=0)
        dh = grad_out @ p["out_w"].T
        dcond = np.zeros_like(cache["cond"])

        for layer in range(len(self.arch.hidden) - 1, -1, -1):
            h_in, a, gamma, z = cache["layers"][layer]
            dz = dh * silu_grad(z)
            dfilm = np.concatenate([dz * a, dz], axis=1)
            grads[f"film{layer}_w"] = cache["cond"].T @ dfilm
            grads[f"film{layer}_b"] = dfilm.sum(axis=0)
            dcond += dfilm @ p[f"film{layer}_w"].T
            da = dz * gamma
            grads[f"dense{layer}_w"] = h_in.T @ da
            grads[f"dense{layer}_b"] = da.sum(axis=0)
            dh = da @ p[f"dense{layer}_w"].T

        dq2 = dcond * silu_grad(cache["q2"])
        grads["emb_w2"] = cache["h1"].T @ dq2
        grads["emb_b2"] = dq2.sum(axis=0)
        dq1 = (dq2 @ p["emb_w2"].T) * silu_grad(cache["q1"])
        grads["emb_w1"] = cache["emb"].T @ dq1
        grads["emb_b1"] = dq1.sum(axis=0)
        return {name: grads[name] for name in p}, dh

    def __call__(self, x, sigma) -> np.ndarray:
        _, _, single = self._inputs(x, sigma)
        out, _ = self.forward(x, sigma)
        return out[0] if single else out

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))


class MLPScoreNet(FiLMMLP):
    kind = "score"

    @classmethod
    def create(
        cls, dim: int, rng: np.random.Generator, hidden: tuple[int, ...] = DEFAULT_HIDDEN
    ) -> "MLPScoreNet":
        return cls.initialize(Architecture(cls.kind, dim, dim, tuple(hidden)), rng)


def net_forward(net: FiLMMLP, x, sigma) -> np.ndarray:
    return net(x, sigma)


def as_eps_fn(net: FiLMMLP):
    def eps_fn(x: np.ndarray, sigma: float) -> np.ndarray:
        return net(x, sigma)

    return eps_fn


def dsm_loss_and_grads(net: FiLMMLP, batch: TrainingBatch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean over the batch of ||w (eps_hat - eps)||^2 and its parameter gradients."""
    if isinstance(batch, list):
        batch = TrainingBatch.from_tuples(batch) if batch else None
    n = len(batch) if batch is not None else 0
    if n == 0:
        raise DomainError("empty training batch")
    pred, cache = net.forward(batch.x_t, batch.sigma)
    w = np.asarray(batch.weight, dtype=float)[:, None]
    resid = w * (pred - batch.eps)
    loss = float(np.sum(resid * resid) / n)
    grads, _ = net.backward(cache, 2.0 * w * resid / n)
    return loss, grads


def dsm_loss(net: FiLMMLP, batch: TrainingBatch) -> float:
    pred, _ = net.forward(batch.x_t, batch.sigma)
    resid = np.asarray(batch.weight, dtype=float)[:, None] * (pred - batch.eps)
    return float(np.sum(resid * resid) / len(batch))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], lr: float = LEARNING_RATE) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
            lr=lr,
        )

    def apply(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Bias-corrected Adam update, in place."""
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            params[name] = params[name] - self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


@dataclass
class EMAState:
    shadow: dict[str, np.ndarray]
    rate: float = EMA_RATE

    @classmethod
    def track(cls, params: dict[str, np.ndarray], rate: float = EMA_RATE) -> "EMAState":
        return cls({k: v.copy() for k, v in params.items()}, rate)

    def update(self, params: dict[str, np.ndarray]) -> None:
        for name, value in params.items():
            self.shadow[name] = self.rate * self.shadow[name] + (1.0 - self.rate) * value


def train_step(net: FiLMMLP, adam: AdamState, ema: EMAState, batch: TrainingBatch) -> float:
    loss, grads = dsm_loss_and_grads(net, batch)
    adam.apply(net.params, grads)
    ema.update(net.params)
    return loss


@dataclass
class TrainResult:
    net: FiLMMLP
    ema_net: FiLMMLP
    loss_curve: pd.DataFrame
    val_curve: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["step", "val_loss"]))
    steps: int = 0
    seed: int = 0


def train(
    dataset,
    schedule: Schedule,
    weighting: Weighting | str = Weighting.SIGMA2,
    epochs: int = 10,
    batch_size: int = 128,
    seed: int = 0,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    lr: float = LEARNING_RATE,
    ema_rate: float = EMA_RATE,
    val_batch: TrainingBatch | None = None,
    val_every: int = 0,
) -> TrainResult:
    """Denoising score matching over `epochs` passes of a seeded permutation.

    Initialization and data order draw from separate streams spawned off
    `seed`, so changing the data never shifts the initial weights.
    """
    data = np.atleast_2d(np.asarray(dataset, dtype=float))
    if data.shape[0] == 0:
        raise DomainError("training dataset is empty")
    if batch_size < 1 or epochs < 0:
        raise DomainError("batch_size must be >= 1 and epochs >= 0")
    init_seq, data_seq = np.random.SeedSequence(seed).spawn(2)
    net = MLPScoreNet.create(data.shape[1], np.random.default_rng(init_seq), hidden)
    data_rng = np.random.default_rng(data_seq)
    adam = AdamState.zeros_like(net.params, lr)
    ema = EMAState.track(net.params, ema_rate)

    loss_rows: list[dict] = []
    val_rows: list[dict] = []
    step = 0
    if val_batch is not None and val_every > 0:
        val_rows.append({"step": 0, "val_loss": dsm_loss(net, val_batch)})
    for epoch in range(epochs):
        order = data_rng.permutation(data.shape[0])
        total = 0.0
        count = 0
        for start in range(0, data.shape[0], batch_size):
            batch = sample_training_batch(data[order[start : start + batch_size]], schedule, weighting, data_rng)
            total += train_step(net, adam, ema, batch) * len(batch)
            count += len(batch)
            step += 1
            if val_batch is not None and val_every > 0 and step % val_every == 0:
                val_rows.append({"step": step, "val_loss": dsm_loss(net, val_batch)})
        loss_rows.append({"epoch": epoch + 1, "step": step, "loss": total / count})
        logger.debug("epoch %d loss %.6f", epoch + 1, total / count)

    if loss_rows:
        logger.info("trained %d steps, final loss %.6f", step, loss_rows[-1]["loss"])
    return TrainResult(
        net=net,
        ema_net=net.with_params(ema.shadow),
        loss_curve=pd.DataFrame(loss_rows, columns=["epoch", "step", "loss"]),
        val_curve=pd.DataFrame(val_rows, columns=["step", "val_loss"]),
        steps=step,
        seed=seed,
    )


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_checkpoint(net: FiLMMLP, path: str | Path, seed: int = 0, step: int = 0) -> Path:
    """Tensor bundle (Fourier frequencies first, then parameters) plus a JSON sidecar."""
    path = Path(path)
    tensors = {"rff_frequencies": net.rff.frequencies, **net.params}
    write_tensor_bundle(path, tensors)
    write_json(
        _sidecar(path),
        {
            "kind": net.kind,
            "architecture": net.arch.to_dict(),
            "seed": int(seed),
            "step": int(step),
            "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()],
        },
    )
    logger.info("saved %s checkpoint to %s", net.kind, path)
    return path


def load_checkpoint(path: str | Path) -> FiLMMLP:
    path = Path(path)
    if not path.exists() or not _sidecar(path).exists():
        raise ConfigError(f"checkpoint {path} (or its .json sidecar) does not exist")
    meta = read_json(_sidecar(path))
    cls = FiLMMLP._registry.get(meta.get("kind"))
    if cls is None:
        raise ConfigError(f"unknown checkpoint kind {meta.get('kind')!r}")
    arch = Architecture.from_dict(meta["architecture"])
    names = [entry["name"] for entry in meta["tensors"]]
    tensors = read_tensor_bundle(path, names)
    rff = RFFEmbedding(tensors.pop("rff_frequencies").astype(float))
    params = {k: v.astype(float) for k, v in tensors.items()}
    return cls(arch, params, rff)
