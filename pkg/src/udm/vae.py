"""Gaussian variational autoencoder with hand-written backprop.

Encoder: ``h = tanh(W1 x~ + b1)``, ``mu = Wmu h + bmu``,
``logvar = Wlv h + blv``. Decoder: ``x^ = W3 tanh(W2 z + b2) + b3``.
``x~`` is the input standardized with statistics from the training rows.
The loss is ``0.5 * ||x~ - x^||^2 + KL(N(mu, var) || N(0, I))`` with a
single reparameterized sample of ``z``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import FeatureTable
from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidConfig,
    IoError,
    NonFiniteLoss,
    NonPositiveVariance,
)

logger = logging.getLogger(__name__)

MODEL_VERSION = "udm-vae-v1"
PARAM_NAMES = ("W1", "b1", "Wmu", "bmu", "Wlv", "blv", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class VaeConfig:
    input_dim: int
    hidden_dim: int = 500
    latent_dim: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 300
    seed: int = 0
    standardize: bool = True
    # "mu_and_var" -> Z = [mu; var], "mu_only" -> Z = mu
    embedding: str = "mu_and_var"
    # second half of Z: variance ("var") or its square root ("stddev")
    spread: str = "var"

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "latent_dim", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be > 0")
        if self.embedding not in ("mu_and_var", "mu_only"):
            raise InvalidConfig(f"unknown embedding mode {self.embedding!r}")
        if self.spread not in ("var", "stddev"):
            raise InvalidConfig(f"unknown spread mode {self.spread!r}")

    @property
    def embedding_dim(self) -> int:
        return self.latent_dim * (2 if self.embedding == "mu_and_var" else 1)


@dataclass
class VaeModel:
    config: VaeConfig
    params: dict[str, np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    history: list[dict] = field(default_factory=list, compare=False)

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.params["Wmu"].shape[0]

    def to_bytes(self) -> bytes:
        """Raw parameter bytes, for bitwise comparisons."""
        parts = [self.mean.tobytes(), self.std.tobytes()]
        parts += [self.params[k].tobytes() for k in PARAM_NAMES]
        return b"".join(parts)


def init_model(cfg: VaeConfig, rng: np.random.Generator | None = None) -> VaeModel:
    """Glorot-uniform weights, zero biases, identity standardization."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    D, H, d = cfg.input_dim, cfg.hidden_dim, cfg.latent_dim

    def glorot(rows, cols):
        lim = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-lim, lim, size=(rows, cols))

    params = {
        "W1": glorot(H, D), "b1": np.zeros(H),
        "Wmu": glorot(d, H), "bmu": np.zeros(d),
        "Wlv": glorot(d, H), "blv": np.zeros(d),
        "W2": glorot(H, d), "b2": np.zeros(H),
        "W3": glorot(D, H), "b3": np.zeros(D),
    }
    return VaeModel(cfg, params, np.zeros(D), np.ones(D))


def zero_model(cfg: VaeConfig) -> VaeModel:
    D, H, d = cfg.input_dim, cfg.hidden_dim, cfg.latent_dim
    shapes = {"W1": (H, D), "b1": (H,), "Wmu": (d, H), "bmu": (d,), "Wlv": (d, H),
              "blv": (d,), "W2": (H, d), "b2": (H,), "W3": (D, H), "b3": (D,)}
    return VaeModel(cfg, {k: np.zeros(s) for k, s in shapes.items()}, np.zeros(D), np.ones(D))


def _check_dim(a: np.ndarray, n: int, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim not in (1, 2) or a.shape[-1] != n:
        raise DimensionMismatch(f"{what} has trailing dimension {a.shape[-1:]} , expected {n}")
    return a


def standardize(model: VaeModel, x) -> np.ndarray:
    x = _check_dim(x, model.input_dim, "input")
    return (x - model.mean) / model.std


def _encode_std(p, xs):
    h = np.tanh(xs @ p["W1"].T + p["b1"])
    mu = h @ p["Wmu"].T + p["bmu"]
    logvar = h @ p["Wlv"].T + p["blv"]
    return h, mu, logvar


def encode(model: VaeModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance for ``x`` (a vector or a batch of rows)."""
    _, mu, logvar = _encode_std(model.params, standardize(model, x))
    return mu, np.exp(logvar)


def reparameterize(mu, var, rng: np.random.Generator | None = None, eps=None) -> np.ndarray:
    """``z = mu + sqrt(var) * eps``; ``eps`` may be passed explicitly as a test hook."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(~(var > 0)):
        raise NonPositiveVariance("variance must be strictly positive")
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + np.sqrt(var) * eps


def decode(model: VaeModel, z) -> np.ndarray:
    """Reconstruction in standardized feature space."""
    p = model.params
    z = _check_dim(z, model.latent_dim, "latent vector")
    return np.tanh(z @ p["W2"].T + p["b2"]) @ p["W3"].T + p["b3"]


def kl_gaussian(mu, var) -> float:
    """KL(N(mu, diag var) || N(0, I)) in closed form."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(~(var > 0)):
        raise NonPositiveVariance("variance must be strictly positive")
    return float(0.5 * np.sum(var + mu * mu - 1.0 - np.log(var)))


def loss(model: VaeModel, x, rng: np.random.Generator | None = None, eps=None
         ) -> tuple[float, float, float]:
    """Single-sample loss for one input vector: ``(total, recon, kl)``."""
    x = _check_dim(x, model.input_dim, "input")
    if x.ndim != 1:
        raise DimensionMismatch("loss takes a single feature vector")
    xs = standardize(model, x)
    _, mu, logvar = _encode_std(model.params, xs)
    var = np.exp(logvar)
    z = reparameterize(mu, var, rng, eps)
    xhat = decode(model, z)
    recon = float(0.5 * np.sum((xs - xhat) ** 2))
    kl = kl_gaussian(mu, var)
    return recon + kl, recon, kl


def loss_and_grads(params: dict[str, np.ndarray], xs: np.ndarray, eps: np.ndarray):
    """Mean batch loss over standardized rows ``xs`` and its gradients.

    Returns ``(total, recon, kl, grads)``; the noise ``eps`` is fixed so the
    result is a deterministic function of the parameters.
    """
    n = xs.shape[0]
    h, mu, logvar = _encode_std(params, xs)
    sd = np.exp(0.5 * logvar)
    var = sd * sd
    z = mu + sd * eps
    g = np.tanh(z @ params["W2"].T + params["b2"])
    xhat = g @ params["W3"].T + params["b3"]
    diff = xhat - xs
    recon = 0.5 * np.sum(diff * diff) / n
    kl = 0.5 * np.sum(var + mu * mu - 1.0 - logvar) / n

    d_xhat = diff / n
    grads = {"W3": d_xhat.T @ g, "b3": d_xhat.sum(0)}
    d_a2 = (d_xhat @ params["W3"]) * (1.0 - g * g)
    grads["W2"] = d_a2.T @ z
    grads["b2"] = d_a2.sum(0)
    d_z = d_a2 @ params["W2"]
    d_mu = d_z + mu / n
    d_lv = d_z * eps * 0.5 * sd + 0.5 * (var - 1.0) / n
    grads["Wmu"] = d_mu.T @ h
    grads["bmu"] = d_mu.sum(0)
    grads["Wlv"] = d_lv.T @ h
    grads["blv"] = d_lv.sum(0)
    d_a1 = (d_mu @ params["Wmu"] + d_lv @ params["Wlv"]) * (1.0 - h * h)
    grads["W1"] = d_a1.T @ xs
    grads["b1"] = d_a1.sum(0)
    return recon + kl, recon, kl, grads


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def feature_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant columns pass through centred but unscaled
    std[std < 1e-12] = 1.0
    return mean, std


def train(features, cfg: VaeConfig) -> VaeModel:
    """Minibatch Adam on the mean batch loss.

    ``features`` is a :class:`FeatureTable` (already restricted to training
    rows) or a plain ``(N, D)`` array. Standardization statistics come from
    these rows only. Per-epoch mean losses are kept in ``model.history``.
    """
    X = features.X if isinstance(features, FeatureTable) else np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrainingSet("VAE training needs at least one instance")
    if X.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"features have D={X.shape[1]}, config says {cfg.input_dim}")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(cfg, rng)
    if cfg.standardize:
        model.mean, model.std = feature_stats(X)
    xs_all = (X - model.mean) / model.std
    opt = Adam(model.params, lr=cfg.learning_rate)
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        tot = rec = kl_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            eps = rng.standard_normal((len(idx), cfg.latent_dim))
            total, recon, kl, grads = loss_and_grads(model.params, xs_all[idx], eps)
            if not np.isfinite(total):
                raise NonFiniteLoss(
                    f"epoch {epoch}, batch at {start}: loss={total} recon={recon} kl={kl}")
            opt.step(model.params, grads)
            tot += total * len(idx)
            rec += recon * len(idx)
            kl_sum += kl * len(idx)
        model.history.append({"epoch": epoch, "loss": tot / n, "recon": rec / n, "kl": kl_sum / n})
        if logger.isEnabledFor(logging.DEBUG) and epoch % 50 == 0:
            logger.debug("vae epoch %d loss %.4f", epoch, tot / n)
    if not all(np.all(np.isfinite(v)) for v in model.params.values()):
        raise NonFiniteLoss("non-finite weights after training")
    k = min(3, len(model.history))
    first = np.mean([h["loss"] for h in model.history[:k]])
    last = np.mean([h["loss"] for h in model.history[-k:]])
    if last > first:
        logger.warning("VAE loss did not decrease: first %.4f last %.4f", first, last)
    return model


def embed(model: VaeModel, x) -> np.ndarray:
    """Latent embedding ``[mu; var]`` (no sampling); rows in, rows out."""
    mu, var = encode(model, x)
    if model.config.embedding == "mu_only":
        return mu
    spread = np.sqrt(var) if model.config.spread == "stddev" else var
    return np.concatenate([mu, spread], axis=-1)


def save_model(model: VaeModel, path) -> None:
    doc = {
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "weights": {k: {"shape": list(model.params[k].shape),
                        "data": model.params[k].ravel().tolist()} for k in PARAM_NAMES},
        "history": model.history,
    }
    try:
        Path(path).write_text(json.dumps(doc), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write model {path}: {exc}") from exc


def load_model(path) -> VaeModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc
    if doc.get("version") != MODEL_VERSION:
        raise InvalidConfig(f"{path}: unsupported model version {doc.get('version')!r}")
    cfg = VaeConfig(**doc["config"])
    params = {k: np.array(w["data"], dtype=np.float64).reshape(w["shape"])
              for k, w in doc["weights"].items()}
    return VaeModel(cfg, params, np.array(doc["mean"]), np.array(doc["std"]),
                    doc.get("history", []))


def with_latent_dim(cfg: VaeConfig, d: int) -> VaeConfig:
    return replace(cfg, latent_dim=d)
