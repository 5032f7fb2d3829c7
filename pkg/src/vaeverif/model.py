"""Diagonal VAE parameterization and forward computations.

All vectors are rows. A batch of vectors is a 2-D array whose rows are the
individual vectors, so every forward function accepts either a single row
(shape ``(d,)``) or a stack of rows (shape ``(n, d)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

# Precision pre-activations are clamped before exponentiation.
TAU_CLAMP = 30.0


class ShapeError(ValueError):
    """Raised when an input vector or parameter has the wrong dimension."""


class DomainError(ValueError):
    """Raised when a precision is nonpositive or otherwise out of domain."""


@dataclass(frozen=True)
class VaeConfig:
    d_x: int
    d_d: int
    d_h: int
    beta: float = 1.0
    k_train: int = 1
    k_score: int = 100
    minibatch: int = 100
    gamma: float = 0.9
    eta: float = 1e-6  # large-corpus default; small synthetic runs pass their own
    seed: int = 0
    max_iters: int = 100
    eval_every: int = 1
    patience: int = 3

    def __post_init__(self):
        for name in ("d_x", "d_d", "d_h", "k_train", "k_score", "minibatch", "eval_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.max_iters < 0 or self.patience < 1:
            raise ValueError("max_iters must be >= 0 and patience >= 1")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")

    @classmethod
    def from_mapping(cls, values: dict) -> "VaeConfig":
        """Build a config from string or numeric values, ignoring nothing."""
        types = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(types)
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            kwargs[key] = float(raw) if types[key] == "float" else int(raw)
        return cls(**kwargs)

    def as_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class AffineLayer:
    """Affine map ``x W + b`` stored as weights ``(in, out)`` and bias ``(out,)``."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ShapeError(f"inconsistent affine shapes {w.shape} and {b.shape}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def wtilde(self) -> np.ndarray:
        """Augmented matrix ``[W; b]`` acting on ``[x 1]``."""
        return np.vstack([self.weights, self.bias[None, :]])

    @classmethod
    def from_wtilde(cls, wtilde: np.ndarray) -> "AffineLayer":
        wtilde = np.asarray(wtilde, dtype=np.float64)
        return cls(wtilde[:-1].copy(), wtilde[-1].copy())

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"expected input of width {self.in_dim}, got {x.shape[-1]}")
        return x @ self.weights + self.bias


@dataclass(frozen=True)
class _Net:
    v: AffineLayer
    mu: AffineLayer
    tau: AffineLayer

    def __post_init__(self):
        if self.mu.in_dim != self.v.out_dim or self.tau.in_dim != self.v.out_dim:
            raise ShapeError("head input width must equal the deterministic layer width")
        if self.mu.out_dim != self.tau.out_dim:
            raise ShapeError("mean and precision heads must have equal width")

    def layers(self):
        return {"v": self.v, "mu": self.mu, "tau": self.tau}


class GenerativeNet(_Net):
    """Maps latent ``h`` to a diagonal Gaussian over observations."""


class InferenceNet(_Net):
    """Maps an observation ``x`` to a diagonal Gaussian posterior over ``h``."""


@dataclass(frozen=True)
class VaeModel:
    config: VaeConfig
    gen: GenerativeNet
    inf: InferenceNet

    def __post_init__(self):
        c = self.config
        expected = {
            "gen.v": (c.d_h, c.d_d), "gen.mu": (c.d_d, c.d_x), "gen.tau": (c.d_d, c.d_x),
            "inf.v": (c.d_x, c.d_d), "inf.mu": (c.d_d, c.d_h), "inf.tau": (c.d_d, c.d_h),
        }
        for name, layer in self.named_layers().items():
            if layer.weights.shape != expected[name]:
                raise ShapeError(
                    f"{name} weights have shape {layer.weights.shape}, expected {expected[name]}")

    def named_layers(self) -> dict[str, AffineLayer]:
        out = {}
        for prefix, net in (("gen", self.gen), ("inf", self.inf)):
            for key, layer in net.layers().items():
                out[f"{prefix}.{key}"] = layer
        return out

    def with_layers(self, layers: dict[str, AffineLayer]) -> "VaeModel":
        """Return a copy with the named layers replaced."""
        nets = {"gen": self.gen, "inf": self.inf}
        for name, layer in layers.items():
            prefix, key = name.split(".")
            nets[prefix] = replace(nets[prefix], **{key: layer})
        return VaeModel(self.config, nets["gen"], nets["inf"])


LAYER_NAMES = ("gen.v", "gen.mu", "gen.tau", "inf.v", "inf.mu", "inf.tau")


@dataclass(frozen=True)
class DiagGaussian:
    mean: np.ndarray
    precision: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        prec = np.asarray(self.precision, dtype=np.float64)
        if mean.shape != prec.shape:
            raise ShapeError(f"mean {mean.shape} and precision {prec.shape} differ")
        if not np.all(prec > 0):
            raise DomainError("precision must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", prec)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


def clamp_tau(pre: np.ndarray) -> np.ndarray:
    return np.clip(pre, -TAU_CLAMP, TAU_CLAMP)


def _heads(net: _Net, inp: np.ndarray):
    hidden = np.tanh(net.v(inp))
    mean = net.mu(hidden)
    prec = np.exp(clamp_tau(net.tau(hidden)))
    return hidden, DiagGaussian(mean, prec)


def infer_forward(x: np.ndarray, inf: InferenceNet) -> tuple[np.ndarray, DiagGaussian]:
    """Return the deterministic layer ``y`` and the posterior ``q(h|x)``."""
    return _heads(inf, x)


def gen_forward(h: np.ndarray, gen: GenerativeNet) -> tuple[np.ndarray, DiagGaussian]:
    """Return the deterministic layer ``z`` and the likelihood ``p(x|h)``."""
    return _heads(gen, h)


def reparam_sample(q: DiagGaussian, eps: np.ndarray) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1] != q.dim:
        raise ShapeError(f"eps has width {eps.shape[-1]}, posterior has {q.dim}")
    if not np.all(q.precision > 0):
        raise DomainError("precision must be strictly positive")
    return q.mean + eps / np.sqrt(q.precision)


def log_density_diag(x: np.ndarray, p: DiagGaussian) -> np.ndarray | float:
    """Log density of ``x`` under a diagonal Gaussian, summed over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.dim:
        raise ShapeError(f"x has width {x.shape[-1]}, density has {p.dim}")
    if not np.all(p.precision > 0):
        raise DomainError("precision must be strictly positive")
    r = x - p.mean
    terms = np.log(p.precision) - LOG_2PI - p.precision * r * r
    return 0.5 * terms.sum(axis=-1)


def kl_to_standard_normal(q: DiagGaussian) -> np.ndarray | float:
    """Analytic KL divergence from ``q`` to N(0, I), summed over the last axis."""
    if not np.all(q.precision > 0):
        raise DomainError("precision must be strictly positive")
    terms = q.mean ** 2 + 1.0 / q.precision - 1.0 + np.log(q.precision)
    return 0.5 * terms.sum(axis=-1)


def _uniform_layer(rng: np.random.Generator, n_in: int, n_out: int, scale: float = 1.0):
    a = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-a, a, size=(n_in, n_out)) * scale
    return AffineLayer(w, np.zeros(n_out))


def init_params(config: VaeConfig, seed: int | None = None) -> VaeModel:
    """Fan-scaled uniform weights, zero biases, precision heads damped by 0.01."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    c = config
    gen = GenerativeNet(
        v=_uniform_layer(rng, c.d_h, c.d_d),
        mu=_uniform_layer(rng, c.d_d, c.d_x),
        tau=_uniform_layer(rng, c.d_d, c.d_x, scale=0.01),
    )
    inf = InferenceNet(
        v=_uniform_layer(rng, c.d_x, c.d_d),
        mu=_uniform_layer(rng, c.d_d, c.d_h),
        tau=_uniform_layer(rng, c.d_d, c.d_h, scale=0.01),
    )
    return VaeModel(config, gen, inf)


def zero_model(config: VaeConfig) -> VaeModel:
    """Model with every weight and bias zero: q = prior and p(x|h) = N(0, I)."""
    def zl(n_in, n_out):
        return AffineLayer(np.zeros((n_in, n_out)), np.zeros(n_out))
    c = config
    return VaeModel(
        c,
        GenerativeNet(zl(c.d_h, c.d_d), zl(c.d_d, c.d_x), zl(c.d_d, c.d_x)),
        InferenceNet(zl(c.d_x, c.d_d), zl(c.d_d, c.d_h), zl(c.d_d, c.d_h)),
    )
