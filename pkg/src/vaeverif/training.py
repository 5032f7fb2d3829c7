"""Beta-weighted lower bound, hand-derived gradients, RMS-prop and the training loop."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    LAYER_NAMES,
    TAU_CLAMP,
    AffineLayer,
    ShapeError,
    VaeConfig,
    VaeModel,
    gen_forward,
    infer_forward,
    init_params,
    kl_to_standard_normal,
    log_density_diag,
    reparam_sample,
)

log = logging.getLogger(__name__)

EPS_STAB = 1e-8


class NumericError(FloatingPointError):
    """A non-finite value appeared; ``block`` names where."""

    def __init__(self, block: str, message: str = "non-finite value"):
        super().__init__(f"{message} in {block}")
        self.block = block


@dataclass(frozen=True)
class ElboEstimate:
    total: float
    recon: float
    kl: float


@dataclass
class GradientWorkspace:
    """Intermediates of the backward pass and the six block gradients.

    Intermediates are rows (or stacks of rows for a batch). ``grads`` maps
    each layer name to an ``AffineLayer`` holding the gradient of the weights
    and of the bias; ``grads[name].wtilde`` is the gradient with respect to the
    augmented matrix.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    T: np.ndarray
    G: np.ndarray
    S: np.ndarray
    R: np.ndarray
    F: np.ndarray
    E_x: np.ndarray
    E_h: np.ndarray
    grads: dict[str, AffineLayer]
    elbo: np.ndarray | float = 0.0


def elbo_estimate(x, model: VaeModel, eps_samples, beta: float) -> ElboEstimate:
    """Monte-Carlo reconstruction term plus analytic KL, for one input row."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.atleast_2d(np.asarray(eps_samples, dtype=np.float64))
    if x.ndim != 1:
        raise ShapeError("elbo_estimate takes a single row vector")
    _, q = infer_forward(x, model.inf)
    h = reparam_sample(q, eps)
    _, p = gen_forward(h, model.gen)
    recon = float(np.mean(log_density_diag(x, p)))
    kl = float(kl_to_standard_normal(q))
    return ElboEstimate(total=recon - beta * kl, recon=recon, kl=kl)


def _check(block: str, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(block)


def _augment(a: np.ndarray) -> np.ndarray:
    return np.hstack([a, np.ones((a.shape[0], 1))])


def _backward(X: np.ndarray, model: VaeModel, eps: np.ndarray, beta: float) -> GradientWorkspace:
    """Batched single-draw backward pass; gradients are sums over rows."""
    gen, inf = model.gen, model.inf

    y = np.tanh(inf.v(X))
    mu_r = inf.mu(y)
    pre_r = inf.tau(y)
    tau_r = np.exp(np.clip(pre_r, -TAU_CLAMP, TAU_CLAMP))
    live_r = np.abs(pre_r) < TAU_CLAMP
    _check("inf", y, mu_r, tau_r)

    inv_sd_r = 1.0 / np.sqrt(tau_r)
    h = mu_r + inv_sd_r * eps
    z = np.tanh(gen.v(h))
    mu_g = gen.mu(z)
    pre_g = gen.tau(z)
    tau_g = np.exp(np.clip(pre_g, -TAU_CLAMP, TAU_CLAMP))
    live_g = np.abs(pre_g) < TAU_CLAMP
    _check("gen", z, mu_g, tau_g)

    resid = X - mu_g
    A = resid * tau_g
    E_x = np.ones(X.shape[-1])
    E_h = np.ones(h.shape[-1])
    B = 0.5 * (E_x - resid * A) * live_g
    C = 1.0 - z * z
    T = 1.0 - y * y
    G = C * (B @ gen.tau.weights.T + A @ gen.mu.weights.T)
    S = G @ gen.v.weights.T
    R = beta * 0.5 * (1.0 / tau_r - E_h) * live_r
    F = -0.5 * inv_sd_r * eps

    d_mu_r = S - beta * mu_r
    d_tau_r = S * F * live_r + R
    d_y = (d_mu_r @ inf.mu.weights.T + d_tau_r @ inf.tau.weights.T) * T

    deltas = {
        "gen.mu": (z, A), "gen.tau": (z, B), "gen.v": (h, G),
        "inf.mu": (y, d_mu_r), "inf.tau": (y, d_tau_r), "inf.v": (X, d_y),
    }
    grads = {}
    for name in LAYER_NAMES:
        inp, delta = deltas[name]
        gw = inp.T @ delta
        gb = delta.sum(axis=0)
        _check(name, gw, gb)
        grads[name] = AffineLayer(gw, gb)

    recon = 0.5 * (np.log(tau_g) - np.log(2 * np.pi) - tau_g * resid * resid).sum(axis=-1)
    kl = 0.5 * (mu_r ** 2 + 1.0 / tau_r - 1.0 + np.log(tau_r)).sum(axis=-1)
    return GradientWorkspace(A, B, C, T, G, S, R, F, E_x, E_h, grads, recon - beta * kl)


def analytic_gradients(x, model: VaeModel, eps, beta: float) -> GradientWorkspace:
    """Ascent gradients of the beta-ELBO for one input row and one fixed draw."""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != (model.config.d_x,) or eps.shape != (model.config.d_h,):
        raise ShapeError(
            f"expected x of shape ({model.config.d_x},) and eps of shape ({model.config.d_h},)")
    ws = _backward(x[None, :], model, eps[None, :], beta)
    for name in ("A", "B", "C", "T", "G", "S", "R", "F"):
        setattr(ws, name, getattr(ws, name)[0])
    ws.elbo = float(ws.elbo[0])
    return ws


def minibatch_gradients(X, model: VaeModel, eps, beta: float) -> tuple[dict[str, AffineLayer], float]:
    """Mean gradient and mean beta-ELBO over the rows of ``X`` (one draw per row)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    ws = _backward(X, model, np.atleast_2d(eps), beta)
    n = X.shape[0]
    mean = {k: AffineLayer(g.weights / n, g.bias / n) for k, g in ws.grads.items()}
    return mean, float(np.mean(ws.elbo))


@dataclass(frozen=True)
class RmsPropState:
    ms: dict[str, AffineLayer]
    gamma: float
    eta: float
    epsilon_stab: float = EPS_STAB

    @classmethod
    def initial(cls, model: VaeModel, gamma: float, eta: float, epsilon_stab: float = EPS_STAB):
        ms = {
            name: AffineLayer(np.ones_like(layer.weights), np.ones_like(layer.bias))
            for name, layer in model.named_layers().items()
        }
        return cls(ms, gamma, eta, epsilon_stab)


def rmsprop_step(model: VaeModel, grads: dict[str, AffineLayer], state: RmsPropState):
    """One ascent step. With ``gamma == 1`` this is plain SGD scaled by 1/sqrt(1+eps)."""
    g_ = state.gamma
    new_ms, new_layers = {}, {}
    for name, layer in model.named_layers().items():
        g = grads[name]
        ms = state.ms[name]
        if g.weights.shape != layer.weights.shape:
            raise ShapeError(f"gradient for {name} has shape {g.weights.shape}")
        ms_w = g_ * ms.weights + (1.0 - g_) * g.weights ** 2
        ms_b = g_ * ms.bias + (1.0 - g_) * g.bias ** 2
        new_ms[name] = AffineLayer(ms_w, ms_b)
        new_layers[name] = AffineLayer(
            layer.weights + state.eta * g.weights / np.sqrt(ms_w + state.epsilon_stab),
            layer.bias + state.eta * g.bias / np.sqrt(ms_b + state.epsilon_stab),
        )
    return model.with_layers(new_layers), replace(state, ms=new_ms)


@dataclass
class TrainReport:
    elbo: list[tuple[int, float]] = field(default_factory=list)
    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)
    stop_reason: str = "max-iters"
    iterations: int = 0
    best_iteration: int | None = None

    def to_csv(self) -> str:
        """Rows ``iter,elbo,dev_eer,dev_mindcf``; missing cells are empty."""
        rows: dict[int, list[str]] = {}
        for it, value in self.elbo:
            rows.setdefault(it, ["", "", ""])[0] = repr(value)
        for it, eer, dcf in self.checkpoints:
            row = rows.setdefault(it, ["", "", ""])
            row[1], row[2] = repr(eer), repr(dcf)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "elbo", "dev_eer", "dev_mindcf"])
        for it in sorted(rows):
            w.writerow([it, *rows[it]])
        return buf.getvalue()


def _dev_metrics(model, dev, k, seed):
    from .evaluation import compute_eer, compute_min_dcf
    from .scoring import score_trials

    vectors, trials = dev
    scores = score_trials(trials, vectors, model, k, seed)
    labels = [t.label for t in trials]
    s = [sc for _, sc, _ in scores.entries]
    return compute_eer(s, labels)[0], compute_min_dcf(s, labels)[0]


def fit(train_x, config: VaeConfig, dev=None, model: VaeModel | None = None):
    """Train a VAE by minibatch RMS-prop ascent on the beta-ELBO.

    ``dev`` is an optional ``(vectors, trials)`` pair: ``vectors`` maps ids to
    rows and ``trials`` is a list of labelled ``Trial``. When given, dev EER is
    checked every ``eval_every`` epochs (and once before training) and training
    stops after ``patience`` checkpoints without improvement, returning the
    best checkpoint. The learning rate is halved once at mid-training.
    """
    X = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
    if X.size == 0 or X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[1] != config.d_x:
        raise ShapeError(f"training vectors have dimension {X.shape[1]}, config says {config.d_x}")

    init_seq, shuffle_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    if model is None:
        model = init_params(config, int(init_seq.generate_state(1)[0]))
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    state = RmsPropState.initial(model, config.gamma, config.eta)
    report = TrainReport()

    best_model, best_eer, stale = model, None, 0

    def checkpoint(it):
        nonlocal best_model, best_eer, stale
        eer, dcf = _dev_metrics(model, dev, config.k_score, config.seed)
        report.checkpoints.append((it, eer, dcf))
        log.info("iter %d dev EER %.4f minDCF %.4f", it, eer, dcf)
        if best_eer is None or eer < best_eer:
            best_model, best_eer, stale = model, eer, 0
            report.best_iteration = it
        else:
            stale += 1
        return best_eer == 0.0 or stale >= config.patience

    if dev is not None and config.max_iters > 0 and checkpoint(0):
        report.stop_reason = "no-improvement"
        return best_model, report

    n, k, mb = X.shape[0], config.k_train, config.minibatch
    for epoch in range(1, config.max_iters + 1):
        if epoch == config.max_iters // 2 + 1 and config.max_iters > 1:
            state = replace(state, eta=config.eta / 2)
        order = shuffle_rng.permutation(n)
        batch_elbos = []
        for start in range(0, n, mb):
            rows = X[order[start:start + mb]]
            if k > 1:
                rows = np.repeat(rows, k, axis=0)
            eps = noise_rng.standard_normal((rows.shape[0], config.d_h))
            grads, elbo = minibatch_gradients(rows, model, eps, config.beta)
            model, state = rmsprop_step(model, grads, state)
            batch_elbos.append(elbo)
        report.elbo.append((epoch, float(np.mean(batch_elbos))))
        report.iterations = epoch
        if dev is not None and epoch % config.eval_every == 0 and checkpoint(epoch):
            report.stop_reason = "no-improvement"
            return best_model, report

    if dev is not None and best_eer is not None:
        return best_model, report
    return model, report
