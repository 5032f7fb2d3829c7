"""Importance-sampling marginal likelihoods and the verification LLR."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import VaeModel, gen_forward, infer_forward, log_density_diag, reparam_sample
from .training import NumericError

LABELS = ("target", "impostor", "unknown")
_LABEL_CODES = {"tar": "target", "non": "impostor", "unk": "unknown"}
_CODE_OF = {v: k for k, v in _LABEL_CODES.items()}


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str = "unknown"

    def __post_init__(self):
        if not self.enroll_id or not self.test_id:
            raise ValueError("trial ids must be nonempty")
        label = _LABEL_CODES.get(self.label, self.label)
        if label not in LABELS:
            raise ValueError(f"unknown trial label {self.label!r}")
        object.__setattr__(self, "label", label)

    @property
    def code(self) -> str:
        return _CODE_OF[self.label]


@dataclass
class ScoreSet:
    """Scored trials as ``(trial, score, k_used)`` entries."""

    entries: list[tuple[Trial, float, int]] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, s, _ in self.entries], dtype=np.float64)

    @property
    def labels(self) -> list[str]:
        return [t.label for t, _, _ in self.entries]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _proposal(x, model: VaeModel, eps):
    """Posterior ``q(h|x)`` and the reparametrized draws for noise rows ``eps``."""
    _, q = infer_forward(np.asarray(x, dtype=np.float64), model.inf)
    return q, reparam_sample(q, eps)


def _noise(model: VaeModel, K: int, seed) -> np.ndarray:
    if K < 1:
        raise ValueError("K must be >= 1")
    return _rng(seed).standard_normal((K, model.config.d_h))


def _log_prior(h):
    return -0.5 * (h * h).sum(axis=-1) - 0.5 * h.shape[-1] * np.log(2 * np.pi)


def _log_weights(xs, q, h, model):
    """log prod_i p(x_i|h) + log p(h) - log q(h), one entry per draw."""
    _, p = gen_forward(h, model.gen)
    w = _log_prior(h) - log_density_diag(h, q)
    for x in xs:
        w = w + log_density_diag(np.asarray(x, dtype=np.float64), p)
    if not np.all(np.isfinite(w)):
        raise NumericError("importance weights")
    return w


def _log_mean_exp(w) -> float:
    return float(logsumexp(w) - np.log(len(w)))


def log_marginal(x, model: VaeModel, K: int, seed) -> float:
    """Importance estimate of log p(x) with q(h|x) as proposal."""
    q, h = _proposal(x, model, _noise(model, K, seed))
    return _log_mean_exp(_log_weights([x], q, h, model))


def log_joint_marginal(x1, x2, model: VaeModel, K: int, seed) -> float:
    """Importance estimate of log p(x1, x2) under a shared latent, proposal q(h|x2)."""
    q, h = _proposal(x2, model, _noise(model, K, seed))
    return _log_mean_exp(_log_weights([x1, x2], q, h, model))


def llr(x_test, x_enroll, model: VaeModel, K: int, seed, symmetric: bool = False) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio.

    Every importance estimate in one call reuses the same K noise rows
    (common random numbers), so the joint and the enrollment marginal share
    their draws exactly.
    """
    eps = _noise(model, K, seed)
    q_e, h_e = _proposal(x_enroll, model, eps)
    q_t, h_t = _proposal(x_test, model, eps)
    marg_e = _log_mean_exp(_log_weights([x_enroll], q_e, h_e, model))
    marg_t = _log_mean_exp(_log_weights([x_test], q_t, h_t, model))
    joint = _log_mean_exp(_log_weights([x_test, x_enroll], q_e, h_e, model))
    if symmetric:
        reverse = _log_mean_exp(_log_weights([x_enroll, x_test], q_t, h_t, model))
        joint = float(np.logaddexp(joint, reverse) - np.log(2.0))
    return joint - marg_t - marg_e


def trial_seed(seed: int, trial: Trial) -> np.random.SeedSequence:
    """Per-trial stream keyed by the trial's ids, not its position."""
    digest = hashlib.sha256(f"{trial.enroll_id}\x00{trial.test_id}".encode()).digest()
    key = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(seed), *key])


def score_trials(trials, vectors, model: VaeModel, K: int, seed: int,
                 symmetric: bool = False) -> ScoreSet:
    out = ScoreSet()
    for trial in trials:
        for key in (trial.enroll_id, trial.test_id):
            if key not in vectors:
                raise KeyError(f"vector id {key!r} not found")
        s = llr(vectors[trial.test_id], vectors[trial.enroll_id], model, K,
                trial_seed(seed, trial), symmetric=symmetric)
        out.entries.append((trial, s, K))
    return out
