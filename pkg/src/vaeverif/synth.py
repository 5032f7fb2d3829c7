"""Seeded synthetic corpora: two-covariance speakers and 2-D Gaussian clusters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import VaeModel, gen_forward
from .plda import LabeledCorpus
from .scoring import Trial


def _as_cov(c, dim: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 0:
        return np.eye(dim) * float(c)
    if c.ndim == 1:
        if c.shape != (dim,):
            raise ValueError(f"diagonal covariance must have {dim} entries")
        return np.diag(c)
    if c.shape != (dim, dim):
        raise ValueError(f"covariance must be {dim}x{dim}")
    return c


def _check_psd(c: np.ndarray, name: str, strict: bool):
    if not np.allclose(c, c.T):
        raise ValueError(f"{name} is not symmetric")
    ev = np.linalg.eigvalsh(c)
    if ev.min() < -1e-12 or (strict and ev.min() <= 0):
        raise ValueError(f"{name} is not positive definite")


@dataclass(frozen=True)
class CorpusSpec:
    n_speakers: int
    sessions_per_speaker: int
    dim: int
    b_cov: object = 1.0
    w_cov: object = 1.0
    seed: int = 0
    n_dev_speakers: int = 0
    n_test_speakers: int = 0
    n_trials: int = 2000

    def __post_init__(self):
        if self.n_speakers < 1 or self.sessions_per_speaker < 1 or self.dim < 1:
            raise ValueError("counts must be positive")
        if self.n_dev_speakers < 0 or self.n_test_speakers < 0 or self.n_trials < 0:
            raise ValueError("split sizes must be nonnegative")
        # B may be singular (no speaker variability); W must be PD.
        _check_psd(_as_cov(self.b_cov, self.dim), "b_cov", strict=False)
        _check_psd(_as_cov(self.w_cov, self.dim), "w_cov", strict=True)


@dataclass
class SyntheticCorpus:
    train: LabeledCorpus
    dev: LabeledCorpus | None
    test: LabeledCorpus | None
    ids: dict[str, list[str]]
    dev_trials: list[Trial]
    test_trials: list[Trial]

    def vectors(self, part: str) -> dict[str, np.ndarray]:
        corpus = getattr(self, part)
        return dict(zip(self.ids[part], corpus.vectors))


def _draw_speakers(rng, first, count, spec, B, W):
    d = spec.dim
    means = rng.multivariate_normal(np.zeros(d), B, size=count, method="eigh")
    noise = rng.multivariate_normal(np.zeros(d), W, size=(count, spec.sessions_per_speaker),
                                    method="eigh")
    X = (means[:, None, :] + noise).reshape(-1, d)
    spk = [f"spk{first + s:05d}" for s in range(count) for _ in range(spec.sessions_per_speaker)]
    ids = [f"spk{first + s:05d}_s{j:03d}" for s in range(count)
           for j in range(spec.sessions_per_speaker)]
    return LabeledCorpus(X, tuple(spk)), ids


def make_trials(ids, speakers, n_trials: int, rng) -> list[Trial]:
    """Balanced trials: ``n_trials // 2`` target and as many impostor pairs."""
    if n_trials == 0:
        return []
    by_spk: dict[str, list[str]] = {}
    for vid, s in zip(ids, speakers):
        by_spk.setdefault(s, []).append(vid)
    target_pool = [(a, b) for vs in by_spk.values()
                   for i, a in enumerate(vs) for b in vs[i + 1:]]
    if not target_pool:
        raise ValueError("no target pairs: every speaker has a single session")
    if len(by_spk) < 2:
        raise ValueError("no impostor pairs: a single speaker")
    n_half = n_trials // 2
    picks = rng.choice(len(target_pool), size=n_half, replace=n_half > len(target_pool))
    trials = [Trial(*target_pool[i], "target") for i in picks]

    ids = list(ids)
    spk_of = dict(zip(ids, speakers))
    made = 0
    while made < n_half:
        enroll = rng.permutation(len(ids))
        test = rng.permutation(len(ids))
        for a, b in zip(enroll, test):
            if spk_of[ids[a]] != spk_of[ids[b]]:
                trials.append(Trial(ids[a], ids[b], "impostor"))
                made += 1
                if made == n_half:
                    break
    order = rng.permutation(len(trials))
    return [trials[i] for i in order]


def gen_two_cov_corpus(spec: CorpusSpec) -> SyntheticCorpus:
    """Speaker means ~ N(0, B), sessions ~ N(mean, W); dev/test speakers disjoint from train."""
    B = _as_cov(spec.b_cov, spec.dim)
    W = _as_cov(spec.w_cov, spec.dim)
    train_seq, dev_seq, test_seq, trial_seq = np.random.SeedSequence(spec.seed).spawn(4)
    train, train_ids = _draw_speakers(np.random.default_rng(train_seq), 0, spec.n_speakers,
                                      spec, B, W)
    ids = {"train": train_ids}
    parts: dict[str, LabeledCorpus | None] = {"dev": None, "test": None}
    trials: dict[str, list[Trial]] = {"dev": [], "test": []}
    trial_rng = np.random.default_rng(trial_seq)
    first = spec.n_speakers
    for part, count, seq in (("dev", spec.n_dev_speakers, dev_seq),
                             ("test", spec.n_test_speakers, test_seq)):
        if count == 0:
            continue
        corpus, pids = _draw_speakers(np.random.default_rng(seq), first, count, spec, B, W)
        first += count
        parts[part] = corpus
        ids[part] = pids
        trials[part] = make_trials(pids, corpus.speaker_of, spec.n_trials, trial_rng)
    if spec.n_dev_speakers == 0 and spec.n_test_speakers == 0 and spec.n_trials > 0:
        # no held-out speakers: trials come from the training speakers
        trials["test"] = make_trials(train_ids, train.speaker_of, spec.n_trials, trial_rng)
    return SyntheticCorpus(train, parts["dev"], parts["test"], ids,
                           trials["dev"], trials["test"])


@dataclass(frozen=True)
class ClusterSpec:
    n_clusters: int
    points_per_cluster: int
    cluster_spread: float = 3.0
    within_cov: object = ((1.0, 0.0), (0.0, 1.0))
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1 or self.points_per_cluster < 0:
            raise ValueError("counts must be positive")
        _check_psd(_as_cov(self.within_cov, 2), "within_cov", strict=True)


@dataclass
class ClusterData:
    points: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    within_cov: np.ndarray

    def default_radius(self) -> float:
        return 2.0 * float(np.sqrt(np.linalg.eigvalsh(self.within_cov).max()))


def gen_cluster_2d(spec: ClusterSpec) -> ClusterData:
    """Cluster centers ~ N(0, spread^2 I), points ~ N(center, within_cov)."""
    rng = np.random.default_rng(spec.seed)
    cov = _as_cov(spec.within_cov, 2)
    centers = rng.normal(0.0, spec.cluster_spread, size=(spec.n_clusters, 2))
    n = spec.points_per_cluster
    noise = rng.multivariate_normal(np.zeros(2), cov, size=(spec.n_clusters, n), method="eigh")
    points = (centers[:, None, :] + noise).reshape(-1, 2)
    labels = np.repeat(np.arange(spec.n_clusters), n)
    return ClusterData(points, labels, centers, cov)


def sample_generative(model: VaeModel, n: int, seed) -> np.ndarray:
    """Draw x ~ p(x|h) with h ~ N(0, I)."""
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n, model.config.d_h))
    _, p = gen_forward(h, model.gen)
    return p.mean + rng.standard_normal(p.mean.shape) / np.sqrt(p.precision)


def coverage_fraction(centers, samples, radius: float) -> float:
    """Fraction of centers with at least one sample within ``radius``."""
    centers = np.atleast_2d(centers)
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, centers.shape[1])
    if len(centers) == 0:
        return 0.0
    if len(samples) == 0:
        return 0.0
    d2 = ((centers[:, None, :] - samples[None, :, :]) ** 2).sum(axis=-1)
    return float(np.mean(d2.min(axis=1) <= radius ** 2))


def capture_score(data: ClusterData, model: VaeModel, n_gen: int,
                  radius: float | None = None, seed: int = 0) -> float:
    """Fraction of generator clusters reached by samples from the trained model."""
    if model.config.d_x != 2 or data.centers.shape[1] != 2:
        raise ValueError("capture_score needs 2-D data and a 2-D model")
    r = data.default_radius() if radius is None else radius
    return coverage_fraction(data.centers, sample_generative(model, n_gen, seed), r)


def low_rank_cov(dim: int, rank: int, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """``scale * L L^T`` with ``L`` a seeded Gaussian ``(dim, rank)`` matrix scaled by 1/sqrt(rank)."""
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(dim, rank)) / np.sqrt(rank)
    return scale * (L @ L.T)
