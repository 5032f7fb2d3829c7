"""Two-covariance PLDA: EM training and closed-form trial LLR.

Model: speaker mean ``y ~ N(mu, B)``, session ``x = y + e`` with
``e ~ N(0, W)``. EM treats each speaker's ``y`` as the hidden variable:

E-step, speaker with ``n`` sessions summing to ``f``::

    L = inv(B) + n inv(W)                   (posterior precision)
    m = inv(L) (inv(B) mu + inv(W) f)       (posterior mean)

M-step, with ``S`` speakers and ``N`` sessions in total::

    B = 1/S  sum_s [(m_s - mu)(m_s - mu)^T + inv(L_s)]
    W = 1/N  sum_s sum_i [(x_i - m_s)(x_i - m_s)^T + inv(L_s)]

``mu`` stays at the global sample mean. In diagonal mode every matrix is
replaced by its diagonal, which makes each dimension an independent 1-D model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class PldaError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledCorpus:
    vectors: np.ndarray
    speaker_of: tuple[str, ...]

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if len(self.speaker_of) != v.shape[0]:
            raise ValueError("one speaker id per vector required")
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "speaker_of", tuple(self.speaker_of))

    def groups(self) -> list[np.ndarray]:
        """Row indices per speaker, in order of first appearance."""
        index: dict[str, list[int]] = {}
        for i, s in enumerate(self.speaker_of):
            index.setdefault(s, []).append(i)
        return [np.array(ix) for ix in index.values()]


@dataclass(frozen=True)
class PldaTwoCov:
    mu: np.ndarray
    b_cov: np.ndarray
    w_cov: np.ndarray
    mode: str = "full"

    def __post_init__(self):
        if self.mode not in ("diag", "full"):
            raise ValueError(f"mode must be 'diag' or 'full', got {self.mode!r}")
        for name in ("mu", "b_cov", "w_cov"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def full_matrices(self):
        if self.mode == "diag":
            return np.diag(self.b_cov), np.diag(self.w_cov)
        return self.b_cov, self.w_cov


def _speaker_stats(corpus: LabeledCorpus):
    groups = corpus.groups()
    X = corpus.vectors
    counts = np.array([len(g) for g in groups], dtype=np.float64)
    sums = np.stack([X[g].sum(axis=0) for g in groups])
    return groups, counts, sums


def _marginal_loglik(X, groups, counts, mu, B, W) -> float:
    """Observed-data log-likelihood of the corpus under (mu, B, W), full matrices."""
    d = X.shape[1]
    total = 0.0
    _, logdet_w = np.linalg.slogdet(W)
    W_inv = np.linalg.inv(W)
    for g, n in zip(groups, counts):
        xs = X[g]
        mean = xs.mean(axis=0)
        r = xs - mean
        within = np.einsum("ij,jk,ik->", r, W_inv, r)
        cov = B + W / n
        _, logdet_c = np.linalg.slogdet(cov)
        dm = mean - mu
        total += (-0.5 * (n - 1) * d * LOG_2PI - 0.5 * (n - 1) * logdet_w - 0.5 * within
                  - 0.5 * d * np.log(n)
                  - 0.5 * (d * LOG_2PI + logdet_c + dm @ np.linalg.solve(cov, dm)))
    return float(total)


def fit_two_cov(corpus: LabeledCorpus, mode: str = "diag", iters: int = 20,
                return_trace: bool = False):
    """EM estimate of (mu, B, W); optionally also the per-iteration log-likelihood."""
    if mode not in ("diag", "full"):
        raise ValueError(f"mode must be 'diag' or 'full', got {mode!r}")
    X = corpus.vectors
    groups, counts, sums = _speaker_stats(corpus)
    if len(groups) < 2:
        raise PldaError("need at least 2 speakers")
    if counts.max() < 2:
        raise PldaError("insufficient within-speaker data: no speaker has 2 sessions")
    N, d = X.shape
    S = len(groups)
    mu = X.mean(axis=0)
    total = np.cov(X, rowvar=False, bias=True).reshape(d, d)
    if mode == "diag":
        total = np.diag(np.diag(total))
    B = 0.5 * total
    W = 0.5 * total
    trace = [_marginal_loglik(X, groups, counts, mu, B, W)] if return_trace else []

    for _ in range(iters):
        try:
            B_inv = np.linalg.inv(B)
            W_inv = np.linalg.inv(W)
        except np.linalg.LinAlgError as err:
            raise PldaError(f"singular covariance during EM: {err}") from None
        b_mu = B_inv @ mu
        B_new = np.zeros((d, d))
        W_new = np.zeros((d, d))
        # speakers with equal session counts share one posterior covariance
        for n in np.unique(counts):
            sel = np.flatnonzero(counts == n)
            post_cov = np.linalg.inv(B_inv + n * W_inv)
            m = (b_mu + sums[sel] @ W_inv) @ post_cov
            dm = m - mu
            B_new += dm.T @ dm + len(sel) * post_cov
            rows = np.concatenate([groups[i] for i in sel])
            owner = np.repeat(np.arange(len(sel)), counts[sel].astype(int))
            r = X[rows] - m[owner]
            W_new += r.T @ r + len(sel) * n * post_cov
        B = B_new / S
        W = W_new / N
        if mode == "diag":
            B = np.diag(np.diag(B))
            W = np.diag(np.diag(W))
        B = 0.5 * (B + B.T)
        W = 0.5 * (W + W.T)
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(W))):
            raise PldaError("non-finite covariance during EM")
        if return_trace:
            trace.append(_marginal_loglik(X, groups, counts, mu, B, W))

    if mode == "diag":
        model = PldaTwoCov(mu, np.diag(B).copy(), np.diag(W).copy(), "diag")
    else:
        model = PldaTwoCov(mu, B, W, "full")
    return (model, trace) if return_trace else model


def _check_pd(*mats):
    for m in mats:
        if m.ndim == 1:
            if not np.all(m > 0):
                raise PldaError("covariance is not positive definite")
        else:
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise PldaError("covariance is not positive definite") from None


@dataclass(frozen=True)
class _Scorer:
    """Quadratic form ``1/2 a Q a + 1/2 b Q b + a P b + c`` on centered inputs."""

    Q: np.ndarray
    P: np.ndarray
    const: float
    diag: bool


def _scorer(model: PldaTwoCov) -> _Scorer:
    B, W = model.b_cov, model.w_cov
    _check_pd(W)
    if model.mode == "diag":
        if not np.all(B >= 0):
            raise PldaError("covariance is not positive semidefinite")
        T = B + W
        det = T * T - B * B
        A1 = T / det
        A2 = -B / det
        Q = 1.0 / T - A1
        const = -0.5 * np.log(det).sum() + np.log(T).sum()
        return _Scorer(Q, -A2, float(const), True)
    T = B + W
    d = model.dim
    joint = np.block([[T, B], [B, T]])
    J = np.linalg.inv(joint)
    A1, A2 = J[:d, :d], J[:d, d:]
    Q = np.linalg.inv(T) - A1
    _, logdet_joint = np.linalg.slogdet(joint)
    _, logdet_t = np.linalg.slogdet(T)
    return _Scorer(Q, -A2, float(-0.5 * logdet_joint + logdet_t), False)


def plda_llr(x1, x2, model: PldaTwoCov) -> float | np.ndarray:
    """Closed-form target vs impostor LLR; rows of ``x1``/``x2`` are paired."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape[-1] != model.dim or x2.shape[-1] != model.dim:
        raise ValueError(f"vectors must have dimension {model.dim}")
    sc = _scorer(model)
    a = x1 - model.mu
    b = x2 - model.mu
    if sc.diag:
        q = 0.5 * sc.Q * (a * a + b * b) + sc.P * (a * b)
        return q.sum(axis=-1) + sc.const
    qa = np.einsum("...i,ij,...j->...", a, sc.Q, a)
    qb = np.einsum("...i,ij,...j->...", b, sc.Q, b)
    cross = np.einsum("...i,ij,...j->...", a, sc.P, b)
    return 0.5 * (qa + qb) + 0.5 * (cross + np.einsum("...i,ij,...j->...", b, sc.P, a)) + sc.const


def score_trials(trials, vectors, model: PldaTwoCov) -> np.ndarray:
    for t in trials:
        for key in (t.enroll_id, t.test_id):
            if key not in vectors:
                raise KeyError(f"vector id {key!r} not found")
    if not trials:
        return np.zeros(0)
    x_test = np.stack([vectors[t.test_id] for t in trials])
    x_enroll = np.stack([vectors[t.enroll_id] for t in trials])
    return np.atleast_1d(plda_llr(x_test, x_enroll, model))


def full_vs_diag_report(corpus: LabeledCorpus, trials, vectors, iters: int = 20,
                        costs=None) -> list[dict]:
    """Fit both modes on ``corpus`` and report EER/minDCF on ``trials`` per mode."""
    from .evaluation import CostParams, compute_eer, compute_min_dcf

    costs = costs or CostParams()
    rows = []
    for mode in ("diag", "full"):
        if not trials:
            rows.append({"mode": mode, "eer": None, "mindcf": None, "n_trials": 0})
            continue
        model = fit_two_cov(corpus, mode, iters)
        scores = score_trials(trials, vectors, model)
        labels = [t.label for t in trials]
        rows.append({
            "mode": mode,
            "eer": compute_eer(scores, labels)[0],
            "mindcf": compute_min_dcf(scores, labels, costs)[0],
            "n_trials": len(trials),
        })
    return rows
