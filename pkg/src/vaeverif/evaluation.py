"""EER, minimum detection cost and DET points.

A trial is accepted when its score is at or above the threshold. Operating
points are taken at every distinct score plus +inf (accept nothing), which
yields the full step curve from (p_fa=1, p_miss=0) to (p_fa=0, p_miss=1).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class CostParams:
    c_miss: float = 1.0
    c_fa: float = 1.0
    p_target: float = 0.001
    normalized: bool = True

    def __post_init__(self):
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ValueError("costs must be positive")
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must lie in (0, 1)")


@dataclass(frozen=True)
class DetCurve:
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def __len__(self):
        return len(self.thresholds)

    def points(self):
        return list(zip(self.thresholds.tolist(), self.p_miss.tolist(), self.p_fa.tolist()))


def _as_bool_labels(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab in ("target", "tar"):
                out.append(True)
            elif lab in ("impostor", "non"):
                out.append(False)
            else:
                raise MetricError(f"trial label {lab!r} is not target or impostor")
        else:
            out.append(bool(lab))
    return np.array(out, dtype=bool)


def _operating_counts(scores, labels):
    """Thresholds with integer miss / false-alarm counts and the class sizes."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _as_bool_labels(labels)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    n_tar = int(y.sum())
    n_non = int((~y).sum())
    if n_tar == 0 or n_non == 0:
        raise MetricError("undefined EER: need at least one target and one impostor trial")
    if not np.all(np.isfinite(s)):
        raise MetricError("scores must be finite")
    uniq, inverse = np.unique(s, return_inverse=True)
    tar_counts = np.bincount(inverse, weights=y, minlength=len(uniq))
    non_counts = np.bincount(inverse, weights=~y, minlength=len(uniq))
    # misses at threshold uniq[i]: targets strictly below it
    miss = np.concatenate([[0], np.cumsum(tar_counts)]).astype(np.int64)
    fa = n_non - np.concatenate([[0], np.cumsum(non_counts)]).astype(np.int64)
    thresholds = np.concatenate([uniq, [np.inf]])
    return thresholds, miss, fa, n_tar, n_non


def _operating_points(scores, labels):
    t, miss, fa, n_tar, n_non = _operating_counts(scores, labels)
    return t, miss / n_tar, fa / n_non


def det_points(scores, labels) -> DetCurve:
    t, miss, fa = _operating_points(scores, labels)
    return DetCurve(t, miss, fa)


def compute_eer(scores, labels) -> tuple[float, float]:
    """Equal error rate (as a fraction) and the threshold where it occurs.

    The crossing of p_miss = p_fa is located on the straight segment joining
    adjacent operating points; tied scores of both classes form one diagonal
    segment, which is equivalent to counting ties half as misses and half as
    false alarms.
    """
    t, miss, fa, n_tar, n_non = _operating_counts(scores, labels)
    # rates scaled by n_tar * n_non are integers, so the crossing is exact
    m = miss * n_non
    f = fa * n_tar
    diff = m - f
    i = int(np.argmax(diff >= 0))  # diff[0] < 0, diff[-1] > 0
    if diff[i] == 0:
        return float(Fraction(int(m[i]), n_tar * n_non)), float(t[i])
    j = i - 1
    alpha = Fraction(int(-diff[j]), int(diff[i] - diff[j]))
    eer = (int(m[j]) + alpha * int(m[i] - m[j])) / (n_tar * n_non)
    return float(eer), float(t[j])


def compute_min_dcf(scores, labels, costs: CostParams | None = None) -> tuple[float, float]:
    costs = costs or CostParams()
    t, miss, fa = _operating_points(scores, labels)
    dcf = costs.c_miss * costs.p_target * miss + costs.c_fa * (1 - costs.p_target) * fa
    if costs.normalized:
        dcf = dcf / min(costs.c_miss * costs.p_target, costs.c_fa * (1 - costs.p_target))
    i = int(np.argmin(dcf))
    return float(dcf[i]), float(t[i])
