"""Text file formats: models, pipelines, vectors, trials, scores, configs.

Matrices are written as labelled blocks::

    name rows cols
    v11 v12 ...
    ...

with every float printed to 17 significant digits, which round-trips IEEE
doubles exactly.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .evaluation import DetCurve
from .model import LAYER_NAMES, AffineLayer, GenerativeNet, InferenceNet, VaeConfig, VaeModel
from .plda import PldaTwoCov
from .preprocess import Pipeline
from .scoring import ScoreSet, Trial

MODEL_HEADER = "vaeverif-model v1"
PLDA_HEADER = "vaeverif-plda v1"
PIPELINE_HEADER = "vaeverif-pipeline v1"
VECTORS_HEADER = "vaeverif-vectors v1"


class FormatError(ValueError):
    """Malformed input; the message names the file and line."""

    def __init__(self, path, lineno: int | None, message: str):
        where = f"{path}:{lineno}" if lineno is not None else str(path)
        super().__init__(f"{where}: {message}")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


class _Lines:
    """Line reader that remembers positions for error messages."""

    def __init__(self, path):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def error(self, message: str, lineno: int | None = None):
        return FormatError(self.path, self.pos if lineno is None else lineno, message)

    def next(self) -> list[str]:
        while self.pos < len(self.lines):
            self.pos += 1
            text = self.lines[self.pos - 1].strip()
            if text:
                return text.split()
        raise FormatError(self.path, self.pos, "unexpected end of file")

    def expect(self, header: str):
        if " ".join(self.next()) != header:
            raise self.error(f"expected header {header!r}")

    def floats(self, tokens) -> np.ndarray:
        try:
            return np.array([float(t) for t in tokens], dtype=np.float64)
        except ValueError:
            raise self.error("malformed number") from None

    def block(self, name: str) -> np.ndarray:
        head = self.next()
        if len(head) != 3 or head[0] != name:
            raise self.error(f"expected block {name!r}")
        try:
            rows, cols = int(head[1]), int(head[2])
        except ValueError:
            raise self.error("block shape must be two integers") from None
        out = np.empty((rows, cols))
        for i in range(rows):
            row = self.floats(self.next())
            if row.shape != (cols,):
                raise self.error(f"block {name!r} row has {row.size} values, expected {cols}")
            out[i] = row
        return out


def _write_block(out: list[str], name: str, mat) -> None:
    mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
    out.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
    for row in mat:
        out.append(" ".join(_fmt(v) for v in row))


def _write(path, lines: list[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- VAE model ---------------------------------------------------------------

def save_model(model: VaeModel, path) -> None:
    c = model.config
    out = [MODEL_HEADER, f"dims {c.d_x} {c.d_d} {c.d_h}",
           "config " + " ".join(f"{k}={v!r}" for k, v in c.as_mapping().items()
                                if k not in ("d_x", "d_d", "d_h"))]
    for name, layer in model.named_layers().items():
        _write_block(out, f"{name}.Wtilde", layer.wtilde)
    _write(path, out)


def load_model(path) -> VaeModel:
    r = _Lines(path)
    r.expect(MODEL_HEADER)
    dims = r.next()
    if len(dims) != 4 or dims[0] != "dims":
        raise r.error("expected 'dims d_x d_d d_h'")
    values = dict(zip(("d_x", "d_d", "d_h"), dims[1:]))
    mark = r.pos
    line = r.next()
    if line[0] == "config":
        for item in line[1:]:
            key, _, val = item.partition("=")
            values[key] = val
    else:
        r.pos = mark
    try:
        config = VaeConfig.from_mapping(values)
    except (KeyError, ValueError) as err:
        raise r.error(f"bad config: {err}") from None
    layers = {name: AffineLayer.from_wtilde(r.block(f"{name}.Wtilde")) for name in LAYER_NAMES}
    try:
        return VaeModel(
            config,
            GenerativeNet(layers["gen.v"], layers["gen.mu"], layers["gen.tau"]),
            InferenceNet(layers["inf.v"], layers["inf.mu"], layers["inf.tau"]),
        )
    except ValueError as err:
        raise r.error(str(err)) from None


# -- PLDA model --------------------------------------------------------------

def save_plda(model: PldaTwoCov, path) -> None:
    out = [PLDA_HEADER, f"mode {model.mode}"]
    _write_block(out, "mu", model.mu)
    _write_block(out, "b_cov", model.b_cov)
    _write_block(out, "w_cov", model.w_cov)
    _write(path, out)


def load_plda(path) -> PldaTwoCov:
    r = _Lines(path)
    r.expect(PLDA_HEADER)
    mode = r.next()
    if len(mode) != 2 or mode[0] != "mode" or mode[1] not in ("diag", "full"):
        raise r.error("expected 'mode diag|full'")
    mu = r.block("mu")[0]
    b = r.block("b_cov")
    w = r.block("w_cov")
    if mode[1] == "diag":
        b, w = b[0], w[0]
    return PldaTwoCov(mu, b, w, mode[1])


# -- preprocessing pipeline --------------------------------------------------

def save_pipeline(p: Pipeline, path) -> None:
    out = [PIPELINE_HEADER, f"mode {p.mode}", f"length_norm {int(p.length_norm)}",
           f"pca {0 if p.pca is None else p.pca.shape[1]}"]
    _write_block(out, "mean", p.mean)
    _write_block(out, "whiten", p.whiten)
    if p.pca is not None:
        _write_block(out, "pca", p.pca)
    _write(path, out)


def load_pipeline(path) -> Pipeline:
    r = _Lines(path)
    r.expect(PIPELINE_HEADER)
    fields = {}
    for key in ("mode", "length_norm", "pca"):
        line = r.next()
        if len(line) != 2 or line[0] != key:
            raise r.error(f"expected '{key} <value>'")
        fields[key] = line[1]
    mean = r.block("mean")[0]
    whiten = r.block("whiten")
    if fields["mode"] == "diag":
        whiten = whiten[0]
    pca = r.block("pca") if int(fields["pca"]) > 0 else None
    return Pipeline(mean, whiten, pca, fields["length_norm"] == "1")


# -- vectors -----------------------------------------------------------------

def save_vectors(path, ids, vectors, speakers=None) -> None:
    X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if len(ids) == 0:
        X = X.reshape(0, X.shape[-1] if X.size else 0)
    speakers = speakers if speakers is not None else ["-"] * len(ids)
    out = [VECTORS_HEADER, f"dim {X.shape[1]} count {len(ids)}"]
    for vid, spk, row in zip(ids, speakers, X):
        out.append(" ".join([vid, spk or "-", *(_fmt(v) for v in row)]))
    _write(path, out)


def load_vectors(path):
    """Return ``(ids, speakers, matrix)``; unlabeled speakers are ``None``."""
    r = _Lines(path)
    r.expect(VECTORS_HEADER)
    head = r.next()
    try:
        if len(head) != 4 or head[0] != "dim" or head[2] != "count":
            raise ValueError
        dim, count = int(head[1]), int(head[3])
    except ValueError:
        raise r.error("expected 'dim D count N'") from None
    ids, speakers = [], []
    X = np.empty((count, dim))
    for i in range(count):
        tok = r.next()
        if len(tok) != dim + 2:
            raise r.error(f"expected id, speaker and {dim} values, got {len(tok)} fields")
        ids.append(tok[0])
        speakers.append(None if tok[1] == "-" else tok[1])
        X[i] = r.floats(tok[2:])
    if len(set(ids)) != len(ids):
        raise r.error("duplicate vector ids", lineno=None)
    return ids, speakers, X


# -- trials and scores -------------------------------------------------------

def save_trials(path, trials) -> None:
    Path(path).write_text("".join(f"{t.enroll_id} {t.test_id} {t.code}\n" for t in trials),
                          encoding="utf-8")


def load_trials(path) -> list[Trial]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 3 or tok[2] not in ("tar", "non", "unk"):
                raise FormatError(path, lineno, "expected 'enroll_id test_id tar|non|unk'")
            out.append(Trial(tok[0], tok[1], tok[2]))
    return out


def save_scores(path, trials, scores) -> None:
    Path(path).write_text(
        "".join(f"{t.enroll_id} {t.test_id} {s:.9g}\n" for t, s in zip(trials, scores)),
        encoding="utf-8")


def save_score_set(path, scores: ScoreSet) -> None:
    save_scores(path, [t for t, _, _ in scores.entries], scores.scores)


def load_scores(path) -> list[tuple[str, str, float]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            try:
                if len(tok) != 3:
                    raise ValueError
                out.append((tok[0], tok[1], float(tok[2])))
            except ValueError:
                raise FormatError(path, lineno, "expected 'enroll_id test_id score'") from None
    return out


# -- key=value configs -------------------------------------------------------

def read_key_values(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep or not key.strip():
                raise FormatError(path, lineno, "expected 'key=value'")
            out[key.strip()] = value.strip()
    return out


def load_config(path) -> VaeConfig:
    values = read_key_values(path)
    try:
        return VaeConfig.from_mapping(values)
    except KeyError as err:
        raise FormatError(path, None, str(err)) from None
    except (TypeError, ValueError) as err:
        raise FormatError(path, None, f"bad config: {err}") from None


# -- reports -----------------------------------------------------------------

def write_metrics(path, rows) -> None:
    """``rows`` are ``(metric, value, threshold)``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value", "threshold"])
        for name, value, thr in rows:
            w.writerow([name, repr(float(value)), repr(float(thr))])


def write_det(path, curve: DetCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "p_miss", "p_fa"])
        for t, pm, pf in curve.points():
            w.writerow([repr(t), repr(pm), repr(pf)])
