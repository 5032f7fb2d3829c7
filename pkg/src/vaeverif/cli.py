"""Command-line entry point: ``vaeverif <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import formats, plda, preprocess, scoring, synth, training
from .evaluation import CostParams, MetricError, compute_eer, compute_min_dcf, det_points
from .model import DomainError, ShapeError, VaeConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("vaeverif")


class UsageError(Exception):
    pass


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.replace(",", " ").split()], dtype=np.float64)


def _cov_from_text(text: str, dim: int) -> np.ndarray:
    v = _parse_floats(text)
    if v.size == 1:
        return np.full(dim, v[0])
    if v.size == dim:
        return v
    if v.size == dim * dim:
        return v.reshape(dim, dim)
    raise ValueError(f"covariance needs 1, {dim} or {dim * dim} values, got {v.size}")


def _cmd_synth(args) -> None:
    kv = formats.read_key_values(args.spec)
    kind = kv.pop("kind", "two_cov")
    try:
        if kind == "two_cov":
            dim = int(kv["dim"])
            rank = int(kv.pop("b_rank", 0))
            b_scale = float(kv.pop("b_scale", 1.0))
            if rank:
                b_cov = synth.low_rank_cov(dim, rank, b_scale, int(kv.get("seed", 0)))
            else:
                b_cov = _cov_from_text(kv.pop("b_cov", "1"), dim)
            spec = synth.CorpusSpec(
                n_speakers=int(kv.pop("n_speakers")),
                sessions_per_speaker=int(kv.pop("sessions_per_speaker")),
                dim=int(kv.pop("dim")),
                b_cov=b_cov,
                w_cov=_cov_from_text(kv.pop("w_cov", "1"), dim),
                seed=int(kv.pop("seed", 0)),
                n_dev_speakers=int(kv.pop("n_dev_speakers", 0)),
                n_test_speakers=int(kv.pop("n_test_speakers", 0)),
                n_trials=int(kv.pop("n_trials", 2000)),
            )
            if kv:
                raise KeyError(f"unknown keys {sorted(kv)}")
            data = synth.gen_two_cov_corpus(spec)
            for part in ("train", "dev", "test"):
                corpus = getattr(data, part)
                if corpus is None:
                    continue
                formats.save_vectors(f"{args.out_prefix}.{part}.vec", data.ids[part],
                                     corpus.vectors, corpus.speaker_of)
            for part, trials in (("dev", data.dev_trials), ("test", data.test_trials)):
                if trials:
                    formats.save_trials(f"{args.out_prefix}.{part}.trl", trials)
        elif kind == "clusters":
            cspec = synth.ClusterSpec(
                n_clusters=int(kv.pop("n_clusters")),
                points_per_cluster=int(kv.pop("points_per_cluster")),
                cluster_spread=float(kv.pop("cluster_spread", 3.0)),
                within_cov=_cov_from_text(kv.pop("within_cov", "1"), 2),
                seed=int(kv.pop("seed", 0)),
            )
            if kv:
                raise KeyError(f"unknown keys {sorted(kv)}")
            data = synth.gen_cluster_2d(cspec)
            ids = [f"pt{i:06d}" for i in range(len(data.points))]
            spk = [f"c{lab:03d}" for lab in data.labels]
            formats.save_vectors(f"{args.out_prefix}.train.vec", ids, data.points, spk)
            formats.save_vectors(f"{args.out_prefix}.centers.vec",
                                 [f"c{i:03d}" for i in range(len(data.centers))],
                                 data.centers, [f"c{i:03d}" for i in range(len(data.centers))])
        else:
            raise KeyError(f"unknown kind {kind!r}")
    except KeyError as err:
        raise formats.FormatError(args.spec, None, f"missing or unknown key: {err}") from None
    except ValueError as err:
        raise formats.FormatError(args.spec, None, str(err)) from None


def _cmd_preprocess(args) -> None:
    _, _, train = formats.load_vectors(args.fit)
    pipe = preprocess.fit_pipeline(train, args.mode, args.pca, length_norm=not args.no_length_norm)
    if args.save_pipeline:
        formats.save_pipeline(pipe, args.save_pipeline)
    ids, spk, X = formats.load_vectors(args.apply)
    formats.save_vectors(args.out, ids, preprocess.apply(pipe, X), spk)


def _dev_set(args):
    if args.dev is None and args.dev_trials is None:
        return None
    if args.dev is None or args.dev_trials is None:
        raise UsageError("--dev and --dev-trials must be given together")
    ids, _, X = formats.load_vectors(args.dev)
    return dict(zip(ids, X)), formats.load_trials(args.dev_trials)


def _cmd_train_vae(args) -> None:
    config = formats.load_config(args.config)
    _, _, X = formats.load_vectors(args.train)
    if X.shape[1] != config.d_x:
        raise formats.FormatError(args.train, None,
                                  f"vectors have dimension {X.shape[1]}, config d_x={config.d_x}")
    model, report = training.fit(X, config, dev=_dev_set(args))
    formats.save_model(model, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    log.info("stopped after %d epochs (%s)", report.iterations, report.stop_reason)


def _cmd_train_plda(args) -> None:
    ids, spk, X = formats.load_vectors(args.train)
    if any(s is None for s in spk):
        raise formats.FormatError(args.train, None, "PLDA training needs speaker labels")
    model = plda.fit_two_cov(plda.LabeledCorpus(X, spk), args.mode, args.iters)
    formats.save_plda(model, args.out)


def _cmd_score(args) -> None:
    ids, _, X = formats.load_vectors(args.vectors)
    vectors = dict(zip(ids, X))
    trials = formats.load_trials(args.trials)
    if args.type == "vae":
        model = formats.load_model(args.model)
        k = args.k if args.k is not None else model.config.k_score
        scores = scoring.score_trials(trials, vectors, model, k, args.seed,
                                      symmetric=args.symmetric).scores
    else:
        scores = plda.score_trials(trials, vectors, formats.load_plda(args.model))
    formats.save_scores(args.out, trials, scores)


def _labelled_scores(args):
    trials = formats.load_trials(args.trials)
    label_of = {(t.enroll_id, t.test_id): t.label for t in trials}
    scores, labels = [], []
    for enroll, test, s in formats.load_scores(args.scores):
        label = label_of.get((enroll, test))
        if label is None:
            raise formats.FormatError(args.scores, None, f"trial {enroll} {test} not in {args.trials}")
        if label == "unknown":
            continue
        scores.append(s)
        labels.append(label)
    return scores, labels


def _cmd_eval(args) -> None:
    scores, labels = _labelled_scores(args)
    costs = CostParams(c_miss=args.c_miss, c_fa=args.c_fa, p_target=args.p_target)
    eer, eer_thr = compute_eer(scores, labels)
    dcf, dcf_thr = compute_min_dcf(scores, labels, costs)
    formats.write_metrics(args.out, [("eer", eer, eer_thr), ("mindcf", dcf, dcf_thr)])


def _cmd_det(args) -> None:
    scores, labels = _labelled_scores(args)
    formats.write_det(args.out, det_points(scores, labels))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vaeverif", description="VAE and PLDA verification backends")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic corpus from a key=value spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("preprocess", help="fit center/whiten/PCA/length-norm and apply it")
    s.add_argument("--fit", required=True, help="training vectors the statistics come from")
    s.add_argument("--mode", choices=("full", "diag"), required=True)
    s.add_argument("--pca", type=int, default=None)
    s.add_argument("--no-length-norm", action="store_true")
    s.add_argument("--apply", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--save-pipeline", default=None)
    s.set_defaults(func=_cmd_preprocess)

    s = sub.add_parser("train-vae", help="train a VAE from a key=value config")
    s.add_argument("--config", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--dev", default=None)
    s.add_argument("--dev-trials", default=None)
    s.add_argument("--out", required=True)
    s.add_argument("--report", default=None, help="CSV training history")
    s.set_defaults(func=_cmd_train_vae)

    s = sub.add_parser("train-plda", help="train a two-covariance PLDA model")
    s.add_argument("--train", required=True)
    s.add_argument("--mode", choices=("diag", "full"), required=True)
    s.add_argument("--iters", type=int, default=20)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_train_plda)

    s = sub.add_parser("score", help="score a trial list")
    s.add_argument("--model", required=True)
    s.add_argument("--type", choices=("vae", "plda"), required=True)
    s.add_argument("--vectors", required=True)
    s.add_argument("--trials", required=True)
    s.add_argument("--k", type=int, default=None, help="importance samples (default: model k_score)")
    s.add_argument("--symmetric", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_score)

    defaults = CostParams()
    for name, func, helptext in (("eval", _cmd_eval, "EER and minDCF report"),
                                 ("det", _cmd_det, "DET curve points")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--scores", required=True)
        s.add_argument("--trials", required=True)
        s.add_argument("--out", required=True)
        if name == "eval":
            s.add_argument("--p-target", type=float, default=defaults.p_target)
            s.add_argument("--c-miss", type=float, default=defaults.c_miss)
            s.add_argument("--c-fa", type=float, default=defaults.c_fa)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as err:
        print(f"vaeverif {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (training.NumericError, FloatingPointError, np.linalg.LinAlgError,
            plda.PldaError, DomainError) as err:
        print(f"vaeverif {args.command}: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (formats.FormatError, OSError, KeyError, ShapeError, MetricError,
            preprocess.PreprocessError, ValueError) as err:
        print(f"vaeverif {args.command}: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
