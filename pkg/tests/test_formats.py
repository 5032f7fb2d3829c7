import numpy as np
import pytest

from vaeverif import formats
from vaeverif.evaluation import det_points
from vaeverif.model import VaeConfig
from vaeverif.plda import PldaTwoCov
from vaeverif.preprocess import fit_pipeline
from vaeverif.scoring import Trial

from conftest import random_model


def _same_model(a, b):
    assert a.config == b.config
    for name, layer in a.named_layers().items():
        assert np.array_equal(layer.wtilde, b.named_layers()[name].wtilde)


class TestModelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        model = random_model(VaeConfig(3, 4, 2, beta=1e-3, k_score=7, seed=11), 0)
        path = tmp_path / "m.vae"
        formats.save_model(model, path)
        _same_model(model, formats.load_model(path))

    def test_rewrite_is_byte_identical(self, tmp_path):
        model = random_model(VaeConfig(2, 3, 2), 1)
        formats.save_model(model, tmp_path / "a")
        formats.save_model(formats.load_model(tmp_path / "a"), tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_header_and_blocks(self, tmp_path):
        formats.save_model(random_model(VaeConfig(2, 3, 2), 2), tmp_path / "m")
        text = (tmp_path / "m").read_text().splitlines()
        assert text[0] == "vaeverif-model v1"
        blocks = [ln.split()[0] for ln in text if ln.endswith(".Wtilde") or ".Wtilde " in ln]
        assert blocks == ["gen.v.Wtilde", "gen.mu.Wtilde", "gen.tau.Wtilde",
                          "inf.v.Wtilde", "inf.mu.Wtilde", "inf.tau.Wtilde"]

    def test_truncated_file_names_line(self, tmp_path):
        path = tmp_path / "m"
        formats.save_model(random_model(VaeConfig(2, 3, 2), 3), path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(formats.FormatError, match=str(path)):
            formats.load_model(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m"
        path.write_text("something else\n")
        with pytest.raises(formats.FormatError, match=r":1: "):
            formats.load_model(path)

    def test_non_numeric_entry(self, tmp_path):
        path = tmp_path / "m"
        formats.save_model(random_model(VaeConfig(2, 3, 2), 4), path)
        lines = path.read_text().splitlines()
        idx = next(i for i, ln in enumerate(lines) if ln.startswith("gen.mu.Wtilde")) + 1
        lines[idx] = "abc " + " ".join(lines[idx].split()[1:])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(formats.FormatError, match=f":{idx + 1}: "):
            formats.load_model(path)


class TestOtherModels:
    @pytest.mark.parametrize("mode", ["diag", "full"])
    def test_plda_round_trip(self, tmp_path, mode):
        rng = np.random.default_rng(0)
        if mode == "diag":
            m = PldaTwoCov(rng.normal(size=3), rng.uniform(0.1, 1, 3), rng.uniform(0.1, 1, 3),
                           mode)
        else:
            A = rng.normal(size=(3, 3))
            m = PldaTwoCov(rng.normal(size=3), A @ A.T, A @ A.T + np.eye(3), mode)
        formats.save_plda(m, tmp_path / "p")
        back = formats.load_plda(tmp_path / "p")
        assert back.mode == mode
        for f in ("mu", "b_cov", "w_cov"):
            assert np.array_equal(getattr(back, f), getattr(m, f))

    @pytest.mark.parametrize("mode,pca,ln", [("full", None, True), ("diag", 2, False)])
    def test_pipeline_round_trip(self, tmp_path, mode, pca, ln):
        X = np.random.default_rng(1).normal(size=(50, 3)) * [1, 2, 3]
        p = fit_pipeline(X, mode, pca, length_norm=ln)
        formats.save_pipeline(p, tmp_path / "pp")
        back = formats.load_pipeline(tmp_path / "pp")
        assert back.length_norm == ln and back.mode == mode
        assert np.array_equal(back.mean, p.mean) and np.array_equal(back.whiten, p.whiten)
        assert (back.pca is None) == (pca is None)
        if pca:
            assert np.array_equal(back.pca, p.pca)


class TestDataFiles:
    def test_vectors_round_trip(self, tmp_path):
        X = np.random.default_rng(2).normal(size=(4, 3))
        formats.save_vectors(tmp_path / "v", ["a", "b", "c", "d"], X, ["s1", "s1", None, "s2"])
        ids, spk, Y = formats.load_vectors(tmp_path / "v")
        assert ids == ["a", "b", "c", "d"] and spk == ["s1", "s1", None, "s2"]
        assert np.array_equal(X, Y)
        assert (tmp_path / "v").read_text().splitlines()[:2] == ["vaeverif-vectors v1",
                                                                  "dim 3 count 4"]

    def test_vectors_wrong_width(self, tmp_path):
        (tmp_path / "v").write_text("vaeverif-vectors v1\ndim 2 count 1\na - 1.0\n")
        with pytest.raises(formats.FormatError, match=r":3: "):
            formats.load_vectors(tmp_path / "v")

    def test_duplicate_ids(self, tmp_path):
        (tmp_path / "v").write_text("vaeverif-vectors v1\ndim 1 count 2\na - 1\na - 2\n")
        with pytest.raises(formats.FormatError, match="duplicate"):
            formats.load_vectors(tmp_path / "v")

    def test_trials_round_trip(self, tmp_path):
        trials = [Trial("a", "b", "target"), Trial("c", "d", "impostor"), Trial("e", "f")]
        formats.save_trials(tmp_path / "t", trials)
        assert (tmp_path / "t").read_text() == "a b tar\nc d non\ne f unk\n"
        assert formats.load_trials(tmp_path / "t") == trials

    def test_bad_trial_label(self, tmp_path):
        (tmp_path / "t").write_text("a b tar\nc d yes\n")
        with pytest.raises(formats.FormatError, match=r":2: "):
            formats.load_trials(tmp_path / "t")

    def test_scores(self, tmp_path):
        trials = [Trial("a", "b", "tar"), Trial("c", "d", "non")]
        formats.save_scores(tmp_path / "s", trials, [1.0 / 3, -2.5e-7])
        assert formats.load_scores(tmp_path / "s") == [("a", "b", float("%.9g" % (1 / 3))),
                                                      ("c", "d", -2.5e-7)]


class TestConfigAndReports:
    def test_config_file(self, tmp_path):
        (tmp_path / "c").write_text("# toy\nd_x = 2\nd_d=3\nd_h=2\nbeta=0.001\n")
        cfg = formats.load_config(tmp_path / "c")
        assert cfg == VaeConfig(2, 3, 2, beta=1e-3)

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c").write_text("d_x=2\nd_d=3\nd_h=2\nlearning=1\n")
        with pytest.raises(formats.FormatError, match="learning"):
            formats.load_config(tmp_path / "c")

    def test_malformed_line(self, tmp_path):
        (tmp_path / "c").write_text("d_x=2\nnonsense\n")
        with pytest.raises(formats.FormatError, match=r":2: "):
            formats.read_key_values(tmp_path / "c")

    def test_metrics_and_det(self, tmp_path):
        formats.write_metrics(tmp_path / "m.csv", [("eer", 0.25, 0.5)])
        assert (tmp_path / "m.csv").read_text() == "metric,value,threshold\neer,0.25,0.5\n"
        formats.write_det(tmp_path / "d.csv", det_points([2.0, 1.0], [1, 0]))
        assert (tmp_path / "d.csv").read_text().splitlines() == [
            "threshold,p_miss,p_fa", "1.0,0.0,1.0", "2.0,0.0,0.0", "inf,1.0,0.0"]
