"""End-to-end CLI runs: contracts, exit codes, determinism."""

import numpy as np
import pytest

from ccax import cca, hkse, io
from ccax.cli import main


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main([
        "synth", "--out-dir", str(out), "--n-train", "120", "--n-val", "40",
        "--n-test", "40", "--latent", "4", "--mx", "16", "--my", "12",
        "--captions", "3", "--seed", "5",
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def word_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("words")
    rng = np.random.default_rng(1)
    vocab = ["red", "green", "blue", "dog", "cat", "runs", "sits"]
    table = io.EmbeddingTable(tuple(vocab), rng.standard_normal((7, 5)))
    io.save_embedding_table(table, path / "vectors.txt")
    (path / "caps.txt").write_text(
        "red dog runs\nblue cat sits\ngreen dog sits\nred cat runs\n"
    )
    (path / "pairing.txt").write_text("0\n1\n2\n3\n")
    return path


class TestSynth:
    def test_expected_files(self, synth_dir):
        for name in ("images.fmat", "captions.fmat", "pairing.txt",
                     "splits.tsv", "train_x.fmat", "train_y.fmat",
                     "val_images.fmat", "val_captions.fmat",
                     "val_pairing.txt", "test_images.fmat",
                     "test_captions.fmat", "test_pairing.txt"):
            assert (synth_dir / name).exists(), name

    def test_shapes(self, synth_dir):
        assert io.load_matrix(synth_dir / "images.fmat").rows == 200
        assert io.load_matrix(synth_dir / "captions.fmat").rows == 600
        assert io.load_matrix(synth_dir / "train_x.fmat").rows == 360
        assert io.load_matrix(synth_dir / "val_images.fmat").rows == 40

    def test_deterministic_rerun(self, synth_dir, tmp_path):
        code = main([
            "synth", "--out-dir", str(tmp_path), "--n-train", "120",
            "--n-val", "40", "--n-test", "40", "--latent", "4",
            "--mx", "16", "--my", "12", "--captions", "3", "--seed", "5",
        ])
        assert code == 0
        for name in ("images.fmat", "captions.fmat", "train_y.fmat"):
            assert (tmp_path / name).read_bytes() == \
                (synth_dir / name).read_bytes()


class TestFit:
    def test_plain_fit_archive(self, synth_dir, tmp_path):
        out = tmp_path / "model.arc"
        code = main([
            "fit", "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--reg", "none", "--out", str(out),
        ])
        assert code == 0
        model = cca.model_from_archive(io.load_archive(out))
        assert np.all(np.diff(model.sigma) <= 0)
        assert model.reg.kind == "none"

    def test_tsvd_flags(self, synth_dir, tmp_path):
        out = tmp_path / "model.arc"
        code = main([
            "fit", "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--reg", "tsvd", "--kx", "3", "--ky", "3", "--out", str(out),
        ])
        assert code == 0
        model = cca.model_from_archive(io.load_archive(out))
        assert model.reg.k_x == 3 and model.reg.k_y == 3

    def test_conflicting_reg_flags_usage_error(self, synth_dir, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main([
                "fit", "--x", str(synth_dir / "train_x.fmat"),
                "--y", str(synth_dir / "train_y.fmat"),
                "--reg", "tikhonov", "--reg", "tsvd",
                "--out", str(tmp_path / "m.arc"),
            ])
        assert exc.value.code == 2
        assert "more than once" in capsys.readouterr().err

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        code = main([
            "fit", "--x", str(tmp_path / "absent.fmat"),
            "--y", str(tmp_path / "absent.fmat"),
            "--out", str(tmp_path / "m.arc"),
        ])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_guided_tsvd_records_ranks_and_penalties(self, synth_dir, tmp_path):
        out = tmp_path / "model.arc"
        code = main([
            "fit", "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--reg", "guided-tsvd", "--grid", "4x4",
            "--val-x", str(synth_dir / "val_images.fmat"),
            "--val-y", str(synth_dir / "val_captions.fmat"),
            "--val-pairing", str(synth_dir / "val_pairing.txt"),
            "--metric", "r1",
            "--path-out", str(tmp_path / "path.tsv"),
            "--out", str(out),
        ])
        assert code == 0
        for task in ("search", "annotation"):
            arc = io.load_archive(tmp_path / f"model_{task}.arc")
            assert arc.manifest["kind"] == "tikhonov"
            k_x = int(arc.manifest["guided_k_x"])
            k_y = int(arc.manifest["guided_k_y"])
            assert k_x >= 1 and k_y >= 1
            # the mapped penalty is the squared singular value at the rank
            x = io.load_matrix(synth_dir / "train_x.fmat")
            xc, _ = cca.center_columns(x)
            s_x = cca.thin_svd(xc).s
            assert float(arc.manifest["gamma_x"]) == s_x[k_x - 1] ** 2
        assert (tmp_path / "path.tsv").exists()

    def test_guided_combined_metric_single_archive(self, synth_dir, tmp_path):
        out = tmp_path / "combined.arc"
        code = main([
            "fit", "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--reg", "guided-tsvd", "--grid", "3x3",
            "--val-x", str(synth_dir / "val_images.fmat"),
            "--val-y", str(synth_dir / "val_captions.fmat"),
            "--val-pairing", str(synth_dir / "val_pairing.txt"),
            "--metric", "mean-r1", "--out", str(out),
        ])
        assert code == 0
        assert out.exists()


class TestPath:
    def test_tsv_written_and_deterministic_modulo_timing(self, synth_dir,
                                                         tmp_path):
        outs = []
        for run in range(2):
            out = tmp_path / f"path{run}.tsv"
            code = main([
                "path", "--x", str(synth_dir / "train_x.fmat"),
                "--y", str(synth_dir / "train_y.fmat"),
                "--val-x", str(synth_dir / "val_images.fmat"),
                "--val-y", str(synth_dir / "val_captions.fmat"),
                "--val-pairing", str(synth_dir / "val_pairing.txt"),
                "--reg", "tsvd", "--grid", "3x3", "--out", str(out),
            ])
            assert code == 0
            outs.append(out.read_text())

        def strip_timing(text):
            return [line.rsplit("\t", 1)[0] for line in text.splitlines()]

        assert strip_timing(outs[0]) == strip_timing(outs[1])
        header = outs[0].splitlines()[0]
        assert header == "param_x\tparam_y\tr1_search\tr1_annotation\tcell_seconds"


class TestTiming:
    def test_small_grid_report(self, synth_dir, tmp_path):
        out = tmp_path / "timing.tsv"
        code = main([
            "timing", "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--val-x", str(synth_dir / "val_images.fmat"),
            "--val-y", str(synth_dir / "val_captions.fmat"),
            "--val-pairing", str(synth_dir / "val_pairing.txt"),
            "--grid", "2x2", "--repeats", "1", "--out", str(out),
        ])
        assert code == 0
        text = out.read_text()
        assert text.startswith("quantity\tvalue\n")
        assert "speedup_ratio" in text


class TestEmbed:
    def test_lin_lin_is_token_means(self, word_data, tmp_path):
        out = tmp_path / "sent.fmat"
        code = main([
            "embed", "--corpus", str(word_data / "caps.txt"),
            "--vectors", str(word_data / "vectors.txt"),
            "--variant", "lin,lin", "--out", str(out),
        ])
        assert code == 0
        table = io.load_embedding_table(word_data / "vectors.txt")
        embedded = io.load_matrix(out)
        expected = np.mean(
            [table.vector("red"), table.vector("dog"), table.vector("runs")],
            axis=0,
        )
        np.testing.assert_array_equal(embedded.values[0], expected)

    def test_rbf_preset_and_map_reuse(self, word_data, tmp_path):
        out1 = tmp_path / "a.fmat"
        map_out = tmp_path / "map.arc"
        code = main([
            "embed", "--corpus", str(word_data / "caps.txt"),
            "--vectors", str(word_data / "vectors.txt"),
            "--variant", "rbf,rbf", "--m", "64", "--mprime", "48",
            "--eta", "0.01", "--gamma", "median", "--seed", "3",
            "--out", str(out1), "--map-out", str(map_out),
        ])
        assert code == 0
        assert io.load_matrix(out1).cols == 48
        maps = hkse.maps_from_archive(io.load_archive(map_out))
        assert maps[0].eta == 0.01
        # reuse the stored map: bitwise identical embedding
        out2 = tmp_path / "b.fmat"
        code = main([
            "embed", "--corpus", str(word_data / "caps.txt"),
            "--vectors", str(word_data / "vectors.txt"),
            "--map", str(map_out), "--out", str(out2),
        ])
        assert code == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_concat_width(self, word_data, tmp_path):
        out = tmp_path / "c.fmat"
        code = main([
            "embed", "--corpus", str(word_data / "caps.txt"),
            "--vectors", str(word_data / "vectors.txt"),
            "--variant", "lin,rbf", "--concat", "rbf,rbf",
            "--m", "32", "--mprime", "16", "--gamma", "1.0",
            "--out", str(out),
        ])
        assert code == 0
        assert io.load_matrix(out).cols == 32

    def test_embed_deterministic(self, word_data, tmp_path):
        outs = []
        for run in range(2):
            out = tmp_path / f"d{run}.fmat"
            code = main([
                "embed", "--corpus", str(word_data / "caps.txt"),
                "--vectors", str(word_data / "vectors.txt"),
                "--variant", "rbf,rbf", "--m", "32", "--mprime", "16",
                "--gamma", "median", "--seed", "11", "--out", str(out),
            ])
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


@pytest.fixture(scope="module")
def fitted_model(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.arc"
    assert main([
        "fit", "--x", str(synth_dir / "train_x.fmat"),
        "--y", str(synth_dir / "train_y.fmat"),
        "--reg", "none", "--out", str(out),
    ]) == 0
    return out


class TestEval:
    def test_report_columns_and_weightings_differ(self, synth_dir,
                                                  fitted_model, tmp_path):
        out_a = tmp_path / "asym.tsv"
        out_s = tmp_path / "sym.tsv"
        base = [
            "eval", "--model", str(fitted_model),
            "--images", str(synth_dir / "test_images.fmat"),
            "--captions", str(synth_dir / "test_captions.fmat"),
            "--pairing", str(synth_dir / "test_pairing.txt"),
        ]
        assert main(base + ["--weighting", "asymmetric",
                            "--out", str(out_a)]) == 0
        assert main(base + ["--weighting", "symmetric:0",
                            "--out", str(out_s)]) == 0
        header = out_a.read_text().splitlines()[0]
        assert header == "task\tr1\tr5\tr10\tmedr\tn_queries\tn_items"
        assert out_a.read_text() != out_s.read_text()

    def test_blocks_mean_rows(self, synth_dir, fitted_model, tmp_path):
        out = tmp_path / "blocks.tsv"
        assert main([
            "eval", "--model", str(fitted_model),
            "--images", str(synth_dir / "test_images.fmat"),
            "--captions", str(synth_dir / "test_captions.fmat"),
            "--pairing", str(synth_dir / "test_pairing.txt"),
            "--blocks", "2", "--out", str(out),
        ]) == 0
        lines = out.read_text().strip().splitlines()
        tasks = [line.split("\t")[0] for line in lines[1:]]
        assert tasks == ["search_block0", "annotation_block0",
                         "search_block1", "annotation_block1",
                         "search_mean", "annotation_mean"]

    def test_noiseless_pipeline_retrieves_nearly_everything(self, tmp_path):
        # the latent factors fill the caption view, so noiseless pairs are
        # fully determined and retrieval must be near-perfect
        data_dir = tmp_path / "clean"
        assert main([
            "synth", "--out-dir", str(data_dir), "--n-train", "300",
            "--n-val", "50", "--n-test", "100", "--latent", "16",
            "--mx", "24", "--my", "16", "--noise-x", "0.001",
            "--noise-y", "0.001", "--captions", "1", "--seed", "2",
        ]) == 0
        model = tmp_path / "model.arc"
        assert main([
            "fit", "--x", str(data_dir / "train_x.fmat"),
            "--y", str(data_dir / "train_y.fmat"),
            "--reg", "none", "--out", str(model),
        ]) == 0
        out = tmp_path / "report.tsv"
        assert main([
            "eval", "--model", str(model),
            "--images", str(data_dir / "test_images.fmat"),
            "--captions", str(data_dir / "test_captions.fmat"),
            "--pairing", str(data_dir / "test_pairing.txt"),
            "--out", str(out),
        ]) == 0
        lines = out.read_text().strip().splitlines()
        for line in lines[1:]:
            fields = line.split("\t")
            assert float(fields[1]) >= 95.0  # r@1 near 100 for both tasks

    def test_eval_deterministic(self, synth_dir, fitted_model, tmp_path):
        texts = []
        for run in range(2):
            out = tmp_path / f"r{run}.tsv"
            assert main([
                "eval", "--model", str(fitted_model),
                "--images", str(synth_dir / "test_images.fmat"),
                "--captions", str(synth_dir / "test_captions.fmat"),
                "--pairing", str(synth_dir / "test_pairing.txt"),
                "--out", str(out),
            ]) == 0
            texts.append(out.read_bytes())
        assert texts[0] == texts[1]


class TestSweep:
    def test_sweep_tsv(self, synth_dir, fitted_model, tmp_path):
        out = tmp_path / "sweep.tsv"
        assert main([
            "sweep", "--model", str(fitted_model),
            "--images", str(synth_dir / "val_images.fmat"),
            "--captions", str(synth_dir / "val_captions.fmat"),
            "--pairing", str(synth_dir / "val_pairing.txt"),
            "--alphas", "0,0.5,1", "--out", str(out),
        ]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "alpha\tr10_search\tr10_annotation"
        assert len(lines) == 4


class TestInspect:
    def test_prints_manifest(self, fitted_model, capsys):
        assert main(["inspect", "--model", str(fitted_model)]) == 0
        out = capsys.readouterr().out
        assert "kind=none" in out
        assert "[blob] U:" in out


class TestConfigFile:
    def test_config_supplies_defaults_flags_win(self, synth_dir, tmp_path):
        config = tmp_path / "fit.cfg"
        config.write_text("reg=tsvd\nkx=3\nky=2\n")
        out = tmp_path / "m.arc"
        assert main([
            "fit", "--config", str(config),
            "--x", str(synth_dir / "train_x.fmat"),
            "--y", str(synth_dir / "train_y.fmat"),
            "--ky", "4",  # flag beats the config value
            "--out", str(out),
        ]) == 0
        model = cca.model_from_archive(io.load_archive(out))
        assert model.reg.kind == "tsvd"
        assert model.reg.k_x == 3 and model.reg.k_y == 4
