"""End-to-end command-line pipeline and exit-code contract."""

import numpy as np
import pytest

import tongueage.data as D
from tongueage.cli import main
from tongueage.model import load_checkpoint
from tongueage.trainer import read_metrics_csv


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    rc = main(["synth", "--out", str(out), "--recordings", "20", "--seed", "7"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("run")
    rc = main([
        "train", "--data", str(synth_dir), "--out", str(out),
        "--epochs", "2", "--batch-size", "8", "--seed", "7",
    ])
    assert rc == 0
    return out


class TestSynth:
    def test_creates_manifest_and_raw_files(self, synth_dir):
        assert (synth_dir / "manifest.csv").is_file()
        raws = list((synth_dir / "raw").glob("*.raw"))
        assert len(raws) == 20
        assert all(p.stat().st_size == D.FRAME_BYTES for p in raws)

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--out", str(a), "--recordings", "3", "--seed", "5"]) == 0
        assert main(["synth", "--out", str(b), "--recordings", "3", "--seed", "5"]) == 0
        for pa in sorted((a / "raw").glob("*.raw")):
            pb = b / "raw" / pa.name
            assert pa.read_bytes() == pb.read_bytes()


class TestTrain:
    def test_metrics_rows_match_epochs(self, run_dir):
        hist = read_metrics_csv(run_dir / "metrics.csv")
        assert [m.epoch for m in hist] == [1, 2]

    def test_checkpoints_written(self, run_dir):
        for name in ("best.ckpt", "last.ckpt"):
            model, manifest = load_checkpoint(run_dir / name)
            assert model.param_count() == 2_898_437
            assert manifest["train_config_digest"]

    def test_config_file_with_flag_override(self, synth_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=9\nbatch_size=8\naugment=none\n", encoding="utf-8")
        out = tmp_path / "out"
        rc = main([
            "train", "--data", str(synth_dir), "--out", str(out),
            "--config", str(cfg), "--epochs", "1", "--seed", "1",
        ])
        assert rc == 0
        assert len(read_metrics_csv(out / "metrics.csv")) == 1  # flag beat the file

    def test_truncated_raw_file_exits_2(self, tmp_path):
        main(["synth", "--out", str(tmp_path), "--recordings", "2", "--seed", "1"])
        victim = sorted((tmp_path / "raw").glob("*.raw"))[0]
        victim.write_bytes(victim.read_bytes()[:-1])
        rc = main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "r"),
                   "--epochs", "1"])
        assert rc == 2

    def test_missing_data_dir_exits_2(self, tmp_path):
        rc = main(["train", "--data", str(tmp_path / "nope"), "--out",
                   str(tmp_path / "r"), "--epochs", "1"])
        assert rc == 2


class TestUsageErrors:
    def test_unknown_flag_exits_1(self):
        assert main(["synth", "--out", "x", "--recordings", "1", "--frobnicate"]) == 1

    def test_unknown_command_exits_1(self):
        assert main(["transmogrify"]) == 1

    def test_no_command_exits_1(self):
        assert main([]) == 1

    def test_help_exits_0(self):
        assert main(["--help"]) == 0


class TestEval:
    def test_eval_prints_metrics(self, synth_dir, run_dir, capsys):
        rc = main(["eval", "--model", str(run_dir / "best.ckpt"),
                   "--data", str(synth_dir), "--seed", "7"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "split,mse,mae"
        split, mse, mae = lines[1].split(",")
        assert split == "val" and float(mse) >= 0 and float(mae) >= 0


class TestPredict:
    def test_predict_matches_in_process_bitwise(self, synth_dir, run_dir, capsys):
        raw = sorted((synth_dir / "raw").glob("*.raw"))[0]
        rc = main(["predict", "--model", str(run_dir / "best.ckpt"),
                   "--raw", str(raw)])
        assert rc == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "frame_index,age_years"
        model, _ = load_checkpoint(run_dir / "best.ckpt")
        rec = D.load_recording(raw.read_bytes(), D.ParamFile(63, 412))
        expect = model.forward(rec.frames[0][None])[0, 0]
        idx, age = out[1].split(",")
        assert idx == "0"
        assert np.float32(float(age)) == expect

    def test_predict_single_frame_file(self, run_dir, tmp_path, capsys):
        frame_file = tmp_path / "one.raw"
        frame_file.write_bytes(bytes(D.FRAME_BYTES))
        rc = main(["predict", "--model", str(run_dir / "best.ckpt"),
                   "--raw", str(frame_file)])
        assert rc == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 2


class TestInspect:
    def test_table_matches_architecture(self, capsys):
        rc = main(["inspect", "--seed", "0"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "layer,kind,output_shape,params"
        assert "input,input,63x412x1,0" in lines[1]
        assert lines[-1] == "total,,,2898437"
        assert "conv1,conv2d,63x412x8,80" in lines
        assert "dense1,dense,512,2896384" in lines

    def test_inspect_checkpoint(self, run_dir, capsys):
        rc = main(["inspect", "--model", str(run_dir / "best.ckpt")])
        assert rc == 0
        assert capsys.readouterr().out.strip().endswith("total,,,2898437")


class TestAblate:
    def test_two_strategies_two_rows(self, synth_dir, tmp_path, capsys):
        out_csv = tmp_path / "ablation.csv"
        rc = main([
            "ablate", "--data", str(synth_dir), "--strategies", "none,rotation:5",
            "--epochs", "1", "--batch-size", "8", "--seed", "3",
            "--out", str(out_csv),
        ])
        assert rc == 0
        lines = out_csv.read_text("utf-8").strip().splitlines()
        assert lines[0] == "strategy,parameter,val_mse"
        assert len(lines) == 3
        assert lines[1].startswith("none,,")
        assert lines[2].startswith("rotation,5.0,")
        for line in lines[1:]:
            assert np.isfinite(float(line.rsplit(",", 1)[1]))

    def test_bad_strategy_exits_2(self, synth_dir, tmp_path):
        rc = main(["ablate", "--data", str(synth_dir), "--strategies", "zoom:2",
                   "--epochs", "1", "--out", str(tmp_path / "x.csv")])
        assert rc == 2


class TestVisualize:
    def test_activation_export(self, synth_dir, run_dir, tmp_path, capsys):
        raw = sorted((synth_dir / "raw").glob("*.raw"))[0]
        out = tmp_path / "vis"
        rc = main([
            "visualize", "--model", str(run_dir / "best.ckpt"), "--raw", str(raw),
            "--layers", "conv1,pool2", "--out", str(out),
        ])
        assert rc == 0
        assert (out / "conv1_0.pgm").is_file()
        assert (out / "pool2_3.ppm").is_file()

    def test_curves_export(self, run_dir, tmp_path, capsys):
        out = tmp_path / "curves"
        rc = main(["visualize", "--curves", str(run_dir / "metrics.csv"),
                   "--out", str(out)])
        assert rc == 0
        assert (out / "curves.ppm").is_file()

    def test_unknown_layer_exits_1(self, synth_dir, run_dir, tmp_path):
        raw = sorted((synth_dir / "raw").glob("*.raw"))[0]
        rc = main(["visualize", "--model", str(run_dir / "best.ckpt"),
                   "--raw", str(raw), "--layers", "convZ",
                   "--out", str(tmp_path / "v")])
        assert rc == 1

    def test_nothing_to_do_exits_2(self, tmp_path):
        assert main(["visualize", "--out", str(tmp_path)]) == 2
