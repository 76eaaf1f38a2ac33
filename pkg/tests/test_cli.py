"""CLI subcommands end to end (in-process main calls)."""

import os

import numpy as np
import pytest

from echoformer.cli import main


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("data") / "ds")
    code = main(["generate", "--out", path, "--count", "8",
                 "--frame-size", "28", "--min-frames", "48", "--max-frames", "64",
                 "--min-cycle", "16", "--max-cycle", "22",
                 "--noise", "0.05", "--seed", "21"])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def checkpoint_path(dataset_dir, tmp_path_factory):
    path = str(tmp_path_factory.mktemp("ckpt") / "toy.ckpt")
    code = main(["train", "--data", dataset_dir, "--out", path,
                 "--preset", "toy", "--epochs", "2", "--batch", "4",
                 "--lr", "1e-3", "--seed", "3"])
    assert code == 0
    return path


class TestGenerate:
    def test_dataset_on_disk(self, dataset_dir):
        assert os.path.exists(os.path.join(dataset_dir, "manifest.txt"))
        assert os.path.exists(os.path.join(dataset_dir, "frames.bin"))


class TestTrainEval:
    def test_eval_writes_csv(self, dataset_dir, checkpoint_path, tmp_path):
        out = str(tmp_path / "metrics.csv")
        code = main(["eval", "--data", dataset_dir,
                     "--checkpoint", checkpoint_path, "--out", out])
        assert code == 0
        lines = open(out).read().strip().splitlines()
        assert lines[0].startswith("id,")
        assert len(lines) == 1 + 8 + 1          # header + rows + summary

    def test_predict_trace_row_per_frame(self, dataset_dir, checkpoint_path,
                                         tmp_path, capsys):
        out = str(tmp_path / "trace.csv")
        code = main(["predict", "--data", dataset_dir,
                     "--checkpoint", checkpoint_path, "--out", out])
        assert code == 0
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "frame_index,sd_value"
        from echoformer.phantom import read_dataset
        from echoformer.sampling import subsample

        video = read_dataset(dataset_dir)[0]
        processed = subsample(video, limit=32)
        assert len(lines) - 1 == processed.num_frames

    def test_unknown_video_id_fails(self, dataset_dir, checkpoint_path):
        code = main(["predict", "--data", dataset_dir,
                     "--checkpoint", checkpoint_path, "--video", "nope"])
        assert code == 1


class TestParamCount:
    def test_full_preset_reports_match(self, capsys):
        code = main(["paramcount", "--preset", "full"])
        out = capsys.readouterr().out
        assert code == 0
        assert "closed-form match  True" in out
        assert "335,953,920" in out

    def test_unknown_preset_fails(self, capsys):
        code = main(["paramcount", "--preset", "giant"])
        assert code == 1


class TestGradcheckCommand:
    def test_single_seed_passes(self, capsys):
        code = main(["gradcheck", "--seeds", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "PASS linear" in out
        assert "FAIL" not in out


class TestUsageErrors:
    def test_unknown_flag_exits_two(self, dataset_dir):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "--out", "x", "--bogus", "1"])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 2

    def test_missing_data_file_is_runtime_error(self, checkpoint_path):
        code = main(["eval", "--data", "/nonexistent/ds",
                     "--checkpoint", checkpoint_path])
        assert code == 1


class TestConfigFile:
    def test_config_overrides_flags(self, dataset_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("count=3\nseed=9\n")
        out = str(tmp_path / "ds2")
        code = main(["generate", "--out", out, "--count", "100", "--seed", "1",
                     "--frame-size", "28", "--min-frames", "48",
                     "--max-frames", "64", "--min-cycle", "16",
                     "--max-cycle", "22", "--config", str(cfg)])
        assert code == 0
        from echoformer.phantom import read_dataset

        assert len(read_dataset(out)) == 3      # config file won

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("warp=9\n")
        code = main(["generate", "--out", str(tmp_path / "d"),
                     "--config", str(cfg)])
        assert code == 1
