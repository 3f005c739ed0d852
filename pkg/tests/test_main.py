import numpy as np
import pytest

import main
from core.errors import NumericError
from core.slide_io import write_rgb, read_rgb


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("GLEASON_CONFIG", raising=False)


def test_missing_subcommand_is_a_usage_error():
    assert main.main([]) == main.EXIT_USAGE


def test_bad_flag_value_is_a_usage_error():
    assert main.main(["tile", "--seed", "abc"]) == main.EXIT_USAGE


def test_cross_validate_takes_top_model_names():
    args = main.build_parser().parse_args(["cross-validate", "--cv-tops", "GMP", "FC"])
    assert args.command == "cross-validate"
    assert args.cv_tops == ["GMP", "FC"]


def test_missing_config_file(tmp_path):
    assert main.main(["tile", "--config", str(tmp_path / "nope.json")]) == main.EXIT_USAGE


def test_stage_without_inputs_is_a_data_error(tmp_path):
    code = main.main(["predict", "--slides-dir", str(tmp_path / "slides"), "--run-dir", str(tmp_path / "run")])
    assert code == main.EXIT_DATA


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def explode(self, stage):
        raise NumericError("Conv_1", "non-finite gradient for W")

    monkeypatch.setattr(main.Pipeline, "run_stage", explode)
    assert main.main(["train-grader", "--run-dir", str(tmp_path / "run")]) == main.EXIT_NUMERIC


def test_synth_writes_slides(tmp_path, capsys):
    code = main.main(["synth", "--slides-dir", str(tmp_path / "slides"), "--run-dir", str(tmp_path / "run"),
                      "--synth-slide-side", "64", "--synth-slides-per-score", "1"])
    assert code == main.EXIT_OK
    assert len(list((tmp_path / "slides").iterdir())) == 8
    assert "GLEASON GRADING PIPELINE" in capsys.readouterr().out


def test_stain_norm(tmp_path):
    rng = np.random.default_rng(0)
    write_rgb(tmp_path / "src.png", rng.integers(0, 128, size=(16, 16, 3), dtype=np.uint8))
    write_rgb(tmp_path / "ref.png", rng.integers(128, 256, size=(16, 16, 3), dtype=np.uint8))
    code = main.main(["stain-norm", "--source", str(tmp_path / "src.png"), "--reference", str(tmp_path / "ref.png"),
                      "--output", str(tmp_path / "out.png")])
    assert code == main.EXIT_OK
    assert read_rgb(tmp_path / "out.png").min() >= 128


def test_stain_norm_missing_source(tmp_path):
    code = main.main(["stain-norm", "--source", str(tmp_path / "a.png"), "--reference", str(tmp_path / "b.png"),
                      "--output", str(tmp_path / "c.png")])
    assert code == main.EXIT_DATA
