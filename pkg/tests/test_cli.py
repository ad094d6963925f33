import pytest

from cfnet.cli import coerce, main, parse_bool, read_config_file
from cfnet.data import load_dataset

TINY = ["--synth-size", "32", "--synth-count", "8", "--epochs", "1", "--batch-size", "4",
        "--content-width", "8", "--save-images", "false"]


@pytest.mark.parametrize("text,value", [("yes", True), ("0", False), ("True", True), ("off", False)])
def test_parse_bool(text, value):
    assert parse_bool(text) is value


def test_coerce_types():
    assert coerce("epochs", "3") == 3
    assert coerce("lr0", "1e-3") == 1e-3
    assert coerce("data", "none") is None
    with pytest.raises(KeyError):
        coerce("nope", "1")


def test_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nepochs = 2\nenable_focuser = no  # inline\n")
    assert read_config_file(p) == {"epochs": 2, "enable_focuser": False}


def test_bad_config_exit_code(tmp_path, capsys):
    assert main(["train", "--epochs", "many", "--out-dir", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_synth_command(tmp_path):
    assert main(["synth", "--root", str(tmp_path), "--synth-count", "3", "--synth-size", "16"]) == 0
    assert len(load_dataset(tmp_path)) == 3


def test_train_then_eval(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", *TINY, "--out-dir", str(out)]) == 0
    assert "test iou=" in capsys.readouterr().out
    assert main(["eval", "--checkpoint", str(out / "best.ckpt"), "--split", "val"]) == 0
    assert (out / "eval_val" / "metrics_val.csv").exists()
