import csv

import numpy as np
import pytest

from wavesep.cli import main
from wavesep.config import ConfigFileError, documented_defaults, parse_config
from wavesep.synth import write_synthetic_dataset
from wavesep.wavio import load_wav, write_wav

TOY_CONFIG = """
# toy dense model
arch = dilated_dense
num_blocks = 2
base_filters = 4
K = 2
C = 1
segment_length = 512   # samples
lr = 0.001
batch_size = 2
epochs = 2
steps_per_epoch = 2
val_segments = 2
"""


@pytest.fixture
def toy(tmp_path):
    data = write_synthetic_dataset(tmp_path / "data", ("source_1", "source_2"), C=1, length=1500,
                                   counts={"train": 2, "validation": 1, "test": 2}, seed=2)
    cfg = tmp_path / "toy.cfg"
    cfg.write_text(TOY_CONFIG)
    return tmp_path, data, cfg


def test_parse_config_and_errors():
    rc = parse_config("arch = dilated\nlr = 0.5\naugment = no\ndata = /x  # root\n")
    assert rc.model == {"arch": "dilated"} and rc.train == {"lr": 0.5, "augment": False}
    assert rc.paths == {"data": "/x"}
    with pytest.raises(ConfigFileError, match=r"cfg:3: unknown key 'colour'"):
        parse_config("arch = dilated\n\ncolour = blue\n", "cfg")
    with pytest.raises(ConfigFileError, match=r"cfg:1: expected 'key = value'"):
        parse_config("just words\n", "cfg")
    with pytest.raises(ConfigFileError, match=r"cfg:1: "):
        parse_config("num_blocks = many\n", "cfg")
    text = documented_defaults()
    for key in ("arch = dilated_dense", "num_blocks = 6", "lr = 0.0001", "batch_size = 16",
                "dilation_mode = adaptive", "steps_per_epoch = 2000"):
        assert key in text


def test_train_writes_checkpoint_and_history(toy):
    tmp, data, cfg = toy
    ck = tmp / "model.ck"
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ck)]) == 0
    assert ck.is_file()
    rows = list(csv.DictReader(open(f"{ck}.history.csv")))
    assert [r["step"] for r in rows] == ["1", "2", "3", "4"]
    assert rows[1]["val_loss"] and not rows[0]["val_loss"]


def test_resume_reproduces_history(toy):
    tmp, data, cfg = toy
    full, part = tmp / "full.ck", tmp / "part.ck"
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(full)]) == 0
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(part),
                 "--set", "epochs=1"]) == 0
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(part),
                 "--resume", str(part)]) == 0
    assert open(f"{full}.history.csv").read() == open(f"{part}.history.csv").read()
    assert full.read_bytes() == part.read_bytes()


def test_seed_flag_overrides_file(toy):
    tmp, data, cfg = toy
    a, b, c = tmp / "a.ck", tmp / "b.ck", tmp / "c.ck"
    cfg.write_text(TOY_CONFIG + "seed = 5\nepochs = 1\n")
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(a)])
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(b), "--seed", "9"])
    cfg.write_text(TOY_CONFIG + "seed = 9\nepochs = 1\n")
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(c)])
    assert b.read_bytes() == c.read_bytes() != a.read_bytes()


def test_separate_reconstructs_mixture(toy):
    tmp, data, cfg = toy
    ck = tmp / "m.ck"
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ck), "--set", "epochs=0"])
    mix = np.random.default_rng(0).uniform(-0.8, 0.8, (1, 1300)).astype(np.float32)
    write_wav(tmp / "mix.wav", mix, 22050)
    assert main(["separate", "--ckpt", str(ck), "--input", str(tmp / "mix.wav"),
                 "--outdir", str(tmp / "sep")]) == 0
    outs = sorted((tmp / "sep").iterdir())
    assert [p.name for p in outs] == ["source_1.wav", "source_2.wav"]
    parts = [load_wav(p)[0] for p in outs]
    assert all(p.shape == (1, 1300) for p in parts)
    assert np.max(np.abs(sum(parts) - mix)) < 1e-4


def test_separate_channel_mismatch(toy):
    tmp, data, cfg = toy
    ck = tmp / "m.ck"
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ck), "--set", "epochs=0"])
    write_wav(tmp / "st.wav", np.zeros((2, 100)), 22050)
    assert main(["separate", "--ckpt", str(ck), "--input", str(tmp / "st.wav"),
                 "--outdir", str(tmp / "o")]) == 3


def test_evaluate_is_deterministic_and_rejects_empty(toy):
    tmp, data, cfg = toy
    ck = tmp / "m.ck"
    main(["train", "--data", str(data), "--config", str(cfg), "--out", str(ck), "--set", "epochs=1"])
    assert main(["evaluate", "--ckpt", str(ck), "--data", str(data), "--report", str(tmp / "r1.csv")]) == 0
    assert main(["evaluate", "--ckpt", str(ck), "--data", str(data), "--report", str(tmp / "r2.csv")]) == 0
    assert (tmp / "r1.csv").read_bytes() == (tmp / "r2.csv").read_bytes()
    assert (tmp / "r1.txt").is_file()
    lines = (tmp / "r1.csv").read_text().splitlines()
    assert lines[1] == "source,mean_sdr_db,median_sdr_db,windows,silent_windows"
    assert [l.split(",")[0] for l in lines[2:]] == ["source_1", "source_2"]
    (tmp / "empty" / "test").mkdir(parents=True)
    assert main(["evaluate", "--ckpt", str(ck), "--data", str(tmp / "empty"),
                 "--report", str(tmp / "r3.csv")]) == 3


def test_inspect_defaults(capsys, tmp_path):
    assert main(["inspect"]) == 0
    out = capsys.readouterr().out
    assert "max dilation: 4096" in out
    assert "receptive field (downstream path): 133771" in out
    cfg = tmp_path / "f1.cfg"
    cfg.write_text("dilation_mode = fixed(1)\n")
    assert main(["inspect", "--config", str(cfg)]) == 0
    assert "receptive field (downstream path): 253" in capsys.readouterr().out


def test_exit_codes(toy, tmp_path):
    _, data, cfg = toy
    assert main([]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("warp_factor = 9\n")
    assert main(["inspect", "--config", str(bad)]) == 1
    (data / "train" / "track_00" / "source_2.wav").unlink()
    assert main(["train", "--data", str(data), "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    nan_cfg = tmp_path / "nan.cfg"
    nan_cfg.write_text(TOY_CONFIG + "lr = 1e308\nepochs = 3\nsteps_per_epoch = 20\n")
    (data / "train" / "track_00").rename(data / "skipped")
    assert main(["train", "--data", str(data), "--config", str(nan_cfg), "--out", str(tmp_path / "n")]) == 2


@pytest.mark.slow
def test_ablate_toy_runs_full_grid_within_budget(tmp_path):
    import time
    start = time.perf_counter()
    assert main(["ablate", "--toy", "--out", str(tmp_path / "abl")]) == 0
    elapsed = time.perf_counter() - start
    rows = list(csv.DictReader(open(tmp_path / "abl" / "ablation.csv")))
    runs = {(r["group"], r["run"]) for r in rows}
    assert len(runs) == 7 and len(rows) == 14
    assert {r["run"] for r in rows if r["group"] == "dilation"} == {"fixed(1)", "fixed(512)", "adaptive"}
    assert all(len(r["config_hash"]) == 12 for r in rows)
    assert elapsed < 15 * 60
