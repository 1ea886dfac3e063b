import csv
import json

import numpy as np
import pytest
import tomli

from lvseg.cli import DEFAULTS, config_hash, load_collection, main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 else None), out.err


def _table(path):
    with open(path, newline="") as fh:
        return {r["patient_id"]: r for r in csv.DictReader(fh)}


@pytest.fixture
def phantoms(tmp_path, capsys):
    code, res, _ = _run(capsys, "ingest", "--phantom", "4", "--seed", "2", "--out", str(tmp_path / "in"))
    assert code == 0
    return res


def test_ingest_phantoms(phantoms):
    stacks = load_collection(phantoms["studies"])
    assert [s.patient_id for s in stacks] == [f"phantom_{i:03d}" for i in range(4)]
    assert all(s.masks is not None for s in stacks)
    truth = _table(f"{phantoms['run']}/truth.csv")
    assert set(truth) == {s.patient_id for s in stacks}
    cfg = tomli.loads(open(f"{phantoms['run']}/config.toml").read())
    assert cfg["seed"] == 2
    assert phantoms["run"].endswith(config_hash(cfg))


def test_run_config_is_reusable(phantoms, tmp_path, capsys):
    code, res, _ = _run(capsys, "ingest", "--phantom", "4", "--config",
                        f"{phantoms['run']}/config.toml", "--out", phantoms["run"] + "_again")
    assert code == 0
    assert open(f"{res['run']}/truth.csv").read() == open(f"{phantoms['run']}/truth.csv").read()


def test_pipeline_oracle_masks_meets_error_budget(phantoms, tmp_path, capsys):
    code, res, _ = _run(capsys, "pipeline", "--studies", phantoms["studies"], "--oracle-masks",
                        phantoms["studies"], "--truth", f"{phantoms['run']}/truth.csv",
                        "--method", "baseline", "--crop", "128", "--out", str(tmp_path / "p"))
    assert code == 0
    truth = _table(f"{phantoms['run']}/truth.csv")
    mean_esv = np.mean([float(t["esv_ml"]) for t in truth.values()])
    mean_edv = np.mean([float(t["edv_ml"]) for t in truth.values()])
    assert res["esv_rmse_ml"] < 0.02 * mean_esv
    assert res["edv_rmse_ml"] < 0.02 * mean_edv
    vols = _table(res["volumes"])
    assert list(vols) == sorted(truth)


def test_pipeline_report_is_reproducible(phantoms, tmp_path, capsys):
    args = ["pipeline", "--studies", phantoms["studies"], "--oracle-masks", phantoms["studies"],
            "--truth", f"{phantoms['run']}/truth.csv", "--method", "m1t0", "--crop", "128"]
    _, a, _ = _run(capsys, *args, "--out", str(tmp_path / "a"))
    _, b, _ = _run(capsys, *args, "--out", str(tmp_path / "b"), "--jobs", "2")
    for name in ("summary.json", "volumes.csv", "scatter_edv.csv", "residuals_ef.csv"):
        assert open(f"{a['report']}/{name}", "rb").read() == open(f"{b['report']}/{name}", "rb").read()


def test_stagewise_commands_match_pipeline(phantoms, tmp_path, capsys):
    out = str(tmp_path / "s")
    _, seg, _ = _run(capsys, "segment", "--studies", phantoms["studies"], "--oracle-masks",
                     phantoms["studies"], "--out", out)
    _, post, _ = _run(capsys, "postproc", "--studies", seg["studies"], "--method", "largest", "--out", out)
    _, vol, _ = _run(capsys, "volume", "--studies", post["studies"], "--mode", "tc", "--out", out)
    rows = _table(vol["volumes"])
    assert len(rows) == 4 and all(float(r["edv_ml"]) > float(r["esv_ml"]) for r in rows.values())
    code, ev, _ = _run(capsys, "eval", "--pred", vol["volumes"], "--truth",
                       f"{phantoms['run']}/truth.csv", "--out", out)
    assert code == 0
    summary = json.load(open(f"{ev['report']}/summary.json"))
    assert summary["n_patients"] == 4 and sum(map(sum, summary["confusion_matrix"])) == 4


def test_roi_command_writes_rectangles(phantoms, tmp_path, capsys):
    code, res, _ = _run(capsys, "roi", "--studies", phantoms["studies"], "--mask", "--apply",
                        "--out", str(tmp_path / "r"))
    assert code == 0
    rect = json.load(open(f"{res['roi']}/phantom_000.json"))
    assert rect["row_min"] < 64 < rect["row_max"] and rect["col_min"] < 64 < rect["col_max"]
    pgm = open(f"{res['roi']}/phantom_000_mask.pgm", "rb").read()
    assert pgm.startswith(b"P5 128 128 255\n")
    masked = load_collection(res["studies"])[0]
    assert masked.data.shape[2:] == (128, 128)
    assert (masked.data[..., :rect["row_min"], :] == 0).all()


def test_train_and_segment_with_weights(tmp_path, capsys):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text("[ingest]\nphantom_size = 32\nphantom_frames = 2\n"
                   "[unet]\ninput_size = 32\nbase_filters = 4\n"
                   "[train]\nepochs = 1\nlearning_rate = 1e-3\n")
    _, ing, _ = _run(capsys, "ingest", "--phantom", "3", "--config", str(cfg), "--out", str(tmp_path))
    code, tr, _ = _run(capsys, "train", "--studies", ing["studies"], "--config", str(cfg),
                       "--out", str(tmp_path))
    assert code == 0
    split = json.load(open(f"{tr['run']}/split.json"))
    assert sorted(split["train"] + split["val"] + split["test"]) == [f"phantom_{i:03d}" for i in range(3)]
    history = list(csv.DictReader(open(f"{tr['run']}/history.csv")))
    assert len(history) == 1 and history[0]["epoch"] == "1"
    code, seg, _ = _run(capsys, "segment", "--studies", ing["studies"], "--weights", tr["weights"],
                        "--out", str(tmp_path))
    assert code == 0
    masks = load_collection(seg["studies"])[0].masks
    assert masks.shape[2:] == (32, 32) and set(np.unique(masks)) <= {0, 1}


def test_flags_override_config(phantoms, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[volume]\nmode = "tc"\nfallback = false\n')
    _, res, _ = _run(capsys, "volume", "--studies", phantoms["studies"], "--config", str(cfg),
                     "--mode", "am", "--out", str(tmp_path / "o"))
    resolved = tomli.loads(open(f"{res['run']}/config.toml").read())
    assert resolved["volume"] == {"mode": "am", "fallback": False}


# -- exit codes ------------------------------------------------------------------

def test_exit_data_error_for_missing_studies(tmp_path, capsys):
    code, _, err = _run(capsys, "volume", "--studies", str(tmp_path / "none"), "--out", str(tmp_path))
    assert code == 3 and "data error" in err


def test_exit_validation_errors(tmp_path, capsys):
    code, _, _ = _run(capsys, "ingest", "--out", str(tmp_path))
    assert code == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[volume]\nspeed = 3\n")
    code, _, err = _run(capsys, "ingest", "--phantom", "1", "--config", str(bad), "--out", str(tmp_path))
    assert code == 2 and "speed" in err
    bad.write_text("not toml = = 1")
    assert _run(capsys, "ingest", "--phantom", "1", "--config", str(bad), "--out", str(tmp_path))[0] == 2


def test_exit_validation_for_bad_mode_in_config(phantoms, tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[volume]\nmode = "simpson"\n')
    code, _, _ = _run(capsys, "volume", "--studies", phantoms["studies"], "--config", str(cfg),
                      "--out", str(tmp_path))
    assert code == 2


def test_argparse_rejections_exit_2(capsys):
    for argv in (["volume", "--mode", "xx"], ["segment", "--studies", "s"], ["nope"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    capsys.readouterr()


def test_eval_rejects_missing_truth(phantoms, tmp_path, capsys):
    pred = tmp_path / "pred.csv"
    pred.write_text("patient_id,esv_ml,edv_ml\nghost,10,20\n")
    code, _, _ = _run(capsys, "eval", "--pred", str(pred), "--truth",
                      f"{phantoms['run']}/truth.csv", "--out", str(tmp_path))
    assert code == 3
    pred.write_text("patient_id,esv_ml,edv_ml\nphantom_000,0,0\n")
    code, _, _ = _run(capsys, "eval", "--pred", str(pred), "--truth",
                      f"{phantoms['run']}/truth.csv", "--out", str(tmp_path))
    assert code == 3


def test_defaults_are_complete():
    assert set(DEFAULTS) >= {"ingest", "preprocess", "roi", "unet", "train", "postproc", "volume",
                             "eval", "seed", "jobs", "out"}
