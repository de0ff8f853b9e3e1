import json
import subprocess
import sys

import pytest

from robust_gcs.cli import main
from robust_gcs.constellation import load, square_qam
from robust_gcs.experiments import read_csv

SWEEP_TOML = """
[sweep]
constellations = ["qam64", "{robust}"]
snr_grid_db = [16, 18]
lw_grid_hz = [50e3, 300e3]
runs = 2
symbols_per_run = 2000
seed = 3
workers = 1

[bps]
n_test_phases = 60
window = 128
"""


def test_qam_writes_constellation_file(tmp_path):
    assert main(["qam", "--order", "64", "--out", str(tmp_path / "qam64.const")]) == 0
    assert load(tmp_path / "qam64.const") == square_qam(64)


def test_train_writes_constellation_model_and_loss(tmp_path):
    out = tmp_path / "robust.const"
    args = ["train", "--mode", "snr_lw_robust", "--seed", "1", "--order", "16", "--epochs", "2",
            "--out", str(out), "--model-out", str(tmp_path / "m.aemodel"), "--loss-csv", str(tmp_path / "loss.csv")]
    assert main(args) == 0
    c = load(out)
    assert c.provenance == "trained-snr-lw-robust" and c.order == 16
    assert (tmp_path / "loss.csv").read_text().splitlines()[0] == "epoch,loss_nats"
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_train_fixed_grid_per_rpn(tmp_path):
    args = ["train", "--order", "16", "--epochs", "1", "--rpn-set", "1e-3,1e-2", "--per-rpn-at-snr", "17",
            "--out-dir", str(tmp_path / "grid")]
    assert main(args) == 0
    files = sorted((tmp_path / "grid").glob("*.const"))
    assert len(files) == 2
    assert {load(f).metadata["rpn_var"] for f in files} == {"0.001", "0.01"}


@pytest.fixture()
def sweep_config(tmp_path):
    robust = tmp_path / "r.const"
    assert main(["train", "--mode", "lw_robust", "--epochs", "2", "--out", str(robust)]) == 0
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(SWEEP_TOML.replace("{robust}", str(robust)))
    return cfg


def test_sweep_from_config_is_byte_deterministic(tmp_path, sweep_config):
    outs = []
    for name in ("a", "b"):
        csv = tmp_path / f"{name}.csv"
        assert main(["sweep", "--config", str(sweep_config), "--out", str(csv),
                     "--plot-lw", str(tmp_path / f"{name}_lw.svg"),
                     "--plot-snr", str(tmp_path / f"{name}_snr.svg")]) == 0
        outs.append(csv.read_bytes())
    assert outs[0] == outs[1]
    assert (tmp_path / "a_lw.svg").read_bytes() == (tmp_path / "b_lw.svg").read_bytes()
    table = read_csv(tmp_path / "a.csv")
    assert len(table) == 2 * 2 * 2
    assert {r.runs for r in table} == {2}


def test_flags_override_config(tmp_path, sweep_config):
    csv = tmp_path / "o.csv"
    assert main(["sweep", "--config", str(sweep_config), "--const", "qam64", "--lw", "1e5",
                 "--runs", "1", "--out", str(csv)]) == 0
    table = read_csv(csv)
    assert [(r.label, r.linewidth_hz, r.runs) for r in table] == [("qam64", 1e5, 1), ("qam64", 1e5, 1)]


def test_envelope_and_plot_subcommands(tmp_path):
    consts = []
    for rpn in ("1e-3", "2e-2"):
        assert main(["train", "--order", "16", "--epochs", "1", "--rpn-var", rpn,
                     "--out", str(tmp_path / f"{rpn}.const")]) == 0
        consts.append(str(tmp_path / f"{rpn}.const"))
    csv = tmp_path / "s.csv"
    assert main(["sweep", "--const", *consts, "--snr", "17", "--lw", "5e4,1e5", "--runs", "1",
                 "--symbols", "1000", "--workers", "1", "--out", str(csv)]) == 0
    env = tmp_path / "env.csv"
    assert main(["envelope", "--csv", str(csv), "--const", *consts, "--out", str(env)]) == 0
    rows = env.read_text().splitlines()
    assert rows[0].endswith("winner,rpn_var") and len(rows) == 3
    assert all(r.split(",")[-1] in ("0.001", "0.02") for r in rows[1:])
    svg = tmp_path / "p.svg"
    assert main(["plot", "--csv", str(csv), "--axis", "vs_lw_at_fixed_snr", "--out", str(svg)]) == 0
    assert svg.read_text().lstrip().startswith("<?xml")


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--bogus"])
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "usage:" in err
    assert json.loads(err.strip().splitlines()[-1])["error"] == "usage"


def test_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sweep]\nruns = 0\n")
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and json.loads(err.strip().splitlines()[-1])["error"] == "invalid_config"
    bad.write_text("[sweep]\nfrobnicate = 1\n")
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_constellation_file_exits_2(tmp_path, capsys):
    (tmp_path / "c.const").write_text("garbage\n")
    code = main(["sweep", "--const", str(tmp_path / "c.const"), "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "robust_gcs", "qam", "--order", "4", "--out",
                           str(tmp_path / "q4.const")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load(tmp_path / "q4.const").order == 4
