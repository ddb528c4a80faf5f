"""Config round trips and end-to-end CLI runs on a deliberately tiny model."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from kronsample.cli import main
from kronsample.config import (ExperimentConfig, derived_seed, dump_config,
                               load_config, loads_config)
from kronsample.errors import InvalidArgumentError

TINY_INI = """\
[model]
tx = 2
rx = 2
freqs = 3  # keeps N_pi at 12
roi_x_min = -1e-3
roi_x_max = 1e-3
roi_z_min = 10e-3
roi_z_max = 12e-3

[train]
steps = 2
batch_size = 4
budget = 4
train_count = 8

[sweep]
budgets = 4 5
methods = scosara uniform greedy jdps dps_topk
eval_count = 4

[recover]
fista_iters = 40
separations = 2

[experiment]
seed = 0
"""


@pytest.fixture()
def tiny_ini(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI)
    return path


def test_dump_config_round_trip():
    cfg = ExperimentConfig()
    cfg.budgets = (4, 6)
    cfg.methods = ("scosara", "greedy")
    cfg.freq_span = 1.1e6
    cfg.seed = 9
    assert loads_config(dump_config(cfg)) == cfg


def test_config_comments_and_defaults(tiny_ini):
    cfg = load_config(tiny_ini)
    assert cfg.freq_count == 3  # inline comment stripped
    assert cfg.tx == 2 and cfg.budget == 4
    assert cfg.sigma == ExperimentConfig().sigma  # unset keys keep defaults
    empty = loads_config("")
    assert empty == ExperimentConfig()


def test_config_validation_errors():
    with pytest.raises(InvalidArgumentError):
        loads_config("[sweep]\nmethods = scosara magic\n")
    with pytest.raises(InvalidArgumentError):
        loads_config("[sweep]\nbudgets = 8 6\n")
    with pytest.raises(InvalidArgumentError):
        loads_config("[sweep]\ndps_topk_budget = neither\n")


def test_derived_seed_distinct_and_stable():
    a = derived_seed(0, "train")
    assert a == derived_seed(0, "train")
    assert a != derived_seed(0, "eval")
    assert a != derived_seed(1, "train")


def test_cli_train_smoke(tiny_ini, tmp_path):
    out = tmp_path / "run"
    result = CliRunner().invoke(main, ["train", "--config", str(tiny_ini),
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "train_report.txt").exists()
    sel = (out / "selection_scosara.txt").read_text()
    assert sel.startswith("axis T:")
    manifest = json.loads((out / "manifest_train.json").read_text())
    assert manifest["status"] == "done"
    assert "train_report.txt" in manifest["files"]
    assert "selection_scosara.txt" in manifest["files"]


def outputs_of(out_dir: Path) -> dict[str, bytes]:
    """Every output file except the manifests, which carry timestamps."""
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())
            if not p.name.startswith("manifest_")}


def test_cli_sweep_reruns_byte_identical(tiny_ini, tmp_path):
    runner = CliRunner()
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        result = runner.invoke(main, ["sweep", "--config", str(tiny_ini),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        outs.append(outputs_of(out))
    assert outs[0].keys() == outs[1].keys()
    for name in outs[0]:
        assert outs[0][name] == outs[1][name], f"{name} differs between reruns"

    text = outs[0]["sweep.csv"].decode()
    lines = text.strip().splitlines()
    assert lines[0] == ("method,budget,compression_factor,mean_trace_crb,"
                        "mean_position_crb,excluded_count")
    rows = [l.split(",") for l in lines[1:]]
    methods = {r[0] for r in rows}
    assert methods == {"scosara", "uniform", "greedy", "jdps", "dps_topk"}
    for r in rows:
        float(r[2]), float(r[3]), float(r[4])  # full-precision scientific
        assert "e" in r[2] and "e" in r[3]

    # compression factor cross-check against the written selection files
    n_pi = 2 * 2 * 3
    for r in rows:
        sel_file = tmp_path / "a" / f"selection_{r[0]}_{r[1]}.txt"
        body = sel_file.read_text()
        if body.startswith("flat:"):
            m = len(body.split(":", 1)[1].split())
        else:
            counts = [len(line.split(":", 1)[1].split())
                      for line in body.strip().splitlines()]
            m = int(np.prod(counts))
        assert float(r[2]) == pytest.approx(m / n_pi)


def test_cli_recover_and_plot(tiny_ini, tmp_path):
    runner = CliRunner()
    sweep_out = tmp_path / "sweep"
    result = runner.invoke(main, ["sweep", "--config", str(tiny_ini),
                                  "--out", str(sweep_out)])
    assert result.exit_code == 0, result.output

    rec_out = tmp_path / "rec"
    sels = [str(sweep_out / "selection_scosara_4.txt"),
            str(sweep_out / "selection_dps_topk_4.txt")]
    result = runner.invoke(main, ["recover", "--config", str(tiny_ini),
                                  "--out", str(rec_out)] + sels)
    assert result.exit_code == 0, result.output
    text = (rec_out / "recovery.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "selection,separation_pixels,epsilon,l0"
    names = {l.split(",")[0] for l in lines[1:]}
    assert names == {"scosara_4", "dps_topk_4"}
    assert (rec_out / "image_scosara_4_sep2.csv").exists()
    assert (rec_out / "image_scosara_4_sep2.svg").exists()

    plot_out = tmp_path / "plot"
    result = runner.invoke(main, ["plot", "--out", str(plot_out),
                                  str(sweep_out / "sweep.csv")])
    assert result.exit_code == 0, result.output
    svg = (plot_out / "sweep.svg").read_text()
    assert svg.startswith("<svg") or "<svg" in svg


def test_cli_failure_prints_json_line(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[sweep]\nmethods = scosara magic\n")
    result = CliRunner().invoke(main, ["sweep", "--config", str(bad),
                                       "--out", str(tmp_path / "o")])
    assert result.exit_code == 1
    err = result.stderr if hasattr(result, "stderr") else result.output
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "InvalidArgumentError"
    assert "magic" in payload["message"]
