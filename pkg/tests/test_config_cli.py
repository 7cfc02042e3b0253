import csv
import json
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from occid import load_model, save_model
from occid.cli import main
from occid.config import ExperimentConfig, apply_overrides, load_config, parse_override
from occid.errors import ConfigError
from occid.experiment import evaluate_predictor, probe_points, read_csv

ROOT = Path(__file__).resolve().parents[1]
DUFFING = ROOT / "configs" / "duffing.json"
TWOLINK = ROOT / "configs" / "twolink.json"

# small variants that keep the CLI tests quick
SMALL_DUFFING = ["data.num_trajectories=9", "eval.probe_count=61"]
SMALL_TWOLINK = ["data.num_trajectories=20", "data.horizon=0.01", "eval.probe_count=10"]


def run(cmd, config, out, *extra, sets=()):
    argv = [cmd, "--config", str(config), "--out", str(out), "--no-plots"]
    for s in sets:
        argv += ["--set", s]
    return main(argv + list(extra))


def raw(path):
    return json.loads(Path(path).read_text())


def test_shipped_configs_round_trip():
    for path in (DUFFING, TWOLINK):
        cfg = load_config(path)
        again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again == cfg


@pytest.mark.parametrize("override,msg", [
    ("data.num_trajectories=0", "num_trajectories"),
    ("model.lambda=-1", "lambda"),
    ("model.s=1", "plant order"),
    ("data.num_trajectories=170", "perfect"),
    ("seed=-1", "seed"),
    ("model.kernel.shape=0", "kernel"),
    ("data.dt=0.3", "dt"),
])
def test_invalid_values(override, msg):
    with pytest.raises(ConfigError, match=msg):
        load_config(DUFFING, [override])


def test_unknown_field():
    d = raw(DUFFING)
    d["model"]["bogus"] = 1
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict(d)
    with pytest.raises(ConfigError, match="missing"):
        ExperimentConfig.from_dict({k: v for k, v in raw(DUFFING).items() if k != "eval"})


def test_overrides():
    assert parse_override("model.lambda=1e-4") == (["model", "lambda"], 1e-4)
    assert parse_override("output_dir=runs/a") == (["output_dir"], "runs/a")
    d = apply_overrides(raw(DUFFING), ["model.lam=0.5", "model.kernel.family=exponential-dot-product"])
    assert d["model"]["lambda"] == 0.5 and d["model"]["kernel"]["family"] == "exponential-dot-product"
    with pytest.raises(ConfigError):
        apply_overrides(raw(DUFFING), ["nosuch.key=1"])
    with pytest.raises(ConfigError):
        parse_override("novalue")


def test_generate_duffing_manifest(tmp_path):
    assert run("generate", DUFFING, tmp_path) == 0
    m = raw(tmp_path / "data" / "manifest.json")
    assert len(m["files"]) == 169 and (m["n"], m["m"], m["s"]) == (1, 1, 2)
    x0 = np.array([f["x0"] for f in m["files"]])
    assert x0[:, 0].min() == -3 and x0[:, 0].max() == 3
    assert all((tmp_path / "data" / f["file"]).exists() for f in m["files"])


def test_generate_twolink_halton_cube(tmp_path):
    sets = ["data.num_trajectories=1000", "data.horizon=0.002"]
    assert run("generate", TWOLINK, tmp_path, sets=sets) == 0
    m = raw(tmp_path / "data" / "manifest.json")
    x0 = np.array([f["x0"] for f in m["files"]])
    assert x0.shape == (1000, 4) and np.all((x0 >= -3) & (x0 <= 3))


def test_identify_shapes(tmp_path):
    assert run("generate", DUFFING, tmp_path) == 0
    assert run("identify", DUFFING, tmp_path) == 0
    model = load_model(tmp_path / "model.json")
    assert model.weights.shape == (169, 1)
    report = raw(tmp_path / "fit_report.json")
    assert report["relative_residual"] <= 1e-8 and report["M"] == 169
    assert {"condition_estimate", "wall_seconds"} <= set(report)


def test_identify_twolink_shape(tmp_path):
    sets = ["data.num_trajectories=1000", "data.horizon=0.002"]
    assert run("generate", TWOLINK, tmp_path, sets=sets) == 0
    assert run("identify", TWOLINK, tmp_path, "--threads", "2", sets=sets) == 0
    assert load_model(tmp_path / "model.json").weights.shape == (1000, 4)


def test_identify_sidecar_order_mismatch(tmp_path, capsys):
    assert run("generate", DUFFING, tmp_path, sets=SMALL_DUFFING) == 0
    meta = tmp_path / "data" / "traj_0003.meta.json"
    d = raw(meta)
    d["s"] = 3
    meta.write_text(json.dumps(d))
    assert run("identify", DUFFING, tmp_path, sets=SMALL_DUFFING) == 4
    assert "does not match" in capsys.readouterr().err
    assert not (tmp_path / "model.json").exists()


def test_identify_dataset_config_mismatch(tmp_path):
    assert run("generate", DUFFING, tmp_path, sets=SMALL_DUFFING) == 0
    assert run("identify", TWOLINK, tmp_path, "--data", str(tmp_path / "data")) == 2


def test_threads_do_not_change_model(tmp_path):
    assert run("generate", DUFFING, tmp_path) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("identify", DUFFING, a, "--data", str(tmp_path / "data"), "--threads", "1") == 0
    assert run("identify", DUFFING, b, "--data", str(tmp_path / "data"), "--threads", "4") == 0
    assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()


def test_evaluate_perfect_model_zero_errors():
    for path in (DUFFING, TWOLINK):
        cfg = load_config(path)
        plant = cfg.make_plant()
        header, rows, summary = evaluate_predictor(plant, plant.evaluate, probe_points(cfg))
        err_cols = [i for i, h in enumerate(header) if h.endswith("_err") or "tilde" in h]
        assert np.all(np.array(rows)[:, err_cols] == 0)
        assert summary["max_abs_f"] == 0 and summary["max_abs_g"] == 0


def test_probe_sets():
    P = probe_points(load_config(DUFFING))
    assert P[0, 0] == -3 and P[-1, 0] == 3 and len(P) == 601
    P = probe_points(load_config(TWOLINK))
    assert P.shape == (100, 4) and np.all(np.abs(P) <= 2)
    d = np.linalg.norm(P, axis=1)
    assert np.all(np.diff(d) <= 0)


def test_evaluate_writes_tables_and_figures(tmp_path):
    assert run("generate", DUFFING, tmp_path, sets=SMALL_DUFFING) == 0
    assert run("identify", DUFFING, tmp_path, sets=SMALL_DUFFING) == 0
    assert main(["evaluate", "--config", str(DUFFING), "--out", str(tmp_path)] + ["--set", SMALL_DUFFING[1]]) == 0
    header, rows = read_csv(tmp_path / "errors.csv")
    assert rows.shape == (61, len(header)) and "f_abs_err" in header
    assert (tmp_path / "error_summary.csv").exists()
    assert sorted(p.name for p in (tmp_path / "figures").iterdir()) == [
        "f_error.png", "f_estimate.png", "g_error.png", "g_estimate.png"]


def test_evaluate_twolink_relative_columns(tmp_path):
    assert run("generate", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    assert run("identify", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    assert run("evaluate", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    header, rows = read_csv(tmp_path / "errors.csv")
    for col in ("f_rel_err", "g1_rel_err", "g2_rel_err"):
        assert col in header
    assert np.all(np.diff(rows[:, header.index("distance")]) <= 0)


def test_montecarlo_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert run("montecarlo", DUFFING, tmp_path / sub, "--trials", "2", sets=SMALL_DUFFING) == 0
    a = (tmp_path / "a" / "montecarlo.csv").read_bytes()
    assert a == (tmp_path / "b" / "montecarlo.csv").read_bytes()
    rows = list(csv.DictReader(a.decode().splitlines()))
    assert len(rows) == 2 and {"mean_abs_f", "mean_abs_g"} <= set(rows[0])
    assert rows[0]["seed"] != rows[1]["seed"]


def test_montecarlo_zero_trials(tmp_path):
    assert run("montecarlo", DUFFING, tmp_path, "--trials", "0") == 2
    assert not tmp_path.joinpath("montecarlo.csv").exists()


def test_control_demo_exact(tmp_path):
    assert run("control-demo", TWOLINK, tmp_path) == 0
    header, rows = read_csv(tmp_path / "closed_loop_exact.csv")
    assert header == ["t", "q1", "q2", "qd1", "qd2", "tau1", "tau2"] and rows.shape == (5001, 7)
    # exact cancellation leaves linear error dynamics with Kp = 20 I, Kv = 30 I
    A = np.block([[np.zeros((2, 2)), np.eye(2)], [-20 * np.eye(2), -30 * np.eye(2)]])
    ref = scipy.linalg.expm(5 * A) @ np.array([1.0, -1.0, 0.0, 0.0])
    np.testing.assert_allclose(rows[-1, 1:5], ref, rtol=1e-8)
    assert not (tmp_path / "closed_loop_estimated.csv").exists()


def test_control_demo_estimated_schema(tmp_path):
    assert run("generate", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    assert run("identify", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    assert run("control-demo", TWOLINK, tmp_path, "--model", str(tmp_path / "model.json"),
               sets=["control.horizon=0.5"]) == 0
    he, re_ = read_csv(tmp_path / "closed_loop_exact.csv")
    hs, rs = read_csv(tmp_path / "closed_loop_estimated.csv")
    assert he == hs and re_.shape == rs.shape


def test_control_demo_singular_model_exit_code(tmp_path, capsys):
    assert run("generate", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    assert run("identify", TWOLINK, tmp_path, sets=SMALL_TWOLINK) == 0
    model = load_model(tmp_path / "model.json")
    zero = type(model)(model.basis, np.zeros_like(model.weights), model.lam)
    save_model(zero, tmp_path / "zero.json")
    assert run("control-demo", TWOLINK, tmp_path, "--model", str(tmp_path / "zero.json")) == 3
    assert "singular" in capsys.readouterr().err


def test_control_demo_needs_twolink(tmp_path):
    assert run("control-demo", DUFFING, tmp_path) == 2


def test_config_error_touches_nothing(tmp_path):
    out = tmp_path / "out"
    assert run("generate", DUFFING, out, sets=["data.num_trajectories=0"]) == 2
    assert not out.exists()


def test_missing_inputs_exit_io(tmp_path):
    assert run("identify", DUFFING, tmp_path) == 4
    assert run("evaluate", DUFFING, tmp_path) == 4
    assert main(["generate", "--config", str(tmp_path / "none.json")]) == 4


def test_seed_flag_changes_data(tmp_path):
    assert run("generate", DUFFING, tmp_path / "a", sets=SMALL_DUFFING) == 0
    assert run("generate", DUFFING, tmp_path / "b", "--seed", "7", sets=SMALL_DUFFING) == 0
    a = (tmp_path / "a" / "data" / "traj_0000.csv").read_bytes()
    b = (tmp_path / "b" / "data" / "traj_0000.csv").read_bytes()
    assert a != b
    assert raw(tmp_path / "b" / "data" / "manifest.json")["seed"] == 7
