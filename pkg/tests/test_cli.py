import csv
import json

import pytest

from bhopm import cli
from bhopm.sampler import AdaptationError, SamplerConfig

FAST = ["--chains", "2", "--warmup", "100", "--samples", "60", "--seed", "5"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["simulate", "--out", str(root / "sim"), "--C", "12", "--I", "4",
                     "--N", "120", "--seed", "8"]) == 0
    assert cli.main(["fit", "--data", str(root / "sim" / "data.csv"), "--out",
                     str(root / "fit")] + FAST) == 0
    return root


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_simulate_deterministic(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--out", tmp_path / "a", "--seed", 42)
    assert code == 0
    run(capsys, "simulate", "--out", tmp_path / "b", "--seed", 42)
    for name in ("data.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    data = rows(tmp_path / "a" / "data.csv")
    assert len(data) == 801
    printed = json.loads(out)
    counts = {str(k): sum(1 for r in data[1:] if r[3] == str(k)) for k in range(1, 5)}
    assert printed["per_grade"] == counts
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seeds"] == {"seed": 42} and "config_hash" in manifest


def test_simulate_unwritable(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "simulate", "--out", blocker / "sub")
    assert code == 2 and "error" in err


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert run(capsys, "simulate", "--N", 50, "--C", 10, "--I", 3)[0] == 0
    assert (tmp_path / "env" / "data.csv").exists()


def test_fit_defaults_follow_published_settings():
    args = cli.build_parser().parse_args(["fit", "--data", "x.csv"])
    cfg = cli._sampler_config(args, {})
    assert (cfg.chains, cfg.warmup, cfg.samples) == (4, 1000, 4000)
    assert cfg == SamplerConfig()


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "run.yaml"
    conf.write_text("sampler:\n  chains: 3\n  warmup: 200\n  samples: 20\n")
    cfg_dict = cli.load_config(conf)
    args = cli.build_parser().parse_args(["--config", str(conf), "fit", "--samples", "7"])
    cfg = cli._sampler_config(args, cfg_dict)
    assert (cfg.chains, cfg.warmup, cfg.samples) == (3, 200, 7)


def test_fit_single_chain_ten_samples(fitted, capsys):
    out = fitted / "one"
    code, _, _ = run(capsys, "fit", "--data", fitted / "sim" / "data.csv", "--out", out,
                     "--chains", 1, "--warmup", 100, "--samples", 10)
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "trace_chain0.csv"]
    trace = rows(out / "trace_chain0.csv")
    assert len(trace) == 11 and "lp__" in trace[0] and "divergent__" in trace[0]


def test_fit_reproducible_across_runs_and_jobs(fitted, capsys):
    data = fitted / "sim" / "data.csv"
    again, jobs = fitted / "again", fitted / "jobs"
    run(capsys, "fit", "--data", data, "--out", again, *FAST)
    run(capsys, "fit", "--data", data, "--out", jobs, *FAST, "--jobs", 2)
    for j in range(2):
        name = f"trace_chain{j}.csv"
        ref = (fitted / "fit" / name).read_bytes()
        assert (again / name).read_bytes() == ref
        assert (jobs / name).read_bytes() == ref
    assert (jobs / "manifest.json").read_bytes() == (fitted / "fit" / "manifest.json").read_bytes()


def test_fit_manifest(fitted):
    m = json.loads((fitted / "fit" / "manifest.json").read_text())
    for key in ("config_hash", "seeds", "code_version", "dataset_fingerprint", "adaptation"):
        assert key in m
    assert m["seeds"]["master_seed"] == 5 and len(m["seeds"]["chains"]) == 2


def test_fit_strict_convergence_failure(fitted, capsys):
    code, _, err = run(capsys, "fit", "--data", fitted / "sim" / "data.csv", "--out",
                       fitted / "strict", *FAST, "--strict", "--rhat-threshold", "1.0000001")
    assert code == 4 and "R-hat" in err


def test_fit_adaptation_failure_exit_code(fitted, capsys, monkeypatch):
    def boom(model, config):
        raise AdaptationError("every warmup transition was rejected", {"final_step": 0.0})

    monkeypatch.setattr(cli, "fit", boom)
    code, _, err = run(capsys, "fit", "--data", fitted / "sim" / "data.csv", "--out",
                       fitted / "boom", *FAST)
    assert code == 3 and "final_step" in err


def test_fit_missing_data(tmp_path, capsys):
    assert run(capsys, "fit", "--data", tmp_path / "nope.csv", "--out", tmp_path)[0] == 2


def test_diagnose(fitted, capsys):
    code, out, _ = run(capsys, "diagnose", "--fit", fitted / "fit", "--out", fitted / "diag")
    assert code == 0
    rep = json.loads(out)
    assert rep["max_rhat"] >= 1 - 1e-9 and "logp_rhat" in rep
    table = rows(fitted / "diag" / "rhat.csv")
    assert table[0] == ["parameter", "rhat", "ess"]
    m = json.loads((fitted / "diag" / "manifest.json").read_text())
    assert m["dataset_fingerprint"] == json.loads(
        (fitted / "fit" / "manifest.json").read_text())["dataset_fingerprint"]


def test_waic_report(fitted, capsys):
    code, out, _ = run(capsys, "waic", "--fit", fitted / "fit")
    rep = json.loads(out)
    assert code == 0 and rep["waic"] == pytest.approx(-2 * (rep["lppd"] - rep["p_waic"]))


def test_summarize_histogram(fitted, capsys):
    code, out, _ = run(capsys, "summarize", "--fit", fitted / "fit", "--candidate", "cand0001",
                       "--threshold", 0, "--out", fitted / "summ")
    assert code == 0
    rep = json.loads(out)
    assert 0 <= rep["prob_above_threshold"]["probability"] <= 1
    observed = {r[2] for r in rows(fitted / "sim" / "data.csv")[1:]}
    assert [b["round"] for b in rep["round_bias"]] == sorted(observed)
    hist = rows(fitted / "summ" / "histogram.csv")
    assert hist[0] == ["bin_left", "bin_right", "mass"]
    assert sum(float(r[2]) for r in hist[1:]) == pytest.approx(1.0)


def test_predict_and_lookup_error(fitted, capsys):
    code, out, _ = run(capsys, "predict", "--fit", fitted / "fit", "--interviewer", "intv001",
                       "--round", "round1")
    assert code == 0 and sum(json.loads(out)["probs"]) == pytest.approx(1.0)
    code, _, err = run(capsys, "predict", "--fit", fitted / "fit", "--interviewer", "intv0x1",
                       "--round", "round1")
    assert code == 2 and "intv0x1" in err and "intv001" in err


def test_update(fitted, capsys):
    code, out, _ = run(capsys, "update", "--fit", fitted / "fit", "--candidate", "cand0002",
                       "--interviewer", "intv000", "--round", "round1", "--grade", 4,
                       "--out", fitted / "upd", "--replicates", 200)
    assert code == 0 and json.loads(out)["shift"] > 0
    assert rows(fitted / "upd" / "update_density.csv")[0] == ["bin_left", "bin_right", "mass"]


def test_stale_posterior(fitted, tmp_path, capsys):
    run(capsys, "simulate", "--out", tmp_path, "--C", 12, "--I", 4, "--N", 120, "--seed", 9)
    code, _, err = run(capsys, "diagnose", "--fit", fitted / "fit", "--data", tmp_path / "data.csv")
    assert code == 2 and "different dataset" in err


def test_evaluate(fitted, capsys):
    out = fitted / "eval"
    code, text, _ = run(capsys, "evaluate", "--data", fitted / "sim" / "data.csv", "--out", out,
                        *FAST)
    assert code == 0
    rep = json.loads(text)
    assert {"exact_rate", "within_one_rate", "matrix"} <= set(rep)
    assert rep["n_train"] + rep["n_test"] == 120 and rep["n_train"] == 96
    code, text2, _ = run(capsys, "evaluate", "--data", fitted / "sim" / "data.csv", "--out",
                         fitted / "eval2", "--reuse-fit", out / "fit", "--seed", 5)
    assert code == 0 and json.loads(text2)["matrix"] == rep["matrix"]
