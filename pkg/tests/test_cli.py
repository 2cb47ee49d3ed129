import io
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from featurelab import alloc, cli, crm, levy, sp, species
from featurelab.alloc import Partition, SuffStats

GOLDEN = Path(__file__).parent / "golden"
SB = "stable-beta:alpha=2,c=1,sigma=0.5"
SPM = "sp:levy=stable,sigma=0.5,prior=exponential,rate=1"
SPLOG = "sp:levy=log,C=1,r=2,prior=uniform,lo=0,hi=2"

# fixed parameter set for the golden files: name -> argv
CASES = {
    "sample_crm.jsonl": ["sample", "--model", SB, "--n", "8", "--seed", "2024"],
    "sample_crm.csv": ["sample", "--model", SB, "--n", "8", "--seed", "2024", "--format", "csv"],
    "sample_sp.jsonl": ["sample", "--model", SPM, "--n", "6", "--seed", "7"],
    "sample_py.json": ["sample", "--model", "pitman-yor:sigma=0.5,theta=1", "--n", "30",
                       "--seed", "11"],
    "predict_crm.json": ["predict", "--model", SB, "--stats", '{"n":10,"m":[3]}'],
    "predict_sp.json": ["predict", "--model", SPM, "--stats", '{"n":4,"m":[3,1]}',
                        "--ymax", "12"],
    "predict_dp.json": ["predict", "--model", "dirichlet:theta=1",
                        "--stats", '{"n":1,"blocks":[1]}'],
    "psi_posterior.csv": ["psi-posterior", "--model", SPLOG, "--stats", '{"n":3,"m":[2]}',
                          "--n-grid", "64"],
}


def run_cli(argv, capsys):
    code = cli.run(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(name, capsys):
    code, out, _ = run_cli(CASES[name], capsys)
    assert code == 0
    assert out == (GOLDEN / name).read_text()


@pytest.mark.parametrize("name", sorted(CASES))
def test_byte_identical_reruns(name, capsys):
    first = run_cli(CASES[name], capsys)[1]
    assert run_cli(CASES[name], capsys)[1] == first


def _rng(seed):
    return np.random.default_rng(np.random.SeedSequence(seed))


def test_outputs_are_library_results(capsys):
    lam = levy.stable_beta(2, 1, 0.5)
    Z = crm.sample_allocation(_rng(2024), lam, 8)
    expected = "".join(json.dumps(r) + "\n" for r in Z.to_lists())
    assert run_cli(CASES["sample_crm.jsonl"], capsys)[1] == expected
    buf = io.StringIO()
    alloc.write_csv(Z, buf)
    assert run_cli(CASES["sample_crm.csv"], capsys)[1] == buf.getvalue()

    model = sp.SPModel(levy.stable(0.5), sp.exponential_prior(1.0))
    Z = sp.sample_allocation(_rng(7), model, 6)
    assert run_cli(CASES["sample_sp.jsonl"], capsys)[1] == "".join(
        json.dumps(r) + "\n" for r in Z.to_lists())

    labels = species.sample_sequence(_rng(11), species.pitman_yor(0.5, 1), 30)
    assert json.loads(run_cli(CASES["sample_py.json"], capsys)[1]) == \
        Partition.from_labels(labels).to_dict()

    law = crm.predictive(lam, SuffStats(10, (3,)))
    assert run_cli(CASES["predict_crm.json"], capsys)[1] == json.dumps(law.to_dict()) + "\n"

    mp_ = sp.marginal_predictive(model, SuffStats(4, (3, 1)), 12)
    assert run_cli(CASES["predict_sp.json"], capsys)[1] == json.dumps(mp_.to_dict()) + "\n"

    logm = sp.SPModel(levy.log_intensity(1, 2), sp.uniform_prior(0, 2))
    table = sp.psi_posterior(logm, SuffStats(3, (2,)), n_grid=64)
    assert run_cli(CASES["psi_posterior.csv"], capsys)[1] == table.to_csv(io.StringIO())


def test_predict_example_value(capsys):
    out = json.loads(run_cli(CASES["predict_crm.json"], capsys)[1])
    assert out["known_probs"] == [2.5 / 11]
    assert out["new_rate"] == pytest.approx(0.672752380371095, rel=1e-14)


def test_predict_conditional_sp(capsys):
    code, out, _ = run_cli(["predict", "--model", SPM, "--stats", '{"n":4,"m":[3,1]}',
                            "--psi", "2.0"], capsys)
    assert code == 0
    model = sp.SPModel(levy.stable(0.5), sp.exponential_prior(1.0))
    law = sp.conditional_predictive(model, SuffStats(4, (3, 1)), 2.0)
    assert json.loads(out) == law.to_dict()


def test_sample_zero_is_empty(tmp_path, capsys):
    for model in (SB, SPM, "dirichlet:theta=2"):
        code, out, _ = run_cli(["sample", "--model", model, "--n", "0", "--seed", "1"], capsys)
        assert code == 0 and out == ""
    path = tmp_path / "z.jsonl"
    assert cli.run(["sample", "--model", SB, "--n", "0", "--seed", "1", "--out", str(path)]) == 0
    assert path.read_text() == ""


def test_sample_to_file_round_trips(tmp_path):
    path = tmp_path / "z.jsonl"
    assert cli.run(["sample", "--model", SB, "--n", "15", "--seed", "3", "--out", str(path)]) == 0
    Z = alloc.read_jsonl(path)
    assert Z == crm.sample_allocation(_rng(3), levy.stable_beta(2, 1, 0.5), 15)


def test_model_from_json_file_and_string(tmp_path, capsys):
    d = {"kind": "stable_beta", "params": {"alpha": 2, "c": 1, "sigma": 0.5}}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    ref = run_cli(CASES["predict_crm.json"], capsys)[1]
    for spec in (str(path), json.dumps(d)):
        code, out, _ = run_cli(["predict", "--model", spec, "--stats", '{"n":10,"m":[3]}'],
                               capsys)
        assert code == 0 and out == ref
    sp_json = {"levy": {"kind": "stable", "params": {"sigma": 0.5}},
               "prior": {"kind": "exponential", "params": {"rate": 1}}}
    code, out, _ = run_cli(["predict", "--model", json.dumps(sp_json), "--stats",
                            '{"n":4,"m":[3,1]}', "--ymax", "12"], capsys)
    assert out == (GOLDEN / "predict_sp.json").read_text()


@pytest.mark.parametrize("argv", [
    ["predict", "--model", "nope:x=1", "--stats", '{"n":1,"m":[1]}'],
    ["predict", "--model", SB, "--stats", "{bad json"],
    ["predict", "--model", SB, "--stats", '{"n":1,"m":[4]}'],
    ["predict", "--model", "stable-beta:alpha=2,c=1", "--stats", '{"n":1}'],
    ["predict", "--model", "stable-beta:alpha=2,c=1,sigma=1.5", "--stats", '{"n":1}'],
    ["predict", "--model", SB, "--stats", '{"n":1}', "--marginal"],
    ["psi-posterior", "--model", SB, "--stats", '{"n":2}'],
    ["psi-posterior", "--model", SPM, "--stats", '{"n":0}'],
    ["sample", "--model", SB, "--n", "-1", "--seed", "1"],
    ["sample", "--model", SB, "--n", "3", "--seed", "abc"],
    ["growth", "--model", SB, "--n", "3", "--reps", "10", "--seed", "1"],
    ["verify", "--suite", "nope"],
    ["frobnicate"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    code, out, err = run_cli(argv, capsys)
    assert code == 2
    assert out == "" and err


def test_non_convergence_exit_3(capsys):
    code, _, err = run_cli(["--max-refinements", "3", "--rel-tol", "1e-15", "predict",
                            "--model", "sp:levy=gamma,theta=1,prior=exponential,rate=1",
                            "--stats", '{"n":3,"m":[1]}'], capsys)
    assert code == 3 and "numerical failure" in err


def test_config_env_sets_tolerances(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"quadrature": {"max_refinements": 3, "rel_tol": 1e-15}}))
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    argv = ["predict", "--model", "sp:levy=gamma,theta=1,prior=exponential,rate=1",
            "--stats", '{"n":3,"m":[1]}']
    assert run_cli(argv, capsys)[0] == 3
    # flags override the file
    assert run_cli(["--max-refinements", "12", "--rel-tol", "1e-10"] + argv, capsys)[0] == 0
    cfg.write_text("{not json")
    assert run_cli(argv, capsys)[0] == 2


def test_growth_report_embeds_config(capsys):
    argv = ["growth", "--model", SB, "--n", "5", "--reps", "200", "--seed", "9"]
    code, out, _ = run_cli(argv, capsys)
    rep = json.loads(out)
    assert code == (0 if rep["passed"] else 1)
    assert rep["seed"] == 9 and rep["config"]["argv"] == argv
    assert rep["config"]["model"]["kind"] == "stable_beta"
    assert rep["config"]["quadrature"]["rel_tol"] == 1e-10
    assert rep["grid"]["analytic"][:3] == pytest.approx([2, 3.5, 4.75])
    again = json.loads(run_cli(argv + ["--workers", "2"], capsys)[1])
    assert again["grid"]["empirical"] == rep["grid"]["empirical"]


def test_verify_suite_json_and_text(capsys):
    code, out, _ = run_cli(["verify", "--suite", "gibbs", "--seed", "5"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["passed"] and rep["seed"] == 5
    code, out, _ = run_cli(["verify", "--suite", "gibbs", "--text"], capsys)
    assert code == 0 and out.startswith("gibbs: PASS")


def test_verify_failure_exit_1(capsys, monkeypatch):
    def failing(name, spec, seed=0):
        from featurelab.harness import VerificationReport
        r = VerificationReport(name)
        r.add("forced", "value", 1.0, 0.0)
        return r
    monkeypatch.setattr(cli, "run_suite", failing)
    assert run_cli(["verify", "--suite", "thm41"], capsys)[0] == 1


def test_console_entry_points():
    env = dict(os.environ)
    for cmd in (["featurelab"], [sys.executable, "-m", "featurelab"]):
        res = subprocess.run(cmd + CASES["predict_dp.json"], capture_output=True, text=True,
                             env=env)
        assert res.returncode == 0
        assert res.stdout == (GOLDEN / "predict_dp.json").read_text()


def test_broken_pipe_is_quiet():
    res = subprocess.run(
        f"{sys.executable} -m featurelab psi-posterior --model '{SPM}' "
        "--stats '{\"n\":3,\"m\":[2]}' | head -n 1", shell=True, capture_output=True, text=True)
    assert res.stdout == "a,density,cdf\n"
    assert "Traceback" not in res.stderr
