import json
import re

import pytest

from gpa import cli, gan
from gpa.curves import load_curves, save_curves


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth-data", "--households", "10", "--frames", "2", "--seed", "3", "--out", str(d / "data.gpc")]) == 0
    assert cli.main(["train", "--data", str(d / "data.gpc"), "--epochs", "1", "--batch-size", "10",
                     "--seed", "1", "--out", str(d / "model")]) == 0
    return d


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_data_prints_seed_and_writes_curves(tmp_path, capsys):
    code, out, _ = run(capsys, "synth-data", "--households", "5", "--frames", "1", "--seed", "9", "--out", str(tmp_path / "c.gpc"))
    assert code == 0
    assert out.splitlines()[0] == "seed: 9"
    curves = load_curves(tmp_path / "c.gpc")
    assert len(curves) == 5 and len(curves[0]) == gan.GanArchitecture.preset("desk").curve_len


def test_ingest(tmp_path, capsys):
    rows = "".join(f"H{h},{t},{0.1 * (h + 1)}\n" for h in range(2) for t in range(20))
    (tmp_path / "r.csv").write_text("household_id,timestamp,kwh\n" + rows)
    code, out, _ = run(capsys, "ingest", str(tmp_path / "r.csv"), "--frame-len", "8", "--out", str(tmp_path / "r.gpc"))
    assert code == 0 and "4 curves from 2 households" in out
    assert len(load_curves(tmp_path / "r.gpc")) == 4


def test_train_outputs(workspace):
    model = gan.load_model(workspace / "model" / "model.gpt")
    assert model.config.scenario == "same_lr" and model.config.epochs == 1
    assert model.normalization is not None
    assert (workspace / "model" / "losses.csv").read_text().startswith("epoch,")


def test_regularized_training_records_eta(workspace, tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--data", str(workspace / "data.gpc"), "--scenario", "regularized",
                       "--epochs", "0", "--out", str(tmp_path / "m"))
    assert code == 0 and "eta 0.01" in out
    assert gan.load_model(tmp_path / "m" / "model.gpt").config.eta == 1e-2


def test_generate_raw_and_normalized(workspace, tmp_path, capsys):
    model = str(workspace / "model" / "model.gpt")
    assert run(capsys, "generate", "--model", model, "-n", "7", "--seed", "2", "--out", str(tmp_path / "g.gpc"))[0] == 0
    raw = load_curves(tmp_path / "g.gpc")
    assert len(raw) == 7 and min(c.values.min() for c in raw) >= 0
    assert run(capsys, "generate", "--model", model, "-n", "3", "--normalized", "--out", str(tmp_path / "n.gpc"))[0] == 0
    assert min(c.values.min() for c in load_curves(tmp_path / "n.gpc")) >= -1


def test_evaluate_prints_aid_and_lstm_score(workspace, tmp_path, capsys):
    data = workspace / "data.gpc"
    code, out, _ = run(capsys, "evaluate", "--natural", str(data), "--artificial", str(data),
                       "--test", str(data), "--forecast-epochs", "1", "--out", str(tmp_path / "aid.csv"))
    assert code == 0
    assert "AID: 0.000000" in out
    assert "LSTM score: 0.000000" in out
    assert (tmp_path / "aid.csv").exists()


def test_attack_on_identical_sets_ties_to_zero(workspace, capsys):
    model = str(workspace / "model" / "model.gpt")
    sets = [str(workspace / "data.gpc")] * 5
    # the indicators attack draws fresh curves per set, so only the
    # model-based attacks see truly identical inputs
    for name in ("likelihood", "gradnorm"):
        code, out, _ = run(capsys, "attack", "--model", model, "--name", name, "--sets", *sets)
        assert code == 0
        line = out.splitlines()[-1]
        assert "guess=0" in line
        scores = re.search(r"scores=\[(.*)\]", line).group(1).split()
        assert len(scores) == 5 and len(set(scores)) == 1
    code, out, _ = run(capsys, "attack", "--model", model, "--name", "indicators", "--sets", *sets)
    assert code == 0 and "attack=indicators" in out


def test_attack_household_variant(workspace, tmp_path, capsys):
    data = load_curves(workspace / "data.gpc")
    hids = sorted({c.household_id for c in data})
    paths = []
    for j in range(5):
        p = tmp_path / f"s{j}.gpc"
        save_curves(p, [c for c in data if c.household_id in hids[2 * j : 2 * j + 2]])
        paths.append(str(p))
    code, out, _ = run(capsys, "attack", "--model", str(workspace / "model" / "model.gpt"), "--variant", "household",
                       "--trials", "6", "--sets", *paths)
    assert code == 0
    lines = [line for line in out.splitlines() if line.startswith("attack=")]
    assert len(lines) == 6 and all("variant=per_household" in line for line in lines)


def test_experiment_twice_gives_identical_report(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps(dict(per_household_trials=3, synthetic=dict(n_households=10, frames_per_household=2),
                                   forecast=dict(epochs=1, train_stride=8))))
    args = ["experiment", "--config", str(cfg), "--runs", "1", "--preset", "untrained", "--seed", "5",
            "--scenarios", "same_lr", "regularized"]
    code, out1, _ = run(capsys, *args, "--out", str(tmp_path / "a"))
    assert code == 0 and "ii) same LR" in out1 and "i) diff LR" not in out1
    assert run(capsys, *args, "--out", str(tmp_path / "b"))[0] == 0
    assert (tmp_path / "a" / "report.txt").read_bytes() == (tmp_path / "b" / "report.txt").read_bytes()
    code, out, _ = run(capsys, "report", str(tmp_path / "a"))
    assert code == 0 and out == (tmp_path / "a" / "report.txt").read_text()


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--help"])
    assert info.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--epochs", "--batch-size", "--lr-generator", "--lr-discriminator", "--eta", "--seed", "--scale"):
        assert flag in out
    assert "default 140" in out and "default: 0" in out


@pytest.mark.parametrize(
    "argv,code",
    [
        ([], 1),
        (["fly"], 1),
        (["train"], 1),
        (["synth-data"], 1),
        (["attack", "--model", "m", "--sets", "a", "b"], 1),
        (["generate", "--model", "/nonexistent/model.gpt", "--out", "x"], 2),
        (["synth-data", "--households", "0", "--out", "x"], 2),
    ],
)
def test_exit_codes(argv, code, capsys):
    got, _, err = run(capsys, *argv)
    assert got == code
    assert err


def test_bad_curve_file_is_a_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.gpc"
    bad.write_bytes(b"nope")
    code, _, err = run(capsys, "train", "--data", str(bad), "--out", str(tmp_path / "m"))
    assert code == 2 and "bad magic" in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(workspace, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--data", str(workspace / "data.gpc"), "--epochs", "1",
                       "--lr-generator", "inf", "--lr-discriminator", "inf", "--out", str(tmp_path / "m"))
    assert code == 3 and "numerical failure" in err
