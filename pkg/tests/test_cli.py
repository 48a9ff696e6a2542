import json
import subprocess
import sys

import pytest

from bayesattack.cli import main
from bayesattack.harness import load_report

FAST = ["--budget", "12", "--rd-side", "2", "--eps", "0.1"]


@pytest.fixture
def synth(tmp_path):
    w, d = tmp_path / "ball.sbo", tmp_path / "data.sbd"
    assert main(["make-synthetic", "--weights", str(w), "--dataset", str(d), "--count", "3",
                 "--side", "8", "--radius", "1.2", "--l2-margin", "0.2"]) == 0
    return str(w), str(d), tmp_path


def test_attack(synth, capsys):
    w, d, tmp = synth
    capsys.readouterr()
    assert main(["attack", "--oracle", w, "--dataset", d, "--index", "1",
                 "--trace-dir", str(tmp / "t"), *FAST]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["index"] == 1 and 1 <= out["queries_used"] <= 12
    assert (tmp / "t" / "image_00001.csv").exists()


def test_campaign_and_ablate(synth, capsys):
    w, d, tmp = synth
    assert main(["campaign", "--oracle", w, "--dataset", d, "--out", str(tmp / "r.json"), *FAST]) == 0
    assert load_report(tmp / "r.json")["metrics"]["attacked"] == 3
    capsys.readouterr()
    assert main(["ablate", "--oracle", w, "--dataset", d, "--count", "1", *FAST,
                 "--sweep", '[{"basis_mode": "fft_full"}, {"eps": 0.2}]']) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and "cross-mode" in lines[0]


def test_verify(capsys):
    assert main(["verify"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_serve_oracle_subprocess(synth):
    w, d, _ = synth
    proc = subprocess.Popen([sys.executable, "-m", "bayesattack", "serve-oracle", "--oracle", w,
                             "--port", "0"], stdout=subprocess.PIPE, text=True)
    try:
        addr = proc.stdout.readline().split()[-1]
        assert main(["campaign", "--oracle", "tcp://" + addr, "--dataset", d, *FAST]) == 0
    finally:
        proc.terminate()
        proc.wait(10)


def test_bad_arguments():
    with pytest.raises(SystemExit):
        main(["attack", "--norm", "l1", "--oracle", "x", "--dataset", "y"])
