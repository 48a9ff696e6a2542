import csv
import json
import struct

import numpy as np
import pytest

from bayesattack.attack import AttackConfig
from bayesattack.errors import FormatError
from bayesattack.harness import (
    Campaign,
    load_dataset,
    load_report,
    run_ablation,
    run_campaign,
    save_report,
    serialize_results,
    summarize,
    write_dataset,
)
from bayesattack.oracle import BallOracle, save_weights
from bayesattack.remote import OracleServer
from bayesattack.synthetic import ball_dataset

SHAPE = (3, 8, 8)
FAST = dict(budget=15, low_dim_side=2, hyper_restarts=1, acq_restarts=3, acq_maxiter=20)


@pytest.fixture
def files(tmp_path):
    oracle, images, labels = ball_dataset(5, 0, SHAPE, block=4, radius=1.2, l2_margin=0.2)
    labels[3] = 1  # misclassified on purpose
    save_weights(oracle, tmp_path / "ball.sbo")
    write_dataset(tmp_path / "data.sbd", images, labels, 2)
    return tmp_path, oracle


def campaign(files, **kw):
    tmp, oracle = files
    cfg = AttackConfig(eps=0.03, **FAST)
    return Campaign(str(tmp / "data.sbd"), str(tmp / "ball.sbo"), cfg, **kw)


class TestDataset:
    def test_round_trip(self, tmp_path, rng):
        imgs = rng.uniform(size=(4, *SHAPE)).astype(np.float32)
        write_dataset(tmp_path / "d", imgs, [0, 9, 3, 1], 10)
        data = load_dataset(tmp_path / "d", SHAPE)
        assert [y for _, y in data] == [0, 9, 3, 1]
        np.testing.assert_array_equal(np.stack([x for x, _ in data]), imgs)

    def test_empty_file(self, tmp_path):
        (tmp_path / "e").write_bytes(b"")
        with pytest.raises(FormatError, match="empty"):
            load_dataset(tmp_path / "e")

    def test_pixel_out_of_range(self, tmp_path):
        raw = struct.pack("<4s5I", b"SBD1", 1, 1, 1, 2, 2) + np.array([0.5, 1.0001], "<f4").tobytes()
        (tmp_path / "p").write_bytes(raw + np.array([0], "<u2").tobytes())
        with pytest.raises(FormatError, match="outside"):
            load_dataset(tmp_path / "p")

    def test_label_and_shape_errors(self, tmp_path):
        raw = struct.pack("<4s5I", b"SBD1", 1, 1, 1, 1, 2) + np.array([0.5], "<f4").tobytes()
        (tmp_path / "l").write_bytes(raw + np.array([2], "<u2").tobytes())
        with pytest.raises(FormatError, match="label"):
            load_dataset(tmp_path / "l")
        (tmp_path / "l").write_bytes(raw + np.array([1], "<u2").tobytes())
        with pytest.raises(FormatError, match="shape"):
            load_dataset(tmp_path / "l", (3, 1, 1))
        (tmp_path / "l").write_bytes(raw)
        with pytest.raises(FormatError, match="bytes"):
            load_dataset(tmp_path / "l")

    def test_writer_validates(self, tmp_path):
        with pytest.raises(ValueError):
            write_dataset(tmp_path / "x", np.full((1, *SHAPE), 2.0), [0], 2)
        with pytest.raises(ValueError):
            write_dataset(tmp_path / "x", np.zeros((1, *SHAPE)), [2], 2)


class TestSummary:
    def test_arithmetic(self):
        results = [{"status": "success", "attack": {"queries_used": q}} for q in range(1, 11)]
        results += [{"status": "failure", "attack": {"queries_used": 200}}] * 10
        results += [{"status": "skipped"}, {"status": "errored"}]
        m = summarize(results)
        assert m["success_rate"] == 0.5 and m["avg_queries_on_success"] == 5.5
        assert m["median_queries_on_success"] == 5.5
        assert (m["attacked"], m["skipped"], m["errored"]) == (20, 1, 1)
        assert not m["degenerate"]

    def test_degenerate(self):
        m = summarize([{"status": "skipped"}])
        assert m["degenerate"] and m["success_rate"] == 0.0 and m["avg_queries_on_success"] is None


class TestCampaign:
    def test_report(self, files):
        tmp, _ = files
        rep = run_campaign(campaign(files, out=str(tmp / "r.json"), trace_dir=str(tmp / "tr")))
        assert rep["schema"] == 1 and rep["metrics"]["attacked"] == 4
        statuses = [r["status"] for r in rep["results"]]
        assert statuses[3] == "skipped" and set(statuses) <= {"success", "failure", "skipped"}
        assert load_report(tmp / "r.json")["results"] == json.loads(json.dumps(rep["results"]))
        with open(tmp / "tr" / "image_00000.csv") as fh:
            rows = list(csv.DictReader(fh))
        trace = rep["results"][0]["attack"]["trace"]
        assert len(rows) == len(trace)
        best = np.maximum.accumulate([float(r["objective_value"]) for r in rows])
        np.testing.assert_array_equal(best, [float(r["cumulative_best"]) for r in rows])

    def test_deterministic_across_workers(self, files):
        a = run_campaign(campaign(files))
        b = run_campaign(campaign(files, workers=3))
        assert serialize_results(a) == serialize_results(b)

    def test_degenerate_campaign(self, tmp_path):
        o = BallOracle(np.full(SHAPE, 0.5), 0.1)
        save_weights(o, tmp_path / "o")
        write_dataset(tmp_path / "d", np.zeros((2, *SHAPE)), [0, 0], 2)  # both outside: label 1
        rep = run_campaign(Campaign(str(tmp_path / "d"), str(tmp_path / "o"), AttackConfig(**FAST)))
        assert rep["metrics"]["degenerate"] and rep["metrics"]["skipped"] == 2

    def test_seeds(self, files):
        with pytest.raises(ValueError, match="unique"):
            run_campaign(campaign(files, seeds=[1, 1, 2, 3, 4]))
        rep = run_campaign(campaign(files, seeds=[10, 11, 12, 13, 14], image_count=2))
        assert [r["seed"] for r in rep["results"]] == [10, 11]

    def test_random_targets(self, files):
        rep = run_campaign(campaign(files, random_targets=True, image_count=2))
        assert all(r["target"] == 1 for r in rep["results"])

    def test_random_method(self, files):
        rep = run_campaign(campaign(files, method="random"))
        assert all(r["attack"]["method"] == "random" for r in rep["results"] if "attack" in r)
        with pytest.raises(ValueError):
            run_campaign(campaign(files, method="nope"))

    def test_remote_campaign_matches_local(self, files):
        tmp, oracle = files
        local = run_campaign(campaign(files))
        with OracleServer(oracle) as srv:
            remote = run_campaign(Campaign(str(tmp / "data.sbd"), "tcp://" + srv.address,
                                           AttackConfig(eps=0.03, **FAST), workers=2))
        assert serialize_results(local) == serialize_results(remote)

    def test_remote_unreachable(self, files):
        tmp, _ = files
        rep = run_campaign(Campaign(str(tmp / "data.sbd"), "tcp://127.0.0.1:1", AttackConfig(**FAST)))
        assert rep["metrics"]["errored"] == 5 and rep["metrics"]["degenerate"]

    def test_report_schema_checked(self, tmp_path):
        save_report({"schema": 2}, tmp_path / "r")
        with pytest.raises(FormatError):
            load_report(tmp_path / "r")


class TestAblation:
    def test_empty_sweep(self, files):
        assert run_ablation(campaign(files), []) == []

    def test_identical_overrides(self, files):
        a, b = run_ablation(campaign(files), [{"eps": 0.1}, {"eps": 0.1}])
        assert serialize_results(a) == serialize_results(b)
        assert a["overrides"] == {"eps": 0.1} and a["config"]["eps"] == 0.1

    def test_bad_key(self, files):
        with pytest.raises(ValueError, match="override"):
            run_ablation(campaign(files), [{"budget": 3}])

    def test_outputs_and_cross_mode(self, files, caplog):
        tmp, _ = files
        base = campaign(files, out=str(tmp / "ab.json"), trace_dir=str(tmp / "tr"), image_count=1)
        reps = run_ablation(base, [{"basis_mode": "fft_cos"}, {"low_dim_side": 3}])
        assert [r["cross_mode"] for r in reps] == [True, False]
        assert "cross-mode" in caplog.text
        assert (tmp / "ab_00.json").exists() and (tmp / "ab_01.json").exists()
        assert (tmp / "tr" / "sweep_01" / "image_00000.csv").exists()
