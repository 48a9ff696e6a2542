"""Campaign runner: datasets, batch attacks, metrics, traces and ablation sweeps.

Dataset files are little-endian::

    magic   b"SBD1"
    uint32  count, C, H, W, K
    float32 images  (count x C x H x W, row-major, values in [0, 1])
    uint16  labels  (count)

Reports are JSON objects with ``"schema": 1``; traces are CSV files with
columns ``query_index, objective_value, cumulative_best``.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from bayesattack import __version__
from bayesattack.attack import ATTACKS, AttackConfig
from bayesattack.errors import AttackAborted, FormatError, ProtocolError, TransportError
from bayesattack.oracle import Goal, ObjectiveSpec, Oracle, load_weights
from bayesattack.remote import RemoteOracle

log = logging.getLogger(__name__)

DATASET_MAGIC = b"SBD1"
_DS_HEADER = struct.Struct("<4s5I")
REPORT_SCHEMA = 1
SWEEP_KEYS = {"basis_mode", "low_dim_side", "norm", "eps", "acquisition"}


def write_dataset(path, images, labels, classes: int) -> None:
    imgs = np.asarray(images, dtype=np.float64)
    labs = np.asarray(labels)
    if imgs.ndim != 4 or labs.shape != (imgs.shape[0],):
        raise ValueError("expected images (N, C, H, W) and N labels")
    if imgs.size and (imgs.min() < 0 or imgs.max() > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    if labs.size and (labs.min() < 0 or labs.max() >= classes or classes > 65535):
        raise ValueError("labels out of range")
    n, C, H, W = imgs.shape
    with open(path, "wb") as fh:
        fh.write(_DS_HEADER.pack(DATASET_MAGIC, n, C, H, W, classes))
        fh.write(imgs.astype("<f4").tobytes())
        fh.write(labs.astype("<u2").tobytes())


def load_dataset(path, shape=None) -> list[tuple[np.ndarray, int]]:
    """Read and validate a dataset file; returns ``(image, label)`` pairs."""
    raw = Path(path).read_bytes()
    if not raw:
        raise FormatError(f"{path}: empty dataset file")
    if len(raw) < _DS_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, C, H, W, K = _DS_HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if n == 0:
        raise FormatError(f"{path}: dataset contains no images")
    if shape is not None and tuple(shape) != (C, H, W):
        raise FormatError(f"{path}: header shape {(C, H, W)} does not match {tuple(shape)}")
    D = C * H * W
    expected = _DS_HEADER.size + 4 * n * D + 2 * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    imgs = np.frombuffer(raw, "<f4", n * D, _DS_HEADER.size).astype(np.float64)
    labels = np.frombuffer(raw, "<u2", n, _DS_HEADER.size + 4 * n * D).astype(int)
    if imgs.min() < 0.0 or imgs.max() > 1.0:
        bad = int(np.argmax((imgs < 0) | (imgs > 1)))
        raise FormatError(f"{path}: pixel value {imgs[bad]} outside [0, 1] at image {bad // D}")
    if labels.max() >= K:
        raise FormatError(f"{path}: label {labels.max()} out of range for {K} classes")
    imgs = imgs.reshape(n, C, H, W)
    return [(imgs[i], int(labels[i])) for i in range(n)]


def open_oracle(spec: str) -> Oracle:
    """``tcp://host:port`` for a remote model, otherwise a weight file path."""
    if spec.startswith("tcp://"):
        return RemoteOracle(spec)
    if spec.startswith("builtin:"):
        spec = spec[len("builtin:"):]
    return load_weights(spec)


@dataclass
class Campaign:
    dataset: str
    oracle: str
    config: AttackConfig
    image_count: int | None = None
    seeds: list | None = None
    out: str | None = None
    trace_dir: str | None = None
    workers: int = 1
    method: str = "bayes"
    random_targets: bool = False
    overrides: dict = field(default_factory=dict)

    def image_seeds(self, n: int) -> list[int]:
        seeds = list(self.seeds) if self.seeds is not None else [self.config.seed + i for i in range(n)]
        if len(seeds) < n:
            raise ValueError(f"need {n} seeds, got {len(seeds)}")
        if len(set(seeds[:n])) != n:
            raise ValueError("per-image seeds must be unique")
        return seeds[:n]


def summarize(results: list[dict]) -> dict:
    """Aggregate metrics over per-image result records.

    Only images with status ``success`` or ``failure`` count as attacked.
    """
    attacked = [r for r in results if r["status"] in ("success", "failure")]
    wins = [r["attack"]["queries_used"] for r in attacked if r["status"] == "success"]
    n = len(attacked)
    return {
        "images": len(results),
        "attacked": n,
        "successes": len(wins),
        "skipped": sum(r["status"] == "skipped" for r in results),
        "errored": sum(r["status"] == "errored" for r in results),
        "degenerate": n == 0,
        "success_rate": len(wins) / n if n else 0.0,
        "avg_queries_on_success": statistics.fmean(wins) if wins else None,
        "median_queries_on_success": float(statistics.median(wins)) if wins else None,
    }


def write_trace(path, trace) -> None:
    best = -np.inf
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_index", "objective_value", "cumulative_best"])
        for q, v in trace:
            best = max(best, v)
            w.writerow([int(q), repr(float(v)), repr(float(best))])


def _attack_one(index, x0, y0, seed, campaign, oracle, attack):
    rec = {"index": index, "label": y0, "seed": seed, "status": None, "target": None}
    cfg = campaign.config.replace(seed=seed)
    try:
        clean = oracle.label(x0)
    except (TransportError, ProtocolError) as exc:
        log.warning("image %d: oracle failed on clean check: %s", index, exc)
        return {**rec, "status": "errored", "error": str(exc)}
    if clean != y0:
        return {**rec, "status": "skipped", "reason": "misclassified"}
    if campaign.random_targets:
        rng = np.random.default_rng(seed)
        others = [k for k in range(oracle.classes) if k != y0]
        target = int(rng.choice(others))
        cfg = cfg.replace(objective=ObjectiveSpec(Goal.TARGETED, cfg.objective.feedback, target))
    if cfg.objective.goal is Goal.TARGETED:
        rec["target"] = cfg.objective.target
        if cfg.objective.target == y0:
            return {**rec, "status": "skipped", "reason": "target equals label"}
    try:
        result = attack(x0, y0, cfg, oracle)
    except AttackAborted as exc:
        log.warning("image %d: %s", index, exc)
        partial = exc.result.to_dict() if exc.result is not None else None
        return {**rec, "status": "errored", "error": str(exc), "attack": partial}
    return {**rec, "status": "success" if result.success else "failure", "attack": result.to_dict()}


def run_campaign(campaign: Campaign) -> dict:
    """Attack every selected image and return the report dictionary."""
    if campaign.method not in ATTACKS:
        raise ValueError(f"unknown attack method {campaign.method!r}")
    data = load_dataset(campaign.dataset)
    count = len(data) if campaign.image_count is None else campaign.image_count
    if count < 1:
        raise ValueError("image_count must be >= 1")
    data = data[:count]
    seeds = campaign.image_seeds(len(data))
    attack = ATTACKS[campaign.method]
    local = threading.local()
    opened = []
    lock = threading.Lock()

    def worker_oracle():
        if not hasattr(local, "oracle"):
            local.oracle = open_oracle(campaign.oracle)
            with lock:
                opened.append(local.oracle)
        return local.oracle

    def task(i):
        x0, y0 = data[i]
        try:
            oracle = worker_oracle()
        except (TransportError, ProtocolError) as exc:
            return {"index": i, "label": y0, "seed": seeds[i], "status": "errored", "error": str(exc)}
        return _attack_one(i, x0, y0, seeds[i], campaign, oracle, attack)

    t0 = time.perf_counter()
    try:
        if campaign.workers > 1:
            with ThreadPoolExecutor(campaign.workers) as pool:
                results = list(pool.map(task, range(len(data))))
        else:
            results = [task(i) for i in range(len(data))]
    finally:
        for o in opened:
            o.close()
    wall = time.perf_counter() - t0

    if campaign.trace_dir:
        os.makedirs(campaign.trace_dir, exist_ok=True)
        for r in results:
            if r.get("attack"):
                write_trace(Path(campaign.trace_dir) / f"image_{r['index']:05d}.csv",
                            r["attack"]["trace"])

    metrics = summarize(results)
    if metrics["degenerate"]:
        log.warning("campaign attacked no images (all skipped or errored)")
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "method": campaign.method,
        "dataset": str(campaign.dataset),
        "oracle": campaign.oracle,
        "config": campaign.config.to_dict(),
        "overrides": dict(campaign.overrides),
        "cross_mode": campaign.config.cross_mode,
        "metrics": metrics,
        "results": results,
        "wall_clock_seconds": wall,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    if campaign.out:
        save_report(report, campaign.out)
    return report


def save_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    if report.get("schema") != REPORT_SCHEMA:
        raise FormatError(f"{path}: unsupported report schema {report.get('schema')!r}")
    return report


def serialize_results(report: dict) -> bytes:
    """Canonical bytes of the per-image results (timing fields excluded)."""
    return json.dumps(report["results"], sort_keys=True, separators=(",", ":")).encode()


def run_ablation(base: Campaign, sweep: list[dict]) -> list[dict]:
    """One report per override set, all on the same images and seeds."""
    for ov in sweep:
        bad = set(ov) - SWEEP_KEYS
        if bad:
            raise ValueError(f"sweep may only override {sorted(SWEEP_KEYS)}, got {sorted(bad)}")
    reports = []
    for k, ov in enumerate(sweep):
        cfg = base.config.replace(**ov)
        if cfg.cross_mode:
            log.warning("override %s pairs %s with %s (cross-mode)", ov, cfg.norm.value,
                        cfg.resolved().basis_mode.value)
        out = None
        if base.out:
            stem, ext = os.path.splitext(base.out)
            out = f"{stem}_{k:02d}{ext or '.json'}"
        trace_dir = os.path.join(base.trace_dir, f"sweep_{k:02d}") if base.trace_dir else None
        camp = Campaign(
            dataset=base.dataset, oracle=base.oracle, config=cfg,
            image_count=base.image_count, seeds=base.seeds, out=out, trace_dir=trace_dir,
            workers=base.workers, method=base.method, random_targets=base.random_targets,
            overrides=ov,
        )
        reports.append(run_campaign(camp))
    return reports
