#!/usr/bin/env python3
"""
Run the scene benchmark: delineation against the threshold+skeleton baseline
over seeded synthetic scenes.

Usage: python scripts/run_benchmark.py [--suite recovery|robustness|restart] [--seeds 25]
                                       [--oracle gt|probmap] [--csv results.csv] [--out summary.json]
                                       [--mlflow]

Suites:
  recovery    clean single-component scenes
  robustness  three 7-px gaps per scene
  restart     two-component scenes without branching; restart_eligible marks the
              scenes whose components all clear the restart distance
"""
import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.config import RunConfig  # noqa: E402
from app.curvilinear.connectivity import GroundTruthOracle, ProbabilityMapOracle  # noqa: E402
from app.curvilinear.delineate import Delineator, threshold_skeleton_graph  # noqa: E402
from app.curvilinear.metrics import evaluate  # noqa: E402
from app.curvilinear.raster import skeletonize  # noqa: E402
from app.curvilinear.synth import component_clearance, corrupt, generate_network  # noqa: E402

SUITES: Dict[str, Dict[str, Any]] = {
    "recovery": {},
    "robustness": {"gap_count": 3, "gap_len": 7},
    "restart": {"n_components": 2, "branch_prob": 0.0},
}


def run_scene(cfg: RunConfig, oracle_kind: str, baseline_threshold: float) -> Dict[str, Any]:
    params = cfg.synth_params()
    gt, mask = generate_network(params)
    probmap = corrupt(mask, params)
    clearance = component_clearance(mask)
    dcfg = cfg.delineation_config()
    if oracle_kind == "gt":
        oracle = GroundTruthOracle(skeletonize(mask), dcfg.oracle)
    else:
        oracle = ProbabilityMapOracle(dcfg.oracle)

    t0 = time.time()
    engine = Delineator(probmap, oracle, dcfg)
    traced = engine.run()
    latency_ms = int((time.time() - t0) * 1000)

    ecfg = cfg.eval_config()
    res = evaluate(traced, gt, ecfg)
    base = evaluate(threshold_skeleton_graph(probmap, baseline_threshold), gt, ecfg)
    return {
        "seed": params.seed,
        "P": res.precision,
        "R": res.recall,
        "C": res.connectivity,
        "F_C": res.f_c,
        "baseline_C": base.connectivity,
        "baseline_F_C": base.f_c,
        "wins": res.connectivity > base.connectivity,
        "restarts": engine.state.restarts,
        "restart_eligible": bool(clearance) and min(clearance) > dcfg.restart_distance(),
        "steps": engine.state.steps,
        "segments": res.segments_total,
        "latency_ms": latency_ms,
    }


def run_suite(suite: str, seeds: int, oracle_kind: str, baseline_threshold: float) -> Dict[str, Any]:
    results: List[Dict[str, Any]] = []
    for seed in range(seeds):
        cfg = RunConfig(seed=seed, **SUITES[suite])
        print(f"Scene seed={seed}")
        results.append(run_scene(cfg, oracle_kind, baseline_threshold))

    frame = pd.DataFrame(results)
    latencies = frame["latency_ms"].tolist() if len(frame) else []
    summary = {
        "suite": suite,
        "oracle": oracle_kind,
        "count": len(frame),
        "mean_P": round(float(frame["P"].mean()), 3) if len(frame) else 0.0,
        "mean_C": round(float(frame["C"].mean()), 3) if len(frame) else 0.0,
        "mean_F_C": round(float(frame["F_C"].mean()), 3) if len(frame) else 0.0,
        "mean_baseline_C": round(float(frame["baseline_C"].mean()), 3) if len(frame) else 0.0,
        "win_count": int(frame["wins"].sum()) if len(frame) else 0,
        "restart_eligible": int(frame["restart_eligible"].sum()) if len(frame) else 0,
        "latency_p50_ms": int(statistics.median(latencies)) if latencies else 0,
    }
    return {"summary": summary, "results": frame}


def parse_args(argv: List[str]) -> argparse.Namespace:
    ap = argparse.ArgumentParser()
    ap.add_argument("--suite", choices=sorted(SUITES), default="recovery")
    ap.add_argument("--seeds", type=int, default=25)
    ap.add_argument("--oracle", choices=["gt", "probmap"], default="gt")
    ap.add_argument("--baseline-threshold", type=float, default=0.5)
    ap.add_argument("--csv", help="per-scene results CSV")
    ap.add_argument("--out", help="summary JSON")
    ap.add_argument("--mlflow", action="store_true", help="log the summary to MLflow")
    return ap.parse_args(argv)


def main(argv: List[str]) -> int:
    args = parse_args(argv[1:])
    if args.seeds < 1:
        print("[error] --seeds must be positive", file=sys.stderr)
        return 2

    print(f"Suite: {args.suite}  oracle: {args.oracle}  seeds: {args.seeds}")
    print("-" * 60)
    report = run_suite(args.suite, args.seeds, args.oracle, args.baseline_threshold)

    print("\n" + "=" * 60)
    print("BENCHMARK SUMMARY")
    print("=" * 60)
    for key, value in report["summary"].items():
        print(f"{key:25s}: {value}")

    if args.csv:
        report["results"].to_csv(args.csv, index=False)
        print(f"\nWrote per-scene results to {args.csv}")
    if args.out:
        Path(args.out).write_text(json.dumps(report["summary"], indent=2), encoding="utf-8")
        print(f"Wrote summary to {args.out}")

    if args.mlflow:
        import mlflow

        mlflow.set_tracking_uri(os.getenv("MLFLOW_TRACKING_URI", "mlruns"))
        mlflow.set_experiment("delineation-benchmark")
        with mlflow.start_run(run_name=f"{args.suite}_{args.oracle}"):
            mlflow.log_param("suite", args.suite)
            mlflow.log_param("oracle", args.oracle)
            mlflow.log_param("seeds", args.seeds)
            for key, value in report["summary"].items():
                if isinstance(value, (int, float)):
                    mlflow.log_metric(key, value)
            if args.csv:
                mlflow.log_artifact(args.csv)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv))
