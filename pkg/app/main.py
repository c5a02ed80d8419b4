"""Command-line entry point: ``python -m app.main <command> [options]``.

Machine-readable results go to standard output as one JSON object per line;
diagnostics go to standard error. Exit status: 0 success, 2 bad input or
usage, 3 delineation safety stop (partial graph still written).
"""
import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.config import RunConfig, load_run_config
from app.curvilinear.connectivity import (
    GroundTruthOracle,
    ProbabilityMapOracle,
    evaluate_oracle,
    oracle_ground_truth,
    sample_centers,
)
from app.curvilinear.delineate import (
    Delineator,
    MaxStepsExceeded,
    TraceState,
    threshold_skeleton_graph,
    trace_report,
)
from app.curvilinear.graph import NetworkGraph, graph_to_raster, raster_to_graph
from app.curvilinear.imageio import (
    atomic_write,
    encode_pgm,
    probmap_bytes,
    read_graph,
    read_mask,
    read_probmap,
    write_graph,
    write_mask,
    write_ppm,
    write_probmap,
)
from app.curvilinear.metrics import EvalResult, evaluate
from app.curvilinear.raster import render_heatmap, skeletonize
from app.curvilinear.synth import corrupt, generate_network
from app.logging_utils import get_logger, set_level
from app.schemas import DetectionRecord, MetricsLine, ParamsEcho, PatchRecord

logger = get_logger(__name__)

DEFAULT_LEVELS = (150, 175, 200)


def emit(line: str) -> None:
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def run_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k) for k in RunConfig.model_fields if hasattr(args, k)}
    return load_run_config(args.config, overrides)


def metrics_line(result: EvalResult, threshold: Optional[float] = None) -> MetricsLine:
    return MetricsLine(
        P=result.precision,
        R=result.recall,
        C=result.connectivity,
        F_R=result.f_r,
        F_C=result.f_c,
        segments_total=result.segments_total,
        segments_ok=result.segments_ok,
        threshold=threshold,
    )


def load_graph_or_mask(path: str) -> NetworkGraph:
    """Graph JSON as is; a PGM mask is skeletonized and vectorized."""
    if Path(path).suffix.lower() == ".pgm":
        return raster_to_graph(skeletonize(read_mask(path)))
    return read_graph(path)


def build_oracle(spec: str, cfg: RunConfig):
    if spec == "probmap":
        return ProbabilityMapOracle(cfg.oracle_config())
    if spec.startswith("gt:") and len(spec) > 3:
        return GroundTruthOracle(skeletonize(read_mask(spec[3:])), cfg.oracle_config())
    raise ValueError(f"oracle must be 'probmap' or 'gt:<mask.pgm>', got {spec!r}")


def overlay(probmap: np.ndarray, graph: NetworkGraph) -> np.ndarray:
    """Grey probability map with the graph burnt in at full intensity."""
    out = probmap_bytes(probmap) // 2
    if not graph.is_empty():
        out[graph_to_raster(graph, graph.width, graph.height)] = 255
    return out


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    out = Path(args.out)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out}")
    params = cfg.synth_params()
    graph, mask = generate_network(params)
    probmap = corrupt(mask, params)
    outputs = {
        "graph": str(out / "gt_graph.json"),
        "mask": str(out / "gt_mask.pgm"),
        "probmap": str(out / "probmap.pgm"),
        "params": str(out / "params.json"),
    }
    write_graph(outputs["graph"], graph)
    write_mask(outputs["mask"], mask)
    write_probmap(outputs["probmap"], probmap)
    echo = ParamsEcho(
        command="gen",
        params=params.model_dump(),
        outputs=outputs,
        nodes=len(graph.nodes),
        edges=len(graph.edges),
        total_length=round(graph.total_length(), 6),
    )
    atomic_write(outputs["params"], (echo.model_dump_json(indent=2) + "\n").encode("utf-8"))
    logger.info({"event": "gen_done", "seed": params.seed, "edges": len(graph.edges)})
    emit(echo.model_dump_json())
    return 0


def _snapshot_writer(probmap: np.ndarray, directory: Path, every: int) -> Callable[[TraceState], None]:
    def on_step(state: TraceState) -> None:
        if state.steps % every:
            return
        path = directory / f"step_{state.steps:06d}.pgm"
        atomic_write(path, encode_pgm(overlay(probmap, state.graph())))

    return on_step


def cmd_trace(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    probmap = read_probmap(args.probmap)
    oracle = build_oracle(args.oracle, cfg)
    if isinstance(oracle, GroundTruthOracle) and oracle.gt_skeleton.shape != probmap.shape:
        raise ValueError(f"dimension mismatch: mask {oracle.gt_skeleton.shape} vs probmap {probmap.shape}")
    on_step = None
    if args.snapshots:
        snap_dir = Path(args.snapshots)
        if not snap_dir.is_dir():
            raise FileNotFoundError(f"snapshot directory does not exist: {snap_dir}")
        on_step = _snapshot_writer(probmap, snap_dir, max(1, args.snapshot_every))
    engine = Delineator(probmap, oracle, cfg.delineation_config(), on_step=on_step)
    status = 0
    try:
        graph = engine.run()
        report = trace_report(engine.state)
    except MaxStepsExceeded as exc:
        graph, report = exc.graph, exc.report
        sys.stderr.write(f"[error] {exc}; partial graph written to {args.out}\n")
        status = 3
    write_graph(args.out, graph)
    if args.report:
        atomic_write(args.report, (report.model_dump_json() + "\n").encode("utf-8"))
    emit(report.model_dump_json())
    return status


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    pred = load_graph_or_mask(args.pred)
    gt = load_graph_or_mask(args.gt)
    result = evaluate(pred, gt, cfg.eval_config())
    if args.segments_csv:
        frame = pd.DataFrame(
            [
                {
                    "index": o.index,
                    "a_row": o.endpoints[0][0],
                    "a_col": o.endpoints[0][1],
                    "b_row": o.endpoints[1][0],
                    "b_col": o.endpoints[1][1],
                    "gt_length": o.gt_length,
                    "pred_length": o.pred_length,
                    "ratio": o.ratio,
                    "ok": o.ok,
                    "reason": o.reason,
                }
                for o in result.segments
            ],
            columns=["index", "a_row", "a_col", "b_row", "b_col", "gt_length", "pred_length", "ratio", "ok", "reason"],
        )
        atomic_write(args.segments_csv, frame.to_csv(index=False).encode("utf-8"))
    emit(metrics_line(result).to_json())
    return 0


def _patch_centers(args: argparse.Namespace, skeleton: np.ndarray, seed: int) -> List[tuple]:
    if args.center is not None:
        return [tuple(args.center)]
    if args.sample is not None:
        return sample_centers(skeleton, args.sample, seed)
    raise ValueError("give --center ROW COL or --sample N")


def cmd_patch_gt(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    ocfg = cfg.oracle_config()
    skeleton = skeletonize(read_mask(args.mask))
    height, width = skeleton.shape
    centers = _patch_centers(args, skeleton, cfg.seed)
    if args.heatmap and len(centers) != 1:
        raise ValueError("--heatmap needs a single center; use --heatmap-dir with --sample")
    heat_dir = Path(args.heatmap_dir) if args.heatmap_dir else None
    if heat_dir is not None and not heat_dir.is_dir():
        raise FileNotFoundError(f"heatmap directory does not exist: {heat_dir}")
    for i, center in enumerate(centers):
        detections = oracle_ground_truth(skeleton, center, ocfg)
        heat_path = args.heatmap or (str(heat_dir / f"heatmap_{i:04d}.pgm") if heat_dir else None)
        if heat_path:
            heat = render_heatmap([d.location for d in detections], cfg.sigma, width, height)
            write_probmap(heat_path, heat)
        record = PatchRecord(
            center=list(center),
            k=ocfg.k,
            s=ocfg.border_side,
            detections=[DetectionRecord(location=list(d.location), confidence=d.confidence) for d in detections],
            heatmap=heat_path,
        )
        emit(record.model_dump_json(exclude_none=True))
    return 0


def cmd_patch_eval(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    ocfg = cfg.oracle_config()
    probmap = read_probmap(args.probmap)
    skeleton = skeletonize(read_mask(args.mask))
    centers = sample_centers(skeleton, args.samples, cfg.seed)
    score = evaluate_oracle(ProbabilityMapOracle(ocfg), probmap, skeleton, centers, ocfg, args.tolerance)
    emit(json.dumps(asdict(score), sort_keys=True))
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    probmap = read_probmap(args.probmap)
    graph = read_graph(args.graph) if args.graph else NetworkGraph.build(probmap.shape[1], probmap.shape[0])
    if graph.shape != probmap.shape:
        raise ValueError(f"dimension mismatch: graph {graph.width}x{graph.height} vs probmap {probmap.shape[1]}x{probmap.shape[0]}")
    out = Path(args.out)
    if out.suffix.lower() == ".ppm":
        grey = probmap_bytes(probmap)
        rgb = np.repeat(grey[:, :, None], 3, axis=2)
        if not graph.is_empty():
            rgb[graph_to_raster(graph, graph.width, graph.height)] = (255, 0, 0)
            for n in graph.nodes:
                rgb[n] = (255, 255, 0)
        write_ppm(out, rgb)
    elif graph.is_empty():
        write_probmap(out, probmap)
    else:
        atomic_write(out, encode_pgm(overlay(probmap, graph)))
    emit(json.dumps({"render": str(out), "edges": len(graph.edges)}))
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = run_config(args)
    probmap = read_probmap(args.probmap)
    gt = load_graph_or_mask(args.gt)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir is not None and not out_dir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out_dir}")
    for level in args.levels:
        if not 0 <= level <= 255:
            raise ValueError(f"threshold level must lie in [0, 255], got {level}")
        threshold = level / 255.0
        graph = threshold_skeleton_graph(probmap, threshold)
        if out_dir is not None:
            write_graph(out_dir / f"baseline_{level}.json", graph)
        emit(metrics_line(evaluate(graph, gt, cfg.eval_config()), threshold).to_json())
    return 0


def _add_oracle_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="patch side (odd)")
    p.add_argument("--s", type=int, help="border-square side (odd, < k)")
    p.add_argument("--tau-occupancy", dest="tau_occupancy", type=float)


def _add_eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-match", dest="d_match", type=float)
    p.add_argument("--connectivity-ratio", dest="connectivity_ratio", type=float)
    p.add_argument("--d-near", dest="d_near", type=float)
    p.add_argument("--symmetric-ratio", dest="symmetric_ratio", action="store_const", const=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curvinet", description="Curvilinear network topology extraction")
    parser.add_argument("--verbose", action="store_true", help="debug logging, including per-step trace counter")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[argparse.Namespace], int], help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file")
        p.set_defaults(handler=handler)
        return p

    p = command("gen", cmd_gen, "generate a synthetic scene")
    p.add_argument("--out", required=True, help="existing output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--components", dest="n_components", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--branch-prob", dest="branch_prob", type=float)
    p.add_argument("--step-len", dest="step_len", type=int)
    p.add_argument("--walk-steps", dest="walk_steps", type=int)
    p.add_argument("--blur-radius", dest="blur_radius", type=int)
    p.add_argument("--noise-amp", dest="noise_amp", type=float)
    p.add_argument("--gap-count", dest="gap_count", type=int)
    p.add_argument("--gap-len", dest="gap_len", type=int)
    p.add_argument("--clutter-count", dest="clutter_count", type=int)

    p = command("trace", cmd_trace, "delineate a probability map")
    p.add_argument("--probmap", required=True)
    p.add_argument("--oracle", default="probmap", help="'probmap' or 'gt:<mask.pgm>'")
    p.add_argument("--out", required=True, help="graph JSON path")
    p.add_argument("--report", help="trace report JSON path")
    p.add_argument("--snapshots", help="directory for numbered overlay PGMs")
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=1)
    _add_oracle_flags(p)
    p.add_argument("--tau-conf", dest="tau_conf", type=float)
    p.add_argument("--r-nbhd", dest="r_nbhd", type=int)
    p.add_argument("--d-restart", dest="d_restart", type=float)
    p.add_argument("--tau-restart", dest="tau_restart", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--complete-tails", dest="complete_tails", action=argparse.BooleanOptionalAction, default=None)

    p = command("eval", cmd_eval, "score a predicted graph against ground truth")
    p.add_argument("--pred", required=True, help="graph JSON or mask PGM")
    p.add_argument("--gt", required=True, help="graph JSON or mask PGM")
    p.add_argument("--segments-csv", dest="segments_csv")
    _add_eval_flags(p)

    p = command("patch-gt", cmd_patch_gt, "export patch ground truth")
    p.add_argument("--mask", required=True)
    p.add_argument("--center", nargs=2, type=int, metavar=("ROW", "COL"))
    p.add_argument("--sample", type=int, help="number of seeded on-structure centers")
    p.add_argument("--seed", type=int)
    p.add_argument("--heatmap", help="heatmap PGM for a single center")
    p.add_argument("--heatmap-dir", dest="heatmap_dir")
    p.add_argument("--sigma", type=float)
    _add_oracle_flags(p)

    p = command("patch-eval", cmd_patch_eval, "score the probability-map oracle against patch ground truth")
    p.add_argument("--probmap", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--samples", type=int, default=130)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=int, default=1)
    _add_oracle_flags(p)

    p = command("render", cmd_render, "overlay a graph on a probability map")
    p.add_argument("--probmap", required=True)
    p.add_argument("--graph")
    p.add_argument("--out", required=True, help=".pgm or .ppm")

    p = command("baseline", cmd_baseline, "threshold+skeleton baseline at several levels")
    p.add_argument("--probmap", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--levels", nargs="+", type=int, default=list(DEFAULT_LEVELS), help="byte levels 0-255")
    p.add_argument("--out-dir", dest="out_dir")
    _add_eval_flags(p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    set_level("DEBUG" if args.verbose else "INFO")
    try:
        return args.handler(args)
    except (ValueError, OSError) as exc:
        logger.error({"event": "command_failed", "command": args.command, "error": str(exc)})
        sys.stderr.write(f"[error] {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
