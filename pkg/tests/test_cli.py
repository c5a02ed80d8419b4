import json

import numpy as np
import pytest

from app.curvilinear.graph import NetworkGraph
from app.curvilinear.imageio import read_graph, read_mask, read_probmap, write_graph, write_mask, write_probmap
from app.main import main
from conftest import hline, mask_from_points


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


@pytest.fixture
def scene(tmp_path, capsys):
    code, lines = run(capsys, "gen", "--out", str(tmp_path), "--seed", "1", "--components", "2")
    assert code == 0
    return tmp_path, lines[0]


def test_gen_writes_all_artifacts(scene):
    out, echo = scene
    for name in ("gt_graph.json", "gt_mask.pgm", "probmap.pgm", "params.json"):
        assert (out / name).exists()
    assert echo["params"]["seed"] == 1 and echo["params"]["n_components"] == 2
    mask = read_mask(out / "gt_mask.pgm")
    assert np.array_equal(read_probmap(out / "probmap.pgm"), mask.astype(np.float64))
    assert json.loads((out / "params.json").read_text())["edges"] == echo["edges"]


def test_gen_missing_output_directory(tmp_path, capsys):
    assert main(["gen", "--out", str(tmp_path / "nope")]) == 2
    assert "[error] output directory does not exist" in capsys.readouterr().err


def test_gen_rejects_invalid_params(tmp_path, capsys):
    code, _ = run(capsys, "gen", "--out", str(tmp_path), "--width", "16")
    assert code == 2


def test_trace_and_eval_pipeline(scene, capsys):
    out, _ = scene
    code, lines = run(
        capsys, "trace", "--probmap", str(out / "probmap.pgm"), "--oracle", f"gt:{out / 'gt_mask.pgm'}",
        "--out", str(out / "pred.json"), "--report", str(out / "report.json"),
    )
    assert code == 0
    assert lines[0]["starts"] and lines[0]["steps"] > 0
    assert len(read_graph(out / "pred.json").edges) >= 1
    assert json.loads((out / "report.json").read_text()) == lines[0]

    code, lines = run(
        capsys, "eval", "--pred", str(out / "pred.json"), "--gt", str(out / "gt_graph.json"),
        "--segments-csv", str(out / "segments.csv"),
    )
    assert code == 0
    metrics = lines[0]
    assert set(metrics) == {"P", "R", "C", "F_R", "F_C", "segments_total", "segments_ok"}
    assert metrics["P"] > 0.9
    header = (out / "segments.csv").read_text().splitlines()[0]
    assert header.startswith("index,a_row,a_col")


def test_trace_twice_is_byte_identical(scene, capsys):
    out, _ = scene
    for name in ("a.json", "b.json"):
        code, _ = run(capsys, "trace", "--probmap", str(out / "probmap.pgm"), "--out", str(out / name))
        assert code == 0
    assert (out / "a.json").read_bytes() == (out / "b.json").read_bytes()


def test_trace_all_zero_map(tmp_path, capsys):
    write_probmap(tmp_path / "zero.pgm", np.zeros((40, 50)))
    code, lines = run(capsys, "trace", "--probmap", str(tmp_path / "zero.pgm"), "--out", str(tmp_path / "g.json"))
    assert code == 0
    assert read_graph(tmp_path / "g.json").is_empty()
    assert lines[0]["steps"] == 0


def test_trace_unreadable_input(tmp_path, capsys):
    (tmp_path / "bad.pgm").write_bytes(b"not a pgm")
    code, _ = run(capsys, "trace", "--probmap", str(tmp_path / "bad.pgm"), "--out", str(tmp_path / "g.json"))
    assert code == 2
    code, _ = run(capsys, "trace", "--probmap", str(tmp_path / "missing.pgm"), "--out", str(tmp_path / "g.json"))
    assert code == 2


def test_trace_bad_oracle_spec(scene, capsys):
    out, _ = scene
    code, _ = run(capsys, "trace", "--probmap", str(out / "probmap.pgm"), "--oracle", "cnn", "--out", str(out / "g.json"))
    assert code == 2


def test_trace_safety_stop_writes_partial_graph(scene, capsys):
    out, _ = scene
    code, lines = run(
        capsys, "trace", "--probmap", str(out / "probmap.pgm"), "--out", str(out / "partial.json"), "--max-steps", "1",
    )
    assert code == 3
    assert lines[0]["steps"] == 1
    assert len(read_graph(out / "partial.json").edges) >= 1


def test_trace_snapshots(scene, capsys):
    out, _ = scene
    snaps = out / "snaps"
    snaps.mkdir()
    code, lines = run(
        capsys, "trace", "--probmap", str(out / "probmap.pgm"), "--out", str(out / "g.json"),
        "--snapshots", str(snaps), "--snapshot-every", "5",
    )
    assert code == 0
    assert len(list(snaps.glob("step_*.pgm"))) == lines[0]["steps"] // 5
    assert (snaps / "step_000005.pgm").exists()


def test_eval_identity_and_mismatch(tmp_path, capsys, y_graph):
    write_graph(tmp_path / "g.json", y_graph)
    code, lines = run(capsys, "eval", "--pred", str(tmp_path / "g.json"), "--gt", str(tmp_path / "g.json"))
    assert code == 0
    assert all(lines[0][k] == 1.0 for k in ("P", "R", "C", "F_R", "F_C"))

    write_graph(tmp_path / "h.json", NetworkGraph.build(41, 40, [], [[(5, 0), (5, 1)]]))
    code, _ = run(capsys, "eval", "--pred", str(tmp_path / "h.json"), "--gt", str(tmp_path / "g.json"))
    assert code == 2


def test_eval_accepts_masks(tmp_path, capsys):
    mask = mask_from_points(hline(10, 2, 40), 20, 50)
    write_mask(tmp_path / "m.pgm", mask)
    code, lines = run(capsys, "eval", "--pred", str(tmp_path / "m.pgm"), "--gt", str(tmp_path / "m.pgm"))
    assert code == 0 and lines[0]["C"] == 1.0


def test_patch_gt_single_center_and_heatmap(tmp_path, capsys):
    write_mask(tmp_path / "m.pgm", mask_from_points(hline(10, 0, 20), 21, 21))
    code, lines = run(
        capsys, "patch-gt", "--mask", str(tmp_path / "m.pgm"), "--center", "10", "10", "--k", "9", "--s", "7",
        "--heatmap", str(tmp_path / "h.pgm"),
    )
    assert code == 0
    assert [d["location"] for d in lines[0]["detections"]] == [[10, 7], [10, 13]]
    heat = read_probmap(tmp_path / "h.pgm")
    assert heat[10, 7] == 1.0 and heat[10, 13] == 1.0


def test_patch_gt_sampling(tmp_path, capsys):
    mask = mask_from_points(hline(30, 0, 199) + [(r, 100) for r in range(60)], 60, 200)
    write_mask(tmp_path / "m.pgm", mask)
    code, lines = run(capsys, "patch-gt", "--mask", str(tmp_path / "m.pgm"), "--sample", "130", "--seed", "4")
    assert code == 0
    assert len(lines) == 130
    assert all(mask[tuple(line["center"])] for line in lines)


def test_patch_eval_on_clean_map(tmp_path, capsys):
    mask = mask_from_points(hline(30, 0, 99), 60, 100)
    write_mask(tmp_path / "m.pgm", mask)
    write_probmap(tmp_path / "p.pgm", mask.astype(np.float64))
    code, lines = run(
        capsys, "patch-eval", "--probmap", str(tmp_path / "p.pgm"), "--mask", str(tmp_path / "m.pgm"), "--samples", "20",
    )
    assert code == 0
    assert lines[0]["precision"] == 1.0 and lines[0]["recall"] == 1.0


def test_render_empty_graph_passes_probmap_through(scene, tmp_path, capsys):
    out, _ = scene
    code, _ = run(capsys, "render", "--probmap", str(out / "probmap.pgm"), "--out", str(out / "r.pgm"))
    assert code == 0
    assert (out / "r.pgm").read_bytes() == (out / "probmap.pgm").read_bytes()

    code, _ = run(
        capsys, "render", "--probmap", str(out / "probmap.pgm"), "--graph", str(out / "gt_graph.json"),
        "--out", str(out / "r.ppm"),
    )
    assert code == 0
    assert (out / "r.ppm").read_bytes().startswith(b"P6\n256 256\n255\n")


def test_baseline_sweep(scene, capsys):
    out, _ = scene
    code, lines = run(capsys, "baseline", "--probmap", str(out / "probmap.pgm"), "--gt", str(out / "gt_graph.json"))
    assert code == 0
    assert [round(line["threshold"] * 255) for line in lines] == [150, 175, 200]
    assert all(line["C"] > 0.0 for line in lines)


def test_config_file_and_unknown_key(scene, tmp_path, capsys):
    out, _ = scene
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tighter patches\nk=21\n")
    code, _ = run(capsys, "trace", "--config", str(cfg), "--probmap", str(out / "probmap.pgm"), "--out", str(out / "g.json"))
    assert code == 0
    cfg.write_text("bogus=1\n")
    code, _ = run(capsys, "trace", "--config", str(cfg), "--probmap", str(out / "probmap.pgm"), "--out", str(out / "g.json"))
    assert code == 2


def test_usage_error_exit_code(capsys):
    assert main(["frobnicate"]) == 2
