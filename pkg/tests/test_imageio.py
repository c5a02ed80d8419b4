import numpy as np
import pytest

from app.curvilinear.graph import GraphError, NetworkGraph
from app.curvilinear.imageio import (
    PgmError,
    atomic_write,
    decode_pgm,
    dumps_graph,
    encode_pgm,
    read_graph,
    read_mask,
    read_probmap,
    write_graph,
    write_mask,
    write_ppm,
    write_probmap,
)


def test_pgm_bytes_round_trip():
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    data = encode_pgm(pixels)
    assert data.startswith(b"P5\n4 3\n255\n")
    assert np.array_equal(decode_pgm(data), pixels)


def test_header_comments_are_skipped():
    data = b"P5\n# made by hand\n2 1\n# max\n255\n" + bytes([0, 255])
    assert decode_pgm(data).tolist() == [[0, 255]]


@pytest.mark.parametrize(
    "data",
    [
        b"P2\n2 1\n255\n01",
        b"P5\n2 1\n65535\n" + bytes(4),
        b"P5\n2 2\n255\n" + bytes(3),
        b"P5\n2",
        b"P5\nx 1\n255\n" + bytes(2),
    ],
)
def test_malformed_pgm_raises(data):
    with pytest.raises(PgmError):
        decode_pgm(data)


def test_probmap_and_mask_levels(tmp_path):
    prob = np.array([[0.0, 0.5, 1.0], [0.2, 0.8, 127 / 255]])
    write_probmap(tmp_path / "p.pgm", prob)
    back = read_probmap(tmp_path / "p.pgm")
    assert np.allclose(back, prob, atol=0.5 / 255)
    assert back[0, 2] == 1.0
    mask = read_mask(tmp_path / "p.pgm")
    assert mask.tolist() == [[False, True, True], [False, True, False]]

    m = np.array([[True, False], [False, True]])
    write_mask(tmp_path / "m.pgm", m)
    assert np.array_equal(read_mask(tmp_path / "m.pgm"), m)


def test_ppm_header(tmp_path):
    write_ppm(tmp_path / "o.ppm", np.zeros((2, 3, 3), dtype=np.uint8))
    assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n3 2\n255\n")


def test_graph_json_round_trip(tmp_path):
    g = NetworkGraph.build(20, 10, [(9, 19)], [[(0, 0), (0, 1), (1, 2)], [(5, 5), (5, 6)]])
    write_graph(tmp_path / "g.json", g)
    assert read_graph(tmp_path / "g.json") == g
    text = (tmp_path / "g.json").read_text()
    assert text == dumps_graph(g) + "\n"
    assert '"edges":[{"points":[[0,0],[0,1],[1,2]]}' in text


def test_invalid_graph_json(tmp_path):
    (tmp_path / "bad.json").write_text('{"width": 4, "height": 4, "edges": [{"points": [[0, 0, 1]]}]}')
    with pytest.raises(GraphError):
        read_graph(tmp_path / "bad.json")
    (tmp_path / "worse.json").write_text('{"width": 0, "height": 4}')
    with pytest.raises(GraphError):
        read_graph(tmp_path / "worse.json")


def test_atomic_write_needs_existing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        atomic_write(tmp_path / "missing" / "x.bin", b"x")
    atomic_write(tmp_path / "x.bin", b"abc")
    atomic_write(tmp_path / "x.bin", b"def")
    assert (tmp_path / "x.bin").read_bytes() == b"def"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.bin"]
