"""PGM/PPM rasters and graph JSON on disk.

Rasters are binary 8-bit netpbm: probability = byte / 255, mask-true =
byte >= 128. Every writer goes through :func:`atomic_write` (temp file in
the target directory, then rename).
"""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.schemas import EdgeDocument, GraphDocument

from .graph import GraphError, NetworkGraph
from .raster import BinaryMask, ProbabilityMap

PathLike = Union[str, Path]

MASK_LEVEL = 128


class PgmError(ValueError):
    pass


def atomic_write(path: PathLike, data: bytes) -> None:
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {path.parent}")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header_tokens(data: bytes, count: int) -> Tuple[list, int]:
    """Read `count` whitespace-separated header tokens, skipping # comments."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i >= len(data):
            raise PgmError("truncated header")
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def decode_pgm(data: bytes) -> np.ndarray:
    tokens, offset = _header_tokens(data, 4)
    if tokens[0] != b"P5":
        raise PgmError(f"unsupported magic {tokens[0]!r}; only binary P5 is read")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmError(f"bad header values {tokens[1:]}") from exc
    if width <= 0 or height <= 0:
        raise PgmError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PgmError(f"only 8-bit PGM (maxval 255) is supported, got {maxval}")
    body = data[offset : offset + width * height]
    if len(body) != width * height:
        raise PgmError(f"expected {width * height} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def read_pgm(path: PathLike) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def read_probmap(path: PathLike) -> ProbabilityMap:
    return read_pgm(path).astype(np.float64) / 255.0


def read_mask(path: PathLike) -> BinaryMask:
    return read_pgm(path) >= MASK_LEVEL


def probmap_bytes(probmap: ProbabilityMap) -> np.ndarray:
    return np.rint(np.clip(probmap, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_probmap(path: PathLike, probmap: ProbabilityMap) -> None:
    atomic_write(path, encode_pgm(probmap_bytes(probmap)))


def write_mask(path: PathLike, mask: BinaryMask) -> None:
    atomic_write(path, encode_pgm(np.where(mask, 255, 0)))


def write_ppm(path: PathLike, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    atomic_write(path, b"P6\n%d %d\n255\n" % (w, h) + rgb.tobytes())


def graph_to_document(g: NetworkGraph) -> GraphDocument:
    return GraphDocument(
        width=g.width,
        height=g.height,
        nodes=[list(n) for n in g.nodes],
        edges=[EdgeDocument(points=[list(p) for p in e]) for e in g.edges],
    )


def document_to_graph(doc: GraphDocument) -> NetworkGraph:
    for i, e in enumerate(doc.edges):
        if any(len(p) != 2 for p in e.points):
            raise GraphError(f"edge {i}: points must be [row, col] pairs")
    if any(len(n) != 2 for n in doc.nodes):
        raise GraphError("nodes must be [row, col] pairs")
    return NetworkGraph.build(
        doc.width,
        doc.height,
        [tuple(n) for n in doc.nodes],
        [[tuple(p) for p in e.points] for e in doc.edges],
    )


def dumps_graph(g: NetworkGraph) -> str:
    return graph_to_document(g).model_dump_json()


def write_graph(path: PathLike, g: NetworkGraph) -> None:
    atomic_write(path, (dumps_graph(g) + "\n").encode("utf-8"))


def read_graph(path: PathLike) -> NetworkGraph:
    try:
        doc = GraphDocument.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise GraphError(f"invalid graph JSON in {path}: {exc.error_count()} error(s)") from exc
    return document_to_graph(doc)
