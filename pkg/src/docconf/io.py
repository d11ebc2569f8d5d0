"""File formats: probability maps, polygon documents, manifests and CSV tables.

A PMAP file is a 16-byte little-endian header (magic ``PMAP``, u16 format
version, u16 reserved, u32 height, u32 width) followed by ``height * width``
float32 values in row-major order. Portable graymaps (P5 and P2) are
accepted as well and scaled by their maximum value.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import InvalidGeometryError, Polygon, Rect, bounding_rect, rasterize
from .metrics import GroundTruth, Scene
from .postprocess import DetectedObject, Prediction, ProbabilityMap

PMAP_MAGIC = b"PMAP"
PMAP_VERSION = 1
_PMAP_HEADER = struct.Struct("<4sHHII")


class ParseError(ValueError):
    """Malformed binary or text input; ``offset`` is the byte position, if known."""

    def __init__(self, path, message: str, offset: Optional[int] = None):
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}{where}: {message}")
        self.path = str(path)
        self.offset = offset


class SchemaError(ValueError):
    """A JSON document does not follow its schema; ``field`` is a ``$``-rooted path."""

    def __init__(self, path, field: str, message: str):
        super().__init__(f"{path}: {field}: {message}")
        self.path = str(path)
        self.field = field


class ManifestError(ValueError):
    def __init__(self, path, problems: Sequence[str]):
        lines = "\n  ".join(problems)
        super().__init__(f"{path}: {len(problems)} problem(s)\n  {lines}")
        self.problems = list(problems)


# -- probability maps ------------------------------------------------------


def encode_probability_map(m: ProbabilityMap) -> bytes:
    header = _PMAP_HEADER.pack(PMAP_MAGIC, PMAP_VERSION, 0, m.height, m.width)
    return header + m.values.astype("<f4").tobytes()


def save_probability_map(m: ProbabilityMap, path) -> None:
    Path(path).write_bytes(encode_probability_map(m))


def _decode_pmap(data: bytes, path) -> ProbabilityMap:
    if len(data) < _PMAP_HEADER.size:
        raise ParseError(path, f"header needs {_PMAP_HEADER.size} bytes, file has {len(data)}", len(data))
    magic, version, _, h, w = _PMAP_HEADER.unpack_from(data)
    if version != PMAP_VERSION:
        raise ParseError(path, f"unsupported format version {version}", 4)
    if h < 1 or w < 1:
        raise ParseError(path, f"empty map size {h}x{w}", 8)
    expected = _PMAP_HEADER.size + 4 * h * w
    if len(data) != expected:
        raise ParseError(
            path, f"payload size mismatch: header says {h}x{w} ({expected} bytes), file has {len(data)}",
            min(len(data), expected),
        )
    values = np.frombuffer(data, dtype="<f4", offset=_PMAP_HEADER.size).astype(np.float64)
    bad = np.flatnonzero(~((values >= 0.0) & (values <= 1.0)))
    if len(bad):
        i = int(bad[0])
        raise ParseError(path, f"value {values[i]!r} outside [0, 1]", _PMAP_HEADER.size + 4 * i)
    return ProbabilityMap(values.reshape(h, w))


def _pgm_tokens(data: bytes, count: int, pos: int, path) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated integers, skipping ``#`` comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos : pos + 1].isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            what = "end of file" if pos >= n else f"byte {data[pos:pos + 1]!r}"
            raise ParseError(path, f"expected an integer, found {what}", pos)
        out.append(int(data[start:pos]))
    return out, pos


def _decode_pgm(data: bytes, path) -> ProbabilityMap:
    binary = data[:2] == b"P5"
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2, path)
    if w < 1 or h < 1:
        raise ParseError(path, f"empty graymap size {w}x{h}", 2)
    if not 1 <= maxval <= 255:
        raise ParseError(path, f"only 8-bit graymaps are supported, maxval is {maxval}", pos)
    if binary:
        pos += 1  # single whitespace byte after the header
        if len(data) - pos != w * h:
            raise ParseError(path, f"payload size mismatch: expected {w * h} bytes, found {len(data) - pos}", pos)
        pixels = np.frombuffer(data, dtype=np.uint8, offset=pos).astype(np.float64)
    else:
        pixels_list, _ = _pgm_tokens(data, w * h, pos, path)
        pixels = np.asarray(pixels_list, dtype=np.float64)
    over = np.flatnonzero(pixels > maxval)
    if len(over):
        i = int(over[0])
        # Text graymaps have no fixed pixel offsets.
        where = pos + i if binary else None
        raise ParseError(path, f"pixel {i} value {int(pixels[i])} exceeds maxval {maxval}", where)
    return ProbabilityMap((pixels / maxval).reshape(h, w))


def load_probability_map(path) -> ProbabilityMap:
    data = Path(path).read_bytes()
    if data[:4] == PMAP_MAGIC:
        return _decode_pmap(data, path)
    if data[:2] in (b"P5", b"P2"):
        return _decode_pgm(data, path)
    raise ParseError(path, f"unknown magic {data[:4]!r}; expected b'PMAP' or a P5/P2 graymap", 0)


# -- polygon documents -----------------------------------------------------


def _scene_document(scene: Scene) -> dict:
    doc = {"image_id": scene.image_id, "height": scene.height, "width": scene.width}
    if isinstance(scene, Prediction):
        doc["filtered_pixels"] = scene.filtered_pixels
        doc["objects"] = [
            {
                "polygon": [[v.x, v.y] for v in o.polygon.vertices],
                "mean_prob": o.mean_prob,
                "pixel_area": o.pixel_area,
                "bbox": [o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max],
            }
            for o in scene.objects
        ]
    else:
        doc["objects"] = [{"polygon": [[v.x, v.y] for v in p.vertices]} for p in scene.objects]
    return doc


def dump_polygons(scene: Scene, meta: Optional[dict] = None) -> str:
    # Python's float repr round-trips exactly, so coordinates survive unchanged.
    doc = _scene_document(scene)
    if meta:
        doc["meta"] = meta
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_polygons(scene: Scene, path, meta: Optional[dict] = None) -> None:
    Path(path).write_text(dump_polygons(scene, meta), encoding="utf-8")


def _field(doc: dict, key: str, kind, where: str, path, required: bool = True):
    if key not in doc:
        if required:
            raise SchemaError(path, f"{where}.{key}", "required field is missing")
        return None
    value = doc[key]
    ok = isinstance(value, kind) and not (kind is not bool and isinstance(value, bool))
    if not ok:
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise SchemaError(path, f"{where}.{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _parse_polygon(coords, where: str, path) -> Polygon:
    if not isinstance(coords, list):
        raise SchemaError(path, where, "expected a list of [x, y] pairs")
    for i, c in enumerate(coords):
        if (
            not isinstance(c, list)
            or len(c) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in c)
        ):
            raise SchemaError(path, f"{where}[{i}]", "expected an [x, y] pair of numbers")
    try:
        return Polygon.from_coords(coords)
    except InvalidGeometryError as exc:
        raise InvalidGeometryError(f"{path}: {where}: {exc}") from None


def parse_polygons(doc, path="<document>", kind: str = "auto") -> Scene:
    """Build a Prediction or GroundTruth from a decoded polygon document.

    ``kind`` is "prediction", "ground_truth" or "auto" (a prediction when
    any object carries ``mean_prob``).
    """
    if kind not in ("auto", "prediction", "ground_truth"):
        raise ValueError(f"unknown kind {kind!r}")
    if not isinstance(doc, dict):
        raise SchemaError(path, "$", "expected an object")
    image_id = _field(doc, "image_id", str, "$", path)
    height = _field(doc, "height", int, "$", path)
    width = _field(doc, "width", int, "$", path)
    if height < 1 or width < 1:
        raise SchemaError(path, "$.height" if height < 1 else "$.width", "must be >= 1")
    objects = _field(doc, "objects", list, "$", path)
    for i, o in enumerate(objects):
        if not isinstance(o, dict):
            raise SchemaError(path, f"$.objects[{i}]", "expected an object")
    if kind == "auto":
        kind = "prediction" if any("mean_prob" in o for o in objects) else "ground_truth"
    polygons = [
        _parse_polygon(_field(o, "polygon", list, f"$.objects[{i}]", path), f"$.objects[{i}].polygon", path)
        for i, o in enumerate(objects)
    ]
    if kind == "ground_truth":
        return GroundTruth(image_id, height, width, tuple(polygons))

    detected = []
    for i, (o, poly) in enumerate(zip(objects, polygons)):
        where = f"$.objects[{i}]"
        prob = float(_field(o, "mean_prob", (int, float), where, path))
        if not 0.0 <= prob <= 1.0:
            raise SchemaError(path, f"{where}.mean_prob", "must lie in [0, 1]")
        area = _field(o, "pixel_area", int, where, path, required=False)
        if area is None:
            area = rasterize(poly, height, width).count
        box = _field(o, "bbox", list, where, path, required=False)
        if box is None:
            rect = bounding_rect(poly)
        else:
            if len(box) != 4 or not all(isinstance(v, int) and not isinstance(v, bool) for v in box):
                raise SchemaError(path, f"{where}.bbox", "expected [x_min, y_min, x_max, y_max] integers")
            rect = Rect(*box)
        detected.append(DetectedObject(poly, rect, area, prob))
    filtered = _field(doc, "filtered_pixels", int, "$", path, required=False) or 0
    return Prediction(image_id, height, width, tuple(detected), filtered)


def load_polygons(path, kind: str = "auto") -> Scene:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", exc.pos) from None
    return parse_polygons(doc, path, kind)


# -- manifests -------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    """One image. ``maps[0]`` is the primary prediction; all maps form the ensemble.

    ``predictions``, when present, are polygon files parallel to ``maps``
    and take the place of re-extracting them.
    """

    image_id: str
    height: int
    width: int
    maps: tuple[Path, ...] = ()
    ground_truth: Optional[Path] = None
    predictions: tuple[Path, ...] = ()

    @property
    def n_members(self) -> int:
        return max(len(self.maps), len(self.predictions))


@dataclass(frozen=True)
class Manifest:
    path: Path
    entries: tuple[ManifestEntry, ...]

    @property
    def root(self) -> Path:
        return self.path.parent


def _relative(p: Path, root: Path) -> str:
    return Path(os.path.relpath(p, root)).as_posix()


def manifest_document(entries: Iterable[ManifestEntry], root) -> dict:
    root = Path(root)
    rows = []
    for e in entries:
        row = {"image_id": e.image_id, "height": e.height, "width": e.width}
        if e.maps:
            row["maps"] = [_relative(p, root) for p in e.maps]
        if e.predictions:
            row["predictions"] = [_relative(p, root) for p in e.predictions]
        if e.ground_truth is not None:
            row["ground_truth"] = _relative(e.ground_truth, root)
        rows.append(row)
    return {"entries": rows}


def save_manifest(entries: Sequence[ManifestEntry], path, meta: Optional[dict] = None) -> None:
    path = Path(path)
    doc = manifest_document(entries, path.parent)
    if meta:
        doc["meta"] = meta
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def load_manifest(path) -> Manifest:
    """Parse and fully validate a manifest; every problem is reported at once."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON: {exc.msg}", exc.pos) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ManifestError(path, ["$.entries: expected a list of entries"])
    root = path.parent
    problems: list[str] = []
    entries = []
    seen: dict[str, int] = {}
    for i, row in enumerate(doc["entries"]):
        where = f"$.entries[{i}]"
        if not isinstance(row, dict):
            problems.append(f"{where}: expected an object")
            continue
        image_id = row.get("image_id")
        if not isinstance(image_id, str) or not image_id:
            problems.append(f"{where}.image_id: expected a non-empty string")
        elif image_id in seen:
            problems.append(f"{where}.image_id: duplicate id {image_id!r} (first at entry {seen[image_id]})")
        else:
            seen[image_id] = i
        for key in ("height", "width"):
            if not _is_int(row.get(key)) or row[key] < 1:
                problems.append(f"{where}.{key}: expected a positive integer")
        files = {}
        for key in ("maps", "predictions"):
            value = row.get(key, [])
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                problems.append(f"{where}.{key}: expected a list of paths")
                value = []
            files[key] = tuple(root / v for v in value)
        if not files["maps"] and not files["predictions"]:
            problems.append(f"{where}: needs at least one of 'maps' or 'predictions'")
        if files["maps"] and files["predictions"] and len(files["maps"]) != len(files["predictions"]):
            problems.append(f"{where}: 'maps' and 'predictions' differ in length")
        gt = row.get("ground_truth")
        if gt is not None and not isinstance(gt, str):
            problems.append(f"{where}.ground_truth: expected a path")
            gt = None
        gt_path = root / gt if gt is not None else None
        for p in files["maps"] + files["predictions"] + ((gt_path,) if gt_path else ()):
            if not p.is_file():
                problems.append(f"{where}: missing file {_relative(p, root)}")
        if not problems:
            entries.append(
                ManifestEntry(image_id, row["height"], row["width"], files["maps"], gt_path, files["predictions"])
            )
    if problems:
        raise ManifestError(path, problems)
    if not entries:
        raise ManifestError(path, ["$.entries: manifest lists no images"])
    return Manifest(path, tuple(entries))


# -- CSV tables ------------------------------------------------------------


def config_digest(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def render_csv(
    columns: Sequence[str],
    rows: Iterable[Sequence],
    meta: dict,
) -> str:
    """CSV text preceded by ``# key: value`` comment lines, in ``meta`` order."""
    buf = io.StringIO()
    for key, value in meta.items():
        if value is not None:
            buf.write(f"# {key}: {format_value(value)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], meta: dict) -> None:
    Path(path).write_text(render_csv(columns, rows, meta), encoding="utf-8")


def read_csv(path) -> tuple[dict, list[dict]]:
    """Comment-header metadata and the table rows as dicts of strings."""
    meta = {}
    body = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        else:
            body.append(line)
    if not body:
        raise ParseError(path, "no header row")
    return meta, list(csv.DictReader(body))
