"""File formats: the DPT1 dense-map container and the JSON/text sidecars.

DPT1 record layout (little-endian throughout):

    bytes 0..3    magic "DPT1"
    bytes 4..15   u32 height, u32 width, u32 channels
    byte  16      u8 map kind (1=quat, 2=direction, 3=depth, 4=scores)
    then          height*width*channels float32, row-major, channel-last

A dense-maps file is four DPT1 records back to back (quat, direction,
depth, scores).  Read-after-write is bit-identical.

JSON sidecars: intrinsics {fx, fy, cx, cy}; ground truth {frame_id,
objects: [{class_id, quaternion: [w,x,y,z], translation: [x,y,z]}]};
object-model metadata {class_id, name, symmetric} next to a plain-text
"x y z" point file.
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import quat
from .errors import FormatError, SchemaError
from .hough import CameraIntrinsics, DenseMaps
from .losses import ObjectModel
from .metrics import Pose

CSV_HEADER = "frame_id,class_id,add,adds,rot_p,rot_s,trans_err"

MAGIC = b"DPT1"
KIND_QUAT, KIND_DIRECTION, KIND_DEPTH, KIND_SCORES = 1, 2, 3, 4
_KIND_CHANNELS = {KIND_QUAT: 4, KIND_DIRECTION: 2, KIND_DEPTH: 1}
_HEADER = struct.Struct("<4sIIIB")


@dataclass
class SceneGroundTruth:
    """Ground-truth poses of one frame; class ids are unique per frame."""
    frame_id: str
    objects: list  # [(class_id, Pose)]
    intrinsics: CameraIntrinsics | None = None

    def __post_init__(self):
        ids = [c for c, _ in self.objects]
        if len(ids) != len(set(ids)):
            raise SchemaError("duplicate class_id; each object appears at most once per frame",
                              path="objects")


def write_map(fh, array, kind):
    """Append one DPT1 record for an (H, W, C) float32 array."""
    array = np.ascontiguousarray(array, dtype="<f4")
    if array.ndim != 3:
        raise ValueError(f"expected an (H, W, C) array, got shape {array.shape}")
    h, w, c = array.shape
    expected = _KIND_CHANNELS.get(kind)
    if expected is not None and c != expected:
        raise FormatError(f"map kind {kind} requires {expected} channels, got {c}")
    if kind == KIND_SCORES and c < 2:
        raise FormatError(f"score maps need at least 2 channels, got {c}")
    fh.write(_HEADER.pack(MAGIC, h, w, c, kind))
    fh.write(array.tobytes())


def read_map(fh):
    """Read one DPT1 record; returns (array, kind) or None at clean EOF."""
    offset = fh.tell()
    header = fh.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise FormatError(f"truncated header: expected {_HEADER.size} bytes, "
                          f"got {len(header)}", offset=offset)
    magic, h, w, c, kind = _HEADER.unpack(header)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=offset)
    expected = _KIND_CHANNELS.get(kind)
    if kind not in (KIND_QUAT, KIND_DIRECTION, KIND_DEPTH, KIND_SCORES):
        raise FormatError(f"unknown map kind {kind}", offset=offset + 16)
    if expected is not None and c != expected:
        raise FormatError(f"map kind {kind} requires {expected} channels, got {c}",
                          offset=offset + 12)
    if kind == KIND_SCORES and c < 2:
        raise FormatError(f"score maps need at least 2 channels, got {c}",
                          offset=offset + 12)
    payload_offset = offset + _HEADER.size
    nbytes = h * w * c * 4
    payload = fh.read(nbytes)
    if len(payload) < nbytes:
        raise FormatError(f"truncated payload: expected {nbytes} bytes, "
                          f"got {len(payload)}", offset=payload_offset + len(payload))
    array = np.frombuffer(payload, dtype="<f4").reshape(h, w, c).copy()
    return array, kind


def write_dense(path, maps):
    """Write a DenseMaps bundle as four DPT1 records."""
    with open(path, "wb") as fh:
        write_map(fh, maps.quat, KIND_QUAT)
        write_map(fh, maps.direction, KIND_DIRECTION)
        write_map(fh, maps.depth[:, :, None], KIND_DEPTH)
        write_map(fh, maps.scores, KIND_SCORES)


def read_dense(path, log_depth=False):
    """Read a DenseMaps bundle; records may appear in any order but all
    four kinds must be present exactly once with consistent H and W.

    ``log_depth=True`` exponentiates the depth record on load, for maps
    produced by pipelines that store log(z).
    """
    records = {}
    shape = None
    with open(path, "rb") as fh:
        while True:
            rec = read_map(fh)
            if rec is None:
                break
            array, kind = rec
            if kind in records:
                raise FormatError(f"duplicate map kind {kind} in {path}")
            if shape is None:
                shape = array.shape[:2]
            elif array.shape[:2] != shape:
                raise FormatError(f"inconsistent map shapes in {path}: "
                                  f"{array.shape[:2]} vs {shape}")
            records[kind] = array
    missing = {KIND_QUAT, KIND_DIRECTION, KIND_DEPTH, KIND_SCORES} - set(records)
    if missing:
        raise FormatError(f"missing map kinds {sorted(missing)} in {path}")
    depth = records[KIND_DEPTH][:, :, 0]
    if log_depth:
        depth = np.exp(depth.astype(float)).astype("<f4")
    return DenseMaps(quat=records[KIND_QUAT], direction=records[KIND_DIRECTION],
                     depth=depth, scores=records[KIND_SCORES])


def _require(obj, key, path, types):
    if key not in obj:
        raise SchemaError("missing required field", path=f"{path}.{key}")
    value = obj[key]
    allowed = types if isinstance(types, tuple) else (types,)
    names = "/".join(t.__name__ for t in allowed)
    if isinstance(value, bool) and bool not in allowed:
        raise SchemaError(f"expected {names}, got bool", path=f"{path}.{key}")
    if not isinstance(value, allowed):
        raise SchemaError(f"expected {names}, got {type(value).__name__}",
                          path=f"{path}.{key}")
    return value


def _number_list(obj, key, path, length):
    value = _require(obj, key, path, list)
    if len(value) != length or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                       for x in value):
        raise SchemaError(f"expected {length} numbers", path=f"{path}.{key}")
    return [float(x) for x in value]


def read_intrinsics(path):
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SchemaError("expected a JSON object", path="intrinsics")
    values = {k: _require(doc, k, "intrinsics", (int, float)) for k in ("fx", "fy", "cx", "cy")}
    return CameraIntrinsics(**{k: float(v) for k, v in values.items()})


def write_intrinsics(path, intrinsics):
    with open(path, "w") as fh:
        json.dump({"fx": intrinsics.fx, "fy": intrinsics.fy,
                   "cx": intrinsics.cx, "cy": intrinsics.cy}, fh, indent=2)
        fh.write("\n")


def parse_pose_object(obj, path):
    """Parse one {class_id, quaternion, translation} JSON object; non-unit
    quaternions are accepted with a normalization warning."""
    class_id = _require(obj, "class_id", path, int)
    q = np.array(_number_list(obj, "quaternion", path, 4))
    t = np.array(_number_list(obj, "translation", path, 3))
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > quat.UNIT_TOL:
        if norm < quat.DEGENERATE_NORM:
            raise SchemaError("quaternion has zero norm", path=f"{path}.quaternion")
        warnings.warn(f"{path}.quaternion has norm {norm:.6g}; normalizing")
        q = q / norm
    return int(class_id), Pose(q, t)


def read_gt(path):
    """Read a ground-truth frame document."""
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SchemaError("expected a JSON object", path="gt")
    frame_id = _require(doc, "frame_id", "gt", str)
    objects = _require(doc, "objects", "gt", list)
    parsed = []
    for i, obj in enumerate(objects):
        if not isinstance(obj, dict):
            raise SchemaError("expected a JSON object", path=f"gt.objects[{i}]")
        parsed.append(parse_pose_object(obj, f"gt.objects[{i}]"))
    return SceneGroundTruth(frame_id=frame_id, objects=parsed)


def write_gt(path, gt):
    doc = {"frame_id": gt.frame_id,
           "objects": [{"class_id": c,
                        "quaternion": [float(x) for x in p.quaternion],
                        "translation": [float(x) for x in p.translation]}
                       for c, p in gt.objects]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_model(points_path, meta_path):
    """Read an object model: "x y z" lines plus a JSON metadata sidecar."""
    points = []
    with open(points_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise SchemaError(f"expected 3 coordinates, got {len(parts)}",
                                  path=f"{points_path}:{lineno}")
            try:
                points.append([float(p) for p in parts])
            except ValueError:
                raise SchemaError(f"non-numeric coordinate in {parts!r}",
                                  path=f"{points_path}:{lineno}") from None
    if not points:
        raise SchemaError("model has no points", path=str(points_path))
    with open(meta_path) as fh:
        meta = json.load(fh)
    if not isinstance(meta, dict):
        raise SchemaError("expected a JSON object", path="meta")
    class_id = _require(meta, "class_id", "meta", int)
    name = _require(meta, "name", "meta", str)
    symmetric = _require(meta, "symmetric", "meta", bool)
    return ObjectModel(class_id=int(class_id), points=np.array(points),
                       symmetric=bool(symmetric), name=name)


def write_model(points_path, meta_path, model):
    with open(points_path, "w") as fh:
        for x, y, z in model.points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
    with open(meta_path, "w") as fh:
        json.dump({"class_id": model.class_id, "name": model.name,
                   "symmetric": model.symmetric}, fh, indent=2)
        fh.write("\n")


def read_models_dir(path):
    """Load every NAME.xyz / NAME.json pair under a directory."""
    from pathlib import Path
    path = Path(path)
    models = []
    for points_path in sorted(path.glob("*.xyz")):
        meta_path = points_path.with_suffix(".json")
        if not meta_path.exists():
            raise SchemaError("missing metadata sidecar", path=str(meta_path))
        models.append(read_model(points_path, meta_path))
    if not models:
        raise SchemaError(f"no *.xyz model files under {path}", path=str(path))
    return models


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def report_to_dict(report):
    return {
        "tau_max": report.tau_max,
        "n_samples": len(report.samples),
        "n_missed": report.n_missed,
        "auc_p": report.auc_p,
        "auc_s": report.auc_s,
        "auc_rot_p": report.auc_rot_p,
        "auc_rot_s": report.auc_rot_s,
        "auc_p_classwise": report.auc_p_classwise,
        "auc_s_classwise": report.auc_s_classwise,
        "nonsymc": report.nonsymc,
        "symc": report.symc,
        "mean_translation_error": report.mean_translation_error,
        "per_class": {str(c): v for c, v in report.per_class.items()},
        "curves": {
            "thresholds": [float(t) for t in report.curve_thresholds],
            "add": [float(a) for a in report.curve_add],
            "adds": [float(a) for a in report.curve_adds],
        },
        "samples": [
            {"frame_id": s.frame_id, "class_id": s.class_id,
             "add": _finite_or_none(s.add), "adds": _finite_or_none(s.adds),
             "rot_p": _finite_or_none(s.rot_p), "rot_s": _finite_or_none(s.rot_s),
             "trans_err": _finite_or_none(s.trans_err)}
            for s in report.samples
        ],
    }


def write_report(path, report):
    """Serialize an EvalReport as JSON (missed-detection infinities map to
    null)."""
    with open(path, "w") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")


def write_report_csv(path, report):
    """Per-sample distances as CSV (infinities written as inf)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for s in report.samples:
            writer.writerow([s.frame_id, s.class_id,
                             repr(float(s.add)), repr(float(s.adds)),
                             repr(float(s.rot_p)), repr(float(s.rot_s)),
                             repr(float(s.trans_err))])
