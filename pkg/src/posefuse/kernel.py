"""Numeric-kernel endpoint: JSON requests over stdin/stdout.

External runtimes drive the aggregation, loss, and metric kernels through
this surface.  A request is ``{"op": <name>, "args": {...}}``; float arrays
travel as ``{"b64": <base64 little-endian float64>, "shape": [...]}`` so
results round-trip bit for bit.  The response is ``{"ok": true, "result":
{...}}`` or ``{"ok": false, "error": {"type", "message"}}``.

One-shot mode reads a single JSON document (an object or a list of them)
and writes the response(s); ``--serve`` processes one JSON document per
input line until EOF, one response per line.
"""

from __future__ import annotations

import base64
import json
import sys

import numpy as np

from . import losses, metrics, quat
from .aggregate import (AggregationConfig, Strategy, WeightedQuatSet,
                        prune_and_average, ransac_cluster)
from .errors import EmptyAggregationError


def encode_array(values):
    a = np.ascontiguousarray(values, dtype="<f8")
    return {"b64": base64.b64encode(a.tobytes()).decode("ascii"),
            "shape": list(a.shape)}


def _decode_array(args, name, shape):
    """Decode args[name]; ``shape`` entries of None are free dimensions."""
    if name not in args:
        raise ValueError(f"{name}: missing argument")
    obj = args[name]
    if not isinstance(obj, dict) or "b64" not in obj or "shape" not in obj:
        raise ValueError(f"{name}: expected {{b64, shape}} array encoding")
    raw = base64.b64decode(obj["b64"])
    got = tuple(int(d) for d in obj["shape"])
    if len(raw) != int(np.prod(got, dtype=np.int64)) * 8:
        raise ValueError(f"{name}: payload holds {len(raw)} bytes, "
                         f"shape {list(got)} needs {int(np.prod(got, dtype=np.int64)) * 8}")
    if len(got) != len(shape):
        raise ValueError(f"{name}: expected {len(shape)} dimensions, got {len(got)}")
    for axis, (want, have) in enumerate(zip(shape, got)):
        if want is not None and want != have:
            raise ValueError(f"{name}: dimension {axis} must be {want}, got {have}")
    return np.frombuffer(raw, dtype="<f8").reshape(got).copy()


def _scalar(args, name, default=None):
    if name not in args:
        if default is None:
            raise ValueError(f"{name}: missing argument")
        return default
    value = args[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name}: expected a number")
    return float(value)


def _seed(args):
    value = args.get("seed", 0)
    if isinstance(value, str):
        value = int(value)  # 64-bit seeds may arrive as decimal strings
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError("seed: expected an integer")
    return value


def _qset(args):
    quats = _decode_array(args, "quats", (None, 4))
    weights = _decode_array(args, "weights", (quats.shape[0],))
    return WeightedQuatSet(quats, weights)


def _model(args):
    points = _decode_array(args, "points", (None, 3))
    return losses.ObjectModel(class_id=0, points=points,
                              symmetric=bool(args.get("symmetric", False)))


def _orientation_result(agg):
    return {"quaternion": encode_array(agg.quaternion),
            "support": encode_array([agg.support]),
            "used_count": agg.used_count,
            "ambiguous": agg.ambiguous}


def _op_markley_average(args):
    q, ambiguous = quat.markley_average(
        _decode_array(args, "quats", (None, 4)),
        _decode_array(args, "weights", (None,)),
        with_flag=True)
    return {"quaternion": encode_array(q), "ambiguous": ambiguous}


def _op_prune_and_average(args):
    return _orientation_result(
        prune_and_average(_qset(args), _scalar(args, "prune_fraction")))


def _op_ransac_cluster(args):
    weighted = bool(args.get("weighted", False))
    cfg = AggregationConfig(
        strategy=Strategy.WEIGHTED_RANSAC if weighted else Strategy.RANSAC,
        ransac_threshold=_scalar(args, "threshold", 0.2),
        ransac_iterations=int(_scalar(args, "iterations", 50)),
        seed=_seed(args))
    return _orientation_result(ransac_cluster(_qset(args), cfg))


def _pair(args):
    return (_decode_array(args, "q_est", (4,)), _decode_array(args, "q_gt", (4,)))


def _op_ploss(args):
    q_est, q_gt = _pair(args)
    return {"value": encode_array([losses.ploss(q_est, q_gt, _model(args))])}


def _op_sloss(args):
    q_est, q_gt = _pair(args)
    return {"value": encode_array([losses.sloss(q_est, q_gt, _model(args))])}


def _op_smloss(args):
    q_est, q_gt = _pair(args)
    return {"value": encode_array([losses.smloss(q_est, q_gt, _model(args))])}


def _op_qloss(args):
    q_est, q_gt = _pair(args)
    return {"value": encode_array(
        [losses.qloss(q_est, q_gt, _scalar(args, "eps", losses.DEFAULT_QLOSS_EPS))])}


def _op_grad_ploss(args):
    q_est, q_gt = _pair(args)
    return {"grad": encode_array(losses.grad_ploss(q_est, q_gt, _model(args)))}


def _op_grad_qloss(args):
    q_est, q_gt = _pair(args)
    return {"grad": encode_array(
        losses.grad_qloss(q_est, q_gt, _scalar(args, "eps", losses.DEFAULT_QLOSS_EPS)))}


def _poses(args):
    est = metrics.Pose(_decode_array(args, "q_est", (4,)),
                       _decode_array(args, "t_est", (3,)))
    gt = metrics.Pose(_decode_array(args, "q_gt", (4,)),
                      _decode_array(args, "t_gt", (3,)))
    return est, gt


def _op_add(args):
    est, gt = _poses(args)
    return {"value": encode_array([metrics.add_distance(est, gt, _model(args))])}


def _op_adds(args):
    est, gt = _poses(args)
    return {"value": encode_array([metrics.adds_distance(est, gt, _model(args))])}


def _op_auc(args):
    distances = _decode_array(args, "distances", (None,))
    return {"value": encode_array(
        [metrics.auc(distances, _scalar(args, "tau_max", metrics.DEFAULT_TAU_MAX))])}


_OPS = {
    "markley_average": _op_markley_average,
    "prune_and_average": _op_prune_and_average,
    "ransac_cluster": _op_ransac_cluster,
    "ploss": _op_ploss,
    "sloss": _op_sloss,
    "smloss": _op_smloss,
    "qloss": _op_qloss,
    "grad_ploss": _op_grad_ploss,
    "grad_qloss": _op_grad_qloss,
    "add": _op_add,
    "adds": _op_adds,
    "auc": _op_auc,
}


def handle_request(request):
    try:
        if not isinstance(request, dict):
            raise ValueError("request must be a JSON object")
        op = request.get("op")
        if op not in _OPS:
            raise ValueError(f"unknown op {op!r}")
        args = request.get("args", {})
        if not isinstance(args, dict):
            raise ValueError("args must be a JSON object")
        return {"ok": True, "result": _OPS[op](args)}
    except EmptyAggregationError as exc:
        return {"ok": False, "error": {"type": "empty_aggregation", "message": str(exc)}}
    except (ValueError, KeyError) as exc:
        return {"ok": False, "error": {"type": "invalid_argument", "message": str(exc)}}


def run(serve=False, stdin=None, stdout=None):
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    if serve:
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            try:
                request = json.loads(line)
            except json.JSONDecodeError as exc:
                response = {"ok": False,
                            "error": {"type": "bad_json", "message": str(exc)}}
            else:
                response = handle_request(request)
            stdout.write(json.dumps(response) + "\n")
            stdout.flush()
        return 0
    try:
        doc = json.load(stdin)
    except json.JSONDecodeError as exc:
        json.dump({"ok": False, "error": {"type": "bad_json", "message": str(exc)}}, stdout)
        stdout.write("\n")
        return 0
    if isinstance(doc, list):
        json.dump([handle_request(r) for r in doc], stdout)
    else:
        json.dump(handle_request(doc), stdout)
    stdout.write("\n")
    return 0
