"""Centerline tracing: response-derived cost raster and least-cost paths.

The detector response D is turned into a strictly positive cost raster,
then the centerline between consecutive exogenous control points is the
globally optimal 8-connected path under Dijkstra. A step p -> q costs
the mean of the two pixel costs times the Euclidean step length, which
removes the axis bias of plain per-pixel sums.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .linedetect import ResponseMap
from .raster import Raster

COST_FLOOR = 1e-6

_STEPS = [(-1, -1, math.sqrt(2)), (-1, 0, 1.0), (-1, 1, math.sqrt(2)),
          (0, -1, 1.0), (0, 1, 1.0),
          (1, -1, math.sqrt(2)), (1, 0, 1.0), (1, 1, math.sqrt(2))]


@dataclass
class ControlPoints:
    """Ordered a-priori nodes of one river, in pixel (row, col) coordinates."""

    river_id: str
    nodes: list

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError(f"river {self.river_id!r} needs >= 2 control points")
        self.nodes = [(int(r), int(c)) for r, c in self.nodes]


@dataclass
class Polyline:
    """8-connected pixel chain with its accumulated path cost."""

    points: list
    cost: float = float("nan")

    def validate(self) -> None:
        if not self.points:
            raise ValueError("empty polyline")
        if len(set(self.points)) != len(self.points):
            raise ValueError("polyline revisits a pixel")
        for (r0, c0), (r1, c1) in zip(self.points, self.points[1:]):
            if max(abs(r1 - r0), abs(c1 - c0)) != 1:
                raise ValueError(f"({r0},{c0}) -> ({r1},{c1}) is not an 8-neighbor step")

    def __len__(self) -> int:
        return len(self.points)


def cost_map(resp: ResponseMap, n_pow: float = 10.0) -> Raster:
    """Cost raster floor + (1 - D/D_max)^n_pow; strong responses cost ~0."""
    d = resp.resp.data
    dmax = float(d.max())
    if not dmax > 0:
        raise ValueError("featureless response map: D_max is not positive")
    return Raster(COST_FLOOR + (1.0 - d / dmax) ** n_pow, "cost")


def least_cost_path(cost: Raster, a, b) -> Polyline:
    """Globally optimal 8-connected path from a to b on a positive cost raster.

    Dijkstra with deterministic tie-breaking (lower row, then lower col).
    """
    h, w = cost.shape
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    for name, (r, c) in (("a", a), ("b", b)):
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"endpoint {name}={r, c} outside raster {h}x{w}")
    if not np.all(cost.data > 0):
        raise ValueError("least_cost_path requires strictly positive costs")
    if a == b:
        return Polyline([a], 0.0)
    carr = cost.data
    dist = np.full((h, w), np.inf)
    pred = np.full((h, w), -1, dtype=np.intp)
    dist[a] = 0.0
    heap = [(0.0, a[0], a[1])]
    while heap:
        d, r, c = heapq.heappop(heap)
        if d > dist[r, c]:
            continue
        if (r, c) == b:
            break
        base = carr[r, c]
        for dr, dc, ln in _STEPS:
            rq, cq = r + dr, c + dc
            if 0 <= rq < h and 0 <= cq < w:
                nd = d + 0.5 * (base + carr[rq, cq]) * ln
                if nd < dist[rq, cq]:
                    dist[rq, cq] = nd
                    pred[rq, cq] = r * w + c
                    heapq.heappush(heap, (nd, rq, cq))
    if not np.isfinite(dist[b]):
        raise RuntimeError(f"endpoint {b} unreachable from {a}")
    path = [b]
    while path[-1] != a:
        p = pred[path[-1]]
        path.append((int(p) // w, int(p) % w))
    path.reverse()
    line = Polyline(path, float(dist[b]))
    line.validate()
    return line


def trace_centerline(resp: ResponseMap, pts: ControlPoints, n_pow: float = 10.0) -> Polyline:
    """Least-cost path through every consecutive control-point pair.

    Segments share their junction node; the duplicate pixel is dropped
    when concatenating.
    """
    cm = cost_map(resp, n_pow)
    h, w = cm.shape
    for r, c in pts.nodes:
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"control point {(r, c)} outside raster {h}x{w}")
    points = []
    total = 0.0
    for a, b in zip(pts.nodes, pts.nodes[1:]):
        seg = least_cost_path(cm, a, b)
        total += seg.cost
        points.extend(seg.points if not points else seg.points[1:])
    return Polyline(points, total)


def write_control_points(rivers, path) -> None:
    """CSV with header river_id,node_id,row,col."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["river_id", "node_id", "row", "col"])
        for river in rivers:
            for i, (r, c) in enumerate(river.nodes):
                wr.writerow([river.river_id, i, r, c])


def read_control_points(path) -> list:
    """Read rivers back from the control-point CSV, nodes ordered by node_id."""
    groups: dict[str, list] = {}
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            groups.setdefault(rec["river_id"], []).append(
                (int(rec["node_id"]), int(rec["row"]), int(rec["col"])))
    rivers = []
    for rid in groups:
        nodes = [(r, c) for _, r, c in sorted(groups[rid])]
        rivers.append(ControlPoints(rid, nodes))
    return rivers


def write_polyline(line: Polyline, path) -> None:
    """CSV with header idx,row,col."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["idx", "row", "col"])
        for i, (r, c) in enumerate(line.points):
            wr.writerow([i, r, c])


def read_polyline(path) -> Polyline:
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append((int(rec["idx"]), int(rec["row"]), int(rec["col"])))
    return Polyline([(r, c) for _, r, c in sorted(rows)])
