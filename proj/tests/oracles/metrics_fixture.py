"""Reference values for tests/fixtures/metrics_fixture.json.

Computed from the metric definitions directly: Dijkstra geodesics, DTW by
enumerating every monotone warping, box IoU from areas. Run once and commit
the output; the C++ suite compares against the frozen file.
"""
import heapq
import itertools
import json
import math
import sys

POS = {0: (0, 0), 1: (2, 0), 2: (4, 0), 3: (6, 0), 4: (7, 0), 5: (10, 0), 6: (2, 2), 7: (4, 2)}
EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 2)]
D_TH = 3.0


def length(a, b):
    (xa, ya), (xb, yb) = POS[a], POS[b]
    return math.sqrt((xa - xb) ** 2 + (ya - yb) ** 2)


def geodesic(src):
    adj = {n: [] for n in POS}
    for a, b in EDGES:
        adj[a].append(b)
        adj[b].append(a)
    dist = {n: math.inf for n in POS}
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in adj[u]:
            nd = d + length(u, v)
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


GEO = {s: geodesic(s) for s in POS}


def warpings(n, m):
    """All monotone lattice paths (0,0)->(n-1,m-1) with steps (1,0),(0,1),(1,1)."""
    def rec(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                for rest in rec(a, b):
                    yield [(i, j)] + rest
    return list(rec(0, 0))


def dtw(p, g):
    return min(sum(GEO[p[i]][g[j]] for i, j in w) for w in warpings(len(p), len(g)))


def iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    area = lambda r: (r[2] - r[0]) * (r[3] - r[1])
    return inter / (area(a) + area(b) - inter)


EPISODES = [
    # id, path, gt, grounding (predicted box or None, reference boxes) or None
    ("perfect", [0, 1, 2], [0, 1, 2], None),
    ("spl_half", [0, 1, 6, 7, 2], [0, 1, 2], None),
    ("ne_boundary", [2, 3, 4], [2, 3, 4, 5], None),
    ("ne_over", [1, 2, 3], [1, 2, 3, 4, 5], None),
    ("overshoot", [0, 1, 2, 3], [0, 1], None),
    ("no_move", [3], [3, 2, 1], None),
    ("stays", [0, 0, 1, 1, 2], [0, 1, 2], None),
    ("iou_third", [5, 4, 3], [5, 4, 3], ([0, 0, 1, 1], [[0.5, 0, 1.5, 1]])),
    ("grounded", [6, 1, 2], [6, 7, 2], ([0.1, 0.1, 0.5, 0.5], [[0.6, 0.6, 0.9, 0.9], [0.1, 0.1, 0.5, 0.4]])),
    ("no_box", [0, 1, 2, 7, 6], [0, 1, 6], (None, [[0.2, 0.2, 0.4, 0.4]])),
]


def metrics(path, gt, grounding):
    goal = gt[-1]
    tl = sum(GEO[a][b] for a, b in zip(path, path[1:]))
    ne = GEO[path[-1]][goal]
    one = min(GEO[u][goal] for u in path)
    sr = 1.0 if ne <= D_TH else 0.0
    osr = 1.0 if one <= D_TH else 0.0
    shortest = GEO[path[0]][goal]
    eff = shortest / max(tl, shortest) if max(tl, shortest) > 0 else 1.0
    nd = math.exp(-dtw(path, gt) / (len(path) * D_TH))
    out = {"TL": tl, "NE": ne, "ONE": one, "SR": sr, "OSR": osr, "SPL": sr * eff, "nDTW": nd, "sDTW": sr * nd}
    if grounding is not None:
        pred, refs = grounding
        best = max((iou(pred, r) for r in refs), default=0.0) if pred is not None else 0.0
        out["IoU"] = best
        out["RGS"] = 1.0 if best >= 0.5 else 0.0
        out["RGSPL"] = out["RGS"] * eff
    return out


records = []
for eid, path, gt, grounding in EPISODES:
    rec = {"id": eid, "path": path, "gt": gt, "metrics": metrics(path, gt, grounding)}
    if grounding is not None:
        rec["predicted"] = grounding[0]
        rec["reference"] = grounding[1]
    records.append(rec)

keys = ["TL", "NE", "ONE", "SR", "OSR", "SPL", "nDTW", "sDTW"]
n = len(records)
summary = {k: sum(r["metrics"][k] for r in records) / n for k in keys}
for k in ("SR", "OSR"):
    summary[k] *= 100.0
grounded = [r for r in records if "RGS" in r["metrics"]]
summary["RGS"] = 100.0 * sum(r["metrics"]["RGS"] for r in grounded) / len(grounded)
summary["RGSPL"] = 100.0 * sum(r["metrics"]["RGSPL"] for r in grounded) / len(grounded)

json.dump({"positions": {str(k): v for k, v in POS.items()}, "edges": EDGES, "d_th": D_TH,
           "records": records, "summary": summary}, sys.stdout, indent=1)
print()
