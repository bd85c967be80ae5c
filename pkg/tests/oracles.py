"""Independent oracles used by the test suite.

These deliberately avoid the library's clipping/AP code paths:
intersection areas come from point-membership counting (Monte Carlo
with jittered-grid stratification, or a deterministic raster grid),
and AP comes from a brute-force sweep over confidence cut points.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is present in CI
    HAVE_NUMBA = False


def _ccw(quad: np.ndarray) -> np.ndarray:
    x, y = quad[:, 0], quad[:, 1]
    s = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    return quad if s >= 0 else quad[::-1].copy()


def _tri_area(t: np.ndarray) -> float:
    return abs(
        (t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1]) - (t[1, 1] - t[0, 1]) * (t[2, 0] - t[0, 0])
    ) / 2.0


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _count_hits(t0x, t0y, e1x, e1y, e2x, e2y, bx, by, g, jit, extra):
        hits = 0
        idx = 0
        for i in range(g):
            for j in range(g):
                u = (i + jit[idx]) / g
                v = (j + jit[idx + 1]) / g
                idx += 2
                if u + v > 1.0:
                    u = 1.0 - u
                    v = 1.0 - v
                px = t0x + u * e1x + v * e2x
                py = t0y + u * e1y + v * e2y
                ok = True
                for k in range(4):
                    k2 = (k + 1) % 4
                    cr = (bx[k2] - bx[k]) * (py - by[k]) - (by[k2] - by[k]) * (px - bx[k])
                    if cr < 0.0:
                        ok = False
                        break
                if ok:
                    hits += 1
        for m in range(0, extra.shape[0], 2):
            u = extra[m]
            v = extra[m + 1]
            if u + v > 1.0:
                u = 1.0 - u
                v = 1.0 - v
            px = t0x + u * e1x + v * e2x
            py = t0y + u * e1y + v * e2y
            ok = True
            for k in range(4):
                k2 = (k + 1) % 4
                cr = (bx[k2] - bx[k]) * (py - by[k]) - (by[k2] - by[k]) * (px - bx[k])
                if cr < 0.0:
                    ok = False
                    break
            if ok:
                hits += 1
        return hits

else:

    def _count_hits(t0x, t0y, e1x, e1y, e2x, e2y, bx, by, g, jit, extra):
        parts = []
        if g > 0:
            gi, gj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
            u = (gi.reshape(-1) + jit[0::2]) / g
            v = (gj.reshape(-1) + jit[1::2]) / g
            parts.append((u, v))
        if extra.size:
            parts.append((extra[0::2], extra[1::2]))
        hits = 0
        for u, v in parts:
            flip = u + v > 1.0
            u = np.where(flip, 1.0 - u, u)
            v = np.where(flip, 1.0 - v, v)
            px = t0x + u * e1x + v * e2x
            py = t0y + u * e1y + v * e2y
            inside = np.ones(px.shape, dtype=bool)
            for k in range(4):
                k2 = (k + 1) % 4
                cr = (bx[k2] - bx[k]) * (py - by[k]) - (by[k2] - by[k]) * (px - bx[k])
                inside &= cr >= 0.0
            hits += int(inside.sum())
        return hits


def mc_intersection_area(quad_a, quad_b, n: int = 1_000_000, rng=None, jitter=None) -> float:
    """Monte-Carlo estimate of area(a ∩ b) from n uniform samples in a.

    Samples are drawn uniformly inside quad a (two triangles, allocated
    by area, each with a jittered-grid stratification), and membership
    in quad b is counted.  ``jitter`` may supply the 2n uniform variates
    up front so they can be reused across pairs.
    """
    a = _ccw(np.asarray(quad_a, dtype=np.float64))
    b = np.ascontiguousarray(_ccw(np.asarray(quad_b, dtype=np.float64)))
    bx = np.ascontiguousarray(b[:, 0])
    by = np.ascontiguousarray(b[:, 1])
    tris = (a[[0, 1, 2]], a[[0, 2, 3]])
    areas = [_tri_area(t) for t in tris]
    total = areas[0] + areas[1]
    if total <= 0.0:
        return 0.0
    counts = [int(round(n * areas[0] / total))]
    counts.append(n - counts[0])
    if jitter is None:
        if rng is None:
            rng = np.random.default_rng(0)
        jitter = rng.random(2 * n)
    offset = 0
    hits = 0
    for t, m in zip(tris, counts):
        if m <= 0:
            continue
        g = int(math.isqrt(m))
        k = g * g
        block = jitter[offset : offset + 2 * m]
        offset += 2 * m
        hits += _count_hits(
            t[0, 0],
            t[0, 1],
            t[1, 0] - t[0, 0],
            t[1, 1] - t[0, 1],
            t[2, 0] - t[0, 0],
            t[2, 1] - t[0, 1],
            bx,
            by,
            g,
            block[: 2 * k],
            block[2 * k :],
        )
    return total * hits / n


def _inside_convex(px: np.ndarray, py: np.ndarray, quad: np.ndarray) -> np.ndarray:
    quad = _ccw(quad)
    inside = np.ones(px.shape, dtype=bool)
    for k in range(4):
        k2 = (k + 1) % 4
        cr = (quad[k2, 0] - quad[k, 0]) * (py - quad[k, 1]) - (quad[k2, 1] - quad[k, 1]) * (
            px - quad[k, 0]
        )
        inside &= cr >= 0.0
    return inside


def raster_iou(quad_a, quad_b, resolution: int = 3000) -> float:
    """Deterministic grid-membership IoU of two convex quads."""
    a = np.asarray(quad_a, dtype=np.float64)
    b = np.asarray(quad_b, dtype=np.float64)
    both = np.vstack([a, b])
    x0, y0 = both.min(axis=0) - 1e-9
    x1, y1 = both.max(axis=0) + 1e-9
    xs = np.linspace(x0, x1, resolution, endpoint=False) + (x1 - x0) / (2 * resolution)
    ys = np.linspace(y0, y1, resolution, endpoint=False) + (y1 - y0) / (2 * resolution)
    px, py = np.meshgrid(xs, ys)
    px = px.reshape(-1)
    py = py.reshape(-1)
    in_a = _inside_convex(px, py, a)
    in_b = _inside_convex(px, py, b)
    inter = int((in_a & in_b).sum())
    union = int((in_a | in_b).sum())
    if union == 0:
        return 0.0
    return inter / union


def raster_clip_area(quad, x_min, y_min, x_max, y_max, resolution: int = 2000) -> float:
    """Deterministic grid-membership area of quad ∩ rectangle."""
    xs = np.linspace(x_min, x_max, resolution, endpoint=False) + (x_max - x_min) / (2 * resolution)
    ys = np.linspace(y_min, y_max, resolution, endpoint=False) + (y_max - y_min) / (2 * resolution)
    px, py = np.meshgrid(xs, ys)
    frac = _inside_convex(px.reshape(-1), py.reshape(-1), np.asarray(quad, dtype=np.float64))
    cell = ((x_max - x_min) / resolution) * ((y_max - y_min) / resolution)
    return float(frac.sum()) * cell


def brute_force_ap(samples: list[tuple[float, bool]], total_gt: int) -> float:
    """All-points AP via explicit enumeration of confidence cut points.

    For every distinct recall level, the envelope precision is the
    maximum precision among cut points reaching at least that recall;
    AP is the stepwise integral of the envelope over recall.
    """
    if total_gt == 0:
        raise ValueError("brute_force_ap needs total_gt > 0")
    if not samples:
        return 0.0
    ordered = sorted(enumerate(samples), key=lambda item: (-item[1][0], item[0]))
    points = []
    tp = 0
    for k, (_, (_conf, is_tp)) in enumerate(ordered, start=1):
        if is_tp:
            tp += 1
        points.append((tp / total_gt, tp / k))
    recalls = sorted({r for r, _ in points if r > 0})
    ap = 0.0
    prev = 0.0
    for r in recalls:
        p_env = max(p for rk, p in points if rk >= r)
        ap += (r - prev) * p_env
        prev = r
    return ap


def random_convex_quad(rng, center, scale) -> np.ndarray:
    """Random convex quad: 4 points on a random ellipse at sorted angles."""
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, 4))
    # reject near-duplicate angles to avoid slivers
    while np.min(np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))) < 0.3:
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, 4))
    rx = rng.uniform(0.3, 1.0) * scale
    ry = rng.uniform(0.3, 1.0) * scale
    tilt = rng.uniform(0.0, np.pi)
    c, s = np.cos(tilt), np.sin(tilt)
    ex = rx * np.cos(angles)
    ey = ry * np.sin(angles)
    return np.stack([center[0] + ex * c - ey * s, center[1] + ex * s + ey * c], axis=1)
