"""Brand-level visibility metrics from per-frame detections.

Per frame and brand, coverage is the summed area of the detection
polygons clipped to the frame, divided by the frame area and capped at
1 (overlapping boxes are summed, not unioned, before the cap).  Frame
coverages aggregate into exposure seconds, average coverage on present
frames, average coverage over all frames, maximum coverage and the
total detection count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .formats import Detection, FrameMeta
from .geometry import RectAA, clip_areas_to_rect

BRAND_METRICS_FIELDS = [
    "brand_id",
    "brand_name",
    "exposure_s",
    "avg_cov_present_pct",
    "avg_cov_overall_pct",
    "max_cov_pct",
    "detection_count",
    "frames_visible",
]

TIMELINE_FIELDS = ["brand_id", "frame_index", "coverage"]

RANKING_FIELDS = ["rank", "brand_id", "brand_name", "exposure_s"]


@dataclass(frozen=True)
class FrameCoverage:
    """Coverage of one brand in one frame."""

    frame_index: int
    brand_id: int
    c: float
    z: int
    detection_count: int


@dataclass(frozen=True)
class BrandMetrics:
    """Video-level visibility aggregate of one brand."""

    brand_id: int
    exposure_s: float
    avg_cov_present_pct: float
    avg_cov_overall_pct: float
    max_cov_pct: float
    detection_count: int
    frames_visible: int


@dataclass(frozen=True)
class ExposureTimeline:
    """Per-brand coverage series plus the top-K exposure ranking."""

    series: dict[int, list[tuple[int, float]]]
    ranking: list[tuple[int, float]]


def frame_rect(meta: FrameMeta) -> RectAA:
    return RectAA(0.0, 0.0, meta.width, meta.height)


def frame_coverage(dets: list[Detection], meta: FrameMeta) -> FrameCoverage:
    """Coverage of one brand's detections within one frame.

    All detections must share brand and frame; an empty list yields
    c=0, z=0, count=0.
    """
    if not dets:
        return FrameCoverage(frame_index=0, brand_id=0, c=0.0, z=0, detection_count=0)
    brand = dets[0].class_id
    frame = dets[0].frame_index
    for d in dets[1:]:
        if d.class_id != brand or d.frame_index != frame:
            raise ValueError("frame_coverage requires detections of one brand in one frame")
    quads = np.stack([d.quad for d in dets])
    total = math.fsum(clip_areas_to_rect(quads, frame_rect(meta)).tolist())
    c = min(1.0, total / meta.frame_area)
    return FrameCoverage(
        frame_index=frame,
        brand_id=brand,
        c=c,
        z=1 if c > 0.0 else 0,
        detection_count=len(dets),
    )


def aggregate_brand(coverages: list[FrameCoverage], meta: FrameMeta) -> BrandMetrics:
    """Collapse one brand's frame coverages into its video-level metrics.

    Frames without an entry count as z=0.  math.fsum keeps the sums
    exactly rounded, so the result is independent of coverage order.
    """
    if meta.frame_count <= 0:
        raise ConfigError("aggregation requires a positive frame count")
    if meta.fps <= 0:
        raise ConfigError("aggregation requires a positive frame rate")
    n_visible = sum(cov.z for cov in coverages)
    weighted = math.fsum(cov.z * cov.c for cov in coverages)
    exposure = meta.dt * n_visible
    present = 100.0 * weighted / n_visible if n_visible > 0 else 0.0
    overall = 100.0 * weighted / meta.frame_count
    max_cov = 100.0 * max((cov.c for cov in coverages), default=0.0)
    brand = coverages[0].brand_id if coverages else 0
    return BrandMetrics(
        brand_id=brand,
        exposure_s=exposure,
        avg_cov_present_pct=present,
        avg_cov_overall_pct=overall,
        max_cov_pct=max_cov,
        detection_count=sum(cov.detection_count for cov in coverages),
        frames_visible=n_visible,
    )


def temporal_filter(z, min_run: int = 1, max_gap: int = 0) -> np.ndarray:
    """Smooth a per-frame visibility series.

    Gaps of at most ``max_gap`` zero frames between visible runs are
    bridged first, then runs shorter than ``min_run`` are suppressed.
    Defaults are the identity.  Bridged frames mark presence only; the
    caller must not attribute coverage area to them.
    """
    if min_run < 1:
        raise ConfigError(f"min_run must be >= 1, got {min_run}")
    if max_gap < 0:
        raise ConfigError(f"max_gap must be >= 0, got {max_gap}")
    out = np.asarray(z, dtype=np.int8).copy()
    if out.ndim != 1:
        raise ValueError("z must be a 1-D series")
    n = out.shape[0]
    if n == 0:
        return out

    runs = _runs(out)
    if max_gap > 0:
        for (s0, e0), (s1, _e1) in zip(runs, runs[1:]):
            if s1 - e0 <= max_gap:
                out[e0:s1] = 1
        runs = _runs(out)
    if min_run > 1:
        for s, e in runs:
            if e - s < min_run:
                out[s:e] = 0
    return out


def _runs(z: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) index ranges of consecutive ones."""
    padded = np.concatenate(([0], z, [0]))
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def build_timeline(coverages: list[FrameCoverage], k: int, meta: FrameMeta) -> ExposureTimeline:
    """Per-brand coverage series and the top-K brands by exposure.

    Visibility comes from the z flags, so a temporally filtered series
    (bridged frames carry z=1 with zero coverage) ranks consistently
    with aggregate_brand.
    """
    if k < 1:
        raise ConfigError(f"top-k must be >= 1, got {k}")
    series: dict[int, list[tuple[int, float]]] = {}
    visible: dict[int, int] = {}
    for cov in sorted(coverages, key=lambda cv: (cv.brand_id, cv.frame_index)):
        series.setdefault(cov.brand_id, []).append((cov.frame_index, cov.c))
        visible[cov.brand_id] = visible.get(cov.brand_id, 0) + cov.z
    exposures = [(brand, meta.dt * n) for brand, n in visible.items()]
    exposures.sort(key=lambda item: (-item[1], item[0]))
    return ExposureTimeline(series=series, ranking=exposures[:k])


def metrics_rows(metrics: list[BrandMetrics], names: dict[int, str] | None = None) -> list[dict]:
    """Report rows ordered by exposure descending, then brand id."""
    ordered = sorted(metrics, key=lambda m: (-m.exposure_s, m.brand_id))
    rows = []
    for m in ordered:
        rows.append(
            {
                "brand_id": m.brand_id,
                "brand_name": names.get(m.brand_id, "") if names else "",
                "exposure_s": m.exposure_s,
                "avg_cov_present_pct": m.avg_cov_present_pct,
                "avg_cov_overall_pct": m.avg_cov_overall_pct,
                "max_cov_pct": m.max_cov_pct,
                "detection_count": m.detection_count,
                "frames_visible": m.frames_visible,
            }
        )
    return rows


def timeline_rows(timeline: ExposureTimeline) -> list[dict]:
    rows = []
    for brand in sorted(timeline.series):
        for frame, c in timeline.series[brand]:
            rows.append({"brand_id": brand, "frame_index": frame, "coverage": c})
    return rows


def ranking_rows(timeline: ExposureTimeline, names: dict[int, str] | None = None) -> list[dict]:
    rows = []
    for rank, (brand, exposure) in enumerate(timeline.ranking, start=1):
        rows.append(
            {
                "rank": rank,
                "brand_id": brand,
                "brand_name": names.get(brand, "") if names else "",
                "exposure_s": exposure,
            }
        )
    return rows
