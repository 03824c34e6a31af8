"""Pose accuracy statistics: error quartiles and accuracy buckets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .camera import CameraPose, rotation_error_deg

# (distance, degrees): high, medium and coarse precision
BUCKETS = ((0.25, 2.0), (0.5, 5.0), (5.0, 10.0))


def center_error(estimate: CameraPose, truth: CameraPose) -> float:
    return float(np.linalg.norm(estimate.center - truth.center))


def rotation_error(estimate: CameraPose, truth: CameraPose) -> float:
    return rotation_error_deg(estimate.rotation, truth.rotation)


def quartiles(values) -> tuple[float, float, float]:
    """25/50/75 % quantiles, linear interpolation between order statistics; NaN when empty."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return (float("nan"),) * 3
    q = np.percentile(values, [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


@dataclass(frozen=True)
class EvaluationReport:
    n_queries: int
    n_localized: int
    center_quartiles: tuple[float, float, float]
    rotation_quartiles: tuple[float, float, float]
    buckets: tuple[tuple[float, float, float], ...]  # (distance, degrees, percent)
    mean_time_ms: Optional[float] = None
    distance_scale: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def localized_fraction(self) -> float:
        return self.n_localized / self.n_queries if self.n_queries else 0.0

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_localized": self.n_localized,
            "localized_fraction": self.localized_fraction,
            "center_error_quartiles": list(self.center_quartiles),
            "rotation_error_quartiles_deg": list(self.rotation_quartiles),
            "buckets": [{"distance": d, "degrees": a, "percent": p} for d, a, p in self.buckets],
            "mean_time_ms": self.mean_time_ms,
            "distance_scale": self.distance_scale,
            "notes": dict(self.notes),
        }

    def render(self) -> str:
        head = [f"{k}: {v}" for k, v in self.notes.items()]
        c, r = self.center_quartiles, self.rotation_quartiles
        body = [
            f"localized {self.n_localized}/{self.n_queries} ({100 * self.localized_fraction:.1f}%)",
            "center error quartiles   " + " / ".join(f"{x:.4g}" for x in c),
            "rotation error quartiles " + " / ".join(f"{x:.4g}" for x in r) + " deg",
        ]
        body += [f"within ({d:g}, {a:g} deg): {p:.1f}%" for d, a, p in self.buckets]
        if self.mean_time_ms is not None:
            body.append(f"mean time per query {self.mean_time_ms:.1f} ms")
        return "\n".join(head + body)


def evaluate(
    results: Sequence,
    truths: Mapping[int, CameraPose],
    buckets=BUCKETS,
    distance_scale: float = 1.0,
    notes: Optional[dict] = None,
) -> EvaluationReport:
    """Summarise localization results against ground-truth poses.

    ``results`` need ``query_id``, ``status`` and ``pose`` attributes (and
    optionally ``timings``).  Quartiles cover localized queries only; bucket
    percentages are over all queries, failures counting as outside every
    bucket.  Bucket distances are multiplied by ``distance_scale``.
    """
    cerr, rerr = [], []
    hits = np.zeros(len(buckets), dtype=np.int64)
    times = []
    for res in results:
        if res.query_id not in truths:
            raise KeyError(f"no ground truth for query {res.query_id}")
        if getattr(res, "timings", None):
            times.append(sum(res.timings.values()))
        if res.status != "localized" or res.pose is None:
            continue
        ce = center_error(res.pose, truths[res.query_id])
        re = rotation_error(res.pose, truths[res.query_id])
        cerr.append(ce)
        rerr.append(re)
        for i, (d, a) in enumerate(buckets):
            hits[i] += ce <= d * distance_scale and re <= a
    n = len(results)
    pct = tuple((float(d), float(a), 100.0 * int(h) / n if n else 0.0) for (d, a), h in zip(buckets, hits))
    return EvaluationReport(
        n,
        len(cerr),
        quartiles(cerr),
        quartiles(rerr),
        pct,
        float(np.mean(times)) if times else None,
        float(distance_scale),
        dict(notes or {}),
    )
