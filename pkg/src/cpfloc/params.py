"""Pipeline configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

ABLATIONS = ("qsr", "pfl", "baseline-voting")


@dataclass(frozen=True)
class PipelineParams:
    """Every tunable of the localization cascade.

    Defaults are the medium-scale benchmark settings (64-bit signatures,
    Hamming threshold 19, 20/100 top images, 100 selected matches, 10 px
    recovery and 4 px final thresholds, 1000 RANSAC iterations per stage).
    """

    bits: int = 64
    hamming_threshold: int = 19
    image_ratio_threshold: float = 0.3
    weight_sigma: Optional[float] = None  # None -> bits / 4
    score_threshold: float = 0.8
    top_images: int = 20
    pool_images: int = 100
    max_selected: int = 100
    inferred_ratio: float = 0.33
    recovery_threshold: float = 10.0
    final_threshold: float = 4.0
    aux_iterations: int = 1000
    final_iterations: int = 1000
    min_inliers: int = 12
    known_focal: Optional[float] = None
    # ablation switches
    spatial_reconfiguration: bool = True
    principal_focal: bool = True
    baseline_voting: bool = False
    baseline_threshold: int = 11
    zero_distance_weight: bool = False  # True: w(0) = 0 as literally printed
    # focal sweep used by the four-point solver
    focal_grid_size: int = 40
    focal_refine_iterations: int = 30

    def __post_init__(self):
        self.validate()

    @property
    def sigma(self) -> float:
        return self.bits / 4.0 if self.weight_sigma is None else float(self.weight_sigma)

    def validate(self) -> None:
        problems = []
        if self.bits % 8 or self.bits <= 0:
            problems.append("bits must be a positive multiple of 8")
        if not 0 <= self.hamming_threshold <= self.bits:
            problems.append("hamming_threshold must lie in [0, bits]")
        if not 0 < self.image_ratio_threshold < 1:
            problems.append("image_ratio_threshold must lie in (0, 1)")
        if self.sigma <= 0:
            problems.append("weight_sigma must be positive")
        if self.score_threshold <= 0:
            problems.append("score_threshold must be positive")
        if not 1 <= self.top_images <= self.pool_images:
            problems.append("need 1 <= top_images <= pool_images")
        if self.max_selected < 4:
            problems.append("max_selected must be at least 4")
        if not 0 < self.inferred_ratio <= 1:
            problems.append("inferred_ratio must lie in (0, 1]")
        if self.recovery_threshold <= 0 or self.final_threshold <= 0:
            problems.append("pixel thresholds must be positive")
        if self.aux_iterations < 1 or self.final_iterations < 1:
            problems.append("iteration counts must be positive")
        if self.known_focal is not None and self.known_focal <= 0:
            problems.append("known_focal must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    def ablate(self, *names: str) -> "PipelineParams":
        changes = {}
        for name in names:
            if name == "qsr":
                changes["spatial_reconfiguration"] = False
            elif name == "pfl":
                changes["principal_focal"] = False
            elif name == "baseline-voting":
                changes["baseline_voting"] = True
            else:
                raise ValueError(f"unknown ablation {name!r}; choose from {ABLATIONS}")
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return cls(**data)
