"""Pinhole camera pose and reprojection helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CameraPose:
    """Calibrated pinhole camera with unknown-but-estimated focal length.

    ``rotation`` maps world directions into the camera frame, so a world point
    ``X`` has camera coordinates ``rotation @ (X - center)``.
    """

    rotation: np.ndarray
    center: np.ndarray
    focal: float
    principal_point: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        object.__setattr__(self, "principal_point", np.asarray(self.principal_point, dtype=float).reshape(2))
        object.__setattr__(self, "focal", float(self.focal))

    @property
    def translation(self) -> np.ndarray:
        return -self.rotation @ self.center

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return (
            self.focal > 0
            and np.allclose(R @ R.T, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) <= tol
        )

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return (points - self.center) @ self.rotation.T

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project world points; returns ``(pixels, depth)``.

        Pixels of points with non-positive depth are NaN.
        """
        cam = self.to_camera(points)
        z = cam[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = self.focal * cam[:, :2] / z[:, None] + self.principal_point
        uv[z <= 0] = np.nan
        return uv, z


def reprojection_errors(pose: CameraPose, points: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Pixel distance between observations and projections; ``inf`` behind the camera."""
    uv, z = pose.project(points)
    err = np.linalg.norm(uv - np.atleast_2d(pixels), axis=1)
    err[~(z > 0)] = np.inf
    return err


def reprojection_error(pose: CameraPose, point, pixel) -> float:
    return float(reprojection_errors(pose, np.reshape(point, (1, 3)), np.reshape(pixel, (1, 2)))[0])


def batch_reprojection_errors(
    rotations: np.ndarray,
    centers: np.ndarray,
    focals: np.ndarray,
    principal_point: np.ndarray,
    points: np.ndarray,
    pixels: np.ndarray,
) -> np.ndarray:
    """Errors of every point under every hypothesis, shape ``(n_hyp, n_points)``."""
    cam = np.einsum("hij,hpj->hpi", rotations, points[None, :, :] - centers[:, None, :])
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = focals[:, None, None] * cam[..., :2] / z[..., None] + principal_point
        err = np.sqrt(((uv - pixels[None]) ** 2).sum(-1))
    err[~(z > 0)] = np.inf
    return err


def rotation_error_deg(R_est: np.ndarray, R_gt: np.ndarray) -> float:
    cos = (np.trace(R_est @ R_gt.T) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for a camera at ``center`` looking at ``target``.

    Camera axes: x right, y down, z forward.
    """
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])
