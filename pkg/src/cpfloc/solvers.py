"""Minimal absolute-pose solvers.

Everything here is batched: the RANSAC loops solve all their minimal samples in
one call, so the per-problem cost is a handful of vectorised numpy operations.

* P3P: Grunert's quartic in the depth ratio, a Gauss-Newton polish of the three
  depths, and the rotation recovered from congruent triangle frames.
* P4P with unknown focal length: a focal sweep.  For every focal on a geometric
  grid the first three correspondences go through P3P and the fourth one scores
  the solution by its reprojection error; the best grid cells are then refined
  by golden-section search on that error.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraPose

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def solve_quartic(coeffs: np.ndarray, imag_tol: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Real roots of many quartics at once (Ferrari, then two Newton steps).

    Parameters
    ----------
    coeffs : (n, 5) array
        Coefficients, highest degree first.

    Returns
    -------
    roots : (n, 4) array of real parts
    valid : (n, 4) bool mask of roots that are (numerically) real
    """
    coeffs = np.asarray(coeffs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        b, c, d, e = (coeffs[:, i] / coeffs[:, 0] for i in range(1, 5))
        b2 = b * b
        p = c - 3.0 * b2 / 8.0
        q = d - b * c / 2.0 + b2 * b / 8.0
        r = e - b * d / 4.0 + b2 * c / 16.0 - 3.0 * b2 * b2 / 256.0

        # resolvent cubic m^3 + p m^2 + (p^2/4 - r) m - q^2/8 = 0, solved by Cardano
        B = p * p / 4.0 - r
        P = B - p * p / 3.0
        Q = 2.0 * p**3 / 27.0 - p * B / 3.0 - q * q / 8.0
        sd = np.sqrt(((Q / 2.0) ** 2 + (P / 3.0) ** 3).astype(complex))
        w1, w2 = -Q / 2.0 + sd, -Q / 2.0 - sd
        U = np.where(np.abs(w1) >= np.abs(w2), w1, w2) ** (1.0 / 3.0)
        V = np.where(np.abs(U) > 0, -P / (3.0 * U), 0.0)
        omega = np.exp(2j * np.pi / 3.0)
        ms = np.stack([U + V, omega * U + V / omega, U / omega + omega * V], axis=1) - p[:, None] / 3.0
        m = ms[np.arange(len(ms)), np.argmax(np.abs(ms), axis=1)]

        s = np.sqrt(2.0 * m)
        k = np.where(np.abs(s) > 0, q / (2.0 * s), 0.0)
        ys = []
        for sign in (1.0, -1.0):
            bb = -sign * s
            cc = p / 2.0 + m + sign * k
            dq = np.sqrt(bb * bb - 4.0 * cc)
            ys += [(-bb + dq) / 2.0, (-bb - dq) / 2.0]
        x = np.stack(ys, axis=1) - b[:, None] / 4.0

        valid = np.abs(x.imag) <= imag_tol * (1.0 + np.abs(x.real))
        x = x.real
        bc, cc_, dc, ec = b[:, None], c[:, None], d[:, None], e[:, None]
        for _ in range(2):
            f = (((x + bc) * x + cc_) * x + dc) * x + ec
            fp = ((4.0 * x + 3.0 * bc) * x + 2.0 * cc_) * x + dc
            x = x - np.where(np.abs(fp) > 0, f / fp, 0.0)
    valid &= np.isfinite(x)
    return x, valid


def bearings(pixels: np.ndarray, focal, principal_point) -> np.ndarray:
    """Unit viewing rays for pixels; ``focal`` broadcasts against the leading axes."""
    pixels = np.asarray(pixels, dtype=float)
    uv = pixels - np.asarray(principal_point, dtype=float)
    f = np.broadcast_to(np.asarray(focal, dtype=float)[..., None], uv.shape[:-1] + (1,))
    rays = np.concatenate([uv, f], axis=-1)
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def _triangle_frame(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Orthonormal frame (columns) attached to triangles ``a, b, c`` (..., 3)."""
    e1 = b - a
    e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    e2 = np.cross(n, e1)
    return np.stack([e1, e2, n], axis=-1)


def collinearity(points: np.ndarray) -> np.ndarray:
    """Sine of the angle at the first vertex of each triple, (n, 3, 3) -> (n,).

    Zero means the three points are collinear (or coincident).
    """
    u = points[:, 1] - points[:, 0]
    v = points[:, 2] - points[:, 0]
    den = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.linalg.norm(np.cross(u, v), axis=1) / den
    return np.nan_to_num(s, nan=0.0)


def non_degenerate(points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """True for samples where no three of the (n, m, 3) points are collinear."""
    m = points.shape[1]
    ok = np.ones(points.shape[0], dtype=bool)
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                ok &= collinearity(points[:, [i, j, k]]) > tol
    return ok


def _solve3(J: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Batched 3x3 solve by the adjugate; singular systems give zeros."""
    c0, c1, c2 = J[..., :, 0], J[..., :, 1], J[..., :, 2]
    det = np.einsum("...i,...i->...", c0, np.cross(c1, c2))
    x0 = np.einsum("...i,...i->...", r, np.cross(c1, c2))
    x1 = np.einsum("...i,...i->...", c0, np.cross(r, c2))
    x2 = np.einsum("...i,...i->...", c0, np.cross(c1, r))
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.stack([x0, x1, x2], axis=-1) / det[..., None]
    return np.where(np.isfinite(x), x, 0.0)


def p3p_batch(world: np.ndarray, rays: np.ndarray, polish: int = 2):
    """Solve many P3P problems.

    Parameters
    ----------
    world : (n, 3, 3) world points, one triple per row.
    rays : (n, 3, 3) unit bearing vectors matching ``world``.

    Returns
    -------
    rotations : (n, 4, 3, 3) world-to-camera rotations
    centers : (n, 4, 3) camera centres
    valid : (n, 4) mask of real, positive-depth solutions
    """
    world = np.asarray(world, dtype=float)
    rays = np.asarray(rays, dtype=float)
    n = world.shape[0]
    P0, P1, P2 = world[:, 0], world[:, 1], world[:, 2]
    j0, j1, j2 = rays[:, 0], rays[:, 1], rays[:, 2]
    a2 = ((P1 - P2) ** 2).sum(1)
    b2 = ((P0 - P2) ** 2).sum(1)
    c2 = ((P0 - P1) ** 2).sum(1)
    ca = (j1 * j2).sum(1)
    cb = (j0 * j2).sum(1)
    cg = (j0 * j1).sum(1)

    with np.errstate(divide="ignore", invalid="ignore"):
        amc = (a2 - c2) / b2
        apc = (a2 + c2) / b2
        coeffs = np.stack(
            [
                (amc - 1.0) ** 2 - 4.0 * c2 / b2 * ca**2,
                4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca**2 * cb),
                2.0
                * (
                    amc**2
                    - 1.0
                    + 2.0 * amc**2 * cb**2
                    + 2.0 * (b2 - c2) / b2 * ca**2
                    - 4.0 * apc * ca * cb * cg
                    + 2.0 * (b2 - a2) / b2 * cg**2
                ),
                4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg**2 * cb - (1.0 - apc) * ca * cg),
                (1.0 + amc) ** 2 - 4.0 * a2 / b2 * cg**2,
            ],
            axis=1,
        )
    v, valid = solve_quartic(coeffs)

    A2, B2, C2 = a2[:, None], b2[:, None], c2[:, None]
    CA, CB, CG = ca[:, None], cb[:, None], cg[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        s0 = np.sqrt(B2 / (1.0 + v * v - 2.0 * v * CB))
        # u from the c-equation; keep the root that also satisfies the a-equation
        disc = np.sqrt(np.maximum(CG * CG - 1.0 + C2 / s0**2, 0.0))
        u_candidates = np.stack([CG + disc, CG - disc], axis=-1)
        res = np.abs(s0[..., None] ** 2 * (u_candidates**2 + v[..., None] ** 2 - 2.0 * u_candidates * v[..., None] * CA[..., None]) - A2[..., None])
        u = np.take_along_axis(u_candidates, np.argmin(np.nan_to_num(res, nan=np.inf), axis=-1)[..., None], -1)[..., 0]
    depths = np.stack([s0, u * s0, v * s0], axis=-1)  # (n, 4, 3)

    # Gauss-Newton on the three law-of-cosines equations
    pairs = ((0, 1), (0, 2), (1, 2))
    cosines = np.stack([cg, cb, ca], axis=1)[:, None, :]
    targets = np.stack([c2, b2, a2], axis=1)[:, None, :]
    for _ in range(polish):
        s = depths
        r = np.stack([s[..., i] ** 2 + s[..., j] ** 2 - 2.0 * s[..., i] * s[..., j] * cosines[..., t] for t, (i, j) in enumerate(pairs)], -1) - targets
        J = np.zeros(s.shape[:-1] + (3, 3))
        for t, (i, j) in enumerate(pairs):
            J[..., t, i] = 2.0 * s[..., i] - 2.0 * s[..., j] * cosines[..., t]
            J[..., t, j] = 2.0 * s[..., j] - 2.0 * s[..., i] * cosines[..., t]
        depths = s - _solve3(J, r)
    s = depths
    r = np.stack([s[..., i] ** 2 + s[..., j] ** 2 - 2.0 * s[..., i] * s[..., j] * cosines[..., t] for t, (i, j) in enumerate(pairs)], -1) - targets
    scale = targets.max(-1)
    valid &= np.all(depths > 0, axis=-1) & np.all(np.isfinite(depths), axis=-1)
    with np.errstate(invalid="ignore"):
        valid &= np.abs(r).max(-1) <= 1e-6 * scale

    cam = depths[..., :, None] * rays[:, None, :, :]  # (n, 4, 3, 3)
    Fc = _triangle_frame(cam[..., 0, :], cam[..., 1, :], cam[..., 2, :])
    Fw = _triangle_frame(P0, P1, P2)[:, None]
    R = Fc @ np.swapaxes(Fw, -1, -2)
    C = P0[:, None, :] - np.einsum("nkji,nkj->nki", R, cam[..., 0, :])
    valid &= np.isfinite(R).all(axis=(-1, -2)) & np.isfinite(C).all(-1)
    R = np.where(valid[..., None, None], R, np.eye(3))
    C = np.where(valid[..., None], C, 0.0)
    return R, C, valid


def p3p_solve(points3d, pixels, focal: float, principal_point) -> list[CameraPose]:
    """All real P3P poses for three correspondences at a known focal length.

    Collinear (or coincident) world points return an empty list.
    """
    X = np.asarray(points3d, dtype=float).reshape(1, 3, 3)
    if not non_degenerate(X)[0]:
        return []
    rays = bearings(np.asarray(pixels, dtype=float).reshape(1, 3, 2), focal, principal_point)
    R, C, valid = p3p_batch(X, rays)
    return [CameraPose(R[0, i], C[0, i], focal, principal_point) for i in np.flatnonzero(valid[0])]


def _project_errors(R, C, f, pp, X, x):
    """Reprojection error of point ``X`` (n, 3) under (n, s) hypotheses."""
    cam = np.einsum("nsij,nsj->nsi", R, X[:, None, :] - C)
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.asarray(f)[..., None] * cam[..., :2] / z[..., None] + pp
        err = np.sqrt(((uv - x[:, None, :]) ** 2).sum(-1))
    return np.where(z > 0, err, np.inf)


def _fourth_point_fit(X, x, pp, focal):
    """P3P on the first three correspondences at ``focal`` (n,), scored by the fourth."""
    rays = bearings(x[:, :3], focal[:, None], pp)
    R, C, valid = p3p_batch(X[:, :3], rays)
    err = _project_errors(R, C, focal[:, None], pp, X[:, 3], x[:, 3])
    err = np.where(valid, err, np.inf)
    best = np.argmin(err, axis=1)
    idx = np.arange(len(best))
    return err[idx, best], R[idx, best], C[idx, best]


def focal_grid(principal_point, n: int = 40, span=(0.2, 5.0)) -> np.ndarray:
    """Geometric focal grid scaled by the image diagonal (twice the principal point norm)."""
    diag = 2.0 * float(np.hypot(*np.asarray(principal_point, dtype=float)))
    return np.geomspace(span[0] * diag, span[1] * diag, n)


def p4pf_batch(world, pixels, principal_point, grid=None, n_minima: int = 1, iterations: int = 40):
    """Pose and focal length from four correspondences, for many samples.

    Parameters
    ----------
    world : (n, 4, 3)
    pixels : (n, 4, 2)
    grid : focal values swept before refinement (default :func:`focal_grid`)
    n_minima : number of grid local minima refined per sample
    iterations : golden-section steps per refinement

    Returns
    -------
    rotations (n, L, 3, 3), centers (n, L, 3), focals (n, L), residuals (n, L)
    where ``L = n_minima`` and ``residuals`` is the fourth point's error in
    pixels (``inf`` where no candidate exists).
    """
    X = np.asarray(world, dtype=float)
    x = np.asarray(pixels, dtype=float)
    pp = np.asarray(principal_point, dtype=float)
    grid = focal_grid(pp) if grid is None else np.asarray(grid, dtype=float)
    n, g = X.shape[0], grid.size
    L = min(n_minima, g)

    Xr = np.repeat(X, g, axis=0)
    xr = np.repeat(x, g, axis=0)
    err, _, _ = _fourth_point_fit(Xr, xr, pp, np.tile(grid, n))
    err = err.reshape(n, g)

    # local minima of the grid error, best first
    padded = np.pad(err, ((0, 0), (1, 1)), constant_values=np.inf)
    is_min = (err <= padded[:, :-2]) & (err <= padded[:, 2:]) & np.isfinite(err)
    ranked = np.argsort(np.where(is_min, err, np.inf), axis=1, kind="stable")[:, :L]
    has = np.take_along_axis(is_min, ranked, axis=1)

    lo = grid[np.maximum(ranked - 1, 0)].ravel()
    hi = grid[np.minimum(ranked + 1, g - 1)].ravel()
    XL = np.repeat(X, L, axis=0)
    xL = np.repeat(x, L, axis=0)

    # golden-section search on log(f)
    a, b = np.log(lo), np.log(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _fourth_point_fit(XL, xL, pp, np.exp(c))[0]
    fd = _fourth_point_fit(XL, xL, pp, np.exp(d))[0]
    for _ in range(iterations):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        probe = np.where(left, c_next, d_next)
        fp = _fourth_point_fit(XL, xL, pp, np.exp(probe))[0]
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        c, d = c_next, d_next
    f_best = np.exp(np.where(fc <= fd, c, d))
    res, R, C = _fourth_point_fit(XL, xL, pp, f_best)
    res = np.where(has.ravel(), res, np.inf)
    return (
        R.reshape(n, L, 3, 3),
        C.reshape(n, L, 3),
        f_best.reshape(n, L),
        res.reshape(n, L),
    )


def p4p_solve(points3d, pixels, principal_point, grid=None, max_residual: float = 1.0, n_minima: int = 3) -> list[CameraPose]:
    """Pose-with-focal candidates for four correspondences.

    Candidates are ordered by the fourth point's residual; only those within
    ``max_residual`` pixels are returned.  Configurations where any three world
    points are collinear return an empty list.
    """
    X = np.asarray(points3d, dtype=float).reshape(1, 4, 3)
    x = np.asarray(pixels, dtype=float).reshape(1, 4, 2)
    if not non_degenerate(X)[0]:
        return []
    R, C, f, res = p4pf_batch(X, x, principal_point, grid=grid, n_minima=n_minima)
    order = np.argsort(res[0], kind="stable")
    return [
        CameraPose(R[0, i], C[0, i], f[0, i], principal_point)
        for i in order
        if np.isfinite(res[0, i]) and res[0, i] <= max_residual
    ]
