"""Independent reference implementations used to cross-check the library.

Everything here deliberately takes a different route than the package code:
scipy least_squares instead of the in-package quasi-Newton solver, quaternion
algebra instead of trace formulas, grid searches instead of closed forms.
"""

import numpy as np
from scipy.optimize import least_squares, minimize
from scipy.spatial.transform import Rotation


def ray_triangle_hits_oracle(vertices, faces, origin, direction):
    """All forward ray-triangle hits by solving each 3x3 system directly."""
    hits = []
    for fi, (a, b, c) in enumerate(faces):
        va, vb, vc = vertices[a], vertices[b], vertices[c]
        m = np.column_stack([vb - va, vc - va, -np.asarray(direction)])
        if abs(np.linalg.det(m)) < 1e-14:
            continue
        u, v, t = np.linalg.solve(m, np.asarray(origin) - va)
        if u >= -1e-10 and v >= -1e-10 and u + v <= 1.0 + 1e-10 and t > 1e-9:
            hits.append((t, fi, np.array([1.0 - u - v, u, v])))
    hits.sort(key=lambda h: (h[0], h[1]))
    return hits


def ray_gap_grid_oracle(o1, d1, o2, d2, d_max=50.0, coarse=400, refine_iters=3):
    """Min distance between two half-lines by nested grid search."""
    o1, d1, o2, d2 = (np.asarray(x, dtype=np.float64) for x in (o1, d1, o2, d2))
    lo1, hi1, lo2, hi2 = 0.0, d_max, 0.0, d_max
    best = np.inf
    for _ in range(refine_iters):
        s = np.linspace(lo1, hi1, coarse)
        t = np.linspace(lo2, hi2, coarse)
        p = o1[None, :] + s[:, None] * d1[None, :]
        q = o2[None, :] + t[:, None] * d2[None, :]
        d = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        best = d[i, j]
        span1 = (hi1 - lo1) / coarse * 4
        span2 = (hi2 - lo2) / coarse * 4
        lo1, hi1 = max(0.0, s[i] - span1), s[i] + span1
        lo2, hi2 = max(0.0, t[j] - span2), t[j] + span2
    return best


def auc_trapezoid_oracle(errors, threshold):
    """Exact area under the step cumulative-recall curve on [0, threshold].

    Integrates the piecewise-constant recall over its breakpoints (a
    trapezoid rule is exact on each constant piece).
    """
    errors = np.sort(np.asarray(errors, dtype=np.float64))
    n = len(errors)
    xs = [0.0] + [float(e) for e in errors if e < threshold] + [float(threshold)]
    area = 0.0
    for x0, x1 in zip(xs[:-1], xs[1:]):
        recall = np.count_nonzero(errors <= x0 + 0.5 * (x1 - x0)) / n
        area += recall * (x1 - x0)
    return area / threshold


def pose_error_quaternion_oracle(r_est, t_est, r_gt, t_gt):
    """Pose error via quaternion geodesic + arccos of unit-vector dot."""
    q1 = Rotation.from_matrix(r_est).as_quat()
    q2 = Rotation.from_matrix(r_gt).as_quat()
    dot = abs(float(np.dot(q1, q2)))
    rot_err = np.degrees(2.0 * np.arccos(min(1.0, dot)))
    a = np.asarray(t_est) / np.linalg.norm(t_est)
    b = np.asarray(t_gt) / np.linalg.norm(t_gt)
    trans_err = np.degrees(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))
    return max(rot_err, trans_err)


def sampson_geometric_oracle(e, x1, x2):
    """Smallest squared joint correction restoring the epipolar constraint."""

    def constraint(d):
        p1 = np.append(x1 + d[:2], 1.0)
        p2 = np.append(x2 + d[2:], 1.0)
        return p2 @ e @ p1

    res = minimize(
        lambda d: d @ d,
        np.zeros(4),
        constraints={"type": "eq", "fun": constraint},
        method="SLSQP",
        options={"ftol": 1e-16, "maxiter": 200},
    )
    return float(res.fun)


def classic_ba_oracle(poses, intrinsics, fixed, points, observations, max_nfev=400):
    """Classic bundle adjustment with scipy's trust-region least squares.

    poses: list of (R, t); fixed: bool per camera; observations: list of
    (cam_index, point_index, pixel (2,)). Returns the final summed squared
    reprojection error in pixel^2 units.
    """
    free = [i for i, fx in enumerate(fixed) if not fx]
    cam_slot = {c: k for k, c in enumerate(free)}
    x0 = []
    for c in free:
        r, t = poses[c]
        x0.extend(Rotation.from_matrix(r).as_rotvec())
        x0.extend(t)
    x0.extend(np.asarray(points).ravel())
    n_pts = len(points)

    def residuals(x):
        out = np.empty(2 * len(observations))
        pts = x[6 * len(free):].reshape(n_pts, 3)
        for row, (ci, pi, uv) in enumerate(observations):
            if ci in cam_slot:
                base = 6 * cam_slot[ci]
                r = Rotation.from_rotvec(x[base : base + 3]).as_matrix()
                t = x[base + 3 : base + 6]
            else:
                r, t = poses[ci]
            k = intrinsics[ci]
            pc = r @ pts[pi] + t
            u = k.fx * pc[0] / pc[2] + k.skew * pc[1] / pc[2] + k.cx
            v = k.fy * pc[1] / pc[2] + k.cy
            out[2 * row] = uv[0] - u
            out[2 * row + 1] = uv[1] - v
        return out

    sol = least_squares(residuals, np.array(x0), method="lm", max_nfev=max_nfev)
    r = residuals(sol.x)
    return float(r @ r)
