"""Robust two-view relative pose from correspondences whose rays intersect:
minimal five-point solver, linear eight-point solver, RANSAC, and the
decomposition vote generalized to rays that meet off the visible surface.

All point pairs here are normalized image coordinates (K already removed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousCheiralityError,
    DegenerateSampleError,
    InsufficientCorrespondencesError,
    NoValidHypothesisError,
)
from .geometry import SE3Pose, decompose_essential, essential_from_pose, sampson_errors

# ---------------------------------------------------------------------------
# trivariate polynomial bookkeeping for the minimal solver
#
# degree-1 basis: x, y, z, 1
# degree-2 basis: x2, y2, z2, xy, xz, yz, x, y, z, 1
# degree-3 basis: x3, y3, z3, x2y, xy2, x2z, xz2, y2z, yz2, xyz,
#                 x2, y2, z2, xy, xz, yz, x, y, z, 1
# ---------------------------------------------------------------------------

_B1 = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0)]
_B2 = [
    (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0),
]
_B3 = [
    (3, 0, 0), (0, 3, 0), (0, 0, 3), (2, 1, 0), (1, 2, 0), (2, 0, 1),
    (1, 0, 2), (0, 2, 1), (0, 1, 2), (1, 1, 1),
    (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1),
    (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 0),
]


def _product_table(basis_a, basis_b, basis_out):
    lookup = {m: i for i, m in enumerate(basis_out)}
    table = np.empty((len(basis_a), len(basis_b)), dtype=np.int64)
    for i, ma in enumerate(basis_a):
        for j, mb in enumerate(basis_b):
            table[i, j] = lookup[tuple(a + b for a, b in zip(ma, mb))]
    return table


_T11 = _product_table(_B1, _B1, _B2)  # deg1 * deg1 -> deg2
_T21 = _product_table(_B2, _B1, _B3)  # deg2 * deg1 -> deg3
_B3_EXP = np.array(_B3)
# (x, y) monomials of _B3 once z is substituted, constant last
_XY_MONOMS = [(3, 0), (0, 3), (2, 1), (1, 2), (2, 0), (0, 2), (1, 1), (1, 0), (0, 1), (0, 0)]
_XY_INDEX = {m: i for i, m in enumerate(_XY_MONOMS)}

# Nister's column arrangement: leading block
# [x3, y3, x2y, xy2, x2z, x2, y2z, y2, xyz, xy], trailing block
# [xz2, xz, x, yz2, yz, y, z3, z2, z, 1]
_COLUMN_PERM = [0, 1, 3, 4, 5, 10, 7, 11, 9, 13, 6, 14, 16, 8, 15, 17, 2, 12, 18, 19]


def _mul11(p, q):
    out = np.zeros(10)
    np.add.at(out, _T11.ravel(), np.outer(p, q).ravel())
    return out


def _mul21(p, q):
    out = np.zeros(20)
    np.add.at(out, _T21.ravel(), np.outer(p, q).ravel())
    return out


def _homogeneous(points):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.column_stack([pts, np.ones(len(pts))])


def _epipolar_matrix(x1, x2):
    """Rows of the linear system q2^T E q1 = 0, E flattened row-major."""
    q1 = _homogeneous(x1)
    q2 = _homogeneous(x2)
    return np.einsum("ni,nj->nij", q2, q1).reshape(len(q1), 9)


def essential_residuals(e, x1, x2):
    """|x2^T E x1| per pair (algebraic epipolar residual)."""
    q1 = _homogeneous(x1)
    q2 = _homogeneous(x2)
    return np.abs(np.einsum("ni,ij,nj->n", q2, np.asarray(e), q1))


def trace_constraint_residual(e) -> float:
    """Frobenius norm of 2 E E^T E - tr(E E^T) E."""
    e = np.asarray(e, dtype=np.float64)
    eet = e @ e.T
    return float(np.linalg.norm(2.0 * eet @ e - np.trace(eet) * e))


def _tail_parts(row):
    """Split a reduced-row tail [xz2 xz x yz2 yz y z3 z2 z 1] into the
    x-polynomial, y-polynomial and constant polynomial in z (coeffs high
    first)."""
    return row[0:3], row[3:6], row[6:10]


def _minus_z(p_hi, p_lo):
    """p_hi - z * p_lo for z-polynomials with coefficients highest first."""
    return np.polysub(p_hi, np.polymul([1.0, 0.0], p_lo))


def _monomials_and_grads(x, y, z):
    """Values and (d/dx, d/dy, d/dz) of the degree-3 monomial basis."""
    i, j, k = _B3_EXP[:, 0], _B3_EXP[:, 1], _B3_EXP[:, 2]
    xi = x ** i
    yj = y ** j
    zk = z ** k
    vals = xi * yj * zk
    dx = i * x ** np.maximum(i - 1, 0) * yj * zk
    dy = j * xi * y ** np.maximum(j - 1, 0) * zk
    dz = k * xi * yj * z ** np.maximum(k - 1, 0)
    return vals, dx, dy, dz


def _xy_from_root(m20, z):
    """(x, y) at a fixed z from the nullvector of the substituted system.

    Substituting z into the 10x20 cubic-constraint matrix leaves a 10x10
    linear system over the (x, y) monomials; its SVD nullvector is far more
    stable near clustered roots than back-substitution through the reduced
    rows.
    """
    a = np.zeros((10, 10))
    for col, (i, j, k) in enumerate(_B3):
        a[:, _XY_INDEX[(i, j)]] += m20[:, col] * z**k
    _, _, vt = np.linalg.svd(a)
    v = vt[-1]
    const = v[_XY_INDEX[(0, 0)]]
    if abs(const) < 1e-12 * np.linalg.norm(v):
        return None
    return v[_XY_INDEX[(1, 0)]] / const, v[_XY_INDEX[(0, 1)]] / const


def _polish_candidate(m20, x, y, z, iterations=4):
    """Gauss-Newton on the ten cubic constraints jointly over (x, y, z)."""
    p = np.array([x, y, z], dtype=np.float64)
    for _ in range(iterations):
        vals, dx, dy, dz = _monomials_and_grads(*p)
        r = m20 @ vals
        jac = np.column_stack([m20 @ dx, m20 @ dy, m20 @ dz])
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        p += step
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(p)):
            break
    return p


def five_point(x1, x2) -> list[np.ndarray]:
    """Essential-matrix candidates of a minimal 5-pair problem.

    Nister's construction: 4-dim nullspace of the 5x9 epipolar system, ten
    cubic constraints (det E and the trace constraint), Gauss-Jordan
    elimination, determinant expansion to a degree-10 polynomial in z whose
    real roots (companion-matrix eigenvalues via np.roots) give candidates.

    Returns up to 10 matrices with unit Frobenius norm, each satisfying
    det(E) ~ 0, the trace constraint, and all five epipolar equations.
    Raises DegenerateSampleError when the 5x9 system is rank deficient.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    if len(x1) != 5 or len(x2) != 5:
        raise ValueError("five_point needs exactly 5 pairs")
    if not (np.isfinite(x1).all() and np.isfinite(x2).all()):
        raise ValueError("pairs must be finite")
    q = _epipolar_matrix(x1, x2)
    _, s, vt = np.linalg.svd(q)
    if s[4] <= 1e-9 * max(s[0], 1e-30):
        raise DegenerateSampleError("5x9 data matrix is rank deficient")
    basis = vt[-4:][::-1]  # x, y, z, 1 coefficients of E
    eb = basis.reshape(4, 3, 3)

    def entry(i, j):
        return eb[:, i, j]  # 4-vector over (x, y, z, 1)

    # det(E) = 0
    det = (
        _mul21(_mul11(entry(0, 1), entry(1, 2)) - _mul11(entry(0, 2), entry(1, 1)), entry(2, 0))
        + _mul21(_mul11(entry(0, 2), entry(1, 0)) - _mul11(entry(0, 0), entry(1, 2)), entry(2, 1))
        + _mul21(_mul11(entry(0, 0), entry(1, 1)) - _mul11(entry(0, 1), entry(1, 0)), entry(2, 2))
    )

    # 2 E E^T E - tr(E E^T) E = 0 (nine cubic equations)
    eet = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            acc = np.zeros(10)
            for k in range(3):
                acc += _mul11(entry(i, k), entry(j, k))
            eet[i][j] = acc
    trace = eet[0][0] + eet[1][1] + eet[2][2]
    rows = [det]
    for i in range(3):
        for j in range(3):
            acc = np.zeros(20)
            for k in range(3):
                a_ik = 2.0 * eet[i][k] - (trace if i == k else 0.0)
                acc += _mul21(a_ik, entry(k, j))
            rows.append(acc)
    m20 = np.array(rows)
    m = m20[:, _COLUMN_PERM]

    try:
        reduced = np.linalg.solve(m[:, :10], m[:, 10:])
    except np.linalg.LinAlgError as exc:
        raise DegenerateSampleError("constraint system is singular") from exc

    kx, ky, kc = _tail_parts(reduced[4])
    fx, fy, fc = _tail_parts(reduced[5])
    gx, gy, gc = _tail_parts(reduced[6])
    hx, hy, hc = _tail_parts(reduced[7])
    ix, iy, ic = _tail_parts(reduced[8])
    jx, jy, jc = _tail_parts(reduced[9])
    b = [
        [_minus_z(kx, fx), _minus_z(ky, fy), _minus_z(kc, fc)],
        [_minus_z(gx, hx), _minus_z(gy, hy), _minus_z(gc, hc)],
        [_minus_z(ix, jx), _minus_z(iy, jy), _minus_z(ic, jc)],
    ]
    p1 = np.polysub(np.polymul(b[1][2], b[0][1]), np.polymul(b[0][2], b[1][1]))
    p2 = np.polysub(np.polymul(b[0][2], b[1][0]), np.polymul(b[1][2], b[0][0]))
    p3 = np.polysub(np.polymul(b[0][0], b[1][1]), np.polymul(b[0][1], b[1][0]))
    n = np.polyadd(
        np.polyadd(np.polymul(p1, b[2][0]), np.polymul(p2, b[2][1])),
        np.polymul(p3, b[2][2]),
    )
    if not np.any(np.abs(n) > 1e-30):
        raise DegenerateSampleError("vanishing determinant polynomial")

    roots = np.roots(n)
    candidates = []
    for z in roots:
        if abs(z.imag) > 1e-8 * max(1.0, abs(z)):
            continue
        z = float(z.real)
        xy = _xy_from_root(m20, z)
        if xy is None:
            bz = np.array([[np.polyval(p, z) for p in row] for row in b])
            sol, *_ = np.linalg.lstsq(bz[:, :2], -bz[:, 2], rcond=None)
            xy = (sol[0], sol[1])
        x, y, z = _polish_candidate(m20, xy[0], xy[1], z)
        e = (basis.T @ np.array([x, y, z, 1.0])).reshape(3, 3)
        norm = np.linalg.norm(e)
        if norm < 1e-12:
            continue
        e /= norm
        if abs(np.linalg.det(e)) > 1e-8:
            continue
        if trace_constraint_residual(e) > 1e-7:
            continue
        if essential_residuals(e, x1, x2).max() > 1e-8:
            continue
        candidates.append(e)
    return candidates


def eight_point(x1, x2) -> np.ndarray:
    """Linear essential-matrix estimate from >= 8 normalized pairs.

    Least-squares nullspace of the epipolar system, projected onto the
    essential manifold (singular values replaced by their mean, mean, 0) and
    scaled to unit Frobenius norm. Raises DegenerateSampleError when the data
    matrix has rank < 8 (e.g. pure-rotation motion).
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    if len(x1) < 8:
        raise InsufficientCorrespondencesError("eight_point needs >= 8 pairs")
    q = _epipolar_matrix(x1, x2)
    _, s, vt = np.linalg.svd(q)
    if s[7] <= 1e-8 * max(s[0], 1e-30):
        raise DegenerateSampleError("data matrix rank < 8")
    e0 = vt[-1].reshape(3, 3)
    u, sv, vt2 = np.linalg.svd(e0)
    mean = 0.5 * (sv[0] + sv[1])
    e = u @ np.diag([mean, mean, 0.0]) @ vt2
    return e / np.linalg.norm(e)


def cheirality_votes(e_or_pose, x1, x2):
    """Per-candidate count of pairs whose closest-approach ray parameters are
    both positive (the cheirality test generalized to virtual pairs)."""
    if isinstance(e_or_pose, SE3Pose):
        poses = [e_or_pose]
    else:
        poses = decompose_essential(e_or_pose)
    q1 = _homogeneous(x1)
    q2 = _homogeneous(x2)
    u1 = q1 / np.linalg.norm(q1, axis=1, keepdims=True)
    votes = []
    for pose in poses:
        r, t = pose.rotation, pose.translation
        u2 = q2 @ r  # rows: R^T q2
        u2 = u2 / np.linalg.norm(u2, axis=1, keepdims=True)
        w = r.T @ t  # o1 - o2 with camera 1 at the origin
        b = np.einsum("ni,ni->n", u1, u2)
        d = u1 @ w
        ecomp = u2 @ w
        denom = 1.0 - b * b
        ok = denom > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = (b * ecomp - d) / denom
            d2 = (ecomp - b * d) / denom
        votes.append(int(np.count_nonzero(ok & (d1 > 0.0) & (d2 > 0.0))))
    return poses, votes


def recover_pose(e, x1, x2) -> SE3Pose:
    """Pick the decomposition with the best generalized cheirality vote.

    Counts, per candidate, the pairs whose closest-approach parameters d1,
    d2 are both positive; classic cheirality (triangulated point in front of
    both cameras) is the special case of exactly intersecting rays. Raises
    AmbiguousCheiralityError when the two best candidates tie within 1% of
    the pair count.
    """
    poses, votes = cheirality_votes(np.asarray(e), x1, x2)
    order = np.argsort(votes)[::-1]
    best, second = order[0], order[1]
    n = len(np.atleast_2d(x1))
    if votes[best] - votes[second] <= 0.01 * n:
        raise AmbiguousCheiralityError(
            f"top cheirality votes {votes[best]} vs {votes[second]} of {n}"
        )
    return poses[best]


@dataclass(frozen=True)
class RansacParams:
    """Sampling and scoring knobs of the robust estimator."""

    max_iterations: int = 2000
    inlier_threshold: float = 1e-4  # Sampson error, normalized coordinates
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold <= 0.0:
            raise ValueError("inlier threshold must be positive")


@dataclass
class RelativePoseEstimate:
    """Winning relative pose with its support."""

    pose: SE3Pose  # unit-baseline world(=camera a)-to-camera-b transform
    essential: np.ndarray  # [t]_x R of `pose`, unit Frobenius norm
    inlier_mask: np.ndarray
    score: int
    mean_inlier_error: float
    iterations: int

    @property
    def num_inliers(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


def _adaptive_cap(inlier_ratio: float, confidence: float) -> float:
    w5 = inlier_ratio**5
    if w5 >= 1.0 - 1e-12:
        return 1.0
    if w5 <= 1e-12:
        return math.inf
    return math.log(1.0 - confidence) / math.log(1.0 - w5)


def ransac_essential(x1, x2, params: RansacParams | None = None) -> RelativePoseEstimate:
    """Five-point RANSAC over normalized pairs with adaptive stopping.

    The best hypothesis maximizes the inlier count under the Sampson
    threshold; ties break on lower mean inlier error, then on the earlier
    iteration. Deterministic for a fixed seed.
    """
    params = params or RansacParams()
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1, 2)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1, 2)
    n = len(x1)
    if n < 5:
        raise InsufficientCorrespondencesError(f"{n} pairs < minimal sample of 5")
    rng = np.random.default_rng(params.seed)

    best = None  # (score, -mean_err, -iteration, e, mask)
    cap = float(params.max_iterations)
    it = 0
    while it < min(cap, params.max_iterations):
        sample = rng.choice(n, size=5, replace=False)
        it += 1
        try:
            hypotheses = five_point(x1[sample], x2[sample])
        except DegenerateSampleError:
            continue
        for e in hypotheses:
            err = sampson_errors(e, x1, x2)
            mask = err < params.inlier_threshold
            score = int(np.count_nonzero(mask))
            if score == 0:
                continue
            mean_err = float(err[mask].mean())
            key = (score, -mean_err, -it)
            if best is None or key > best[0]:
                best = (key, e, mask)
                cap = _adaptive_cap(score / n, params.confidence)
    if best is None:
        raise NoValidHypothesisError("no sample produced a scorable hypothesis")

    _, e_best, mask = best
    pose = recover_pose(e_best, x1[mask], x2[mask])
    essential = essential_from_pose(pose)
    essential = essential / np.linalg.norm(essential)
    err = sampson_errors(essential, x1, x2)
    final_mask = err < params.inlier_threshold
    if not final_mask.any():
        final_mask = mask  # keep the hypothesis support if recomputation thins out
    return RelativePoseEstimate(
        pose=pose,
        essential=essential,
        inlier_mask=final_mask,
        score=int(np.count_nonzero(final_mask)),
        mean_inlier_error=float(err[final_mask].mean()),
        iterations=it,
    )
