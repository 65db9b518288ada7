"""One-bit estimation of the regression direction.

The estimator maximizes the linear score ``c . theta`` accumulated from
sign feedback, subject to an L1 ball (sparsity) and an L2 ball (scale):

    maximize c . theta   s.t.  ||theta||_1 <= rho1,  ||theta||_2 <= rho2.

``solve`` returns the exact global maximizer (minimum L2 norm on flat optimal
faces); ``reference_solve`` is an independent projected-ascent oracle used by
the tests; ``kkt_residual`` certifies stationarity of a candidate point.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass
class ScoreVector:
    """Accumulated sign-weighted covariate sum and the number of
    observations that produced it."""

    c: np.ndarray
    count: int = 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)


@dataclass(frozen=True)
class BallConstraints:
    rho1: float
    rho2: float

    def __post_init__(self):
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ValueError("ball radii must be positive")


def _coef(score) -> np.ndarray:
    return np.asarray(getattr(score, "c", score), dtype=float)


def solve(score: Union[ScoreVector, np.ndarray], balls: BallConstraints) -> np.ndarray:
    """Exact maximizer of the score over the L1/L2 ball intersection.

    Solution form: soft-threshold ``sign(c) * max(|c| - lam, 0)`` rescaled to
    the L2 sphere, with ``lam`` located by monotone bisection when the L1
    constraint binds and ``lam = 0`` otherwise.  A zero score returns the
    zero vector; exact score ties resolve to the minimum-L2-norm maximizer.
    """
    c = _coef(score)
    rho1, rho2 = balls.rho1, balls.rho2
    if not np.any(c):
        return np.zeros_like(c)

    norm2 = float(np.linalg.norm(c))
    unconstrained = rho2 * c / norm2
    if float(np.abs(unconstrained).sum()) <= rho1 * (1 + 1e-12):
        return unconstrained

    # L1 binds.  The optimal face of the L1 ball is spanned by the coordinates
    # tied at max |c|; its minimum-norm point is the equal split.
    m = float(np.abs(c).max())
    tied = np.abs(c) == m
    t = int(tied.sum())
    face = np.where(tied, np.sign(c) * (rho1 / t), 0.0)
    if rho1 / math.sqrt(t) <= rho2 * (1 + 1e-12):
        return face

    # Both constraints bind: find lam with ||soft||_1 / ||soft||_2 = rho1/rho2.
    # Prefix sums over the sorted magnitudes give each bisection probe in
    # O(log d): with k coords above lam, ||soft||_1 = S1_k - k lam and
    # ||soft||_2^2 = S2_k - 2 lam S1_k + k lam^2.
    target = rho1 / rho2
    asc = np.sort(np.abs(c)).tolist()
    s1 = np.cumsum(asc[::-1]).tolist()
    s2 = np.cumsum(np.square(asc)[::-1]).tolist()
    size = len(asc)

    def ratio(lam: float) -> float:
        k = max(size - bisect.bisect_right(asc, lam), 1)
        l1 = s1[k - 1] - k * lam
        l2sq = s2[k - 1] - 2 * lam * s1[k - 1] + k * lam * lam
        return l1 / math.sqrt(max(l2sq, 1e-300))

    lo, hi = 0.0, m
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if ratio(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * m:
            break
    # take the hi side so the rescaled L1 norm lands at or below rho1
    w = np.sign(c) * np.maximum(np.abs(c) - hi, 0.0)
    return rho2 * w / float(np.linalg.norm(w))


# ---------------------------------------------------------------------------
# Independent oracle: projected ascent with Dykstra-style projections
# ---------------------------------------------------------------------------


def project_l2(v: np.ndarray, rho2: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v if n <= rho2 else v * (rho2 / n)


def project_l1(v: np.ndarray, rho1: float) -> np.ndarray:
    """Euclidean projection onto the L1 ball (sorted-threshold method)."""
    a = np.abs(v)
    if float(a.sum()) <= rho1:
        return v
    u = np.sort(a)[::-1]
    cum = np.cumsum(u)
    j = np.arange(1, len(u) + 1)
    ok = u - (cum - rho1) / j > 0
    r = int(np.max(np.flatnonzero(ok))) + 1
    tau = (cum[r - 1] - rho1) / r
    return np.sign(v) * np.maximum(a - tau, 0.0)


def project_intersection(
    v: np.ndarray, balls: BallConstraints, max_passes: int = 5000, tol: float = 1e-14
) -> np.ndarray:
    """Dykstra's alternating projections onto the two balls.

    Stops when the correction vectors settle; small per-pass movement alone is
    not a safe criterion (the corrections can keep drifting long after the
    iterate barely moves).
    """
    x = v.copy()
    p = np.zeros_like(v)
    q = np.zeros_like(v)
    scale = 1.0 + float(np.max(np.abs(v)))
    for _ in range(max_passes):
        y = project_l2(x + p, balls.rho2)
        p_new = x + p - y
        x_new = project_l1(y + q, balls.rho1)
        q_new = y + q - x_new
        drift = max(
            float(np.max(np.abs(p_new - p))),
            float(np.max(np.abs(q_new - q))),
            float(np.max(np.abs(x_new - x))),
        )
        x, p, q = x_new, p_new, q_new
        if drift < tol * scale:
            break
    return x


def reference_solve(
    score: Union[ScoreVector, np.ndarray],
    balls: BallConstraints,
    iters: int = 10_000,
) -> np.ndarray:
    """Projected ascent on the score with step ``1 / ||c||_2``, projecting each
    iterate onto the ball intersection.  Test oracle only; converges to an
    optimal point but makes no tie-break promise."""
    c = _coef(score)
    if not np.any(c):
        return np.zeros_like(c)
    step = 1.0 / float(np.linalg.norm(c))
    theta = np.zeros_like(c)
    stall = 0
    for _ in range(iters):
        new = project_intersection(theta + step * c, balls)
        if float(np.max(np.abs(new - theta))) < 1e-12 * (1.0 + float(np.max(np.abs(theta)))):
            stall += 1
            if stall >= 3:
                theta = new
                break
        else:
            stall = 0
        theta = new
    return theta


# ---------------------------------------------------------------------------
# KKT certificate
# ---------------------------------------------------------------------------


def _segment_minimum(c_act, s_act, b_act, q_hinge, lo, hi, allow_l2):
    """Minimize the stationarity residual squared over lam1 in [lo, hi] and
    lam2 >= 0 (lam2 forced to 0 unless allow_l2).

    Residual^2 = sum (c_j - lam1 s_j - lam2 b_j)^2 over support coords
               + sum (q - lam1)^2 over hinge-active zero coords.
    Quadratic on this segment, so the minimum is at the stationary point or
    on an edge.
    """
    saa = float(np.dot(s_act, s_act)) + len(q_hinge)
    sab = float(np.dot(s_act, b_act))
    sbb = float(np.dot(b_act, b_act))
    sat = float(np.dot(s_act, c_act)) + float(np.sum(q_hinge))
    sbt = float(np.dot(b_act, c_act))

    def value(l1, l2):
        r = c_act - l1 * s_act - l2 * b_act
        h = q_hinge - l1
        return float(np.dot(r, r) + np.dot(h, h))

    cands: list[tuple[float, float]] = []
    if allow_l2 and sbb > 0:
        det = saa * sbb - sab * sab
        if det > 1e-300:
            l1 = (sat * sbb - sbt * sab) / det
            l2 = (saa * sbt - sab * sat) / det
            cands.append((min(max(l1, lo), hi), max(l2, 0.0)))
        for l1_edge in (lo, hi):
            l2 = max((sbt - sab * l1_edge) / sbb, 0.0)
            cands.append((l1_edge, l2))
    # lam2 = 0 edge (also the whole problem when L2 is slack)
    l1 = sat / saa if saa > 0 else 0.0
    cands.append((min(max(l1, lo), hi), 0.0))
    cands.append((lo, 0.0))
    cands.append((hi, 0.0))
    return min(value(l1, l2) for l1, l2 in cands)


def _min_residual_sq(theta, c, allow_l1, allow_l2):
    support = theta != 0.0
    c_act = c[support]
    s_act = np.sign(theta[support])
    b_act = 2.0 * theta[support]
    q = np.abs(c[~support])

    if not allow_l1:
        # no hinge freedom: zero coords contribute |c_j|^2 outright
        fixed = float(np.dot(q, q))
        if allow_l2 and float(np.dot(b_act, b_act)) > 0:
            l2 = max(float(np.dot(b_act, c_act)) / float(np.dot(b_act, b_act)), 0.0)
        else:
            l2 = 0.0
        r = c_act - l2 * b_act
        return float(np.dot(r, r)) + fixed

    # breakpoints where zero-coordinate hinges switch off
    bps = np.unique(np.concatenate([[0.0], np.sort(q), [float(np.abs(c).max()) + 1.0]]))
    best = np.inf
    for lo, hi in zip(bps[:-1], bps[1:]):
        mid = 0.5 * (lo + hi)
        q_hinge = q[q >= mid]  # hinge active throughout this segment
        best = min(best, _segment_minimum(c_act, s_act, b_act, q_hinge, lo, hi, allow_l2))
    return best


def kkt_residual(
    theta,
    score: Union[ScoreVector, np.ndarray],
    balls: BallConstraints,
    feas_tol: float = 1e-9,
    activity_tol: float = 1e-7,
) -> float:
    """Norm of the best stationarity residual ``c - lam1 g1 - 2 lam2 theta``
    over valid multipliers with complementary slackness; zero at optima.

    Rejects infeasible candidates (beyond ``feas_tol``).
    """
    theta = np.asarray(theta, dtype=float)
    c = _coef(score)
    n1 = float(np.abs(theta).sum())
    n2 = float(np.linalg.norm(theta))
    scale1 = max(1.0, balls.rho1)
    scale2 = max(1.0, balls.rho2)
    if n1 > balls.rho1 + feas_tol * scale1 or n2 > balls.rho2 + feas_tol * scale2:
        raise ValueError("candidate point is infeasible")
    allow_l1 = n1 >= balls.rho1 - activity_tol * scale1
    allow_l2 = n2 >= balls.rho2 - activity_tol * scale2
    return math.sqrt(max(_min_residual_sq(theta, c, allow_l1, allow_l2), 0.0))
