"""Rotated-box geometry for text regions.

Polygons are ``(4, 2)`` float arrays of pixel coordinates. Boxes are
:class:`RotatedBox` instances in a canonical ``(cx, cy, w, h, theta)`` form.
The positional score compares two boxes through the 2-Wasserstein distance
between the Gaussians they induce.

The 2x2 linear algebra is written out with scalar ``math`` calls. The
tracker evaluates a few hundred box pairs per frame and small numpy arrays
would dominate the cost.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateGeometry

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi

GAUSSIAN_VARIANTS = ("linear", "squared")

_AREA_EPS = 1e-12
_SQUARE_RTOL = 1e-9


# ---------------------------------------------------------------------------
# polygons
# ---------------------------------------------------------------------------

def signed_area(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def as_polygon(points: Iterable) -> np.ndarray:
    """Validate a quadrilateral and return it as a counter-clockwise array.

    Accepts any iterable of 4 points or 8 flat numbers. Raises
    :class:`DegenerateGeometry` for zero area, self-intersection or
    non-finite input.
    """
    arr = np.asarray(points, dtype=float)
    if arr.shape == (8,):
        arr = arr.reshape(4, 2)
    if arr.shape != (4, 2):
        raise DegenerateGeometry(f"expected 4 vertices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateGeometry("polygon has non-finite coordinates")
    if _segments_cross(arr[0], arr[1], arr[2], arr[3]) or _segments_cross(
        arr[1], arr[2], arr[3], arr[0]
    ):
        raise DegenerateGeometry("polygon is self-intersecting")
    area = signed_area(arr)
    scale = max(1.0, float(np.abs(arr).max()) ** 2)
    if abs(area) <= _AREA_EPS * scale:
        raise DegenerateGeometry("polygon has zero area")
    if area < 0:
        arr = arr[::-1].copy()
    return arr


def convex_hull(points: np.ndarray) -> list[tuple[float, float]]:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _shoelace(poly: Sequence[tuple[float, float]]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    s = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def _clip(subject: list, clipper: list) -> list:
    """Sutherland-Hodgman: clip ``subject`` by convex CCW ``clipper``."""
    output = subject
    n = len(clipper)
    for i in range(n):
        if not output:
            break
        ax, ay = clipper[i]
        bx, by = clipper[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = output
        output = []
        m = len(inp)
        for j in range(m):
            px, py = inp[j - 1]
            cx, cy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sc = ex * (cy - ay) - ey * (cx - ax)
            if sc >= 0:
                if sp < 0:
                    t = sp / (sp - sc)
                    output.append((px + t * (cx - px), py + t * (cy - py)))
                output.append((cx, cy))
            elif sp >= 0:
                t = sp / (sp - sc)
                output.append((px + t * (cx - px), py + t * (cy - py)))
    return output


def polygon_iou(p1, p2) -> float:
    """Intersection over union of two quadrilaterals.

    Both inputs are reduced to their convex hulls, so non-convex quads are
    scored by their hulls.
    """
    a = as_polygon(p1)
    b = as_polygon(p2)
    if (
        a[:, 0].max() <= b[:, 0].min()
        or b[:, 0].max() <= a[:, 0].min()
        or a[:, 1].max() <= b[:, 1].min()
        or b[:, 1].max() <= a[:, 1].min()
    ):
        return 0.0
    ha = convex_hull(a)
    hb = convex_hull(b)
    area_a = _shoelace(ha)
    area_b = _shoelace(hb)
    inter = _shoelace(_clip(ha, hb))
    if inter <= 0.0:
        return 0.0
    union = area_a + area_b - inter
    return float(min(1.0, max(0.0, inter / union)))


# ---------------------------------------------------------------------------
# rotated boxes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RotatedBox:
    """Rotated rectangle ``(cx, cy, w, h, theta)``.

    Construction canonicalises the fields: ``w >= h`` and theta lies in
    ``[-pi/2, pi/2)``. Squares (``w == h`` up to 1e-9 relative) further
    reduce theta to ``[-pi/4, pi/4)``.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        cx, cy, w, h, t = (float(v) for v in (self.cx, self.cy, self.w, self.h, self.theta))
        if not all(math.isfinite(v) for v in (cx, cy, w, h, t)):
            raise DegenerateGeometry("box has non-finite fields")
        if w <= 0 or h <= 0:
            raise DegenerateGeometry(f"box sides must be positive, got w={w}, h={h}")
        if h > w:
            w, h = h, w
            t += HALF_PI
        if math.isclose(w, h, rel_tol=_SQUARE_RTOL):
            reduced = (t + QUARTER_PI) % HALF_PI - QUARTER_PI
            if round((t - reduced) / HALF_PI) % 2:
                w, h = h, w
            t = reduced
        else:
            t = (t + HALF_PI) % math.pi - HALF_PI
        object.__setattr__(self, "cx", cx)
        object.__setattr__(self, "cy", cy)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "theta", t)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)

    def corners(self) -> np.ndarray:
        """Corner polygon in counter-clockwise order."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = 0.5 * self.w, 0.5 * self.h
        local = ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh))
        return np.array(
            [(self.cx + c * x - s * y, self.cy + s * x + c * y) for x, y in local]
        )

    def moved(self, dx: float = 0.0, dy: float = 0.0, dtheta: float = 0.0) -> "RotatedBox":
        return RotatedBox(self.cx + dx, self.cy + dy, self.w, self.h, self.theta + dtheta)


def box_to_polygon(box: RotatedBox) -> np.ndarray:
    return box.corners()


def min_area_rotated_box(poly) -> RotatedBox:
    """Minimum-area enclosing rectangle of a polygon (rotating calipers).

    One side of the optimal rectangle is collinear with a hull edge, so it
    suffices to try every hull edge direction.
    """
    pts = as_polygon(poly)
    hull = convex_hull(pts)
    if len(hull) < 3 or _shoelace(hull) <= 0:
        raise DegenerateGeometry("polygon hull has zero area")
    best = None
    n = len(hull)
    for i in range(n):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % n]
        length = math.hypot(x2 - x1, y2 - y1)
        if length == 0:
            continue
        ux, uy = (x2 - x1) / length, (y2 - y1) / length
        us = [ux * x + uy * y for x, y in hull]
        vs = [-uy * x + ux * y for x, y in hull]
        u0, u1 = min(us), max(us)
        v0, v1 = min(vs), max(vs)
        area = (u1 - u0) * (v1 - v0)
        if best is None or area < best[0] * (1 - 1e-12):
            best = (area, ux, uy, u0, u1, v0, v1)
    _, ux, uy, u0, u1, v0, v1 = best
    mu, mv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    cx = ux * mu - uy * mv
    cy = uy * mu + ux * mv
    return RotatedBox(cx, cy, u1 - u0, v1 - v0, math.atan2(uy, ux))


# ---------------------------------------------------------------------------
# Gaussians and the Wasserstein distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gaussian2:
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def sym(self) -> tuple[float, float, float]:
        """Covariance as ``(a, b, d)`` for ``[[a, b], [b, d]]``."""
        s = self.sigma
        return float(s[0, 0]), float(0.5 * (s[0, 1] + s[1, 0])), float(s[1, 1])


def _box_sym(box: RotatedBox, variant: str) -> tuple[float, float, float]:
    if variant == "linear":
        l1, l2 = 0.5 * box.w, 0.5 * box.h
    elif variant == "squared":
        l1, l2 = 0.25 * box.w * box.w, 0.25 * box.h * box.h
    else:
        raise ValueError(f"unknown gaussian variant {variant!r}; expected one of {GAUSSIAN_VARIANTS}")
    c, s = math.cos(box.theta), math.sin(box.theta)
    a = l1 * c * c + l2 * s * s
    b = (l1 - l2) * c * s
    d = l1 * s * s + l2 * c * c
    return a, b, d


def box_to_gaussian(box: RotatedBox, variant: str = "linear") -> Gaussian2:
    """Gaussian with mean at the box center and covariance ``R S R^T``.

    ``variant="linear"`` uses ``S = diag(w/2, h/2)``; ``"squared"`` uses the
    conventional ``S = diag(w^2/4, h^2/4)``.
    """
    a, b, d = _box_sym(box, variant)
    return Gaussian2(np.array([box.cx, box.cy]), np.array([[a, b], [b, d]]))


def _check_psd(a: float, b: float, d: float, asym: float = 0.0) -> None:
    scale = max(abs(a), abs(d), abs(b), 1e-300)
    if not all(math.isfinite(v) for v in (a, b, d)):
        raise DegenerateGeometry("covariance has non-finite entries")
    if asym > 1e-9 * max(scale, 1.0):
        raise DegenerateGeometry("covariance is not symmetric")
    if a < 0 or d < 0 or a * d - b * b < -1e-12 * scale * scale:
        raise DegenerateGeometry("covariance is not positive semi-definite")


def _sym_sqrt(a: float, b: float, d: float) -> tuple[float, float, float]:
    det = max(a * d - b * b, 0.0)
    tr = a + d
    if tr <= 0:
        return 0.0, 0.0, 0.0
    if det > 1e-12 * tr * tr:
        s = math.sqrt(det)
        t = math.sqrt(tr + 2.0 * s)
        return (a + s) / t, b / t, (d + s) / t
    # near-singular: eigendecomposition keeps the small eigenvalue accurate
    half = 0.5 * (a - d)
    r = math.hypot(half, b)
    mid = 0.5 * tr
    l1 = math.sqrt(max(mid + r, 0.0))
    l2 = math.sqrt(max(mid - r, 0.0))
    phi = 0.5 * math.atan2(2.0 * b, a - d)
    c, s = math.cos(phi), math.sin(phi)
    return (
        l1 * c * c + l2 * s * s,
        (l1 - l2) * c * s,
        l1 * s * s + l2 * c * c,
    )


def sqrtm_2x2(m) -> np.ndarray:
    """Principal square root of a symmetric PSD 2x2 matrix."""
    m = np.asarray(m, dtype=float)
    a, b, d = float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1])
    _check_psd(a, b, d, abs(float(m[0, 1] - m[1, 0])))
    p, q, r = _sym_sqrt(a, b, d)
    return np.array([[p, q], [q, r]])


def _bures_sq(s1: tuple, s2: tuple) -> float:
    """Squared Bures distance from the square roots of two covariances.

    ``Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`` equals
    ``min_U ||S1^1/2 - S2^1/2 U||_F^2`` over rotations U. Evaluating the
    Frobenius norm at the optimal rotation avoids the cancellation of the
    trace form and is exactly zero for equal covariances.
    """
    p1, q1, r1 = s1
    p2, q2, r2 = s2
    c11 = p1 * p2 + q1 * q2
    c12 = p1 * q2 + q1 * r2
    c21 = q1 * p2 + r1 * q2
    c22 = q1 * q2 + r1 * r2
    phi = math.atan2(c12 - c21, c11 + c22)
    c, s = math.cos(phi), math.sin(phi)
    # S2^1/2 @ R(phi)
    m11 = p2 * c + q2 * s
    m12 = -p2 * s + q2 * c
    m21 = q2 * c + r2 * s
    m22 = -q2 * s + r2 * c
    return (p1 - m11) ** 2 + (q1 - m12) ** 2 + (q1 - m21) ** 2 + (r1 - m22) ** 2


def _wasserstein_sym(mu1, sym1, mu2, sym2) -> float:
    dx = mu1[0] - mu2[0]
    dy = mu1[1] - mu2[1]
    d2 = dx * dx + dy * dy + _bures_sq(_sym_sqrt(*sym1), _sym_sqrt(*sym2))
    if d2 < 0:
        # unreachable for the Frobenius form, kept for the contract
        tol = 1e-9 * max(1.0, sym1[0] + sym1[2] + sym2[0] + sym2[2])
        if d2 < -tol:
            raise DegenerateGeometry(f"negative squared distance {d2}")
        d2 = 0.0
    return math.sqrt(d2)


def wasserstein_distance(g1: Gaussian2, g2: Gaussian2) -> float:
    """2-Wasserstein distance between two planar Gaussians."""
    syms = []
    for g in (g1, g2):
        s = np.asarray(g.sigma, dtype=float)
        if s.shape != (2, 2):
            raise DegenerateGeometry(f"covariance must be 2x2, got {s.shape}")
        sym = (float(s[0, 0]), float(0.5 * (s[0, 1] + s[1, 0])), float(s[1, 1]))
        _check_psd(*sym, asym=abs(float(s[0, 1] - s[1, 0])))
        syms.append(sym)
    mu1 = [float(v) for v in np.asarray(g1.mu, dtype=float)]
    mu2 = [float(v) for v in np.asarray(g2.mu, dtype=float)]
    return _wasserstein_sym(mu1, syms[0], mu2, syms[1])


def _normaliser(sym1, sym2) -> float:
    a1, b1, d1 = sym1
    a2, b2, d2 = sym2
    tr = a1 * a2 + 2.0 * b1 * b2 + d1 * d2
    if tr <= 0:
        raise DegenerateGeometry("Tr(sigma1 sigma2) must be positive")
    return tr ** 0.25


def positional_score(b1: RotatedBox, b2: RotatedBox, alpha: float = 1.0, variant: str = "linear") -> float:
    """``1 - alpha * d / Tr(sigma1 sigma2)^(1/4)``; 1 for identical boxes, unbounded below."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    sym1 = _box_sym(b1, variant)
    sym2 = _box_sym(b2, variant)
    d = _wasserstein_sym((b1.cx, b1.cy), sym1, (b2.cx, b2.cy), sym2)
    return 1.0 - alpha * d / _normaliser(sym1, sym2)


def positional_matrix(
    rows: Sequence[RotatedBox],
    cols: Sequence[RotatedBox],
    alpha: float = 1.0,
    variant: str = "linear",
) -> np.ndarray:
    """Pairwise :func:`positional_score` as an ``len(rows) x len(cols)`` array."""
    out = np.empty((len(rows), len(cols)))
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    col_data = [((b.cx, b.cy), _box_sym(b, variant)) for b in cols]
    col_roots = [_sym_sqrt(*sym) for _, sym in col_data]
    for i, b in enumerate(rows):
        sym1 = _box_sym(b, variant)
        root1 = _sym_sqrt(*sym1)
        for j, ((mx, my), sym2) in enumerate(col_data):
            dx = b.cx - mx
            dy = b.cy - my
            d = math.sqrt(dx * dx + dy * dy + _bures_sq(root1, col_roots[j]))
            out[i, j] = 1.0 - alpha * d / _normaliser(sym1, sym2)
    return out


def iou_matrix(rows: Sequence[np.ndarray], cols: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros((len(rows), len(cols)))
    for i, p in enumerate(rows):
        for j, q in enumerate(cols):
            out[i, j] = polygon_iou(p, q)
    return out
