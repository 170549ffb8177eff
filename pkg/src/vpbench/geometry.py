"""Projective homographies, convex clipping, and inscribed rectangles.

Coordinates are pixels. Polygons are stored with positive shoelace
orientation (vertex order (0,0),(W,0),(W,H),(0,H) for a canvas), which
this module calls counter-clockwise throughout.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCorrespondence,
    DegeneratePolygon,
    EmptyIntersection,
    PointAtInfinity,
    SamplingExhausted,
    SingularMatrix,
)
from .rng import Rng, derive_seed

__all__ = [
    "Homography",
    "Point2",
    "ConvexPolygon",
    "RectAA",
    "Rng",
    "derive_seed",
    "solve_projective",
    "sample_homography",
    "apply_point",
    "invert",
    "compose",
    "clip_to_rect",
    "max_inscribed_rect",
    "grid_inscribed_rect",
    "canvas_corners",
    "polygon_area",
]

# Normative tolerances; changing them changes the artifact.
CONVEXITY_TOL = 1e-7
DUPLICATE_TOL = 1e-9
DET_TOL = 1e-9
DENOM_TOL = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Point2:
    """A finite 2D point in pixel coordinates."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


class Homography:
    """3x3 projective transform, normalized so m[2][2] == 1.

    Attributes:
        m: read-only (3, 3) float64 matrix, row-major.
        alpha: strength that produced it, or None for derived transforms.
    """

    __slots__ = ("m", "alpha")

    def __init__(self, m, alpha=None):
        m = np.array(m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography matrix has non-finite entries")
        w = m[2, 2]
        if abs(w) <= DENOM_TOL:
            raise SingularMatrix("cannot normalize: m[2][2] is ~ 0")
        if w != 1.0:
            m = m / w
            m[2, 2] = 1.0
        det = float(np.linalg.det(m))
        if abs(det) <= DET_TOL:
            raise SingularMatrix(f"|det| = {abs(det):.3e} <= {DET_TOL}")
        m.setflags(write=False)
        self.m = m
        self.alpha = None if alpha is None else float(alpha)

    @classmethod
    def identity(cls, alpha=None):
        return cls(np.eye(3), alpha=alpha)

    def __repr__(self):
        return f"Homography(m={self.m.tolist()!r}, alpha={self.alpha!r})"


class ConvexPolygon:
    """Convex polygon with counter-clockwise vertices.

    Invariants checked at construction: at least 3 vertices, consecutive
    edge cross products >= -1e-7, no vertex pair closer than 1e-9, and
    positive shoelace area.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        verts = tuple(vertices)
        if len(verts) < 3:
            raise ValueError(f"polygon needs >= 3 vertices, got {len(verts)}")
        for p in verts:
            if not isinstance(p, Point2):
                raise TypeError(f"vertices must be Point2, got {type(p).__name__}")
        n = len(verts)
        for i in range(n):
            for j in range(i + 1, n):
                d = math.hypot(verts[i].x - verts[j].x, verts[i].y - verts[j].y)
                if d <= DUPLICATE_TOL:
                    raise ValueError(f"vertices {i} and {j} coincide (distance {d:.3e})")
        for i in range(n):
            a, b, c = verts[i], verts[(i + 1) % n], verts[(i + 2) % n]
            cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
            if cross < -CONVEXITY_TOL:
                raise ValueError(f"reflex corner at vertex {(i + 1) % n} (cross {cross:.3e})")
        if polygon_area(verts) <= 0.0:
            raise ValueError("vertices are not in counter-clockwise order")
        self.vertices = verts

    def area(self):
        return polygon_area(self.vertices)

    def as_array(self):
        return np.array([(p.x, p.y) for p in self.vertices], dtype=np.float64)

    def bounds(self):
        """(xmin, ymin, xmax, ymax) of the vertex set."""
        xs = [p.x for p in self.vertices]
        ys = [p.y for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def contains_point(self, p, tol=CONVEXITY_TOL):
        """True if p is inside, with tol in px of signed-distance slack."""
        n = len(self.vertices)
        for i in range(n):
            a = self.vertices[i]
            b = self.vertices[(i + 1) % n]
            ex, ey = b.x - a.x, b.y - a.y
            cross = ex * (p.y - a.y) - ey * (p.x - a.x)
            if cross < -tol * math.hypot(ex, ey):
                return False
        return True

    def __repr__(self):
        return f"ConvexPolygon({list(self.vertices)!r})"


@dataclass(frozen=True)
class RectAA:
    """Axis-aligned rectangle, x0 < x1 and y0 < y1."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"empty rectangle ({self.x0},{self.y0})..({self.x1},{self.y1})")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def corners(self):
        """Corner points in counter-clockwise order."""
        return (
            Point2(self.x0, self.y0),
            Point2(self.x1, self.y0),
            Point2(self.x1, self.y1),
            Point2(self.x0, self.y1),
        )


def polygon_area(vertices):
    """Signed shoelace area; positive for counter-clockwise order."""
    n = len(vertices)
    acc = 0.0
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        acc += a.x * b.y - b.x * a.y
    return 0.5 * acc


def canvas_corners(width, height):
    """Corners of a width x height canvas in counter-clockwise order."""
    w = float(width)
    h = float(height)
    return (Point2(0.0, 0.0), Point2(w, 0.0), Point2(w, h), Point2(0.0, h))


def solve_projective(src, dst):
    """Solve for the homography mapping four source points to four targets.

    Standard direct linear transform: each correspondence contributes two
    rows of an 8x8 system in the matrix entries with m[2][2] fixed at 1.

    Args:
        src: four Point2 forming a strictly convex quadrilateral.
        dst: four Point2, the images of src in order.

    Returns:
        Homography with apply_point(H, src[i]) == dst[i] within 1e-9 px.

    Raises:
        DegenerateCorrespondence: the system's condition estimate exceeds 1e12.
    """
    src = tuple(src)
    dst = tuple(dst)
    if len(src) != 4 or len(dst) != 4:
        raise ValueError("solve_projective needs exactly 4 correspondences")
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i, (s, d) in enumerate(zip(src, dst)):
        x, y = s.x, s.y
        u, v = d.x, d.y
        a[2 * i] = (x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u)
        b[2 * i] = u
        a[2 * i + 1] = (0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v)
        b[2 * i + 1] = v
    cond = float(np.linalg.cond(a))
    if not math.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateCorrespondence(f"correspondence system condition {cond:.3e}")
    h = np.linalg.solve(a, b)
    m = np.array(
        [
            [h[0], h[1], h[2]],
            [h[3], h[4], h[5]],
            [h[6], h[7], 1.0],
        ]
    )
    return Homography(m)


def _strictly_convex(points):
    """All consecutive edge crosses strictly positive (CCW, no reflex)."""
    n = len(points)
    for i in range(n):
        a, b, c = points[i], points[(i + 1) % n], points[(i + 2) % n]
        cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x)
        if cross <= CONVEXITY_TOL:
            return False
    return True


def sample_homography(width, height, alpha, rng):
    """Draw a random strength-alpha homography for a width x height canvas.

    Each corner is displaced by dx ~ U(-alpha*width/4, +alpha*width/4) and
    dy ~ U(-alpha*height/4, +alpha*height/4), independently per corner, in
    corner order (0,0),(W,0),(W,H),(0,H) with dx drawn before dy. Draws are
    rejected until the displaced corners form a strictly convex CCW quad.

    Args:
        width: canvas width in px, >= 2.
        height: canvas height in px, >= 2.
        alpha: strength in [0, 1]; 0 yields the exact identity.
        rng: Rng consumed for the corner draws.

    Returns:
        Homography with .alpha set.

    Raises:
        SamplingExhausted: after 100 rejected draws.
    """
    if width < 2 or height < 2:
        raise ValueError(f"canvas must be at least 2x2, got {width}x{height}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    corners = canvas_corners(width, height)
    mx = alpha * width / 4.0
    my = alpha * height / 4.0
    for _ in range(100):
        displaced = []
        moved = False
        for c in corners:
            dx = rng.uniform(-mx, mx)
            dy = rng.uniform(-my, my)
            if dx != 0.0 or dy != 0.0:
                moved = True
            displaced.append(Point2(c.x + dx, c.y + dy))
        if not moved:
            return Homography.identity(alpha=alpha)
        if _strictly_convex(displaced):
            h = solve_projective(corners, displaced)
            return Homography(h.m, alpha=alpha)
    raise SamplingExhausted(f"100 non-convex corner draws at alpha={alpha}")


def apply_point(h, p):
    """Apply a homography to a point.

    Raises:
        PointAtInfinity: the projective denominator is within 1e-12 of zero.
    """
    m = h.m
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    if abs(w) <= DENOM_TOL:
        raise PointAtInfinity(f"denominator {w:.3e} at ({p.x}, {p.y})")
    x = (m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]) / w
    y = (m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]) / w
    return Point2(x, y)


def invert(h):
    """Inverse transform; compose(h, invert(h)) is identity within 1e-9."""
    det = float(np.linalg.det(h.m))
    if abs(det) <= DET_TOL:
        raise SingularMatrix(f"|det| = {abs(det):.3e} <= {DET_TOL}")
    return Homography(np.linalg.inv(h.m))


def compose(a, b):
    """Homography applying b first, then a (matrix product a.m @ b.m)."""
    return Homography(a.m @ b.m)


def clip_to_rect(poly, rect):
    """Clip a convex polygon against an axis-aligned rectangle.

    Sutherland-Hodgman against the rectangle's four half-planes; vertex
    order is preserved, so the result stays counter-clockwise.

    Raises:
        EmptyIntersection: the clipped region has area below 1e-9.
    """
    verts = [(p.x, p.y) for p in poly.vertices]
    planes = (
        (0, rect.x0, True),
        (0, rect.x1, False),
        (1, rect.y0, True),
        (1, rect.y1, False),
    )
    for axis, bound, keep_ge in planes:
        if not verts:
            break
        out = []
        n = len(verts)
        for i in range(n):
            cur = verts[i]
            nxt = verts[(i + 1) % n]
            cur_in = cur[axis] >= bound if keep_ge else cur[axis] <= bound
            nxt_in = nxt[axis] >= bound if keep_ge else nxt[axis] <= bound
            if cur_in:
                out.append(cur)
            if cur_in != nxt_in:
                t = (bound - cur[axis]) / (nxt[axis] - cur[axis])
                if axis == 0:
                    out.append((bound, cur[1] + t * (nxt[1] - cur[1])))
                else:
                    out.append((cur[0] + t * (nxt[0] - cur[0]), bound))
        verts = out
    # Clipping can emit coincident vertices where an edge grazes a plane.
    clean = []
    for v in verts:
        if not clean or math.hypot(v[0] - clean[-1][0], v[1] - clean[-1][1]) > DUPLICATE_TOL:
            clean.append(v)
    while len(clean) >= 2 and math.hypot(
        clean[0][0] - clean[-1][0], clean[0][1] - clean[-1][1]
    ) <= DUPLICATE_TOL:
        clean.pop()
    if len(clean) < 3:
        raise EmptyIntersection("clipped polygon degenerated below 3 vertices")
    points = tuple(Point2(x, y) for x, y in clean)
    if polygon_area(points) < 1e-9:
        raise EmptyIntersection(f"clipped area {polygon_area(points):.3e} < 1e-9")
    return ConvexPolygon(points)


def _vertical_span(verts, x):
    """(lo, hi) y-range of a convex polygon's boundary at abscissa x.

    verts is the (N, 2) vertex array; x must lie within [xmin, xmax].
    """
    lo = math.inf
    hi = -math.inf
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if x1 == x2:
            if x1 == x:
                lo = min(lo, y1, y2)
                hi = max(hi, y1, y2)
            continue
        if (x1 - x) * (x2 - x) <= 0.0:
            t = (x - x1) / (x2 - x1)
            y = y1 + t * (y2 - y1)
            lo = min(lo, y)
            hi = max(hi, y)
    return lo, hi


def _span_area(verts, x1, x2):
    """Area and y-range of the widest rectangle on the span [x1, x2].

    The upper boundary U is concave and the lower boundary L is convex,
    so over [x1, x2] the feasible height is min(U(x1), U(x2)) minus
    max(L(x1), L(x2)).
    """
    l1, u1 = _vertical_span(verts, x1)
    l2, u2 = _vertical_span(verts, x2)
    y0 = max(l1, l2)
    y1 = min(u1, u2)
    h = y1 - y0
    if h <= 0.0 or x2 <= x1:
        return 0.0, y0, y1
    return (x2 - x1) * h, y0, y1


def _grid_best_span(verts, xs):
    """Best (area, x1, x2) over all ordered pairs drawn from grid xs."""
    n = len(xs)
    lo = np.empty(n)
    hi = np.empty(n)
    for i, x in enumerate(xs):
        lo[i], hi[i] = _vertical_span(verts, x)
    heights = np.minimum(hi[:, None], hi[None, :]) - np.maximum(lo[:, None], lo[None, :])
    widths = xs[None, :] - xs[:, None]
    areas = widths * heights
    areas[(widths <= 0.0) | (heights <= 0.0)] = -math.inf
    i, j = np.unravel_index(int(np.argmax(areas)), areas.shape)
    return float(areas[i, j]), float(xs[i]), float(xs[j])


def _ternary_max(f, lo, hi, tol=1e-6):
    """Argmax of a unimodal f on [lo, hi] to within tol."""
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) < f(m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def max_inscribed_rect(poly):
    """Maximum-area inscribed axis-aligned rectangle of a convex polygon.

    Seeds with the best span on a 64x64 grid over [xmin, xmax]^2, then
    refines x1 and x2 alternately by ternary search (to 1e-6 px) within
    one grid step of the seed. The y-extent for any span follows from the
    concave-upper / convex-lower boundary decomposition.

    Args:
        poly: convex polygon with area above 1e-6.

    Returns:
        RectAA inside poly whose area is within 2% of the grid oracle at
        resolution 400.

    Raises:
        DegeneratePolygon: polygon area is at or below 1e-6.
    """
    area = poly.area()
    if area <= 1e-6:
        raise DegeneratePolygon(f"polygon area {area:.3e} <= 1e-6")
    verts = poly.as_array()
    xmin, ymin, xmax, ymax = poly.bounds()
    xs = np.linspace(xmin, xmax, 64)
    best_area, bx1, bx2 = _grid_best_span(verts, xs)
    step = (xmax - xmin) / 63.0

    for _ in range(3):
        lo = max(xmin, bx1 - step)
        hi = min(bx2, bx1 + step)
        if hi > lo:
            cand = _ternary_max(lambda x: _span_area(verts, x, bx2)[0], lo, hi)
            if _span_area(verts, cand, bx2)[0] > _span_area(verts, bx1, bx2)[0]:
                bx1 = cand
        lo = max(bx1, bx2 - step)
        hi = min(xmax, bx2 + step)
        if hi > lo:
            cand = _ternary_max(lambda x: _span_area(verts, bx1, x)[0], lo, hi)
            if _span_area(verts, bx1, cand)[0] > _span_area(verts, bx1, bx2)[0]:
                bx2 = cand

    # Endpoint-at-a-time search stalls on symmetric shapes (a diamond's
    # area drops when either endpoint moves alone), so refine again in
    # (center, halfwidth) coordinates. Both slices are log-concave, so
    # full-range ternary applies.
    c = 0.5 * (bx1 + bx2)
    w = 0.5 * (bx2 - bx1)

    def area_cw(cc, ww):
        return _span_area(verts, cc - ww, cc + ww)[0]

    for _ in range(3):
        wmax = min(c - xmin, xmax - c)
        if wmax > 0.0:
            cand = _ternary_max(lambda v: area_cw(c, v), 0.0, wmax)
            if area_cw(c, cand) > area_cw(c, w):
                w = cand
        lo, hi = xmin + w, xmax - w
        if hi > lo:
            cand = _ternary_max(lambda v: area_cw(v, w), lo, hi)
            if area_cw(cand, w) > area_cw(c, w):
                c = cand
    if area_cw(c, w) > _span_area(verts, bx1, bx2)[0]:
        bx1, bx2 = c - w, c + w

    rect_area, y0, y1 = _span_area(verts, bx1, bx2)
    if rect_area <= 0.0:
        raise DegeneratePolygon("no axis-aligned rectangle with positive area fits")
    return RectAA(bx1, y0, bx2, y1)


def grid_inscribed_rect(poly, resolution):
    """Exhaustive inscribed-rectangle search on a coordinate grid.

    Oracle counterpart of max_inscribed_rect: tries every ordered pair of
    grid abscissae over the bounding box and takes the exact best y-span
    for each, which reduces the four-way grid search to O(resolution^2).

    Args:
        poly: convex polygon.
        resolution: number of grid lines per axis, >= 8.

    Returns:
        Best RectAA found on the grid.
    """
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    verts = poly.as_array()
    xmin, ymin, xmax, ymax = poly.bounds()
    xs = np.linspace(xmin, xmax, resolution)
    best_area, bx1, bx2 = _grid_best_span(verts, xs)
    if best_area <= 0.0:
        raise DegeneratePolygon("no grid rectangle with positive area fits")
    _, y0, y1 = _span_area(verts, bx1, bx2)
    return RectAA(bx1, y0, bx2, y1)
