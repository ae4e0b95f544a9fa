"""Scaled monomial bases, polygon/edge quadrature and gradient-space splitting.

Tensor-valued polynomials of degree <= k are flattened with index
t = e*n + a, where e = 2*i + j enumerates the 2x2 entry (i,j) and a indexes
the scaled scalar monomial. Gradient columns store h_K * grad(m_a e_i), so
all coefficient matrices stay O(1) on any cell.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCellError, NumericalDegeneracyError
from .mesh import cell_geometry, shoelace_area


def nmono(k):
    """Dimension of scalar P_k in two variables."""
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k):
    """Graded (total degree, then x-power descending) exponent list for P_k."""
    out = []
    for d in range(k + 1):
        for b2 in range(d + 1):
            out.append((d - b2, b2))
    return out


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (npts, 2)
    weights: np.ndarray  # (npts,)
    order: int


@dataclass(frozen=True)
class EdgeQuadratureRule:
    points: np.ndarray   # (npts, 2) physical points
    params: np.ndarray   # signed arclength / h_F, in [-1/2, 1/2]
    weights: np.ndarray
    order: int


class ScaledMonomialBasis2D:
    """Monomials ((x - x_K)/h_K)^beta, |beta| <= degree, in graded order."""

    def __init__(self, degree, centroid, diameter):
        self.degree = degree
        self.centroid = np.asarray(centroid, dtype=float)
        self.diameter = float(diameter)
        self.exponents = monomial_exponents(degree)
        self.index = {b: i for i, b in enumerate(self.exponents)}

    def __len__(self):
        return len(self.exponents)

    def evaluate(self, points):
        """Values at points, shape (nmono, npts)."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.centroid[0]) / self.diameter
        eta = (pts[:, 1] - self.centroid[1]) / self.diameter
        return np.array([xi ** b1 * eta ** b2 for b1, b2 in self.exponents])


class ScaledMonomialBasis1D:
    """Edge monomials s^j, with s the signed arclength from the midpoint / h_F."""

    def __init__(self, degree, midpoint, length, tangent):
        self.degree = degree
        self.midpoint = np.asarray(midpoint, dtype=float)
        self.length = float(length)
        self.tangent = np.asarray(tangent, dtype=float)

    def __len__(self):
        return self.degree + 1

    def evaluate_params(self, s):
        s = np.atleast_1d(s)
        return np.array([s ** j for j in range(self.degree + 1)])

    def gram(self):
        """Exact edge Gram h_F * integral of s^(j+l) over [-1/2, 1/2]."""
        m = self.degree + 1
        g = np.zeros((m, m))
        for j in range(m):
            for l in range(m):
                if (j + l) % 2 == 0:
                    g[j, l] = self.length / (2.0 ** (j + l) * (j + l + 1))
        return g


# ---------------------------------------------------------------------------
# quadrature


def _duffy_triangle_rule(order):
    """Gauss rule on the reference triangle (0,0),(1,0),(0,1), exact to `order`."""
    nu = (order + 3) // 2
    nv = (order + 2) // 2
    xu, wu = np.polynomial.legendre.leggauss(nu)
    xv, wv = np.polynomial.legendre.leggauss(nv)
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu, wv = 0.5 * wu, 0.5 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu * u, wv)  # Duffy Jacobian u
    x = U * (1.0 - V)
    y = U * V
    return x.ravel(), y.ravel(), W.ravel()


def _is_convex_corner(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) > 0


def _point_in_triangle(p, a, b, c):
    d1 = (p[0] - b[0]) * (a[1] - b[1]) - (a[0] - b[0]) * (p[1] - b[1])
    d2 = (p[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (p[1] - c[1])
    d3 = (p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])
    neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
    pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
    return not (neg and pos)


def ear_clip(pts):
    """Triangulate a simple CCW polygon; returns a list of vertex-index triples."""
    idx = list(range(len(pts)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise DegenerateCellError("ear clipping failed to terminate")
        n = len(idx)
        clipped = False
        for pos in range(n):
            i0, i1, i2 = idx[pos - 1], idx[pos], idx[(pos + 1) % n]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if not _is_convex_corner(a, b, c):
                continue
            if any(_point_in_triangle(pts[j], a, b, c)
                   for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(pos)
            clipped = True
            break
        if not clipped:
            raise DegenerateCellError("no ear found; polygon may be non-simple")
    tris.append(tuple(idx))
    return tris


def _rule_from_triangles(pts, triangles, order):
    xr, yr, wr = _duffy_triangle_rule(order)
    all_pts, all_w = [], []
    for (i0, i1, i2) in triangles:
        a, b, c = pts[i0], pts[i1], pts[i2]
        jac = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        px = a[0] + (b[0] - a[0]) * xr + (c[0] - a[0]) * yr
        py = a[1] + (b[1] - a[1]) * xr + (c[1] - a[1]) * yr
        all_pts.append(np.stack([px, py], axis=1))
        all_w.append(wr * jac)
    return QuadratureRule(np.concatenate(all_pts), np.concatenate(all_w), order)


def cell_quadrature(pts, order, method="fan"):
    """Quadrature exact for total degree <= order on a simple CCW polygon.

    The default rule fans triangles out of the centroid; polygons that are not
    star-shaped with respect to it fall back to ear clipping.
    """
    pts = np.asarray(pts, dtype=float)
    if order < 0:
        raise ValueError("quadrature order must be >= 0")
    if shoelace_area(pts) <= 1e-14:
        raise DegenerateCellError("degenerate polygon")
    if method == "earclip":
        return _rule_from_triangles(pts, ear_clip(pts), order)

    # fan from the centroid, with vertices appended so triangle indices work
    from .mesh import polygon_centroid

    centroid = polygon_centroid(pts)
    ext = np.vstack([pts, centroid])
    ic = len(pts)
    n = len(pts)
    tris = [(ic, i, (i + 1) % n) for i in range(n)]
    for (i0, i1, i2) in tris:
        a, b, c = ext[i0], ext[i1], ext[i2]
        if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) <= 0:
            return _rule_from_triangles(pts, ear_clip(pts), order)
    return _rule_from_triangles(ext, tris, order)


def edge_quadrature(p0, p1, order):
    """Gauss-Legendre rule on the segment p0 -> p1, exact for degree <= order."""
    if order < 0:
        raise ValueError("quadrature order must be >= 0")
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    npts = (order + 2) // 2
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * x  # in [-1/2, 1/2]
    h = float(np.linalg.norm(p1 - p0))
    mid = 0.5 * (p0 + p1)
    t = (p1 - p0) / h
    points = mid[None, :] + np.outer(s * h, t)
    return EdgeQuadratureRule(points, s, 0.5 * w * h, order)


def gram_matrix(basis_a, basis_b, rule):
    """L2 Gram of two 2D monomial bases under a cell quadrature rule."""
    if rule.order < basis_a.degree + basis_b.degree:
        raise ValueError("quadrature order insufficient for Gram matrix")
    va = basis_a.evaluate(rule.points)
    vb = basis_b.evaluate(rule.points)
    return (va * rule.weights) @ vb.T


# ---------------------------------------------------------------------------
# gradient split of tensor P_k


@dataclass(frozen=True)
class GradientSplitBases:
    k: int
    grad_km1: np.ndarray  # (4*nmono(k-1), 2*(nmono(k)-1)) basis of grad P_k
    grad_k: np.ndarray    # (4*nmono(k),  2*(nmono(k+1)-1)) basis of grad P_{k+1}
    perp: np.ndarray      # (4*nmono(k), k*(k+1)) L2-orthonormal complement basis


def _gradient_columns(deg_target, deg_source, index_target):
    """Columns of h_K*grad(m_a e_i) in tensor-P_(deg_target) coordinates.

    Source monomials m_a run over degrees 1..deg_source; columns are ordered
    a-major then component i in {0,1}.
    """
    n_t = nmono(deg_target)
    src = monomial_exponents(deg_source)
    cols = []
    for a in range(1, len(src)):
        b1, b2 = src[a]
        for i in (0, 1):
            col = np.zeros(4 * n_t)
            if b1 > 0:
                col[(2 * i + 0) * n_t + index_target[(b1 - 1, b2)]] = b1
            if b2 > 0:
                col[(2 * i + 1) * n_t + index_target[(b1, b2 - 1)]] = b2
            cols.append(col)
    return np.column_stack(cols)


def build_gradient_split(k, scalar_gram_k, area):
    """Split tensor P_k into grad P_{k+1} and its L2(K)-orthogonal complement.

    scalar_gram_k is the Gram matrix of the scaled scalar monomials of degree
    <= k on the cell; the complement basis is returned orthonormal in the
    area-normalized L2(K) inner product.
    """
    if k < 1:
        raise ValueError("gradient split requires k >= 1")
    n_k = nmono(k)
    index_k = {b: i for i, b in enumerate(monomial_exponents(k))}
    index_km1 = {b: i for i, b in enumerate(monomial_exponents(k - 1))}
    grad_km1 = _gradient_columns(k - 1, k, index_km1)
    grad_k = _gradient_columns(k, k + 1, index_k)

    m_ten = np.kron(np.eye(4), scalar_gram_k)
    c = grad_k.T @ m_ten
    u, s, vt = np.linalg.svd(c)
    dim_g = grad_k.shape[1]
    if s[dim_g - 1] <= 1e-10 * s[0]:
        raise NumericalDegeneracyError("gradient basis numerically rank deficient")
    null = vt[dim_g:].T
    if null.shape[1] != k * (k + 1):
        raise NumericalDegeneracyError("unexpected orthogonal-complement dimension")
    gn = null.T @ m_ten @ null / area
    try:
        chol = np.linalg.cholesky(gn)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("complement Gram not positive definite") from exc
    perp = null @ np.linalg.inv(chol).T
    return GradientSplitBases(k, grad_km1, grad_k, perp)


# ---------------------------------------------------------------------------
# per-cell workhorse


class CellBasis:
    """All per-cell polynomial data needed to build VEM operators.

    Holds the geometry, a quadrature rule of order 2k+3, scaled monomial
    values up to degree k+1, the scalar Gram matrices, and the gradient split.
    """

    def __init__(self, mesh, c, k, quad_order=None):
        self.k = k
        self.cell = c
        self.geom = cell_geometry(mesh, c)
        self.loop = mesh.cells[c]
        pts = mesh.cell_coords(c)
        order = quad_order if quad_order is not None else 2 * k + 3
        self.rule = cell_quadrature(pts, order)
        self.basis_kp1 = ScaledMonomialBasis2D(k + 1, self.geom.centroid,
                                               self.geom.diameter)
        self.vals_kp1 = self.basis_kp1.evaluate(self.rule.points)
        self.n_k = nmono(k)
        self.n_kp1 = nmono(k + 1)
        vw = self.vals_kp1 * self.rule.weights
        self.gram_kp1 = vw @ self.vals_kp1.T
        self.gram_k = self.gram_kp1[: self.n_k, : self.n_k]
        self.gram_ten = np.kron(np.eye(4), self.gram_k)
        self.split = build_gradient_split(k, self.gram_k, self.geom.area)

    @property
    def area(self):
        return self.geom.area

    @property
    def diameter(self):
        return self.geom.diameter

    def eval_scalar_k(self, points):
        basis = ScaledMonomialBasis2D(self.k, self.geom.centroid, self.geom.diameter)
        return basis.evaluate(points)
