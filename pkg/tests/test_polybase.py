import numpy as np
import pytest

from vemvisco.polybase import (ScaledMonomialBasis1D, ScaledMonomialBasis2D,
                               build_gradient_split, cell_quadrature, ear_clip,
                               edge_quadrature, gram_matrix,
                               monomial_exponents, nmono)

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_convex_polygon(rng, nv=6, scale=1.0):
    ang = np.sort(rng.uniform(0, 2 * np.pi, nv))
    rad = rng.uniform(0.5, 1.0, nv)
    return scale * np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)


def test_nmono():
    assert [nmono(k) for k in range(4)] == [1, 3, 6, 10]
    assert len(monomial_exponents(3)) == 10


@pytest.mark.parametrize("a,b", [(0, 0), (2, 0), (2, 2), (3, 1), (4, 4)])
def test_square_quadrature_exact(a, b):
    rule = cell_quadrature(SQUARE, order=a + b)
    val = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
    assert val == pytest.approx(1.0 / ((a + 1) * (b + 1)), rel=1e-13)


def test_fan_matches_earclip():
    rng = np.random.default_rng(7)
    for _ in range(10):
        poly = random_convex_polygon(rng)
        r1 = cell_quadrature(poly, order=5, method="fan")
        r2 = cell_quadrature(poly, order=5, method="earclip")
        for a, b in [(0, 0), (2, 3), (5, 0)]:
            v1 = np.sum(r1.weights * r1.points[:, 0] ** a * r1.points[:, 1] ** b)
            v2 = np.sum(r2.weights * r2.points[:, 0] ** a * r2.points[:, 1] ** b)
            assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-14)


def test_ear_clip_nonconvex():
    poly = np.array([[0, 0], [2, 0], [2, 2], [1, 0.5], [0, 2.0]])
    tris = ear_clip(poly)
    def cross2(u, v):
        return u[0] * v[1] - u[1] * v[0]

    area = sum(abs(cross2(poly[j] - poly[i], poly[l] - poly[i])) / 2
               for i, j, l in tris)
    rule = cell_quadrature(poly, order=2)
    assert rule.weights.sum() == pytest.approx(area, rel=1e-13)


def test_edge_quadrature():
    p0, p1 = np.array([0.2, 0.1]), np.array([0.8, 0.5])
    h = np.linalg.norm(p1 - p0)
    rule = edge_quadrature(p0, p1, order=5)
    # parameters live on [-1/2, 1/2]; weights carry the arclength
    assert rule.weights.sum() == pytest.approx(h, rel=1e-14)
    for j in (1, 3):
        assert np.sum(rule.weights * rule.params ** j) == pytest.approx(0.0, abs=1e-15)
    assert np.sum(rule.weights * rule.params ** 2) == pytest.approx(h / 12, rel=1e-13)


def test_edge_gram_closed_form():
    basis = ScaledMonomialBasis1D(3, np.array([0.5, 0.5]), 2.0,
                                  np.array([1.0, 0.0]))
    g = basis.gram()
    for j in range(4):
        for l in range(4):
            exact = 2.0 / (2 ** (j + l) * (j + l + 1)) if (j + l) % 2 == 0 else 0.0
            assert g[j, l] == pytest.approx(exact, abs=1e-15)


def test_scaled_monomials_partition():
    basis = ScaledMonomialBasis2D(2, np.array([0.3, 0.4]), 0.7)
    pts = np.random.default_rng(0).uniform(0, 1, (5, 2))
    vals = basis.evaluate(pts)
    assert vals.shape == (6, 5)
    assert np.allclose(vals[0], 1.0)
    xi = (pts[:, 0] - 0.3) / 0.7
    assert np.allclose(vals[1], xi)


@pytest.mark.parametrize("k,dims", [(1, (4, 10, 2)), (2, (10, 18, 6)),
                                    (3, (18, 28, 12))])
def test_gradient_split_dimensions(k, dims):
    rule = cell_quadrature(SQUARE, order=2 * k + 3)
    basis = ScaledMonomialBasis2D(k, np.array([0.5, 0.5]), np.sqrt(2.0))
    vals = basis.evaluate(rule.points)
    gram = (vals * rule.weights) @ vals.T
    split = build_gradient_split(k, gram, 1.0)
    assert split.grad_km1.shape[1] == dims[0]
    assert split.grad_k.shape[1] == dims[1]
    assert split.perp.shape[1] == dims[2]
    # perp is orthogonal to every gradient column in the tensor L2 inner product
    m_ten = np.kron(np.eye(4), gram)
    cross = split.grad_k.T @ m_ten @ split.perp
    assert np.abs(cross).max() < 1e-12
    # perp columns normalized against |K|
    assert np.allclose(split.perp.T @ m_ten @ split.perp, np.eye(dims[2]),
                       atol=1e-12)


def test_gram_matrix_order_guard():
    rule = cell_quadrature(SQUARE, order=1)
    basis = ScaledMonomialBasis2D(2, np.array([0.5, 0.5]), np.sqrt(2.0))
    with pytest.raises(ValueError):
        gram_matrix(basis, basis, rule)
