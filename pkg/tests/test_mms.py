import csv

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vemvisco.assemble import MaterialParams
from vemvisco.mms import (build_case, constant_stress_case, convergence_study,
                          damping_ratio, error_norms, fitted_rates,
                          locate_cell, make_mesh, patch_test, rate, solve_case,
                          write_convergence_csv)
from vemvisco.timeloop import SystemState, initial_state
from vemvisco.vspace import VirtualSpace


@pytest.fixture(scope="module")
def poly_t2():
    return build_case("poly-t2")


def test_unknown_case():
    with pytest.raises(ValueError):
        build_case("poly-t9")


def test_rate_constants(poly_t2):
    assert poly_t2.rate_dev == pytest.approx(3.0 / 4.0)
    assert poly_t2.rate_vol == pytest.approx(5.0 / 7.0)


def test_zero_at_t0(poly_t2):
    pts = np.random.default_rng(0).uniform(0, 1, (7, 2))
    assert np.abs(poly_t2.velocity(pts, 0.0)).max() == 0
    assert np.abs(poly_t2.stress1(pts, 0.0)).max() == 0
    assert np.abs(poly_t2.stress0(pts, 0.0)).max() < 1e-13


@pytest.mark.parametrize("name", ["poly-t2", "poly-t3", "exp-trig"])
def test_constitutive_ode_oracle(name):
    """Closed-form sigma0 vs a high-accuracy integration of its defining ODE."""
    case = build_case(name)
    p = case.params
    pts = np.array([[0.31, 0.67], [0.85, 0.12]])

    def rhs(t, yflat):
        ev = case.strain_rate(pts, t)
        out = np.empty_like(yflat)
        for i, s in enumerate(yflat.reshape(-1, 2, 2)):
            e = ev[i]
            dev = e - np.trace(e) / 2 * np.eye(2)
            vol = np.trace(e) / 2
            sdev = s - np.trace(s) / 2 * np.eye(2)
            svol = np.trace(s) / 2
            ds = (2 * p.mu0 * dev - case.rate_dev * sdev
                  + ((2 * p.mu0 + 2 * p.lam0) * vol
                     - case.rate_vol * svol) * np.eye(2))
            out[4 * i:4 * i + 4] = ds.ravel()
        return out

    sol = solve_ivp(rhs, (0.0, 1.0), np.zeros(8), rtol=1e-12, atol=1e-13)
    exact = case.stress0(pts, 1.0).reshape(-1)
    assert np.abs(sol.y[:, -1] - exact).max() < 1e-9


def test_total_stress_symmetric(poly_t2):
    pts = np.random.default_rng(3).uniform(0, 1, (9, 2))
    for t in (0.4, 1.0):
        tot = poly_t2.stress0(pts, t) + poly_t2.stress1(pts, t)
        assert np.abs(tot[:, 0, 1] - tot[:, 1, 0]).max() < 1e-13


def test_momentum_residual(poly_t2):
    # rho v' - div(sigma0+sigma1) = rho f by construction; check v' by
    # central differences
    pts = np.random.default_rng(4).uniform(0.1, 0.9, (6, 2))
    t, eps = 0.6, 1e-5
    vdot = (poly_t2.velocity(pts, t + eps)
            - poly_t2.velocity(pts, t - eps)) / (2 * eps)
    res = (poly_t2.params.rho * vdot - poly_t2.div_total(pts, t)
           - poly_t2.params.rho * poly_t2.load(pts, t))
    assert np.abs(res).max() < 1e-8


def test_rate_formula():
    assert rate(0.01, 0.0025, 0.1, 0.05) == pytest.approx(2.0)


def test_error_norms_exact_state():
    # injecting the interpolant of a constant-stress steady state gives
    # errors at rounding level
    mesh = make_mesh("cartesian", 3)
    case = constant_stress_case([[1.0, 0.3], [0.3, 2.0]])
    space = VirtualSpace(mesh, 1)
    from vemvisco.assemble import assemble_global
    blocks = assemble_global(space, case.params)
    st = initial_state(blocks, stress1=lambda q: case.stress1(q, 0.0))
    errors = error_norms(space, st, case, 0.0)
    assert max(errors.values()) < 1e-12


def test_zero_state_error_is_solution_norm(poly_t2):
    mesh = make_mesh("cartesian", 4)
    space = VirtualSpace(mesh, 1)
    zero = SystemState(1.0, np.zeros(space.layout.total))
    errors = error_norms(space, zero, poly_t2, 1.0)
    # independent quadrature of the exact fields
    vals = []
    for c in range(mesh.num_cells):
        cb = space.cell_bases[c]
        v = poly_t2.velocity(cb.rule.points, 1.0)
        vals.append(np.sum(cb.rule.weights * np.sum(v ** 2, axis=1)))
    assert errors["v"] == pytest.approx(np.sqrt(sum(vals)), rel=1e-12)


def test_patch_test_quick():
    worst, errors = patch_test(make_mesh("cartesian", 3), 1)
    assert worst < 1e-10


def test_convergence_rows_and_csv(tmp_path, poly_t2):
    rows = convergence_study(poly_t2, "cartesian", [3, 4], 1)
    assert np.isnan(rows[0].rates["sig1"])
    assert rows[1].errors["sig1"] < rows[0].errors["sig1"]
    path = tmp_path / "conv.csv"
    write_convergence_csv(rows, str(path))
    with open(path) as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["h", "dofs", "e_sig0", "rate_sig0", "e_sig1",
                      "rate_sig1", "e_v", "rate_v", "e_r", "rate_r",
                      "e_div", "rate_div"]
    assert got[1][3] == "nan"
    assert len(got) == 3


def test_solve_case_respects_boundary_data(poly_t2):
    # final-time errors decay when refining; coarse sanity only
    mesh = make_mesh("cartesian", 4)
    final, space, blocks, tau = solve_case(mesh, 1, poly_t2, 1.0, 0.25)
    errors = error_norms(space, final, poly_t2, 1.0)
    assert errors["sig1"] < 0.2
    # constrained DoFs carry the exact traction data at T
    con = blocks.constrained
    exact = np.concatenate([
        space.interpolate_stress(lambda q: poly_t2.stress0(q, 1.0)).values,
        space.interpolate_stress(lambda q: poly_t2.stress1(q, 1.0)).values])
    assert np.abs(final.x[con] - exact[con]).max() < 1e-12


def test_locate_cell():
    mesh = make_mesh("cartesian", 4)
    c = locate_cell(mesh, (0.6, 0.6))
    poly = mesh.cell_coords(c)
    assert poly[:, 0].min() <= 0.6 <= poly[:, 0].max()
    with pytest.raises(ValueError):
        locate_cell(mesh, (1.5, 0.5))


def test_damping_ratio():
    t = np.linspace(0, 100, 1001)
    sig = np.exp(-0.05 * t) * np.sin(t)
    assert damping_ratio(t, sig) < 0.05
    assert damping_ratio(t, np.sin(t)) > 0.9


def test_fitted_rates_matches_pairwise_for_two_rows(poly_t2):
    rows = convergence_study(poly_t2, "cartesian", [3, 6], 1, tau0=0.05)
    fits = fitted_rates(rows)
    for key in fits:
        assert fits[key] == pytest.approx(rows[1].rates[key], rel=1e-12)
