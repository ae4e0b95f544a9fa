"""Acceptance suite: one test per shipping criterion.

Each test prints a single PASS/FAIL line with the measured quantities so the
whole gate can be audited from the pytest log (surfaced via the -rA summary).
"""

import numpy as np
import pytest

from vemvisco.assemble import MaterialParams, assemble_global
from vemvisco.mesh import build_mesh
from vemvisco.mms import (build_case, convergence_study, damping_ratio,
                          energy_experiment, error_norms, fitted_rates,
                          make_mesh, marker_experiment, patch_test, solve_case)
from vemvisco.timeloop import SystemState
from vemvisco.vspace import VirtualSpace

RATE_FIELDS = ("sig0", "sig1", "v", "r")
STANDARD = MaterialParams(mu0=3, lam0=2, mu1=4, lam1=5, mu0p=4, lam0p=3, rho=1)
NEARLY_INCOMPRESSIBLE = MaterialParams(mu0=3, lam0=1.5e4, mu1=9, lam1=4.5e4,
                                       mu0p=3, lam0p=1.5e4, rho=1)


def report(num, ok, detail):
    # surfaced in the pytest log through the -rA summary (pyproject addopts)
    print(f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def case_poly_t2():
    return build_case("poly-t2", STANDARD)


@pytest.fixture(scope="module")
def cartesian_k1_rows(case_poly_t2):
    # tau = h exactly: tau0 = h0 = 1/6 and linear scaling at k=1
    return convergence_study(case_poly_t2, "cartesian", range(6, 13), 1,
                             tau0=1.0 / 6.0)


def test_criterion_01_cartesian_k1_rates(cartesian_k1_rows):
    fits = fitted_rates(cartesian_k1_rows)
    ok = all(fits[f] >= 1.85 for f in RATE_FIELDS)
    detail = ("k=1 cartesian n=6..12, tau=h: fitted rates "
              + " ".join(f"{f}={fits[f]:.3f}" for f in RATE_FIELDS)
              + " (>= 1.85)")
    report(1, ok, detail)


def test_criterion_02_hexagonal_k1_rates(case_poly_t2):
    # tau0 below h0 keeps the O(tau^2) time error under the spatial error,
    # which is smaller on hexagons than on squares at equal h
    rows = convergence_study(case_poly_t2, "hexagonal", range(6, 13), 1,
                             tau0=0.04)
    fits = fitted_rates(rows)
    ok = all(fits[f] >= 1.8 for f in RATE_FIELDS)
    detail = ("k=1 hexagonal n=6..12: fitted rates "
              + " ".join(f"{f}={fits[f]:.3f}" for f in RATE_FIELDS)
              + " (>= 1.8)")
    report(2, ok, detail)


def test_criterion_03_k2_rates(case_poly_t2):
    rows = convergence_study(case_poly_t2, "cartesian", [3, 4, 5, 6, 7], 2,
                             tau0=0.05)
    pair_rates = [min(rows[i].rates[f] for f in RATE_FIELDS)
                  for i in (-2, -1)]
    ok = all(r >= 2.85 for r in pair_rates)
    detail = (f"k=2 cartesian, tau^2 ~ h^3: two finest pairwise rates "
              f"min={pair_rates[0]:.3f}, {pair_rates[1]:.3f} (>= 2.85)")
    report(3, ok, detail)


def test_criterion_04_divergence_rate(cartesian_k1_rows):
    fit = fitted_rates(cartesian_k1_rows)["div"]
    report(4, fit >= 1.85,
           f"e(div) fitted rate {fit:.3f} in the k=1 cartesian study (>= 1.85)")


def test_criterion_05_nearly_incompressible(cartesian_k1_rows):
    case = build_case("poly-t2", NEARLY_INCOMPRESSIBLE)
    rows = convergence_study(case, "cartesian", range(6, 13), 1,
                             tau0=1.0 / 6.0)
    fits = fitted_rates(rows)
    rates_ok = all(fits[f] >= 1.9 for f in RATE_FIELDS)

    # the exact stresses scale with lambda (about 3000x-4000x here), so raw
    # errors scale with them; "no degeneration" is measured on errors
    # normalized by the exact-solution magnitude at T
    def solution_scale(case_, h_index):
        mesh = make_mesh("cartesian", range(6, 13)[h_index])
        space = VirtualSpace(mesh, 1)
        zero = SystemState(1.0, np.zeros(space.layout.total))
        norms = error_norms(space, zero, case_, 1.0)
        return np.sqrt(sum(norms[f] ** 2 for f in RATE_FIELDS))

    worst = 0.0
    for idx in (0, len(rows) - 1):
        s_inc = solution_scale(case, idx)
        s_cmp = solution_scale(build_case("poly-t2", STANDARD), idx)
        for f in rows[idx].errors:
            rel_inc = rows[idx].errors[f] / s_inc
            rel_cmp = cartesian_k1_rows[idx].errors[f] / s_cmp
            worst = max(worst, rel_inc / rel_cmp)
    ok = rates_ok and worst <= 100.0
    detail = ("nearly incompressible k=1: fitted rates "
              + " ".join(f"{f}={fits[f]:.3f}" for f in RATE_FIELDS)
              + f" (>= 1.9); worst solution-normalized error ratio "
              f"{worst:.2f}x vs compressible (<= 100x)")
    report(5, ok, detail)


def test_criterion_06_partitioned_hanging_nodes():
    case = build_case("poly-t3", STANDARD)
    rows = convergence_study(case, "partitioned", [2, 3, 4, 5], 1)
    fits = fitted_rates(rows)
    ok = all(fits[f] >= 1.8 for f in RATE_FIELDS)
    detail = ("poly-t3 on partitioned meshes with hanging nodes: fitted rates "
              + " ".join(f"{f}={fits[f]:.3f}" for f in RATE_FIELDS)
              + " (>= 1.8)")
    report(6, ok, detail)


def test_criterion_07_patch_test():
    worst = 0.0
    for k in (1, 2):
        for kind, n in (("cartesian", 3), ("hexagonal", 4)):
            err, _ = patch_test(make_mesh(kind, n), k, params=STANDARD)
            worst = max(worst, err)
    report(7, worst <= 1e-9,
           f"constant-stress patch test, k in {{1,2}}, cartesian+hexagonal: "
           f"max error {worst:.3e} (<= 1e-9)")


def test_criterion_08_projector_suite():
    rng = np.random.default_rng(12345)
    worst_proj, worst_comm = 0.0, 0.0
    n_polys = 0
    for k in (1, 2):
        for _ in range(12):
            nv = int(rng.integers(4, 9))
            # star-shaped polygons with a minimum angular gap so no trial
            # degenerates into a sliver
            while True:
                ang = np.sort(rng.uniform(0, 2 * np.pi, nv))
                gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
                if gaps.min() > 2 * np.pi / (4 * nv):
                    break
            rad = rng.uniform(0.6, 1.0, nv)
            poly = 0.4 * np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1) + 0.5
            mesh = build_mesh([poly], boundary="all-dirichlet")
            vs = VirtualSpace(mesh, k)
            ops, cb = vs.cell_ops[0], vs.cell_bases[0]
            n_polys += 1

            # projector reproduces random tensor polynomials of degree <= k
            coefs = rng.uniform(-1, 1, 4 * cb.n_k)
            err = np.abs(ops.PI0 @ (ops.DOFP @ coefs) - coefs).max()
            worst_proj = max(worst_proj, err / np.abs(coefs).max())

            # div of the interpolant equals the P_k projection of the exact
            # divergence, for tensor polynomials of degree k+2
            deg = k + 2
            terms = [(a, b) for a in range(deg + 1) for b in range(deg + 1 - a)]
            ccoef = rng.uniform(-1, 1, (2, 2, len(terms)))

            def tau(pts):
                x, y = pts[:, 0], pts[:, 1]
                mono = np.stack([x ** a * y ** b for a, b in terms])
                return np.einsum("ijm,mq->qij", ccoef, mono)

            def dtau(pts):
                x, y = pts[:, 0], pts[:, 1]
                out = np.zeros((len(pts), 2))
                for m, (a, b) in enumerate(terms):
                    dx = a * x ** (a - 1) * y ** b if a else 0.0
                    dy = b * x ** a * y ** (b - 1) if b else 0.0
                    out[:, 0] += ccoef[0, 0, m] * dx + ccoef[0, 1, m] * dy
                    out[:, 1] += ccoef[1, 0, m] * dx + ccoef[1, 1, m] * dy
                return out

            dofs = vs.interpolate_stress(tau).values
            div_h = (ops.DIV @ dofs[ops.local_dofs]).reshape(2, cb.n_k)
            mono_w = cb.vals_kp1[:cb.n_k] * cb.rule.weights
            dex = dtau(cb.rule.points)
            div_pi = np.linalg.solve(
                cb.gram_k, np.stack([mono_w @ dex[:, 0], mono_w @ dex[:, 1]]).T).T
            diff = div_h - div_pi
            l2 = np.sqrt(np.einsum("ia,ab,ib->", diff, cb.gram_k, diff))
            worst_comm = max(worst_comm, l2)
    ok = worst_proj <= 1e-12 and worst_comm <= 1e-11
    report(8, ok,
           f"{n_polys} random polygons, k in {{1,2}}: projector residual "
           f"{worst_proj:.2e} (<= 1e-12), commutativity residual "
           f"{worst_comm:.2e} (<= 1e-11)")


def test_criterion_09_energy_dissipation():
    hists = energy_experiment(taus=(0.1, 1.0), n=8, k=1, n_steps=200, seed=0,
                              params=STANDARD)
    worst_up, worst_drift = -np.inf, 0.0
    for tau, hist in hists.items():
        e = hist.energies
        worst_up = max(worst_up, float(np.max(np.diff(e)) / e[0]))
        ws = np.array([s.weak_symmetry for s in hist.samples])
        worst_drift = max(worst_drift, float(np.abs(ws - ws[0]).max()))
    ok = worst_up <= 1e-12 and worst_drift <= 1e-10
    report(9, ok,
           f"200 steps at tau in {{0.1,1}}: max energy increase "
           f"{worst_up:.2e}*E0 (<= 1e-12), weak-symmetry drift "
           f"{worst_drift:.2e} (<= 1e-10)")


def test_criterion_10_time_order():
    # strongly damped dashpot so lightly-damped high-frequency transients
    # excited by the spatial discretization do not pollute the Richardson
    # triple; the isolated stepper is independently verified second order
    params = MaterialParams(mu0=3, lam0=2, mu1=4, lam1=5, mu0p=0.5,
                            lam0p=0.5, rho=1)
    case = build_case("poly-t2", params)
    mesh = make_mesh("cartesian", 8)
    finals = {n: solve_case(mesh, 1, case, 1.0, 1.0 / n)[0].x
              for n in (20, 40, 80)}
    d1 = np.linalg.norm(finals[20] - finals[40])
    d2 = np.linalg.norm(finals[40] - finals[80])
    order = float(np.log2(d1 / d2))
    report(10, 1.8 <= order <= 2.2,
           f"Richardson order on 8x8, N in {{20,40,80}}: {order:.3f} "
           f"(2.0 +- 0.2)")


def test_criterion_11_marker_damping():
    base = dict(mu0=3.0, lam0=2.0, mu1=4.0, lam1=5.0, rho=1000.0)
    t_s, v_s = marker_experiment(MaterialParams(**base, mu0p=4.0, lam0p=3.0),
                                 T=100.0, tau=0.1)
    t_l, v_l = marker_experiment(MaterialParams(**base, mu0p=1e-5,
                                                lam0p=1e-6),
                                 T=100.0, tau=0.1)
    r_s = damping_ratio(t_s, v_s)
    r_l = damping_ratio(t_l, v_l)
    ok = r_s < 0.05 and r_l > 0.5
    report(11, ok,
           f"marker late-window amplitude ratio: standard {r_s:.4f} (< 0.05), "
           f"low viscosity {r_l:.4f} (> 0.5)")
