"""Manufactured solutions, error norms and convergence studies.

Exact solutions are generated symbolically from a chosen displacement u(x,y,t):
the elastic stress is sigma1 = 2 mu1 eps(u) + lam1 div(u) I, and the Maxwell
stress solves the compliance ODE A0 sigma0' + A0' sigma0 = eps(v) in closed
form. Splitting eps(v) into deviatoric and volumetric parts decouples the ODE
into scalar equations with relaxation rates mu0/mu0' and
(mu0+lam0)/(mu0'+lam0'), each integrated exactly with sigma0(0) = 0. The body
force is then defined by momentum balance, so the system is consistent by
construction.
"""

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import sympy as sym

from .assemble import MaterialParams, assemble_global, assemble_rhs
from .mesh import (BoundaryTag, generate_cartesian, generate_hexagonal,
                   generate_partitioned, reported_mesh_size)
from .polybase import ScaledMonomialBasis2D
from .timeloop import initial_state, run
from .vspace import VirtualSpace

_X, _Y, _T, _S = sym.symbols("x y t s", real=True)

CASE_NAMES = ("poly-t2", "poly-t3", "exp-trig")


def _displacement(name):
    bubble = _X * (1 - _X) * _Y * (1 - _Y)
    if name == "poly-t2":
        return sym.Matrix([_T ** 2 * bubble, 0])
    if name == "poly-t3":
        return sym.Matrix([_T ** 3 * bubble, 0])
    if name == "exp-trig":
        return sym.Matrix([sym.exp(-_Y) * sym.cos(_T) * sym.sin(_X),
                           sym.exp(_T + _X)])
    raise ValueError(f"unknown manufactured case {name!r}; "
                     f"choose from {CASE_NAMES}")


def _grad(w):
    return sym.Matrix([[w[0].diff(_X), w[0].diff(_Y)],
                       [w[1].diff(_X), w[1].diff(_Y)]])


def _eps(w):
    g = _grad(w)
    return (g + g.T) / 2


def _rational(v):
    return sym.Rational(Fraction(str(float(v))))


def _relax(g, rate):
    """Closed-form solution of q' + rate q = g(t), q(0) = 0."""
    integrand = sym.exp(rate * _S) * g.subs(_T, _S)
    return sym.exp(-rate * _T) * sym.integrate(integrand, (_S, 0, _T))


def _scalar_fn(expr):
    fn = sym.lambdify((_X, _Y, _T), expr, modules="numpy")

    def call(px, py, tt):
        out = np.asarray(fn(px, py, tt), dtype=float)
        if out.ndim == 0:
            out = np.full(np.shape(px), float(out))
        return out

    return call


def _vector_fn(vec):
    comps = [_scalar_fn(vec[i]) for i in range(2)]

    def call(pts, t):
        pts = np.asarray(pts)
        return np.stack([c(pts[:, 0], pts[:, 1], t) for c in comps], axis=-1)

    return call


def _tensor_fn(mat):
    comps = [[_scalar_fn(mat[i, j]) for j in range(2)] for i in range(2)]

    def call(pts, t):
        pts = np.asarray(pts)
        rows = [np.stack([comps[i][j](pts[:, 0], pts[:, 1], t)
                          for j in range(2)], axis=-1) for i in range(2)]
        return np.stack(rows, axis=-2)

    return call


@dataclass
class ManufacturedCase:
    """Closed-form exact fields; every member maps (pts, t) to arrays."""
    name: str
    params: MaterialParams
    velocity: callable       # (n, 2)
    stress0: callable        # (n, 2, 2)
    stress1: callable        # (n, 2, 2)
    rotation: callable       # (n,) coefficient of the skew generator
    load: callable           # (n, 2) body force f
    div_total: callable      # (n, 2) exact div(sigma0 + sigma1)
    strain_rate: callable    # (n, 2, 2) eps(v), drives the ODE oracle
    rate_dev: float
    rate_vol: float


def build_case(name, params=None):
    """Symbolically derive all exact fields for one displacement choice."""
    p = params if params is not None else MaterialParams()
    mu0, lam0 = _rational(p.mu0), _rational(p.lam0)
    mu0p, lam0p = _rational(p.mu0p), _rational(p.lam0p)
    mu1, lam1 = _rational(p.mu1), _rational(p.lam1)
    rho = _rational(p.rho)

    u = _displacement(name)
    v = u.diff(_T)
    div_u = u[0].diff(_X) + u[1].diff(_Y)
    sig1 = 2 * mu1 * _eps(u) + lam1 * div_u * sym.eye(2)

    ev = _eps(v)
    vol = ev.trace() / 2                       # eps(v) = dev + vol*I
    ev_dev = ev - vol * sym.eye(2)
    rate_dev = mu0 / mu0p
    rate_vol = (mu0 + lam0) / (mu0p + lam0p)
    sig0_dev = 2 * mu0 * _relax(ev_dev, rate_dev).applyfunc(sym.expand)
    sig0_vol = (2 * mu0 + 2 * lam0) * _relax(vol, rate_vol)
    sig0 = sym.expand(sig0_dev + sig0_vol * sym.eye(2))

    total = sig0 + sig1
    div_sig = sym.Matrix([total[i, 0].diff(_X) + total[i, 1].diff(_Y)
                          for i in range(2)])
    f = v.diff(_T) - div_sig / rho
    s_rot = (u[0].diff(_Y) - u[1].diff(_X)) / 2

    return ManufacturedCase(
        name=name, params=p,
        velocity=_vector_fn(v),
        stress0=_tensor_fn(sig0),
        stress1=_tensor_fn(sig1),
        rotation=_wrap_scalar(s_rot),
        load=_vector_fn(f),
        div_total=_vector_fn(div_sig),
        strain_rate=_tensor_fn(ev),
        rate_dev=float(rate_dev), rate_vol=float(rate_vol))


def _wrap_scalar(expr):
    fn = _scalar_fn(expr)

    def call(pts, t):
        pts = np.asarray(pts)
        return fn(pts[:, 0], pts[:, 1], t)

    return call


def constant_stress_case(sig1, params=None):
    """Steady patch-test state: constant sigma1, everything else zero."""
    p = params if params is not None else MaterialParams()
    sig1 = np.asarray(sig1, dtype=float)
    zero_v = lambda pts, t: np.zeros((len(pts), 2))
    zero_s = lambda pts, t: np.zeros(len(pts))
    zero_t = lambda pts, t: np.zeros((len(pts), 2, 2))
    const = lambda pts, t: np.broadcast_to(sig1, (len(pts), 2, 2)).copy()
    return ManufacturedCase(
        name="constant-stress", params=p,
        velocity=zero_v, stress0=zero_t, stress1=const, rotation=zero_s,
        load=zero_v, div_total=zero_v, strain_rate=zero_t,
        rate_dev=p.mu0 / p.mu0p,
        rate_vol=(p.mu0 + p.lam0) / (p.mu0p + p.lam0p))


# -- solver driver -------------------------------------------------------------


def make_mesh(kind, n, boundary="default"):
    if kind == "cartesian":
        return generate_cartesian(n, boundary=boundary)
    if kind == "hexagonal":
        return generate_hexagonal(n, boundary=boundary)
    if kind == "partitioned":
        return generate_partitioned(n, 2 * n, boundary=boundary)
    raise ValueError(f"unknown mesh kind {kind!r}")


def solve_case(mesh, k, case, T, tau, callback=None):
    """Integrate one manufactured problem to time T.

    Returns (final state, space, blocks, effective tau). tau is rounded so an
    integer number of steps lands exactly on T.
    """
    space = VirtualSpace(mesh, k)
    blocks = assemble_global(space, case.params)
    lay = space.layout
    sigma_edges = [e for e, edge in enumerate(mesh.edges)
                   if edge.tag == BoundaryTag.GAMMA_SIGMA]
    con = blocks.constrained

    def bc_values(tt):
        vals = np.zeros(len(con))
        if sigma_edges:
            data = (space.stress_boundary_values(lambda q: case.stress0(q, tt),
                                                 sigma_edges),
                    space.stress_boundary_values(lambda q: case.stress1(q, tt),
                                                 sigma_edges))
            for i, ci in enumerate(con):
                field, rel = divmod(int(ci), lay.stress_size)
                vals[i] = data[field][rel]
        return vals

    def load(tt):
        return assemble_rhs(blocks, case.load, case.velocity, tt)

    state = initial_state(
        blocks,
        stress0=lambda q: case.stress0(q, 0.0),
        stress1=lambda q: case.stress1(q, 0.0),
        velocity=lambda q: case.velocity(q, 0.0),
        rotation=lambda q: case.rotation(q, 0.0))

    n_steps = max(1, round(T / tau))
    tau_eff = T / n_steps
    final = run(blocks, tau_eff, n_steps, state=state, load=load,
                bc_values=bc_values if len(con) else None, callback=callback)
    return final, space, blocks, tau_eff


# -- error norms ---------------------------------------------------------------


FIELDS = ("sig0", "sig1", "v", "r", "div")


@dataclass
class ConvergenceRow:
    h: float
    dofs: int
    errors: dict          # field -> L2 error
    rates: dict           # field -> rate vs previous row (nan on first row)


def error_norms(space, state, case, t):
    """Global L2 errors of the projected discrete fields at time t."""
    lay = space.layout
    x0, x1, xv, xr = state.blocks(lay)
    acc = dict.fromkeys(FIELDS, 0.0)
    for c in range(space.mesh.num_cells):
        cb = space.cell_bases[c]
        ops = space.cell_ops[c]
        w = cb.rule.weights
        pts = cb.rule.points
        mono = cb.vals_kp1[:cb.n_k]                       # (n_k, q)

        for key, xs in (("sig0", x0), ("sig1", x1)):
            coef = (ops.PI0 @ xs[ops.local_dofs]).reshape(4, cb.n_k)
            vals = coef @ mono                            # (4, q) flattened e
            exact = getattr(case, "stress0" if key == "sig0" else "stress1")(
                pts, t)
            ex = np.stack([exact[:, 0, 0], exact[:, 0, 1],
                           exact[:, 1, 0], exact[:, 1, 1]])
            acc[key] += np.sum(w * np.sum((vals - ex) ** 2, axis=0))

        vcoef = xv[lay.velocity_block(c):lay.velocity_block(c) + 2 * cb.n_k]
        vh = vcoef.reshape(2, cb.n_k) @ mono
        vex = case.velocity(pts, t)
        acc["v"] += np.sum(w * ((vh[0] - vex[:, 0]) ** 2
                                + (vh[1] - vex[:, 1]) ** 2))

        rcoef = xr[lay.rotation_block(c):lay.rotation_block(c) + cb.n_k]
        sh = rcoef @ mono
        sex = case.rotation(pts, t)
        acc["r"] += np.sum(w * 2.0 * (sh - sex) ** 2)     # Frobenius of s*J

        dcoef = (ops.DIV @ (x0[ops.local_dofs] + x1[ops.local_dofs])
                 ).reshape(2, cb.n_k)
        dh = dcoef @ mono
        dex = case.div_total(pts, t)
        acc["div"] += np.sum(w * ((dh[0] - dex[:, 0]) ** 2
                                  + (dh[1] - dex[:, 1]) ** 2))
    return {key: float(np.sqrt(val)) for key, val in acc.items()}


def rate(e_prev, e_cur, h_prev, h_cur):
    return float(np.log(e_prev / e_cur) / np.log(h_prev / h_cur))


def fitted_rates(rows):
    """Least-squares slope of log(error) against log(h), per field."""
    h = np.log([r.h for r in rows])
    out = {}
    for key in FIELDS:
        e = np.log([r.errors[key] for r in rows])
        out[key] = float(np.polyfit(h, e, 1)[0])
    return out


def convergence_study(case, mesh_kind, sizes, k, T=1.0, tau0=None,
                      boundary="default", csv_path=None):
    """Run a mesh family to T and tabulate errors and rates.

    The time step follows tau = tau0 (h/h0)^{(k+1)/2} so the O(tau^2) time
    error decays at least as fast as the O(h^{k+1}) spatial error; the default
    tau0 = h0^{(k+1)/2} makes both terms comparable on the coarsest mesh.
    """
    rows = []
    h0 = None
    for n in sizes:
        mesh = make_mesh(mesh_kind, n, boundary=boundary)
        h = reported_mesh_size(mesh, mesh_kind)
        if h0 is None:
            h0 = h
            t0 = tau0 if tau0 is not None else h0 ** ((k + 1) / 2)
        tau = t0 * (h / h0) ** ((k + 1) / 2)
        final, space, blocks, _ = solve_case(mesh, k, case, T, tau)
        errors = error_norms(space, final, case, final.t)
        rates = {key: float("nan") for key in FIELDS}
        if rows:
            prev = rows[-1]
            rates = {key: rate(prev.errors[key], errors[key], prev.h, h)
                     for key in FIELDS}
        rows.append(ConvergenceRow(h, space.layout.total, errors, rates))
    if csv_path is not None:
        write_convergence_csv(rows, csv_path)
    return rows


def write_convergence_csv(rows, path):
    header = ["h", "dofs"]
    for key in FIELDS:
        header += [f"e_{key}", f"rate_{key}"]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for r in rows:
            rec = [f"{r.h:.10g}", r.dofs]
            for key in FIELDS:
                rec += [f"{r.errors[key]:.10e}",
                        "nan" if np.isnan(r.rates[key])
                        else f"{r.rates[key]:.6f}"]
            out.writerow(rec)


# -- patch test ----------------------------------------------------------------


def patch_test(mesh, k, sig1=((1.0, 0.3), (0.3, 2.0)), params=None,
               n_steps=5, tau=0.1):
    """Steady constant-stress state must be reproduced to solver precision."""
    case = constant_stress_case(sig1, params)
    final, space, _, _ = solve_case(mesh, k, case, n_steps * tau, tau)
    errors = error_norms(space, final, case, final.t)
    return max(errors.values()), errors


# -- marker experiment ---------------------------------------------------------


def locate_cell(mesh, point):
    """First cell whose polygon contains the point (boundary counts)."""
    px, py = point
    for c in range(mesh.num_cells):
        poly = mesh.cell_coords(c)
        inside = True
        n = len(poly)
        for i in range(n):
            ax, ay = poly[i]
            bx, by = poly[(i + 1) % n]
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -1e-12:
                inside = False
                break
        if inside:
            return c
    raise ValueError(f"no cell contains point {point}")


def marker_experiment(params, T=100.0, tau=0.1, n=8, force=(1.0, 1.0), k=1,
                      marker=(0.5, 0.5), csv_path=None):
    """Velocity history at a marker point under constant body force.

    All-Dirichlet boundary, zero initial data. Returns (times, vx) arrays.
    """
    mesh = generate_cartesian(n, boundary="all-dirichlet")
    space = VirtualSpace(mesh, k)
    blocks = assemble_global(space, params)
    fvec = np.asarray(force, dtype=float)
    rhs = assemble_rhs(blocks, lambda pts, t: np.broadcast_to(
        fvec, (len(pts), 2)).copy(), None, 0.0)
    lay = space.layout
    c = locate_cell(mesh, marker)
    cb = space.cell_bases[c]
    basis = ScaledMonomialBasis2D(k, cb.geom.centroid, cb.diameter)
    mono = basis.evaluate(np.asarray([marker]))[:, 0]
    base = 2 * lay.stress_size + lay.velocity_block(c)

    times, vx = [], []

    def cb_fn(step, state):
        times.append(state.t)
        vx.append(float(state.x[base:base + lay.n_k] @ mono))

    n_steps = max(1, round(T / tau))
    run(blocks, T / n_steps, n_steps, load=lambda tt: rhs, callback=cb_fn)
    times, vx = np.array(times), np.array(vx)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "vx"])
            for tt, vv in zip(times, vx):
                out.writerow([f"{tt:.10g}", f"{vv:.10e}"])
    return times, vx


def _random_poly2(rng, deg):
    trip = [(a, b) for a in range(deg + 1) for b in range(deg + 1 - a)]
    coef = rng.uniform(-1.0, 1.0, len(trip))

    def call(x, y):
        return sum(c * x ** a * y ** b for c, (a, b) in zip(coef, trip))

    return call


def random_symmetric_state(blocks, seed, deg=None):
    """Random polynomial initial data with symmetric stresses.

    Symmetric polynomial tensors of degree <= k interpolate exactly, so the
    weak-symmetry functional of the initial state vanishes to rounding and the
    energy identity applies from the first step.
    """
    space = blocks.space
    deg = space.k if deg is None else deg
    rng = np.random.default_rng(seed)

    def sym_tensor():
        p00, p01, p11 = (_random_poly2(rng, deg) for _ in range(3))

        def call(pts):
            x, y = pts[:, 0], pts[:, 1]
            a, b, c = p00(x, y), p01(x, y), p11(x, y)
            return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

        return call

    pv0, pv1 = _random_poly2(rng, deg), _random_poly2(rng, deg)
    pr = _random_poly2(rng, deg)
    return initial_state(
        blocks, stress0=sym_tensor(), stress1=sym_tensor(),
        velocity=lambda q: np.stack([pv0(q[:, 0], q[:, 1]),
                                     pv1(q[:, 0], q[:, 1])], -1),
        rotation=lambda q: pr(q[:, 0], q[:, 1]))


def energy_experiment(taus=(0.1, 1.0), n=8, k=1, n_steps=200, seed=0,
                      params=None):
    """Unforced decay from random symmetric data; returns tau -> TimeHistory."""
    from .timeloop import TimeHistory

    mesh = generate_cartesian(n, boundary="all-dirichlet")
    space = VirtualSpace(mesh, k)
    blocks = assemble_global(space, params if params is not None
                             else MaterialParams())
    out = {}
    for tau in taus:
        hist = TimeHistory()
        state = random_symmetric_state(blocks, seed)
        run(blocks, tau, n_steps, state=state,
            callback=lambda i, st: hist.record(blocks, st))
        out[tau] = hist
    return out


def damping_ratio(times, vx, window=(80.0, 100.0)):
    """max |vx| in the late window relative to the whole run."""
    late = (times >= window[0]) & (times <= window[1])
    return float(np.max(np.abs(vx[late])) / np.max(np.abs(vx)))
