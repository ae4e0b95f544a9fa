import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vemvisco.assemble import MaterialParams, assemble_global
from vemvisco.mesh import generate_cartesian
from vemvisco.mms import random_symmetric_state
from vemvisco.timeloop import (CrankNicolson, SystemState, TimeHistory,
                               initial_state, run)
from vemvisco.vspace import VirtualSpace


@pytest.fixture(scope="module")
def system():
    mesh = generate_cartesian(2, boundary="all-dirichlet")
    vs = VirtualSpace(mesh, 1)
    return vs, assemble_global(vs, MaterialParams())


def test_second_order_against_ode_reference(system):
    vs, blocks = system
    a = blocks.A.toarray()
    b = blocks.B.toarray()
    rng = np.random.default_rng(5)
    n = a.shape[0]
    w = rng.standard_normal(n)
    x0 = rng.standard_normal(n)
    a_inv = np.linalg.inv(a)
    sol = solve_ivp(lambda t, x: a_inv @ (b @ x + np.sin(3 * t) * w),
                    (0.0, 1.0), x0, rtol=1e-12, atol=1e-13)
    ref = sol.y[:, -1]
    errs = []
    for n_steps in (200, 400, 800):
        st = run(blocks, 1.0 / n_steps, n_steps,
                 state=SystemState(0.0, x0.copy()),
                 load=lambda t: np.sin(3 * t) * w)
        errs.append(np.linalg.norm(st.x - ref))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders > 1.8)


def test_energy_monotone_and_symmetry_conserved(system):
    vs, blocks = system
    state = random_symmetric_state(blocks, seed=7)
    hist = TimeHistory()
    run(blocks, 0.3, 60, state=state,
        callback=lambda i, st: hist.record(blocks, st))
    e = hist.energies
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    ws = np.array([s.weak_symmetry for s in hist.samples])
    assert np.abs(ws - ws[0]).max() < 1e-12


def test_prescribed_values_exact():
    mesh = generate_cartesian(2)  # default tags -> constrained stress edges
    vs = VirtualSpace(mesh, 1)
    blocks = assemble_global(vs, MaterialParams())
    con = blocks.constrained
    assert len(con) > 0
    bc = lambda t: np.full(len(con), 0.25 * t)
    stepper = CrankNicolson(blocks, 0.1, bc_values=bc)
    state = SystemState(0.0, np.zeros(vs.layout.total))
    for _ in range(3):
        state = stepper.step(state)
    assert np.allclose(state.x[con], 0.25 * state.t)


def test_initial_state_blocks(system):
    vs, blocks = system
    st = initial_state(
        blocks,
        velocity=lambda p: np.stack([p[:, 0], 0 * p[:, 0]], -1))
    s0, s1, v, r = st.blocks(vs.layout)
    assert np.abs(s0).max() == 0
    assert np.abs(s1).max() == 0
    assert np.abs(r).max() == 0
    assert np.abs(v).max() > 0


def test_run_callback_indices(system):
    vs, blocks = system
    seen = []
    run(blocks, 0.5, 4, callback=lambda i, st: seen.append((i, st.t)))
    assert [i for i, _ in seen] == [0, 1, 2, 3, 4]
    assert seen[-1][1] == pytest.approx(2.0)
