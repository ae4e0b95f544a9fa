"""Crank-Nicolson time integration of A xdot = B x + C(t).

The stress edge DoFs on GAMMA_SIGMA are essential; they are prescribed at the
time endpoints and eliminated symmetrically, so a single factorization of the
reduced Crank-Nicolson matrix serves every step.
"""

from dataclasses import dataclass, field

import numpy as np

from .assemble import LinearSolveHandle


@dataclass
class SystemState:
    t: float
    x: np.ndarray

    def blocks(self, layout):
        ns, nv = layout.stress_size, layout.velocity_size
        return (self.x[:ns], self.x[ns:2 * ns],
                self.x[2 * ns:2 * ns + nv], self.x[2 * ns + nv:])


@dataclass
class EnergySample:
    t: float
    energy: float
    dissipation: float
    weak_symmetry: float


@dataclass
class TimeHistory:
    samples: list = field(default_factory=list)

    def record(self, blocks, state):
        self.samples.append(EnergySample(
            state.t, blocks.energy(state.x), blocks.dissipation(state.x),
            blocks.weak_symmetry_residual(state.x)))

    @property
    def energies(self):
        return np.array([s.energy for s in self.samples])


def initial_state(blocks, stress0=None, stress1=None, velocity=None,
                  rotation=None, t0=0.0):
    """Interpolate/project initial data onto the discrete unknowns."""
    space, lay = blocks.space, blocks.layout
    x = np.zeros(lay.total)
    if stress0 is not None:
        x[:lay.stress_size] = space.interpolate_stress(stress0).values
    if stress1 is not None:
        x[lay.stress_size:2 * lay.stress_size] = \
            space.interpolate_stress(stress1, kind="stress1").values
    if velocity is not None:
        x[2 * lay.stress_size:2 * lay.stress_size + lay.velocity_size] = \
            space.project_velocity(velocity).values
    if rotation is not None:
        x[lay.offsets[3]:] = space.project_rotation(rotation).values
    return SystemState(t0, x)


class CrankNicolson:
    """Midpoint-in-load trapezoidal stepper.

    (A/tau - B/2) x^n = (A/tau + B/2) x^{n-1} + C(t_{n-1/2}), with essential
    stress values imposed at t_n. `bc_values(t)` must return one value per
    constrained index (or None when GAMMA_SIGMA data is homogeneous);
    `load(t)` returns the full-length right-hand side.
    """

    def __init__(self, blocks, tau, load=None, bc_values=None):
        self.blocks = blocks
        self.tau = float(tau)
        self.load = load
        self.bc_values = bc_values
        con = blocks.constrained
        n = blocks.layout.total
        mask = np.ones(n, dtype=bool)
        mask[con] = False
        self.free = np.nonzero(mask)[0]
        self.con = con
        k1 = (blocks.A / self.tau - 0.5 * blocks.B).tocsc()
        k2 = (blocks.A / self.tau + 0.5 * blocks.B).tocsc()
        self.k1_ff = k1[self.free][:, self.free]
        self.k1_fc = k1[self.free][:, con]
        self.k2_ff = k2[self.free][:, self.free]
        self.k2_fc = k2[self.free][:, con]
        self.handle = LinearSolveHandle(self.k1_ff)

    def _bc(self, t):
        if self.bc_values is None:
            return np.zeros(len(self.con))
        return np.asarray(self.bc_values(t), dtype=float)

    def step(self, state):
        t_new = state.t + self.tau
        rhs = self.k2_ff @ state.x[self.free] + self.k2_fc @ state.x[self.con]
        rhs -= self.k1_fc @ self._bc(t_new)
        if self.load is not None:
            rhs += self.load(state.t + 0.5 * self.tau)[self.free]
        x = np.empty_like(state.x)
        x[self.free] = self.handle.solve(rhs)
        x[self.con] = self._bc(t_new)
        return SystemState(t_new, x)


def run(blocks, tau, n_steps, state=None, load=None, bc_values=None,
        callback=None):
    """March n_steps from the given (or zero) initial state.

    callback(step_index, state) is invoked after every step; the initial state
    gets index 0. Returns the final state.
    """
    if state is None:
        state = SystemState(0.0, np.zeros(blocks.layout.total))
        if bc_values is not None:
            state.x[blocks.constrained] = np.asarray(bc_values(0.0), dtype=float)
    stepper = CrankNicolson(blocks, tau, load=load, bc_values=bc_values)
    if callback is not None:
        callback(0, state)
    for n in range(1, n_steps + 1):
        state = stepper.step(state)
        if callback is not None:
            callback(n, state)
    return state
