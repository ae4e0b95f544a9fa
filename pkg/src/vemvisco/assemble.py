"""Local and global matrices for the stress-velocity-rotation system.

The semi-discrete system is A xdot = B x + C(t) with block layout

    A = [[A0, 0,  0, H^T],      B = [[-A0', 0, -J^T, 0],
         [0,  A1, 0, H^T],           [0,    0, -J^T, 0],
         [0,  0,  M,  0 ],           [J,    J,  0,   0],
         [H,  H,  0,  0 ]]           [0,    0,  0,   0]]

on the unknown ordering [sigma0 | sigma1 | v | r]. Stress edge DoFs on
GAMMA_SIGMA are essential and eliminated symmetrically.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError
from .mesh import BoundaryTag

TRACE_VEC = np.array([1.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class MaterialParams:
    """Zener model parameters: Maxwell spring (mu0, lam0), dashpot
    (mu0p, lam0p), parallel spring (mu1, lam1), density rho."""
    mu0: float = 3.0
    lam0: float = 2.0
    mu1: float = 4.0
    lam1: float = 5.0
    mu0p: float = 4.0
    lam0p: float = 3.0
    rho: float = 1.0

    def __post_init__(self):
        if min(self.mu0, self.mu1, self.mu0p) <= 0:
            raise ValueError("shear moduli must be positive")
        if min(self.lam0, self.lam1, self.lam0p) < 0:
            raise ValueError("lambda parameters must be nonnegative")
        if self.rho <= 0:
            raise ValueError("density must be positive")


def compliance_action(mu, lam, tau):
    """Inverse Hooke law: (1/2mu)(tau - lam/(2mu+2lam) tr(tau) I)."""
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0, 0] + tau[..., 1, 1]
    out = tau / (2.0 * mu)
    c = lam / (2.0 * mu + 2.0 * lam) / (2.0 * mu)
    out[..., 0, 0] -= c * tr
    out[..., 1, 1] -= c * tr
    return out


def compliance_coupling(mu, lam):
    """4x4 entry-coupling matrix so that W = kron(C, gram) realizes
    int A(tau):sigma in flattened tensor coordinates."""
    return (np.eye(4) - lam / (2.0 * mu + 2.0 * lam) * np.outer(TRACE_VEC, TRACE_VEC)
            ) / (2.0 * mu)


def local_compliance_matrix(ops, cb, mu, lam):
    """Consistency term through the L2 projector plus scaled stabilization.

    The stabilization carries the 1/(2mu) compliance magnitude so coercivity
    constants stay robust in mu and lambda.
    """
    w = np.kron(compliance_coupling(mu, lam), cb.gram_k)
    return ops.PI0.T @ w @ ops.PI0 + ops.S / (2.0 * mu)


def local_couplings(ops, cb, rho):
    """Divergence coupling, skew coupling and velocity mass for one cell."""
    n_k = cb.n_k
    hvec = np.kron(np.eye(2), cb.gram_k)
    j_loc = ops.DIV.T @ hvec                      # (n_loc, 2 n_k)
    z = np.zeros((4 * n_k, n_k))
    z[n_k:2 * n_k] = cb.gram_k                    # entry (0,1): +m_a
    z[2 * n_k:3 * n_k] = -cb.gram_k               # entry (1,0): -m_a
    h_loc = ops.PI0.T @ z                         # (n_loc, n_k)
    m_loc = rho * hvec
    return j_loc, h_loc, m_loc


class _Coo:
    def __init__(self):
        self.r, self.c, self.v = [], [], []

    def add(self, rows, cols, block):
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        self.r.append(rr.ravel())
        self.c.append(cc.ravel())
        self.v.append(np.asarray(block).ravel())

    def build(self, shape):
        if not self.r:
            return sp.csr_matrix(shape)
        return sp.coo_matrix(
            (np.concatenate(self.v), (np.concatenate(self.r), np.concatenate(self.c))),
            shape=shape).tocsr()


@dataclass
class BlockOperators:
    """Global sparse blocks plus the assembled A and B matrices."""
    A0: sp.csr_matrix
    A1: sp.csr_matrix
    A0p: sp.csr_matrix
    M: sp.csr_matrix
    H: sp.csr_matrix   # (rotation, stress)
    J: sp.csr_matrix   # (velocity, stress)
    A: sp.csr_matrix
    B: sp.csr_matrix
    constrained: np.ndarray
    layout: object
    space: object
    params: MaterialParams
    dirichlet_edges: list  # (edge id, orientation sign of the adjacent cell)

    def energy(self, x):
        """Block energy sigma0'A0 sigma0 + sigma1'A1 sigma1 + v'Mv."""
        lay = self.layout
        s0 = x[:lay.stress_size]
        s1 = x[lay.stress_size:2 * lay.stress_size]
        v = x[2 * lay.stress_size:2 * lay.stress_size + lay.velocity_size]
        return float(s0 @ (self.A0 @ s0) + s1 @ (self.A1 @ s1) + v @ (self.M @ v))

    def dissipation(self, x):
        lay = self.layout
        s0 = x[:lay.stress_size]
        return float(s0 @ (self.A0p @ s0))

    def weak_symmetry_residual(self, x):
        lay = self.layout
        s0 = x[:lay.stress_size]
        s1 = x[lay.stress_size:2 * lay.stress_size]
        return float(np.linalg.norm(self.H @ (s0 + s1)))


def assemble_global(space, params):
    """Assemble the global block operators on a VirtualSpace."""
    lay = space.layout
    ns, nv, nr = lay.stress_size, lay.velocity_size, lay.rotation_size
    a0, a1, a0p = _Coo(), _Coo(), _Coo()
    mc, hc, jc = _Coo(), _Coo(), _Coo()
    for c in range(space.mesh.num_cells):
        ops = space.cell_ops[c]
        cb = space.cell_bases[c]
        sdofs = ops.local_dofs
        vdofs = lay.velocity_block(c) + np.arange(2 * lay.n_k)
        rdofs = lay.rotation_block(c) + np.arange(lay.n_k)
        a0.add(sdofs, sdofs, local_compliance_matrix(ops, cb, params.mu0, params.lam0))
        a1.add(sdofs, sdofs, local_compliance_matrix(ops, cb, params.mu1, params.lam1))
        a0p.add(sdofs, sdofs,
                local_compliance_matrix(ops, cb, params.mu0p, params.lam0p))
        j_loc, h_loc, m_loc = local_couplings(ops, cb, params.rho)
        jc.add(vdofs, sdofs, j_loc.T)
        hc.add(rdofs, sdofs, h_loc.T)
        mc.add(vdofs, vdofs, m_loc)

    A0 = a0.build((ns, ns))
    A1 = a1.build((ns, ns))
    A0p = a0p.build((ns, ns))
    M = mc.build((nv, nv))
    H = hc.build((nr, ns))
    J = jc.build((nv, ns))

    z = lambda a, b: sp.csr_matrix((a, b))
    A = sp.bmat([[A0, z(ns, ns), z(ns, nv), H.T],
                 [z(ns, ns), A1, z(ns, nv), H.T],
                 [z(nv, ns), z(nv, ns), M, z(nv, nr)],
                 [H, H, z(nr, nv), z(nr, nr)]], format="csr")
    B = sp.bmat([[-A0p, z(ns, ns), -J.T, z(ns, nr)],
                 [z(ns, ns), z(ns, ns), -J.T, z(ns, nr)],
                 [J, J, z(nv, nv), z(nv, nr)],
                 [z(nr, ns), z(nr, ns), z(nr, nv), z(nr, nr)]], format="csr")

    dirichlet = []
    for e, edge in enumerate(space.mesh.edges):
        if edge.tag == BoundaryTag.GAMMA_U:
            c = edge.cells[0]
            pos = space.mesh.cell_edges[c].index(e)
            dirichlet.append((e, space.cell_edge_signs(c)[pos]))

    return BlockOperators(A0, A1, A0p, M, H, J, A, B,
                          lay.constrained_indices(space.mesh), lay, space, params,
                          dirichlet)


def assemble_rhs(blocks, f, v_dirichlet, t):
    """Time-dependent load vector C(t).

    f(pts, t) -> (n, 2) body force; v_dirichlet(pts, t) -> (n, 2) boundary
    velocity on GAMMA_U edges (may be None for homogeneous data). The velocity
    block receives (rho f, w); the two stress blocks receive <tau n, v_D>.
    """
    space, lay, params = blocks.space, blocks.layout, blocks.params
    rhs = np.zeros(lay.total)
    if f is not None:
        voff = 2 * lay.stress_size
        for c in range(space.mesh.num_cells):
            cb = space.cell_bases[c]
            fv = np.asarray(f(cb.rule.points, t))
            mono_w = cb.vals_kp1[:cb.n_k] * cb.rule.weights
            base = voff + lay.velocity_block(c)
            for i in (0, 1):
                rhs[base + i * cb.n_k: base + (i + 1) * cb.n_k] = (
                    params.rho * (mono_w @ fv[:, i]))
    if v_dirichlet is not None:
        k = space.k
        for e, sign in blocks.dirichlet_edges:
            rule = space.edge_rule(e)
            vd = np.asarray(v_dirichlet(rule.points, t))
            svals = np.array([rule.params ** j for j in range(k + 1)])
            gram = space.edge_grams[e]
            h_f = space.edge_frames[e].h
            base = lay.stress_edge_block(e)
            for i in (0, 1):
                b = (svals * rule.weights) @ vd[:, i]
                contrib = sign * h_f * np.linalg.solve(gram, b)
                for field in range(2):
                    off = lay.offsets[field]
                    rhs[off + base + i * (k + 1): off + base + i * (k + 1) + k + 1] \
                        += contrib
    return rhs


def apply_essential_bc(matrix, rhs, constrained, values):
    """Symmetric elimination of prescribed DoFs.

    Returns (reduced matrix, reduced rhs, free index array, expand) where
    expand maps the reduced solution back to full length with the prescribed
    values in place.
    """
    n = matrix.shape[0]
    constrained = np.asarray(constrained, dtype=int)
    values = np.asarray(values, dtype=float)
    if len(values) != len(constrained):
        raise ValueError("one value required per constrained index")
    mask = np.ones(n, dtype=bool)
    mask[constrained] = False
    free = np.nonzero(mask)[0]
    csc = matrix.tocsc()
    k_ff = csc[free][:, free]
    k_fc = csc[free][:, constrained]
    rhs_f = rhs[free] - k_fc @ values

    def expand(xf):
        x = np.empty(n)
        x[free] = xf
        x[constrained] = values
        return x

    return k_ff.tocsr(), rhs_f, free, expand


class LinearSolveHandle:
    """Reusable sparse LU factorization with a residual contract."""

    def __init__(self, matrix, rtol=1e-10):
        self.matrix = matrix.tocsc()
        self.rtol = rtol
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        if not np.all(np.isfinite(self.lu.U.diagonal())) or \
                np.abs(self.lu.U.diagonal()).min() == 0.0:
            raise SingularSystemError("factorization produced a zero pivot")

    def solve(self, b):
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("solve produced non-finite values")
        return x

    def residual(self, b, x):
        return float(np.linalg.norm(self.matrix @ x - b))


def factorize(matrix, rtol=1e-10):
    return LinearSolveHandle(matrix, rtol)
