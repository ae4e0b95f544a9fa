"""Discrete spaces: DoF layout, stress cell operators, interpolation.

Stress DoFs follow the moment set of the H(div) tensor virtual space:
  * per edge F and component i: (1/h_F) int_F (tau n)_i s^j ds, j = 0..k,
    with s the arclength parameter and n a fixed global edge normal;
  * per cell: (1/|K|) int_K tau : g for g in the grad-P_k basis and in the
    orthonormal complement basis of the gradient split.
Velocity DoFs are scaled-monomial coefficients of vector P_k per cell;
rotation DoFs are coefficients of the scalar s in eta = s * [[0,1],[-1,0]].
"""

from dataclasses import dataclass

import numpy as np

from .mesh import cell_geometry
from .polybase import (CellBasis, ScaledMonomialBasis1D, edge_quadrature, nmono)

SKEW_GEN = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class EdgeFrame:
    """Global geometric convention for one edge: p0 -> p1 with p0 index < p1 index."""
    h: float
    midpoint: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class FieldDofVector:
    kind: str          # stress0 | stress1 | velocity | rotation
    values: np.ndarray


class DofLayout:
    """Global index map for the ordering [sigma0 | sigma1 | v | r]."""

    def __init__(self, mesh, k):
        self.k = k
        self.n_k = nmono(k)
        self.edge_dofs = 2 * (k + 1)                    # per edge, per stress field
        self.interior_dofs = 2 * (self.n_k - 1) + k * (k + 1)
        self.stress_size = (mesh.num_edges * self.edge_dofs
                            + mesh.num_cells * self.interior_dofs)
        self.velocity_size = mesh.num_cells * 2 * self.n_k
        self.rotation_size = mesh.num_cells * self.n_k
        self.num_edges = mesh.num_edges
        self.num_cells = mesh.num_cells
        self.offsets = (0, self.stress_size, 2 * self.stress_size,
                        2 * self.stress_size + self.velocity_size)
        self.total = 2 * self.stress_size + self.velocity_size + self.rotation_size

    def stress_edge_block(self, edge):
        """Field-relative slice start of an edge's stress DoFs."""
        return edge * self.edge_dofs

    def stress_interior_block(self, cell):
        return self.num_edges * self.edge_dofs + cell * self.interior_dofs

    def velocity_block(self, cell):
        return cell * 2 * self.n_k

    def rotation_block(self, cell):
        return cell * self.n_k

    def constrained_indices(self, mesh):
        """Global indices of stress edge DoFs on GAMMA_SIGMA edges, both fields."""
        from .mesh import BoundaryTag

        out = []
        for e, edge in enumerate(mesh.edges):
            if edge.tag == BoundaryTag.GAMMA_SIGMA:
                base = self.stress_edge_block(e)
                for f in range(2):
                    off = self.offsets[f]
                    out.extend(off + base + d for d in range(self.edge_dofs))
        return np.array(sorted(out), dtype=int)


def closed_form_dof_total(n_edges, n_cells, k):
    """DoF count from the layout: 4(k+1)E + C(2 interior-stress + v + r)."""
    n_k = nmono(k)
    interior = 2 * (2 * (n_k - 1) + k * (k + 1)) + 3 * n_k
    return 4 * (k + 1) * n_edges + n_cells * interior


def compact_dof_count(n_edges, n_cells, k):
    """Alternative per-polygon closed form (k+1)(5k+3); reported alongside."""
    return 4 * (k + 1) * n_edges + (k + 1) * (5 * k + 3) * n_cells


@dataclass(frozen=True)
class StressCellOperators:
    """DoF-to-polynomial maps for one cell (single stress field).

    DIV maps local stress DoFs to vector-P_k coefficients of div(tau); PI0 to
    tensor-P_k coefficients of the L2 projection; DOFP evaluates the DoFs of a
    tensor-P_k polynomial; S is the deflated stabilization |K|(I-P)^T(I-P).
    """
    DIV: np.ndarray
    PI0: np.ndarray
    DOFP: np.ndarray
    P: np.ndarray
    S: np.ndarray
    local_dofs: np.ndarray  # field-relative global indices, local order


class VirtualSpace:
    """Per-mesh cache of cell bases, edge frames and stress operators."""

    def __init__(self, mesh, k):
        if k < 1:
            raise ValueError("polynomial degree k must be >= 1")
        self.mesh = mesh
        self.k = k
        self.layout = DofLayout(mesh, k)
        self.edge_frames = [self._frame(e) for e in range(mesh.num_edges)]
        self.edge_grams = [ScaledMonomialBasis1D(k, f.midpoint, f.h, f.tangent).gram()
                           for f in self.edge_frames]
        self.cell_bases = [CellBasis(mesh, c, k) for c in range(mesh.num_cells)]
        self.cell_ops = [self._build_cell_operators(c) for c in range(mesh.num_cells)]

    def _frame(self, e):
        a, b = self.mesh.edges[e].vertices
        p0, p1 = self.mesh.vertices[a], self.mesh.vertices[b]
        d = p1 - p0
        h = float(np.linalg.norm(d))
        t = d / h
        return EdgeFrame(h, 0.5 * (p0 + p1), t, np.array([t[1], -t[0]]))

    def cell_edge_signs(self, c):
        """+1 where the cell's CCW travel direction matches the global edge frame."""
        loop = self.mesh.cells[c]
        signs = []
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            signs.append(1.0 if a < b else -1.0)
        return signs

    def edge_rule(self, e, order=None):
        a, b = self.mesh.edges[e].vertices
        if order is None:
            order = 2 * self.k + 2
        return edge_quadrature(self.mesh.vertices[a], self.mesh.vertices[b], order)

    # -- operator construction ------------------------------------------------

    def _build_cell_operators(self, c):
        k = self.k
        cb = self.cell_bases[c]
        lay = self.layout
        n_k, n_kp1 = cb.n_k, cb.n_kp1
        ned = k + 1
        loop_edges = self.mesh.cell_edges[c]
        signs = self.cell_edge_signs(c)
        n_edge_loc = lay.edge_dofs * len(loop_edges)
        n_loc = n_edge_loc + lay.interior_dofs
        area, diam = cb.area, cb.diameter

        # per-edge transfer T[j, a] = int_F s^j m_a ds and R = h_F inv(G_F)
        edge_T = []
        for pos, e in enumerate(loop_edges):
            rule = self.edge_rule(e)
            svals = np.array([rule.params ** j for j in range(ned)])
            mvals = cb.basis_kp1.evaluate(rule.points)
            w = (svals * rule.weights) @ mvals.T           # (k+1, n_kp1)
            r = self.edge_frames[e].h * np.linalg.inv(self.edge_grams[e])
            edge_T.append((r.T @ w, w))                     # (T, raw moments)

        def edge_slot(pos, i, j):
            return pos * lay.edge_dofs + i * ned + j

        int_base = n_edge_loc
        n_grad_int = 2 * (n_k - 1)

        # divergence: int (div tau)_i m_a = sum_F s_F int_F (tau n_out)_i m_a
        #                                   - (|K|/h_K) chi_{(a,i)}
        b_div = np.zeros((2 * n_k, n_loc))
        for i in (0, 1):
            for a in range(n_k):
                row = b_div[i * n_k + a]
                for pos in range(len(loop_edges)):
                    t_mat = edge_T[pos][0]
                    for j in range(ned):
                        row[edge_slot(pos, i, j)] += signs[pos] * t_mat[j, a]
                if a >= 1:
                    row[int_base + 2 * (a - 1) + i] -= area / diam
        div_op = np.vstack([np.linalg.solve(cb.gram_k, b_div[:n_k]),
                            np.linalg.solve(cb.gram_k, b_div[n_k:])])

        # moments against the gradient-split basis (columns of Q)
        q = np.column_stack([cb.split.grad_k, cb.split.perp])
        nu = np.zeros((4 * n_k, n_loc))
        hmix = cb.gram_kp1[:n_k, :]                         # (n_k, n_kp1)
        row_idx = 0
        for a in range(1, n_kp1):
            for i in (0, 1):
                row = nu[row_idx]
                row -= diam * (hmix[:, a] @ div_op[i * n_k:(i + 1) * n_k])
                for pos in range(len(loop_edges)):
                    t_mat = edge_T[pos][0]
                    for j in range(ned):
                        row[edge_slot(pos, i, j)] += diam * signs[pos] * t_mat[j, a]
                row_idx += 1
        for p in range(cb.split.perp.shape[1]):
            nu[row_idx, int_base + n_grad_int + p] = area
            row_idx += 1

        moments = np.linalg.solve(q.T, nu)
        pi0 = np.linalg.solve(cb.gram_ten, moments)

        # DoFs of a tensor-P_k polynomial
        dofp = np.zeros((n_loc, 4 * n_k))
        for pos, e in enumerate(loop_edges):
            w = edge_T[pos][1][:, :n_k]
            n_g = self.edge_frames[e].normal
            h_f = self.edge_frames[e].h
            for i in (0, 1):
                for j in range(ned):
                    r = dofp[edge_slot(pos, i, j)]
                    r[(2 * i + 0) * n_k:(2 * i + 1) * n_k] += n_g[0] * w[j] / h_f
                    r[(2 * i + 1) * n_k:(2 * i + 2) * n_k] += n_g[1] * w[j] / h_f
        grad_int = cb.split.grad_k[:, :n_grad_int]
        dofp[int_base:int_base + n_grad_int] = grad_int.T @ cb.gram_ten / area
        dofp[int_base + n_grad_int:] = cb.split.perp.T @ cb.gram_ten / area

        p_mat = dofp @ pi0
        defl = np.eye(n_loc) - p_mat
        s_mat = area * (defl.T @ defl)

        local = self._local_indices(c, loop_edges)
        return StressCellOperators(div_op, pi0, dofp, p_mat, s_mat, local)

    def _local_indices(self, c, loop_edges):
        lay = self.layout
        idx = []
        for e in loop_edges:
            base = lay.stress_edge_block(e)
            idx.extend(base + d for d in range(lay.edge_dofs))
        base = lay.stress_interior_block(c)
        idx.extend(base + d for d in range(lay.interior_dofs))
        return np.array(idx, dtype=int)

    # -- interpolation / projection -------------------------------------------

    def interpolate_stress(self, field, kind="stress0"):
        """DoF interpolation of a smooth tensor field; field(pts) -> (n, 2, 2)."""
        lay = self.layout
        vals = np.zeros(lay.stress_size)
        k = self.k
        for e in range(self.mesh.num_edges):
            rule = self.edge_rule(e)
            tau = np.asarray(field(rule.points))
            tn = np.einsum("qij,j->qi", tau, self.edge_frames[e].normal)
            svals = np.array([rule.params ** j for j in range(k + 1)])
            base = lay.stress_edge_block(e)
            for i in (0, 1):
                for j in range(k + 1):
                    vals[base + i * (k + 1) + j] = (
                        np.sum(rule.weights * svals[j] * tn[:, i])
                        / self.edge_frames[e].h)
        for c in range(self.mesh.num_cells):
            cb = self.cell_bases[c]
            tau = np.asarray(field(cb.rule.points))          # (q, 2, 2)
            flat = np.concatenate([tau[:, 0, 0][None], tau[:, 0, 1][None],
                                   tau[:, 1, 0][None], tau[:, 1, 1][None]])
            # int tau : g = sum_e int tau_e * g_e; g columns in tensor coords
            mono_w = cb.vals_kp1[:cb.n_k] * cb.rule.weights
            mom = np.concatenate([flat[e] @ mono_w.T for e in range(4)])
            base = lay.stress_interior_block(c)
            n_gi = 2 * (cb.n_k - 1)
            g_int = cb.split.grad_k[:, :n_gi]
            vals[base:base + n_gi] = g_int.T @ mom / cb.area
            vals[base + n_gi:base + lay.interior_dofs] = cb.split.perp.T @ mom / cb.area
        return FieldDofVector(kind, vals)

    def project_velocity(self, field):
        """Cellwise L2 projection onto vector P_k; field(pts) -> (n, 2)."""
        lay = self.layout
        out = np.zeros(lay.velocity_size)
        for c in range(self.mesh.num_cells):
            cb = self.cell_bases[c]
            v = np.asarray(field(cb.rule.points))
            mono_w = cb.vals_kp1[:cb.n_k] * cb.rule.weights
            base = lay.velocity_block(c)
            for i in (0, 1):
                rhs = mono_w @ v[:, i]
                out[base + i * cb.n_k: base + (i + 1) * cb.n_k] = np.linalg.solve(
                    cb.gram_k, rhs)
        return FieldDofVector("velocity", out)

    def project_rotation(self, scalar_field):
        """Cellwise L2 projection of the skew generator coefficient s."""
        lay = self.layout
        out = np.zeros(lay.rotation_size)
        for c in range(self.mesh.num_cells):
            cb = self.cell_bases[c]
            s = np.asarray(scalar_field(cb.rule.points))
            mono_w = cb.vals_kp1[:cb.n_k] * cb.rule.weights
            base = lay.rotation_block(c)
            out[base:base + cb.n_k] = np.linalg.solve(cb.gram_k, mono_w @ s)
        return FieldDofVector("rotation", out)

    def stress_boundary_values(self, field, edge_ids):
        """Edge-moment DoF values of a tensor field on the given edges.

        Returns a dict {field-relative dof index: value}; used for essential
        traction data on GAMMA_SIGMA.
        """
        lay = self.layout
        k = self.k
        out = {}
        for e in edge_ids:
            rule = self.edge_rule(e)
            tau = np.asarray(field(rule.points))
            tn = np.einsum("qij,j->qi", tau, self.edge_frames[e].normal)
            svals = np.array([rule.params ** j for j in range(k + 1)])
            base = lay.stress_edge_block(e)
            for i in (0, 1):
                for j in range(k + 1):
                    out[base + i * (k + 1) + j] = float(
                        np.sum(rule.weights * svals[j] * tn[:, i])
                        / self.edge_frames[e].h)
        return out
