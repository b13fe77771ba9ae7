"""P2-P0 mixed finite elements on the periodic strip, plus the contact multiplier.

Velocity is continuous piecewise quadratic (two components per node, DoF
``2 * node + comp``), pressure is one constant per cell and the contact
multiplier is one constant per attached lower edge.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, NumericError

# Symmetric triangle rules on the reference triangle, weights normalised to sum 1.
_TRI_RULES = {
    4: (
        np.array([
            [0.445948490915965, 0.445948490915965],
            [0.108103018168070, 0.445948490915965],
            [0.445948490915965, 0.108103018168070],
            [0.091576213509771, 0.091576213509771],
            [0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.816847572980459],
        ]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
    ),
    6: (
        np.array([
            [0.249286745170910, 0.249286745170910],
            [0.501426509658179, 0.249286745170910],
            [0.249286745170910, 0.501426509658179],
            [0.063089014491502, 0.063089014491502],
            [0.873821971016996, 0.063089014491502],
            [0.063089014491502, 0.873821971016996],
            [0.053145049844817, 0.310352451033784],
            [0.310352451033784, 0.053145049844817],
            [0.636502499121399, 0.053145049844817],
            [0.053145049844817, 0.636502499121399],
            [0.310352451033784, 0.636502499121399],
            [0.636502499121399, 0.310352451033784],
        ]),
        np.array([0.116786275726379] * 3 + [0.050844906370207] * 3 + [0.082851075618374] * 6),
    ),
}

_GAUSS3 = (
    0.5 + 0.5 * np.sqrt(0.6) * np.array([-1.0, 0.0, 1.0]),
    np.array([5.0, 8.0, 5.0]) / 18.0,
)


def triangle_rule(degree):
    """Points (reference coordinates) and weights summing to 1."""
    if degree not in _TRI_RULES:
        raise ConfigError(f"no triangle rule of degree {degree}")
    return _TRI_RULES[degree]


def p2_values(xi, eta):
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1], axis=-1)


def p2_reference_gradients(xi, eta):
    """Gradients w.r.t. (xi, eta); shape ``(..., 6, 2)``."""
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    gx = np.stack([-(4 * l0 - 1), 4 * l1 - 1, 0 * l0, 4 * l2, -4 * l2, 4 * l0 - 4 * l1], axis=-1)
    gy = np.stack([-(4 * l0 - 1), 0 * l0, 4 * l2 - 1, 4 * l1, 4 * l0 - 4 * l2, -4 * l1], axis=-1)
    return np.stack([gx, gy], axis=-1)


def edge_p2_values(t):
    """Quadratic basis along an edge: left vertex, midpoint, right vertex."""
    t = np.asarray(t, dtype=float)
    return np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)


# Local edges of a triangle, ordered to match p2 nodes 3, 4, 5.
_LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


@dataclass
class FunctionSpaces:
    """DoF maps for the velocity/pressure pair on a given mesh topology.

    Depends only on connectivity, so a single instance serves every deformed
    copy of the reference mesh.
    """

    n_nodes: int
    cell_nodes: np.ndarray
    lower_nodes: np.ndarray
    top_nodes: np.ndarray
    top_edge_nodes: np.ndarray
    node_points_index: np.ndarray = field(repr=False)
    _csr_pattern: dict = field(default_factory=dict, repr=False)

    @property
    def N_v(self):
        return 2 * self.n_nodes

    @property
    def n_cells(self):
        return self.cell_nodes.shape[0]

    @property
    def N_q(self):
        return self.n_cells

    @property
    def cell_dofs(self):
        d = np.empty((self.n_cells, 12), dtype=np.int64)
        d[:, 0::2] = 2 * self.cell_nodes
        d[:, 1::2] = 2 * self.cell_nodes + 1
        return d

    @property
    def dirichlet_dofs(self):
        """Horizontal velocity DoFs on the top boundary."""
        return 2 * self.top_nodes

    def node_coordinates(self, mesh):
        """Coordinates of every P2 node, with x folded into ``[0, 1)``."""
        a, b = self.node_points_index
        xy = 0.5 * (mesh.points[a] + mesh.points[b])
        xy[:, 0] %= 1.0
        return xy

    def matrix_pattern(self, key, rows, cols, shape):
        """Cached CSR pattern and the scatter map from local entries to CSR slots."""
        if key not in self._csr_pattern:
            keys = rows.ravel().astype(np.int64) * shape[1] + cols.ravel()
            uniq, flat = np.unique(keys, return_inverse=True)
            r, c = np.divmod(uniq, shape[1])
            indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=shape[0]))])
            self._csr_pattern[key] = (indptr, c, flat.ravel(), shape)
        return self._csr_pattern[key]


def scatter_csr(pattern, values):
    indptr, indices, flat, shape = pattern
    data = np.bincount(flat, weights=values.ravel(), minlength=indices.size)
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=shape)


def build_spaces(mesh):
    """Number P2 nodes with the periodic x = 0 / x = 1 pairs identified."""
    pv = mesh.periodic
    uniq, vnode = np.unique(pv, return_inverse=True)
    n_vert = uniq.size
    vertex_node = np.full(pv.size, -1, dtype=np.int64)
    vertex_node[:] = vnode

    tri = mesh.triangles
    ea = np.concatenate([tri[:, i] for i, _ in _LOCAL_EDGES])
    eb = np.concatenate([tri[:, j] for _, j in _LOCAL_EDGES])
    ka, kb = vertex_node[ea], vertex_node[eb]
    keys = np.minimum(ka, kb) * n_vert + np.maximum(ka, kb)
    ukeys, first, einv = np.unique(keys, return_index=True, return_inverse=True)
    n_edges = ukeys.size

    cell_nodes = np.empty((tri.shape[0], 6), dtype=np.int64)
    cell_nodes[:, :3] = vertex_node[tri]
    cell_nodes[:, 3:] = (n_vert + einv).reshape(3, -1).T

    def edge_node(a, b):
        k = np.minimum(vertex_node[a], vertex_node[b]) * n_vert + np.maximum(vertex_node[a], vertex_node[b])
        pos = np.searchsorted(ukeys, k)
        if np.any(ukeys[pos] != k):
            raise ConfigError("boundary edge not found in triangulation")
        return n_vert + pos

    be = mesh.bottom_edges
    lower = np.column_stack([vertex_node[be[:, 0]], edge_node(be[:, 0], be[:, 1]), vertex_node[be[:, 1]]])
    te = mesh.top_edges
    top_edge_nodes = np.column_stack([vertex_node[te[:, 0]], edge_node(te[:, 0], te[:, 1]), vertex_node[te[:, 1]]])
    top_nodes = np.unique(top_edge_nodes)

    # a representative pair of geometric vertices per node (same vertex twice for corners)
    rep_vertex = np.empty(n_vert, dtype=np.int64)
    rep_vertex[vertex_node[::-1]] = np.arange(pv.size)[::-1]
    pa = np.concatenate([rep_vertex, ea[first]])
    pb = np.concatenate([rep_vertex, eb[first]])

    return FunctionSpaces(n_vert + n_edges, cell_nodes, lower, top_nodes, top_edge_nodes,
                          node_points_index=(pa, pb))


@dataclass
class CellGeometry:
    """Per-cell quadrature data: weights times |det J| and symmetric-gradient tables."""

    wdet: np.ndarray          # (n_cells, nq)
    strain_basis: np.ndarray  # (n_cells, nq, 12, 3) Voigt [e_xx, e_yy, e_xy]
    area: np.ndarray


_geom_cache = {}


def cell_geometry(mesh, spaces, degree=4):
    key = (id(mesh.points), degree)
    hit = _geom_cache.get(key)
    if hit is not None and hit[0] is mesh.points:
        return hit[1]
    pts, w = triangle_rule(degree)
    gref = p2_reference_gradients(pts[:, 0], pts[:, 1])  # (nq, 6, 2)
    X = mesh.points[mesh.triangles]
    J = np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=-1)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    g = np.einsum("qad,cde->cqae", gref, inv)  # physical gradients (nc, nq, 6, 2)
    gx, gy = g[..., 0], g[..., 1]
    nc, nq = g.shape[:2]
    E = np.zeros((nc, nq, 12, 3))
    E[:, :, 0::2, 0] = gx
    E[:, :, 0::2, 2] = 0.5 * gy
    E[:, :, 1::2, 1] = gy
    E[:, :, 1::2, 2] = 0.5 * gx
    geom = CellGeometry(wdet=np.abs(det)[:, None] * w[None, :] * 0.5, strain_basis=E, area=0.5 * np.abs(det))
    _geom_cache.clear()
    _geom_cache[key] = (mesh.points, geom)
    return geom


_VOIGT = np.array([1.0, 1.0, 2.0])


def strain(mesh, spaces, u, degree=4):
    """Voigt strain rate ``[e_xx, e_yy, e_xy]`` at the quadrature points."""
    geom = cell_geometry(mesh, spaces, degree)
    return _cell_strain(geom.strain_basis, u[spaces.cell_dofs])


def _cell_strain(E, u_cell):
    """Voigt strain at quadrature points from local DoF values ``(nc, 12)``."""
    return np.matmul(u_cell[:, None, None, :], E)[:, :, 0, :]


def _viscosity_at(geom, eps, rheo):
    half_s2 = 0.5 * np.einsum("cqv,v,cqv->cq", eps, _VOIGT, eps)
    eta, deta = rheo.viscosity_from_invariant(half_s2)
    if not np.all(np.isfinite(eta)):
        bad = int(np.nonzero(~np.isfinite(eta))[0][0])
        raise NumericError(f"non-finite viscosity in cell {bad}")
    return eta, deta


def assemble_residual_A(mesh, spaces, rheo, u, degree=4):
    """Vector ``a(u_h, v_i) = int 2 eta eps(u_h):eps(v_i)`` for all velocity DoFs."""
    geom = cell_geometry(mesh, spaces, degree)
    eps = _cell_strain(geom.strain_basis, u[spaces.cell_dofs])
    eta, _ = _viscosity_at(geom, eps, rheo)
    sig = (2.0 * eta * geom.wdet)[..., None] * eps * _VOIGT  # (nc, nq, 3)
    local = np.matmul(geom.strain_basis, sig[..., None])[..., 0].sum(axis=1)
    return np.bincount(spaces.cell_dofs.ravel(), weights=local.ravel(), minlength=spaces.N_v)


def assemble_jacobian_A(mesh, spaces, rheo, u, degree=4):
    """Consistent tangent of :func:`assemble_residual_A` (symmetric CSR)."""
    geom = cell_geometry(mesh, spaces, degree)
    E = geom.strain_basis
    EW = E * _VOIGT
    eps = _cell_strain(E, u[spaces.cell_dofs])
    eta, deta = _viscosity_at(geom, eps, rheo)
    nc, nq = eta.shape
    left = ((2.0 * eta * geom.wdet)[..., None, None] * EW).transpose(0, 2, 1, 3).reshape(nc, 12, 3 * nq)
    local = left @ E.transpose(0, 1, 3, 2).reshape(nc, 3 * nq, 12)
    if rheo.n != 1:
        proj = np.matmul(EW, eps[..., None])[..., 0]  # (nc, nq, 12)
        local += np.swapaxes(proj * (2.0 * deta * geom.wdet)[..., None], 1, 2) @ proj
    dofs = spaces.cell_dofs
    rows = np.repeat(dofs[:, :, None], 12, axis=2)
    cols = np.repeat(dofs[:, None, :], 12, axis=1)
    pattern = spaces.matrix_pattern("A", rows, cols, (spaces.N_v, spaces.N_v))
    return scatter_csr(pattern, local)


def assemble_divergence(mesh, spaces, degree=4):
    """``B_ij = int_{cell j} div v_i`` as an ``N_v x N_q`` CSR matrix."""
    geom = cell_geometry(mesh, spaces, degree)
    tr = geom.strain_basis[..., 0] + geom.strain_basis[..., 1]
    local = np.einsum("cq,cqk->ck", geom.wdet, tr)
    rows = spaces.cell_dofs
    cols = np.repeat(np.arange(spaces.n_cells)[:, None], 12, axis=1)
    pattern = spaces.matrix_pattern("B", rows, cols, (spaces.N_v, spaces.N_q))
    return scatter_csr(pattern, local)


def lower_edge_integrals(mesh, spaces):
    """``N_v x n_e`` matrix with column ``j`` = ``int_{e_j} v_i . n ds`` over every lower edge.

    Normals point out of the ice. Edge integrals use 3-point Gauss.
    """
    _, _, length, normal = mesh.lower_edge_geometry()
    t, w = _GAUSS3
    phi_int = (w[:, None] * edge_p2_values(t)).sum(axis=0)  # integrals over the unit edge
    ne = mesh.n_e
    nodes = spaces.lower_nodes
    rows = np.concatenate([2 * nodes, 2 * nodes + 1], axis=1)
    vals = np.concatenate([normal[:, 0:1] * phi_int, normal[:, 1:2] * phi_int], axis=1) * length[:, None]
    cols = np.repeat(np.arange(ne)[:, None], 6, axis=1)
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(spaces.N_v, ne))


def assemble_contact_coupling(mesh, spaces, attached):
    """``D_ij = int_{e_j} mu_j v_i . n ds`` restricted to attached edges."""
    attached = np.asarray(attached, dtype=bool)
    return lower_edge_integrals(mesh, spaces).tocsc()[:, np.nonzero(attached)[0]].tocsr()


def gamma_n(mesh, spaces, attached, u, D_all=None):
    """Average outward normal velocity on the selected lower edges."""
    if D_all is None:
        D_all = lower_edge_integrals(mesh, spaces)
    _, _, length, _ = mesh.lower_edge_geometry()
    avg = (D_all.T @ u) / length
    if attached is None:
        return avg
    return avg[np.asarray(attached, dtype=bool)]


def _top_integrals(mesh, spaces):
    a = mesh.points[mesh.top_edges[:, 0]]
    b = mesh.points[mesh.top_edges[:, 1]]
    length = np.hypot(*(b - a).T)
    t, w = _GAUSS3
    phi_int = (w[:, None] * edge_p2_values(t)).sum(axis=0)
    vals = length[:, None] * phi_int[None, :]
    return np.bincount(spaces.top_edge_nodes.ravel(), weights=vals.ravel(), minlength=spaces.n_nodes)


def assemble_load(mesh, spaces, N, tau_b=None, p_w=None):
    """Right-hand side from the top-boundary tractions.

    Default is the effective-pressure form: ``-N`` normal traction on top and no
    bed term. Passing ``p_w`` switches to overburden/water form with overburden
    ``N + p_w`` on top and water pressure ``p_w`` on the whole lower boundary.
    """
    if N < 0:
        raise ConfigError(f"effective pressure must be nonnegative, got {N}")
    s = _top_integrals(mesh, spaces)  # top is flat, outward normal (0, 1)
    f = np.zeros(spaces.N_v)
    p_top = N if p_w is None else N + p_w
    f[1::2] -= p_top * s
    if tau_b is not None:
        f[0::2] += tau_b * s
    if p_w is not None:
        f -= p_w * np.asarray(lower_edge_integrals(mesh, spaces).sum(axis=1)).ravel()
    return f


@dataclass
class DiscreteOperators:
    B: sp.csr_matrix
    D: sp.csr_matrix
    f: np.ndarray
    constraints: dict


def apply_dirichlet(ops, spaces, u_i):
    """Fix top horizontal velocity to ``u_i``.

    Returns the constrained DoFs, their values, and a copy of ``ops`` whose
    load vector is zeroed on those rows (the solver eliminates rows and columns).
    """
    dofs = spaces.dirichlet_dofs
    if ops.constraints:
        clash = [d for d in dofs if d in ops.constraints and ops.constraints[d] != u_i]
        if clash:
            raise ConfigError(f"conflicting Dirichlet values on DoFs {clash[:5]}")
    constraints = dict(ops.constraints)
    constraints.update({int(d): float(u_i) for d in dofs})
    f = ops.f.copy()
    f[dofs] = 0.0
    return DiscreteOperators(ops.B, ops.D, f, constraints)


def eliminate(K, rhs, dofs, values):
    """Row/column elimination of fixed DoFs: identity rows, load corrected."""
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    n = K.shape[0]
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    xfix = np.zeros(n)
    xfix[dofs] = values
    rhs = rhs - K @ xfix
    keep = sp.diags((~fixed).astype(float))
    K = (keep @ K @ keep + sp.diags(fixed.astype(float))).tocsr()
    rhs[dofs] = values
    return K, rhs
