"""Piecewise-linear finite elements on a 2D triangulation and a regular time grid.

Assembles the Gram matrices of P1 hat functions: the spatial mass matrix C
(``C_ij = <psi_i, psi_j>``) and stiffness matrix G (``G_ij = <grad psi_i,
grad psi_j>``) with natural Neumann boundary conditions, plus their temporal
counterparts M0 (mass), M2 (stiffness) and the boundary marker M1 on a
regular 1D grid.  Mass lumping (row sums on the diagonal) keeps products
involving C^{-1} sparse downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
from scipy.io import mmread, mmwrite

__all__ = [
    "MeshError",
    "Mesh2D",
    "TimeGrid",
    "assemble_mass",
    "assemble_stiffness",
    "lumped_mass",
    "temporal_matrices",
    "structured_square_mesh",
    "read_mesh",
    "write_mesh",
    "write_matrix",
    "read_matrix",
    "check_symmetric",
]


class MeshError(ValueError):
    """Invalid mesh or time grid."""


def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


@dataclass(frozen=True)
class Mesh2D:
    """Triangulation given by vertex coordinates (n, 2) and vertex-index
    triples (m, 3).  Triangles may be given in either orientation; validation
    rejects degenerate triangles, out-of-range indices, duplicate vertices
    and edge-disconnected meshes."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError(f"vertices must be (n, 2), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must be (m, 3), got {t.shape}")
        if not np.isfinite(v).all():
            raise MeshError("vertex coordinates must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        n = len(v)
        if t.min(initial=0) < 0 or t.max(initial=-1) >= n:
            raise MeshError("triangle indices out of range")
        signed = _triangle_areas(v, t)
        bad = np.flatnonzero(np.abs(signed) <= 1e-14 * self.diameter**2)
        if bad.size:
            raise MeshError(f"degenerate triangle at index {bad[0]}")
        self._check_duplicates(v)
        self._check_edge_connected(t, len(t))

    def _check_duplicates(self, v: np.ndarray) -> None:
        tol = 1e-12 * max(self.diameter, 1e-300)
        order = np.lexsort((v[:, 1], v[:, 0]))
        sv = v[order]
        close = (np.abs(np.diff(sv[:, 0])) <= tol) & (np.abs(np.diff(sv[:, 1])) <= tol)
        if close.any():
            i = int(np.flatnonzero(close)[0])
            raise MeshError(
                f"duplicate vertices {order[i]} and {order[i + 1]} within tolerance"
            )

    @staticmethod
    def _check_edge_connected(t: np.ndarray, m: int) -> None:
        if m <= 1:
            return
        edges = {}
        for k in range(m):
            a, b, c = t[k]
            for e in ((a, b), (b, c), (c, a)):
                edges.setdefault((min(e), max(e)), []).append(k)
        rows, cols = [], []
        for tris in edges.values():
            for i in range(len(tris) - 1):
                rows.append(tris[i])
                cols.append(tris[i + 1])
        adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m))
        ncomp, _ = sparse.csgraph.connected_components(adj, directed=False)
        if ncomp != 1:
            raise MeshError(f"mesh is not edge-connected ({ncomp} components)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def diameter(self) -> float:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def areas(self) -> np.ndarray:
        return np.abs(_triangle_areas(self.vertices, self.triangles))


@dataclass(frozen=True)
class TimeGrid:
    """Regular grid t0, t0 + h, ..., with n_t >= 3 knots and step h > 0."""

    n_t: int
    step: float
    t0: float = 0.0

    def __post_init__(self):
        if self.n_t < 3:
            raise MeshError(f"time grid needs n_t >= 3, got {self.n_t}")
        if not np.isfinite(self.step) or self.step <= 0:
            raise MeshError(f"time step must be positive, got {self.step}")

    @property
    def points(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n_t)

    @property
    def t_end(self) -> float:
        return self.t0 + self.step * (self.n_t - 1)


def assemble_mass(mesh: Mesh2D) -> sparse.csr_matrix:
    """Consistent P1 mass matrix: element contribution A/6 on the diagonal,
    A/12 off-diagonal, for a triangle of area A.  Symmetric positive definite;
    the sum of all entries equals the mesh area."""
    return _assemble(mesh, mass=True)


def assemble_stiffness(mesh: Mesh2D) -> sparse.csr_matrix:
    """P1 stiffness matrix with natural Neumann boundary.  Positive
    semidefinite; constants span the kernel, so every row sums to zero."""
    return _assemble(mesh, mass=False)


def _assemble(mesh: Mesh2D, mass: bool) -> sparse.csr_matrix:
    v, t = mesh.vertices, mesh.triangles
    areas = _triangle_areas(v, t)
    bad = np.flatnonzero(np.abs(areas) <= 0)
    if bad.size:
        raise MeshError(f"degenerate triangle at index {bad[0]}")
    areas = np.abs(areas)
    m = len(t)
    if mass:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = areas[:, None, None] * local[None, :, :]
    else:
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        # hat-gradient covectors: psi_i = (a_i + b_i x + c_i y) / (2A)
        b = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
        c = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
        vals = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) \
            / (4.0 * areas[:, None, None])
    rows = np.repeat(t, 3, axis=1).reshape(m, 3, 3)
    cols = np.tile(t, (1, 3)).reshape(m, 3, 3)
    n = mesh.n_vertices
    A = sparse.coo_matrix(
        (vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
    # keep duplicate-summed explicit zeros: the stored pattern is the mesh
    # connectivity, which downstream stencil checks rely on
    A.sum_duplicates()
    return A


def lumped_mass(C: sparse.spmatrix) -> sparse.csr_matrix:
    """Diagonal lumped mass: row sums of C.  Preserves the trace of the
    bilinear form (total mass) and is positive definite."""
    d = np.asarray(C.sum(axis=1)).ravel()
    if (d <= 0).any():
        raise MeshError("lumped mass has a non-positive row sum")
    return sparse.diags(d, format="csr")


def temporal_matrices(grid: TimeGrid) -> tuple[sparse.csr_matrix, sparse.csr_matrix, sparse.csr_matrix]:
    """Temporal P1 matrices (M0, M1, M2) on the regular grid.

    M0 is the tridiagonal mass matrix (interior row h/6, 2h/3, h/6), M2 the
    tridiagonal stiffness (interior row -1/h, 2/h, -1/h, halved diagonal at
    the ends) and M1 is zero except for 1/2 in the two corner entries.
    """
    n, h = grid.n_t, grid.step
    ones = np.ones(n - 1)
    d0 = np.full(n, 2 * h / 3.0)
    d0[0] = d0[-1] = h / 3.0
    M0 = sparse.diags([h / 6.0 * ones, d0, h / 6.0 * ones], [-1, 0, 1], format="csr")
    d2 = np.full(n, 2.0 / h)
    d2[0] = d2[-1] = 1.0 / h
    M2 = sparse.diags([-ones / h, d2, -ones / h], [-1, 0, 1], format="csr")
    M1 = sparse.coo_matrix(
        ([0.5, 0.5], ([0, n - 1], [0, n - 1])), shape=(n, n)
    ).tocsr()
    return M0, M1, M2


def structured_square_mesh(
    n_cells: int,
    extent: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
    margin: float = 0.0,
    split: str = "alternate",
) -> Mesh2D:
    """Regular triangulated rectangle, each grid cell split into two triangles.

    ``n_cells`` counts cells per side of the region of interest ``extent``;
    ``margin`` extends the meshed domain beyond the extent on all sides (same
    cell size) so Neumann boundary effects decay before reaching the region of
    interest.  ``split`` chooses the cell diagonal: "uniform" uses the same
    diagonal everywhere, "alternate" flips it checkerboard-fashion.

    Returns a mesh whose vertices include the extent grid points; use
    :func:`interior_vertex_mask` to recover them.
    """
    if n_cells < 1:
        raise MeshError("n_cells must be >= 1")
    if split not in ("alternate", "uniform"):
        raise MeshError(f"unknown split {split!r}")
    xmin, xmax, ymin, ymax = extent
    if not (xmax > xmin and ymax > ymin):
        raise MeshError(f"empty extent {extent}")
    hx = (xmax - xmin) / n_cells
    hy = (ymax - ymin) / n_cells
    mx = int(np.ceil(margin / hx - 1e-9)) if margin > 0 else 0
    my = int(np.ceil(margin / hy - 1e-9)) if margin > 0 else 0
    nx, ny = n_cells + 2 * mx, n_cells + 2 * my
    xs = xmin + hx * (np.arange(nx + 1) - mx)
    ys = ymin + hy * (np.arange(ny + 1) - my)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ci, cj = ci.ravel(), cj.ravel()
    v00 = cj * (nx + 1) + ci
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    if split == "uniform":
        ne = np.ones_like(v00, dtype=bool)
    else:
        ne = (ci + cj) % 2 == 0
    tris = np.empty((2 * len(v00), 3), dtype=np.int64)
    # "ne" cells carry the v00-v11 diagonal, the others v10-v01
    tris[0::2] = np.where(ne[:, None], np.stack([v00, v10, v11], axis=1),
                          np.stack([v00, v10, v01], axis=1))
    tris[1::2] = np.where(ne[:, None], np.stack([v00, v11, v01], axis=1),
                          np.stack([v10, v11, v01], axis=1))
    return Mesh2D(vertices=vertices, triangles=tris)


def interior_vertex_mask(mesh: Mesh2D, extent: tuple[float, float, float, float]) -> np.ndarray:
    """Boolean mask of vertices inside the region of interest (inclusive)."""
    xmin, xmax, ymin, ymax = extent
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    eps = 1e-9 * max(mesh.diameter, 1.0)
    return (x >= xmin - eps) & (x <= xmax + eps) & (y >= ymin - eps) & (y <= ymax + eps)


def write_mesh(path, mesh: Mesh2D) -> None:
    """Plain-text mesh format: vertex count, "x y" lines, triangle count,
    "i j k" lines with 0-based indices."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"{len(mesh.triangles)}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path) -> Mesh2D:
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshError(f"truncated mesh file {path}")
        out = tokens[pos:pos + n]
        pos += n
        return out

    try:
        nv = int(take(1)[0])
        vertices = np.array(take(2 * nv), dtype=float).reshape(nv, 2)
        nt = int(take(1)[0])
        triangles = np.array(take(3 * nt), dtype=np.int64).reshape(nt, 3)
    except ValueError as exc:
        raise MeshError(f"bad token in mesh file {path}: {exc}") from exc
    if pos != len(tokens):
        raise MeshError(f"trailing data in mesh file {path}")
    return Mesh2D(vertices=vertices, triangles=triangles)


def write_matrix(path, A: sparse.spmatrix) -> None:
    """Coordinate-format text export (MatrixMarket, symmetric header,
    1-based indices)."""
    mmwrite(str(path), sparse.triu(A.T).T.tocoo(), symmetry="symmetric")


def read_matrix(path) -> sparse.csr_matrix:
    return sparse.csr_matrix(mmread(str(path)))


def check_symmetric(A: sparse.spmatrix, tol: float = 0.0) -> bool:
    """True when A equals its transpose entrywise within tol."""
    d = (A - A.T).tocoo()
    if d.nnz == 0:
        return True
    return bool(np.abs(d.data).max() <= tol)
