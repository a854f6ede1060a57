"""Tetrahedral meshes: loading, validation, Jacobians and boundary facets.

Elements are linear (P1) Lagrange tetrahedra, so the degrees of freedom are
exactly the mesh vertices and the cell connectivity doubles as the DoF map.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MeshError, ParseError, ValidationError

# Local face f is the face opposite local vertex f.
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

SURFACE_TAGS = {
    "other": 0,
    "xmin": 1,
    "xmax": 2,
    "ymin": 3,
    "ymax": 4,
    "bottom": 5,
    "top": 6,
}
SURFACE_NAMES = {v: k for k, v in SURFACE_TAGS.items()}


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TetMesh:
    """Validated tetrahedral mesh.

    Attributes
    ----------
    vertices : (n_vertices, 3) float array, meters
    cells : (n_cells, 4) int array of vertex indices
    material_tag : (n_cells,) int array of region labels
    """

    vertices: np.ndarray
    cells: np.ndarray
    material_tag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, np.float64))
        object.__setattr__(self, "cells", _frozen(self.cells, np.int64))
        object.__setattr__(self, "material_tag", _frozen(self.material_tag, np.int64))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def n_dof(self) -> int:
        return self.n_vertices

    @property
    def dof_map(self) -> np.ndarray:
        # P1: cell-local node j of cell c carries global DoF cells[c, j].
        return self.cells

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def cell_centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)


@dataclass(frozen=True, eq=False)
class JacobianCache:
    """Per-cell affine map data from the reference tetrahedron."""

    det_j: np.ndarray
    inv_j_t: np.ndarray

    @property
    def volumes(self) -> np.ndarray:
        return np.abs(self.det_j) / 6.0


@dataclass(frozen=True, eq=False)
class BoundaryFacetSet:
    facets: np.ndarray  # (n, 2): cell index, local face index
    vertices: np.ndarray  # (n, 3) global vertex ids of each facet
    outward_normal: np.ndarray
    area: np.ndarray
    surface_tag: np.ndarray

    def __len__(self):
        return self.facets.shape[0]


@dataclass
class MaterialField:
    """Per-region thermal properties: ``{tag: (kappa, rho, c_s)}``."""

    regions: dict[int, tuple[float, float, float]]

    def __post_init__(self):
        for tag, props in self.regions.items():
            if len(props) != 3 or any(not np.isfinite(p) or p <= 0 for p in props):
                raise ValidationError(
                    f"material {tag}: kappa, rho, c_s must be positive, got {props}")

    @classmethod
    def uniform(cls, kappa, rho, c_s, tags=(0,)):
        return cls({int(t): (float(kappa), float(rho), float(c_s)) for t in tags})

    def per_cell(self, mesh: TetMesh):
        """Return ``(kappa, rho * c_s)`` arrays over cells."""
        missing = sorted(set(np.unique(mesh.material_tag).tolist()) - set(self.regions))
        if missing:
            raise ValidationError(f"no material properties for region tag(s) {missing}")
        kappa = np.empty(mesh.n_cells)
        heat_cap = np.empty(mesh.n_cells)
        for tag, (k, rho, cs) in self.regions.items():
            sel = mesh.material_tag == tag
            kappa[sel] = k
            heat_cap[sel] = rho * cs
        return kappa, heat_cap


def _signed_det(vertices, cells):
    p = vertices[cells]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
    return jac, np.linalg.det(jac)


def validate_mesh(mesh: TetMesh, lines=None) -> None:
    """Check index ranges, vertex usage and cell orientation.

    ``lines`` optionally maps cell index to source line number for messages.
    """

    def where(c):
        return f"cell {c}" + (f" (line {lines[c]})" if lines is not None else "")

    cells = mesh.cells
    if mesh.vertices.ndim != 2 or mesh.vertices.shape[1] != 3:
        raise MeshError("vertices must be an (n, 3) array")
    if cells.ndim != 2 or cells.shape[1] != 4:
        raise MeshError("cells must be an (m, 4) array")
    if mesh.material_tag.shape != (cells.shape[0],):
        raise MeshError("material_tag must have one entry per cell")
    if not np.all(np.isfinite(mesh.vertices)):
        raise MeshError("non-finite vertex coordinate")
    bad = np.nonzero((cells < 0) | (cells >= mesh.n_vertices))[0]
    if bad.size:
        c = int(bad[0])
        raise MeshError(f"{where(c)}: vertex index out of range 0..{mesh.n_vertices - 1}")
    srt = np.sort(cells, axis=1)
    rep = np.nonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))[0]
    if rep.size:
        c = int(rep[0])
        raise MeshError(f"{where(c)}: degenerate cell, repeated vertex in {cells[c].tolist()}")
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        v = int(np.nonzero(~used)[0][0])
        raise MeshError(f"vertex {v} is not referenced by any cell")
    _, det = _signed_det(mesh.vertices, cells)
    lo, hi = mesh.bounds
    scale = float(np.linalg.norm(hi - lo)) ** 3
    degenerate = np.nonzero(np.abs(det) <= 1e-14 * scale)[0]
    if degenerate.size:
        c = int(degenerate[0])
        raise MeshError(f"{where(c)}: degenerate cell with zero volume")
    inverted = np.nonzero(det < 0)[0]
    if inverted.size:
        c = int(inverted[0])
        raise MeshError(f"{where(c)}: inverted cell (negative Jacobian determinant)")


def load_mesh(path) -> TetMesh:
    """Read and validate an ASCII ``tetmesh 1`` file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"mesh file not found: {path}") from None
    rows = [
        (i + 1, line.split())
        for i, line in enumerate(text.splitlines())
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not rows or rows[0][1] != ["tetmesh", "1"]:
        raise ParseError(f"{path}: missing 'tetmesh 1' header")
    try:
        lineno, tok = rows[1]
        n_v, n_c = int(tok[0]), int(tok[1])
        if len(tok) != 2:
            raise ValueError
    except (IndexError, ValueError):
        raise ParseError(f"{path}: line {rows[1][0] if len(rows) > 1 else 2}: "
                         "expected '<n_vertices> <n_cells>'") from None
    body = rows[2:]
    if len(body) != n_v + n_c:
        raise ParseError(f"{path}: expected {n_v} vertex and {n_c} cell lines, "
                         f"found {len(body)} data lines")
    vertices = np.empty((n_v, 3))
    for k, (lineno, tok) in enumerate(body[:n_v]):
        try:
            if len(tok) != 3:
                raise ValueError
            vertices[k] = [float(x) for x in tok]
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: expected 'x y z'") from None
    cells = np.empty((n_c, 4), dtype=np.int64)
    tags = np.empty(n_c, dtype=np.int64)
    lines = []
    for k, (lineno, tok) in enumerate(body[n_v:]):
        try:
            if len(tok) != 5:
                raise ValueError
            cells[k] = [int(x) for x in tok[:4]]
            tags[k] = int(tok[4])
        except ValueError:
            raise ParseError(f"{path}: line {lineno}: expected 'v0 v1 v2 v3 tag'") from None
        lines.append(lineno)
    mesh = TetMesh(vertices, cells, tags)
    try:
        validate_mesh(mesh, lines)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None
    return mesh


def write_mesh(mesh: TetMesh, path) -> None:
    out = ["tetmesh 1", f"{mesh.n_vertices} {mesh.n_cells}"]
    out += [" ".join(repr(float(x)) for x in v) for v in mesh.vertices]
    out += [" ".join(str(int(i)) for i in c) + f" {int(t)}"
            for c, t in zip(mesh.cells, mesh.material_tag)]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def compute_jacobians(mesh: TetMesh) -> JacobianCache:
    jac, det = _signed_det(mesh.vertices, mesh.cells)
    bad = np.nonzero(det <= 0)[0]
    if bad.size:
        raise MeshError(f"cell {int(bad[0])}: inverted cell, det_J = {det[bad[0]]:.3e}")
    inv_t = np.transpose(np.linalg.inv(jac), (0, 2, 1))
    det.setflags(write=False)
    inv_t.setflags(write=False)
    return JacobianCache(det, inv_t)


def find_boundary_facets(mesh: TetMesh) -> BoundaryFacetSet:
    """Faces belonging to exactly one cell, with outward normals and tags."""
    m = mesh.n_cells
    faces = mesh.cells[:, LOCAL_FACES]  # (m, 4, 3)
    keys = np.sort(faces.reshape(-1, 3), axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        k = int(np.nonzero(counts[inverse] > 2)[0][0])
        raise MeshError(f"non-manifold face {keys[k].tolist()} shared by "
                        f"{counts[inverse[k]]} cells")
    flat = np.nonzero(counts[inverse] == 1)[0]
    cell_idx, local = np.divmod(flat, 4)
    fverts = faces.reshape(-1, 3)[flat]
    p = mesh.vertices[fverts]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(cross, axis=1)
    normal = cross / norm[:, None]
    opposite = mesh.vertices[mesh.cells[cell_idx, local]]
    flip = np.einsum("ij,ij->i", normal, opposite - p[:, 0]) > 0
    normal[flip] *= -1.0

    lo, hi = mesh.bounds
    tol = 1e-9 * float(np.linalg.norm(hi - lo))
    tags = np.zeros(len(flat), dtype=np.int64)
    planes = [(2, hi, "top"), (2, lo, "bottom"), (0, lo, "xmin"),
              (0, hi, "xmax"), (1, lo, "ymin"), (1, hi, "ymax")]
    for axis, ref, name in planes:
        on = np.all(np.abs(p[:, :, axis] - ref[axis]) <= tol, axis=1) & (tags == 0)
        tags[on] = SURFACE_TAGS[name]
    return BoundaryFacetSet(
        facets=np.stack([cell_idx, local], axis=1),
        vertices=fverts,
        outward_normal=normal,
        area=0.5 * norm,
        surface_tag=tags,
    )


def box_mesh(shape, extent=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), tag=0) -> TetMesh:
    """Structured box mesh, each hexahedron split into 6 Kuhn tetrahedra.

    ``shape`` is the number of hexahedra along x, y, z. ``tag`` may be an
    int or a callable mapping cell centroids ``(m, 3)`` to integer tags.
    """
    nx, ny, nz = shape
    axes = [np.linspace(o, o + e, n + 1) for o, e, n in zip(origin, extent, shape)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for ax in perm:
            corner[ax] = 1
            path.append(corner.copy())
        ids = [vid(i + d[0], j + d[1], k + d[2]) for d in path]
        # Odd permutations yield negatively oriented tets.
        parity = sum(perm[a] > perm[b] for a in range(3) for b in range(a + 1, 3)) % 2
        if parity:
            ids[1], ids[2] = ids[2], ids[1]
        tets.append(np.stack(ids, axis=1))
    cells = np.stack(tets, axis=1).reshape(-1, 4)
    centroids = vertices[cells].mean(axis=1)
    tags = tag(centroids) if callable(tag) else np.full(len(cells), tag)
    mesh = TetMesh(vertices, cells, tags)
    validate_mesh(mesh)
    return mesh
