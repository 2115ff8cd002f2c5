import math
from collections import Counter
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from liner_optimizer.constants import (
    BOUNDARY_TAGS,
    FAR_FIELD_TAG,
    LINER_TAG,
    MESH_HEADER,
    NEAR_FIELD_TAG,
    SOURCE_TAG,
    SYMMETRY_TAG,
    TWO_PI,
)
from liner_optimizer.errors import MeshFormatError, MeshInvariantError
from liner_optimizer.models import Mesh


def _graded_axis(breakpoints: List[float], h: float) -> np.ndarray:
    """Nodes along one axis with every breakpoint on the grid and spacing <= h."""
    pieces = [np.array([breakpoints[0]])]
    for start, stop in zip(breakpoints[:-1], breakpoints[1:]):
        if stop - start <= 0:
            continue
        cells = max(1, math.ceil((stop - start) / h - 1e-12))
        pieces.append(np.linspace(start, stop, cells + 1)[1:])
    return np.concatenate(pieces)


def generate_duct_mesh(
    length: float,
    height: float,
    liner_start: float,
    liner_length: float,
    h: float,
) -> Mesh:
    """
    Structured triangulation of [0, length] x [0, height].

    Tags: 1 on x=0 (fan source), 2 on the liner part of y=height,
    3 on the rest of y=height, 4 on x=length (far field), 5 on y=0 (symmetry).
    """
    for name, value in (
        ("length", length),
        ("height", height),
        ("liner_length", liner_length),
        ("h", h),
    ):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if liner_start < 0:
        raise ValueError(f"liner_start must be non-negative, got {liner_start}")
    liner_end = liner_start + liner_length
    if liner_end > length * (1 + 1e-12):
        raise ValueError(
            f"Liner [{liner_start}, {liner_end}] does not fit in a duct of length {length}"
        )
    if h > liner_length:
        raise ValueError(
            f"Mesh size h={h} exceeds the liner length {liner_length}; the liner would have no edges"
        )

    xs = _graded_axis([0.0, liner_start, min(liner_end, length), length], h)
    ys = _graded_axis([0.0, height], h)
    nx, ny = len(xs), len(ys)

    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def node_id(i, j):
        return j * nx + i

    I, J = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="xy")
    I, J = I.ravel(), J.ravel()
    a, b = node_id(I, J), node_id(I + 1, J)
    c, d = node_id(I + 1, J + 1), node_id(I, J + 1)
    elements = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])

    edges: List[Tuple[int, int]] = []
    tags: List[int] = []
    for i in range(nx - 1):
        edges.append((node_id(i, 0), node_id(i + 1, 0)))
        tags.append(SYMMETRY_TAG)
    for j in range(ny - 1):
        edges.append((node_id(nx - 1, j), node_id(nx - 1, j + 1)))
        tags.append(FAR_FIELD_TAG)
    tol = 1e-12 * max(length, 1.0)
    for i in range(nx - 1):
        mid = 0.5 * (xs[i] + xs[i + 1])
        on_liner = liner_start - tol <= mid <= liner_end + tol
        edges.append((node_id(i + 1, ny - 1), node_id(i, ny - 1)))
        tags.append(LINER_TAG if on_liner else NEAR_FIELD_TAG)
    for j in range(ny - 1):
        edges.append((node_id(0, j + 1), node_id(0, j)))
        tags.append(SOURCE_TAG)

    mesh = Mesh(
        nodes=nodes,
        elements=elements,
        boundary_edges=np.array(edges),
        boundary_tags=np.array(tags),
    )
    check_mesh(mesh)
    return mesh


def signed_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p0, p1, p2 = nodes[elements[:, 0]], nodes[elements[:, 1]], nodes[elements[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def mesh_area(mesh: Mesh) -> float:
    return float(np.sum(signed_areas(mesh.nodes, mesh.elements)))


def max_edge_length(mesh: Mesh) -> float:
    el = mesh.elements
    lengths = [
        np.linalg.norm(mesh.nodes[el[:, i]] - mesh.nodes[el[:, (i + 1) % 3]], axis=1)
        for i in range(3)
    ]
    return float(np.max(lengths))


def points_per_wavelength(mesh: Mesh, k: float) -> float:
    return (TWO_PI / k) / max_edge_length(mesh)


def _edge_key(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i < j else (j, i)


def check_mesh(mesh: Mesh) -> None:
    """
    Raise MeshInvariantError naming the failed check:
    node_indices, element_area, boundary_tags, boundary_duplicates,
    boundary_partition.
    """
    n = mesh.n_nodes
    if mesh.elements.size and (mesh.elements.min() < 0 or mesh.elements.max() >= n):
        raise MeshInvariantError("node_indices", "element references a missing node")
    if mesh.boundary_edges.size and (
        mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= n
    ):
        raise MeshInvariantError("node_indices", "boundary edge references a missing node")

    areas = signed_areas(mesh.nodes, mesh.elements)
    if np.any(areas <= 0):
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise MeshInvariantError(
            "element_area", f"element {bad} has non-positive signed area {areas[bad]:.3e}"
        )

    unknown = sorted(set(mesh.boundary_tags.tolist()) - set(BOUNDARY_TAGS))
    if unknown:
        raise MeshInvariantError("boundary_tags", f"unknown boundary tag {unknown[0]}")

    keys = [_edge_key(int(i), int(j)) for i, j in mesh.boundary_edges]
    counts = Counter(keys)
    duplicated = [key for key, count in counts.items() if count > 1]
    if duplicated:
        raise MeshInvariantError(
            "boundary_duplicates", f"boundary edge {duplicated[0]} is listed more than once"
        )

    element_edges = Counter(
        _edge_key(int(tri[a]), int(tri[b]))
        for tri in mesh.elements
        for a, b in ((0, 1), (1, 2), (2, 0))
    )
    boundary = {key for key, count in element_edges.items() if count == 1}
    tagged = set(keys)
    if tagged != boundary:
        missing = sorted(boundary - tagged)
        extra = sorted(tagged - boundary)
        detail = f"untagged boundary edge {missing[0]}" if missing else f"interior edge {extra[0]} is tagged"
        raise MeshInvariantError("boundary_partition", detail)


def _orient(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Reorder clockwise triangles to counter-clockwise."""
    elements = elements.copy()
    clockwise = signed_areas(nodes, elements) < 0
    elements[clockwise] = elements[clockwise][:, [0, 2, 1]]
    return elements


def save_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    lines = [MESH_HEADER, f"nodes {mesh.n_nodes}"]
    lines.extend(f"{x!r} {y!r}" for x, y in mesh.nodes.tolist())
    lines.append(f"elements {len(mesh.elements)}")
    lines.extend(" ".join(str(v) for v in tri) for tri in mesh.elements.tolist())
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines.extend(
        f"{i} {j} {tag}"
        for (i, j), tag in zip(mesh.boundary_edges.tolist(), mesh.boundary_tags.tolist())
    )
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: Union[str, Path]) -> Mesh:
    """Parse the ``ducfem 1`` text format and check every mesh invariant."""
    raw = Path(path).read_text().splitlines()
    rows = [(number, line.split()) for number, line in enumerate(raw, start=1) if line.strip()]
    cursor = 0

    def take(expected: str) -> int:
        nonlocal cursor
        if cursor >= len(rows):
            raise MeshFormatError(f"expected '{expected} <count>', found end of file", len(raw))
        number, fields = rows[cursor]
        if len(fields) != 2 or fields[0] != expected:
            raise MeshFormatError(f"expected '{expected} <count>'", number)
        try:
            count = int(fields[1])
        except ValueError:
            raise MeshFormatError(f"invalid {expected} count '{fields[1]}'", number)
        if count < 0:
            raise MeshFormatError(f"negative {expected} count", number)
        cursor += 1
        return count

    def block(count: int, width: int, parse, label: str) -> list:
        nonlocal cursor
        values = []
        for _ in range(count):
            if cursor >= len(rows):
                raise MeshFormatError(f"missing {label} lines", len(raw))
            number, fields = rows[cursor]
            if len(fields) != width:
                raise MeshFormatError(f"expected {width} values per {label} line", number)
            try:
                values.append([parse(v) for v in fields])
            except ValueError:
                raise MeshFormatError(f"cannot parse {label} line '{' '.join(fields)}'", number)
            cursor += 1
        return values

    if not rows or " ".join(rows[0][1]) != MESH_HEADER:
        raise MeshFormatError(f"missing header '{MESH_HEADER}'", rows[0][0] if rows else 1)
    cursor = 1

    nodes = block(take("nodes"), 2, float, "node")
    elements = block(take("elements"), 3, int, "element")
    boundary = block(take("boundary"), 3, int, "boundary")
    if cursor < len(rows):
        raise MeshFormatError("unexpected trailing content", rows[cursor][0])

    nodes_arr = np.array(nodes, dtype=float).reshape(-1, 2)
    elements_arr = np.array(elements, dtype=np.int64).reshape(-1, 3)
    boundary_arr = np.array(boundary, dtype=np.int64).reshape(-1, 3)

    if elements_arr.size and (elements_arr.min() < 0 or elements_arr.max() >= len(nodes_arr)):
        raise MeshInvariantError("node_indices", "element references a missing node")
    unknown = sorted(set(boundary_arr[:, 2].tolist()) - set(BOUNDARY_TAGS))
    if unknown:
        raise MeshInvariantError("boundary_tags", f"unknown boundary tag {unknown[0]}")

    mesh = Mesh(
        nodes=nodes_arr,
        elements=_orient(nodes_arr, elements_arr) if elements_arr.size else elements_arr,
        boundary_edges=boundary_arr[:, :2],
        boundary_tags=boundary_arr[:, 2],
    )
    check_mesh(mesh)
    return mesh
