import csv
import json
from pathlib import Path
from typing import Any, BinaryIO, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from liner_optimizer.constants import PMAT_MAGIC, PVEC_MAGIC, SCHEMA_VERSION
from liner_optimizer.core.pod import cumulative_energy
from liner_optimizer.models import IterationRecord, PodBasis, RomOperators, SnapshotSample

PathLike = Union[str, Path]

ROM_MATRIX_NAMES = ("Mr", "Sr", "K2r", "K2r_skew", "K4r_skew", "Ir", "Mr_energy")
ROM_VECTOR_NAMES = ("gr_red", "gi_red")

_HEADER = np.dtype("<u4")
_DATA = np.dtype("<f8")


# Binary containers


def _write_matrix_record(handle: BinaryIO, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    handle.write(PMAT_MAGIC)
    handle.write(np.array([rows, cols], dtype=_HEADER).tobytes())
    handle.write(np.asarray(matrix, dtype=_DATA).tobytes(order="F"))


def _read_matrix_record(handle: BinaryIO, path: PathLike) -> np.ndarray:
    magic = handle.read(4)
    if magic != PMAT_MAGIC:
        raise ValueError(f"{path}: expected PMAT record, found {magic!r}")
    rows, cols = np.frombuffer(handle.read(8), dtype=_HEADER)
    count = int(rows) * int(cols)
    payload = handle.read(count * _DATA.itemsize)
    if len(payload) != count * _DATA.itemsize:
        raise ValueError(f"{path}: truncated PMAT record ({rows}x{cols})")
    return np.frombuffer(payload, dtype=_DATA).reshape((int(rows), int(cols)), order="F").copy()


def save_matrix(matrix: np.ndarray, path: PathLike) -> None:
    with open(path, "wb") as handle:
        _write_matrix_record(handle, matrix)


def load_matrix(path: PathLike) -> np.ndarray:
    with open(path, "rb") as handle:
        return _read_matrix_record(handle, path)


def save_matrices(matrices: Sequence[np.ndarray], path: PathLike) -> None:
    with open(path, "wb") as handle:
        for matrix in matrices:
            _write_matrix_record(handle, matrix)


def load_matrices(path: PathLike, count: int) -> List[np.ndarray]:
    with open(path, "rb") as handle:
        return [_read_matrix_record(handle, path) for _ in range(count)]


def save_vector(p: np.ndarray, path: PathLike) -> None:
    """Block solution vector: magic, u32 n, u32 reserved, real block then imaginary block."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size % 2:
        raise ValueError(f"Block vectors have even length, got {p.size}")
    with open(path, "wb") as handle:
        handle.write(PVEC_MAGIC)
        handle.write(np.array([p.size // 2, 0], dtype=_HEADER).tobytes())
        handle.write(p.astype(_DATA).tobytes())


def load_vector(path: PathLike) -> np.ndarray:
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != PVEC_MAGIC:
            raise ValueError(f"{path}: expected PVEC file, found {magic!r}")
        n, _ = np.frombuffer(handle.read(8), dtype=_HEADER)
        payload = handle.read()
    if len(payload) != 2 * int(n) * _DATA.itemsize:
        raise ValueError(f"{path}: expected {2 * int(n)} values")
    return np.frombuffer(payload, dtype=_DATA).copy()


# Text and JSON


def write_json(data: Dict[str, Any], path: PathLike) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **data}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


def write_csv(path: PathLike, headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\r\n")
        writer.writerow(headers)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    return rows[0], rows[1:]


def save_samples(samples: Sequence[SnapshotSample], path: PathLike) -> None:
    """Sidecar listing the snapshot parameters, one `k mu_r mu_i xi_r xi_i` line per column."""
    lines = [
        " ".join(repr(float(v)) for v in (s.k, s.mu_r, s.mu_i, s.xi_r, s.xi_i))
        for s in samples
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_samples(path: PathLike) -> List[SnapshotSample]:
    samples = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ValueError(f"{path}: line {number}: expected 5 values, got {len(fields)}")
        k, mu_r, mu_i, xi_r, xi_i = (float(v) for v in fields)
        samples.append(SnapshotSample(k=k, mu_r=mu_r, mu_i=mu_i, xi_r=xi_r, xi_i=xi_i))
    return samples


# Domain artifacts


def save_basis(basis: PodBasis, directory: PathLike, extra: Dict[str, Any] = None) -> None:
    directory = Path(directory)
    save_matrix(basis.Z, directory / "pod_basis.pmat")
    save_matrix(basis.singular_values[:, None], directory / "pod_spectrum.pmat")
    write_json(
        {
            "mode": basis.mode,
            "N": basis.N,
            "tau": basis.tau,
            "rank": int(basis.singular_values.size),
            "basis_ref": basis.basis_ref,
            **(extra or {}),
        },
        directory / "pod_manifest.json",
    )


def load_basis(directory: PathLike) -> PodBasis:
    directory = Path(directory)
    manifest = read_json(directory / "pod_manifest.json")
    return PodBasis(
        Z=load_matrix(directory / "pod_basis.pmat"),
        singular_values=load_matrix(directory / "pod_spectrum.pmat")[:, 0],
        mode=manifest["mode"],
        tau=manifest.get("tau"),
    )


def write_spectrum_csv(singular_values: np.ndarray, path: PathLike) -> None:
    s = np.asarray(singular_values, dtype=float)
    retained = cumulative_energy(s)
    write_csv(
        path,
        ["index", "singular_value", "scaled", "eigenvalue", "retained_energy"],
        (
            [i + 1, float(s[i]), float(s[i] / s[0]), float(s[i] ** 2), float(retained[i])]
            for i in range(s.size)
        ),
    )


def save_rom_operators(rom_ops: RomOperators, path: PathLike) -> Path:
    """PMAT records in manifest order; the manifest sits next to it as <stem>.json."""
    path = Path(path)
    names = list(ROM_MATRIX_NAMES) + list(ROM_VECTOR_NAMES)
    records = [getattr(rom_ops, name) for name in ROM_MATRIX_NAMES]
    records += [getattr(rom_ops, name)[:, None] for name in ROM_VECTOR_NAMES]
    save_matrices(records, path)
    manifest = path.with_suffix(".json")
    write_json(
        {"names": names, "N": rom_ops.N, "mode": rom_ops.mode, "basis_ref": rom_ops.basis_ref},
        manifest,
    )
    return manifest


def load_rom_operators(path: PathLike) -> RomOperators:
    path = Path(path)
    manifest = read_json(path.with_suffix(".json"))
    names = manifest["names"]
    records = dict(zip(names, load_matrices(path, len(names))))
    values = {name: records[name] for name in ROM_MATRIX_NAMES}
    values.update({name: records[name][:, 0] for name in ROM_VECTOR_NAMES})
    return RomOperators(**values, mode=manifest["mode"], basis_ref=manifest["basis_ref"])


HISTORY_HEADERS = ["iter", "J", "grad_norm", "xi_r", "xi_i", "alpha", "step_len"]


def write_history_csv(history: Sequence[IterationRecord], path: PathLike) -> None:
    write_csv(
        path,
        HISTORY_HEADERS,
        (
            [r.iter, r.J, r.grad_norm, r.xi_r, r.xi_i, "" if r.alpha is None else r.alpha, r.step_len]
            for r in history
        ),
    )
