"""File formats: binary field snapshots, CSV series, JSONL reports.

Floats in text formats are written with repr (shortest round-trip form), so
identical runs produce byte-identical files.

Field snapshot layout: little-endian header of two uint32 (dim,
modes_per_dim) followed by the coefficients as float64, mode-major and
component-minor, in the canonical mode ordering (sorted by eigenvalue, then
lexicographically by multi-index).
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .noise import Control, JumpPath, LevyMeasure
from .solver import Trajectory
from .spectral import Field, SpectralGrid

_HEADER = struct.Struct("<II")


def write_field_binary(field: Field, path) -> None:
    data = _HEADER.pack(field.grid.dim, field.grid.modes_per_dim)
    coeffs = np.ascontiguousarray(field.coeffs, dtype="<f8")
    Path(path).write_bytes(data + coeffs.tobytes())


def read_field_binary(path, grid: SpectralGrid) -> Field:
    raw = Path(path).read_bytes()
    dim, modes = _HEADER.unpack_from(raw)
    if (dim, modes) != (grid.dim, grid.modes_per_dim):
        raise ValueError(
            f"snapshot was written for dim={dim}, modes_per_dim={modes}; "
            f"target grid has dim={grid.dim}, modes_per_dim={grid.modes_per_dim}")
    coeffs = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    return Field(grid, coeffs.reshape(grid.n_modes, 3).astype(np.float64))


def write_field_csv(field: Field, path) -> None:
    g = field.grid
    kcols = ",".join(f"k{d + 1}" for d in range(g.dim))
    lines = [f"mode_index,{kcols},c1,c2,c3"]
    for i, (k, c) in enumerate(zip(g.eigen_index, field.coeffs)):
        kvals = ",".join(str(int(x)) for x in k)
        lines.append(f"{i},{kvals},{c[0]!r},{c[1]!r},{c[2]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_trajectory_csv(traj: Trajectory, path) -> None:
    lines = ["t,l2,h1,h2,l4,linf"]
    for i in range(traj.times.size):
        lines.append(",".join(repr(float(x)) for x in (
            traj.times[i], traj.l2[i], traj.h1[i], traj.h2[i], traj.l4[i],
            traj.linf[i])))
    Path(path).write_text("\n".join(lines) + "\n")


def write_jump_log_csv(traj: Trajectory, path) -> None:
    lines = ["t,l,pre_l2,post_l2"]
    for ev in traj.jump_events:
        lines.append(",".join(repr(float(x)) for x in (
            ev.time, ev.mark, ev.pre_l2, ev.post_l2)))
    Path(path).write_text("\n".join(lines) + "\n")


def write_jump_path_csv(path_obj: JumpPath, path) -> None:
    lines = ["t,l"]
    for t, l in zip(path_obj.times, path_obj.marks):
        lines.append(f"{float(t)!r},{float(l)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_jump_path_csv(path, horizon: float) -> JumpPath:
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != "t,l":
        raise ValueError("jump path CSV must start with header 't,l'")
    times, marks = [], []
    for line in lines[1:]:
        t, l = line.split(",")
        times.append(float(t))
        marks.append(float(l))
    return JumpPath(horizon, np.array(times), np.array(marks))


def write_control_csv(theta: Control, nu: LevyMeasure, path) -> None:
    lines = ["time_cell_start,atom_l,theta"]
    for m in range(theta.n_cells):
        for j in range(theta.n_atoms):
            lines.append(f"{float(theta.t_edges[m])!r},"
                         f"{float(nu.marks[j])!r},"
                         f"{float(theta.values[m, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_control_csv(path, nu: LevyMeasure, horizon: float) -> Control:
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != "time_cell_start,atom_l,theta":
        raise ValueError("control CSV header mismatch")
    starts, cells = [], {}
    for line in lines[1:]:
        t0, l, v = (float(x) for x in line.split(","))
        if t0 not in cells:
            starts.append(t0)
            cells[t0] = {}
        cells[t0][l] = v
    starts.sort()
    edges = np.array(starts + [horizon])
    values = np.empty((len(starts), nu.n_atoms))
    for m, t0 in enumerate(starts):
        for j, mark in enumerate(nu.marks):
            try:
                values[m, j] = cells[t0][float(mark)]
            except KeyError:
                raise ValueError(
                    f"control CSV misses atom l={mark} in cell starting {t0}")
    return Control(edges, values)


def write_energy_csv(energy, path) -> None:
    lines = ["t,int_grad_sq,int_l4_4,int_l2_sq,int_lap_sq"]
    for i in range(energy.times.size):
        lines.append(",".join(repr(float(x)) for x in (
            energy.times[i], energy.int_grad_sq[i], energy.int_l4_4[i],
            energy.int_l2_sq[i], energy.int_lap_sq[i])))
    Path(path).write_text("\n".join(lines) + "\n")


def write_jsonl(report, path) -> None:
    Path(path).write_text(report.to_jsonl())


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir, *, config_text: str, master_seed: int,
                   command: str, outputs, wall_clock: float,
                   backend: str, version: str) -> Path:
    """Inventory of a run: config hash, seed, output digests, timing."""
    entries = []
    for name in sorted(outputs):
        p = Path(out_dir) / name
        entries.append({"path": name, "sha256": sha256_file(p),
                        "bytes": p.stat().st_size})
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "master_seed": master_seed,
        "version": version,
        "kernel_backend": backend,
        "outputs": entries,
        "wall_clock_s": wall_clock,
    }
    path = Path(out_dir) / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
