"""Minimal binary PLY and ASCII OBJ mesh I/O (little-endian, float32/int32)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_ply(path, vertices: np.ndarray, faces: np.ndarray, vertex_labels: np.ndarray | None = None):
    """Write a binary little-endian PLY. `vertex_labels` adds a uchar `region` property."""
    path = Path(path)
    vertices = np.asarray(vertices, dtype=np.float32)
    faces = np.asarray(faces, dtype=np.int32)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(vertices)}"]
    header += ["property float x", "property float y", "property float z"]
    if vertex_labels is not None:
        header.append("property uchar region")
    header += [f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if vertex_labels is None:
            f.write(vertices.astype("<f4").tobytes())
        else:
            labels = np.asarray(vertex_labels, dtype=np.uint8)
            rec = np.zeros(len(vertices), dtype=[("xyz", "<f4", 3), ("region", "u1")])
            rec["xyz"] = vertices
            rec["region"] = labels
            f.write(rec.tobytes())
        rec = np.zeros(len(faces), dtype=[("n", "u1"), ("idx", "<i4", 3)])
        rec["n"] = 3
        rec["idx"] = faces
        f.write(rec.tobytes())


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a PLY written by `write_ply` (binary little-endian, tri faces)."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    n_vert = n_face = 0
    vertex_props = []
    current = None
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                n_vert = int(parts[2])
            elif current == "face":
                n_face = int(parts[2])
        elif parts[0] == "property" and current == "vertex" and parts[1] != "list":
            vertex_props.append((parts[2], parts[1]))
    type_map = {"float": "<f4", "uchar": "u1", "int": "<i4", "double": "<f8"}
    dtype = np.dtype([(name, type_map[t]) for name, t in vertex_props])
    body = data[end:]
    verts_rec = np.frombuffer(body, dtype=dtype, count=n_vert)
    vertices = np.stack([verts_rec["x"], verts_rec["y"], verts_rec["z"]], axis=-1).astype(np.float64)
    offset = n_vert * dtype.itemsize
    face_dtype = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
    faces_rec = np.frombuffer(body, dtype=face_dtype, count=n_face, offset=offset)
    if n_face and not np.all(faces_rec["n"] == 3):
        raise ValueError(f"{path}: only triangle faces are supported")
    return vertices, faces_rec["idx"].astype(np.int64)


def write_obj(path, vertices: np.ndarray, faces: np.ndarray):
    with open(path, "w") as f:
        for v in np.asarray(vertices):
            f.write(f"v {v[0]:.7g} {v[1]:.7g} {v[2]:.7g}\n")
        for tri in np.asarray(faces):
            f.write(f"f {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}\n")


def sample_surface(vertices: np.ndarray, faces: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-by-area point samples on a triangle mesh."""
    v = np.asarray(vertices, dtype=np.float64)
    tri = v[np.asarray(faces)]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=-1)
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has no area to sample")
    idx = rng.choice(len(tri), size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    a, b, c = tri[idx, 0], tri[idx, 1], tri[idx, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


def raycast_depth(vertices: np.ndarray, faces: np.ndarray, origins: np.ndarray,
                  dirs: np.ndarray, face_chunk: int = 4096) -> np.ndarray:
    """First-hit distances of rays against a triangle mesh (inf on miss).

    Moller-Trumbore, vectorized over rays per face chunk.
    """
    tri = np.asarray(vertices, dtype=np.float64)[np.asarray(faces)]
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    best = np.full(len(origins), np.inf)
    for start in range(0, len(tri), face_chunk):
        chunk = tri[start : start + face_chunk]
        v0 = chunk[:, 0]
        e1 = chunk[:, 1] - v0
        e2 = chunk[:, 2] - v0
        p = np.cross(dirs[:, None, :], e2[None, :, :])  # (R, F, 3)
        det = np.einsum("fj,rfj->rf", e1, p)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        s = origins[:, None, :] - v0[None, :, :]
        u = np.einsum("rfj,rfj->rf", s, p) * inv
        q = np.cross(s, e1[None, :, :])
        v = np.einsum("rj,rfj->rf", dirs, q) * inv
        t = np.einsum("fj,rfj->rf", e2, q) * inv
        hit = ok & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9) & (t > 1e-6)
        t = np.where(hit, t, np.inf)
        best = np.minimum(best, t.min(axis=1))
    return best
